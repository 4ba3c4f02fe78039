#pragma once

#include <vector>

#include "unicornn/common.hpp"

namespace unicornn {

// Uniform-length sequence collection. Regression tasks carry one target
// matrix per sequence (out_dim x N, aligned with per-step readout);
// classification tasks carry one label per sequence.
struct SequenceDataset {
  std::vector<Mat> inputs;   // each d x N
  std::vector<Mat> targets;  // regression: each out_dim x N; else empty
  std::vector<int> labels;   // classification: one per sequence; else empty

  bool classification() const { return !labels.empty(); }
  Index size() const { return static_cast<Index>(inputs.size()); }
  Index d() const { return inputs.empty() ? 0 : inputs.front().rows(); }
  Index steps() const { return inputs.empty() ? 0 : inputs.front().cols(); }

  void validate() const {
    require(!inputs.empty(), "SequenceDataset: empty");
    require(targets.empty() != labels.empty(),
            "SequenceDataset: exactly one of targets/labels must be set");
    const Index n = steps();
    const Index dim = d();
    for (const Mat& x : inputs)
      require(x.rows() == dim && x.cols() == n,
              "SequenceDataset: ragged input shapes");
    if (!targets.empty()) {
      require(targets.size() == inputs.size(),
              "SequenceDataset: target count mismatch");
      for (const Mat& t : targets)
        require(t.cols() == n, "SequenceDataset: target length mismatch");
    } else {
      require(labels.size() == inputs.size(),
              "SequenceDataset: label count mismatch");
    }
  }
};

}  // namespace unicornn
