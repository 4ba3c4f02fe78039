#pragma once

#include <cstdint>
#include <vector>

#include "unicornn/dataset.hpp"
#include "unicornn/model.hpp"

namespace unicornn {

// Batched execution over B equal-length sequences. Everything is laid out as
// m x (N*B) with column n*B + b holding step n+1 of sequence b, so the input
// transform of a whole batch is a single matrix product and the per-step
// recurrence runs on contiguous m x B blocks.
struct Batch {
  Mat inputs;               // d x (N*B)
  Mat targets;              // out_dim x (N*B) for regression, else 0 x 0
  std::vector<int> labels;  // B entries for classification, else empty
  Index B = 0;
  Index N = 0;

  bool classification() const { return !labels.empty(); }
};

Batch make_batch(const SequenceDataset& data, const std::vector<Index>& idx);

// Per-sequence dropout masks for one batch: masks[q] is m x B, column b
// scaling layer q+1's outputs for sequence b at every time step.
struct BatchMasks {
  std::vector<Mat> masks;
};

BatchMasks make_batch_masks(const ModelConfig& config, Index B,
                            std::uint64_t seed);

struct BatchGrads {
  double loss_sum = 0.0;  // summed over the batch
  ModelGrads model;       // summed over the batch
  Mat g_W;
  Vec g_b;
};

// Training pass: loss and parameter gradients summed over the batch. With
// store = false, per-layer peak state memory is O(m*B) via reverse-time
// reconstruction; store = true keeps full trajectories.
BatchGrads engine_loss_grads(const Model& model, const Batch& batch,
                             const BatchMasks* masks, bool store);

struct EvalStats {
  double loss_sum = 0.0;   // summed per-sequence losses
  double correct = 0.0;    // classification: # correct predictions
  double sq_err_sum = 0.0; // regression: sum of squared errors (all entries)
  double sq_tgt_sum = 0.0; // regression: sum of squared targets
  Index count = 0;         // sequences seen

  void accumulate(const EvalStats& other);
};

// Inference pass (no dropout, no gradients, O(m*B) state).
EvalStats engine_eval(const Model& model, const Batch& batch);

}  // namespace unicornn
