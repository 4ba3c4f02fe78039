#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unicornn/common.hpp"
#include "unicornn/storage_meter.hpp"

namespace unicornn {

// Parameters of one oscillator layer. w gates the layer's own output inside
// the pre-activation, V transforms the layer input, c modulates the time step
// (pre-sigmoid), lambda carries the optional skip-connection weights.
struct LayerParams {
  Arr w;
  Mat V;
  Arr b;
  Arr c;
  std::optional<Mat> lambda;

  Index m() const { return w.size(); }
  Index d_in() const { return V.cols(); }
  void validate() const;
};

// Position/velocity pair of one layer.
struct LayerState {
  Arr y;
  Arr z;
};

inline LayerState zero_state(Index m) {
  return {Arr::Zero(m), Arr::Zero(m)};
}

enum class ReadoutMode { per_step, final_step };

struct ModelConfig {
  int L = 1;
  int m = 1;
  int d = 1;
  int out_dim = 1;
  std::vector<double> dt;   // one per layer, each in (0,1)
  double alpha = 0.0;
  int skip = 0;             // 0 = fully connected; else S with 2 <= S < L
  double dropout = 0.0;
  ReadoutMode readout = ReadoutMode::per_step;

  // input dimension seen by layer ell (1-based)
  Index layer_in_dim(int ell) const { return ell == 1 ? d : m; }
  // true when layer ell (1-based) carries a skip connection reading layer ell-S
  bool has_skip(int ell) const { return skip > 0 && ell > skip; }
  void validate() const;
};

// Full stored forward pass of one layer. States live in m x (N+1) matrices
// with the initial state in column 0; inputs[col n-1] drives the step that
// produces states[col n]. The y/z buffers are registered with the state meter.
struct Trajectory {
  Mat y;
  Mat z;
  Mat inputs;
  StateAlloc metered;

  Index steps() const { return inputs.cols(); }
  LayerState state(Index n) const { return {y.col(n).array(), z.col(n).array()}; }
};

}  // namespace unicornn
