#pragma once

#include <optional>

#include "unicornn/types.hpp"

namespace unicornn {

// Adjoint accumulators carried by the backward sweep. delta_y/delta_z hold
// dE/dy_n and dE/dz_n for the step the sweep currently sits on; k counts
// backward steps taken. Initialized to delta_y = upstream at the final step,
// delta_z = 0.
struct AdjointState {
  Arr delta_y;
  Arr delta_z;
  Index k = 0;
};

struct LayerGrads {
  Arr g_w;
  Arr g_b;
  Arr g_c;
  Mat g_V;
  std::optional<Mat> g_lambda;
  Mat g_x;  // d_in x N, gradient w.r.t. the layer's input sequence
};

// Backward sweep over a stored trajectory. upstream is m x N with column n-1
// holding dE/dy_n (zero where the loss does not touch step n).
LayerGrads layer_backward_stored(const Trajectory& traj, const Mat& upstream,
                                 const LayerParams& params, double dt,
                                 double alpha);

// Same contract, but the only state kept is (y_N, z_N): previous states are
// reconstructed one step at a time with the exact inverse map during the
// sweep. Peak hidden-state storage is O(m), independent of N. Aborts with a
// numerical-stability error if a reconstructed state exceeds 1e6 in magnitude.
LayerGrads layer_backward_reconstructing(const LayerState& final_state,
                                         const Mat& inputs, const Mat& upstream,
                                         const LayerParams& params, double dt,
                                         double alpha);

namespace detail {

// Gradients of the scalar drive path: g_psi column n-1 is the pre-activation
// adjoint dE/dA_{n-1} of step n, from which every input-side gradient follows
// (g_V = g_psi * x^T, g_x = V^T * g_psi, and likewise for skip inputs).
struct CoreGrads {
  Arr g_w;
  Arr g_b;
  Arr g_c;
  Mat g_psi;
};

// One layer's adjoint recursion, shared by the stored and reconstructing
// entry points. drive is the precomputed m x N input transform (everything
// added to w.*y + b inside tanh). Exactly one of traj / final_state selects
// the state source: stored columns or stepwise inverse reconstruction.
CoreGrads backward_sweep(const LayerParams& params, double dt, double alpha,
                         const Mat& drive, const Mat& upstream,
                         const Trajectory* traj, const LayerState* final_state);

}  // namespace detail

}  // namespace unicornn
