#pragma once

#include <optional>

#include "unicornn/types.hpp"

namespace unicornn {

// One step of the symplectic-Euler discretization. Order is normative and is
// what makes the map exactly invertible: z is updated first from the old y,
// then y is updated with the NEW z.
//
//   z_n = z_{n-1} - dt*sigma_hat(c) .* [tanh(w.*y_{n-1} + V*x + b) + alpha*y_{n-1}]
//   y_n = y_{n-1} + dt*sigma_hat(c) .* z_n
LayerState forward_step(const LayerState& prev, const LayerParams& params,
                        const Vec& x, double dt, double alpha);

// Exact algebraic inverse of forward_step; here y must be restored first:
//   y_{n-1} = y_n - dt*sigma_hat(c) .* z_n
//   z_{n-1} = z_n + dt*sigma_hat(c) .* [tanh(w.*y_{n-1} + V*x + b) + alpha*y_{n-1}]
LayerState inverse_step(const LayerState& next, const LayerParams& params,
                        const Vec& x, double dt, double alpha);

// Conserved-quantity diagnostic: H = alpha/2*|y|^2 + 1/2*|z|^2
// + sum_i (1/w_i) log cosh(w_i y_i + (V x)_i + b_i). Hard error on any
// w_i == 0 (the continuous-time derivation divides by w_i).
double hamiltonian(const LayerState& state, const LayerParams& params,
                   const Vec& x, double alpha);

struct LayerForward {
  LayerState final_state;
  Mat outputs;                          // m x N, column n-1 holds y_n
  std::optional<Trajectory> trajectory; // only when store was requested
};

// Runs the layer over a whole input sequence (d_in x N). The input transform
// V*inputs is computed as one matrix product up front; the per-neuron scalar
// recurrence then runs sequentially over time. With store=false only the
// output sequence and the final state are retained.
LayerForward layer_forward(const LayerState& initial, const Mat& inputs,
                           const LayerParams& params, double dt, double alpha,
                           bool store);

namespace detail {

// dt * sigma_hat(c): the effective per-neuron step, strictly inside (0, dt)
Arr effective_step(const Arr& c, double dt);

// Forward sweep over an already-assembled drive sequence (m x N holding
// everything added to w.*y + b inside tanh, i.e. V*x and any skip term).
// Residual layers are driven through this entry point. The stored trajectory,
// when requested, leaves `inputs` empty for the caller to fill.
LayerForward forward_with_drive(const LayerState& initial, const Mat& drive,
                                const LayerParams& params, double dt,
                                double alpha, bool store);

}  // namespace detail

}  // namespace unicornn
