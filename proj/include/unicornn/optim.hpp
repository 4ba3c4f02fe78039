#pragma once

#include <vector>

#include "unicornn/common.hpp"

namespace unicornn {

// Adam with bias correction over a fixed tensor-ref walk. Moment buffers are
// laid out flat, one span per tensor, mirroring the parameter shapes.
struct OptimState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Arr> m_buf;
  std::vector<Arr> v_buf;

  static OptimState make(const std::vector<TensorRef>& params, double lr);
};

// In-place Adam update. Throws std::runtime_error naming the tensor when a
// gradient is non-finite, leaving parameters untouched.
void adam_step(const std::vector<TensorRef>& params,
               const std::vector<TensorRef>& grads, OptimState& opt);

// Plain SGD, same non-finite contract.
void sgd_step(const std::vector<TensorRef>& params,
              const std::vector<TensorRef>& grads, double lr);

// Global-norm gradient clip; no-op when max_norm <= 0. Returns the pre-clip
// norm.
double clip_gradients(const std::vector<TensorRef>& grads, double max_norm);

}  // namespace unicornn
