#include "unicornn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace unicornn {

OptimState OptimState::make(const std::vector<TensorRef>& params, double lr) {
  require(lr > 0.0, "OptimState: lr must be positive");
  OptimState opt;
  opt.lr = lr;
  opt.m_buf.reserve(params.size());
  opt.v_buf.reserve(params.size());
  for (const TensorRef& p : params) {
    opt.m_buf.push_back(Arr::Zero(p.size));
    opt.v_buf.push_back(Arr::Zero(p.size));
  }
  return opt;
}

namespace {

void check_walk(const std::vector<TensorRef>& params,
                const std::vector<TensorRef>& grads) {
  require(params.size() == grads.size(),
          "optimizer: param/grad walk lengths differ");
  for (size_t t = 0; t < params.size(); ++t)
    require(params[t].size == grads[t].size,
            "optimizer: shape mismatch on " + params[t].name);
}

void check_finite(const std::vector<TensorRef>& grads) {
  for (const TensorRef& g : grads)
    for (Index i = 0; i < g.size; ++i)
      if (!std::isfinite(g.data[i]))
        throw std::runtime_error("optimizer: non-finite gradient in " + g.name +
                                 " at index " + std::to_string(i));
}

}  // namespace

void adam_step(const std::vector<TensorRef>& params,
               const std::vector<TensorRef>& grads, OptimState& opt) {
  check_walk(params, grads);
  require(opt.m_buf.size() == params.size(),
          "adam_step: optimizer state does not match walk");
  check_finite(grads);
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (size_t t = 0; t < params.size(); ++t) {
    Eigen::Map<Arr> p(params[t].data, params[t].size);
    Eigen::Map<const Arr> g(grads[t].data, grads[t].size);
    Arr& m = opt.m_buf[t];
    Arr& v = opt.v_buf[t];
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.square();
    const Arr m_hat = m / bc1;
    const Arr v_hat = v / bc2;
    p -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
  }
}

void sgd_step(const std::vector<TensorRef>& params,
              const std::vector<TensorRef>& grads, double lr) {
  check_walk(params, grads);
  check_finite(grads);
  for (size_t t = 0; t < params.size(); ++t) {
    Eigen::Map<Arr> p(params[t].data, params[t].size);
    Eigen::Map<const Arr> g(grads[t].data, grads[t].size);
    p -= lr * g;
  }
}

double clip_gradients(const std::vector<TensorRef>& grads, double max_norm) {
  double sq = 0.0;
  for (const TensorRef& g : grads)
    sq += Eigen::Map<const Arr>(g.data, g.size).square().sum();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const TensorRef& g : grads)
      Eigen::Map<Arr>(g.data, g.size) *= scale;
  }
  return norm;
}

}  // namespace unicornn
