#include "unicornn/layer.hpp"

#include <cmath>

#include "unicornn/activations.hpp"

namespace unicornn {

void LayerParams::validate() const {
  require(w.size() >= 1, "LayerParams: empty w");
  require(V.rows() == w.size(), "LayerParams: V row count does not match m");
  require(b.size() == w.size(), "LayerParams: b size does not match m");
  require(c.size() == w.size(), "LayerParams: c size does not match m");
  if (lambda) {
    require(lambda->rows() == w.size() && lambda->cols() == w.size(),
            "LayerParams: lambda must be m x m");
  }
  require(w.isFinite().all() && b.isFinite().all() && c.isFinite().all() &&
              V.array().isFinite().all() &&
              (!lambda || lambda->array().isFinite().all()),
          "LayerParams: non-finite entries");
}

void ModelConfig::validate() const {
  require(L >= 1, "ModelConfig: L must be >= 1");
  require(m >= 1, "ModelConfig: m must be >= 1");
  require(d >= 1, "ModelConfig: d must be >= 1");
  require(out_dim >= 1, "ModelConfig: out_dim must be >= 1");
  require(static_cast<int>(dt.size()) == L,
          "ModelConfig: dt must have one entry per layer");
  for (double v : dt)
    require(v > 0.0 && v < 1.0, "ModelConfig: every dt must lie in (0,1)");
  require(alpha >= 0.0, "ModelConfig: alpha must be non-negative");
  if (skip != 0)
    require(skip >= 2 && skip < L, "ModelConfig: skip S requires 2 <= S < L");
  require(dropout >= 0.0 && dropout < 1.0, "ModelConfig: dropout must be in [0,1)");
}

namespace detail {

Arr effective_step(const Arr& c, double dt) { return dt * sigma_hat(c); }

}  // namespace detail

namespace {

void check_step_args(const LayerState& s, const LayerParams& p, const Vec& x,
                     double dt) {
  const Index m = p.w.size();
  require(s.y.size() == m && s.z.size() == m,
          "layer step: state size does not match params");
  require(x.size() == p.V.cols(), "layer step: input size does not match V");
  require(dt > 0.0 && dt < 1.0, "layer step: dt must lie in (0,1)");
}

}  // namespace

LayerState forward_step(const LayerState& prev, const LayerParams& params,
                        const Vec& x, double dt, double alpha) {
  check_step_args(prev, params, x, dt);
  const Arr D = detail::effective_step(params.c, dt);
  const Arr drive = (params.V * x).array();
  LayerState next;
  const Arr A = params.w * prev.y + drive + params.b;
  next.z = prev.z - D * (A.tanh() + alpha * prev.y);
  next.y = prev.y + D * next.z;
  return next;
}

LayerState inverse_step(const LayerState& next, const LayerParams& params,
                        const Vec& x, double dt, double alpha) {
  check_step_args(next, params, x, dt);
  const Arr D = detail::effective_step(params.c, dt);
  const Arr drive = (params.V * x).array();
  LayerState prev;
  prev.y = next.y - D * next.z;
  const Arr A = params.w * prev.y + drive + params.b;
  prev.z = next.z + D * (A.tanh() + alpha * prev.y);
  return prev;
}

double hamiltonian(const LayerState& state, const LayerParams& params,
                   const Vec& x, double alpha) {
  check_step_args(state, params, x, 0.5);
  const Arr drive = (params.V * x).array();
  double h = 0.5 * alpha * state.y.square().sum() + 0.5 * state.z.square().sum();
  for (Index i = 0; i < params.w.size(); ++i) {
    if (params.w[i] == 0.0)
      throw std::domain_error("hamiltonian: w[" + std::to_string(i) +
                              "] is zero; potential term undefined");
    h += log_cosh(params.w[i] * state.y[i] + drive[i] + params.b[i]) / params.w[i];
  }
  return h;
}

namespace detail {

LayerForward forward_with_drive(const LayerState& initial, const Mat& drive,
                                const LayerParams& params, double dt,
                                double alpha, bool store) {
  const Index m = params.m();
  const Index N = drive.cols();
  const Arr D = effective_step(params.c, dt);

  LayerForward out;
  out.outputs.resize(m, N);
  if (store) {
    Trajectory traj;
    traj.y.resize(m, N + 1);
    traj.z.resize(m, N + 1);
    traj.metered = StateAlloc(2 * m * (N + 1));
    traj.y.col(0) = initial.y.matrix();
    traj.z.col(0) = initial.z.matrix();
    out.trajectory = std::move(traj);
  }

  StateAlloc live(2 * m);
  Arr y = initial.y;
  Arr z = initial.z;
  for (Index n = 1; n <= N; ++n) {
    const Arr A = params.w * y + drive.col(n - 1).array() + params.b;
    z -= D * (A.tanh() + alpha * y);
    y += D * z;
    out.outputs.col(n - 1) = y.matrix();
    if (store) {
      out.trajectory->y.col(n) = y.matrix();
      out.trajectory->z.col(n) = z.matrix();
    }
  }
  out.final_state = {std::move(y), std::move(z)};
  return out;
}

}  // namespace detail

LayerForward layer_forward(const LayerState& initial, const Mat& inputs,
                           const LayerParams& params, double dt, double alpha,
                           bool store) {
  params.validate();
  const Index m = params.m();
  const Index N = inputs.cols();
  require(N >= 1, "layer_forward: empty input sequence");
  require(inputs.rows() == params.d_in(),
          "layer_forward: input rows do not match V");
  require(initial.y.size() == m && initial.z.size() == m,
          "layer_forward: initial state size does not match params");
  require(dt > 0.0 && dt < 1.0, "layer_forward: dt must lie in (0,1)");

  const Mat drive = params.V * inputs;  // fused input transform, one product
  LayerForward out = detail::forward_with_drive(initial, drive, params, dt, alpha, store);
  if (store) out.trajectory->inputs = inputs;
  return out;
}

}  // namespace unicornn
