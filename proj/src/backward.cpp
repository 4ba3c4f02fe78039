#include "unicornn/backward.hpp"

#include <cmath>

#include "unicornn/activations.hpp"
#include "unicornn/layer.hpp"

namespace unicornn {
namespace detail {

// Adjoint recursion for one layer, derived by differentiating the two update
// lines of the forward step. With D = dt*sigma_hat(c), S_n = tanh(A_{n-1}) +
// alpha*y_{n-1} and k_n = w*tanh'(A_{n-1}) + alpha, the step Jacobian gives
//
//   dE/dz_{n-1} = dE/dz_n + D .* dE/dy_n            (gz_total)
//   dE/dy_{n-1} = dE/dy_n - gz_total .* D .* k_n
//   dE/dA_{n-1} = -gz_total .* D .* tanh'(A_{n-1})  (psi, the drive adjoint)
//   dE/dD      += dE/dy_n .* z_n - gz_total .* S_n
//
// and g_c chains dE/dD through both update lines via dD/dc = dt*sigma_hat'(c).
CoreGrads backward_sweep(const LayerParams& params, double dt, double alpha,
                         const Mat& drive, const Mat& upstream,
                         const Trajectory* traj, const LayerState* final_state) {
  const Index m = params.m();
  const Index N = drive.cols();
  require((traj == nullptr) != (final_state == nullptr),
          "backward_sweep: exactly one state source required");
  require(upstream.rows() == m && upstream.cols() == N,
          "backward sweep: upstream shape does not match layer/steps");
  if (traj)
    require(traj->steps() == N && traj->y.rows() == m,
            "backward sweep: trajectory does not match layer/steps");

  const Arr D = effective_step(params.c, dt);

  CoreGrads g;
  g.g_w = Arr::Zero(m);
  g.g_b = Arr::Zero(m);
  g.g_c = Arr::Zero(m);
  g.g_psi.resize(m, N);
  Arr g_D = Arr::Zero(m);

  StateAlloc live_adjoint(2 * m);
  AdjointState adj{Arr::Zero(m), Arr::Zero(m), 0};

  // Reconstruction walks (y, z) down from the final state with the exact
  // inverse; stored mode reads the same quantities from trajectory columns.
  StateAlloc live_state(final_state ? 2 * m : 0);
  Arr y;
  Arr z;
  if (final_state) {
    y = final_state->y;
    z = final_state->z;
  }

  for (Index n = N; n >= 1; --n) {
    Arr y_prev;
    Arr z_n;
    if (traj) {
      y_prev = traj->y.col(n - 1).array();
      z_n = traj->z.col(n).array();
    } else {
      z_n = z;
      y_prev = y - D * z;
      if (!(y_prev.abs().maxCoeff() <= 1e6))
        throw DivergenceError(
            "backward: reconstructed state exceeded 1e6 at step " +
            std::to_string(n));
    }

    const Arr A = params.w * y_prev + drive.col(n - 1).array() + params.b;
    const Arr th = A.tanh();
    const Arr sp = 1.0 - th.square();

    adj.delta_y += upstream.col(n - 1).array();
    const Arr gz_total = adj.delta_z + adj.delta_y * D;
    const Arr psi = -gz_total * D * sp;

    g_D += adj.delta_y * z_n - gz_total * (th + alpha * y_prev);
    g.g_w += psi * y_prev;
    g.g_b += psi;
    g.g_psi.col(n - 1) = psi.matrix();

    adj.delta_y -= gz_total * D * (params.w * sp + alpha);
    adj.delta_z = gz_total;
    ++adj.k;

    if (final_state) {
      z = z_n + D * (th + alpha * y_prev);
      y = std::move(y_prev);
    }
  }

  g.g_c = g_D * dt * dsigma_hat(params.c);
  return g;
}

}  // namespace detail

namespace {

LayerGrads assemble(const LayerParams& params, const Mat& inputs,
                    detail::CoreGrads&& core) {
  LayerGrads g;
  g.g_w = std::move(core.g_w);
  g.g_b = std::move(core.g_b);
  g.g_c = std::move(core.g_c);
  g.g_V = core.g_psi * inputs.transpose();
  if (params.lambda)  // no skip stream at the single-layer interface
    g.g_lambda = Mat::Zero(params.m(), params.m());
  g.g_x = params.V.transpose() * core.g_psi;
  return g;
}

}  // namespace

LayerGrads layer_backward_stored(const Trajectory& traj, const Mat& upstream,
                                 const LayerParams& params, double dt,
                                 double alpha) {
  params.validate();
  require(upstream.cols() == traj.steps(),
          "layer_backward_stored: upstream length does not match trajectory");
  const Mat drive = params.V * traj.inputs;
  auto core =
      detail::backward_sweep(params, dt, alpha, drive, upstream, &traj, nullptr);
  return assemble(params, traj.inputs, std::move(core));
}

LayerGrads layer_backward_reconstructing(const LayerState& final_state,
                                         const Mat& inputs, const Mat& upstream,
                                         const LayerParams& params, double dt,
                                         double alpha) {
  params.validate();
  require(upstream.cols() == inputs.cols(),
          "layer_backward_reconstructing: upstream length does not match inputs");
  const Mat drive = params.V * inputs;  // retained instead of hidden states
  auto core = detail::backward_sweep(params, dt, alpha, drive, upstream,
                                     nullptr, &final_state);
  return assemble(params, inputs, std::move(core));
}

}  // namespace unicornn
