#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unicornn/model.hpp"

namespace unicornn {

// ---------------------------------------------------------------------------
// Closed-form gradient bound
// ---------------------------------------------------------------------------

// Constants and verdict of the a-priori bound on max_theta |dE/dtheta| for a
// fully connected stack trained with the per-step mean half-squared error read
// directly off the top layer (identity readout). The bound is loose by design;
// what is certified is satisfaction, not tightness.
struct BoundReport {
  double gamma = 0;    // growth constant of one adjoint step
  double beta = 0;     // energy growth rate, max{1 + 2*alpha, 4*alpha^2}
  double vbar = 0;     // prod_q max(1, ||V_q||_inf)
  double fstate = 0;   // hidden-state bound sqrt((2/alpha)(1 + 2*beta*T))
  double delta = 0;    // loss-sensitivity factor
  double ybar = 0;     // sup norm of the regression targets
  double horizon = 0;  // T = N*dt
  double bound = 0;
  double observed_max_grad = 0;  // 0 when no gradients were measured
  bool satisfied = true;
};

// Constants-only flavor: computes the bound for a horizon of N steps against
// targets bounded by target_bound. Requires alpha > 0 (throws
// std::domain_error otherwise), a fully connected stack, and one shared dt.
BoundReport gradient_bound(const Model& model, double target_bound, Index N);

// Measured flavor: additionally runs forward/backward on the given inputs
// (entries in [-1,1]) against per-step targets (m x N) and records the largest
// parameter-gradient magnitude next to the bound.
BoundReport gradient_bound(const Model& model, const Mat& inputs,
                           const Mat& targets);

// ---------------------------------------------------------------------------
// Hidden-state bounds
// ---------------------------------------------------------------------------

// Margins of |y_i| <= sqrt((2/alpha)(1 + 2*beta*t_n)) and
// |z_i| <= sqrt(2 (1 + 2*beta*t_n)) along a forward run, minimized over every
// layer, step and neuron. Negative margins mean a violation.
struct StateBoundReport {
  double beta = 0;
  double min_margin_y = 0;
  double min_margin_z = 0;
  Index worst_layer_y = 0;  // 1-based
  Index worst_step_y = 0;
  Index worst_layer_z = 0;
  Index worst_step_z = 0;
  bool satisfied = true;
};

// Runs the stack on inputs with entries in [-1,1] and checks every state
// column. Requires alpha > 0 (throws std::domain_error at alpha == 0).
StateBoundReport state_bound_check(const Model& model, const Mat& inputs);

// ---------------------------------------------------------------------------
// Step Jacobians and their chains
// ---------------------------------------------------------------------------

// Per-neuron 2x2 Jacobian of one step, d(y_n, z_n)/d(y_{n-1}, z_{n-1}). The
// map is symplectic, so det == 1 exactly in real arithmetic:
//   [[1 - D^2 k, D], [-D k, 1]],  D = dt*sigma_hat(c),  k = w*sig'(A) + alpha.
struct JacobianBlock {
  double dy_dy = 0, dy_dz = 0;
  double dz_dy = 0, dz_dz = 0;

  double det() const { return dy_dy * dz_dz - dy_dz * dz_dy; }
};

// Analytic blocks of the step taken from `prev` under input x.
std::vector<JacobianBlock> step_jacobian(const LayerParams& params,
                                         const LayerState& prev, const Vec& x,
                                         double dt, double alpha);

// Exact product prod_{j=k+1..n} J_j over a stored trajectory (states and the
// inputs that produced them), assembled as a dense 2m x 2m matrix with rows
// and columns ordered (y_1..y_m, z_1..z_m). k == n yields the identity. Used
// as the brute-force oracle for gradient propagation, so keep m small.
Mat jacobian_chain(const LayerParams& params, const Trajectory& traj, double dt,
                   double alpha, Index k, Index n);

// ---------------------------------------------------------------------------
// Gradient-contribution probes
// ---------------------------------------------------------------------------

// Both probes measure the contribution of recurrent step k to the loss
// gradient dE_n/dw^{1,p} through the structured path product: the explicit
// w-perturbation injected at step k of layer 1, carried to step n by the
// layer-1 Jacobian chain, then lifted through the stack by the one-step
// inter-layer couplings at step n, and finally contracted with the loss
// gradient at the top. For a single layer this is exactly the per-step
// gradient contribution of truncated-BPTT bookkeeping.

// The shared measurement: runs the stack (zero initial states) over inputs
// and returns the raw step-k contribution to dE_n/dw^{1,p}, with
// E_n = 0.5*|y^L_n - target|^2 (empty target means zeros). Exposed so tests
// can pit it against hand-assembled products of step_jacobian/jacobian_chain.
double stack_gradient_contribution(const Model& model, const Mat& inputs,
                                   Index k, Index n, Index p,
                                   const Arr& target = Arr());

struct VanishingProbeConfig {
  Index k = 3;       // injection step for the order fit (held fixed across dt)
  double t_end = 2.5;  // physical horizon; n = round(t_end/dt) per dt point
  Index p = 0;         // probed neuron / parameter component
  std::vector<double> dt_list = {0.1, 0.05, 0.025, 0.0125};

  // k-profile settings (separate fixed-step-count run)
  double profile_dt = 0.1;
  Index profile_n = 100;
  Index profile_k_max = 75;

  // Optional regression target for the final step (size m); empty = zeros.
  Arr target;

  // Input signal sampled at x_j = signal(j*dt); empty uses a built-in smooth
  // bounded signal.
  std::function<Vec(double)> signal;
};

struct VanishingProbeReport {
  std::vector<double> dts;
  std::vector<double> contributions;  // exact step-k contribution per dt
  std::vector<double> leadings;       // first-order term per dt
  std::vector<double> remainders;     // |contribution - leading|
  double fitted_order = 0;            // log-log slope of remainder vs dt

  std::vector<double> k_profile;  // |contribution| for k = 1..profile_k_max
  double k_profile_ratio = 0;     // max/min over the profile
};

// Single-layer probe of the first-order representation
//   dE_n/dw_p (step k) = -dt*sigma_hat(c_p)^2 * t_n * sig'(A_{k-1,p})
//                        * y_{k-1,p} * (y_n - ybar)_p  + O(dt^2).
// The remainder after subtracting the first-order term must shrink at second
// order, and the contribution magnitude must stay flat in k (no exponential
// forgetting). Multi-layer models are rejected with std::invalid_argument
// pointing at multilayer_scaling_probe. Requires k >= 1 and k <= n/4 at every
// dt, and a nonzero initial y so early steps have signal.
VanishingProbeReport vanishing_gradient_probe(const Model& model,
                                              const LayerState& initial,
                                              const VanishingProbeConfig& cfg =
                                                  {});

// Reference single-layer instance for the probe: weak recurrent gating so the
// per-step Jacobians stay near shear form, a drive that keeps y_p positive and
// growing, and a nonzero initial state.
Model probe_layer_model();
LayerState probe_layer_state();

struct ScalingProbeReport {
  int layers = 0;
  int skip = 0;
  std::vector<double> dts;
  std::vector<double> magnitudes;  // |step-k contribution| per dt
  double fitted_exponent = 0;
  double predicted_exponent = 0;
};

// Measures how the layer-1 gradient contribution scales in dt for an L-layer
// stack (fully connected when S == 0, residual with skip distance S
// otherwise), holding the physical injection time t_inject and readout time
// t_end fixed while dt is refined (k = t_inject/dt, n = t_end/dt). The fitted
// log-log exponent is compared against predicted_scaling_exponent. dt_list
// needs >= 4 points spanning >= 3 octaves; deep stacks fit cleaner on finer
// grids because the coefficient of the leading power still drifts at O(dt).
ScalingProbeReport multilayer_scaling_probe(int L, int S,
                                            const std::vector<double>& dt_list,
                                            std::uint64_t seed = 11,
                                            double t_inject = 0.5,
                                            double t_end = 2.0);

// 2L - 1 for a fully connected stack; with skip distance S the shortest
// descent uses nu = floor((L-1)/S) skip edges and L-1-nu*S dense edges, each
// edge costing two powers of dt, plus one power from the injection:
// 2*(nu + L - 1 - nu*S) + 1.
double predicted_scaling_exponent(int L, int S);

// ---------------------------------------------------------------------------
// Inspection and oracles
// ---------------------------------------------------------------------------

// L x m matrix of per-neuron effective steps dt_l * sigma_hat(c_li).
Mat effective_timesteps(const Model& model);

// Central finite differences of an arbitrary scalar loss over every trainable
// tensor, in param_refs order. The loss closure must be deterministic; a
// non-finite loss value aborts with std::runtime_error.
std::vector<Arr> finite_difference_gradients(
    Model& model, const std::function<double(const Model&)>& loss, double h);

// Least-squares slope of log(y) against log(x); requires >= 2 strictly
// positive points.
double fit_loglog_slope(const std::vector<double>& x,
                        const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Verification battery
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  double value = 0;       // measured quantity
  double threshold = 0;   // limit it is compared against
  bool pass = false;
  std::string detail;     // human-readable comparison
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Fault-injection hook: added to one analytic gradient coordinate inside the
  // finite-difference agreement check. Nonzero values must make the suite
  // fail; exists so the checker itself can be checked.
  double grad_corruption = 0.0;
};

// Runs the full battery (Jacobian determinants, bound satisfaction, probe
// order fits, oracle agreement) and returns one result per check.
std::vector<CheckResult> run_verification_suite(const VerifyOptions& opts = {});

}  // namespace unicornn
