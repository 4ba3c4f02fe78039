#include "unicornn/analysis.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "unicornn/activations.hpp"
#include "unicornn/init.hpp"
#include "unicornn/layer.hpp"
#include "unicornn/model.hpp"
#include "unicornn/rng.hpp"
#include "test_util.hpp"

namespace unicornn {
namespace {

using testutil::grad_check_violation;
using testutil::random_mat;

ModelConfig stack_config(int L, int m, int d, double dt, double alpha,
                         int skip = 0) {
  ModelConfig cfg;
  cfg.L = L;
  cfg.m = m;
  cfg.d = d;
  cfg.out_dim = m;
  cfg.dt.assign(L, dt);
  cfg.alpha = alpha;
  cfg.skip = skip;
  return cfg;
}

// The L=2, m=2 instance whose bound constants were frozen from an independent
// reimplementation of the closed-form expressions.
Model bound_example_model() {
  Model mo;
  mo.config = stack_config(2, 2, 2, 0.01, 1.25);
  LayerParams p1;
  p1.w = Arr(2);
  p1.w << 0.5, -1.5;
  p1.c = Arr(2);
  p1.c << 0.1, -0.2;
  p1.b = Arr::Zero(2);
  p1.V = Mat(2, 2);
  p1.V << 0.5, -0.25, 1.0, 0.75;
  LayerParams p2;
  p2.w = Arr(2);
  p2.w << 2.5, 0.25;
  p2.c = Arr(2);
  p2.c << 0.0, 0.3;
  p2.b = Arr::Zero(2);
  p2.V = Mat(2, 2);
  p2.V << -0.3, 0.2, 0.1, 0.4;
  mo.layers.push_back(std::move(p1));
  mo.layers.push_back(std::move(p2));
  mo.readout_W = Mat::Zero(2, 2);
  mo.readout_b = Vec::Zero(2);
  return mo;
}

// ---------------------------------------------------------------------------
// Step Jacobians
// ---------------------------------------------------------------------------

TEST(StepJacobian, ShearFormAtZeroStiffness) {
  // w = 0 and alpha = 0 leave no coupling from y into z, so each block is the
  // exact shear [[1, D], [0, 1]].
  LayerParams p;
  p.w = Arr::Zero(3);
  p.c = Arr(3);
  p.c << -0.5, 0.0, 1.2;
  p.b = Arr(3);
  p.b << 0.3, -0.1, 0.2;
  p.V = random_mat(3, 2, 5);
  LayerState s{Arr::Constant(3, 0.4), Arr::Constant(3, -0.2)};
  const Vec x = random_mat(2, 1, 6).col(0);

  const auto blocks = step_jacobian(p, s, x, 0.1, 0.0);
  ASSERT_EQ(blocks.size(), 3u);
  for (Index i = 0; i < 3; ++i) {
    const double D = 0.1 * sigma_hat(p.c[i]);
    EXPECT_EQ(blocks[i].dy_dy, 1.0);
    EXPECT_EQ(blocks[i].dy_dz, D);
    EXPECT_EQ(blocks[i].dz_dy, 0.0);
    EXPECT_EQ(blocks[i].dz_dz, 1.0);
  }
}

TEST(StepJacobian, MatchesFiniteDifferencesOfOneStep) {
  const Index m = 5, d = 3;
  Rng rng(mix_seed(404, 0));
  LayerParams p = testutil::random_params(rng, m, d);
  LayerState s = testutil::random_state(rng, m);
  const Vec x = testutil::random_mat(rng, d, 1, -1.0, 1.0).col(0);
  const double dt = 0.2, alpha = 0.7, h = 1e-6;

  const auto blocks = step_jacobian(p, s, x, dt, alpha);
  auto step_from = [&](const LayerState& in) {
    return forward_step(in, p, x, dt, alpha);
  };
  for (Index i = 0; i < m; ++i) {
    LayerState up = s, dn = s;
    up.y[i] += h;
    dn.y[i] -= h;
    LayerState su = step_from(up), sd = step_from(dn);
    EXPECT_NEAR(blocks[i].dy_dy, (su.y[i] - sd.y[i]) / (2 * h), 1e-6);
    EXPECT_NEAR(blocks[i].dz_dy, (su.z[i] - sd.z[i]) / (2 * h), 1e-6);
    up = s;
    dn = s;
    up.z[i] += h;
    dn.z[i] -= h;
    su = step_from(up);
    sd = step_from(dn);
    EXPECT_NEAR(blocks[i].dy_dz, (su.y[i] - sd.y[i]) / (2 * h), 1e-6);
    EXPECT_NEAR(blocks[i].dz_dz, (su.z[i] - sd.z[i]) / (2 * h), 1e-6);
  }
}

TEST(StepJacobian, DeterminantIsOneToRounding) {
  Rng rng(mix_seed(405, 0));
  for (int rep = 0; rep < 200; ++rep) {
    LayerParams p = testutil::random_params(rng, 4, 2);
    LayerState s = testutil::random_state(rng, 4);
    const Vec x = testutil::random_mat(rng, 2, 1, -1.0, 1.0).col(0);
    for (const auto& blk : step_jacobian(p, s, x, 0.3, 1.5)) {
      EXPECT_LE(std::abs(blk.det() - 1.0), 1e-12);
    }
  }
}

TEST(StepJacobian, ValidatesStateAndInputSizes) {
  Rng rng(mix_seed(406, 0));
  LayerParams p = testutil::random_params(rng, 3, 2);
  LayerState bad{Arr::Zero(2), Arr::Zero(2)};
  const Vec x = Vec::Zero(2);
  EXPECT_THROW(step_jacobian(p, bad, x, 0.1, 1.0), std::invalid_argument);
  LayerState ok{Arr::Zero(3), Arr::Zero(3)};
  EXPECT_THROW(step_jacobian(p, ok, Vec::Zero(5), 0.1, 1.0),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Jacobian chains
// ---------------------------------------------------------------------------

struct ChainFixture {
  LayerParams p;
  Mat inputs;
  LayerForward lf;
  double dt = 0.1, alpha = 0.8;

  explicit ChainFixture(Index m = 4, Index d = 2, Index N = 30,
                        std::uint64_t seed = 21) {
    Rng rng(mix_seed(seed, 0));
    p = testutil::random_params(rng, m, d);
    inputs = testutil::random_mat(rng, d, N, -1.0, 1.0);
    lf = layer_forward(zero_state(m), inputs, p, dt, alpha, true);
  }
};

TEST(JacobianChain, EmptyRangeIsIdentity) {
  ChainFixture f;
  const Mat P = jacobian_chain(f.p, *f.lf.trajectory, f.dt, f.alpha, 7, 7);
  EXPECT_EQ((P - Mat::Identity(8, 8)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(JacobianChain, SingleStepMatchesBlocks) {
  ChainFixture f;
  const Index k = 11, m = 4;
  const Mat P = jacobian_chain(f.p, *f.lf.trajectory, f.dt, f.alpha, k, k + 1);
  const auto blocks = step_jacobian(f.p, f.lf.trajectory->state(k),
                                    f.inputs.col(k), f.dt, f.alpha);
  for (Index i = 0; i < m; ++i) {
    EXPECT_EQ(P(i, i), blocks[i].dy_dy);
    EXPECT_EQ(P(i, m + i), blocks[i].dy_dz);
    EXPECT_EQ(P(m + i, i), blocks[i].dz_dy);
    EXPECT_EQ(P(m + i, m + i), blocks[i].dz_dz);
    for (Index j = 0; j < m; ++j) {
      if (j == i) continue;
      EXPECT_EQ(P(i, j), 0.0);
      EXPECT_EQ(P(m + i, m + j), 0.0);
    }
  }
}

TEST(JacobianChain, ConstantStiffnessMatchesFrozenPower) {
  // w = 0 freezes the per-step stiffness at alpha, so the 7-step chain is an
  // exact matrix power. Reference entries were recomputed independently.
  LayerParams p;
  p.w = Arr::Zero(1);
  p.c = Arr(1);
  p.c << 0.4;
  p.b = Arr(1);
  p.b << 0.05;
  p.V = Mat(1, 1);
  p.V << 0.7;
  Mat x(1, 9);
  for (int j = 0; j < 9; ++j) x(0, j) = 0.3 * std::sin(0.5 * (j + 1));
  LayerForward lf = layer_forward(zero_state(1), x, p, 0.1, 0.8, true);
  const Mat P = jacobian_chain(p, *lf.trajectory, 0.1, 0.8, 2, 9);
  EXPECT_NEAR(P(0, 0), 0.92074341223754574, 1e-12);
  EXPECT_NEAR(P(0, 1), 0.40952977329560836, 1e-12);
  EXPECT_NEAR(P(1, 0), -0.3276238186364866, 1e-12);
  EXPECT_NEAR(P(1, 1), 0.94035784597520422, 1e-12);
}

TEST(JacobianChain, LongChainDeterminantStaysNearOne) {
  ChainFixture f(6, 3, 100, 33);
  const Mat P = jacobian_chain(f.p, *f.lf.trajectory, f.dt, f.alpha, 0, 100);
  EXPECT_LE(std::abs(P.determinant() - 1.0), 1e-10);
}

TEST(JacobianChain, MapsStatePerturbationsForward) {
  ChainFixture f(4, 2, 60, 44);
  const Index m = 4, k = 15, n = 60;
  const Mat P = jacobian_chain(f.p, *f.lf.trajectory, f.dt, f.alpha, k, n);

  Rng rng(mix_seed(45, 0));
  const Arr uy = testutil::random_arr(rng, m, -1.0, 1.0);
  const Arr uz = testutil::random_arr(rng, m, -1.0, 1.0);
  const double eps = 1e-6;
  const Mat tail = f.inputs.middleCols(k, n - k);
  LayerState base = f.lf.trajectory->state(k);
  LayerState up{base.y + eps * uy, base.z + eps * uz};
  LayerState dn{base.y - eps * uy, base.z - eps * uz};
  LayerForward fu = layer_forward(up, tail, f.p, f.dt, f.alpha, true);
  LayerForward fd = layer_forward(dn, tail, f.p, f.dt, f.alpha, true);
  const Index last = n - k;
  Vec observed(2 * m);
  observed.head(m) =
      (fu.trajectory->y.col(last) - fd.trajectory->y.col(last)) / (2 * eps);
  observed.tail(m) =
      (fu.trajectory->z.col(last) - fd.trajectory->z.col(last)) / (2 * eps);
  Vec dir(2 * m);
  dir.head(m) = uy.matrix();
  dir.tail(m) = uz.matrix();
  const Vec predicted = P * dir;
  EXPECT_LT((observed - predicted).norm() / predicted.norm(), 1e-5);
}

// ---------------------------------------------------------------------------
// Gradient and state bounds
// ---------------------------------------------------------------------------

TEST(GradientBound, ConstantsMatchFrozenFormulaValues) {
  const BoundReport r = gradient_bound(bound_example_model(), 0.8, 100);
  EXPECT_EQ(r.gamma, 10.78125);
  EXPECT_EQ(r.beta, 6.25);
  EXPECT_EQ(r.vbar, 1.75);
  EXPECT_EQ(r.horizon, 1.0);
  EXPECT_NEAR(r.fstate, 4.6475800154489004, 1e-12);
  EXPECT_NEAR(r.delta, 20.778869664383695, 1e-11);
  EXPECT_NEAR(r.bound, 4514.1104252310897, 1e-8);
  EXPECT_EQ(r.observed_max_grad, 0.0);
  EXPECT_TRUE(r.satisfied);
}

TEST(GradientBound, MeasuredGradientStaysUnderBound) {
  Model mo = bound_example_model();
  const Index N = 100;
  const Mat inputs = random_mat(2, N, 91, -1.0, 1.0);
  const Mat targets = random_mat(2, N, 92, -0.8, 0.8);
  const BoundReport r = gradient_bound(mo, inputs, targets);
  EXPECT_GT(r.observed_max_grad, 0.0);
  EXPECT_LE(r.observed_max_grad, r.bound);
  EXPECT_TRUE(r.satisfied);
}

TEST(GradientBound, RejectsUndampedSystems) {
  Model mo = bound_example_model();
  mo.config.alpha = 0.0;
  EXPECT_THROW(gradient_bound(mo, 1.0, 10), std::domain_error);
  EXPECT_THROW(state_bound_check(mo, Mat::Zero(2, 4)), std::domain_error);
}

TEST(GradientBound, RejectsSkipStacksAndBadHorizons) {
  Model mo = init_params(stack_config(4, 3, 2, 0.1, 1.0, 2), 3);
  EXPECT_THROW(gradient_bound(mo, 1.0, 10), std::invalid_argument);
  Model fc = bound_example_model();
  EXPECT_THROW(gradient_bound(fc, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(gradient_bound(fc, -0.5, 10), std::invalid_argument);
}

TEST(GradientBound, BetaFormulaCrossesOverAtLargeDamping) {
  Model mo = bound_example_model();
  mo.config.alpha = 1.0;  // max(1 + 2a, 4a^2) = max(3, 4)
  EXPECT_EQ(gradient_bound(mo, 1.0, 5).beta, 4.0);
  mo.config.alpha = 0.25;  // max(1.5, 0.25)
  EXPECT_EQ(gradient_bound(mo, 1.0, 5).beta, 1.5);
}

TEST(StateBound, ZeroDriveKeepsFullMargin) {
  // Zero inputs and zero biases pin the trajectory at the origin, so the
  // smallest margins are the bounds themselves at t = 0.
  Model mo = init_params(stack_config(3, 5, 2, 0.05, 2.0), 17);
  const StateBoundReport r = state_bound_check(mo, Mat::Zero(2, 50));
  EXPECT_DOUBLE_EQ(r.min_margin_y, 1.0);  // sqrt(2/alpha) with alpha = 2
  EXPECT_DOUBLE_EQ(r.min_margin_z, std::sqrt(2.0));
  EXPECT_EQ(r.worst_step_y, 0);
  EXPECT_EQ(r.worst_step_z, 0);
  EXPECT_TRUE(r.satisfied);
}

TEST(StateBound, RandomBoundedInputsStayInsideEnvelope) {
  Model mo = init_params(stack_config(3, 8, 3, 0.01, 1.0), 23);
  const Mat inputs = random_mat(3, 2000, 24, -1.0, 1.0);
  const StateBoundReport r = state_bound_check(mo, inputs);
  EXPECT_TRUE(r.satisfied);
  EXPECT_GE(r.min_margin_y, 0.0);
  EXPECT_GE(r.min_margin_z, 0.0);
  EXPECT_EQ(r.beta, 4.0);
}

TEST(StateBound, RejectsOutOfRangeInputs) {
  Model mo = init_params(stack_config(1, 3, 2, 0.1, 1.0), 29);
  Mat inputs = Mat::Zero(2, 5);
  inputs(1, 3) = 1.5;
  EXPECT_THROW(state_bound_check(mo, inputs), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Single-layer probe
// ---------------------------------------------------------------------------

TEST(VanishingProbe, PointValuesMatchFrozenOracle) {
  // dt = 0.1 entry of the default sweep, frozen from an independent
  // step-by-step reimplementation of the forward pass and the path product.
  const VanishingProbeReport rep =
      vanishing_gradient_probe(probe_layer_model(), probe_layer_state());
  ASSERT_EQ(rep.dts.size(), 4u);
  EXPECT_NEAR(rep.contributions[0], -0.01471666525541507, 1.5e-14);
  EXPECT_NEAR(rep.leadings[0], -0.015996721978875545, 1.6e-14);
  EXPECT_NEAR(rep.remainders[0], 0.0012800567234604755, 1.3e-15);
  for (std::size_t i = 0; i < rep.dts.size(); ++i) {
    EXPECT_EQ(rep.remainders[i],
              std::abs(rep.contributions[i] - rep.leadings[i]));
  }
}

TEST(VanishingProbe, RemainderShrinksAtSecondOrder) {
  const VanishingProbeReport rep =
      vanishing_gradient_probe(probe_layer_model(), probe_layer_state());
  EXPECT_LE(std::abs(rep.fitted_order - 2.0), 0.3);
  EXPECT_NEAR(rep.fitted_order, 2.0141130755594281, 1e-6);
}

TEST(VanishingProbe, InfluenceStaysFlatAcrossInjectionTimes) {
  const VanishingProbeReport rep =
      vanishing_gradient_probe(probe_layer_model(), probe_layer_state());
  ASSERT_EQ(rep.k_profile.size(), 75u);
  for (double v : rep.k_profile) EXPECT_GT(v, 0.0);
  EXPECT_LE(rep.k_profile_ratio, 100.0);
  EXPECT_NEAR(rep.k_profile_ratio, 1.3258366303408986, 1e-6);
}

TEST(VanishingProbe, ZeroUpstreamGivesZeroContribution) {
  // Targeting the realized final state exactly kills the loss gradient, and
  // both the contribution and its first-order representation with it.
  Model mo = probe_layer_model();
  const LayerState s0 = probe_layer_state();
  auto signal = [](double t) {
    Vec u(2);
    u << 0.3 * std::sin(t), 0.2 * std::cos(0.7 * t);
    return u;
  };
  const double dt = 0.1;
  const Index n = 25;
  Mat inputs(2, n);
  for (Index j = 1; j <= n; ++j) inputs.col(j - 1) = signal(j * dt);
  LayerForward lf = layer_forward(s0, inputs, mo.layers[0], dt, 0.0, false);

  VanishingProbeConfig cfg;
  cfg.dt_list = {dt};
  cfg.profile_k_max = 0;
  cfg.signal = signal;
  cfg.target = lf.outputs.col(n - 1).array();
  const VanishingProbeReport rep =
      vanishing_gradient_probe(mo, s0, cfg);
  EXPECT_EQ(rep.contributions[0], 0.0);
  EXPECT_EQ(rep.leadings[0], 0.0);
}

TEST(VanishingProbe, RejectsStacksAndLateInjections) {
  Model deep = init_params(stack_config(2, 4, 2, 0.1, 0.5), 31);
  EXPECT_THROW(vanishing_gradient_probe(deep, zero_state(4)),
               std::invalid_argument);

  VanishingProbeConfig late;
  late.k = 10;  // n = 25 at dt = 0.1, so 4k exceeds the horizon
  EXPECT_THROW(
      vanishing_gradient_probe(probe_layer_model(), probe_layer_state(), late),
      std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Stack scaling probe
// ---------------------------------------------------------------------------

TEST(ScalingProbe, PredictedExponentTable) {
  // Fully connected: 2L - 1. With skip distance S the cheapest descent mixes
  // floor((L-1)/S) long edges with single-layer edges.
  EXPECT_EQ(predicted_scaling_exponent(1, 0), 1.0);
  EXPECT_EQ(predicted_scaling_exponent(2, 0), 3.0);
  EXPECT_EQ(predicted_scaling_exponent(3, 0), 5.0);
  EXPECT_EQ(predicted_scaling_exponent(7, 0), 13.0);
  EXPECT_EQ(predicted_scaling_exponent(7, 3), 5.0);
  EXPECT_EQ(predicted_scaling_exponent(5, 2), 5.0);
  EXPECT_EQ(predicted_scaling_exponent(4, 2), 5.0);
  EXPECT_EQ(predicted_scaling_exponent(9, 3), 9.0);
  EXPECT_EQ(predicted_scaling_exponent(6, 5), 3.0);
  EXPECT_EQ(predicted_scaling_exponent(8, 3), 7.0);
}

TEST(ScalingProbe, TwoLayerExponent) {
  const ScalingProbeReport rep =
      multilayer_scaling_probe(2, 0, {0.1, 0.05, 0.025, 0.0125});
  EXPECT_EQ(rep.predicted_exponent, 3.0);
  EXPECT_LE(std::abs(rep.fitted_exponent - 3.0), 0.5);
  EXPECT_NEAR(rep.fitted_exponent, 3.0512191274146483, 1e-6);
}

TEST(ScalingProbe, ShallowFullyConnectedExponent) {
  const ScalingProbeReport rep =
      multilayer_scaling_probe(3, 0, {0.1, 0.05, 0.025, 0.0125});
  EXPECT_EQ(rep.predicted_exponent, 5.0);
  EXPECT_LE(std::abs(rep.fitted_exponent - 5.0), 0.5);
  EXPECT_NEAR(rep.fitted_exponent, 5.2221959191347525, 1e-6);
  ASSERT_EQ(rep.magnitudes.size(), 4u);
  for (std::size_t i = 0; i + 1 < rep.magnitudes.size(); ++i) {
    EXPECT_GT(rep.magnitudes[i], rep.magnitudes[i + 1]);
  }
}

TEST(ScalingProbe, SkipStackExponent) {
  const ScalingProbeReport rep =
      multilayer_scaling_probe(7, 3, {0.1, 0.05, 0.025, 0.0125});
  EXPECT_EQ(rep.predicted_exponent, 5.0);
  EXPECT_LE(std::abs(rep.fitted_exponent - 5.0), 0.5);
  EXPECT_NEAR(rep.fitted_exponent, 5.2405725297126198, 1e-6);
}

TEST(ScalingProbe, DeepFullyConnectedExponentOnFineGrid) {
  // The multiplied coefficients drift at O(dt) over the fixed window, so the
  // 13th-power fit only settles on a finer grid.
  const ScalingProbeReport rep = multilayer_scaling_probe(
      7, 0, {1.0 / 80, 1.0 / 160, 1.0 / 320, 1.0 / 640});
  EXPECT_EQ(rep.predicted_exponent, 13.0);
  EXPECT_LE(std::abs(rep.fitted_exponent - 13.0), 0.5);
  EXPECT_NEAR(rep.fitted_exponent, 13.222877754733769, 1e-5);
}

TEST(ScalingProbe, SkipShortcutCarriesStrongerSignal) {
  // Same depth, same grid: the skip stack's contribution decays with a much
  // smaller dt power than the fully connected one.
  const std::vector<double> grid = {0.1, 0.05, 0.025, 0.0125};
  const double res = multilayer_scaling_probe(5, 2, grid).fitted_exponent;
  const double fc = multilayer_scaling_probe(5, 0, grid).fitted_exponent;
  EXPECT_NEAR(res, 5.208975227802001, 1e-6);
  EXPECT_GT(fc, res + 2.0);
}

TEST(ScalingProbe, ValidatesGridAndTopology) {
  const std::vector<double> grid = {0.1, 0.05, 0.025, 0.0125};
  EXPECT_THROW(multilayer_scaling_probe(1, 0, grid), std::invalid_argument);
  EXPECT_THROW(multilayer_scaling_probe(4, 4, grid), std::invalid_argument);
  EXPECT_THROW(multilayer_scaling_probe(4, 1, grid), std::invalid_argument);
  EXPECT_THROW(multilayer_scaling_probe(3, 0, {0.1, 0.05, 0.025}),
               std::invalid_argument);
  EXPECT_THROW(multilayer_scaling_probe(3, 0, {0.1, 0.09, 0.08, 0.07}),
               std::invalid_argument);
  EXPECT_THROW(multilayer_scaling_probe(3, 0, grid, 11, 3.0, 2.0),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Structured stack contribution
// ---------------------------------------------------------------------------

TEST(StackContribution, TwoLayerScalarMatchesFrozenOracle) {
  // Scalar two-layer instance recomputed independently end to end: forward
  // both layers, lift the final-step error through the inter-layer coupling,
  // carry the injected step-4 perturbation to step 12 with the 2x2 chain.
  Model mo;
  mo.config = stack_config(2, 1, 1, 0.1, 0.6);
  LayerParams p1;
  p1.w = Arr(1);
  p1.w << 0.3;
  p1.c = Arr(1);
  p1.c << 0.2;
  p1.b = Arr(1);
  p1.b << 0.05;
  p1.V = Mat(1, 1);
  p1.V << 0.7;
  LayerParams p2;
  p2.w = Arr(1);
  p2.w << -0.4;
  p2.c = Arr(1);
  p2.c << -0.1;
  p2.b = Arr(1);
  p2.b << -0.02;
  p2.V = Mat(1, 1);
  p2.V << 0.9;
  mo.layers.push_back(std::move(p1));
  mo.layers.push_back(std::move(p2));
  mo.readout_W = Mat::Zero(1, 1);
  mo.readout_b = Vec::Zero(1);

  Mat x(1, 12);
  for (int j = 1; j <= 12; ++j) x(0, j - 1) = 0.5 * std::sin(0.4 * j * 0.1 + 0.9);
  const double c = stack_gradient_contribution(mo, x, 4, 12, 0);
  EXPECT_NEAR(c, -1.7247819606041766e-09, 2e-21);
}

TEST(StackContribution, SingleLayerMatchesManualAssembly) {
  // For one layer the structured product reduces to error * chain * injection,
  // every factor of which is exposed separately.
  Model mo = probe_layer_model();
  const double dt = 0.1;
  const Index m = 4, k = 5, n = 20, p = 1;
  const Mat inputs = random_mat(2, n, 77, -1.0, 1.0);
  LayerForward lf =
      layer_forward(zero_state(m), inputs, mo.layers[0], dt, 0.0, true);
  const double direct = stack_gradient_contribution(mo, inputs, k, n, p);

  const Mat P = jacobian_chain(mo.layers[0], *lf.trajectory, dt, 0.0, k, n);
  const Mat drive = mo.layers[0].V * inputs;
  const double A = mo.layers[0].w[p] * lf.trajectory->y(p, k - 1) +
                   drive(p, k - 1) + mo.layers[0].b[p];
  const double D = dt * sigma_hat(mo.layers[0].c[p]);
  const double vz = -D * (1.0 - std::tanh(A) * std::tanh(A)) *
                    lf.trajectory->y(p, k - 1);
  const double vy = D * vz;
  const double err = lf.trajectory->y(p, n);
  const double manual = err * (P(p, p) * vy + P(p, m + p) * vz);
  EXPECT_NEAR(direct, manual, std::abs(manual) * 1e-13);
}

TEST(StackContribution, ValidatesIndices) {
  Model mo = init_params(stack_config(2, 3, 2, 0.1, 0.5), 41);
  const Mat x = random_mat(2, 10, 42, -1.0, 1.0);
  EXPECT_THROW(stack_gradient_contribution(mo, x, 0, 5, 0),
               std::invalid_argument);
  EXPECT_THROW(stack_gradient_contribution(mo, x, 3, 11, 0),
               std::invalid_argument);
  EXPECT_THROW(stack_gradient_contribution(mo, x, 3, 8, 3),
               std::invalid_argument);
  EXPECT_THROW(stack_gradient_contribution(mo, x, 3, 8, 0, Arr::Zero(2)),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Inspection utilities
// ---------------------------------------------------------------------------

TEST(EffectiveSteps, HalfStepAtZeroGate) {
  Model mo = init_params(stack_config(2, 4, 2, 0.1, 1.0), 51);
  for (auto& p : mo.layers) p.c.setZero();
  const Mat e = effective_timesteps(mo);
  ASSERT_EQ(e.rows(), 2);
  ASSERT_EQ(e.cols(), 4);
  EXPECT_EQ((e.array() - 0.05).abs().maxCoeff(), 0.0);
}

TEST(EffectiveSteps, EntriesStayInsideOpenInterval) {
  ModelConfig cfg = stack_config(3, 6, 2, 0.1, 1.0);
  cfg.dt = {0.2, 0.1, 0.05};
  Model mo = init_params(cfg, 52);
  Rng rng(mix_seed(53, 0));
  for (auto& p : mo.layers) p.c = testutil::random_arr(rng, 6, -8.0, 8.0);
  const Mat e = effective_timesteps(mo);
  for (int ell = 0; ell < 3; ++ell) {
    for (Index i = 0; i < 6; ++i) {
      EXPECT_GT(e(ell, i), 0.0);
      EXPECT_LT(e(ell, i), cfg.dt[ell]);
    }
  }
}

TEST(FiniteDifferences, MatchAnalyticGradients) {
  ModelConfig cfg = stack_config(2, 3, 2, 0.25, 0.8);
  cfg.out_dim = 2;
  cfg.readout = ReadoutMode::per_step;
  Model mo = init_params(cfg, 61);
  const Mat inputs = random_mat(2, 6, 62, -1.0, 1.0);
  const Mat targets = random_mat(2, 6, 63, -0.5, 0.5);
  SampleTarget target;
  target.regression = &targets;

  SampleGrads sg = model_loss_grads(mo, inputs, target, RunMode::eval);
  const auto fd = finite_difference_gradients(
      mo,
      [&](const Model& m) {
        return model_loss(m, inputs, target, RunMode::eval);
      },
      1e-4);
  std::vector<TensorRef> refs = grad_refs(mo, sg.model, sg.g_W, sg.g_b);
  ASSERT_EQ(fd.size(), refs.size());
  for (std::size_t t = 0; t < refs.size(); ++t) {
    ASSERT_EQ(fd[t].size(), refs[t].size);
    Arr analytic(refs[t].size);
    for (Index i = 0; i < refs[t].size; ++i) analytic[i] = refs[t].data[i];
    EXPECT_LT(grad_check_violation(analytic, fd[t]), 1.0) << refs[t].name;
  }
}

TEST(LogLogFit, ExactOnPowerLaw) {
  std::vector<double> x = {0.4, 0.2, 0.1, 0.05, 0.025};
  std::vector<double> y;
  for (double v : x) y.push_back(3.7 * std::pow(v, 2.5));
  EXPECT_NEAR(fit_loglog_slope(x, y), 2.5, 1e-12);
  EXPECT_THROW(fit_loglog_slope({0.1}, {1.0}), std::invalid_argument);
  EXPECT_THROW(fit_loglog_slope({0.1, -0.2}, {1.0, 2.0}),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Verification battery
// ---------------------------------------------------------------------------

TEST(VerificationSuite, AllChecksPass) {
  const auto results = run_verification_suite();
  const std::vector<std::string> expected = {
      "inversion",
      "step-jacobian-det",  "step-jacobian-vs-fd",
      "chain-det",          "chain-vs-perturbation",
      "state-bounds",       "gradient-bound",
      "vanishing-remainder-order", "vanishing-k-profile",
      "scaling-fc-l3",      "scaling-res-l7s3",
      "scaling-fc-l7",      "grad-vs-fd",
      "effective-steps"};
  ASSERT_EQ(results.size(), expected.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].name, expected[i]);
    EXPECT_TRUE(results[i].pass) << results[i].name << ": "
                                 << results[i].detail;
  }
}

TEST(VerificationSuite, CorruptedGradientsAreCaught) {
  // Fault injection: biasing one analytic gradient coordinate must flip the
  // finite-difference agreement check and nothing else.
  VerifyOptions opts;
  opts.grad_corruption = 1e-3;
  const auto results = run_verification_suite(opts);
  bool saw_failure = false;
  for (const auto& r : results) {
    if (r.name == "grad-vs-fd") {
      EXPECT_FALSE(r.pass);
      saw_failure = true;
    } else {
      EXPECT_TRUE(r.pass) << r.name;
    }
  }
  EXPECT_TRUE(saw_failure);
}

}  // namespace
}  // namespace unicornn
