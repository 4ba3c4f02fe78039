#include "unicornn/bench.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "unicornn/activations.hpp"
#include "unicornn/init.hpp"
#include "unicornn/rng.hpp"

namespace unicornn {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / (1e-12 + std::max(std::abs(a), std::abs(b)));
}

}  // namespace

SampleGrads naive_loss_grads(const Model& model, const Mat& inputs,
                             const Mat& targets) {
  const ModelConfig& cfg = model.config;
  model.validate();
  require(cfg.skip == 0, "naive_loss_grads: dense stacks only");
  require(cfg.readout == ReadoutMode::per_step,
          "naive_loss_grads: per-step regression readout only");
  require(inputs.rows() == cfg.d, "naive_loss_grads: input rows != d");
  const Index N = inputs.cols();
  require(targets.rows() == cfg.out_dim && targets.cols() == N,
          "naive_loss_grads: target shape mismatch");
  const Index m = cfg.m;

  // forward, one matrix-vector product per layer per step
  std::vector<Mat> ys(cfg.L), zs(cfg.L);
  for (int ell = 0; ell < cfg.L; ++ell) {
    const LayerParams& p = model.layers[ell];
    const Arr D = detail::effective_step(p.c, cfg.dt[ell]);
    ys[ell] = Mat::Zero(m, N + 1);
    zs[ell] = Mat::Zero(m, N + 1);
    for (Index n = 1; n <= N; ++n) {
      const Vec x = ell == 0 ? Vec(inputs.col(n - 1))
                             : Vec(ys[ell - 1].col(n));
      const Arr y_prev = ys[ell].col(n - 1).array();
      const Arr A = p.w * y_prev + (p.V * x).array() + p.b;
      const Arr z =
          zs[ell].col(n - 1).array() - D * (A.tanh() + cfg.alpha * y_prev);
      ys[ell].col(n) = (y_prev + D * z).matrix();
      zs[ell].col(n) = z.matrix();
    }
  }

  SampleGrads out;
  out.g_W = Mat::Zero(cfg.out_dim, m);
  out.g_b = Vec::Zero(cfg.out_dim);
  Mat upstream = Mat::Zero(m, N);
  for (Index n = 1; n <= N; ++n) {
    const Vec y_top = ys[cfg.L - 1].col(n);
    const Vec pred = model.readout_W * y_top + model.readout_b;
    const Vec err = pred - targets.col(n - 1);
    out.loss += 0.5 * err.squaredNorm() / static_cast<double>(N);
    const Vec g_pred = err / static_cast<double>(N);
    out.g_W += g_pred * y_top.transpose();
    out.g_b += g_pred;
    upstream.col(n - 1) = model.readout_W.transpose() * g_pred;
  }

  // adjoint sweep per layer, top down, again one matrix-vector per step
  out.model.layers.resize(cfg.L);
  for (int ell = cfg.L - 1; ell >= 0; --ell) {
    const LayerParams& p = model.layers[ell];
    const double dt = cfg.dt[ell];
    const Arr D = detail::effective_step(p.c, dt);
    LayerGrads& g = out.model.layers[ell];
    g.g_w = Arr::Zero(m);
    g.g_b = Arr::Zero(m);
    g.g_V = Mat::Zero(p.V.rows(), p.V.cols());
    g.g_x = Mat::Zero(p.V.cols(), N);
    Arr g_D = Arr::Zero(m);
    Arr delta_y = Arr::Zero(m), delta_z = Arr::Zero(m);
    for (Index n = N; n >= 1; --n) {
      const Vec x = ell == 0 ? Vec(inputs.col(n - 1))
                             : Vec(ys[ell - 1].col(n));
      const Arr y_prev = ys[ell].col(n - 1).array();
      const Arr z_n = zs[ell].col(n).array();
      const Arr A = p.w * y_prev + (p.V * x).array() + p.b;
      const Arr th = A.tanh();
      const Arr sp = 1.0 - th.square();

      delta_y += upstream.col(n - 1).array();
      const Arr gz_total = delta_z + delta_y * D;
      const Arr psi = -gz_total * D * sp;

      g_D += delta_y * z_n - gz_total * (th + cfg.alpha * y_prev);
      g.g_w += psi * y_prev;
      g.g_b += psi;
      g.g_V += psi.matrix() * x.transpose();
      g.g_x.col(n - 1) = p.V.transpose() * psi.matrix();

      delta_y -= gz_total * D * (p.w * sp + cfg.alpha);
      delta_z = gz_total;
    }
    g.g_c = g_D * dt * dsigma_hat(p.c);
    if (ell > 0) upstream = g.g_x;
  }
  return out;
}

BenchReport run_benchmark(const BenchConfig& config) {
  require(config.N >= 1 && config.m >= 1 && config.L >= 1 &&
              config.batch >= 1 && config.in_dim >= 1 && config.out_dim >= 1,
          "run_benchmark: sizes must be positive");
  require(config.reps >= 1, "run_benchmark: reps must be positive");

  ModelConfig cfg;
  cfg.L = config.L;
  cfg.m = config.m;
  cfg.d = config.in_dim;
  cfg.out_dim = config.out_dim;
  cfg.alpha = 1.0;
  cfg.dt.assign(config.L, 0.1);
  cfg.readout = ReadoutMode::per_step;
  const Model model = init_params(cfg, mix_seed(config.seed, 0x62656e /* ben */));

  Rng rng(mix_seed(config.seed, 0x6278 /* bx */));
  Batch batch;
  batch.B = config.batch;
  batch.N = config.N;
  batch.inputs = Mat(config.in_dim, config.N * config.batch);
  batch.targets = Mat(config.out_dim, config.N * config.batch);
  for (Index i = 0; i < batch.inputs.size(); ++i)
    batch.inputs.data()[i] = rng.uniform(-1.0, 1.0);
  for (Index i = 0; i < batch.targets.size(); ++i)
    batch.targets.data()[i] = rng.uniform(-1.0, 1.0);

  // the same sequences in per-sample layout for the reference implementation
  std::vector<Mat> xs(config.batch), ts(config.batch);
  for (Index b = 0; b < config.batch; ++b) {
    xs[b] = Mat(config.in_dim, config.N);
    ts[b] = Mat(config.out_dim, config.N);
    for (Index n = 0; n < config.N; ++n) {
      xs[b].col(n) = batch.inputs.col(n * config.batch + b);
      ts[b].col(n) = batch.targets.col(n * config.batch + b);
    }
  }

  const auto run_fused = [&] {
    return engine_loss_grads(model, batch, nullptr, false);
  };
  const auto run_naive = [&] {
    SampleGrads acc = naive_loss_grads(model, xs[0], ts[0]);
    for (Index b = 1; b < config.batch; ++b) {
      const SampleGrads s = naive_loss_grads(model, xs[b], ts[b]);
      acc.loss += s.loss;
      acc.g_W += s.g_W;
      acc.g_b += s.g_b;
      for (int ell = 0; ell < cfg.L; ++ell) {
        acc.model.layers[ell].g_w += s.model.layers[ell].g_w;
        acc.model.layers[ell].g_b += s.model.layers[ell].g_b;
        acc.model.layers[ell].g_c += s.model.layers[ell].g_c;
        acc.model.layers[ell].g_V += s.model.layers[ell].g_V;
      }
    }
    return acc;
  };

  BenchReport report;
  report.config = config;

  // implementation agreement on the benchmark batch (loss and gradients)
  {
    const BatchGrads fused = run_fused();
    const SampleGrads naive = run_naive();
    double worst = rel_diff(fused.loss_sum, naive.loss);
    for (int ell = 0; ell < cfg.L; ++ell) {
      worst = std::max(worst, rel_diff(fused.model.layers[ell].g_w.matrix().norm(),
                                       naive.model.layers[ell].g_w.matrix().norm()));
      worst = std::max(worst, rel_diff(fused.model.layers[ell].g_V.norm(),
                                       naive.model.layers[ell].g_V.norm()));
      worst = std::max(worst, rel_diff(fused.model.layers[ell].g_c.matrix().norm(),
                                       naive.model.layers[ell].g_c.matrix().norm()));
    }
    worst = std::max(worst, rel_diff(fused.g_W.norm(), naive.g_W.norm()));
    report.agreement = worst;
  }

  run_fused();  // warmup, untimed
  run_naive();
  for (int rep = 0; rep < config.reps; ++rep) {
    auto t0 = std::chrono::steady_clock::now();
    run_fused();
    report.fused_s.push_back(seconds_since(t0));
    t0 = std::chrono::steady_clock::now();
    run_naive();
    report.naive_s.push_back(seconds_since(t0));
  }
  for (double s : report.fused_s) report.fused_mean_s += s;
  for (double s : report.naive_s) report.naive_mean_s += s;
  report.fused_mean_s /= config.reps;
  report.naive_mean_s /= config.reps;
  return report;
}

void write_bench_csv(const BenchReport& report, std::ostream& out) {
  const BenchConfig& c = report.config;
  out << "impl,rep,N,m,L,batch,seconds\n";
  for (int rep = 0; rep < c.reps; ++rep) {
    out << "fused," << rep + 1 << ',' << c.N << ',' << c.m << ',' << c.L << ','
        << c.batch << ',' << report.fused_s[rep] << '\n';
    out << "naive," << rep + 1 << ',' << c.N << ',' << c.m << ',' << c.L << ','
        << c.batch << ',' << report.naive_s[rep] << '\n';
  }
}

}  // namespace unicornn
