#include "unicornn/model.hpp"

#include "unicornn/loss.hpp"
#include "unicornn/rng.hpp"

namespace unicornn {

void Model::validate() const {
  config.validate();
  require(static_cast<int>(layers.size()) == config.L,
          "Model: layer count does not match config.L");
  for (int ell = 1; ell <= config.L; ++ell) {
    const LayerParams& p = layers[ell - 1];
    p.validate();
    require(p.m() == config.m, "Model: layer width does not match config.m");
    require(p.d_in() == config.layer_in_dim(ell),
            "Model: layer input width does not match stack wiring");
    require(p.lambda.has_value() == config.has_skip(ell),
            "Model: lambda present iff the skip distance feeds this layer");
  }
  require(readout_W.rows() == config.out_dim && readout_W.cols() == config.m,
          "Model: readout W must be out_dim x m");
  require(readout_b.size() == config.out_dim,
          "Model: readout b must have out_dim entries");
}

DropoutMask make_dropout_mask(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  DropoutMask out;
  if (config.L < 2) return out;
  Rng rng(mix_seed(seed, 0x6d61736bULL));  // dedicated mask stream
  const double p = config.dropout;
  const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  out.masks.reserve(config.L - 1);
  for (int q = 1; q < config.L; ++q) {
    Arr mask(config.m);
    for (Index i = 0; i < config.m; ++i)
      mask[i] = rng.uniform01() < p ? 0.0 : keep_scale;
    out.masks.push_back(std::move(mask));
  }
  return out;
}

namespace {

// Layer q's outputs as every consumer above sees them. Masks only exist on
// the L-1 inter-layer connections, so the top layer always reads out raw.
Mat masked_outputs(const ModelCache& cache, int q) {
  if (static_cast<size_t>(q) > cache.masks.size() || cache.masks.empty())
    return cache.outputs[q - 1];
  return (cache.outputs[q - 1].array().colwise() * cache.masks[q - 1]).matrix();
}

}  // namespace

ModelForward model_forward(const Model& model, const Mat& inputs, RunMode mode,
                           const DropoutMask* mask, bool store) {
  model.validate();
  const ModelConfig& cfg = model.config;
  const Index N = inputs.cols();
  require(N >= 1, "model_forward: empty input sequence");
  require(inputs.rows() == cfg.d, "model_forward: input rows do not match d");

  const bool masking = mode == RunMode::train && cfg.dropout > 0.0 && cfg.L > 1;
  if (masking) {
    require(mask != nullptr, "model_forward: train mode with dropout needs a mask");
    require(static_cast<int>(mask->masks.size()) == cfg.L - 1,
            "model_forward: mask count does not match hidden interfaces");
    for (const Arr& a : mask->masks)
      require(a.size() == cfg.m, "model_forward: mask width does not match m");
  }

  ModelForward out;
  ModelCache& cache = out.cache;
  cache.inputs = inputs;
  cache.stored = store;
  cache.outputs.resize(cfg.L);
  cache.finals.resize(cfg.L);
  cache.trajectories.resize(cfg.L);
  if (masking) cache.masks = mask->masks;

  std::vector<Mat> masked(cfg.L);  // masked view of each layer's outputs
  for (int ell = 1; ell <= cfg.L; ++ell) {
    const LayerParams& p = model.layers[ell - 1];
    const Mat& below = ell == 1 ? inputs : masked[ell - 2];
    Mat drive = p.V * below;
    if (cfg.has_skip(ell)) drive += *p.lambda * masked[ell - cfg.skip - 1];
    LayerForward lf = detail::forward_with_drive(zero_state(cfg.m), drive, p,
                                                 cfg.dt[ell - 1], cfg.alpha, store);
    if (store) {
      lf.trajectory->inputs = below;
      cache.trajectories[ell - 1] = std::move(lf.trajectory);
    }
    cache.finals[ell - 1] = std::move(lf.final_state);
    masked[ell - 1] =
        masking && ell < cfg.L
            ? Mat((lf.outputs.array().colwise() * cache.masks[ell - 1]).matrix())
            : lf.outputs;
    cache.outputs[ell - 1] = std::move(lf.outputs);
  }

  out.readout = apply_readout(model, masked[cfg.L - 1]);
  return out;
}

Mat apply_readout(const Model& model, const Mat& top_outputs) {
  const ModelConfig& cfg = model.config;
  require(top_outputs.rows() == cfg.m, "apply_readout: rows do not match m");
  if (cfg.readout == ReadoutMode::final_step) {
    Mat r = model.readout_W * top_outputs.col(top_outputs.cols() - 1);
    r.col(0) += model.readout_b;
    return r;
  }
  Mat r = model.readout_W * top_outputs;
  r.colwise() += model.readout_b;
  return r;
}

ReadoutGrads readout_backward(const Model& model, const ModelCache& cache,
                              const Mat& g_readout) {
  const ModelConfig& cfg = model.config;
  const Index N = cache.steps();
  const Mat top = masked_outputs(cache, cfg.L);
  ReadoutGrads out;
  if (cfg.readout == ReadoutMode::final_step) {
    require(g_readout.rows() == cfg.out_dim && g_readout.cols() == 1,
            "readout_backward: gradient must be out_dim x 1");
    out.g_W = g_readout * top.col(N - 1).transpose();
    out.g_b = g_readout.col(0);
    out.upstream_top = Mat::Zero(cfg.m, N);
    out.upstream_top.col(N - 1) = model.readout_W.transpose() * g_readout.col(0);
  } else {
    require(g_readout.rows() == cfg.out_dim && g_readout.cols() == N,
            "readout_backward: gradient must be out_dim x N");
    out.g_W = g_readout * top.transpose();
    out.g_b = g_readout.rowwise().sum();
    out.upstream_top = model.readout_W.transpose() * g_readout;
  }
  return out;
}

ModelGrads model_backward(const Model& model, const ModelCache& cache,
                          const Mat& upstream_top) {
  model.validate();
  const ModelConfig& cfg = model.config;
  const Index N = cache.steps();
  require(static_cast<int>(cache.outputs.size()) == cfg.L &&
              static_cast<int>(cache.finals.size()) == cfg.L,
          "model_backward: cache does not cover every layer");
  require(upstream_top.rows() == cfg.m && upstream_top.cols() == N,
          "model_backward: upstream must be m x N");

  ModelGrads out;
  out.layers.resize(cfg.L);

  std::vector<Mat> up(cfg.L);  // dE/d(raw outputs) of each layer
  up[cfg.L - 1] = upstream_top;
  for (int ell = cfg.L; ell >= 1; --ell) {
    const LayerParams& p = model.layers[ell - 1];
    const double dt = cfg.dt[ell - 1];
    if (up[ell - 1].size() == 0) up[ell - 1] = Mat::Zero(cfg.m, N);

    const Mat below = ell == 1 ? cache.inputs : masked_outputs(cache, ell - 1);
    Mat drive = p.V * below;
    if (cfg.has_skip(ell)) drive += *p.lambda * masked_outputs(cache, ell - cfg.skip);

    const Trajectory* traj =
        cache.stored ? &*cache.trajectories[ell - 1] : nullptr;
    const LayerState* fin = cache.stored ? nullptr : &cache.finals[ell - 1];
    detail::CoreGrads core = detail::backward_sweep(p, dt, cfg.alpha, drive,
                                                    up[ell - 1], traj, fin);

    LayerGrads& g = out.layers[ell - 1];
    g.g_w = std::move(core.g_w);
    g.g_b = std::move(core.g_b);
    g.g_c = std::move(core.g_c);
    g.g_V = core.g_psi * below.transpose();
    g.g_x = p.V.transpose() * core.g_psi;
    if (cfg.has_skip(ell)) {
      g.g_lambda = core.g_psi * masked_outputs(cache, ell - cfg.skip).transpose();
      Mat skip_down = p.lambda->transpose() * core.g_psi;
      if (!cache.masks.empty())
        skip_down = (skip_down.array().colwise() * cache.masks[ell - cfg.skip - 1]).matrix();
      const int src = ell - cfg.skip;
      if (up[src - 1].size() == 0) up[src - 1] = Mat::Zero(cfg.m, N);
      up[src - 1] += skip_down;
    }
    if (ell > 1) {
      Mat dense_down = g.g_x;
      if (!cache.masks.empty())
        dense_down = (dense_down.array().colwise() * cache.masks[ell - 2]).matrix();
      if (up[ell - 2].size() == 0) up[ell - 2] = Mat::Zero(cfg.m, N);
      up[ell - 2] += dense_down;
    }
  }
  return out;
}

namespace {

struct LossEval {
  double value;
  Mat g_readout;
};

LossEval eval_sample_loss(const Model& model, const Mat& readout,
                          const SampleTarget& target) {
  const bool regression = target.regression != nullptr;
  require(regression != (target.label >= 0),
          "sample target: set exactly one of regression or label");
  if (regression) {
    require(model.config.readout == ReadoutMode::per_step,
            "sample target: regression expects a per-step readout");
    LossResult r = mse_loss(readout, *target.regression);
    return {r.value, std::move(r.g_pred)};
  }
  require(model.config.readout == ReadoutMode::final_step,
          "sample target: classification expects a final-step readout");
  LossResult r = cross_entropy_loss(readout.col(0), target.label);
  return {r.value, std::move(r.g_pred)};
}

}  // namespace

double model_loss(const Model& model, const Mat& inputs,
                  const SampleTarget& target, RunMode mode,
                  const DropoutMask* mask) {
  ModelForward fwd = model_forward(model, inputs, mode, mask, false);
  return eval_sample_loss(model, fwd.readout, target).value;
}

SampleGrads model_loss_grads(const Model& model, const Mat& inputs,
                             const SampleTarget& target, RunMode mode,
                             const DropoutMask* mask, bool store) {
  ModelForward fwd = model_forward(model, inputs, mode, mask, store);
  LossEval loss = eval_sample_loss(model, fwd.readout, target);
  ReadoutGrads ro = readout_backward(model, fwd.cache, loss.g_readout);
  SampleGrads out;
  out.loss = loss.value;
  out.g_W = std::move(ro.g_W);
  out.g_b = std::move(ro.g_b);
  out.model = model_backward(model, fwd.cache, ro.upstream_top);
  return out;
}

std::vector<TensorRef> param_refs(Model& model) {
  std::vector<TensorRef> refs;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    LayerParams& p = model.layers[i];
    const std::string base = "layer" + std::to_string(i + 1) + ".";
    refs.push_back({base + "w", p.w.data(), p.w.size()});
    refs.push_back({base + "V", p.V.data(), p.V.size()});
    refs.push_back({base + "b", p.b.data(), p.b.size()});
    refs.push_back({base + "c", p.c.data(), p.c.size()});
    if (p.lambda)
      refs.push_back({base + "lambda", p.lambda->data(), p.lambda->size()});
  }
  refs.push_back({"readout.W", model.readout_W.data(), model.readout_W.size()});
  refs.push_back({"readout.b", model.readout_b.data(), model.readout_b.size()});
  return refs;
}

std::vector<TensorRef> grad_refs(const Model& model, ModelGrads& grads, Mat& g_W,
                                 Vec& g_b) {
  require(grads.layers.size() == model.layers.size(),
          "grad_refs: gradient layer count does not match model");
  std::vector<TensorRef> refs;
  for (size_t i = 0; i < grads.layers.size(); ++i) {
    LayerGrads& g = grads.layers[i];
    const std::string base = "layer" + std::to_string(i + 1) + ".";
    refs.push_back({base + "w", g.g_w.data(), g.g_w.size()});
    refs.push_back({base + "V", g.g_V.data(), g.g_V.size()});
    refs.push_back({base + "b", g.g_b.data(), g.g_b.size()});
    refs.push_back({base + "c", g.g_c.data(), g.g_c.size()});
    if (model.layers[i].lambda) {
      require(g.g_lambda.has_value(), "grad_refs: missing lambda gradient");
      refs.push_back({base + "lambda", g.g_lambda->data(), g.g_lambda->size()});
    }
  }
  refs.push_back({"readout.W", g_W.data(), g_W.size()});
  refs.push_back({"readout.b", g_b.data(), g_b.size()});
  return refs;
}

}  // namespace unicornn
