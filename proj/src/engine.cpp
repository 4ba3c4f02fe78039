#include "unicornn/engine.hpp"

#include "unicornn/activations.hpp"
#include "unicornn/loss.hpp"
#include "unicornn/rng.hpp"
#include "unicornn/storage_meter.hpp"

namespace unicornn {

Batch make_batch(const SequenceDataset& data, const std::vector<Index>& idx) {
  data.validate();
  require(!idx.empty(), "make_batch: empty index list");
  const Index B = static_cast<Index>(idx.size());
  const Index N = data.steps();
  const Index d = data.d();
  Batch batch;
  batch.B = B;
  batch.N = N;
  batch.inputs.resize(d, N * B);
  const bool cls = data.classification();
  if (cls)
    batch.labels.resize(B);
  else
    batch.targets.resize(data.targets.front().rows(), N * B);
  for (Index b = 0; b < B; ++b) {
    const Index s = idx[static_cast<size_t>(b)];
    require(s >= 0 && s < data.size(), "make_batch: index out of range");
    for (Index n = 0; n < N; ++n)
      batch.inputs.col(n * B + b) = data.inputs[static_cast<size_t>(s)].col(n);
    if (cls) {
      batch.labels[static_cast<size_t>(b)] = data.labels[static_cast<size_t>(s)];
    } else {
      for (Index n = 0; n < N; ++n)
        batch.targets.col(n * B + b) =
            data.targets[static_cast<size_t>(s)].col(n);
    }
  }
  return batch;
}

BatchMasks make_batch_masks(const ModelConfig& config, Index B,
                            std::uint64_t seed) {
  config.validate();
  require(B >= 1, "make_batch_masks: need B >= 1");
  BatchMasks out;
  if (config.L < 2) return out;
  const double p = config.dropout;
  const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  Rng rng(mix_seed(seed, 0x626d61736bULL));
  out.masks.resize(config.L - 1);
  for (Mat& mk : out.masks) {
    mk.resize(config.m, B);
    for (Index b = 0; b < B; ++b)
      for (Index i = 0; i < config.m; ++i)
        mk(i, b) = rng.uniform01() < p ? 0.0 : keep_scale;
  }
  return out;
}

namespace {

// One sequence-mask vector broadcast across a full m x (N*B) buffer: block n
// of the result is block n of `raw` scaled elementwise by the m x B mask.
Mat apply_mask_blocks(const Mat& raw, const Mat& mask, Index B, Index N) {
  Mat out(raw.rows(), raw.cols());
  for (Index n = 0; n < N; ++n)
    out.middleCols(n * B, B) =
        raw.middleCols(n * B, B).cwiseProduct(mask);
  return out;
}

struct LayerRun {
  Mat outputs;  // m x (N*B)
  Mat y_final;  // m x B
  Mat z_final;
  Mat y_traj;   // m x (N+1)*B when stored
  Mat z_traj;
  StateAlloc traj_meter;
};

LayerRun run_layer_forward(const LayerParams& p, const Mat& drive, double dt,
                           double alpha, Index B, Index N, bool store) {
  const Index m = p.m();
  const Arr D = detail::effective_step(p.c, dt);
  LayerRun run;
  run.outputs.resize(m, N * B);
  if (store) {
    run.y_traj = Mat::Zero(m, (N + 1) * B);
    run.z_traj = Mat::Zero(m, (N + 1) * B);
    run.traj_meter = StateAlloc(2 * m * (N + 1) * B);
  }
  StateAlloc live(2 * m * B);
  Mat Y = Mat::Zero(m, B);
  Mat Z = Mat::Zero(m, B);
  for (Index n = 1; n <= N; ++n) {
    const ArrXX A = ((Y.array().colwise() * p.w) +
                     drive.middleCols((n - 1) * B, B).array())
                        .colwise() +
                    p.b;
    Z.array() -= ((A.tanh() + alpha * Y.array()).colwise() * D);
    Y.array() += (Z.array().colwise() * D);
    run.outputs.middleCols((n - 1) * B, B) = Y;
    if (store) {
      run.y_traj.middleCols(n * B, B) = Y;
      run.z_traj.middleCols(n * B, B) = Z;
    }
  }
  run.y_final = std::move(Y);
  run.z_final = std::move(Z);
  return run;
}

struct LayerCoreGrads {
  Arr g_w, g_b, g_c;
  Mat psi;  // m x (N*B)
};

LayerCoreGrads run_layer_backward(const LayerParams& p, const Mat& drive,
                                  const Mat& upstream, double dt, double alpha,
                                  Index B, Index N, const LayerRun& run,
                                  bool stored) {
  const Index m = p.m();
  const Arr D = detail::effective_step(p.c, dt);
  LayerCoreGrads out;
  out.g_w = Arr::Zero(m);
  out.g_b = Arr::Zero(m);
  Arr g_D = Arr::Zero(m);
  out.psi.resize(m, N * B);

  StateAlloc live_adjoint(2 * m * B);
  ArrXX gy = ArrXX::Zero(m, B);
  ArrXX gz = ArrXX::Zero(m, B);
  StateAlloc live_state(stored ? 0 : 2 * m * B);
  ArrXX Yn = run.y_final.array();
  ArrXX Zn = run.z_final.array();

  for (Index n = N; n >= 1; --n) {
    if (stored) {
      Yn = run.y_traj.middleCols(n * B, B).array();
      Zn = run.z_traj.middleCols(n * B, B).array();
    }
    gy += upstream.middleCols((n - 1) * B, B).array();
    const ArrXX gz_total = gz + gy.colwise() * D;
    const ArrXX y_prev = Yn - Zn.colwise() * D;
    const ArrXX A =
        ((y_prev.colwise() * p.w) + drive.middleCols((n - 1) * B, B).array())
            .colwise() +
        p.b;
    const ArrXX t = A.tanh();
    const ArrXX dtanh = 1.0 - t.square();
    const ArrXX psi = -(gz_total.colwise() * D) * dtanh;
    out.psi.middleCols((n - 1) * B, B) = psi.matrix();
    out.g_w += (psi * y_prev).rowwise().sum();
    out.g_b += psi.rowwise().sum();
    g_D += (gy * Zn - gz_total * (t + alpha * y_prev)).rowwise().sum();
    gy -= (gz_total.colwise() * D) * ((dtanh.colwise() * p.w) + alpha);
    gz = gz_total;
    if (!stored) {
      const ArrXX z_prev = Zn + (t + alpha * y_prev).colwise() * D;
      Yn = y_prev;
      Zn = z_prev;
      if (Yn.abs().maxCoeff() > 1e6 || Zn.abs().maxCoeff() > 1e6)
        throw DivergenceError(
            "reconstructed state exceeded 1e6 at step " + std::to_string(n - 1));
    }
  }
  out.g_c = g_D * dt * dsigma_hat(p.c);
  return out;
}

struct ForwardPass {
  std::vector<LayerRun> runs;       // per layer
  std::vector<Mat> masked;          // per layer, as consumers see them
  Mat pred;                         // out_dim x (N*B) or out_dim x B (final)
};

ForwardPass run_model_forward(const Model& model, const Batch& batch,
                              const BatchMasks* masks, bool store) {
  model.validate();
  const ModelConfig& cfg = model.config;
  const Index B = batch.B;
  const Index N = batch.N;
  require(batch.inputs.rows() == cfg.d && batch.inputs.cols() == N * B,
          "engine: batch inputs must be d x (N*B)");
  const bool masking = masks != nullptr && cfg.dropout > 0.0 && cfg.L > 1;
  if (masking)
    require(static_cast<int>(masks->masks.size()) == cfg.L - 1,
            "engine: mask count does not match hidden interfaces");

  ForwardPass pass;
  pass.runs.resize(cfg.L);
  pass.masked.resize(cfg.L);
  for (int ell = 1; ell <= cfg.L; ++ell) {
    const LayerParams& p = model.layers[ell - 1];
    const Mat& below = ell == 1 ? batch.inputs : pass.masked[ell - 2];
    Mat drive = p.V * below;
    if (cfg.has_skip(ell))
      drive += *p.lambda * pass.masked[ell - cfg.skip - 1];
    pass.runs[ell - 1] =
        run_layer_forward(p, drive, cfg.dt[ell - 1], cfg.alpha, B, N, store);
    pass.masked[ell - 1] =
        masking && ell < cfg.L
            ? apply_mask_blocks(pass.runs[ell - 1].outputs,
                                masks->masks[ell - 1], B, N)
            : pass.runs[ell - 1].outputs;
  }

  const Mat& top = pass.masked[cfg.L - 1];
  if (cfg.readout == ReadoutMode::final_step) {
    pass.pred = model.readout_W * top.middleCols((N - 1) * B, B);
    pass.pred.colwise() += model.readout_b;
  } else {
    pass.pred = model.readout_W * top;
    pass.pred.colwise() += model.readout_b;
  }
  return pass;
}

// Sequences are independent, so a batch can be processed in column tiles and
// the per-sequence sums accumulated. Working-set size scales with the tile
// width instead of the batch width, which keeps the m x (N*tile) intermediates
// cache-resident for large batches. Fixed tile size keeps summation order,
// and therefore results, independent of how callers shard their batches.
constexpr Index kTileSeqs = 2;

Batch slice_batch(const Batch& batch, Index b0, Index bt) {
  Batch out;
  out.B = bt;
  out.N = batch.N;
  out.inputs.resize(batch.inputs.rows(), batch.N * bt);
  for (Index n = 0; n < batch.N; ++n)
    out.inputs.middleCols(n * bt, bt) =
        batch.inputs.middleCols(n * batch.B + b0, bt);
  if (batch.classification()) {
    out.labels.assign(batch.labels.begin() + b0,
                      batch.labels.begin() + b0 + bt);
  } else {
    out.targets.resize(batch.targets.rows(), batch.N * bt);
    for (Index n = 0; n < batch.N; ++n)
      out.targets.middleCols(n * bt, bt) =
          batch.targets.middleCols(n * batch.B + b0, bt);
  }
  return out;
}

BatchMasks slice_masks(const BatchMasks& masks, Index b0, Index bt) {
  BatchMasks out;
  out.masks.reserve(masks.masks.size());
  for (const Mat& mk : masks.masks) out.masks.push_back(mk.middleCols(b0, bt));
  return out;
}

BatchGrads engine_loss_grads_block(const Model& model, const Batch& batch,
                                   const BatchMasks* masks, bool store);

}  // namespace

BatchGrads engine_loss_grads(const Model& model, const Batch& batch,
                             const BatchMasks* masks, bool store) {
  if (batch.B <= kTileSeqs)
    return engine_loss_grads_block(model, batch, masks, store);
  BatchGrads total;
  bool first = true;
  for (Index b0 = 0; b0 < batch.B; b0 += kTileSeqs) {
    const Index bt = std::min(kTileSeqs, batch.B - b0);
    const Batch tile = slice_batch(batch, b0, bt);
    const BatchMasks tile_masks =
        masks != nullptr ? slice_masks(*masks, b0, bt) : BatchMasks{};
    BatchGrads part = engine_loss_grads_block(
        model, tile, masks != nullptr ? &tile_masks : nullptr, store);
    if (first) {
      total = std::move(part);
      first = false;
      continue;
    }
    total.loss_sum += part.loss_sum;
    total.g_W += part.g_W;
    total.g_b += part.g_b;
    for (std::size_t ell = 0; ell < total.model.layers.size(); ++ell) {
      LayerGrads& a = total.model.layers[ell];
      const LayerGrads& b = part.model.layers[ell];
      a.g_w += b.g_w;
      a.g_b += b.g_b;
      a.g_c += b.g_c;
      a.g_V += b.g_V;
      if (a.g_lambda) *a.g_lambda += *b.g_lambda;
    }
  }
  // g_x is per-tile layer-input gradient; batch callers only consume the
  // parameter gradients, so drop the stale first-tile slice.
  for (LayerGrads& g : total.model.layers) g.g_x.resize(0, 0);
  return total;
}

namespace {

BatchGrads engine_loss_grads_block(const Model& model, const Batch& batch,
                                   const BatchMasks* masks, bool store) {
  const ModelConfig& cfg = model.config;
  const Index B = batch.B;
  const Index N = batch.N;
  ForwardPass pass = run_model_forward(model, batch, masks, store);

  BatchGrads out;
  Mat g_pred;
  if (batch.classification()) {
    require(cfg.readout == ReadoutMode::final_step,
            "engine: classification expects a final-step readout");
    g_pred.resize(cfg.out_dim, B);
    for (Index b = 0; b < B; ++b) {
      LossResult r =
          cross_entropy_loss(pass.pred.col(b), batch.labels[static_cast<size_t>(b)]);
      out.loss_sum += r.value;
      g_pred.col(b) = r.g_pred;
    }
  } else {
    require(cfg.readout == ReadoutMode::per_step,
            "engine: regression expects a per-step readout");
    require(batch.targets.rows() == cfg.out_dim &&
                batch.targets.cols() == N * B,
            "engine: batch targets must be out_dim x (N*B)");
    g_pred = (pass.pred - batch.targets) / static_cast<double>(N);
    out.loss_sum = 0.5 * (pass.pred - batch.targets).squaredNorm() /
                   static_cast<double>(N);
  }

  // readout gradients and the top-layer upstream
  const Mat& top = pass.masked[cfg.L - 1];
  Mat upstream_top;
  if (cfg.readout == ReadoutMode::final_step) {
    out.g_W = g_pred * top.middleCols((N - 1) * B, B).transpose();
    out.g_b = g_pred.rowwise().sum();
    upstream_top = Mat::Zero(cfg.m, N * B);
    upstream_top.middleCols((N - 1) * B, B) =
        model.readout_W.transpose() * g_pred;
  } else {
    out.g_W = g_pred * top.transpose();
    out.g_b = g_pred.rowwise().sum();
    upstream_top = model.readout_W.transpose() * g_pred;
  }

  const bool masking =
      masks != nullptr && cfg.dropout > 0.0 && cfg.L > 1;
  out.model.layers.resize(cfg.L);
  std::vector<Mat> up(cfg.L);
  up[cfg.L - 1] = std::move(upstream_top);
  for (int ell = cfg.L; ell >= 1; --ell) {
    const LayerParams& p = model.layers[ell - 1];
    if (up[ell - 1].size() == 0) up[ell - 1] = Mat::Zero(cfg.m, N * B);
    const Mat& below = ell == 1 ? batch.inputs : pass.masked[ell - 2];
    Mat drive = p.V * below;
    if (cfg.has_skip(ell))
      drive += *p.lambda * pass.masked[ell - cfg.skip - 1];
    LayerCoreGrads core =
        run_layer_backward(p, drive, up[ell - 1], cfg.dt[ell - 1], cfg.alpha,
                           B, N, pass.runs[ell - 1], store);
    LayerGrads& g = out.model.layers[ell - 1];
    g.g_w = std::move(core.g_w);
    g.g_b = std::move(core.g_b);
    g.g_c = std::move(core.g_c);
    g.g_V = core.psi * below.transpose();
    g.g_x = p.V.transpose() * core.psi;
    if (cfg.has_skip(ell)) {
      g.g_lambda = core.psi * pass.masked[ell - cfg.skip - 1].transpose();
      Mat skip_down = p.lambda->transpose() * core.psi;
      if (masking)
        skip_down = apply_mask_blocks(skip_down,
                                      masks->masks[ell - cfg.skip - 1], B, N);
      const int src = ell - cfg.skip;
      if (up[src - 1].size() == 0) up[src - 1] = Mat::Zero(cfg.m, N * B);
      up[src - 1] += skip_down;
    }
    if (ell > 1) {
      Mat dense_down = g.g_x;
      if (masking)
        dense_down =
            apply_mask_blocks(dense_down, masks->masks[ell - 2], B, N);
      if (up[ell - 2].size() == 0) up[ell - 2] = Mat::Zero(cfg.m, N * B);
      up[ell - 2] += dense_down;
    }
  }
  return out;
}

}  // namespace

void EvalStats::accumulate(const EvalStats& other) {
  loss_sum += other.loss_sum;
  correct += other.correct;
  sq_err_sum += other.sq_err_sum;
  sq_tgt_sum += other.sq_tgt_sum;
  count += other.count;
}

namespace {

EvalStats engine_eval_block(const Model& model, const Batch& batch);

}  // namespace

EvalStats engine_eval(const Model& model, const Batch& batch) {
  if (batch.B <= kTileSeqs) return engine_eval_block(model, batch);
  EvalStats total;
  for (Index b0 = 0; b0 < batch.B; b0 += kTileSeqs) {
    const Index bt = std::min(kTileSeqs, batch.B - b0);
    total.accumulate(engine_eval_block(model, slice_batch(batch, b0, bt)));
  }
  return total;
}

namespace {

EvalStats engine_eval_block(const Model& model, const Batch& batch) {
  const ModelConfig& cfg = model.config;
  const Index B = batch.B;
  const Index N = batch.N;
  ForwardPass pass = run_model_forward(model, batch, nullptr, false);
  EvalStats stats;
  stats.count = B;
  if (batch.classification()) {
    require(cfg.readout == ReadoutMode::final_step,
            "engine: classification expects a final-step readout");
    for (Index b = 0; b < B; ++b) {
      const int label = batch.labels[static_cast<size_t>(b)];
      LossResult r = cross_entropy_loss(pass.pred.col(b), label);
      stats.loss_sum += r.value;
      Index argmax = 0;
      pass.pred.col(b).maxCoeff(&argmax);
      if (argmax == static_cast<Index>(label)) stats.correct += 1.0;
    }
  } else {
    require(cfg.readout == ReadoutMode::per_step,
            "engine: regression expects a per-step readout");
    const Mat err = pass.pred - batch.targets;
    stats.loss_sum = 0.5 * err.squaredNorm() / static_cast<double>(N);
    stats.sq_err_sum = err.squaredNorm();
    stats.sq_tgt_sum = batch.targets.squaredNorm();
  }
  return stats;
}

}  // namespace

}  // namespace unicornn
