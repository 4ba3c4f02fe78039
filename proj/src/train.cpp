#include "unicornn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "unicornn/engine.hpp"
#include "unicornn/rng.hpp"
#include "unicornn/threads.hpp"

namespace unicornn {

namespace {

std::vector<Index> seeded_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

void accumulate_grads(BatchGrads& into, const BatchGrads& part) {
  if (into.model.layers.empty()) {
    into = part;
    return;
  }
  into.loss_sum += part.loss_sum;
  into.g_W += part.g_W;
  into.g_b += part.g_b;
  for (size_t l = 0; l < into.model.layers.size(); ++l) {
    LayerGrads& a = into.model.layers[l];
    const LayerGrads& b = part.model.layers[l];
    a.g_w += b.g_w;
    a.g_b += b.g_b;
    a.g_c += b.g_c;
    a.g_V += b.g_V;
    if (a.g_lambda) *a.g_lambda += *b.g_lambda;
  }
}

void scale_grads(BatchGrads& g, double s) {
  g.loss_sum *= s;
  g.g_W *= s;
  g.g_b *= s;
  for (LayerGrads& lg : g.model.layers) {
    lg.g_w *= s;
    lg.g_b *= s;
    lg.g_c *= s;
    lg.g_V *= s;
    if (lg.g_lambda) *lg.g_lambda *= s;
  }
}

bool params_finite(const Model& model) {
  for (const LayerParams& p : model.layers) {
    if (!p.w.isFinite().all() || !p.b.isFinite().all() ||
        !p.c.isFinite().all() || !p.V.array().isFinite().all())
      return false;
    if (p.lambda && !p.lambda->array().isFinite().all()) return false;
  }
  return model.readout_W.array().isFinite().all() &&
         model.readout_b.array().isFinite().all();
}

// Gradients (summed) of one mini-batch, sharded across threads with a
// shard-ordered reduction so results are repeatable for a fixed thread count.
BatchGrads batch_gradients(const Model& model, const SequenceDataset& data,
                           const std::vector<Index>& batch_idx,
                           std::uint64_t mask_seed, int threads) {
  const Index B = static_cast<Index>(batch_idx.size());
  const bool masking = model.config.dropout > 0.0 && model.config.L > 1;
  BatchMasks all_masks;
  if (masking) all_masks = make_batch_masks(model.config, B, mask_seed);

  const auto ranges = shard_ranges(B, threads);
  std::vector<BatchGrads> parts(ranges.size());
  parallel_shards(B, threads, [&](int s, Index begin, Index end) {
    if (begin == end) return;
    std::vector<Index> idx(batch_idx.begin() + begin, batch_idx.begin() + end);
    Batch shard = make_batch(data, idx);
    BatchMasks shard_masks;
    if (masking) {
      shard_masks.masks.reserve(all_masks.masks.size());
      for (const Mat& mk : all_masks.masks)
        shard_masks.masks.push_back(mk.middleCols(begin, end - begin));
    }
    parts[static_cast<size_t>(s)] = engine_loss_grads(
        model, shard, masking ? &shard_masks : nullptr, false);
  });

  BatchGrads total;
  for (const BatchGrads& part : parts)
    if (part.g_W.size() > 0) accumulate_grads(total, part);
  return total;
}

}  // namespace

EvalSummary evaluate(const Model& model, const SequenceDataset& data,
                     int batch_size, int threads) {
  model.validate();
  data.validate();
  require(batch_size >= 1, "evaluate: batch_size must be >= 1");
  const Index n = data.size();
  std::vector<std::pair<Index, Index>> chunks;
  for (Index start = 0; start < n; start += batch_size)
    chunks.emplace_back(start, std::min<Index>(start + batch_size, n));

  const int T = resolve_threads(threads);
  std::vector<EvalStats> parts(chunks.size());
  parallel_shards(static_cast<Index>(chunks.size()), T,
                  [&](int, Index begin, Index end) {
                    for (Index c = begin; c < end; ++c) {
                      std::vector<Index> idx;
                      for (Index i = chunks[static_cast<size_t>(c)].first;
                           i < chunks[static_cast<size_t>(c)].second; ++i)
                        idx.push_back(i);
                      parts[static_cast<size_t>(c)] =
                          engine_eval(model, make_batch(data, idx));
                    }
                  });
  EvalStats total;
  for (const EvalStats& part : parts) total.accumulate(part);

  EvalSummary out;
  out.mean_loss = total.loss_sum / static_cast<double>(n);
  if (data.classification()) {
    out.metric = total.correct / static_cast<double>(n);
  } else {
    if (total.sq_tgt_sum == 0.0)
      throw std::domain_error("evaluate: regression target is identically zero");
    out.metric = std::sqrt(total.sq_err_sum / total.sq_tgt_sum);
  }
  return out;
}

FitResult fit(const Model& initial, const SequenceDataset& train_data,
              const SequenceDataset& valid_data, const TrainConfig& tcfg) {
  initial.validate();
  tcfg.validate();
  train_data.validate();
  valid_data.validate();
  const bool cls = train_data.classification();
  const int T = resolve_threads(tcfg.threads);

  Model model = initial;
  std::vector<TensorRef> params = param_refs(model);
  OptimState opt = OptimState::make(params, tcfg.lr);

  FitResult res;
  res.best = model;
  Model last_finite = model;
  double best_metric = cls ? -1.0 : std::numeric_limits<double>::infinity();
  const Index n = train_data.size();

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (tcfg.lr_drop_epoch > 0 && epoch == tcfg.lr_drop_epoch)
      opt.lr /= tcfg.lr_drop_factor;

    const std::vector<Index> perm = seeded_permutation(
        n, mix_seed(mix_seed(tcfg.seed, 0x7368756666ULL),
                    static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    bool finite = true;
    Index batch_no = 0;
    for (Index start = 0; start < n && finite; start += tcfg.batch_size) {
      const Index end = std::min<Index>(start + tcfg.batch_size, n);
      const std::vector<Index> idx(perm.begin() + start, perm.begin() + end);
      const std::uint64_t mask_seed =
          mix_seed(mix_seed(tcfg.seed, 0x64726f70ULL),
                   (static_cast<std::uint64_t>(epoch) << 32) |
                       static_cast<std::uint64_t>(batch_no));
      ++batch_no;
      try {
        BatchGrads g = batch_gradients(model, train_data, idx, mask_seed, T);
        scale_grads(g, 1.0 / static_cast<double>(idx.size()));
        loss_sum += g.loss_sum * static_cast<double>(idx.size());
        if (!std::isfinite(g.loss_sum)) {
          finite = false;
          break;
        }
        if (tcfg.freeze_recurrent)
          for (LayerGrads& lg : g.model.layers) {
            lg.g_w.setZero();
            lg.g_b.setZero();
            lg.g_c.setZero();
            lg.g_V.setZero();
            if (lg.g_lambda) lg.g_lambda->setZero();
          }
        std::vector<TensorRef> grads = grad_refs(model, g.model, g.g_W, g.g_b);
        if (tcfg.clip_norm > 0.0) clip_gradients(grads, tcfg.clip_norm);
        if (tcfg.sgd)
          sgd_step(params, grads, opt.lr);
        else
          adam_step(params, grads, opt);
      } catch (const std::runtime_error&) {
        // reconstruction blowup or non-finite gradients
        finite = false;
      }
    }
    if (finite) finite = params_finite(model);
    if (!finite) {
      res.best = last_finite;
      res.diverged = true;
      return res;
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.lr = opt.lr;
    EvalSummary vs = evaluate(model, valid_data, tcfg.batch_size, T);
    row.valid_metric = vs.metric;
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.history.push_back(row);

    last_finite = model;
    const bool better =
        cls ? row.valid_metric > best_metric : row.valid_metric < best_metric;
    if (better) {
      best_metric = row.valid_metric;
      res.best = model;
      res.best_epoch = epoch;
    }
  }
  return res;
}

std::pair<SequenceDataset, SequenceDataset> split_dataset(
    const SequenceDataset& data, double fraction, std::uint64_t seed) {
  data.validate();
  require(fraction > 0.0 && fraction < 1.0,
          "split_dataset: fraction must be in (0,1)");
  const Index n = data.size();
  Index n_valid = static_cast<Index>(std::floor(fraction * static_cast<double>(n)));
  n_valid = std::max<Index>(1, std::min<Index>(n_valid, n - 1));
  const std::vector<Index> perm =
      seeded_permutation(n, mix_seed(seed, 0x73706c6974ULL));

  SequenceDataset train, valid;
  const bool cls = data.classification();
  for (Index i = 0; i < n; ++i) {
    SequenceDataset& dst = i < n - n_valid ? train : valid;
    const size_t s = static_cast<size_t>(perm[static_cast<size_t>(i)]);
    dst.inputs.push_back(data.inputs[s]);
    if (cls)
      dst.labels.push_back(data.labels[s]);
    else
      dst.targets.push_back(data.targets[s]);
  }
  return {std::move(train), std::move(valid)};
}

}  // namespace unicornn
