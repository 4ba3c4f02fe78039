#include "unicornn/init.hpp"

#include <cmath>

#include "unicornn/rng.hpp"

namespace unicornn {

namespace {

double fan_in_bound(Index fan_in) {
  // uniform Kaiming bound with negative slope a = 8: 1 + a^2 = 65
  return std::sqrt(6.0 / (65.0 * static_cast<double>(fan_in)));
}

void fill_uniform(Rng& rng, double* data, Index size, double lo, double hi) {
  for (Index i = 0; i < size; ++i) data[i] = rng.uniform(lo, hi);
}

}  // namespace

Model init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x696e6974ULL));  // dedicated init stream

  Model model;
  model.config = config;
  model.layers.resize(config.L);
  for (int ell = 1; ell <= config.L; ++ell) {
    LayerParams& p = model.layers[ell - 1];
    const Index d_in = config.layer_in_dim(ell);
    p.w.resize(config.m);
    fill_uniform(rng, p.w.data(), config.m, 0.0, 1.0);
    p.b = Arr::Zero(config.m);
    p.c.resize(config.m);
    fill_uniform(rng, p.c.data(), config.m, -0.1, 0.1);
    p.V.resize(config.m, d_in);
    const double rv = fan_in_bound(d_in);
    fill_uniform(rng, p.V.data(), p.V.size(), -rv, rv);
    if (config.has_skip(ell)) {
      p.lambda.emplace(config.m, config.m);
      const double rl = fan_in_bound(config.m);
      fill_uniform(rng, p.lambda->data(), p.lambda->size(), -rl, rl);
    }
  }
  model.readout_W.resize(config.out_dim, config.m);
  const double rw = 1.0 / std::sqrt(static_cast<double>(config.m));
  fill_uniform(rng, model.readout_W.data(), model.readout_W.size(), -rw, rw);
  model.readout_b = Vec::Zero(config.out_dim);
  model.validate();
  return model;
}

}  // namespace unicornn
