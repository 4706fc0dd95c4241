#include <cmath>

#include "syllabion/error.hpp"
#include "syllabion/neural.hpp"

namespace syllabion {

namespace {

// Std-dev for re-initialized blocks; other blocks use Xavier-normal.
constexpr double kReinitStd = 0.02;

std::string block_prefix(const std::string& prefix, std::size_t i) {
  return prefix + ".layers." + std::to_string(i);
}

}  // namespace

void EncoderConfig::validate() const {
  check(input_dim >= 1, "encoder: input_dim must be >= 1");
  check(d_model >= 1 && n_heads >= 1, "encoder: d_model and n_heads must be >= 1");
  check(d_model % n_heads == 0, "encoder: d_model must be divisible by n_heads");
  check(d_ff >= 1, "encoder: d_ff must be >= 1");
  check(reinit_last_n <= n_layers, "encoder: reinit_last_n must not exceed n_layers");
}

Matrix sinusoidal_positions(std::size_t frames, std::size_t d_model) {
  Matrix pe(frames, d_model);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe(t, i) = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < d_model) pe(t, i + 1) = std::cos(static_cast<double>(t) * freq);
    }
  return pe;
}

Encoder Encoder::create(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
                        std::mt19937_64& rng) {
  cfg.validate();
  Encoder e;
  e.cfg_ = cfg;
  e.proj_ = Linear::create(store, prefix + ".input_proj", cfg.input_dim, cfg.d_model, rng,
                           InitSpec{0.0, !cfg.freeze_input_projection, false});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const bool reinit = i + cfg.reinit_last_n >= cfg.n_layers;
    const InitSpec init{reinit ? kReinitStd : 0.0, true, reinit};
    e.blocks_.push_back(
        EncoderBlock::create(store, block_prefix(prefix, i), cfg.d_model, cfg.n_heads, cfg.d_ff, rng, init));
  }
  return e;
}

Encoder Encoder::bind(const ParamStore& store, const std::string& prefix, const EncoderConfig& cfg) {
  cfg.validate();
  Encoder e;
  e.cfg_ = cfg;
  e.proj_ = Linear::bind(store, prefix + ".input_proj");
  check(e.proj_.in_dim() == cfg.input_dim && e.proj_.out_dim() == cfg.d_model,
        "encoder: stored input projection does not match config");
  for (std::size_t i = 0; i < cfg.n_layers; ++i)
    e.blocks_.push_back(EncoderBlock::bind(store, block_prefix(prefix, i), cfg.n_heads));
  return e;
}

Encoder::Cache Encoder::forward(const ParamStore& p, const Matrix& x, std::optional<std::size_t> up_to) const {
  const std::size_t last = up_to.value_or(cfg_.n_layers);
  check(last <= cfg_.n_layers, "encoder: layer " + std::to_string(last) + " out of range [0, " +
                                   std::to_string(cfg_.n_layers) + "]");
  check(x.rows() >= 1, "encoder: empty input");
  Cache cache;
  cache.input = x;
  cache.layer_outputs.reserve(last + 1);
  cache.blocks.resize(last);
  cache.layer_outputs.push_back(proj_.forward(p, x) + sinusoidal_positions(x.rows(), cfg_.d_model));
  for (std::size_t l = 0; l < last; ++l)
    cache.layer_outputs.push_back(blocks_[l].forward(p, cache.layer_outputs.back(), &cache.blocks[l]));
  return cache;
}

Matrix Encoder::backward(const ParamStore& p, const Cache& cache, const std::vector<Matrix>& layer_grads,
                         Grads* g) const {
  const std::size_t last = cache.blocks.size();
  check(layer_grads.size() <= last + 1, "encoder: more layer gradients than computed layers");
  auto grad_for = [&](std::size_t l) -> const Matrix* {
    return l < layer_grads.size() && !layer_grads[l].empty() ? &layer_grads[l] : nullptr;
  };
  Matrix d(cache.input.rows(), cfg_.d_model);
  for (std::size_t l = last; l >= 1; --l) {
    if (const Matrix* lg = grad_for(l)) d += *lg;
    d = blocks_[l - 1].backward(p, cache.blocks[l - 1], d, g);
  }
  if (const Matrix* lg = grad_for(0)) d += *lg;
  return proj_.backward(p, cache.input, d, g);
}

FrameFeatures encoder_forward(const ParamStore& p, const std::string& prefix, const EncoderConfig& cfg,
                              const FrameFeatures& features, std::size_t layer) {
  check(layer <= cfg.n_layers, "encoder: layer " + std::to_string(layer) + " out of range [0, " +
                                   std::to_string(cfg.n_layers) + "]");
  const Encoder enc = Encoder::bind(p, prefix, cfg);
  auto cache = enc.forward(p, features.data, layer);
  return FrameFeatures{std::move(cache.layer_outputs.back()), features.frame_rate};
}

std::vector<FrameFeatures> encoder_forward_all(const ParamStore& p, const std::string& prefix,
                                               const EncoderConfig& cfg, const FrameFeatures& features) {
  const Encoder enc = Encoder::bind(p, prefix, cfg);
  auto cache = enc.forward(p, features.data);
  std::vector<FrameFeatures> out;
  out.reserve(cache.layer_outputs.size());
  for (auto& m : cache.layer_outputs) out.push_back(FrameFeatures{std::move(m), features.frame_rate});
  return out;
}

std::size_t encoder_param_count(const EncoderConfig& cfg) {
  const std::size_t d = cfg.d_model, f = cfg.d_ff;
  const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  return cfg.input_dim * d + d + cfg.n_layers * block;
}

}  // namespace syllabion
