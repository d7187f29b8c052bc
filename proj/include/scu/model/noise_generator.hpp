#pragma once

// Latent-to-image generator: linear projection to a coarse [w0, s0, s0] map,
// stride-2 transposed convolutions up to the output size, tanh head. Used as
// the frozen flame-patch generator and as the unconditional baseline.

#include "scu/model/generator.hpp"

namespace scu {

struct NoiseGeneratorConfig {
  int latent_dim = 16;
  int out_size = 16;
  int base_width = 64;
  int out_channels = 3;

  // Coarsest resolution and number of doublings: halve while even and > 4.
  int start_size() const {
    int s = out_size;
    while (s % 2 == 0 && s > 4) s /= 2;
    return s;
  }
  int upsamples() const {
    int n = 0;
    for (int s = out_size; s % 2 == 0 && s > 4; s /= 2) ++n;
    return n;
  }
  int width(int level) const { return std::max(8, base_width >> level); }

  void validate() const {
    if (latent_dim <= 0 || out_size < 4 || base_width <= 0 || out_channels <= 0)
      throw ConfigError("noise generator: invalid configuration");
  }

  KeyValues to_manifest() const {
    return {{"kind", "noise_generator"},
            {"latent_dim", std::to_string(latent_dim)},
            {"out_size", std::to_string(out_size)},
            {"base_width", std::to_string(base_width)},
            {"out_channels", std::to_string(out_channels)}};
  }

  static NoiseGeneratorConfig from_manifest(const KeyValues& kv, const std::string& where) {
    if (require_key(kv, "kind", where) != "noise_generator") throw LoadError(where + ": not a noise-generator checkpoint");
    NoiseGeneratorConfig c;
    c.latent_dim = static_cast<int>(parse_int(require_key(kv, "latent_dim", where), where));
    c.out_size = static_cast<int>(parse_int(require_key(kv, "out_size", where), where));
    c.base_width = static_cast<int>(parse_int(require_key(kv, "base_width", where), where));
    c.out_channels = static_cast<int>(parse_int(require_key(kv, "out_channels", where), where));
    c.validate();
    return c;
  }
};

template <typename T>
ParamStore<T> init_noise_generator(const NoiseGeneratorConfig& cfg, std::uint64_t seed, double stddev = 0.02) {
  cfg.validate();
  Rng rng(seed, 0xF1A3);
  ParamStore<T> s;
  const int s0 = cfg.start_size();
  s.add("fc.weight", normal_tensor<T>({cfg.width(0) * s0 * s0, cfg.latent_dim}, stddev * 5, rng));
  s.add("fc.bias", Tensor<T>({cfg.width(0) * s0 * s0}));
  for (int i = 1; i <= cfg.upsamples(); ++i) {
    const std::string n = "up" + std::to_string(i) + ".deconv";
    s.add(n + ".weight", normal_tensor<T>({cfg.width(i - 1), cfg.width(i), 4, 4}, stddev, rng));
    s.add(n + ".bias", Tensor<T>({cfg.width(i)}));
  }
  s.add("out.conv.weight", normal_tensor<T>({cfg.out_channels, cfg.width(cfg.upsamples()), 3, 3}, stddev, rng));
  s.add("out.conv.bias", Tensor<T>({cfg.out_channels}));
  return s;
}

template <typename T>
ag::Var<T> noise_generator_forward(ParamBinder<T>& p, const NoiseGeneratorConfig& cfg, ag::Var<T> z) {
  if (z.value().numel() != static_cast<std::size_t>(cfg.latent_dim))
    throw DimensionError("noise generator: latent must have " + std::to_string(cfg.latent_dim) + " elements");
  auto fw = p("fc.weight");
  auto fb = p("fc.bias");
  const int s0 = cfg.start_size();
  auto h = ag::relu(ag::reshape(ag::linear(z, fw, &fb), {cfg.width(0), s0, s0}));
  for (int i = 1; i <= cfg.upsamples(); ++i) {
    const std::string n = "up" + std::to_string(i) + ".deconv";
    auto w = p(n + ".weight");
    auto b = p(n + ".bias");
    h = ag::relu(ag::instance_norm(ag::conv_transpose2d(h, w, &b, 2, 1)));
  }
  return ag::tanh(conv_layer(p, "out.conv", h, 1, 1));
}

// Deterministic image for latent z; never records gradients.
template <typename T>
Tensor<T> noise_generate(const Tensor<T>& z, const ParamStore<T>& params, const NoiseGeneratorConfig& cfg) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return noise_generator_forward(p, cfg, tape.constant(z)).value();
}

inline Tensor<float> sample_latent(int dim, Rng& rng) {
  Tensor<float> z({dim});
  for (auto& v : z.data) v = static_cast<float>(rng.normal());
  return z;
}

// The flame-patch generator: a noise generator whose parameters are frozen
// once pre-training finishes.
struct FlameGenerator {
  NoiseGeneratorConfig config;
  ParamStore<float> params;

  ImageTensor generate(const Tensor<float>& z) const { return noise_generate(z, params, config); }

  ImageTensor sample(Rng& rng) const { return generate(sample_latent(config.latent_dim, rng)); }

  void save(const fs::path& dir) const { save_params(dir, params, config.to_manifest()); }

  static FlameGenerator load(const fs::path& dir) {
    FlameGenerator f;
    auto kv = load_params(dir, f.params);
    f.config = NoiseGeneratorConfig::from_manifest(kv, dir.string());
    return f;
  }
};

inline ImageTensor flame_generate(const Tensor<float>& z, const FlameGenerator& gen) { return gen.generate(z); }

}  // namespace scu
