#pragma once

// Two discriminator families:
//   patchgan - stacked stride-2 4x4 convs and a 3x3 one-channel head, giving a
//              [1, H/2^L, W/2^L] grid of local real/fake scores;
//   region   - the same conv stack on a fixed-size crop, global average
//              pooling and a linear head to one scalar score.

#include "scu/model/generator.hpp"

namespace scu {

enum class DiscKind { patchgan, region };

inline std::string to_string(DiscKind k) { return k == DiscKind::patchgan ? "patchgan" : "region"; }

struct DiscriminatorConfig {
  DiscKind kind = DiscKind::patchgan;
  int in_channels = 3;
  std::vector<int> widths{32, 64, 128};
  int input_size = 32;         // region kind: expected crop side
  bool instance_norm = false;  // on every conv but the first

  static DiscriminatorConfig patchgan() { return {DiscKind::patchgan, 3, {32, 64, 128}, 0, false}; }
  static DiscriminatorConfig region(int crop = 32) { return {DiscKind::region, 3, {32, 64, 128}, crop, true}; }

  int downsampling() const { return 1 << widths.size(); }

  void validate() const {
    if (widths.empty()) throw ConfigError("discriminator: needs at least one conv layer");
    if (kind == DiscKind::region && (input_size < downsampling() || input_size % downsampling() != 0))
      throw ConfigError("discriminator: region crop size must be a multiple of " + std::to_string(downsampling()));
  }

  KeyValues to_manifest() const {
    std::string ws;
    for (std::size_t i = 0; i < widths.size(); ++i) ws += (i ? "," : "") + std::to_string(widths[i]);
    return {{"kind", to_string(kind)},
            {"in_channels", std::to_string(in_channels)},
            {"widths", ws},
            {"input_size", std::to_string(input_size)},
            {"instance_norm", instance_norm ? "1" : "0"}};
  }

  static DiscriminatorConfig from_manifest(const KeyValues& kv, const std::string& where) {
    DiscriminatorConfig c;
    const auto& kind = require_key(kv, "kind", where);
    if (kind == "patchgan")
      c.kind = DiscKind::patchgan;
    else if (kind == "region")
      c.kind = DiscKind::region;
    else
      throw LoadError(where + ": not a discriminator checkpoint (kind=" + kind + ")");
    c.in_channels = static_cast<int>(parse_int(require_key(kv, "in_channels", where), where));
    c.widths.clear();
    std::stringstream ss(require_key(kv, "widths", where));
    for (std::string w; std::getline(ss, w, ',');) c.widths.push_back(static_cast<int>(parse_int(w, where)));
    c.input_size = static_cast<int>(parse_int(require_key(kv, "input_size", where), where));
    c.instance_norm = require_key(kv, "instance_norm", where) == "1";
    c.validate();
    return c;
  }
};

template <typename T>
ParamStore<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed, double stddev = 0.02) {
  cfg.validate();
  Rng rng(seed, 0xD15C);
  ParamStore<T> s;
  int cin = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const std::string n = "conv" + std::to_string(i + 1);
    s.add(n + ".weight", normal_tensor<T>({cfg.widths[i], cin, 4, 4}, stddev, rng));
    s.add(n + ".bias", Tensor<T>({cfg.widths[i]}));
    cin = cfg.widths[i];
  }
  if (cfg.kind == DiscKind::patchgan) {
    s.add("head.weight", normal_tensor<T>({1, cin, 3, 3}, stddev, rng));
    s.add("head.bias", Tensor<T>({1}));
  } else {
    s.add("head.weight", normal_tensor<T>({1, cin}, stddev, rng));
    s.add("head.bias", Tensor<T>({1}));
  }
  return s;
}

template <typename T>
ag::Var<T> disc_features(ParamBinder<T>& p, const DiscriminatorConfig& cfg, ag::Var<T> x) {
  auto h = x;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    h = conv_layer(p, "conv" + std::to_string(i + 1), h, 2, 1);
    if (i > 0 && cfg.instance_norm) h = ag::instance_norm(h);
    h = ag::leaky_relu(h, T(0.2));
  }
  return h;
}

// [C,H,W] -> [1, H/2^L, W/2^L] unbounded scores.
template <typename T>
ag::Var<T> patchgan_forward(ParamBinder<T>& p, const DiscriminatorConfig& cfg, ag::Var<T> image) {
  const auto& s = image.value().shape;
  const int m = cfg.downsampling();
  if (s.size() != 3 || s[0] != cfg.in_channels || s[1] % m != 0 || s[2] % m != 0 || s[1] < m || s[2] < m)
    throw DimensionError("patchgan: input " + shape_str(s) + " must be [" + std::to_string(cfg.in_channels) +
                         ",H,W] with H, W divisible by " + std::to_string(m));
  return conv_layer(p, "head", disc_features(p, cfg, image), 1, 1);
}

// [C, n, n] crop -> [1] score.
template <typename T>
ag::Var<T> region_disc_forward(ParamBinder<T>& p, const DiscriminatorConfig& cfg, ag::Var<T> crop) {
  const Shape want{cfg.in_channels, cfg.input_size, cfg.input_size};
  if (crop.value().shape != want)
    throw DimensionError("region discriminator: expected crop " + shape_str(want) + ", got " + shape_str(crop.value().shape));
  auto pooled = ag::spatial_mean(disc_features(p, cfg, crop));
  auto w = p("head.weight");
  auto b = p("head.bias");
  return ag::linear(pooled, w, &b);
}

template <typename T>
ag::Var<T> discriminator_forward(ParamBinder<T>& p, const DiscriminatorConfig& cfg, ag::Var<T> x) {
  return cfg.kind == DiscKind::patchgan ? patchgan_forward(p, cfg, x) : region_disc_forward(p, cfg, x);
}

template <typename T>
Tensor<T> patchgan_forward(const Tensor<T>& image, const ParamStore<T>& params, const DiscriminatorConfig& cfg) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return patchgan_forward(p, cfg, tape.constant(image)).value();
}

template <typename T>
T region_disc_forward(const Tensor<T>& crop, const ParamStore<T>& params, const DiscriminatorConfig& cfg) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return region_disc_forward(p, cfg, tape.constant(crop)).item();
}

// Bilinear resize of the box contents to out_h x out_w; differentiable.
template <typename T>
ag::Var<T> crop_region(ag::Var<T> image, const RegionBox& box, int out_h, int out_w) {
  require_box_in(box, {image.value().dim(1), image.value().dim(2)}, "crop_region");
  auto c = ag::crop(image, box.y_min, box.x_min, box.y_max, box.x_max);
  if (box.height() == out_h && box.width() == out_w) return c;
  return ag::resize_bilinear(c, out_h, out_w);
}

inline ImageTensor crop_region(const ImageTensor& image, const RegionBox& box, int out_h = 32, int out_w = 32) {
  ag::Tape<float> tape(false);
  return crop_region(tape.constant(image), box, out_h, out_w).value();
}

}  // namespace scu
