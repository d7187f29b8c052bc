#pragma once

// Region-conditioned U-Net generator.
//
// Encoder level n (1..D) halves the resolution: enc1 at H/2 ... encD at H/2^D.
// A stride-1 bottleneck produces F_d^0. Decoder level n (1..D) doubles the
// resolution and computes
//
//   F_d^n = Decoder_n( concat( CBAM_enc(F_e), CBAM_dec(F_d^{n-1}) ) )
//
// where F_e is the encoder output at the same resolution as F_d^{n-1}
// (encoder level D-n+1). With D = 3 this places six CBAM blocks: three on
// the encoder side of the skips and three on the decoder side.

#include <set>

#include "scu/data/image.hpp"
#include "scu/model/cbam.hpp"

namespace scu {

struct GeneratorConfig {
  int in_channels = 6;
  int out_channels = 3;
  std::vector<int> widths{32, 64, 128};
  bool skips = true;
  bool cbam = true;
  int cbam_reduction = 4;
  int cbam_kernel = 7;
  int res_blocks = 0;  // residual blocks at the bottleneck (resnet-style encoder-decoder)

  int depth() const { return static_cast<int>(widths.size()); }

  int decoder_out(int n) const { return n < depth() ? widths[static_cast<std::size_t>(depth() - n - 1)] : widths[0]; }
  int decoder_prev(int n) const { return n == 1 ? widths.back() : decoder_out(n - 1); }
  int encoder_width(int level) const { return widths[static_cast<std::size_t>(level - 1)]; }
  int decoder_in(int n) const { return (skips ? encoder_width(depth() - n + 1) : 0) + decoder_prev(n); }

  void validate() const {
    if (widths.empty() || depth() > 5) throw ConfigError("generator: depth must be between 1 and 5");
    for (int w : widths)
      if (w <= 0) throw ConfigError("generator: widths must be positive");
    if (in_channels <= 0 || out_channels <= 0 || res_blocks < 0) throw ConfigError("generator: invalid channel counts");
    if (cbam)
      for (int n = 1; n <= depth(); ++n) {
        CbamConfig{encoder_width(depth() - n + 1), cbam_reduction, cbam_kernel}.validate();
        CbamConfig{decoder_prev(n), cbam_reduction, cbam_kernel}.validate();
      }
  }

  void require_input(const Shape& s) const {
    const int m = 1 << depth();
    if (s.size() != 3 || s[0] != in_channels)
      throw DimensionError("generator: expected [" + std::to_string(in_channels) + ",H,W] input, got " + shape_str(s));
    if (s[1] % m != 0 || s[2] % m != 0)
      throw DimensionError("generator: spatial size " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                           " not divisible by 2^depth = " + std::to_string(m));
  }

  KeyValues to_manifest() const {
    std::string ws;
    for (std::size_t i = 0; i < widths.size(); ++i) ws += (i ? "," : "") + std::to_string(widths[i]);
    return {{"kind", "generator"},
            {"in_channels", std::to_string(in_channels)},
            {"out_channels", std::to_string(out_channels)},
            {"widths", ws},
            {"skips", skips ? "1" : "0"},
            {"cbam", cbam ? "1" : "0"},
            {"cbam_reduction", std::to_string(cbam_reduction)},
            {"cbam_kernel", std::to_string(cbam_kernel)},
            {"res_blocks", std::to_string(res_blocks)}};
  }

  static GeneratorConfig from_manifest(const KeyValues& kv, const std::string& where) {
    if (require_key(kv, "kind", where) != "generator") throw LoadError(where + ": not a generator checkpoint");
    GeneratorConfig c;
    c.in_channels = static_cast<int>(parse_int(require_key(kv, "in_channels", where), where));
    c.out_channels = static_cast<int>(parse_int(require_key(kv, "out_channels", where), where));
    c.widths.clear();
    std::stringstream ss(require_key(kv, "widths", where));
    for (std::string w; std::getline(ss, w, ',');) c.widths.push_back(static_cast<int>(parse_int(w, where)));
    c.skips = require_key(kv, "skips", where) == "1";
    c.cbam = require_key(kv, "cbam", where) == "1";
    c.cbam_reduction = static_cast<int>(parse_int(require_key(kv, "cbam_reduction", where), where));
    c.cbam_kernel = static_cast<int>(parse_int(require_key(kv, "cbam_kernel", where), where));
    c.res_blocks = static_cast<int>(parse_int(require_key(kv, "res_blocks", where), where));
    c.validate();
    return c;
  }
};

namespace names {
inline std::string enc(int n) { return "enc" + std::to_string(n) + ".conv"; }
inline std::string dec(int n) { return "dec" + std::to_string(n) + ".deconv"; }
inline std::string cbam_enc(int level) { return "cbam.enc" + std::to_string(level); }
inline std::string cbam_dec(int n) { return "cbam.dec" + std::to_string(n); }
}  // namespace names

template <typename T>
ParamStore<T> init_generator(const GeneratorConfig& cfg, std::uint64_t seed, double stddev = 0.02) {
  cfg.validate();
  Rng rng(seed, 0x6E4E);
  ParamStore<T> s;
  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    s.add(name + ".weight", normal_tensor<T>({cout, cin, k, k}, stddev, rng));
    s.add(name + ".bias", Tensor<T>({cout}));
  };
  const int d = cfg.depth();
  for (int n = 1; n <= d; ++n) conv(names::enc(n), cfg.encoder_width(n), n == 1 ? cfg.in_channels : cfg.encoder_width(n - 1), 4);
  conv("mid.conv", cfg.widths.back(), cfg.widths.back(), 3);
  for (int r = 1; r <= cfg.res_blocks; ++r) {
    conv("mid.res" + std::to_string(r) + ".conv1", cfg.widths.back(), cfg.widths.back(), 3);
    conv("mid.res" + std::to_string(r) + ".conv2", cfg.widths.back(), cfg.widths.back(), 3);
  }
  for (int n = 1; n <= d; ++n) {
    if (cfg.cbam) {
      if (cfg.skips) init_cbam(s, names::cbam_enc(d - n + 1), {cfg.encoder_width(d - n + 1), cfg.cbam_reduction, cfg.cbam_kernel}, rng, stddev);
      init_cbam(s, names::cbam_dec(n - 1), {cfg.decoder_prev(n), cfg.cbam_reduction, cfg.cbam_kernel}, rng, stddev);
    }
    s.add(names::dec(n) + ".weight", normal_tensor<T>({cfg.decoder_in(n), cfg.decoder_out(n), 4, 4}, stddev, rng));
    s.add(names::dec(n) + ".bias", Tensor<T>({cfg.decoder_out(n)}));
  }
  conv("out.conv", cfg.out_channels, cfg.decoder_out(d), 3);
  return s;
}

// Distinct CBAM parameter groups ("cbam.enc3", "cbam.dec0", ...).
template <typename T>
std::set<std::string> cbam_groups(const ParamStore<T>& s) {
  std::set<std::string> groups;
  for (const auto& [name, _] : s)
    if (name.rfind("cbam.", 0) == 0) groups.insert(name.substr(0, name.find('.', 5)));
  return groups;
}

template <typename T>
ag::Var<T> conv_layer(ParamBinder<T>& p, const std::string& name, ag::Var<T> x, int stride, int pad) {
  auto w = p(name + ".weight");
  auto b = p(name + ".bias");
  return ag::conv2d(x, w, &b, stride, pad);
}

// Decoder level n: F_d^n = Decoder_n(concat(CBAM(F_e), CBAM(F_d^{n-1}))).
// Without skips the encoder term is dropped; without CBAM the attention is identity.
template <typename T>
ag::Var<T> skip_fuse(ParamBinder<T>& p, const GeneratorConfig& cfg, int n, ag::Var<T> enc_feat, ag::Var<T> dec_prev) {
  auto dprev = cfg.cbam ? cbam(p, names::cbam_dec(n - 1), dec_prev) : dec_prev;
  ag::Var<T> joined = dprev;
  if (cfg.skips) {
    const auto &es = enc_feat.value().shape, &ds = dec_prev.value().shape;
    if (es.size() != 3 || ds.size() != 3 || es[1] != ds[1] || es[2] != ds[2])
      throw DimensionError("skip_fuse level " + std::to_string(n) + ": encoder " + shape_str(es) + " and decoder " +
                           shape_str(ds) + " are not spatially aligned");
    auto e = cfg.cbam ? cbam(p, names::cbam_enc(cfg.depth() - n + 1), enc_feat) : enc_feat;
    joined = ag::concat_channels(e, dprev);
  }
  auto w = p(names::dec(n) + ".weight");
  auto b = p(names::dec(n) + ".bias");
  if (joined.value().dim(0) != w.value().dim(0))
    throw DimensionError("skip_fuse level " + std::to_string(n) + ": decoder expects " + std::to_string(w.value().dim(0)) +
                         " input channels, got " + std::to_string(joined.value().dim(0)));
  return ag::relu(ag::instance_norm(ag::conv_transpose2d(joined, w, &b, 2, 1)));
}

template <typename T>
ag::Var<T> generator_forward(ParamBinder<T>& p, const GeneratorConfig& cfg, ag::Var<T> x) {
  cfg.require_input(x.value().shape);
  const T slope = T(0.2);
  const int d = cfg.depth();
  std::vector<ag::Var<T>> enc;
  ag::Var<T> h = x;
  for (int n = 1; n <= d; ++n) {
    h = conv_layer(p, names::enc(n), h, 2, 1);
    if (n > 1) h = ag::instance_norm(h);
    h = ag::leaky_relu(h, slope);
    enc.push_back(h);
  }
  h = ag::relu(ag::instance_norm(conv_layer(p, "mid.conv", h, 1, 1)));
  for (int r = 1; r <= cfg.res_blocks; ++r) {
    const std::string pre = "mid.res" + std::to_string(r);
    auto y = ag::relu(ag::instance_norm(conv_layer(p, pre + ".conv1", h, 1, 1)));
    y = ag::instance_norm(conv_layer(p, pre + ".conv2", y, 1, 1));
    h = ag::add(h, y);
  }
  for (int n = 1; n <= d; ++n) h = skip_fuse(p, cfg, n, enc[static_cast<std::size_t>(d - n)], h);
  return ag::tanh(conv_layer(p, "out.conv", h, 1, 1));
}

template <typename T>
Tensor<T> generator_forward(const Tensor<T>& x, const ParamStore<T>& params, const GeneratorConfig& cfg) {
  ag::Tape<T> tape(false);
  ParamBinder<T> p(tape, params, false);
  return generator_forward(p, cfg, tape.constant(x)).value();
}

// ---------------------------------------------------------------- six-channel input

struct ComposeOptions {
  double noise_std = 0.1;
  double blend = 1.0;  // 1 = the patch replaces the box contents
};

// Channels 0-2: the image. Channels 3-5: the image with the box replaced by
// clamp(blend * resize(patch) + (1 - blend) * image + N(0, noise_std)).
// Differentiable with respect to `image`; the patch and noise are constants.
template <typename T>
ag::Var<T> compose_six_channel(ag::Var<T> image, const RegionBox& box, const ImageTensor& patch,
                               const ComposeOptions& opt, std::uint64_t seed) {
  if (opt.noise_std < 0) throw ArgumentError("compose_six_channel: noise_std must be >= 0");
  if (opt.blend < 0 || opt.blend > 1) throw ArgumentError("compose_six_channel: blend must lie in [0, 1]");
  const auto& iv = image.value();
  if (iv.rank() != 3 || iv.dim(0) != 3) throw DimensionError("compose_six_channel: image must be [3,H,W]");
  if (patch.rank() != 3 || patch.dim(0) != 3 || patch.numel() == 0)
    throw DimensionError("compose_six_channel: patch must be a non-empty [3,h,w] image");
  const ImageSize size{iv.dim(1), iv.dim(2)};
  require_box_in(box, size, "compose_six_channel");
  auto& tape = *image.tape;

  const auto resized = resize_bilinear(patch, box.height(), box.width());
  Tensor<T> canvas({3, size.height, size.width});
  Rng rng(seed, 0x5EED);
  for (int c = 0; c < 3; ++c)
    for (int y = box.y_min; y < box.y_max; ++y)
      for (int x = box.x_min; x < box.x_max; ++x) {
        double v = opt.blend * resized(c, y - box.y_min, x - box.x_min);
        if (opt.noise_std > 0) v += rng.normal() * opt.noise_std;
        canvas(c, y, x) = static_cast<T>(v);
      }
  Tensor<T> inside_mask = box_to_mask(box, size).template cast<T>();
  Tensor<T> outside_mask = inside_mask;
  for (auto& v : outside_mask.data) v = T(1) - v;

  auto inner = tape.constant(std::move(canvas));
  if (opt.blend < 1) inner = ag::add(inner, ag::scale(image, static_cast<T>(1 - opt.blend)));
  inner = ag::clamp(inner, T(-1), T(1));
  auto guidance = ag::add(ag::mul_spatial(image, tape.constant(std::move(outside_mask))),
                          ag::mul_spatial(inner, tape.constant(std::move(inside_mask))));
  return ag::concat_channels(image, guidance);
}

inline ImageTensor compose_six_channel(const ImageTensor& image, const RegionBox& box, const ImageTensor& patch,
                                       double noise_std, std::uint64_t seed, double blend = 1.0) {
  ag::Tape<float> tape(false);
  return compose_six_channel(tape.constant(image), box, patch, ComposeOptions{noise_std, blend}, seed).value();
}

// Constant patch holding the mean colour of the image outside the box; the
// guidance used when translating towards the non-fire domain.
inline ImageTensor mean_background_patch(const ImageTensor& image, const RegionBox& box, int p) {
  require_box_in(box, size_of(image), "mean_background_patch");
  ImageTensor patch({3, p, p});
  const long n = static_cast<long>(image.dim(1)) * image.dim(2) - box.area();
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (int y = 0; y < image.dim(1); ++y)
      for (int x = 0; x < image.dim(2); ++x)
        if (!box.contains(x, y)) s += image(c, y, x);
    const float m = n > 0 ? static_cast<float>(s / n) : 0.0f;
    for (int i = 0; i < p * p; ++i) patch.data[static_cast<std::size_t>(c * p * p + i)] = m;
  }
  return patch;
}

}  // namespace scu
