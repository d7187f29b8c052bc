#pragma once

#include <array>

#include "scu/core/adam.hpp"
#include "scu/loss/losses.hpp"
#include "scu/model/discriminator.hpp"
#include "scu/model/noise_generator.hpp"

namespace scu {

enum class AblationVariant { lsgan_only, cyclegan, cyclegan_unet, cyclegan_unet_cbam, cyclegan_unet_bg_tr, scu_cgan };

// Table order of the ablation ladder.
inline constexpr std::array<AblationVariant, 6> kAblationOrder{
    AblationVariant::lsgan_only,         AblationVariant::cyclegan,           AblationVariant::cyclegan_unet,
    AblationVariant::cyclegan_unet_cbam, AblationVariant::cyclegan_unet_bg_tr, AblationVariant::scu_cgan};

inline std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::lsgan_only: return "lsgan_only";
    case AblationVariant::cyclegan: return "cyclegan";
    case AblationVariant::cyclegan_unet: return "cyclegan_unet";
    case AblationVariant::cyclegan_unet_cbam: return "cyclegan_unet_cbam";
    case AblationVariant::cyclegan_unet_bg_tr: return "cyclegan_unet_bg_tr";
    case AblationVariant::scu_cgan: return "scu_cgan";
  }
  return "?";
}

inline AblationVariant parse_variant(const std::string& s) {
  for (auto v : kAblationOrder)
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

// Components switched on by a variant.
struct VariantFeatures {
  bool conditional = true;  // false: unconditional noise -> image LSGAN
  bool skips = true;
  bool cbam = true;
  bool region_losses = true;  // target-region and background terms
};

inline VariantFeatures features_of(AblationVariant v) {
  switch (v) {
    case AblationVariant::lsgan_only: return {false, false, false, false};
    case AblationVariant::cyclegan: return {true, false, false, false};
    case AblationVariant::cyclegan_unet: return {true, true, false, false};
    case AblationVariant::cyclegan_unet_cbam: return {true, true, true, false};
    case AblationVariant::cyclegan_unet_bg_tr: return {true, true, false, true};
    case AblationVariant::scu_cgan: return {true, true, true, true};
  }
  return {};
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> parse_ints(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string w; std::getline(ss, w, ',');) out.push_back(static_cast<int>(parse_int(w, what)));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 1;
  int batch_size = 1;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  AblationVariant variant = AblationVariant::scu_cgan;
  int resolution = 64;
  AdvForm adv_form = AdvForm::least_squares;
  double noise_std = 0.1;
  std::vector<int> gen_widths{32, 64, 128};
  std::vector<int> disc_widths{32, 64, 128};
  int cbam_reduction = 4;
  int cbam_kernel = 7;
  int res_blocks = 2;  // resnet-style bottleneck of the cyclegan variant
  int crop_size = 32;
  int latent_dim = 16;  // lsgan_only
  long max_steps = 0;   // 0: epochs decide
  long checkpoint_every = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be > 0");
    if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
    if (max_steps < 0 || checkpoint_every < 0) throw ConfigError("max_steps and checkpoint_every must be >= 0");
    weights.validate();
    require_scene_size({resolution, resolution});
    generator().validate();
    patch_disc().validate();
    region_disc().validate();
  }

  GeneratorConfig generator() const {
    const auto f = features_of(variant);
    GeneratorConfig g;
    g.widths = gen_widths;
    g.skips = f.skips;
    g.cbam = f.cbam;
    g.cbam_reduction = cbam_reduction;
    g.cbam_kernel = cbam_kernel;
    g.res_blocks = variant == AblationVariant::cyclegan ? res_blocks : 0;
    return g;
  }

  DiscriminatorConfig patch_disc() const {
    auto d = DiscriminatorConfig::patchgan();
    d.widths = disc_widths;
    return d;
  }

  DiscriminatorConfig region_disc() const {
    auto d = DiscriminatorConfig::region(crop_size);
    d.widths = disc_widths;
    return d;
  }

  NoiseGeneratorConfig image_generator() const { return {latent_dim, resolution, gen_widths.back(), 3}; }

  AdamConfig adam_g() const { return {lr_g, beta1, beta2, 1e-8}; }
  AdamConfig adam_d() const { return {lr_d, beta1, beta2, 1e-8}; }

  KeyValues to_key_values() const {
    return {{"seed", std::to_string(seed)},
            {"epochs", std::to_string(epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"lr_g", format_number(lr_g)},
            {"lr_d", format_number(lr_d)},
            {"beta1", format_number(beta1)},
            {"beta2", format_number(beta2)},
            {"lambda_cyc", format_number(weights.cyc)},
            {"lambda_id", format_number(weights.id)},
            {"lambda_tr", format_number(weights.tr)},
            {"lambda_bg", format_number(weights.bg)},
            {"variant", to_string(variant)},
            {"resolution", std::to_string(resolution)},
            {"adv_form", to_string(adv_form)},
            {"noise_std", format_number(noise_std)},
            {"gen_widths", join_ints(gen_widths)},
            {"disc_widths", join_ints(disc_widths)},
            {"cbam_reduction", std::to_string(cbam_reduction)},
            {"cbam_kernel", std::to_string(cbam_kernel)},
            {"res_blocks", std::to_string(res_blocks)},
            {"crop_size", std::to_string(crop_size)},
            {"latent_dim", std::to_string(latent_dim)},
            {"max_steps", std::to_string(max_steps)},
            {"checkpoint_every", std::to_string(checkpoint_every)}};
  }

  // Applies the keys present in kv; unknown keys are rejected by name.
  void apply(const KeyValues& kv, const std::string& where) {
    const auto known = to_key_values();
    for (const auto& [k, v] : kv) {
      if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
      const std::string w = where + ": " + k;
      if (k == "seed") seed = static_cast<std::uint64_t>(parse_int(v, w));
      else if (k == "epochs") epochs = static_cast<int>(parse_int(v, w));
      else if (k == "batch_size") batch_size = static_cast<int>(parse_int(v, w));
      else if (k == "lr_g") lr_g = parse_double(v, w);
      else if (k == "lr_d") lr_d = parse_double(v, w);
      else if (k == "beta1") beta1 = parse_double(v, w);
      else if (k == "beta2") beta2 = parse_double(v, w);
      else if (k == "lambda_cyc") weights.cyc = parse_double(v, w);
      else if (k == "lambda_id") weights.id = parse_double(v, w);
      else if (k == "lambda_tr") weights.tr = parse_double(v, w);
      else if (k == "lambda_bg") weights.bg = parse_double(v, w);
      else if (k == "variant") variant = parse_variant(v);
      else if (k == "resolution") resolution = static_cast<int>(parse_int(v, w));
      else if (k == "adv_form") adv_form = parse_adv_form(v);
      else if (k == "noise_std") noise_std = parse_double(v, w);
      else if (k == "gen_widths") gen_widths = parse_ints(v, w);
      else if (k == "disc_widths") disc_widths = parse_ints(v, w);
      else if (k == "cbam_reduction") cbam_reduction = static_cast<int>(parse_int(v, w));
      else if (k == "cbam_kernel") cbam_kernel = static_cast<int>(parse_int(v, w));
      else if (k == "res_blocks") res_blocks = static_cast<int>(parse_int(v, w));
      else if (k == "crop_size") crop_size = static_cast<int>(parse_int(v, w));
      else if (k == "latent_dim") latent_dim = static_cast<int>(parse_int(v, w));
      else if (k == "max_steps") max_steps = parse_int(v, w);
      else if (k == "checkpoint_every") checkpoint_every = parse_int(v, w);
    }
  }

  static TrainConfig from_key_values(const KeyValues& kv, const std::string& where) {
    TrainConfig c;
    c.apply(kv, where);
    c.validate();
    return c;
  }
};

struct FlameTrainConfig {
  std::uint64_t seed = 0;
  int epochs = 2;
  int batch_size = 4;
  int patches = 64;  // procedural training patches
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  NoiseGeneratorConfig generator{};
  std::vector<int> disc_widths{32, 64};

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("flame pre-training: epochs and batch_size must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("flame pre-training: learning rates must be > 0");
    generator.validate();
  }

  DiscriminatorConfig discriminator() const {
    return {DiscKind::region, 3, disc_widths, generator.out_size, true};
  }
};

}  // namespace scu
