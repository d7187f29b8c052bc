#pragma once

// Procedural indoor scenes and flame textures. Every function is a pure
// function of its arguments.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "scu/core/rng.hpp"
#include "scu/data/image.hpp"

namespace scu {

enum class Domain { fire, non_fire };

inline std::string to_string(Domain d) { return d == Domain::fire ? "fire" : "non_fire"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "fire") return Domain::fire;
  if (s == "non_fire" || s == "non-fire" || s == "nonfire") return Domain::non_fire;
  throw ConfigError("unknown domain '" + s + "' (expected fire or non_fire)");
}

struct SceneRecord {
  ImageTensor image;
  std::vector<RegionBox> boxes;  // fire: flame boxes; non-fire: the single generation target
  Domain domain = Domain::non_fire;

  // The region a generator works on.
  const RegionBox& target() const { return boxes.at(0); }
};

namespace detail {

using Rgb = std::array<float, 3>;

inline Rgb random_color(Rng& rng, double lo, double hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

struct FlameLayer {
  ImageTensor color;        // [3,h,w]
  std::vector<float> alpha;  // h*w, in [0,1]
};

// Teardrop-shaped flame: wide hot base, flickering narrow tip, intensity
// falling off towards the top.
inline FlameLayer render_flame(Rng& rng, int h, int w) {
  FlameLayer f{ImageTensor({3, h, w}), std::vector<float>(static_cast<std::size_t>(h) * w, 0.0f)};
  const double base_width = rng.uniform(0.38, 0.5);
  const double tip_width = rng.uniform(0.04, 0.12);
  const double sway = rng.uniform(-0.08, 0.08);
  const double freq = rng.uniform(1.5, 3.5);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const double wobble = rng.uniform(0.02, 0.06);
  for (int y = 0; y < h; ++y) {
    const double v = (y + 0.5) / h;  // 0 at top, 1 at bottom
    const double half = tip_width + (base_width - tip_width) * std::pow(v, 0.6);
    const double centre = 0.5 + sway * (1.0 - v) + wobble * std::sin(freq * 6.283185307179586 * v + phase);
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w;
      const double d = std::abs(u - centre) / half;
      if (d >= 1.0) continue;
      const double radial = std::pow(1.0 - d, 0.7);
      const double vertical = 0.35 + 0.65 * std::pow(v, 0.5);
      const double a = std::clamp(radial * vertical * 1.4, 0.0, 1.0);
      f.alpha[static_cast<std::size_t>(y) * w + x] = static_cast<float>(a);
      // Hot core: yellow-white; rim: deep orange-red.
      const double heat = std::clamp(a * (0.6 + 0.4 * v), 0.0, 1.0);
      f.color(0, y, x) = static_cast<float>(0.75 + 0.25 * heat);
      f.color(1, y, x) = static_cast<float>(-0.35 + 1.2 * heat);
      f.color(2, y, x) = static_cast<float>(-0.85 + 1.1 * heat * heat);
    }
  }
  return f;
}

inline ImageTensor render_room(Rng& rng, int h, int w) {
  ImageTensor img({3, h, w});
  const Rgb top = random_color(rng, -0.55, 0.1);
  const Rgb bottom = random_color(rng, -0.65, 0.0);
  const Rgb floor = random_color(rng, -0.8, -0.2);
  const int horizon = static_cast<int>(h * rng.uniform(0.55, 0.75));
  for (int y = 0; y < h; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(std::max(1, horizon));
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img(c, y, x) = y < horizon ? top[static_cast<std::size_t>(c)] * (1 - t) + bottom[static_cast<std::size_t>(c)] * t
                                   : floor[static_cast<std::size_t>(c)];
  }
  // Furniture: flat-shaded rectangles resting on or near the floor line.
  const int pieces = rng.uniform_int(2, 4);
  for (int i = 0; i < pieces; ++i) {
    const Rgb col = random_color(rng, -0.9, 0.15);
    const int fw = rng.uniform_int(w / 8, w / 3);
    const int fh = rng.uniform_int(h / 8, h / 3);
    const int x0 = rng.uniform_int(0, w - fw);
    const int y1 = std::min(h, horizon + rng.uniform_int(-h / 10, h / 6));
    const int y0 = std::max(0, y1 - fh);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x0 + fw; ++x)
        for (int c = 0; c < 3; ++c) img(c, y, x) = col[static_cast<std::size_t>(c)];
  }
  for (auto& v : img.data) v = std::clamp(v + static_cast<float>(rng.uniform(-0.02, 0.02)), -1.0f, 1.0f);
  return img;
}

// Uniform box inside a central margin of one eighth of each side.
inline RegionBox sample_target_box(Rng& rng, int h, int w) {
  const int my = h / 8, mx = w / 8;
  const int bh = rng.uniform_int(std::max(4, h / 5), std::max(4, (2 * h) / 5));
  const int bw = rng.uniform_int(std::max(4, w / 5), std::max(4, (2 * w) / 5));
  const int y0 = rng.uniform_int(my, h - my - bh);
  const int x0 = rng.uniform_int(mx, w - mx - bw);
  return {x0, y0, x0 + bw, y0 + bh};
}

}  // namespace detail

inline void require_scene_size(ImageSize size) {
  if (size.height < 32 || size.width < 32 || size.height % 8 != 0 || size.width % 8 != 0)
    throw DimensionError("scene size must be at least 32x32 and divisible by 8, got " + std::to_string(size.height) +
                         "x" + std::to_string(size.width));
}

// Procedural indoor scene. Non-fire scenes carry one designated target box;
// fire scenes carry `flames` boxes, each tightly bounding a composited flame.
inline SceneRecord synth_scene(std::uint64_t seed, ImageSize size, Domain domain, int flames = 1) {
  require_scene_size(size);
  Rng rng(seed, domain == Domain::fire ? 0xF1AE : 0x0F1A);
  SceneRecord rec;
  rec.domain = domain;
  rec.image = detail::render_room(rng, size.height, size.width);
  if (domain == Domain::non_fire) {
    rec.boxes.push_back(detail::sample_target_box(rng, size.height, size.width));
    return rec;
  }
  for (int f = 0; f < std::max(1, flames); ++f) {
    for (;;) {
      const RegionBox outer = detail::sample_target_box(rng, size.height, size.width);
      auto flame = detail::render_flame(rng, outer.height(), outer.width());
      RegionBox tight{size.width, size.height, -1, -1};
      for (int y = 0; y < outer.height(); ++y)
        for (int x = 0; x < outer.width(); ++x)
          if (flame.alpha[static_cast<std::size_t>(y) * outer.width() + x] > 0.0f) {
            tight.x_min = std::min(tight.x_min, outer.x_min + x);
            tight.y_min = std::min(tight.y_min, outer.y_min + y);
            tight.x_max = std::max(tight.x_max, outer.x_min + x + 1);
            tight.y_max = std::max(tight.y_max, outer.y_min + y + 1);
          }
      if (tight.x_max < 0 || tight.area() < kMinRegionArea) continue;
      for (int y = 0; y < outer.height(); ++y)
        for (int x = 0; x < outer.width(); ++x) {
          const float a = flame.alpha[static_cast<std::size_t>(y) * outer.width() + x];
          if (a <= 0.0f) continue;
          for (int c = 0; c < 3; ++c) {
            float& px = rec.image(c, outer.y_min + y, outer.x_min + x);
            px = std::clamp(px * (1 - a) + flame.color(c, y, x) * a, -1.0f, 1.0f);
          }
        }
      rec.boxes.push_back(tight);
      break;
    }
  }
  return rec;
}

// Flame texture over a dark ember background.
inline ImageTensor synth_flame_patch(std::uint64_t seed, int h, int w) {
  if (h < 8 || w < 8) throw DimensionError("flame patch must be at least 8x8");
  Rng rng(seed, 0xFA7C);
  auto flame = detail::render_flame(rng, h, w);
  const detail::Rgb ember = {static_cast<float>(rng.uniform(-0.6, -0.3)), static_cast<float>(rng.uniform(-0.85, -0.6)),
                             static_cast<float>(rng.uniform(-0.95, -0.8))};
  ImageTensor patch({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float a = flame.alpha[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c)
        patch(c, y, x) = std::clamp(ember[static_cast<std::size_t>(c)] * (1 - a) + flame.color(c, y, x) * a, -1.0f, 1.0f);
    }
  return patch;
}

}  // namespace scu
