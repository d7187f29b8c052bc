#pragma once

#include <fstream>
#include <iterator>

#include "scu/train/trainer.hpp"

namespace scu::testing {

inline TrainData scene_data(std::uint64_t seed, int n_non_fire, int n_fire, int res) {
  TrainData d;
  for (int i = 0; i < n_non_fire; ++i) d.non_fire.push_back(synth_scene(seed * 7919 + static_cast<std::uint64_t>(i), {res, res}, Domain::non_fire));
  for (int i = 0; i < n_fire; ++i) d.fire.push_back(synth_scene(seed * 7919 + 5000 + static_cast<std::uint64_t>(i), {res, res}, Domain::fire));
  return d;
}

// Narrow networks at 32x32 so unit tests stay fast.
inline TrainConfig tiny_config(AblationVariant v = AblationVariant::scu_cgan, std::uint64_t seed = 1) {
  TrainConfig c;
  c.seed = seed;
  c.variant = v;
  c.resolution = 32;
  c.gen_widths = {8, 16, 32};
  c.disc_widths = {8, 16, 32};
  c.crop_size = 16;
  c.res_blocks = 1;
  c.latent_dim = 8;
  return c;
}

inline FlameGenerator tiny_flame(std::uint64_t seed = 3) { return untrained_flame_generator(seed, {8, 16, 16, 3}); }

// Relative path -> file contents for every file below root.
inline std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      files[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  return files;
}

}  // namespace scu::testing
