#pragma once

// Augmented dataset export: run G_NF2F over non-fire records and label each
// output with the composition box, then mix with original data.

#include "scu/train/trainer.hpp"

namespace scu {

struct MixRatio {
  int original = 1;
  int generated = 5;

  void validate() const {
    if (original < 0 || generated < 0) throw ConfigError("mix ratio components must be >= 0");
    if (original == 0 && generated == 0) throw ConfigError("mix ratio 0:0 selects nothing");
  }

  std::string str() const { return std::to_string(original) + ":" + std::to_string(generated); }

  static MixRatio parse(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("mix ratio must look like 'a:b', got '" + s + "'");
    MixRatio r{static_cast<int>(parse_int(s.substr(0, colon), "mix ratio")), static_cast<int>(parse_int(s.substr(colon + 1), "mix ratio"))};
    r.validate();
    return r;
  }
};

struct AugmentPlan {
  fs::path source_dir;
  fs::path checkpoint_dir;  // a checkpoint, or a training run directory holding checkpoint/
  fs::path output_dir;
  int count = 0;
  std::uint64_t seed = 0;
  MixRatio ratio;

  void validate() const {
    if (count < 1) throw ConfigError("augment count must be >= 1, got " + std::to_string(count));
    if (output_dir.empty()) throw ConfigError("augment output directory is not set");
    ratio.validate();
  }
};

inline fs::path resolve_checkpoint(const fs::path& dir) {
  if (fs::exists(dir / "checkpoint" / "manifest.txt")) return dir / "checkpoint";
  if (fs::exists(dir / "manifest.txt")) return dir;
  throw LoadError("no checkpoint found at " + dir.string());
}

// Source record for output i: each pass over the sources uses a fresh seeded
// permutation.
inline std::size_t augment_pick(std::uint64_t seed, long i, int n_sources) {
  const auto order = epoch_order(seed, i / n_sources, 3, n_sources);
  return static_cast<std::size_t>(order[static_cast<std::size_t>(i % n_sources)]);
}

inline Dataset generate_augmented_records(const Trainer& t, const Dataset& source, int count, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < source.records.size(); ++i)
    if (source.records[i].domain == Domain::non_fire && !source.records[i].boxes.empty()) pool.push_back(i);
  if (pool.empty()) throw LoadError("source dataset has no non-fire records with a target box");
  const auto res = t.config().resolution;
  if (source.size() != ImageSize{res, res})
    throw DimensionError("source resolution " + std::to_string(source.size().height) + "x" + std::to_string(source.size().width) +
                         " does not match the model's " + std::to_string(res));
  const auto ids = record_ids(source);
  Dataset out;
  out.manifest = {{"kind", "generated"}, {"seed", std::to_string(seed)}, {"domain", "fire"}};
  for (long i = 0; i < count; ++i) {
    const auto& src = source.records[pool[augment_pick(seed, i, static_cast<int>(pool.size()))]];
    Rng rng(seed, 0xA6000000ULL + static_cast<std::uint64_t>(i));
    const auto patch = t.flame().sample(rng);
    SceneRecord r;
    r.image = t.generate_fire(src.image, src.target(), patch, rng.next_u64());
    r.domain = Domain::fire;
    r.boxes = {src.target()};
    out.manifest["source." + record_stem(static_cast<std::size_t>(i))] =
        ids[static_cast<std::size_t>(&src - source.records.data())];
    out.records.push_back(std::move(r));
  }
  return out;
}

inline fs::path generate_augmented(const AugmentPlan& plan) {
  plan.validate();
  const auto ck = resolve_checkpoint(plan.checkpoint_dir);
  const auto t = Trainer::load(ck);
  if (!t.conditional()) throw ConfigError("checkpoint holds the unconditional " + to_string(t.config().variant) + " model");
  const auto source = load_dataset(plan.source_dir);
  auto ds = generate_augmented_records(t, source, plan.count, plan.seed);
  ds.manifest["checkpoint_step"] = std::to_string(t.step());
  ds.manifest["variant"] = to_string(t.config().variant);
  save_dataset(plan.output_dir, ds);
  return plan.output_dir;
}

// Every original record is kept; min(n_g, floor(n_o * b / a)) generated ones
// are drawn without replacement (all of them when a = 0) and kept in index order.
inline std::vector<std::size_t> mix_selection(std::size_t n_original, std::size_t n_generated, MixRatio ratio, std::uint64_t seed) {
  ratio.validate();
  std::size_t take = n_generated;
  if (ratio.original > 0)
    take = std::min<std::size_t>(n_generated, n_original * static_cast<std::size_t>(ratio.generated) / static_cast<std::size_t>(ratio.original));
  std::vector<std::size_t> chosen;
  if (take == n_generated) {
    for (std::size_t i = 0; i < n_generated; ++i) chosen.push_back(i);
    return chosen;
  }
  Rng rng(seed, 0x313C);
  const auto perm = rng.permutation(static_cast<int>(n_generated));
  for (std::size_t i = 0; i < take; ++i) chosen.push_back(static_cast<std::size_t>(perm[i]));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline Dataset mix_records(const Dataset& original, const Dataset& generated, MixRatio ratio, std::uint64_t seed) {
  ratio.validate();
  if (!original.records.empty() && !generated.records.empty() && original.size() != generated.size())
    throw ConfigError("cannot mix datasets of different resolutions (" + std::to_string(original.size().height) + "x" +
                      std::to_string(original.size().width) + " vs " + std::to_string(generated.size().height) + "x" +
                      std::to_string(generated.size().width) + ")");
  Dataset out;
  out.manifest = {{"kind", "mixed"}, {"seed", std::to_string(seed)}, {"ratio", ratio.str()}};
  const auto oid = record_ids(original), gid = record_ids(generated);
  auto push = [&](const SceneRecord& r, const char* from, const std::string& id) {
    const auto stem = record_stem(out.records.size());
    out.manifest["provenance." + stem] = from;
    out.manifest["origin." + stem] = id;
    out.records.push_back(r);
  };
  const bool keep_original = ratio.original > 0;
  if (keep_original)
    for (std::size_t i = 0; i < original.records.size(); ++i) push(original.records[i], "original", oid[i]);
  const auto chosen = mix_selection(original.records.size(), generated.records.size(), ratio, seed);
  for (auto i : chosen) push(generated.records[i], "generated", gid[i]);
  out.manifest["original_count"] = std::to_string(keep_original ? original.records.size() : 0);
  out.manifest["generated_count"] = std::to_string(chosen.size());
  return out;
}

inline fs::path mix_datasets(const fs::path& original_dir, const fs::path& generated_dir, MixRatio ratio, std::uint64_t seed,
                             const fs::path& out_dir) {
  auto ds = mix_records(load_dataset(original_dir), load_dataset(generated_dir), ratio, seed);
  save_dataset(out_dir, ds);
  return out_dir;
}

}  // namespace scu
