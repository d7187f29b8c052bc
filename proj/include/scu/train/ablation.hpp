#pragma once

// Ablation ladder: trains every variant on the same seed and data, then
// scores each on a held-out evaluation set.

#include "scu/eval/detection.hpp"
#include "scu/train/trainer.hpp"

namespace scu {

inline constexpr const char* kAblationCsvHeader = "variant,fid,kid,perceptual,iou";
inline const std::vector<std::string> kAblationColumns{"fid", "kid", "perceptual", "iou"};

// Non-fire sources (target box = generation region) and real fire images.
struct EvalSet {
  std::vector<SceneRecord> sources;
  std::vector<ImageTensor> real_fire;
};

inline EvalSet make_eval_set(const TrainData& d) {
  EvalSet e;
  e.sources = d.non_fire;
  for (const auto& r : d.fire) e.real_fire.push_back(r.image);
  return e;
}

struct GeneratedSet {
  std::vector<ImageTensor> images;
  std::vector<RegionBox> boxes;  // empty for the unconditional model
};

// One output per source. Conditional models translate source i with a flame
// patch drawn from stream i; the unconditional model samples image i.
inline GeneratedSet generate_for_eval(const Trainer& t, const std::vector<SceneRecord>& sources, std::uint64_t seed) {
  GeneratedSet g;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    if (!t.conditional()) {
      g.images.push_back(t.sample_image(seed * 1000003ULL + k));
      continue;
    }
    Rng rng(seed, 0xE7A10000ULL + k);
    const auto patch = t.flame().sample(rng);
    g.images.push_back(t.generate_fire(sources[i].image, sources[i].target(), patch, rng.next_u64()));
    g.boxes.push_back(sources[i].target());
  }
  return g;
}

inline MetricReport evaluate_generator(const Trainer& t, const EvalSet& e, const FeatureExtractor& fx, std::uint64_t seed) {
  if (e.sources.size() < 2 || e.real_fire.size() < 2)
    throw ArgumentError("evaluation needs at least 2 non-fire sources and 2 real fire images");
  const auto g = generate_for_eval(t, e.sources, seed);
  std::vector<ImageTensor> src;
  for (const auto& r : e.sources) src.push_back(r.image);
  MetricReport r;
  r.label = to_string(t.config().variant);
  r.fid = fid(g.images, e.real_fire, fx);
  r.kid = kid(g.images, e.real_fire, fx);
  r.perceptual = mean_perceptual_distance(g.images, src, fx);
  if (t.conditional()) r.iou = generation_iou(g.images, src, g.boxes);
  return r;
}

struct AblationRow {
  AblationVariant variant;
  Trainer trainer;
  MetricReport report;
};

// Checkpoints go to out_dir/<variant>/ and the table to out_dir/ablation_report.csv
// when out_dir is set.
inline std::vector<AblationRow> run_ablation(const TrainConfig& base, const FlameGenerator& flame, const TrainData& train_data,
                                             const EvalSet& eval, const fs::path& out_dir = {},
                                             const std::function<void(AblationVariant, long, const LossBreakdown&)>& on_step = {}) {
  const auto fx = FeatureExtractor::builtin();
  std::vector<AblationRow> rows;
  for (auto v : kAblationOrder) {
    auto cfg = base;
    cfg.variant = v;
    std::function<void(long, const LossBreakdown&)> cb;
    if (on_step) cb = [&](long s, const LossBreakdown& b) { on_step(v, s, b); };
    auto res = train(Trainer::create(cfg, flame), train_data, out_dir.empty() ? fs::path{} : out_dir / to_string(v), -1, cb);
    auto report = evaluate_generator(res.trainer, eval, fx, base.seed);
    rows.push_back({v, std::move(res.trainer), std::move(report)});
  }
  if (!out_dir.empty()) {
    std::vector<MetricReport> reports;
    for (const auto& r : rows) reports.push_back(r.report);
    write_text_file(out_dir / "ablation_report.csv", report_csv(reports, "variant", kAblationColumns));
  }
  return rows;
}

}  // namespace scu
