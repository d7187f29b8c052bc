#include <gtest/gtest.h>

#include <fstream>

#include "scu/augment/augment.hpp"
#include "scu/augment/detector.hpp"
#include "support/fixtures.hpp"

namespace scu {
namespace {

using testing::read_tree;
using testing::scene_data;
using testing::tiny_config;
using testing::tiny_flame;

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("scu_augment_" + name);
  fs::remove_all(d);
  return d;
}

// Tiny trained checkpoint plus a 32x32 source set with 4 non-fire and 2 fire records.
struct AugmentFixture {
  fs::path root, checkpoint, source;
  Dataset source_ds;

  explicit AugmentFixture(const std::string& name) : root(scratch(name)) {
    const auto data = scene_data(21, 2, 2, 32);
    train(Trainer::create(tiny_config(), tiny_flame()), data, root / "run", 1);
    checkpoint = root / "run";
    source = root / "source";
    std::vector<SceneRecord> recs;
    for (int i = 0; i < 4; ++i) recs.push_back(synth_scene(700 + i, {32, 32}, Domain::non_fire));
    for (int i = 0; i < 2; ++i) recs.push_back(synth_scene(800 + i, {32, 32}, Domain::fire));
    save_dataset(source, recs, 7);
    source_ds = load_dataset(source);
  }
  ~AugmentFixture() { fs::remove_all(root); }
};

TEST(GenerateAugmented, CountsLabelsAndDeterminism) {
  AugmentFixture f("gen");
  AugmentPlan plan{f.source, f.checkpoint, f.root / "out1", 10, 5, {}};
  generate_augmented(plan);
  plan.output_dir = f.root / "out2";
  generate_augmented(plan);
  EXPECT_EQ(read_tree(f.root / "out1"), read_tree(f.root / "out2"));

  const auto out = load_dataset(f.root / "out1");
  ASSERT_EQ(out.records.size(), 10u);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < f.source_ds.ids.size(); ++i) index[f.source_ds.ids[i]] = i;
  std::set<std::string> used;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    std::ifstream lab(f.root / "out1" / "labels" / (record_stem(i) + ".txt"));
    int lines = 0;
    for (std::string l; std::getline(lab, l);) {
      ++lines;
      EXPECT_EQ(l.substr(0, 2), "0 ");
    }
    EXPECT_EQ(lines, 1);
    const auto src = out.manifest.at("source." + record_stem(i));
    used.insert(src);
    const auto& s = f.source_ds.records[index.at(src)];
    EXPECT_EQ(s.domain, Domain::non_fire);
    EXPECT_EQ(out.records[i].domain, Domain::fire);
    ASSERT_EQ(out.records[i].boxes.size(), 1u);
    EXPECT_EQ(out.records[i].boxes[0], s.target());
  }
  EXPECT_EQ(used.size(), 4u);  // cycling covers every source
}

TEST(GenerateAugmented, OutputsMatchTrainerAndSeedMatters) {
  AugmentFixture f("gen_seed");
  const auto t = Trainer::load(f.checkpoint / "checkpoint");
  const auto a = generate_augmented_records(t, f.source_ds, 6, 1), b = generate_augmented_records(t, f.source_ds, 6, 2);
  EXPECT_NE(a.records[0].image, b.records[0].image);
  for (long i = 0; i < 6; ++i) EXPECT_LT(augment_pick(1, i, 4), 4u);
  std::set<std::size_t> first_pass;
  for (long i = 0; i < 4; ++i) first_pass.insert(augment_pick(1, i, 4));
  EXPECT_EQ(first_pass.size(), 4u);
}

TEST(GenerateAugmented, MissingInputsRaiseLoadError) {
  AugmentFixture f("gen_missing");
  EXPECT_THROW(generate_augmented({f.source, f.root / "nope", f.root / "o", 3, 1, {}}), LoadError);
  EXPECT_THROW(generate_augmented({f.root / "nope", f.checkpoint, f.root / "o", 3, 1, {}}), LoadError);
  EXPECT_THROW(generate_augmented({f.source, f.checkpoint, f.root / "o", 0, 1, {}}), ConfigError);
  std::vector<SceneRecord> fire_only{synth_scene(1, {32, 32}, Domain::fire)};
  save_dataset(f.root / "fire_only", fire_only, 1);
  EXPECT_THROW(generate_augmented({f.root / "fire_only", f.checkpoint, f.root / "o", 3, 1, {}}), LoadError);
}

Dataset blank_records(std::size_t n, int size, Domain d) {
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    SceneRecord r;
    r.image = ImageTensor({3, size, size});
    r.image.data[0] = static_cast<float>(i % 7) / 7.0f;
    r.domain = d;
    r.boxes = {RegionBox{1, 1, 5, 5}};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

TEST(MixDatasets, ThousandOriginalsAtOneToFive) {
  const auto o = blank_records(1000, 8, Domain::fire), g = blank_records(5000, 8, Domain::fire);
  const auto m = mix_records(o, g, MixRatio::parse("1:5"), 3);
  EXPECT_EQ(m.records.size(), 6000u);
  EXPECT_EQ(m.manifest.at("original_count"), "1000");
  EXPECT_EQ(m.manifest.at("generated_count"), "5000");
  std::size_t n_orig = 0, n_gen = 0;
  for (const auto& [k, v] : m.manifest)
    if (k.rfind("provenance.", 0) == 0) (v == "original" ? n_orig : n_gen)++;
  EXPECT_EQ(n_orig, 1000u);
  EXPECT_EQ(n_gen, 5000u);
}

TEST(MixDatasets, SelectionRule) {
  EXPECT_EQ(mix_selection(10, 100, {1, 5}, 1).size(), 50u);
  EXPECT_EQ(mix_selection(10, 20, {1, 5}, 1).size(), 20u);
  EXPECT_EQ(mix_selection(10, 20, {1, 0}, 1).size(), 0u);
  EXPECT_EQ(mix_selection(10, 20, {0, 1}, 1).size(), 20u);
  EXPECT_EQ(mix_selection(7, 100, {2, 3}, 1).size(), 10u);
  const auto s = mix_selection(10, 100, {1, 5}, 4);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), s.size());
  EXPECT_EQ(s, mix_selection(10, 100, {1, 5}, 4));
  EXPECT_NE(s, mix_selection(10, 100, {1, 5}, 5));
  EXPECT_THROW(MixRatio::parse("1-5"), ConfigError);
  EXPECT_THROW(MixRatio::parse("0:0"), ConfigError);
  EXPECT_THROW(MixRatio::parse("-1:2"), ConfigError);
}

TEST(MixDatasets, IdentityProvenanceAndRoundTrip) {
  auto root = scratch("mix");
  std::vector<SceneRecord> orig, gen;
  for (int i = 0; i < 5; ++i) orig.push_back(synth_scene(900 + i, {32, 32}, Domain::fire));
  for (int i = 0; i < 12; ++i) gen.push_back(synth_scene(950 + i, {32, 32}, Domain::fire));
  save_dataset(root / "o", orig, 1);
  save_dataset(root / "g", gen, 2);

  mix_datasets(root / "o", root / "g", {1, 0}, 0, root / "identity");
  const auto o = load_dataset(root / "o"), id = load_dataset(root / "identity");
  ASSERT_EQ(id.records.size(), o.records.size());
  for (std::size_t i = 0; i < o.records.size(); ++i) {
    EXPECT_EQ(id.records[i].image, o.records[i].image);
    EXPECT_EQ(id.records[i].boxes, o.records[i].boxes);
  }
  const auto otree = read_tree(root / "o"), itree = read_tree(root / "identity");
  for (const auto& [k, v] : otree)
    if (k != "manifest.txt") EXPECT_EQ(itree.at(k), v) << k;

  mix_datasets(root / "o", root / "g", {1, 2}, 0, root / "m");
  const auto m = load_dataset(root / "m");
  EXPECT_EQ(m.records.size(), 15u);
  EXPECT_EQ(m.manifest.at("original_count"), "5");
  EXPECT_EQ(m.manifest.at("generated_count"), "10");
  EXPECT_EQ(m.manifest.at("provenance.000004"), "original");
  EXPECT_EQ(m.manifest.at("provenance.000005"), "generated");
  save_dataset(root / "m2", m);
  EXPECT_EQ(read_tree(root / "m"), read_tree(root / "m2"));

  std::vector<SceneRecord> big{synth_scene(1, {64, 64}, Domain::fire)};
  save_dataset(root / "big", big, 3);
  EXPECT_THROW(mix_datasets(root / "o", root / "big", {1, 5}, 0, root / "bad"), ConfigError);
  fs::remove_all(root);
}

// Bright squares on a dark background, one per image.
Dataset separable_set(std::uint64_t seed, int n) {
  Rng rng(seed);
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    SceneRecord r;
    r.image = ImageTensor({3, 64, 64});
    std::fill(r.image.data.begin(), r.image.data.end(), -1.0f);
    const int s = rng.uniform_int(12, 24), x = rng.uniform_int(0, 64 - s), y = rng.uniform_int(0, 64 - s);
    for (int c = 0; c < 3; ++c)
      for (int yy = y; yy < y + s; ++yy)
        for (int xx = x; xx < x + s; ++xx) r.image(c, yy, xx) = 1.0f;
    r.domain = Domain::fire;
    r.boxes = {RegionBox{x, y, x + s, y + s}};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

TEST(ToyDetector, SizeAndShape) {
  ToyDetectorConfig cfg;
  const auto p = init_toy_detector<float>(cfg);
  EXPECT_GT(p.count(), 40000u);
  EXPECT_LT(p.count(), 80000u);
  ag::Tape<float> tape(false);
  ParamBinder<float> b(tape, p, false);
  EXPECT_EQ(toy_detector_forward(b, cfg, tape.constant(ImageTensor({3, 64, 64}))).value().shape, (Shape{5, 8, 8}));
}

TEST(ToyDetector, SeparableFixtureIsDetected) {
  const auto ds = separable_set(3, 20);
  ToyDetectorConfig cfg;
  cfg.seed = 2;
  const auto a = toy_detector_train_eval(ds, ds, cfg);
  EXPECT_GE(*a.map50, 0.9);
  EXPECT_TRUE(a.all_finite());
  EXPECT_LE(*a.map5095, *a.map50);
  const auto b = toy_detector_train_eval(ds, ds, cfg);
  EXPECT_EQ(report_text(a), report_text(b));
  EXPECT_EQ(*a.map50, *b.map50);
  EXPECT_THROW(toy_detector_train_eval(ds, Dataset{}, cfg), ArgumentError);
}

}  // namespace
}  // namespace scu
