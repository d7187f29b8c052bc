#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "scu/train/ablation.hpp"
#include "support/fixtures.hpp"

namespace scu {
namespace {

using testing::scene_data;
using testing::tiny_config;
using testing::tiny_flame;

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("scu_train_" + name);
  fs::remove_all(d);
  return d;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      files[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  return files;
}

std::map<std::string, std::uint64_t> hashes(const Trainer& t) {
  std::map<std::string, std::uint64_t> h;
  for (const auto& n : t.component_names()) h[n] = param_hash(t.params(n));
  return h;
}

TEST(TrainConfig, KeyValueRoundTripAndUnknownKey) {
  auto c = tiny_config(AblationVariant::cyclegan_unet_bg_tr, 9);
  c.weights.bg = 1e4;
  auto back = TrainConfig::from_key_values(c.to_key_values(), "test");
  EXPECT_EQ(back.to_key_values(), c.to_key_values());
  EXPECT_THROW(TrainConfig::from_key_values({{"epochz", "1"}}, "test"), ConfigError);
  EXPECT_THROW(TrainConfig::from_key_values({{"epochs", "0"}}, "test"), ConfigError);
  EXPECT_THROW(TrainConfig::from_key_values({{"lr_g", "0"}}, "test"), ConfigError);
}

TEST(Variants, FeatureTable) {
  EXPECT_FALSE(features_of(AblationVariant::lsgan_only).conditional);
  auto cg = tiny_config(AblationVariant::cyclegan).generator();
  EXPECT_FALSE(cg.skips);
  EXPECT_FALSE(cg.cbam);
  EXPECT_GT(cg.res_blocks, 0);
  EXPECT_TRUE(tiny_config(AblationVariant::cyclegan_unet).generator().skips);
  EXPECT_TRUE(tiny_config(AblationVariant::cyclegan_unet_cbam).generator().cbam);
  EXPECT_FALSE(features_of(AblationVariant::cyclegan_unet_cbam).region_losses);
  EXPECT_TRUE(features_of(AblationVariant::cyclegan_unet_bg_tr).region_losses);
  EXPECT_FALSE(features_of(AblationVariant::cyclegan_unet_bg_tr).cbam);
  EXPECT_EQ(cbam_groups(init_generator<float>(tiny_config().generator(), 0)).size(), 6u);
  for (auto v : kAblationOrder) EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(Trainer, StepsAreDeterministic) {
  const auto data = scene_data(1, 3, 3, 32);
  auto a = Trainer::create(tiny_config(), tiny_flame());
  auto b = Trainer::create(tiny_config(), tiny_flame());
  for (int i = 0; i < 3; ++i) {
    auto la = a.train_step(data), lb = b.train_step(data);
    EXPECT_EQ(la, lb);
    check_breakdown(i, la);
    EXPECT_DOUBLE_EQ(la.total_g, total_generator_loss(la, a.config().weights));
    EXPECT_DOUBLE_EQ(la.total_d, la.adv_d + la.tr_d);
    EXPECT_GT(la.tr_g, 0);
    EXPECT_GT(la.bg, 0);
  }
  EXPECT_EQ(hashes(a), hashes(b));
}

TEST(Trainer, DisabledComponentsContributeNothing) {
  const auto data = scene_data(2, 3, 3, 32);
  for (auto v : {AblationVariant::cyclegan, AblationVariant::cyclegan_unet, AblationVariant::cyclegan_unet_cbam}) {
    auto t = Trainer::create(tiny_config(v), tiny_flame());
    const auto fr = param_hash(t.params("d_fr")), nfr = param_hash(t.params("d_nfr"));
    const auto g = param_hash(t.params("g_nf2f"));
    for (int i = 0; i < 2; ++i) {
      auto l = t.train_step(data);
      EXPECT_EQ(l.tr_g, 0.0);
      EXPECT_EQ(l.tr_d, 0.0);
      EXPECT_EQ(l.bg, 0.0);
    }
    EXPECT_EQ(param_hash(t.params("d_fr")), fr);
    EXPECT_EQ(param_hash(t.params("d_nfr")), nfr);
    EXPECT_NE(param_hash(t.params("g_nf2f")), g);
  }
}

TEST(Trainer, FlameGeneratorStaysFrozen) {
  const auto data = scene_data(3, 2, 2, 32);
  auto t = Trainer::create(tiny_config(), tiny_flame());
  const auto h = param_hash(t.flame().params);
  for (int i = 0; i < 3; ++i) t.train_step(data);
  EXPECT_EQ(param_hash(t.flame().params), h);
  EXPECT_TRUE(t.flame().params.frozen());
}

TEST(Trainer, CheckpointSaveLoadSaveIsByteIdentical) {
  const auto data = scene_data(4, 2, 2, 32);
  auto t = Trainer::create(tiny_config(), tiny_flame());
  t.train_step(data);
  auto d1 = scratch("ck1"), d2 = scratch("ck2");
  t.save(d1);
  auto loaded = Trainer::load(d1);
  loaded.save(d2);
  EXPECT_EQ(read_tree(d1), read_tree(d2));
  EXPECT_EQ(loaded.step(), 1);
  EXPECT_EQ(hashes(loaded), hashes(t));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto data = scene_data(5, 3, 2, 32);
  auto cfg = tiny_config();
  cfg.batch_size = 2;
  auto full = train(Trainer::create(cfg, tiny_flame()), data, {}, 4);
  auto half = train(Trainer::create(cfg, tiny_flame()), data, {}, 3);
  auto dir = scratch("resume");
  half.trainer.save(dir);
  auto rest = train(Trainer::load(dir), data, {}, 4);
  EXPECT_EQ(rest.trainer.step(), 4);
  EXPECT_EQ(hashes(rest.trainer), hashes(full.trainer));
  EXPECT_EQ(rest.losses.back(), full.losses.back());
  fs::remove_all(dir);
}

TEST(Trainer, TrainWritesLogAndReloadableCheckpoint) {
  const auto data = scene_data(6, 4, 4, 32);
  auto dir = scratch("run");
  auto cfg = tiny_config();
  cfg.epochs = 1;
  auto r = train(Trainer::create(cfg, tiny_flame()), data, dir);
  EXPECT_EQ(r.losses.size(), 4u);
  for (std::size_t i = 0; i < r.losses.size(); ++i) check_breakdown(static_cast<long>(i), r.losses[i]);
  std::ifstream csv(dir / "losses.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, kLossCsvHeader);
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 4);
  auto back = Trainer::load(dir / "checkpoint");
  const auto& rec = data.non_fire[0];
  const auto patch = synth_flame_patch(1, 16, 16);
  EXPECT_EQ(back.generate_fire(rec.image, rec.target(), patch, 5), r.trainer.generate_fire(rec.image, rec.target(), patch, 5));
  EXPECT_EQ(read_key_values(dir / "config.txt"), cfg.to_key_values());
  fs::remove_all(dir);
}

TEST(Trainer, NonFiniteLossRaisesDivergenceWithStep) {
  auto data = scene_data(7, 1, 1, 32);
  auto t = Trainer::create(tiny_config(), tiny_flame());
  t.train_step(data);
  data.fire[0].image.data[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.train_step(data);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_FALSE(e.component().empty());
  }
}

TEST(Trainer, RejectsMismatchedData) {
  auto t = Trainer::create(tiny_config(), tiny_flame());
  EXPECT_THROW(train(t, scene_data(1, 1, 1, 64)), DimensionError);
  EXPECT_THROW(train(t, TrainData{}), DataError);
}

TEST(Trainer, UnconditionalBaselineTrains) {
  const auto data = scene_data(8, 0, 3, 32);
  auto r = train(Trainer::create(tiny_config(AblationVariant::lsgan_only), tiny_flame()), data, {}, 3);
  for (const auto& l : r.losses) {
    check_breakdown(0, l);
    EXPECT_EQ(l.cyc, 0.0);
    EXPECT_EQ(l.bg, 0.0);
  }
  auto img = r.trainer.sample_image(1);
  EXPECT_EQ(img.shape, (Shape{3, 32, 32}));
  EXPECT_THROW(r.trainer.generate_fire(data.fire[0].image, data.fire[0].target(), img, 0), ConfigError);
}

TEST(FlamePretrain, DeterministicAndFrozen) {
  FlameTrainConfig cfg;
  cfg.seed = 3;
  cfg.generator = {8, 16, 16, 3};
  cfg.disc_widths = {8, 16};
  const auto patches = flame_patch_set(3, 64, 16);
  auto a = pretrain_flame_lsgan(patches, cfg);
  auto b = pretrain_flame_lsgan(patches, cfg);
  EXPECT_EQ(param_hash(a.generator.params), param_hash(b.generator.params));
  EXPECT_TRUE(a.generator.params.frozen());
  EXPECT_EQ(a.d_real.size(), 32u);
  Rng rng(1);
  EXPECT_NE(a.generator.sample(rng), a.generator.sample(rng));
  EXPECT_THROW(pretrain_flame_lsgan(std::vector<ImageTensor>(patches.begin(), patches.begin() + 15), cfg), ConfigError);
}

TEST(Ablation, SixRowsInLadderOrder) {
  const auto data = scene_data(9, 3, 3, 32);
  const auto eval = make_eval_set(scene_data(10, 3, 3, 32));
  auto dir = scratch("ablate");
  const auto rows = run_ablation(tiny_config(), tiny_flame(), data, eval, dir);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].variant, kAblationOrder[i]);
    EXPECT_EQ(rows[i].report.label, to_string(kAblationOrder[i]));
    EXPECT_TRUE(rows[i].report.fid && rows[i].report.kid && rows[i].report.perceptual);
    EXPECT_TRUE(rows[i].report.all_finite());
    EXPECT_EQ(rows[i].report.iou.has_value(), i != 0);
  }
  std::ifstream csv(dir / "ablation_report.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], kAblationCsvHeader);
  EXPECT_EQ(lines[1].substr(0, 11), "lsgan_only,");
  EXPECT_EQ(lines[1].substr(lines[1].size() - 2), ",-");
  EXPECT_EQ(lines[6].substr(0, 9), "scu_cgan,");
  for (auto v : kAblationOrder) EXPECT_TRUE(fs::exists(dir / to_string(v) / "checkpoint" / "manifest.txt"));
  fs::remove_all(dir);
}

TEST(Ablation, EvaluationIsDeterministic) {
  const auto data = scene_data(11, 2, 2, 32);
  auto t = train(Trainer::create(tiny_config(), tiny_flame()), data, {}, 2).trainer;
  const auto eval = make_eval_set(scene_data(12, 3, 3, 32));
  const auto fx = FeatureExtractor::builtin();
  const auto a = evaluate_generator(t, eval, fx, 4), b = evaluate_generator(t, eval, fx, 4);
  EXPECT_EQ(report_csv({a}, "variant", kAblationColumns), report_csv({b}, "variant", kAblationColumns));
  EXPECT_GE(*a.iou, 0.0);
  EXPECT_LE(*a.iou, 1.0);
  EXPECT_GE(*a.perceptual, 0.0);
}

}  // namespace
}  // namespace scu
