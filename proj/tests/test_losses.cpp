#include <gtest/gtest.h>

#include "scu/loss/losses.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace scu {
namespace {

using testing::grad_check;
using testing::random_tensor;

TEST(Adversarial, LeastSquaresExamples) {
  const std::vector<double> ones{1.0, 1.0, 1.0}, zeros{0.0, 0.0}, pm{0.5, -0.5};
  EXPECT_EQ(adversarial_ls(ones, 1.0), 0.0);
  EXPECT_EQ(adversarial_ls(zeros, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(adversarial_ls(pm, 0.0), 0.25);
}

TEST(TargetRegion, Examples) {
  const std::vector<double> one{1.0}, zero{0.0}, real{0.8}, fake{0.3};
  EXPECT_EQ(target_region_loss_g(one), 0.0);
  EXPECT_EQ(target_region_loss_d(one, zero), 0.0);
  EXPECT_NEAR(target_region_loss_d(real, fake), 0.13, 1e-12);
}

TEST(TargetRegion, TapeFormsAgreeWithPlainForms) {
  ag::Tape<double> tape(false);
  auto r = tape.constant(Tensor<double>({3}, std::vector<double>{0.8, 1.2, -0.1}));
  auto f = tape.constant(Tensor<double>({2}, std::vector<double>{0.3, 0.6}));
  EXPECT_NEAR(loss::target_region_d(r, f).item(), target_region_loss_d(r.value().span(), f.value().span()), 1e-15);
  EXPECT_NEAR(loss::target_region_g(f).item(), target_region_loss_g(f.value().span()), 1e-15);
}

TEST(Adversarial, LogFormIsBinaryCrossEntropy) {
  ag::Tape<double> tape(false);
  auto s = tape.constant(Tensor<double>({2}, std::vector<double>{0.4, -1.5}));
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double real = -(std::log(sig(0.4)) + std::log(sig(-1.5))) / 2;
  const double fake = -(std::log(1 - sig(0.4)) + std::log(1 - sig(-1.5))) / 2;
  EXPECT_NEAR(loss::adversarial(s, true, AdvForm::log).item(), real, 1e-12);
  EXPECT_NEAR(loss::adversarial(s, false, AdvForm::log).item(), fake, 1e-12);
  EXPECT_NEAR(loss::adversarial_generator(s, AdvForm::log).item(), -fake, 1e-12);
}

TEST(Background, Examples) {
  Tensor<float> o({1, 2, 2}), g({1, 2, 2}, 1.0f);
  auto left = box_to_mask({0, 0, 1, 2}, {2, 2});
  EXPECT_DOUBLE_EQ(background_loss(g, o, left), 0.5);
  EXPECT_EQ(background_loss(g, g, left), 0.0);
  EXPECT_EQ(background_loss(g, o, box_to_mask({0, 0, 2, 2}, {2, 2})), 0.0);
  EXPECT_THROW(background_loss(g, Tensor<float>({1, 2, 3}), left), DimensionError);
}

RegionBox random_box(Rng& rng, int h, int w) {
  const int x0 = rng.uniform_int(0, w - 1), y0 = rng.uniform_int(0, h - 1);
  return {x0, y0, rng.uniform_int(x0 + 1, w), rng.uniform_int(y0 + 1, h)};
}

TEST(Background, MatchesOracleAndIgnoresBoxInterior) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const int h = rng.uniform_int(2, 12), w = rng.uniform_int(2, 12);
    auto g = random_tensor({3, h, w}, 1000 + i), o = random_tensor({3, h, w}, 2000 + i);
    const auto box = random_box(rng, h, w);
    const auto mask = box_to_mask(box, {h, w});
    const double v = background_loss(g, o, mask);
    ASSERT_NEAR(v, oracle::background_loss(g, o, mask.cast<double>()), 1e-12);
    auto g2 = g;
    for (int c = 0; c < 3; ++c)
      for (int y = box.y_min; y < box.y_max; ++y)
        for (int x = box.x_min; x < box.x_max; ++x) g2(c, y, x) = rng.uniform(-5, 5);
    ASSERT_NEAR(background_loss(g2, o, mask), v, 1e-12);
  }
}

TEST(CycleIdentity, Examples) {
  Tensor<double> a({3, 4, 4}, 1.0), b({3, 4, 4}, -1.0);
  EXPECT_EQ(cycle_loss(a, a), 0.0);
  EXPECT_EQ(identity_loss(a, b), 2.0);
  auto x = random_tensor({3, 4, 4}, 5), y = random_tensor({3, 4, 4}, 6);
  EXPECT_NEAR(cycle_loss(x, y), oracle::mean_abs(x, y), 1e-12);
  EXPECT_NEAR(identity_loss(x, y), oracle::mean_abs(x, y), 1e-12);
  EXPECT_THROW(cycle_loss(x, Tensor<double>({3, 4, 5})), DimensionError);
}

TEST(Totals, WeightedSumExamples) {
  LossBreakdown zero;
  EXPECT_EQ(total_generator_loss(zero, {}), 0.0);
  LossBreakdown c;
  c.adv_g = 1;
  c.cyc = 2;
  c.id = 3;
  c.tr_g = 4;
  c.bg = 5;
  EXPECT_EQ(total_generator_loss(c, {10, 5, 1, 10}), 90.0);
  EXPECT_EQ(total_generator_loss(c, {0, 0, 0, 0}), 1.0);
  c.adv_d = 0.5;
  c.tr_d = 0.25;
  EXPECT_EQ(total_discriminator_loss(c), 0.75);
}

TEST(Totals, LinearInEachComponent) {
  const LossWeights w{3.5, 0.25, 7.0, 11.0};
  double LossBreakdown::*fields[] = {&LossBreakdown::adv_g, &LossBreakdown::cyc, &LossBreakdown::id, &LossBreakdown::tr_g,
                                      &LossBreakdown::bg};
  const double coef[] = {1.0, w.cyc, w.id, w.tr, w.bg};
  for (int i = 0; i < 5; ++i) {
    LossBreakdown unit;
    unit.*fields[i] = 1.0;
    EXPECT_EQ(total_generator_loss(unit, w), coef[i]);
    unit.*fields[i] = 3.0;
    EXPECT_EQ(total_generator_loss(unit, w), 3.0 * coef[i]);
  }
  EXPECT_THROW((LossWeights{-1, 0, 0, 0}.validate()), ConfigError);
}

TEST(Losses, GradientsWithRespectToGenerated) {
  ParamStore<double> s;
  s.add("g", random_tensor({3, 6, 6}, 40));
  s.add("scores", random_tensor({1, 3, 3}, 41));
  const auto o = random_tensor({3, 6, 6}, 42);
  const auto mask = box_to_mask({1, 2, 4, 5}, {6, 6});
  using Fn = std::function<ag::Var<double>(ParamBinder<double>&)>;
  const std::vector<std::pair<std::string, Fn>> cases{
      {"background", [&](auto& p) { return loss::background(p("g"), p.tape().constant(o), mask); }},
      {"cycle", [&](auto& p) { return loss::cycle(p("g"), p.tape().constant(o)); }},
      {"identity", [&](auto& p) { return loss::identity(p("g"), p.tape().constant(o)); }},
      {"adv_real", [&](auto& p) { return loss::adversarial(p("scores"), true); }},
      {"adv_fake", [&](auto& p) { return loss::adversarial(p("scores"), false); }},
      {"adv_g", [&](auto& p) { return loss::adversarial_generator(p("scores")); }},
      {"adv_log", [&](auto& p) { return loss::adversarial(p("scores"), true, AdvForm::log); }},
      {"adv_g_log", [&](auto& p) { return loss::adversarial_generator(p("scores"), AdvForm::log); }},
      {"tr_d", [&](auto& p) { return loss::target_region_d(p("scores"), ag::scale(p("scores"), 0.5)); }},
      {"tr_g", [&](auto& p) { return loss::target_region_g(p("scores")); }},
  };
  for (const auto& [name, fn] : cases) {
    auto r = grad_check(s, fn, 0, 0);
    EXPECT_LT(r.max_rel_error, 1e-4) << name << ": " << r.worst;
  }
}

TEST(Losses, CsvRow) {
  LossBreakdown b;
  b.adv_g = 0.5;
  b.total_g = 1.25;
  EXPECT_EQ(loss_csv_row(3, b), "3,0.5,0,0,0,0,0,0,1.25,0");
  EXPECT_EQ(parse_adv_form("log"), AdvForm::log);
  EXPECT_THROW(parse_adv_form("hinge"), ConfigError);
}

}  // namespace
}  // namespace scu
