#pragma once

// Training objective: domain adversarial, cycle, identity, target-region and
// background terms. Every loss exists in two forms: a tape op used during
// training and gradient checks, and a plain function on tensors.

#include <span>

#include "scu/data/image.hpp"
#include "scu/core/params.hpp"

namespace scu {

enum class AdvForm { least_squares, log };

inline std::string to_string(AdvForm f) { return f == AdvForm::least_squares ? "least_squares" : "log"; }

inline AdvForm parse_adv_form(const std::string& s) {
  if (s == "least_squares" || s == "ls") return AdvForm::least_squares;
  if (s == "log") return AdvForm::log;
  throw ConfigError("unknown adversarial form '" + s + "' (expected least_squares or log)");
}

struct LossWeights {
  double cyc = 10.0;
  double id = 5.0;
  double tr = 1.0;
  double bg = 10.0;

  void validate() const {
    if (cyc < 0 || id < 0 || tr < 0 || bg < 0) throw ConfigError("loss weights must be non-negative");
  }
};

struct LossBreakdown {
  double adv_g = 0, adv_d = 0, cyc = 0, id = 0, tr_g = 0, tr_d = 0, bg = 0, total_g = 0, total_d = 0;

  bool operator==(const LossBreakdown&) const = default;
};

inline double total_generator_loss(const LossBreakdown& c, const LossWeights& w) {
  return c.adv_g + w.cyc * c.cyc + w.id * c.id + w.tr * c.tr_g + w.bg * c.bg;
}

inline double total_discriminator_loss(const LossBreakdown& c) { return c.adv_d + c.tr_d; }

inline constexpr const char* kLossCsvHeader = "step,adv_g,adv_d,cyc,id,tr_g,tr_d,bg,total_g,total_d";

inline std::string loss_csv_row(long step, const LossBreakdown& b) {
  std::string s = std::to_string(step);
  for (double v : {b.adv_g, b.adv_d, b.cyc, b.id, b.tr_g, b.tr_d, b.bg, b.total_g, b.total_d}) s += "," + format_number(v);
  return s;
}

// ---------------------------------------------------------------- tape forms

namespace loss {

// Discriminator-side adversarial term pulling `scores` towards real (1) or fake (0).
//   least squares: mean((s - t)^2)
//   log:           binary cross-entropy on logits
template <typename T>
ag::Var<T> adversarial(ag::Var<T> scores, bool real, AdvForm form = AdvForm::least_squares) {
  if (form == AdvForm::least_squares) return ag::mse_to(scores, real ? T(1) : T(0));
  return ag::mean(ag::softplus(real ? ag::scale(scores, T(-1)) : scores));
}

// Generator-side term on fake scores. The log form is the literal minimax
// objective mean(log(1 - D(G(z)))) with D = sigmoid(scores).
template <typename T>
ag::Var<T> adversarial_generator(ag::Var<T> fake_scores, AdvForm form = AdvForm::least_squares) {
  if (form == AdvForm::least_squares) return ag::mse_to(fake_scores, T(1));
  return ag::scale(ag::mean(ag::softplus(fake_scores)), T(-1));
}

template <typename T>
ag::Var<T> target_region_d(ag::Var<T> real_scores, ag::Var<T> fake_scores, AdvForm form = AdvForm::least_squares) {
  return ag::add(adversarial(real_scores, true, form), adversarial(fake_scores, false, form));
}

template <typename T>
ag::Var<T> target_region_g(ag::Var<T> fake_scores, AdvForm form = AdvForm::least_squares) {
  return adversarial_generator(fake_scores, form);
}

// mean over all C*H*W elements of |(1 - M) * (generated - original)|.
template <typename T>
ag::Var<T> background(ag::Var<T> generated, ag::Var<T> original, const RegionMask& mask) {
  require_same_shape(generated.value(), original.value(), "background_loss");
  const auto& g = generated.value();
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != g.dim(1) || mask.dim(2) != g.dim(2))
    throw DimensionError("background_loss: mask " + shape_str(mask.shape) + " does not match image " + shape_str(g.shape));
  Tensor<T> keep(mask.shape);
  for (std::size_t i = 0; i < mask.numel(); ++i) keep.data[i] = T(1) - static_cast<T>(mask.data[i]);
  auto diff = ag::sub(generated, original);
  return ag::mean(ag::abs(ag::mul_spatial(diff, generated.tape->constant(std::move(keep)))));
}

template <typename T>
ag::Var<T> cycle(ag::Var<T> reconstructed, ag::Var<T> original) {
  require_same_shape(reconstructed.value(), original.value(), "cycle_loss");
  return ag::l1(reconstructed, original);
}

template <typename T>
ag::Var<T> identity(ag::Var<T> output, ag::Var<T> input) {
  require_same_shape(output.value(), input.value(), "identity_loss");
  return ag::l1(output, input);
}

}  // namespace loss

// ---------------------------------------------------------------- plain forms

inline double adversarial_ls(std::span<const double> scores, double target) {
  if (scores.empty()) return 0.0;
  double s = 0;
  for (double v : scores) s += (v - target) * (v - target);
  return s / static_cast<double>(scores.size());
}

inline double target_region_loss_d(std::span<const double> real_scores, std::span<const double> fake_scores) {
  return adversarial_ls(real_scores, 1.0) + adversarial_ls(fake_scores, 0.0);
}

inline double target_region_loss_g(std::span<const double> fake_scores) { return adversarial_ls(fake_scores, 1.0); }

template <typename T>
double background_loss(const Tensor<T>& generated, const Tensor<T>& original, const RegionMask& mask) {
  ag::Tape<T> tape(false);
  return static_cast<double>(loss::background(tape.constant(generated), tape.constant(original), mask).item());
}

template <typename T>
double cycle_loss(const Tensor<T>& reconstructed, const Tensor<T>& original) {
  ag::Tape<T> tape(false);
  return static_cast<double>(loss::cycle(tape.constant(reconstructed), tape.constant(original)).item());
}

template <typename T>
double identity_loss(const Tensor<T>& output, const Tensor<T>& input) {
  ag::Tape<T> tape(false);
  return static_cast<double>(loss::identity(tape.constant(output), tape.constant(input)).item());
}

}  // namespace scu
