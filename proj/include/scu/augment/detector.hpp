#pragma once

// Toy single-class detector: three stride-2 convs and one 3x3 conv down to an
// 8x8 grid, then a 1x1 head with (confidence, dx, dy, w, h) per cell. A fire
// box is assigned to the cell holding its centre.

#include "scu/eval/detection.hpp"
#include "scu/train/trainer.hpp"

namespace scu {

struct ToyDetectorConfig {
  std::uint64_t seed = 0;
  int epochs = 30;
  double lr = 1e-3;
  int input_size = 64;
  std::vector<int> widths{16, 32, 64};
  double coord_weight = 5.0;
  double min_confidence = 0.01;
  int max_detections = 5;
  double nms_iou = 0.5;

  int grid() const { return input_size >> static_cast<int>(widths.size()); }

  void validate() const {
    if (epochs < 1) throw ConfigError("detector epochs must be >= 1");
    if (!(lr > 0)) throw ConfigError("detector lr must be > 0");
    if (widths.empty() || input_size % (1 << widths.size()) != 0 || grid() < 1)
      throw ConfigError("detector input size must be divisible by 2^" + std::to_string(widths.size()));
    if (max_detections < 1) throw ConfigError("detector max_detections must be >= 1");
  }
};

template <typename T>
ParamStore<T> init_toy_detector(const ToyDetectorConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0xDE7E);
  ParamStore<T> s;
  int cin = 3;
  auto add = [&](const std::string& n, int cout, int k) {
    s.add(n + ".weight", normal_tensor<T>({cout, cin, k, k}, std::sqrt(2.0 / (cin * k * k)), rng));
    s.add(n + ".bias", Tensor<T>({cout}));
    cin = cout;
  };
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) add("conv" + std::to_string(i + 1), cfg.widths[i], 3);
  add("mix", cfg.widths.back(), 3);
  add("head", 5, 1);
  return s;
}

// [3,S,S] -> [5,G,G] raw outputs.
template <typename T>
ag::Var<T> toy_detector_forward(ParamBinder<T>& p, const ToyDetectorConfig& cfg, ag::Var<T> x) {
  auto h = x;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) h = ag::leaky_relu(conv_layer(p, "conv" + std::to_string(i + 1), h, 2, 1), T(0.1));
  h = ag::leaky_relu(conv_layer(p, "mix", h, 1, 1), T(0.1));
  return conv_layer(p, "head", h, 1, 0);
}

inline ImageTensor detector_input(const ImageTensor& img, int size) {
  return img.dim(1) == size && img.dim(2) == size ? img : resize_bilinear(img, size, size);
}

struct DetectorTargets {
  Tensor<float> conf_label;   // [5,G,G], label in channel 0
  Tensor<float> conf_weight;  // 1 on channel 0
  Tensor<float> coord;        // targets in channels 1-4
  Tensor<float> coord_weight; // coord_weight on channels 1-4 of positive cells
};

inline DetectorTargets detector_targets(const SceneRecord& r, const ToyDetectorConfig& cfg) {
  const int g = cfg.grid();
  const double h = r.image.dim(1), w = r.image.dim(2);
  DetectorTargets t{Tensor<float>({5, g, g}), Tensor<float>({5, g, g}), Tensor<float>({5, g, g}), Tensor<float>({5, g, g})};
  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) t.conf_weight(0, y, x) = 1;
  if (r.domain != Domain::fire) return t;
  for (const auto& b : r.boxes) {
    const double cx = (b.x_min + b.x_max) / (2 * w) * g, cy = (b.y_min + b.y_max) / (2 * h) * g;
    const int gx = std::min(g - 1, static_cast<int>(cx)), gy = std::min(g - 1, static_cast<int>(cy));
    t.conf_label(0, gy, gx) = 1;
    const float v[4] = {static_cast<float>(cx - gx), static_cast<float>(cy - gy), static_cast<float>(b.width() / w),
                        static_cast<float>(b.height() / h)};
    for (int c = 0; c < 4; ++c) {
      t.coord(c + 1, gy, gx) = v[c];
      t.coord_weight(c + 1, gy, gx) = static_cast<float>(cfg.coord_weight);
    }
  }
  return t;
}

// Binary cross-entropy on confidence logits plus weighted squared error of the
// sigmoid box terms on positive cells.
template <typename T>
ag::Var<T> toy_detector_loss(ag::Var<T> out, const DetectorTargets& t) {
  auto& tape = *out.tape;
  auto bce = ag::sub(ag::softplus(out), ag::mul(tape.constant(t.conf_label.template cast<T>()), out));
  auto conf = ag::sum(ag::mul(bce, tape.constant(t.conf_weight.template cast<T>())));
  auto err = ag::square(ag::sub(ag::sigmoid(out), tape.constant(t.coord.template cast<T>())));
  auto coord = ag::sum(ag::mul(err, tape.constant(t.coord_weight.template cast<T>())));
  return ag::add(conf, coord);
}

struct ToyDetector {
  ToyDetectorConfig config;
  ParamStore<float> params;

  std::vector<Detection> detect(const ImageTensor& image, const std::string& image_id) const {
    ag::Tape<float> tape(false);
    ParamBinder<float> p(tape, params, false);
    const auto out = toy_detector_forward(p, config, tape.constant(detector_input(image, config.input_size))).value();
    const int g = config.grid();
    const double h = image.dim(1), w = image.dim(2);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<Detection> cand;
    for (int y = 0; y < g; ++y)
      for (int x = 0; x < g; ++x) {
        const double conf = sig(out(0, y, x));
        if (conf < config.min_confidence) continue;
        const double cx = (x + sig(out(1, y, x))) / g * w, cy = (y + sig(out(2, y, x))) / g * h;
        const double bw = sig(out(3, y, x)) * w, bh = sig(out(4, y, x)) * h;
        RegionBox b{static_cast<int>(std::lround(cx - bw / 2)), static_cast<int>(std::lround(cy - bh / 2)),
                    static_cast<int>(std::lround(cx + bw / 2)), static_cast<int>(std::lround(cy + bh / 2))};
        b.x_min = std::clamp(b.x_min, 0, static_cast<int>(w) - 1);
        b.y_min = std::clamp(b.y_min, 0, static_cast<int>(h) - 1);
        b.x_max = std::clamp(b.x_max, b.x_min + 1, static_cast<int>(w));
        b.y_max = std::clamp(b.y_max, b.y_min + 1, static_cast<int>(h));
        cand.push_back({image_id, b, conf, kFireClass});
      }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    std::vector<Detection> kept;
    for (const auto& c : cand) {
      if (static_cast<int>(kept.size()) >= config.max_detections) break;
      const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const auto& k) { return box_iou(k.box, c.box) > config.nms_iou; });
      if (!suppressed) kept.push_back(c);
    }
    return kept;
  }

  std::vector<Detection> detect(const Dataset& ds) const {
    const auto ids = record_ids(ds);
    std::vector<Detection> all;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      auto d = detect(ds.records[i].image, ids[i]);
      all.insert(all.end(), d.begin(), d.end());
    }
    return all;
  }
};

inline ToyDetector train_toy_detector(const Dataset& train_set, const ToyDetectorConfig& cfg) {
  cfg.validate();
  if (train_set.records.empty()) throw ArgumentError("detector training set is empty");
  ToyDetector det{cfg, init_toy_detector<float>(cfg)};
  Adam<float> opt({cfg.lr, 0.9, 0.999, 1e-8});
  const int n = static_cast<int>(train_set.records.size());
  std::vector<ImageTensor> inputs;
  std::vector<DetectorTargets> targets;
  for (const auto& r : train_set.records) {
    inputs.push_back(detector_input(r.image, cfg.input_size));
    targets.push_back(detector_targets(r, cfg));
  }
  long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto order = epoch_order(cfg.seed, e, 5, n);
    for (int k = 0; k < n; ++k, ++step) {
      const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
      ag::Tape<float> tape;
      ParamBinder<float> p(tape, det.params);
      auto loss = toy_detector_loss(toy_detector_forward(p, cfg, tape.constant(inputs[i])), targets[i]);
      check_finite_loss(step, "detector", loss.item());
      tape.backward(loss);
      opt.step(det.params, p.grads());
    }
  }
  return det;
}

inline MetricReport toy_detector_train_eval(const Dataset& train_set, const Dataset& test_set, const ToyDetectorConfig& cfg) {
  if (test_set.records.empty()) throw ArgumentError("detector test set is empty");
  const auto det = train_toy_detector(train_set, cfg);
  return score_detections(det.detect(test_set), fire_ground_truths(test_set));
}

inline MetricReport toy_detector_train_eval(const fs::path& train_dir, const fs::path& test_dir, std::uint64_t seed,
                                            ToyDetectorConfig cfg = {}) {
  cfg.seed = seed;
  return toy_detector_train_eval(load_dataset(train_dir), load_dataset(test_dir), cfg);
}

}  // namespace scu
