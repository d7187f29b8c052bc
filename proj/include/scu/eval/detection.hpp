#pragma once

// Detection metrics: precision, recall, COCO-style 101-point AP, mAP over
// IoU thresholds, scoring of prediction files, and the metric report record.

#include <iomanip>

#include "scu/data/dataset.hpp"
#include "scu/eval/metrics.hpp"

namespace scu {

struct Detection {
  std::string image_id;
  RegionBox box;
  double confidence = 0;
  int class_id = kFireClass;
};

struct GroundTruth {
  std::string image_id;
  RegionBox box;
  int class_id = kFireClass;
};

// Zero denominators give 0.
inline double precision(long tp, long fp) { return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
inline double recall(long tp, long fn) { return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }

struct MatchResult {
  std::vector<bool> tp;          // per detection, in ranked order
  std::vector<std::size_t> order;  // ranked detection indices
};

// Ranks detections by descending confidence (stable) and greedily matches
// each to the unmatched ground truth of the same image with the highest IoU.
inline MatchResult greedy_match(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_threshold) {
  MatchResult r;
  r.order.resize(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) r.order[i] = i;
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image_id].push_back(g);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t i : r.order) {
    const auto& d = dets[i];
    double best = -1;
    std::size_t best_g = 0;
    auto it = by_image.find(d.image_id);
    if (it != by_image.end())
      for (std::size_t g : it->second) {
        if (used[g]) continue;
        const double v = box_iou(d.box, gts[g].box);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
    const bool hit = best >= iou_threshold;
    if (hit) used[best_g] = true;
    r.tp.push_back(hit);
  }
  return r;
}

inline double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double iou_threshold) {
  if (gts.empty() || dets.empty()) return 0.0;
  const auto m = greedy_match(dets, gts, iou_threshold);
  const std::size_t n = m.tp.size();
  std::vector<double> prec(n), rec(n);
  long tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += m.tp[k];
    prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(tp) / static_cast<double>(gts.size());
  }
  for (std::size_t k = n - 1; k > 0; --k) prec[k - 1] = std::max(prec[k - 1], prec[k]);
  double sum = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    const auto it = std::lower_bound(rec.begin(), rec.end(), r);
    if (it != rec.end()) sum += prec[static_cast<std::size_t>(it - rec.begin())];
  }
  return sum / 101.0;
}

struct MapRange {
  double map50 = 0;
  double map5095 = 0;
};

inline MapRange map_range(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
  MapRange m;
  m.map50 = average_precision(dets, gts, 0.5);
  double s = 0;
  for (int k = 0; k < 10; ++k) s += average_precision(dets, gts, (50 + 5 * k) / 100.0);
  m.map5095 = s / 10.0;
  return m;
}

// ---------------------------------------------------------------- reports

struct MetricReport {
  std::string label;
  std::optional<double> fid, kid, perceptual, iou, precision, recall, map50, map5095;

  std::vector<std::pair<std::string, std::optional<double>>> fields() const {
    return {{"fid", fid},           {"kid", kid},       {"perceptual", perceptual}, {"iou", iou},
            {"precision", precision}, {"recall", recall}, {"map50", map50},           {"map5095", map5095}};
  }

  bool all_finite() const {
    for (const auto& [_, v] : fields())
      if (v && !std::isfinite(*v)) return false;
    return true;
  }
};

// Absent values are written as "-".
inline std::string format_metric(const std::optional<double>& v) { return v ? format_number(*v) : "-"; }

inline std::string report_csv(const std::vector<MetricReport>& rows, const std::string& key, const std::vector<std::string>& columns) {
  std::string s = key;
  for (const auto& c : columns) s += "," + c;
  s += "\n";
  for (const auto& r : rows) {
    s += r.label;
    const auto f = r.fields();
    for (const auto& c : columns) {
      auto it = std::find_if(f.begin(), f.end(), [&](const auto& p) { return p.first == c; });
      if (it == f.end()) throw ConfigError("unknown metric column '" + c + "'");
      s += "," + format_metric(it->second);
    }
    s += "\n";
  }
  return s;
}

inline std::string report_text(const MetricReport& r) {
  std::ostringstream os;
  if (!r.label.empty()) os << r.label << "\n";
  for (const auto& [name, v] : r.fields())
    if (v) os << "  " << std::left << std::setw(11) << name << " " << format_number(*v) << "\n";
  return os.str();
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << content;
}

// ---------------------------------------------------------------- prediction files

inline constexpr double kScoreConfidence = 0.5;
inline constexpr double kScoreIou = 0.5;

// "<image_id> <class_id> <confidence> <x_min> <y_min> <x_max> <y_max>" per line.
inline std::vector<Detection> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open predictions file " + path.string());
  std::vector<Detection> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::vector<std::string> f;
    for (std::string t; is >> t;) f.push_back(t);
    if (f.size() != 7)
      throw ParseError(path.string(), n, "expected 7 fields '<image_id> <class_id> <confidence> <x_min> <y_min> <x_max> <y_max>', found " +
                                             std::to_string(f.size()));
    Detection d;
    d.image_id = f[0];
    try {
      d.class_id = static_cast<int>(parse_int(f[1], "class_id"));
      d.confidence = parse_double(f[2], "confidence");
      d.box = {static_cast<int>(parse_int(f[3], "x_min")), static_cast<int>(parse_int(f[4], "y_min")),
               static_cast<int>(parse_int(f[5], "x_max")), static_cast<int>(parse_int(f[6], "y_max"))};
    } catch (const ConfigError& e) {
      throw ParseError(path.string(), n, e.what());
    }
    if (!(d.confidence >= 0 && d.confidence <= 1)) throw ParseError(path.string(), n, "confidence outside [0,1]");
    if (d.box.x_max <= d.box.x_min || d.box.y_max <= d.box.y_min) throw ParseError(path.string(), n, "empty box " + d.box.str());
    out.push_back(d);
  }
  return out;
}

inline void write_predictions(const fs::path& path, const std::vector<Detection>& dets) {
  std::string s;
  for (const auto& d : dets)
    s += d.image_id + " " + std::to_string(d.class_id) + " " + format_number(d.confidence) + " " + std::to_string(d.box.x_min) + " " +
         std::to_string(d.box.y_min) + " " + std::to_string(d.box.x_max) + " " + std::to_string(d.box.y_max) + "\n";
  write_text_file(path, s);
}

// Fire boxes of every record, keyed by record stem.
inline std::vector<GroundTruth> fire_ground_truths(const Dataset& ds) {
  const auto ids = record_ids(ds);
  std::vector<GroundTruth> gts;
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    if (ds.records[i].domain == Domain::fire)
      for (const auto& b : ds.records[i].boxes) gts.push_back({ids[i], b, kFireClass});
  return gts;
}

// Precision/recall at confidence >= 0.5 and IoU >= 0.5, plus mAP@0.5 and mAP@0.5:0.95.
inline MetricReport score_detections(const std::vector<Detection>& all, const std::vector<GroundTruth>& gts) {
  std::vector<Detection> dets;
  for (const auto& d : all)
    if (d.class_id == kFireClass) dets.push_back(d);
  std::vector<Detection> confident;
  for (const auto& d : dets)
    if (d.confidence >= kScoreConfidence) confident.push_back(d);
  const auto m = greedy_match(confident, gts, kScoreIou);
  const long tp = std::count(m.tp.begin(), m.tp.end(), true);
  const long fp = static_cast<long>(confident.size()) - tp;
  const long fn = static_cast<long>(gts.size()) - tp;
  MetricReport r;
  r.precision = precision(tp, fp);
  r.recall = recall(tp, fn);
  const auto mr = map_range(dets, gts);
  r.map50 = mr.map50;
  r.map5095 = mr.map5095;
  return r;
}

inline MetricReport score_predictions_file(const fs::path& predictions, const fs::path& dataset_dir) {
  const auto dets = read_predictions(predictions);
  return score_detections(dets, fire_ground_truths(load_dataset(dataset_dir)));
}

}  // namespace scu
