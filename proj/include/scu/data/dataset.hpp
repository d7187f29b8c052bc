#pragma once

// On-disk dataset layout:
//   images/NNNNNN.png   8-bit RGB
//   labels/NNNNNN.txt   "<class_id> <cx> <cy> <w> <h>" per box, normalised to [0,1]
//   manifest.txt        key=value: count, height, width, seed, domain, ...
// Class 0 marks a fire box; class 1 marks the designated target box of a
// non-fire record.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scu/core/params.hpp"
#include "scu/data/synth.hpp"

namespace scu {

inline constexpr int kFireClass = 0;
inline constexpr int kTargetClass = 1;

struct Dataset {
  std::vector<SceneRecord> records;
  KeyValues manifest;
  std::vector<std::string> ids;  // file stems when loaded from disk

  ImageSize size() const {
    if (records.empty()) return {};
    return size_of(records.front().image);
  }
};

inline std::string record_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

inline std::string format_label_line(int class_id, const RegionBox& b, ImageSize s) {
  const double cx = (b.x_min + b.x_max) / (2.0 * s.width);
  const double cy = (b.y_min + b.y_max) / (2.0 * s.height);
  const double w = static_cast<double>(b.width()) / s.width;
  const double h = static_cast<double>(b.height()) / s.height;
  return std::to_string(class_id) + " " + format_number(cx) + " " + format_number(cy) + " " + format_number(w) + " " +
         format_number(h);
}

struct LabelLine {
  int class_id;
  RegionBox box;
};

inline LabelLine parse_label_line(const std::string& line, ImageSize s, const std::string& file, std::size_t lineno) {
  std::istringstream is(line);
  std::vector<std::string> fields;
  for (std::string f; is >> f;) fields.push_back(f);
  if (fields.size() != 5)
    throw ParseError(file, lineno, "expected 5 fields '<class_id> <cx> <cy> <w> <h>', found " +
                                       std::to_string(fields.size()));
  double v[5];
  for (int i = 0; i < 5; ++i) {
    try {
      v[i] = parse_double(fields[static_cast<std::size_t>(i)], "field");
    } catch (const ConfigError&) {
      throw ParseError(file, lineno, "field " + std::to_string(i + 1) + " is not a number: '" +
                                         fields[static_cast<std::size_t>(i)] + "'");
    }
  }
  if (v[0] != std::floor(v[0]) || v[0] < 0) throw ParseError(file, lineno, "class id must be a non-negative integer");
  for (int i = 1; i < 5; ++i)
    if (v[i] < 0 || v[i] > 1) throw ParseError(file, lineno, "normalised coordinate outside [0,1]");
  LabelLine out{static_cast<int>(v[0]), {}};
  out.box.x_min = static_cast<int>(std::lround(v[1] * s.width - v[3] * s.width / 2));
  out.box.x_max = static_cast<int>(std::lround(v[1] * s.width + v[3] * s.width / 2));
  out.box.y_min = static_cast<int>(std::lround(v[2] * s.height - v[4] * s.height / 2));
  out.box.y_max = static_cast<int>(std::lround(v[2] * s.height + v[4] * s.height / 2));
  if (!out.box.fits(s)) throw ParseError(file, lineno, "box " + out.box.str() + " outside the image");
  return out;
}

// Writes the dataset; images go through one 8-bit quantisation.
inline void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  KeyValues manifest = ds.manifest;
  manifest["count"] = std::to_string(ds.records.size());
  if (!ds.records.empty()) {
    manifest["height"] = std::to_string(ds.size().height);
    manifest["width"] = std::to_string(ds.size().width);
  }
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    if (size_of(r.image) != ds.size()) throw DimensionError("save_dataset: records have different resolutions");
    const std::string stem = record_stem(i);
    write_png(dir / "images" / (stem + ".png"), r.image);
    std::ofstream lab(dir / "labels" / (stem + ".txt"), std::ios::binary | std::ios::trunc);
    if (!lab) throw LoadError("cannot write labels for record " + stem);
    const int cls = r.domain == Domain::fire ? kFireClass : kTargetClass;
    for (const auto& b : r.boxes) lab << format_label_line(cls, b, size_of(r.image)) << '\n';
  }
  write_key_values(dir / "manifest.txt", manifest);
}

inline void save_dataset(const fs::path& dir, const std::vector<SceneRecord>& records, std::uint64_t seed) {
  Dataset ds{records, {{"seed", std::to_string(seed)}}, {}};
  if (!records.empty()) {
    const bool all_fire = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.domain == Domain::fire; });
    const bool none_fire = std::none_of(records.begin(), records.end(), [](const auto& r) { return r.domain == Domain::fire; });
    ds.manifest["domain"] = all_fire ? "fire" : (none_fire ? "non_fire" : "mixed");
  }
  save_dataset(dir, ds);
}

inline Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("dataset directory not found: " + dir.string());
  Dataset ds;
  if (fs::exists(dir / "manifest.txt")) ds.manifest = read_key_values(dir / "manifest.txt");
  std::vector<fs::path> images;
  if (fs::is_directory(dir / "images"))
    for (const auto& e : fs::directory_iterator(dir / "images"))
      if (e.path().extension() == ".png") images.push_back(e.path());
  std::sort(images.begin(), images.end());
  for (const auto& img_path : images) {
    SceneRecord rec;
    rec.image = read_png(img_path);
    const fs::path label_path = dir / "labels" / (img_path.stem().string() + ".txt");
    std::ifstream in(label_path, std::ios::binary);
    if (!in) throw LoadError("missing label file " + label_path.string());
    bool fire = false;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto l = parse_label_line(line, size_of(rec.image), label_path.string(), n);
      fire = fire || l.class_id == kFireClass;
      rec.boxes.push_back(l.box);
    }
    rec.domain = fire ? Domain::fire : Domain::non_fire;
    if (!ds.records.empty() && size_of(rec.image) != ds.size())
      throw DimensionError("dataset " + dir.string() + " mixes resolutions");
    ds.records.push_back(std::move(rec));
    ds.ids.push_back(img_path.stem().string());
  }
  return ds;
}

// Image ids used by prediction files: the record stem ("000042").
inline std::vector<std::string> record_ids(const Dataset& ds) {
  if (ds.ids.size() == ds.records.size()) return ds.ids;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < ds.records.size(); ++i) ids.push_back(record_stem(i));
  return ids;
}

}  // namespace scu
