#pragma once

// Deterministic image embeddings for the distribution metrics. The built-in
// extractor is a frozen random conv net (3x3 stride-2 convs + relu) evaluated
// in double precision; features are the global average of the last map.

#include <fstream>
#include <sstream>

#include "scu/core/params.hpp"
#include "scu/data/image.hpp"

namespace scu {

using FeatureVec = std::vector<double>;

struct FeatureLayer {
  Tensor<double> weight;  // [Cout, Cin, k, k]
  Tensor<double> bias;    // [Cout]
  int stride = 1;
  int pad = 0;
  bool relu = true;
};

class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<FeatureLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("feature extractor needs at least one layer");
  }

  // He-initialised random net, widths 16/32/64/64, output dimension 64.
  static FeatureExtractor builtin(std::uint64_t seed = 0) {
    std::vector<FeatureLayer> layers;
    Rng rng(seed, 0xFEA7);
    int cin = 3;
    for (int w : {16, 32, 64, 64}) {
      layers.push_back({normal_tensor<double>({w, cin, 3, 3}, std::sqrt(2.0 / (cin * 9)), rng), Tensor<double>({w}), 2, 1, true});
      cin = w;
    }
    return FeatureExtractor(std::move(layers));
  }

  int dim() const { return layers_.back().weight.dim(0); }
  std::size_t depth() const { return layers_.size(); }

  std::vector<Tensor<double>> feature_maps(const ImageTensor& image) const {
    if (image.rank() != 3 || image.dim(0) != layers_.front().weight.dim(1))
      throw DimensionError("feature extractor: expected [" + std::to_string(layers_.front().weight.dim(1)) +
                           ",H,W] image, got " + shape_str(image.shape));
    std::vector<Tensor<double>> maps;
    Tensor<double> h = image.cast<double>();
    for (const auto& l : layers_) {
      h = kernels::conv2d_forward(h, l.weight, &l.bias, l.stride, l.pad);
      if (l.relu)
        for (auto& v : h.data) v = std::max(0.0, v);
      maps.push_back(h);
    }
    return maps;
  }

  FeatureVec features(const ImageTensor& image) const {
    const auto last = feature_maps(image).back();
    const int c = last.dim(0);
    const std::size_t plane = static_cast<std::size_t>(last.dim(1)) * last.dim(2);
    FeatureVec f(static_cast<std::size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += last.data[ch * plane + i];
      f[static_cast<std::size_t>(ch)] = s / static_cast<double>(plane);
    }
    return f;
  }

  std::vector<FeatureVec> features(const std::vector<ImageTensor>& images) const {
    std::vector<FeatureVec> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(features(img));
    return out;
  }

 private:
  std::vector<FeatureLayer> layers_;
};

// Externally computed embeddings: one whitespace-separated vector per line.
inline std::vector<FeatureVec> read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open embedding file " + path.string());
  std::vector<FeatureVec> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    FeatureVec v;
    for (std::string tok; is >> tok;) {
      try {
        v.push_back(parse_double(tok, "embedding"));
      } catch (const ConfigError&) {
        throw ParseError(path.string(), n, "not a number: '" + tok + "'");
      }
    }
    if (!out.empty() && v.size() != out.front().size())
      throw ParseError(path.string(), n, "expected " + std::to_string(out.front().size()) + " values, found " + std::to_string(v.size()));
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace scu
