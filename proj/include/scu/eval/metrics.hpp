#pragma once

// Image-quality metrics: Frechet distance, KID, perceptual distance and the
// generation IoU built on localize_generated_fire.

#include <Eigen/Dense>
#include <deque>
#include <optional>

#include "scu/eval/features.hpp"

namespace scu {

using DenseMat = Eigen::MatrixXd;
using DenseVec = Eigen::VectorXd;

inline constexpr double kCovRidge = 1e-6;

struct GaussianFit {
  DenseVec mean;
  DenseMat cov;
};

inline DenseMat feature_matrix(const std::vector<FeatureVec>& f) {
  if (f.empty()) throw ArgumentError("feature set is empty");
  const auto d = static_cast<Eigen::Index>(f.front().size());
  DenseMat x(static_cast<Eigen::Index>(f.size()), d);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (static_cast<Eigen::Index>(f[i].size()) != d) throw DimensionError("feature vectors differ in length");
    for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = f[i][static_cast<std::size_t>(j)];
  }
  return x;
}

// Sample mean and unbiased covariance (zero covariance for a single sample).
inline GaussianFit fit_gaussian(const std::vector<FeatureVec>& f) {
  const DenseMat x = feature_matrix(f);
  GaussianFit g;
  g.mean = x.colwise().mean().transpose();
  const DenseMat centred = x.rowwise() - g.mean.transpose();
  g.cov = x.rows() > 1 ? DenseMat((centred.transpose() * centred) / static_cast<double>(x.rows() - 1))
                       : DenseMat::Zero(x.cols(), x.cols());
  return g;
}

namespace detail {

inline DenseMat psd_sqrt(const DenseMat& s, const char* what) {
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError(std::string("frechet_distance: eigendecomposition of ") + what + " failed");
  const DenseVec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}). The cross term uses
// tr((sqrt(S1) S2 sqrt(S1))^{1/2}), a symmetric PSD matrix whose tiny
// negative eigenvalues are clamped to zero.
inline double frechet_distance(const DenseVec& mu1, const DenseMat& cov1, const DenseVec& mu2, const DenseMat& cov2) {
  const auto d = mu1.size();
  if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d)
    throw DimensionError("frechet_distance: dimension mismatch");
  const DenseMat r1 = detail::psd_sqrt(cov1, "cov1");
  const DenseMat m = r1 * cov2 * r1;
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition of the covariance product failed");
  const DenseVec ev = es.eigenvalues();
  const double cross = ev.cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross;
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "frechet_distance is not finite (eigenvalue range of the covariance product [" << ev.minCoeff() << ", "
       << ev.maxCoeff() << "])";
    throw NumericalError(os.str());
  }
  return v;
}

inline double fid_from_features(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b) {
  auto ga = fit_gaussian(a), gb = fit_gaussian(b);
  if (ga.mean.size() != gb.mean.size()) throw DimensionError("fid: feature dimensions differ");
  ga.cov += kCovRidge * DenseMat::Identity(ga.cov.rows(), ga.cov.cols());
  gb.cov += kCovRidge * DenseMat::Identity(gb.cov.rows(), gb.cov.cols());
  return frechet_distance(ga.mean, ga.cov, gb.mean, gb.cov);
}

inline double fid(const std::vector<ImageTensor>& a, const std::vector<ImageTensor>& b, const FeatureExtractor& fx) {
  if (a.empty() || b.empty()) throw ArgumentError("fid: image sets must be non-empty");
  return fid_from_features(fx.features(a), fx.features(b));
}

// Unbiased MMD^2 with the cubic polynomial kernel k(x, y) = (x.y / d + 1)^3.
inline double kid_from_features(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("kid: each set needs at least 2 samples");
  const DenseMat x = feature_matrix(a), y = feature_matrix(b);
  if (x.cols() != y.cols()) throw DimensionError("kid: feature dimensions differ");
  const double d = static_cast<double>(x.cols());
  auto kernel = [d](const DenseMat& p, const DenseMat& q) {
    return DenseMat(((p * q.transpose()).array() / d + 1.0).cube());
  };
  const DenseMat kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const double sxx = kxx.sum() - kxx.trace(), syy = kyy.sum() - kyy.trace();
  return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * kxy.sum() / (n * m);
}

inline double kid(const std::vector<ImageTensor>& a, const std::vector<ImageTensor>& b, const FeatureExtractor& fx) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("kid: each set needs at least 2 images");
  return kid_from_features(fx.features(a), fx.features(b));
}

// Sum over layers of the mean squared feature-map difference.
inline double perceptual_distance(const ImageTensor& a, const ImageTensor& b, const FeatureExtractor& fx) {
  if (a.shape != b.shape) throw DimensionError("perceptual_distance: shapes " + shape_str(a.shape) + " and " + shape_str(b.shape) + " differ");
  const auto ma = fx.feature_maps(a), mb = fx.feature_maps(b);
  double total = 0;
  for (std::size_t l = 0; l < ma.size(); ++l) {
    double s = 0;
    for (std::size_t i = 0; i < ma[l].numel(); ++i) s += (ma[l].data[i] - mb[l].data[i]) * (ma[l].data[i] - mb[l].data[i]);
    total += s / static_cast<double>(ma[l].numel());
  }
  return total;
}

// Mean perceptual distance over index-aligned pairs.
inline double mean_perceptual_distance(const std::vector<ImageTensor>& a, const std::vector<ImageTensor>& b,
                                       const FeatureExtractor& fx) {
  if (a.empty() || a.size() != b.size()) throw ArgumentError("perceptual: sets must be non-empty and of equal size");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += perceptual_distance(a[i], b[i], fx);
  return s / static_cast<double>(a.size());
}

inline double box_iou(const RegionBox& a, const RegionBox& b) {
  const long iw = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long ih = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = static_cast<double>(iw * ih);
  const double uni = static_cast<double>(a.area() + b.area()) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline constexpr double kLocalizeThreshold = 0.2;

// Tight box of the largest 4-connected component of pixels whose max-channel
// |generated - original| exceeds `threshold`. Ties go to the component found
// first in raster order.
inline std::optional<RegionBox> localize_generated_fire(const ImageTensor& generated, const ImageTensor& original,
                                                        double threshold = kLocalizeThreshold) {
  if (generated.shape != original.shape || generated.rank() != 3)
    throw DimensionError("localize_generated_fire: shapes " + shape_str(generated.shape) + " and " + shape_str(original.shape) + " differ");
  const int c = generated.dim(0), h = generated.dim(1), w = generated.dim(2);
  std::vector<char> on(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = 0;
      for (int ch = 0; ch < c; ++ch) m = std::max(m, std::abs(static_cast<double>(generated(ch, y, x)) - original(ch, y, x)));
      on[static_cast<std::size_t>(y) * w + x] = m > threshold;
    }
  std::vector<char> seen(on.size(), 0);
  std::optional<RegionBox> best;
  long best_size = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!on[idx] || seen[idx]) continue;
      RegionBox b{x, y, x + 1, y + 1};
      long size = 0;
      seen[idx] = 1;
      queue.emplace_back(y, x);
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        ++size;
        b.x_min = std::min(b.x_min, cx);
        b.y_min = std::min(b.y_min, cy);
        b.x_max = std::max(b.x_max, cx + 1);
        b.y_max = std::max(b.y_max, cy + 1);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
          if (on[n] && !seen[n]) {
            seen[n] = 1;
            queue.emplace_back(ny, nx);
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best = b;
      }
    }
  return best;
}

// Mean IoU between the localised change and the intended box; a pair with no
// detectable change scores 0.
inline double generation_iou(const std::vector<ImageTensor>& generated, const std::vector<ImageTensor>& sources,
                             const std::vector<RegionBox>& boxes, double threshold = kLocalizeThreshold) {
  if (generated.empty() || generated.size() != sources.size() || sources.size() != boxes.size())
    throw ArgumentError("generation_iou: sets must be non-empty and aligned");
  double s = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const auto found = localize_generated_fire(generated[i], sources[i], threshold);
    s += found ? box_iou(*found, boxes[i]) : 0.0;
  }
  return s / static_cast<double>(generated.size());
}

}  // namespace scu
