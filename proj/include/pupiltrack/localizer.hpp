#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pupiltrack/caa.hpp"
#include "pupiltrack/image.hpp"

namespace pupiltrack {

struct CoarseConfig {
  double dark_fraction = 0.05;  // darkest quantile rho selecting the region
  int margin = 15;              // CRI expansion around the region bbox
  int min_region_pixels = 25;   // below this the frame counts as a miss

  void validate() const {
    if (!(dark_fraction > 0.0 && dark_fraction <= 1.0)) {
      throw std::invalid_argument("CoarseConfig: dark_fraction must be in (0, 1]");
    }
    if (margin < 0) throw std::invalid_argument("CoarseConfig: margin must be >= 0");
    if (min_region_pixels < 1) {
      throw std::invalid_argument("CoarseConfig: min_region_pixels must be >= 1");
    }
  }
};

struct CoarseResult {
  PointXY center;                  // centroid of the dark region
  Rect cri;                        // coarse region of interest
  int thresholded_pixel_count = 0; // pixels in the kept region
};

/// Per-pixel feature (x, y, intensity), min-max normalized to [0,1] over the
/// CRI; a constant dimension maps to all zeros.
struct FeatureVector {
  double x = 0.0;
  double y = 0.0;
  double intensity = 0.0;
};

struct RefinedResult {
  PointXY center;  // image coordinates
  int cluster_count = 0;
  double darkest_cluster_mean_intensity = 0.0;  // normalized units
};

namespace detail {

// Smallest intensity whose cumulative count reaches fraction rho; the region
// is every pixel strictly below it, so a constant image yields an empty
// region.
inline int quantile_threshold(const GrayImage& img, double rho) {
  std::array<long long, 256> histogram{};
  for (std::uint8_t px : img.pixels()) ++histogram[px];
  const double target = rho * static_cast<double>(img.pixel_count());
  long long cumulative = 0;
  for (int v = 0; v < 256; ++v) {
    cumulative += histogram[v];
    if (static_cast<double>(cumulative) >= target) return v;
  }
  return 255;
}

// Largest 4-connected component of mask (1 = in region); ties resolved by
// scan order. Returns its pixel indices.
inline std::vector<int> largest_component(const std::vector<std::uint8_t>& mask,
                                          int width, int height) {
  std::vector<int> best;
  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<int> stack;
  std::vector<int> component;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (!mask[start] || visited[start]) continue;
    component.clear();
    stack.assign(1, start);
    visited[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const int x = p % width;
      const int y = p / width;
      const std::array<int, 4> neighbors{p - 1, p + 1, p - width, p + width};
      const std::array<bool, 4> ok{x > 0, x < width - 1, y > 0, y < height - 1};
      for (int i = 0; i < 4; ++i) {
        const int q = neighbors[i];
        if (ok[i] && mask[q] && !visited[q]) {
          visited[q] = 1;
          stack.push_back(q);
        }
      }
    }
    if (component.size() > best.size()) best = component;
  }
  return best;
}

}  // namespace detail

/// Coarse stage: dark-quantile threshold, largest connected component,
/// unweighted centroid, margin-expanded bounding box. Returns nullopt when no
/// sufficiently large dark region exists (closed eye / blank frame).
inline std::optional<CoarseResult> coarse_localize(const GrayImage& img,
                                                   const CoarseConfig& cfg = {}) {
  cfg.validate();
  const int threshold = detail::quantile_threshold(img, cfg.dark_fraction);

  std::vector<std::uint8_t> mask(img.pixel_count(), 0);
  {
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) mask[i] = px[i] < threshold;
  }
  const std::vector<int> region =
      detail::largest_component(mask, img.width(), img.height());
  if (static_cast<int>(region.size()) < cfg.min_region_pixels) {
    return std::nullopt;
  }

  long long sum_x = 0;
  long long sum_y = 0;
  int min_x = std::numeric_limits<int>::max();
  int max_x = std::numeric_limits<int>::min();
  int min_y = std::numeric_limits<int>::max();
  int max_y = std::numeric_limits<int>::min();
  for (int p : region) {
    const int x = p % img.width();
    const int y = p / img.width();
    sum_x += x;
    sum_y += y;
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  const double count = static_cast<double>(region.size());

  CoarseResult result;
  result.center = {static_cast<double>(sum_x) / count,
                   static_cast<double>(sum_y) / count};
  const int x0 = std::max(0, min_x - cfg.margin);
  const int y0 = std::max(0, min_y - cfg.margin);
  const int x1 = std::min(img.width() - 1, max_x + cfg.margin);
  const int y1 = std::min(img.height() - 1, max_y + cfg.margin);
  result.cri = Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  result.thresholded_pixel_count = static_cast<int>(region.size());
  return result;
}

/// One feature per CRI pixel in row-major order, normalized per dimension.
inline std::vector<FeatureVector> extract_features(const GrayImage& img,
                                                   const Rect& cri) {
  if (!cri.inside(img) || cri.area() <= 0) {
    throw std::invalid_argument("extract_features: degenerate or out-of-image CRI");
  }
  int min_i = 255;
  int max_i = 0;
  for (int y = cri.y0; y < cri.y1(); ++y) {
    for (int x = cri.x0; x < cri.x1(); ++x) {
      const int v = img(x, y);
      min_i = std::min(min_i, v);
      max_i = std::max(max_i, v);
    }
  }
  const double x_scale = cri.width > 1 ? 1.0 / (cri.width - 1) : 0.0;
  const double y_scale = cri.height > 1 ? 1.0 / (cri.height - 1) : 0.0;
  const double i_scale = max_i > min_i ? 1.0 / (max_i - min_i) : 0.0;

  std::vector<FeatureVector> features;
  features.reserve(static_cast<std::size_t>(cri.area()));
  for (int y = cri.y0; y < cri.y1(); ++y) {
    for (int x = cri.x0; x < cri.x1(); ++x) {
      features.push_back({(x - cri.x0) * x_scale, (y - cri.y0) * y_scale,
                          (img(x, y) - min_i) * i_scale});
    }
  }
  return features;
}

inline caa::FeatureMatrix to_feature_matrix(const std::vector<FeatureVector>& features) {
  caa::FeatureMatrix m(3, static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Vector3d(features[j].x, features[j].y, features[j].intensity);
  }
  return m;
}

/// Refined stage: clusters the CRI features with CAA, hard-assigns each pixel
/// to its maximum-membership cluster, and returns the spatial centroid of the
/// minimum-mean-intensity cluster in image coordinates.
inline RefinedResult refine_localize(const GrayImage& img,
                                     const CoarseResult& coarse,
                                     const caa::Config& caa_cfg = {}) {
  const std::vector<FeatureVector> features = extract_features(img, coarse.cri);
  const caa::FeatureMatrix feature_matrix = to_feature_matrix(features);
  const caa::State state = caa::run(feature_matrix, caa_cfg);

  const Eigen::Index c_count = state.memberships.rows();
  const Eigen::Index sample_count = state.memberships.cols();
  std::vector<long long> member_count(c_count, 0);
  std::vector<double> sum_intensity(c_count, 0.0);
  std::vector<long long> sum_x(c_count, 0);
  std::vector<long long> sum_y(c_count, 0);

  for (Eigen::Index j = 0; j < sample_count; ++j) {
    Eigen::Index assigned = 0;
    double best = state.memberships(0, j);
    for (Eigen::Index c = 1; c < c_count; ++c) {
      if (state.memberships(c, j) > best) {
        best = state.memberships(c, j);
        assigned = c;
      }
    }
    const int px = coarse.cri.x0 + static_cast<int>(j) % coarse.cri.width;
    const int py = coarse.cri.y0 + static_cast<int>(j) / coarse.cri.width;
    ++member_count[assigned];
    sum_intensity[assigned] += features[static_cast<std::size_t>(j)].intensity;
    sum_x[assigned] += px;
    sum_y[assigned] += py;
  }

  // Darkest cluster by mean intensity over its members; lowest index wins
  // ties. Clusters with no hard members cannot produce a centroid.
  Eigen::Index darkest = -1;
  double darkest_mean = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < c_count; ++c) {
    if (member_count[c] == 0) continue;
    const double mean = sum_intensity[c] / static_cast<double>(member_count[c]);
    if (mean < darkest_mean) {
      darkest_mean = mean;
      darkest = c;
    }
  }

  RefinedResult result;
  result.cluster_count = static_cast<int>(c_count);
  result.darkest_cluster_mean_intensity = darkest_mean;
  result.center = {
      static_cast<double>(sum_x[darkest]) / static_cast<double>(member_count[darkest]),
      static_cast<double>(sum_y[darkest]) / static_cast<double>(member_count[darkest])};
  return result;
}

}  // namespace pupiltrack
