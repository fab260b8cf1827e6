#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pupiltrack/image.hpp"

namespace pupiltrack {

/// Configuration for the synthetic eye-sequence generator.
///
/// Each frame shows a dark pupil disk inside a brighter iris disk on a bright
/// background, moving at constant velocity, optionally corrupted by bright
/// specular spots, dark eyelash-like streaks and additive Gaussian noise.
struct SynthConfig {
  int width = 640;
  int height = 480;
  int frame_count = 1;

  double pupil_radius = 20.0;
  double iris_radius = 0.0;  // <= 0 selects 2.5 * pupil_radius

  int pupil_intensity = 30;
  int iris_intensity = 90;
  int background_intensity = 160;

  PointXY initial_center{320.0, 240.0};
  PointXY velocity{0.0, 0.0};

  double noise_sigma = 0.0;

  int specular_spot_count = 0;
  double specular_spot_radius = 3.0;
  int eyelash_streak_count = 0;

  std::uint32_t seed = 0;

  double effective_iris_radius() const {
    return iris_radius > 0.0 ? iris_radius : 2.5 * pupil_radius;
  }
};

/// Analytic per-frame pupil centers of a generated sequence.
struct GroundTruth {
  std::vector<PointXY> centers;
};

/// Throws std::invalid_argument when the configuration cannot be rendered.
inline void validate_config(const SynthConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SynthConfig: " + msg);
  };
  if (cfg.width < 1 || cfg.height < 1) fail("dimensions must be >= 1");
  if (cfg.frame_count < 1) fail("frame_count must be >= 1");
  if (cfg.pupil_radius <= 0.0) fail("pupil_radius must be > 0");
  if (cfg.effective_iris_radius() <= cfg.pupil_radius) {
    fail("iris_radius must exceed pupil_radius");
  }
  if (!(cfg.pupil_intensity < cfg.iris_intensity &&
        cfg.iris_intensity < cfg.background_intensity)) {
    fail("intensities must satisfy pupil < iris < background");
  }
  if (cfg.pupil_intensity < 0 || cfg.background_intensity > 255) {
    fail("intensities must lie in [0, 255]");
  }
  if (cfg.noise_sigma < 0.0) fail("noise_sigma must be >= 0");
  if (cfg.specular_spot_count < 0 || cfg.eyelash_streak_count < 0) {
    fail("artifact counts must be >= 0");
  }
  // Constant velocity: checking both endpoints bounds the whole trajectory.
  for (int k : {0, cfg.frame_count - 1}) {
    const double cx = cfg.initial_center.x + k * cfg.velocity.x;
    const double cy = cfg.initial_center.y + k * cfg.velocity.y;
    if (cx < cfg.pupil_radius || cx > cfg.width - 1 - cfg.pupil_radius ||
        cy < cfg.pupil_radius || cy > cfg.height - 1 - cfg.pupil_radius) {
      fail("trajectory leaves the frame at frame " + std::to_string(k));
    }
  }
}

namespace detail {

// Fraction-weighted pupil/iris/background value via 4x4 supersampling.
// Pixels far from both circle boundaries take the exact region value.
inline std::uint8_t render_base_pixel(int ix, int iy, PointXY center,
                                      double rp, double ri,
                                      const SynthConfig& cfg) {
  const double dx = ix - center.x;
  const double dy = iy - center.y;
  const double d = std::sqrt(dx * dx + dy * dy);
  // Subsamples stay within sqrt(2)*0.375 < 0.54 px of the pixel center.
  if (d <= rp - 0.6) return static_cast<std::uint8_t>(cfg.pupil_intensity);
  if (d >= ri + 0.6) return static_cast<std::uint8_t>(cfg.background_intensity);
  if (d >= rp + 0.6 && d <= ri - 0.6) {
    return static_cast<std::uint8_t>(cfg.iris_intensity);
  }
  int in_pupil = 0;
  int in_iris = 0;
  for (int sy = 0; sy < 4; ++sy) {
    const double py = iy - 0.5 + (sy + 0.5) / 4.0 - center.y;
    for (int sx = 0; sx < 4; ++sx) {
      const double px = ix - 0.5 + (sx + 0.5) / 4.0 - center.x;
      const double dd = px * px + py * py;
      if (dd <= rp * rp) ++in_pupil;
      if (dd <= ri * ri) ++in_iris;
    }
  }
  const double value = (in_pupil * cfg.pupil_intensity +
                        (in_iris - in_pupil) * cfg.iris_intensity +
                        (16 - in_iris) * cfg.background_intensity) /
                       16.0;
  return static_cast<std::uint8_t>(std::lround(value));
}

inline void draw_disk(GrayImage& img, double cx, double cy, double radius,
                      std::uint8_t value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) img(x, y) = value;
    }
  }
}

inline void draw_segment(GrayImage& img, PointXY a, PointXY b, int width_px,
                         std::uint8_t value) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.4)));
  const double radius = width_px / 2.0;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int px = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
    const int py = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx * dx + dy * dy <= radius * radius + 0.01 &&
            img.contains(px + dx, py + dy)) {
          img(px + dx, py + dy) = value;
        }
      }
    }
  }
}

}  // namespace detail

/// Renders a synthetic sequence and its analytic ground truth.
/// Deterministic for a fixed config (including seed).
inline std::pair<std::vector<GrayImage>, GroundTruth> generate_sequence(
    const SynthConfig& cfg) {
  validate_config(cfg);

  const double rp = cfg.pupil_radius;
  const double ri = cfg.effective_iris_radius();

  std::mt19937 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<GrayImage> frames;
  frames.reserve(cfg.frame_count);
  GroundTruth truth;
  truth.centers.reserve(cfg.frame_count);

  for (int k = 0; k < cfg.frame_count; ++k) {
    const PointXY center{cfg.initial_center.x + k * cfg.velocity.x,
                         cfg.initial_center.y + k * cfg.velocity.y};
    truth.centers.push_back(center);

    GrayImage frame(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        frame(x, y) = detail::render_base_pixel(x, y, center, rp, ri, cfg);
      }
    }

    for (int i = 0; i < cfg.eyelash_streak_count; ++i) {
      PointXY top{unit(rng) * (cfg.width - 1), unit(rng) * (cfg.height / 8.0)};
      PointXY bottom{top.x + (unit(rng) - 0.5) * (cfg.height / 2.0),
                     cfg.height * (3.0 / 8.0) +
                         unit(rng) * (cfg.height / 8.0 - 1.0)};
      const int width_px = unit(rng) < 0.5 ? 1 : 2;
      detail::draw_segment(frame, top, bottom, width_px,
                           static_cast<std::uint8_t>(cfg.pupil_intensity));
    }

    for (int i = 0; i < cfg.specular_spot_count; ++i) {
      const double rs = cfg.specular_spot_radius;
      double lo = rp + rs;
      double hi = ri - rs;
      if (lo > hi) lo = hi = 0.5 * (rp + ri);
      const double rad = lo + unit(rng) * (hi - lo);
      const double ang = unit(rng) * 2.0 * 3.14159265358979323846;
      detail::draw_disk(frame, center.x + rad * std::cos(ang),
                        center.y + rad * std::sin(ang), rs, 255);
    }

    if (cfg.noise_sigma > 0.0) {
      for (auto& px : frame.pixels()) {
        const double noisy = px + cfg.noise_sigma * gauss(rng);
        px = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(noisy), 0, 255));
      }
    }

    frames.push_back(std::move(frame));
  }
  return {std::move(frames), std::move(truth)};
}

}  // namespace pupiltrack
