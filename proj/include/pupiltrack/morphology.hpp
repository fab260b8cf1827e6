#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pupiltrack/image.hpp"

namespace pupiltrack {

/// Flat structuring element, symmetric about its anchor (the center pixel).
class StructuringElement {
 public:
  enum class Shape { disk, square };

  static StructuringElement disk(int radius) {
    return StructuringElement(Shape::disk, radius);
  }
  static StructuringElement square(int half_width) {
    return StructuringElement(Shape::square, half_width);
  }

  Shape shape() const { return shape_; }
  int radius() const { return radius_; }
  /// Mask offsets relative to the anchor; always contains (0, 0).
  const std::vector<std::pair<int, int>>& offsets() const { return offsets_; }

 private:
  StructuringElement(Shape shape, int radius) : shape_(shape), radius_(radius) {
    if (radius < 0) {
      throw std::invalid_argument("StructuringElement: radius must be >= 0");
    }
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (shape == Shape::square || dx * dx + dy * dy <= radius * radius) {
          offsets_.emplace_back(dx, dy);
        }
      }
    }
  }

  Shape shape_;
  int radius_;
  std::vector<std::pair<int, int>> offsets_;
};

namespace detail {

template <bool TakeMin>
GrayImage morph(const GrayImage& img, const StructuringElement& se) {
  const int w = img.width();
  const int h = img.height();
  const int r = se.radius();
  GrayImage out(w, h);

  // Linear-index deltas are valid wherever no clamping can occur.
  std::vector<long> deltas;
  deltas.reserve(se.offsets().size());
  for (auto [dx, dy] : se.offsets()) {
    deltas.push_back(static_cast<long>(dy) * w + dx);
  }

  const auto src = img.pixels();
  auto dst = out.pixels();

  auto border_pixel = [&](int x, int y) {
    std::uint8_t v = TakeMin ? 255 : 0;
    for (auto [dx, dy] : se.offsets()) {
      const std::uint8_t s = img.at_clamped(x + dx, y + dy);
      v = TakeMin ? std::min(v, s) : std::max(v, s);
    }
    return v;
  };

  for (int y = 0; y < h; ++y) {
    const bool row_interior = y >= r && y < h - r;
    const int x_fast_begin = row_interior ? std::min(r, w) : w;
    const int x_fast_end = row_interior ? std::max(x_fast_begin, w - r) : w;
    for (int x = 0; x < x_fast_begin; ++x) dst[y * static_cast<long>(w) + x] = border_pixel(x, y);
    for (int x = x_fast_begin; x < x_fast_end; ++x) {
      const long base = static_cast<long>(y) * w + x;
      std::uint8_t v = TakeMin ? 255 : 0;
      for (long d : deltas) {
        const std::uint8_t s = src[base + d];
        v = TakeMin ? std::min(v, s) : std::max(v, s);
      }
      dst[base] = v;
    }
    for (int x = x_fast_end; x < w; ++x) dst[y * static_cast<long>(w) + x] = border_pixel(x, y);
  }
  return out;
}

}  // namespace detail

/// Grayscale erosion: out(p) = min over mask offsets q of img(p + q),
/// with coordinates clamped to the image domain.
inline GrayImage erode(const GrayImage& img, const StructuringElement& se) {
  return detail::morph<true>(img, se);
}

/// Grayscale dilation: out(p) = max over mask offsets q of img(p + q).
inline GrayImage dilate(const GrayImage& img, const StructuringElement& se) {
  return detail::morph<false>(img, se);
}

/// Opening: erosion followed by dilation. Removes bright structures smaller
/// than the structuring element.
inline GrayImage opening(const GrayImage& img, const StructuringElement& se) {
  return dilate(erode(img, se), se);
}

/// Closing: dilation followed by erosion. Fills dark structures smaller than
/// the structuring element.
inline GrayImage closing(const GrayImage& img, const StructuringElement& se) {
  return erode(dilate(img, se), se);
}

/// Preprocessing chain for eye images: a closing attenuates dark eyelash
/// streaks, then an opening attenuates bright specular reflections.
inline GrayImage preprocess(const GrayImage& img,
                            const StructuringElement& se_close,
                            const StructuringElement& se_open) {
  return opening(closing(img, se_close), se_open);
}

struct PreprocessConfig {
  int close_radius = 3;
  int open_radius = 3;
  StructuringElement::Shape shape = StructuringElement::Shape::disk;
};

inline GrayImage preprocess(const GrayImage& img, const PreprocessConfig& cfg) {
  auto make = [&](int radius) {
    return cfg.shape == StructuringElement::Shape::disk
               ? StructuringElement::disk(radius)
               : StructuringElement::square(radius);
  };
  return preprocess(img, make(cfg.close_radius), make(cfg.open_radius));
}

}  // namespace pupiltrack
