#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pupiltrack {

/// 8-bit grayscale image with row-major pixel storage.
class GrayImage {
 public:
  GrayImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("GrayImage: dimensions must be >= 1, got " +
                                  std::to_string(width) + "x" +
                                  std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  GrayImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("GrayImage: dimensions must be >= 1");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height) {
      throw std::invalid_argument("GrayImage: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match " + std::to_string(width) +
                                  "x" + std::to_string(height));
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return data_.size(); }

  std::uint8_t operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t& operator()(int x, int y) {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  /// Reads with coordinates clamped to the image domain (edge replication).
  std::uint8_t at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return (*this)(x, y);
  }

  bool contains(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  std::span<const std::uint8_t> pixels() const { return data_; }
  std::span<std::uint8_t> pixels() { return data_; }

  bool operator==(const GrayImage&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

/// Axis-aligned rectangle in image coordinates (x0, y0 inclusive top-left).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  int x1() const { return x0 + width; }    // exclusive
  int y1() const { return y0 + height; }   // exclusive
  long long area() const { return static_cast<long long>(width) * height; }

  bool contains(double x, double y) const {
    return x >= x0 && x <= x0 + width - 1 && y >= y0 && y <= y0 + height - 1;
  }
  bool inside(const GrayImage& img) const {
    return x0 >= 0 && y0 >= 0 && width >= 0 && height >= 0 &&
           x1() <= img.width() && y1() <= img.height();
  }

  bool operator==(const Rect&) const = default;
};

/// Subpixel image point.
struct PointXY {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const PointXY&) const = default;
};

}  // namespace pupiltrack
