#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tplreg/affine.hpp"

namespace tplreg {

/// Single-channel intensity grid, row-major, every value clamped into [0,1].
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, double fill = 0.0);
  /// Takes ownership of row-major values; each one is clamped into [0,1].
  RasterImage(int width, int height, std::vector<double> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, double v);

  std::span<const double> pixels() const noexcept { return values_; }
  const double* row(int y) const { return values_.data() + static_cast<std::size_t>(y) * width_; }

  bool operator==(const RasterImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

using ValidityMask = std::vector<std::uint8_t>;

/// Placement b = [x, y, h, w] of a crop, addressed by its center.
struct CropBox {
  double center_x = 0.0;
  double center_y = 0.0;
  int width = 0;
  int height = 0;

  /// Integer top-left pixel; the center is rounded onto the pixel lattice.
  int left() const;
  int top() const;
  bool inside(int image_width, int image_height) const;

  static CropBox from_top_left(int left, int top, int width, int height);

  bool operator==(const CropBox&) const = default;
};

struct WarpedImage {
  RasterImage image;
  ValidityMask mask;  ///< 1 where the sample fell inside the source
};

RasterImage crop(const RasterImage& image, const CropBox& box);

/// Output pixel x takes the bilinear sample of `image` at u(x); samples that
/// fall outside the source are zero and cleared in the mask.
WarpedImage warp_affine(const RasterImage& image, const AffineTransform& u, int out_width,
                        int out_height);

/// Row-major flattening.
std::vector<double> to_vector(const RasterImage& image);

/// Bilinear resampling onto a new grid spanning the same extent.
RasterImage resample(const RasterImage& image, int width, int height);

RasterImage gaussian_blur(const RasterImage& image, double sigma);

struct BilinearSample {
  double value = 0.0;
  double dx = 0.0;  ///< derivative of the bilinear interpolant along x
  double dy = 0.0;
  bool valid = false;
};

BilinearSample sample_bilinear(const RasterImage& image, double x, double y);

}  // namespace tplreg
