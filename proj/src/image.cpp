#include "tplreg/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tplreg/error.hpp"

namespace tplreg {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::InvalidArgument,
                "image dimensions must be positive, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

constexpr double kEdgeEps = 1e-9;

}  // namespace

RasterImage::RasterImage(int width, int height, double fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  values_.assign(static_cast<std::size_t>(width) * height, clamp01(fill));
}

RasterImage::RasterImage(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width, height);
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "intensity count does not match width x height");
  }
  for (double& v : values_) v = std::isnan(v) ? 0.0 : clamp01(v);
}

void RasterImage::set(int x, int y, double v) {
  values_[static_cast<std::size_t>(y) * width_ + x] = std::isnan(v) ? 0.0 : clamp01(v);
}

int CropBox::left() const { return static_cast<int>(std::floor(center_x - width / 2.0 + 0.5)); }
int CropBox::top() const { return static_cast<int>(std::floor(center_y - height / 2.0 + 0.5)); }

bool CropBox::inside(int image_width, int image_height) const {
  return width >= 1 && height >= 1 && left() >= 0 && top() >= 0 &&
         left() + width <= image_width && top() + height <= image_height;
}

CropBox CropBox::from_top_left(int left, int top, int width, int height) {
  return {left + width / 2.0, top + height / 2.0, width, height};
}

RasterImage crop(const RasterImage& image, const CropBox& box) {
  if (!box.inside(image.width(), image.height())) {
    throw Error(ErrorCode::OutOfBounds,
                "crop box [" + std::to_string(box.left()) + "," + std::to_string(box.top()) + " " +
                    std::to_string(box.width) + "x" + std::to_string(box.height) +
                    "] leaves the " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()) + " image");
  }
  std::vector<double> out(static_cast<std::size_t>(box.width) * box.height);
  const int x0 = box.left();
  const int y0 = box.top();
  for (int y = 0; y < box.height; ++y) {
    const double* src = image.row(y0 + y) + x0;
    std::copy(src, src + box.width, out.begin() + static_cast<std::ptrdiff_t>(y) * box.width);
  }
  return RasterImage(box.width, box.height, std::move(out));
}

BilinearSample sample_bilinear(const RasterImage& image, double x, double y) {
  const int w = image.width();
  const int h = image.height();
  BilinearSample s;
  if (!(x >= -kEdgeEps && y >= -kEdgeEps && x <= (w - 1) + kEdgeEps && y <= (h - 1) + kEdgeEps)) {
    return s;
  }
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  if (x0 > w - 2) x0 = std::max(w - 2, 0);
  if (y0 > h - 2) y0 = std::max(h - 2, 0);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double v00 = image.at(x0, y0);
  const double v10 = image.at(x1, y0);
  const double v01 = image.at(x0, y1);
  const double v11 = image.at(x1, y1);
  const double top = (1.0 - fx) * v00 + fx * v10;
  const double bottom = (1.0 - fx) * v01 + fx * v11;
  s.value = (1.0 - fy) * top + fy * bottom;
  s.dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
  s.dy = bottom - top;
  s.valid = true;
  return s;
}

WarpedImage warp_affine(const RasterImage& image, const AffineTransform& u, int out_width,
                        int out_height) {
  if (!(std::abs(u.determinant()) >= 1e-12)) {
    throw Error(ErrorCode::SingularTransform, "cannot warp with a singular transform");
  }
  std::vector<double> out(static_cast<std::size_t>(out_width) * out_height, 0.0);
  ValidityMask mask(out.size(), 0);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Point2 p = u.apply({static_cast<double>(x), static_cast<double>(y)});
      const BilinearSample s = sample_bilinear(image, p.x, p.y);
      if (s.valid) {
        const std::size_t i = static_cast<std::size_t>(y) * out_width + x;
        out[i] = s.value;
        mask[i] = 1;
      }
    }
  }
  return {RasterImage(out_width, out_height, std::move(out)), std::move(mask)};
}

std::vector<double> to_vector(const RasterImage& image) {
  return {image.pixels().begin(), image.pixels().end()};
}

RasterImage resample(const RasterImage& image, int width, int height) {
  check_dims(width, height);
  if (width == image.width() && height == image.height()) return image;
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double ys = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    for (int x = 0; x < width; ++x) {
      const double xs = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      out[static_cast<std::size_t>(y) * width + x] = sample_bilinear(image, xs, ys).value;
    }
  }
  return RasterImage(width, height, std::move(out));
}

RasterImage gaussian_blur(const RasterImage& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (double& k : kernel) k /= total;

  const int w = image.width();
  const int h = image.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const double* src = image.row(y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * src[std::clamp(x + k, 0, w - 1)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  std::vector<double> out(tmp.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return RasterImage(w, h, std::move(out));
}

}  // namespace tplreg
