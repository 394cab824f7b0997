#include "tplreg/tile_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tplreg/error.hpp"
#include "tplreg/kernels.hpp"

namespace tplreg {

namespace {

constexpr std::size_t kW = kernels::kPanelWidth;

std::size_t panel_count(Eigen::Index k) { return (static_cast<std::size_t>(k) + kW - 1) / kW; }

// Packs the columns of m into zero-padded panels laid out [panel][row][kW].
std::vector<double> pack_panels(const Matrix& m) {
  const std::size_t rows = static_cast<std::size_t>(m.rows());
  const std::size_t panels = panel_count(m.cols());
  std::vector<double> packed(panels * rows * kW, 0.0);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const std::size_t p = static_cast<std::size_t>(c) / kW;
    const std::size_t j = static_cast<std::size_t>(c) % kW;
    double* base = packed.data() + p * rows * kW + j;
    for (std::size_t r = 0; r < rows; ++r) base[r * kW] = m(static_cast<Eigen::Index>(r), c);
  }
  return packed;
}

}  // namespace

void TilingSpec::validate() const {
  if (tile_width < 1 || tile_height < 1) {
    throw Error(ErrorCode::InvalidArgument, "tile dimensions must be positive");
  }
  if (stride < 1 || stride > std::min(tile_width, tile_height)) {
    throw Error(ErrorCode::InvalidArgument, "stride " + std::to_string(stride) +
                                                " must lie in [1, min(tile_width, tile_height)]");
  }
}

void normalize_features(std::span<double> v, TileNormalization mode) {
  if (mode == TileNormalization::None || v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double inv = 1.0;
  if (mode == TileNormalization::Standardize) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    if (sd > 1e-12) inv = 1.0 / sd;
  }
  for (double& x : v) x = (x - mean) * inv;
}

TileMatrix::TileMatrix(const RasterImage& image, TilingSpec tiling, TileNormalization normalization)
    : image_(&image), tiling_(tiling), normalization_(normalization) {
  tiling_.validate();
  if (image.width() < tiling.tile_width || image.height() < tiling.tile_height) {
    throw Error(ErrorCode::ReferenceTooSmall,
                "image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                    " is smaller than the " + std::to_string(tiling.tile_width) + "x" +
                    std::to_string(tiling.tile_height) + " tile");
  }
  grid_x_ = (image.width() - tiling.tile_width) / tiling.stride + 1;
  grid_y_ = (image.height() - tiling.tile_height) / tiling.stride + 1;
  origin_x_ = (image.width() - tiling.tile_width - (grid_x_ - 1) * tiling.stride) / 2;
  origin_y_ = (image.height() - tiling.tile_height - (grid_y_ - 1) * tiling.stride) / 2;

  const int tw = tiling.tile_width;
  const int th = tiling.tile_height;
  const double area = static_cast<double>(tw) * th;
  offsets_ = Vector::Zero(rows());
  inv_scales_ = Vector::Ones(rows());
  if (normalization_ != TileNormalization::None) {
    // Summed-area tables of values and squares give every tile's moments.
    const int w = image.width();
    const int h = image.height();
    std::vector<double> s1(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    std::vector<double> s2(s1.size(), 0.0);
    auto at = [w](int x, int y) { return static_cast<std::size_t>(y) * (w + 1) + x; };
    for (int y = 0; y < h; ++y) {
      double r1 = 0.0, r2 = 0.0;
      for (int x = 0; x < w; ++x) {
        const double v = image.at(x, y);
        r1 += v;
        r2 += v * v;
        s1[at(x + 1, y + 1)] = s1[at(x + 1, y)] + r1;
        s2[at(x + 1, y + 1)] = s2[at(x + 1, y)] + r2;
      }
    }
    for (Eigen::Index i = 0; i < rows(); ++i) {
      const int l = tile_left(i), t = tile_top(i);
      const double sum = s1[at(l + tw, t + th)] - s1[at(l, t + th)] - s1[at(l + tw, t)] + s1[at(l, t)];
      const double sq = s2[at(l + tw, t + th)] - s2[at(l, t + th)] - s2[at(l + tw, t)] + s2[at(l, t)];
      const double mean = sum / area;
      offsets_[i] = mean;
      if (normalization_ == TileNormalization::Standardize) {
        const double var = std::max(0.0, sq / area - mean * mean);
        const double sd = std::sqrt(var);
        if (sd > 1e-12) inv_scales_[i] = 1.0 / sd;
      }
    }
  }

  // Column means of the normalized tiles: sum_i inv_i (x_i - offset_i) / n.
  std::vector<double> sums(static_cast<std::size_t>(cols()), 0.0);
  double shift = 0.0;
  for (Eigen::Index i = 0; i < rows(); ++i) {
    const int left = tile_left(i);
    const int top = tile_top(i);
    const double wgt = inv_scales_[i];
    shift += wgt * offsets_[i];
    for (int dy = 0; dy < th; ++dy) {
      const double* src = image.row(top + dy) + left;
      double* dst = sums.data() + static_cast<std::size_t>(dy) * tw;
      for (int dx = 0; dx < tw; ++dx) dst[dx] += wgt * src[dx];
    }
  }
  means_.resize(cols());
  const double inv_n = 1.0 / static_cast<double>(rows());
  for (Eigen::Index p = 0; p < cols(); ++p) means_[p] = (sums[static_cast<std::size_t>(p)] - shift) * inv_n;
}

CropBox TileMatrix::box(Eigen::Index i) const {
  return CropBox::from_top_left(tile_left(i), tile_top(i), tiling_.tile_width, tiling_.tile_height);
}

Matrix TileMatrix::multiply_raw(const Matrix& m) const {
  if (m.rows() != cols()) throw Error(ErrorCode::DimensionMismatch, "tile product: inner dimension");
  const auto& kern = kernels::active();
  const std::size_t panels = panel_count(m.cols());
  const std::vector<double> packed = pack_panels(m);
  const int tw = tiling_.tile_width;
  const std::size_t d = static_cast<std::size_t>(cols());
  Matrix out(rows(), m.cols());
  // Tiles of one grid row share each panel slice, so the slice for a given
  // tile row stays cache resident while every tile in the grid row reads it.
  std::vector<double> acc(static_cast<std::size_t>(grid_x_) * kW);
  for (int gy = 0; gy < grid_y_; ++gy) {
    const int top = origin_y_ + gy * tiling_.stride;
    for (std::size_t p = 0; p < panels; ++p) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* panel = packed.data() + p * d * kW;
      for (int dy = 0; dy < tiling_.tile_height; ++dy) {
        const double* slice = panel + static_cast<std::size_t>(dy) * tw * kW;
        const double* row = image_->row(top + dy) + origin_x_;
        for (int gx = 0; gx < grid_x_; ++gx) {
          kern.panel_accumulate(row + gx * tiling_.stride, 1, static_cast<std::size_t>(tw), slice,
                                acc.data() + static_cast<std::size_t>(gx) * kW);
        }
      }
      for (int gx = 0; gx < grid_x_; ++gx) {
        const Eigen::Index i = static_cast<Eigen::Index>(gy) * grid_x_ + gx;
        for (std::size_t j = 0; j < kW && p * kW + j < static_cast<std::size_t>(m.cols()); ++j) {
          out(i, static_cast<Eigen::Index>(p * kW + j)) = acc[static_cast<std::size_t>(gx) * kW + j];
        }
      }
    }
  }
  if (normalization_ != TileNormalization::None) {
    const Eigen::RowVectorXd col_sums = m.colwise().sum();
    out -= offsets_ * col_sums;
    out = inv_scales_.asDiagonal() * out;
  }
  return out;
}

Matrix TileMatrix::multiply(const Matrix& m) const {
  Matrix out = multiply_raw(m);
  const Eigen::RowVectorXd shift = means_.transpose() * m;
  out.rowwise() -= shift;
  return out;
}

Matrix TileMatrix::multiply_transpose(const Matrix& y) const {
  if (y.rows() != rows()) throw Error(ErrorCode::DimensionMismatch, "tile product: outer dimension");
  const auto& kern = kernels::active();
  const std::size_t panels = panel_count(y.cols());
  // F^T y = X^T (S y) - 1 (offsets^T S y), S the diagonal of inverse scales.
  const Matrix ys = inv_scales_.asDiagonal() * y;
  const std::vector<double> packed = pack_panels(ys);
  const std::size_t n = static_cast<std::size_t>(rows());
  const std::size_t d = static_cast<std::size_t>(cols());
  const int stride = tiling_.stride;
  const int tw = tiling_.tile_width;
  // out(p, :) = sum_i X(i, p) y(i, :). For a fixed pixel offset, the tiles of
  // one grid row read a single image row at a constant stride; accumulating
  // grid row by grid row keeps that row's slice of y in cache.
  std::vector<double> acc(panels * d * kW, 0.0);
  for (int gy = 0; gy < grid_y_; ++gy) {
    for (std::size_t p = 0; p < panels; ++p) {
      const double* slice = packed.data() + p * n * kW + static_cast<std::size_t>(gy) * grid_x_ * kW;
      double* acc_panel = acc.data() + p * d * kW;
      for (int dy = 0; dy < tiling_.tile_height; ++dy) {
        const double* row = image_->row(origin_y_ + gy * stride + dy) + origin_x_;
        double* acc_row = acc_panel + static_cast<std::size_t>(dy) * tw * kW;
        for (int dx = 0; dx < tw; ++dx) {
          kern.panel_accumulate(row + dx, stride, static_cast<std::size_t>(grid_x_), slice,
                                acc_row + static_cast<std::size_t>(dx) * kW);
        }
      }
    }
  }
  Matrix out(cols(), y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const std::size_t p = static_cast<std::size_t>(c) / kW;
    const std::size_t j = static_cast<std::size_t>(c) % kW;
    const double* src = acc.data() + p * d * kW + j;
    for (std::size_t pix = 0; pix < d; ++pix) out(static_cast<Eigen::Index>(pix), c) = src[pix * kW];
  }
  if (normalization_ != TileNormalization::None) {
    const Eigen::RowVectorXd shift = offsets_.transpose() * ys;
    out.rowwise() -= shift;
  }
  const Eigen::RowVectorXd col_sums = y.colwise().sum();
  out -= means_ * col_sums;
  return out;
}

Matrix TileMatrix::centered_dense() const {
  Matrix out(rows(), cols());
  for (Eigen::Index i = 0; i < rows(); ++i) {
    const std::vector<double> v = tile_vector(i);
    for (Eigen::Index p = 0; p < cols(); ++p) out(i, p) = v[static_cast<std::size_t>(p)] - means_[p];
  }
  return out;
}

std::vector<double> TileMatrix::tile_vector(Eigen::Index i) const {
  std::vector<double> v(static_cast<std::size_t>(cols()));
  const int left = tile_left(i);
  const int top = tile_top(i);
  for (int dy = 0; dy < tiling_.tile_height; ++dy) {
    const double* src = image_->row(top + dy) + left;
    std::copy(src, src + tiling_.tile_width, v.begin() + static_cast<std::ptrdiff_t>(dy) * tiling_.tile_width);
  }
  if (normalization_ != TileNormalization::None) {
    for (double& x : v) x = (x - offsets_[i]) * inv_scales_[i];
  }
  return v;
}

RowMatrix project_tiles(const PcaModel& model, const TileMatrix& tiles) {
  if (tiles.cols() != model.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "tile size does not match the model dimension");
  }
  Matrix scores = tiles.multiply_raw(model.weights);
  const Eigen::RowVectorXd shift = model.column_means.transpose() * model.weights;
  scores.rowwise() -= shift;
  return scores;
}

}  // namespace tplreg
