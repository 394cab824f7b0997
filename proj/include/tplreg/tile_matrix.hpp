#pragma once

#include <cstdint>
#include <span>

#include "tplreg/image.hpp"
#include "tplreg/pca.hpp"

namespace tplreg {

/// Tile size plus the displacement between neighbouring tiles.
struct TilingSpec {
  int tile_width = 0;
  int tile_height = 0;
  int stride = 1;

  /// Throws InvalidArgument unless 1 <= stride <= min(tile_width, tile_height).
  void validate() const;

  bool operator==(const TilingSpec&) const = default;
};

/// Per-tile intensity normalization applied before PCA. Mean removes each
/// tile's own mean; Standardize also divides by its standard deviation.
enum class TileNormalization : std::uint8_t { None = 0, Mean = 1, Standardize = 2 };

/// Applies the normalization to one feature vector in place.
void normalize_features(std::span<double> v, TileNormalization mode);

/// All grid tiles of an image, viewed as the rows of an implicit data matrix.
/// The grid is centred in the image; adjacent tiles differ by exactly the
/// stride. The image must outlive the operator.
class TileMatrix final : public DataOperator {
 public:
  TileMatrix(const RasterImage& image, TilingSpec tiling,
             TileNormalization normalization = TileNormalization::None);

  int grid_columns() const { return grid_x_; }
  int grid_rows() const { return grid_y_; }
  const TilingSpec& tiling() const { return tiling_; }
  TileNormalization normalization() const { return normalization_; }

  /// Placement of tile i (row-major over the grid) in image coordinates.
  CropBox box(Eigen::Index i) const;
  int tile_left(Eigen::Index i) const { return origin_x_ + static_cast<int>(i % grid_x_) * tiling_.stride; }
  int tile_top(Eigen::Index i) const { return origin_y_ + static_cast<int>(i / grid_x_) * tiling_.stride; }

  Eigen::Index rows() const override { return static_cast<Eigen::Index>(grid_x_) * grid_y_; }
  Eigen::Index cols() const override {
    return static_cast<Eigen::Index>(tiling_.tile_width) * tiling_.tile_height;
  }
  const Vector& column_means() const override { return means_; }
  Matrix multiply(const Matrix& m) const override;
  Matrix multiply_transpose(const Matrix& y) const override;
  Matrix centered_dense() const override;

  /// Normalized tiles times m without column centring, e.g. to project many
  /// tiles at once.
  Matrix multiply_raw(const Matrix& m) const;
  /// Normalized (not centred) feature vector of tile i.
  std::vector<double> tile_vector(Eigen::Index i) const;

 private:
  const RasterImage* image_;
  TilingSpec tiling_;
  TileNormalization normalization_;
  int grid_x_ = 0;
  int grid_y_ = 0;
  int origin_x_ = 0;
  int origin_y_ = 0;
  Vector means_;
  Vector offsets_;     ///< per-tile value subtracted before scaling
  Vector inv_scales_;  ///< per-tile factor applied after the offset
};

/// Scores of every tile of `tiles` under `model`: (X - 1 mu^T) W, with mu the
/// model's means rather than the tiles' own.
RowMatrix project_tiles(const PcaModel& model, const TileMatrix& tiles);

}  // namespace tplreg
