#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace tplreg {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A column-centred n x d data matrix that is only ever touched through
/// products, so large tiled collections never have to be materialised.
class DataOperator {
 public:
  virtual ~DataOperator() = default;

  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index cols() const = 0;
  virtual const Vector& column_means() const = 0;

  /// Xc * m for an (d x k) matrix m.
  virtual Matrix multiply(const Matrix& m) const = 0;
  /// Xc^T * y for an (n x k) matrix y.
  virtual Matrix multiply_transpose(const Matrix& y) const = 0;
  /// Xc as a dense matrix; only sensible for small problems.
  virtual Matrix centered_dense() const = 0;
};

/// Dense observations (one row each), centred at construction.
class DataMatrix final : public DataOperator {
 public:
  explicit DataMatrix(Matrix observations);
  static DataMatrix from_rows(const std::vector<std::vector<double>>& rows);

  Eigen::Index rows() const override { return centered_.rows(); }
  Eigen::Index cols() const override { return centered_.cols(); }
  const Vector& column_means() const override { return means_; }
  Matrix multiply(const Matrix& m) const override { return centered_ * m; }
  Matrix multiply_transpose(const Matrix& y) const override { return centered_.transpose() * y; }
  Matrix centered_dense() const override { return centered_; }

  const Matrix& centered() const { return centered_; }

 private:
  Matrix centered_;
  Vector means_;
};

struct PcaModel {
  Matrix weights;          ///< d x l, orthonormal columns
  RowMatrix components;    ///< n x l scores, one row per observation
  Vector singular_values;  ///< l, nonincreasing
  Vector column_means;     ///< d

  Eigen::Index observations() const { return components.rows(); }
  Eigen::Index dimension() const { return weights.rows(); }
  Eigen::Index rank() const { return weights.cols(); }

  bool operator==(const PcaModel& other) const;
};

struct RandomizedOptions {
  int oversample = 10;
  int power_iters = 1;
  std::uint64_t seed = 0;
};

/// Deterministic SVD of the centred data; keeps the l dominant components.
PcaModel fit_exact(const DataOperator& data, int l);

/// Sketch with a Gaussian test matrix, orthonormalise, project, and take the
/// small SVD. Scores are recomputed as Xc * W so that projecting a training
/// row reproduces its stored score.
PcaModel fit_randomized(const DataOperator& data, int l, const RandomizedOptions& options = {});

/// (sample - column_means) * weights.
std::vector<double> project(const PcaModel& model, std::span<const double> sample);

struct Neighbor {
  Eigen::Index index = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// k closest score rows, ascending by Euclidean distance, ties to the lower index.
std::vector<Neighbor> nearest_neighbor(const PcaModel& model, std::span<const double> query, int k);

/// Flips each weight column (and its score column) so its largest-magnitude
/// entry is positive.
void canonicalize_signs(PcaModel& model);

/// Binary layout: "TPCA", u64 n, d, l, then column_means, weights (row-major),
/// singular_values, components (row-major), all little-endian f64.
void write_model(std::ostream& out, const PcaModel& model);
PcaModel read_model(std::istream& in);

}  // namespace tplreg
