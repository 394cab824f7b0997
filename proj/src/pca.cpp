#include "tplreg/pca.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "tplreg/error.hpp"
#include "tplreg/kernels.hpp"

namespace tplreg {

namespace {

void check_rank(const DataOperator& data, int l, int extra) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 2) throw Error(ErrorCode::InvalidRank, "PCA needs at least two observations");
  if (l < 1 || l + extra > std::min(n, d)) {
    throw Error(ErrorCode::InvalidRank, "component count " + std::to_string(l) + " (+" +
                                            std::to_string(extra) + " oversampling) exceeds min(n, d) = " +
                                            std::to_string(std::min(n, d)));
  }
}

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

PcaModel assemble(const DataOperator& data, Matrix weights, Vector singular_values) {
  PcaModel model;
  model.components = data.multiply(weights);
  model.weights = std::move(weights);
  model.singular_values = std::move(singular_values);
  model.column_means = data.column_means();
  canonicalize_signs(model);
  return model;
}

}  // namespace

DataMatrix::DataMatrix(Matrix observations) : centered_(std::move(observations)) {
  means_ = centered_.colwise().mean().transpose();
  centered_.rowwise() -= means_.transpose();
}

DataMatrix DataMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no observations");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, "observation rows differ in length");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return DataMatrix(std::move(m));
}

bool PcaModel::operator==(const PcaModel& other) const {
  return weights == other.weights && components == other.components &&
         singular_values == other.singular_values && column_means == other.column_means;
}

PcaModel fit_exact(const DataOperator& data, int l) {
  check_rank(data, l, 0);
  const Matrix centered = data.centered_dense();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return assemble(data, svd.matrixV().leftCols(l), svd.singularValues().head(l));
}

PcaModel fit_randomized(const DataOperator& data, int l, const RandomizedOptions& options) {
  if (options.oversample < 0 || options.power_iters < 0) {
    throw Error(ErrorCode::InvalidArgument, "oversample and power_iters must be nonnegative");
  }
  check_rank(data, l, options.oversample);
  const Eigen::Index k = l + options.oversample;
  const Eigen::Index d = data.cols();

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix omega(d, k);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) omega(i, j) = normal(rng);
  }

  Matrix q = orthonormal_basis(data.multiply(omega));
  for (int it = 0; it < options.power_iters; ++it) {
    const Matrix z = orthonormal_basis(data.multiply_transpose(q));
    q = orthonormal_basis(data.multiply(z));
  }

  // B = Q^T Xc; decompose its transpose (d x k) to get V directly.
  const Matrix bt = data.multiply_transpose(q);
  Eigen::BDCSVD<Matrix> svd(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return assemble(data, svd.matrixU().leftCols(l), svd.singularValues().head(l));
}

std::vector<double> project(const PcaModel& model, std::span<const double> sample) {
  const Eigen::Index d = model.dimension();
  if (static_cast<Eigen::Index>(sample.size()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "sample length " + std::to_string(sample.size()) +
                                                  " does not match model dimension " + std::to_string(d));
  }
  std::vector<double> centered(sample.begin(), sample.end());
  for (Eigen::Index i = 0; i < d; ++i) centered[i] -= model.column_means[i];
  std::vector<double> out(static_cast<std::size_t>(model.rank()));
  const auto& k = kernels::active();
  for (Eigen::Index c = 0; c < model.rank(); ++c) {
    out[c] = k.dot(centered.data(), model.weights.col(c).data(), static_cast<std::size_t>(d));
  }
  return out;
}

std::vector<Neighbor> nearest_neighbor(const PcaModel& model, std::span<const double> query, int k) {
  const Eigen::Index n = model.observations();
  const Eigen::Index l = model.rank();
  if (static_cast<Eigen::Index>(query.size()) != l) {
    throw Error(ErrorCode::DimensionMismatch, "query length " + std::to_string(query.size()) +
                                                  " does not match feature length " + std::to_string(l));
  }
  if (k < 1 || k > n) {
    throw Error(ErrorCode::InvalidArgument, "neighbor count " + std::to_string(k) + " outside [1, " +
                                                std::to_string(n) + "]");
  }
  std::vector<double> dist(static_cast<std::size_t>(n));
  kernels::active().squared_distances_to_rows(query.data(), model.components.data(),
                                              static_cast<std::size_t>(n), static_cast<std::size_t>(l),
                                              dist.data());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto closer = [&](Eigen::Index a, Eigen::Index b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
  std::vector<Neighbor> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back({order[i], std::sqrt(dist[order[i]])});
  return out;
}

void canonicalize_signs(PcaModel& model) {
  for (Eigen::Index c = 0; c < model.weights.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
      const double a = std::abs(model.weights(r, c));
      if (a > best_abs) {
        best_abs = a;
        best = r;
      }
    }
    if (model.weights(best, c) < 0.0) {
      model.weights.col(c) *= -1.0;
      model.components.col(c) *= -1.0;
    }
  }
}

void write_model(std::ostream& out, const PcaModel& model) {
  using detail::write_le;
  const auto n = static_cast<std::uint64_t>(model.observations());
  const auto d = static_cast<std::uint64_t>(model.dimension());
  const auto l = static_cast<std::uint64_t>(model.rank());
  detail::write_tag(out, "TPCA");
  write_le(out, n);
  write_le(out, d);
  write_le(out, l);
  for (std::uint64_t i = 0; i < d; ++i) write_le(out, model.column_means[i]);
  for (std::uint64_t i = 0; i < d; ++i) {
    for (std::uint64_t j = 0; j < l; ++j) write_le(out, model.weights(i, j));
  }
  for (std::uint64_t j = 0; j < l; ++j) write_le(out, model.singular_values[j]);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < l; ++j) write_le(out, model.components(i, j));
  }
}

PcaModel read_model(std::istream& in) {
  using detail::read_le;
  detail::expect_tag(in, "TPCA");
  const auto n = read_le<std::uint64_t>(in);
  const auto d = read_le<std::uint64_t>(in);
  const auto l = read_le<std::uint64_t>(in);
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 32;
  if (n >= kLimit || d >= kLimit || l >= kLimit || l > d) {
    throw Error(ErrorCode::Format, "implausible PCA model dimensions");
  }
  PcaModel model;
  const auto N = static_cast<Eigen::Index>(n);
  const auto D = static_cast<Eigen::Index>(d);
  const auto L = static_cast<Eigen::Index>(l);
  model.column_means.resize(D);
  model.weights.resize(D, L);
  model.singular_values.resize(L);
  model.components.resize(N, L);
  for (Eigen::Index i = 0; i < D; ++i) model.column_means[i] = read_le<double>(in);
  for (Eigen::Index i = 0; i < D; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) model.weights(i, j) = read_le<double>(in);
  }
  for (Eigen::Index j = 0; j < L; ++j) model.singular_values[j] = read_le<double>(in);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) model.components(i, j) = read_le<double>(in);
  }
  return model;
}

}  // namespace tplreg
