#include "tplreg/kernels.hpp"

namespace tplreg::kernels {

namespace {

void panel_accumulate_scalar(const double* w, std::ptrdiff_t w_stride, std::size_t count,
                             const double* panel, double* acc) {
  double local[kPanelWidth];
  for (std::size_t j = 0; j < kPanelWidth; ++j) local[j] = acc[j];
  for (std::size_t t = 0; t < count; ++t) {
    const double wt = w[static_cast<std::ptrdiff_t>(t) * w_stride];
    const double* p = panel + t * kPanelWidth;
    for (std::size_t j = 0; j < kPanelWidth; ++j) local[j] += wt * p[j];
  }
  for (std::size_t j = 0; j < kPanelWidth; ++j) acc[j] = local[j];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void squared_distances_to_rows_scalar(const double* q, const double* rows, std::size_t row_count,
                                      std::size_t n, double* out) {
  for (std::size_t r = 0; r < row_count; ++r) out[r] = squared_distance_scalar(q, rows + r * n, n);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar, panel_accumulate_scalar, dot_scalar,
                                 squared_distance_scalar, squared_distances_to_rows_scalar};
  return table;
}

}  // namespace tplreg::kernels
