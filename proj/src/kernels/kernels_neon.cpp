#include "tplreg/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace tplreg::kernels {

namespace {

void panel_accumulate_neon(const double* w, std::ptrdiff_t w_stride, std::size_t count,
                           const double* panel, double* acc) {
  float64x2_t a[8];
  for (int k = 0; k < 8; ++k) a[k] = vld1q_f64(acc + 2 * k);
  for (std::size_t t = 0; t < count; ++t) {
    const float64x2_t wt = vdupq_n_f64(w[static_cast<std::ptrdiff_t>(t) * w_stride]);
    const double* p = panel + t * kPanelWidth;
    for (int k = 0; k < 8; ++k) a[k] = vfmaq_f64(a[k], wt, vld1q_f64(p + 2 * k));
  }
  for (int k = 0; k < 8; ++k) vst1q_f64(acc + 2 * k, a[k]);
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(a + i), vld1q_f64(b + i));
    s1 = vfmaq_f64(s1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    s0 = vfmaq_f64(s0, d0, d0);
    s1 = vfmaq_f64(s1, d1, d1);
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void squared_distances_to_rows_neon(const double* q, const double* rows, std::size_t row_count,
                                    std::size_t n, double* out) {
  for (std::size_t r = 0; r < row_count; ++r) out[r] = squared_distance_neon(q, rows + r * n, n);
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{Backend::Neon, panel_accumulate_neon, dot_neon,
                                 squared_distance_neon, squared_distances_to_rows_neon};
  return &table;
}

}  // namespace tplreg::kernels

#else

namespace tplreg::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace tplreg::kernels

#endif
