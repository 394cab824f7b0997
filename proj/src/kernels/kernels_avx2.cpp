// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "tplreg/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace tplreg::kernels {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void panel_accumulate_avx2(const double* w, std::ptrdiff_t w_stride, std::size_t count,
                           const double* panel, double* acc) {
  // Two independent accumulator sets hide FMA latency.
  __m256d a0 = _mm256_loadu_pd(acc + 0), a1 = _mm256_loadu_pd(acc + 4);
  __m256d a2 = _mm256_loadu_pd(acc + 8), a3 = _mm256_loadu_pd(acc + 12);
  __m256d b0 = _mm256_setzero_pd(), b1 = _mm256_setzero_pd();
  __m256d b2 = _mm256_setzero_pd(), b3 = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 2 <= count; t += 2) {
    const double* p = panel + t * kPanelWidth;
    const __m256d w0 = _mm256_broadcast_sd(w + static_cast<std::ptrdiff_t>(t) * w_stride);
    const __m256d w1 = _mm256_broadcast_sd(w + static_cast<std::ptrdiff_t>(t + 1) * w_stride);
    a0 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 0), a0);
    a1 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 4), a1);
    a2 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 8), a2);
    a3 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 12), a3);
    b0 = _mm256_fmadd_pd(w1, _mm256_loadu_pd(p + 16), b0);
    b1 = _mm256_fmadd_pd(w1, _mm256_loadu_pd(p + 20), b1);
    b2 = _mm256_fmadd_pd(w1, _mm256_loadu_pd(p + 24), b2);
    b3 = _mm256_fmadd_pd(w1, _mm256_loadu_pd(p + 28), b3);
  }
  if (t < count) {
    const double* p = panel + t * kPanelWidth;
    const __m256d w0 = _mm256_broadcast_sd(w + static_cast<std::ptrdiff_t>(t) * w_stride);
    a0 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 0), a0);
    a1 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 4), a1);
    a2 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 8), a2);
    a3 = _mm256_fmadd_pd(w0, _mm256_loadu_pd(p + 12), a3);
  }
  _mm256_storeu_pd(acc + 0, _mm256_add_pd(a0, b0));
  _mm256_storeu_pd(acc + 4, _mm256_add_pd(a1, b1));
  _mm256_storeu_pd(acc + 8, _mm256_add_pd(a2, b2));
  _mm256_storeu_pd(acc + 12, _mm256_add_pd(a3, b3));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    s0 = _mm256_fmadd_pd(d0, d0, s0);
    s1 = _mm256_fmadd_pd(d1, d1, s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void squared_distances_to_rows_avx2(const double* q, const double* rows, std::size_t row_count,
                                    std::size_t n, double* out) {
  for (std::size_t r = 0; r < row_count; ++r) out[r] = squared_distance_avx2(q, rows + r * n, n);
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Backend::Avx2, panel_accumulate_avx2, dot_avx2,
                                 squared_distance_avx2, squared_distances_to_rows_avx2};
  return &table;
}

}  // namespace tplreg::kernels

#else

namespace tplreg::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace tplreg::kernels

#endif
