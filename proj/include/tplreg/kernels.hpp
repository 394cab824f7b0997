#pragma once

// Data-parallel inner loops. Each kernel has a portable scalar reference and
// optional vector variants; the active table is picked once at startup from
// the CPU's capabilities and can be pinned for equivalence testing.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace tplreg::kernels {

/// Width of one packed panel column block, in doubles.
inline constexpr std::size_t kPanelWidth = 16;

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  /// acc[j] += sum_t w[t * w_stride] * panel[t * kPanelWidth + j], j < kPanelWidth.
  void (*panel_accumulate)(const double* w, std::ptrdiff_t w_stride, std::size_t count,
                           const double* panel, double* acc);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// out[r] = ||rows[r * n .. r * n + n) - q||^2 for r < row_count.
  void (*squared_distances_to_rows)(const double* q, const double* rows, std::size_t row_count,
                                    std::size_t n, double* out);
};

const KernelTable& scalar_table();
/// Null when the variant was not compiled in for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool backend_supported(Backend b);
std::vector<Backend> supported_backends();

/// The table every library routine dispatches through.
const KernelTable& active();
Backend active_backend();
/// Pins the dispatch table; throws InvalidArgument when unsupported here.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace tplreg::kernels
