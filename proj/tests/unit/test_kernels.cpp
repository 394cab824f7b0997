#include <cmath>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "tplreg/coarse_locator.hpp"
#include "tplreg/error.hpp"
#include "tplreg/kernels.hpp"
#include "tplreg/synthetic.hpp"
#include "tplreg/tile_matrix.hpp"

using namespace tplreg;
namespace k = tplreg::kernels;

namespace {

struct BackendGuard {
  k::Backend saved = k::active_backend();
  ~BackendGuard() { k::set_backend(saved); }
};

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("scalar backend is always available and selectable") {
  BackendGuard guard;
  CHECK(k::backend_supported(k::Backend::Scalar));
  k::set_backend(k::Backend::Scalar);
  CHECK(k::active_backend() == k::Backend::Scalar);
  CHECK(k::backend_name(k::Backend::Scalar) == "scalar");
}

TEST_CASE("unsupported backend is rejected") {
  for (k::Backend b : {k::Backend::Avx2, k::Backend::Neon}) {
    if (k::backend_supported(b)) continue;
    CHECK_THROWS_AS(k::set_backend(b), Error);
  }
}

TEST_CASE("vector kernels agree with the scalar reference on random inputs") {
  const k::KernelTable& ref = k::scalar_table();
  testing::Gen gen(11);
  for (k::Backend b : k::supported_backends()) {
    if (b == k::Backend::Scalar) continue;
    const k::KernelTable& t = b == k::Backend::Avx2 ? *k::avx2_table() : *k::neon_table();
    CAPTURE(k::backend_name(b));
    for (int trial = 0; trial < 200; ++trial) {
      // Lengths straddle every vector width and tail case.
      const std::size_t n = static_cast<std::size_t>(gen.integer(0, 67));
      const auto a = gen.vec(n), c = gen.vec(n);
      CHECK(rel_diff(t.dot(a.data(), c.data(), n), ref.dot(a.data(), c.data(), n)) < 1e-12);
      CHECK(rel_diff(t.squared_distance(a.data(), c.data(), n), ref.squared_distance(a.data(), c.data(), n)) <
            1e-12);

      const std::size_t rows = static_cast<std::size_t>(gen.integer(1, 9));
      const auto block = gen.vec(rows * n);
      std::vector<double> got(rows), want(rows);
      t.squared_distances_to_rows(a.data(), block.data(), rows, n, got.data());
      ref.squared_distances_to_rows(a.data(), block.data(), rows, n, want.data());
      for (std::size_t r = 0; r < rows; ++r) CHECK(rel_diff(got[r], want[r]) < 1e-12);

      const std::ptrdiff_t stride = gen.integer(1, 4);
      const std::size_t count = static_cast<std::size_t>(gen.integer(0, 40));
      const auto w = gen.vec(count * stride + 1);
      const auto panel = gen.vec(count * k::kPanelWidth);
      auto acc_t = gen.vec(k::kPanelWidth);
      auto acc_r = acc_t;
      t.panel_accumulate(w.data(), stride, count, panel.data(), acc_t.data());
      ref.panel_accumulate(w.data(), stride, count, panel.data(), acc_r.data());
      for (std::size_t j = 0; j < k::kPanelWidth; ++j) CHECK(rel_diff(acc_t[j], acc_r[j]) < 1e-12);
    }
  }
}

TEST_CASE("panel_accumulate matches a hand-written sum") {
  const double w[] = {1.0, 100.0, 2.0, 100.0, 3.0};
  std::vector<double> panel(3 * k::kPanelWidth);
  for (std::size_t i = 0; i < panel.size(); ++i) panel[i] = static_cast<double>(i);
  std::vector<double> acc(k::kPanelWidth, 1.0);
  k::scalar_table().panel_accumulate(w, 2, 3, panel.data(), acc.data());
  for (std::size_t j = 0; j < k::kPanelWidth; ++j) {
    const double want = 1.0 + 1.0 * j + 2.0 * (16 + j) + 3.0 * (32 + j);
    CHECK(acc[j] == doctest::Approx(want));
  }
}

TEST_CASE("tile products and dictionary lookups do not depend on the backend") {
  BackendGuard guard;
  const RasterImage img = synthetic_fundus(120, 100, 3);
  const TilingSpec tiling{40, 40, 7};
  testing::Gen gen(5);
  Matrix m(1600, 3), y;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gen.normal();

  k::set_backend(k::Backend::Scalar);
  const TileMatrix tiles(img, tiling, TileNormalization::Mean);
  y = Matrix::NullaryExpr(tiles.rows(), 2, [&] { return gen.normal(); });
  const Matrix ref_xm = tiles.multiply(m);
  const Matrix ref_xty = tiles.multiply_transpose(y);
  DictionaryOptions opt;
  opt.components = 6;
  const TargetDictionary ref_dict = build_dictionary(img, tiling, opt, 9);
  const RasterImage query = crop(img, CropBox::from_top_left(33, 21, 40, 40));
  const Eigen::Index ref_hit = locate_global(ref_dict, query);

  for (k::Backend b : k::supported_backends()) {
    CAPTURE(k::backend_name(b));
    k::set_backend(b);
    const TileMatrix t(img, tiling, TileNormalization::Mean);
    CHECK((t.multiply(m) - ref_xm).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + ref_xm.cwiseAbs().maxCoeff()));
    CHECK((t.multiply_transpose(y) - ref_xty).cwiseAbs().maxCoeff() <
          1e-9 * (1.0 + ref_xty.cwiseAbs().maxCoeff()));
    const TargetDictionary dict = build_dictionary(img, tiling, opt, 9);
    CHECK(locate_global(dict, query) == ref_hit);
  }
}
