#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tplreg/coarse_locator.hpp"
#include "tplreg/error.hpp"
#include "tplreg/registration.hpp"
#include "tplreg/synthetic.hpp"
#include "tplreg/tile_matrix.hpp"

using namespace tplreg;

namespace {

// Rows are the normalized tiles, built pixel by pixel from the crop.
Matrix dense_tiles(const RasterImage& img, const TileMatrix& tiles) {
  Matrix x(tiles.rows(), tiles.cols());
  for (Eigen::Index i = 0; i < tiles.rows(); ++i) {
    std::vector<double> v = to_vector(crop(img, tiles.box(i)));
    normalize_features(v, tiles.normalization());
    for (Eigen::Index j = 0; j < tiles.cols(); ++j) x(i, j) = v[static_cast<std::size_t>(j)];
  }
  return x;
}

DictionaryOptions options(int l, PcaMethod method = PcaMethod::Randomized) {
  DictionaryOptions o;
  o.components = l;
  o.method = method;
  return o;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Format;
}

const RasterImage& fundus() {
  static const RasterImage img = synthetic_fundus(400, 400, 21);
  return img;
}

}  // namespace

TEST_CASE("100 px tiles at stride 10 over a 200 px reference give 121 targets") {
  const RasterImage img = synthetic_fundus(200, 200, 1);
  const TileMatrix tiles(img, {100, 100, 10});
  CHECK(tiles.rows() == 121);
  CHECK(tiles.grid_columns() == 11);
  CHECK(tiles.box(0) == CropBox::from_top_left(0, 0, 100, 100));
  CHECK(tiles.box(120) == CropBox::from_top_left(100, 100, 100, 100));
  CHECK(tiles.box(12) == CropBox::from_top_left(10, 10, 100, 100));
}

TEST_CASE("an uneven remainder is split on both sides of the grid") {
  const RasterImage img(57, 40, 0.5);
  const TileMatrix tiles(img, {20, 20, 8});
  CHECK(tiles.grid_columns() == 5);
  CHECK(tiles.grid_rows() == 3);
  CHECK(tiles.tile_left(0) == 2);
  CHECK(tiles.tile_top(0) == 2);
}

TEST_CASE("tile products match a dense oracle for every normalization") {
  testing::Gen gen(2);
  const RasterImage img = synthetic_fundus(90, 70, 4);
  for (TileNormalization mode :
       {TileNormalization::None, TileNormalization::Mean, TileNormalization::Standardize}) {
    CAPTURE(static_cast<int>(mode));
    const TileMatrix tiles(img, {23, 19, 6}, mode);
    const Matrix x = dense_tiles(img, tiles);
    const Matrix xc = x.rowwise() - x.colwise().mean();
    CHECK((tiles.column_means() - x.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((tiles.centered_dense() - xc).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix m = Matrix::NullaryExpr(tiles.cols(), 5, [&] { return gen.normal(); });
    const Matrix y = Matrix::NullaryExpr(tiles.rows(), 3, [&] { return gen.normal(); });
    CHECK((tiles.multiply(m) - xc * m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((tiles.multiply_transpose(y) - xc.transpose() * y).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((tiles.multiply_raw(m) - x * m).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("normalized tiles have zero mean and, when standardized, unit spread") {
  testing::Gen gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto v = gen.vec(static_cast<std::size_t>(gen.integer(2, 60)), 0.0, 1.0);
    auto s = v;
    normalize_features(v, TileNormalization::Mean);
    normalize_features(s, TileNormalization::Standardize);
    double mean = 0.0, ss = 0.0;
    for (double x : v) mean += x;
    for (double x : s) ss += x * x;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(ss / static_cast<double>(s.size()) == doctest::Approx(1.0));
  }
  std::vector<double> flat(10, 0.3);
  normalize_features(flat, TileNormalization::Standardize);
  for (double x : flat) CHECK(std::abs(x) < 1e-12);
}

TEST_CASE("invalid stride and an undersized reference are rejected") {
  const RasterImage img(50, 50, 0.5);
  CHECK(code_of([&] { TileMatrix(img, {20, 20, 0}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { TileMatrix(img, {20, 20, 21}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { build_dictionary(img, {60, 40, 10}, options(2), 0); }) == ErrorCode::ReferenceTooSmall);
  CHECK(code_of([&] { build_dictionary(img, {40, 40, 10}, options(5), 0); }) == ErrorCode::InvalidRank);
}

TEST_CASE("dictionary bytes are identical for the same seed and round trip") {
  const DictionaryOptions opt = options(8);
  const TargetDictionary a = build_dictionary(fundus(), {100, 100, 20}, opt, 5);
  const TargetDictionary b = build_dictionary(fundus(), {100, 100, 20}, opt, 5);
  std::stringstream sa, sb;
  write_dictionary(sa, a);
  write_dictionary(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().substr(0, 4) == "TDIC");
  const TargetDictionary back = read_dictionary(sa);
  CHECK(back.pca == a.pca);
  CHECK(back.boxes == a.boxes);
  CHECK(back.tiling == a.tiling);
  CHECK(back.seed == 5);
  CHECK(back.alternate == a.alternate);
  DictionaryOptions single = opt;
  single.alternate.reset();
  std::stringstream sc;
  write_dictionary(sc, build_dictionary(fundus(), {100, 100, 20}, single, 5));
  CHECK(sc.str().size() < sa.str().size());
  CHECK_FALSE(read_dictionary(sc).alternate.has_value());
  std::stringstream truncated(sb.str().substr(0, 40));
  CHECK_THROWS_AS(read_dictionary(truncated), Error);
}

TEST_CASE("global lookup agrees with brute force at full rank") {
  testing::Gen gen(4);
  const RasterImage img = synthetic_fundus(120, 120, 8);
  const TilingSpec tiling{40, 40, 10};
  const TileMatrix raw(img, tiling, TileNormalization::None);
  const TileMatrix centred(img, tiling, TileNormalization::Mean);
  const Matrix xr = dense_tiles(img, raw), xm = dense_tiles(img, centred);
  const TargetDictionary dict = build_dictionary(img, tiling, options(static_cast<int>(raw.rows()) - 1, PcaMethod::Exact), 0);
  REQUIRE(dict.normalization == TileNormalization::None);
  REQUIRE(dict.alternate.has_value());
  REQUIRE(dict.alternate->normalization == TileNormalization::Mean);
  const auto brute = [](const Matrix& x, std::vector<double> v, TileNormalization n) {
    normalize_features(v, n);
    Eigen::Index best = 0;
    double best_d = 1e300;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double d = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) d += (x(i, j) - v[static_cast<std::size_t>(j)]) * (x(i, j) - v[static_cast<std::size_t>(j)]);
      if (d < best_d) best_d = d, best = i;
    }
    return best;
  };
  for (int trial = 0; trial < 30; ++trial) {
    const RasterImage q = crop(img, CropBox::from_top_left(gen.integer(0, 80), gen.integer(0, 80), 40, 40));
    const std::vector<double> v = to_vector(q);
    CHECK(locate_global(dict, q) == brute(xr, v, TileNormalization::None));
    CHECK(locate_global_alternate(dict, q) == brute(xm, v, TileNormalization::Mean));
  }
  DictionaryOptions single = options(10);
  single.alternate.reset();
  const TargetDictionary one = build_dictionary(img, tiling, single, 0);
  CHECK_FALSE(one.alternate.has_value());
  CHECK_THROWS_AS(locate_global_alternate(one, img), Error);
}

TEST_CASE("grid-aligned crops are located on their own target") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 10}, options(20), 1);
  testing::Gen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int left = 10 * gen.integer(0, 30), top = 10 * gen.integer(0, 30);
    const RasterImage q = crop(fundus(), CropBox::from_top_left(left, top, 100, 100));
    const CoarseLocation loc = coarse_localize(dict, fundus(), q, {false, {}});
    CHECK(std::hypot(loc.center_x - (left + 50), loc.center_y - (top + 50)) <= 5.0);
  }
}

TEST_CASE("block refinement does no worse than the global lookup off the grid") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 10}, options(20), 1);
  testing::Gen gen(6);
  double global_sum = 0.0, block_sum = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int left = gen.integer(0, 300), top = gen.integer(0, 300);
    const RasterImage q = crop(fundus(), CropBox::from_top_left(left, top, 100, 100));
    const CoarseLocation g = coarse_localize(dict, fundus(), q, {false, {}});
    const CoarseLocation b = coarse_localize(dict, fundus(), q, {true, dict.block});
    global_sum += std::hypot(g.center_x - (left + 50), g.center_y - (top + 50));
    block_sum += std::hypot(b.center_x - (left + 50), b.center_y - (top + 50));
    CHECK(b.patch_votes.size() > 0);
  }
  CHECK(block_sum <= global_sum);
}

TEST_CASE("block refinement of an exact crop lands within a pixel") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 10}, options(20), 1);
  const int left = 140, top = 95;
  const RasterImage q = crop(fundus(), CropBox::from_top_left(left, top, 100, 100));
  const CoarseLocation loc = locate_block(dict, fundus(), q, locate_global(dict, q), dict.block);
  CHECK(std::hypot(loc.center_x - (left + 50), loc.center_y - (top + 50)) <= 1.0);
}

TEST_CASE("precomputed patch models give the same answer") {
  DictionaryOptions opt = options(10);
  const TargetDictionary lazy = build_dictionary(fundus(), {100, 100, 25}, opt, 2);
  opt.precompute_patches = true;
  const TargetDictionary eager = build_dictionary(fundus(), {100, 100, 25}, opt, 2);
  REQUIRE(eager.patch_models.size() == eager.size());
  const RasterImage q = crop(fundus(), CropBox::from_top_left(77, 201, 100, 100));
  CHECK(coarse_localize(lazy, fundus(), q, {true, lazy.block}) == coarse_localize(eager, fundus(), q, {true, eager.block}));
  std::stringstream ss;
  write_dictionary(ss, eager);
  CHECK(read_dictionary(ss).patch_models.size() == eager.size());
}

TEST_CASE("uniform and undersized templates still get a location inside the reference") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 20}, options(10), 3);
  for (const RasterImage& q : {RasterImage(100, 100, 0.4), RasterImage(60, 80, 0.7), crop(fundus(), CropBox::from_top_left(5, 5, 150, 150))}) {
    const CoarseLocation loc = coarse_localize(dict, fundus(), q, {true, dict.block});
    CHECK(loc.chosen_target >= 0);
    CHECK(loc.chosen_target < static_cast<Eigen::Index>(dict.size()));
    CHECK(loc.center_x >= 50.0);
    CHECK(loc.center_x <= 350.0);
    CHECK(loc.center_y >= 50.0);
    CHECK(loc.center_y <= 350.0);
  }
}

TEST_CASE("clamp_center keeps a template-sized box inside the reference") {
  testing::Gen gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int tw = gen.integer(1, 50), th = gen.integer(1, 50);
    const int rw = gen.integer(tw, 200), rh = gen.integer(th, 200);
    const Point2 c = clamp_center({gen.uniform(-100, 300), gen.uniform(-100, 300)}, tw, th, rw, rh);
    CHECK(c.x - tw / 2.0 >= 0.0);
    CHECK(c.x + tw / 2.0 <= rw);
    CHECK(c.y - th / 2.0 >= 0.0);
    CHECK(c.y + th / 2.0 <= rh);
    const Point2 again = clamp_center(c, tw, th, rw, rh);
    CHECK(again.x == c.x);
    CHECK(again.y == c.y);
  }
}

TEST_CASE("a reference of the wrong size is rejected by the block stage") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 50}, options(5), 3);
  const RasterImage other(300, 300, 0.5);
  const RasterImage q(100, 100, 0.5);
  CHECK(code_of([&] { locate_block(dict, other, q, 0, dict.block); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("the rotation sweep finds the angle a template was cut at") {
  const Point2 c{200, 210};
  const RasterImage& ref = fundus();
  const double pi = std::acos(-1.0);
  for (int deg : {-15, -5, 0, 10, 20}) {
    CAPTURE(deg);
    const double a = deg * pi / 180.0;
    const RasterImage t = warp_affine(ref, sweep_transform(c, a, 100, 100), 100, 100).image;
    const SweepResult r = rotation_sweep(ref, t, c, {});
    CHECK(r.rotation == doctest::Approx(a).epsilon(1e-12));
    // The transform places the template centre at c.
    const Point2 mid = sweep_transform(c, a, 100, 100).apply({50, 50});
    CHECK(mid.x == doctest::Approx(200));
    CHECK(mid.y == doctest::Approx(210));
  }
  const RasterImage t = crop(ref, CropBox::from_top_left(150, 160, 100, 100));
  const SweepResult none = rotation_sweep(ref, t, c, {0.0, 5.0, 32});
  CHECK(none.rotation == 0.0);
  CHECK(none.mi == mi_objective(t, ref, AffineTransform::translation(150, 160)).mi);
  CHECK(code_of([&] { rotation_sweep(ref, t, c, {-1.0, 5.0, 32}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { rotation_sweep(ref, t, c, {10.0, 0.0, 32}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("with two indexes the candidate of higher sweep MI is kept") {
  const TargetDictionary dict = build_dictionary(fundus(), {100, 100, 10}, options(20), 2);
  REQUIRE(dict.alternate.has_value());
  testing::Gen gen(12);
  int disagreements = 0;
  for (int trial = 0; trial < 12; ++trial) {
    RasterImage q = crop(fundus(), CropBox::from_top_left(gen.integer(0, 300), gen.integer(0, 300), 100, 100));
    // Darken the mid-tones on half of the trials so the two indexes can disagree.
    if (trial % 2 == 1) {
      for (int y = 0; y < q.height(); ++y) {
        for (int x = 0; x < q.width(); ++x) q.set(x, y, std::pow(q.at(x, y), 1.6));
      }
    }
    const CoarseLocation loc = coarse_localize(dict, fundus(), q, {});
    const CoarseLocation a = locate_block(dict, fundus(), q, locate_global(dict, q), dict.block);
    const CoarseLocation b = locate_block(dict, fundus(), q, locate_global_alternate(dict, q), dict.block,
                                          dict.alternate->normalization);
    const double sa = rotation_sweep(fundus(), q, {a.center_x, a.center_y}, {}).mi;
    const double sb = rotation_sweep(fundus(), q, {b.center_x, b.center_y}, {}).mi;
    if (a.chosen_target == b.chosen_target) {
      CHECK_FALSE(loc.alternate);
      CHECK(loc.center_x == a.center_x);
      continue;
    }
    ++disagreements;
    CHECK(loc.sweep_mi == std::max(sa, sb));
    CHECK(loc.alternate == (sb > sa));
    CHECK(loc.center_x == (sb > sa ? b.center_x : a.center_x));
  }
  MESSAGE("index disagreements: " << disagreements);
}
