#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "tplreg/error.hpp"
#include "tplreg/mosaic.hpp"
#include "tplreg/synthetic.hpp"

using namespace tplreg;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Format;
}

struct Crops {
  std::vector<RasterImage> images;
  std::vector<Point2> origins;  ///< top-left in the source image
  int side = 0;

  // Overlap area of two crops as a fraction of one frame, from their placements.
  double overlap(int a, int b) const {
    const double ox = side - std::abs(origins[a].x - origins[b].x);
    const double oy = side - std::abs(origins[a].y - origins[b].y);
    return ox > 0 && oy > 0 ? ox * oy / (side * side) : 0.0;
  }
};

Crops grid_crops(const RasterImage& big, int side, int cols, int rows, int step, int jitter, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jit(-jitter, jitter);
  const int gx = (big.width() - (side + (cols - 1) * step)) / 2;
  const int gy = (big.height() - (side + (rows - 1) * step)) / 2;
  Crops c;
  c.side = side;
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      const int left = gx + k * step + jit(rng), top = gy + r * step + jit(rng);
      c.images.push_back(crop(big, CropBox::from_top_left(left, top, side, side)));
      c.origins.push_back({static_cast<double>(left), static_cast<double>(top)});
    }
  }
  std::vector<int> perm(c.images.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Crops s;
  s.side = side;
  for (int i : perm) {
    s.images.push_back(c.images[i]);
    s.origins.push_back(c.origins[i]);
  }
  return s;
}

// Placement error relative to the anchor, RMS over placed frames.
double placement_rms(const Panorama& p, const Crops& c) {
  const Point2 a0 = p.placements[p.anchor]->apply({0, 0});
  double se = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.images.size(); ++i) {
    if (!p.placements[i]) continue;
    const Point2 q = p.placements[i]->apply({0, 0});
    const double ex = (q.x - a0.x) - (c.origins[i].x - c.origins[p.anchor].x);
    const double ey = (q.y - a0.y) - (c.origins[i].y - c.origins[p.anchor].y);
    se += ex * ex + ey * ey;
    ++n;
  }
  return std::sqrt(se / n);
}

const RasterImage& scene() {
  static const RasterImage img = synthetic_fundus(900, 900, 41);
  return img;
}

}  // namespace

TEST_CASE("two overlapping frames give one edge and a two-frame panorama") {
  Crops c;
  c.side = 200;
  c.origins = {{300, 300}, {390, 340}};
  for (const Point2& o : c.origins) c.images.push_back(crop(scene(), CropBox::from_top_left(static_cast<int>(o.x), static_cast<int>(o.y), 200, 200)));
  const OverlapGraph g = build_overlap_graph(c.images, {}, 0);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].a == 0);
  CHECK(g.edges[0].b == 1);
  CHECK(g.anchor == 0);
  const Panorama p = stitch(c.images, g);
  CHECK(p.unplaced.empty());
  CHECK(placement_rms(p, c) < 1.0);
  CHECK(p.canvas.width() >= 290);
  CHECK(p.canvas.height() >= 240);
}

TEST_CASE("three collinear frames at 50% overlap are placed within 2 px") {
  Crops c;
  c.side = 200;
  c.origins = {{450, 350}, {250, 350}, {350, 350}};
  for (const Point2& o : c.origins) c.images.push_back(crop(scene(), CropBox::from_top_left(static_cast<int>(o.x), static_cast<int>(o.y), 200, 200)));
  const Panorama p = stitch_images(c.images, {}, {}, 3);
  CHECK(p.unplaced.empty());
  const Point2 a0 = p.placements[p.anchor]->apply({0, 0});
  for (int i = 0; i < 3; ++i) {
    const Point2 q = p.placements[i]->apply({0, 0});
    CHECK(std::hypot((q.x - a0.x) - (c.origins[i].x - c.origins[p.anchor].x),
                     (q.y - a0.y) - (c.origins[i].y - c.origins[p.anchor].y)) < 2.0);
  }
  // The frames form one rectangle, so almost all of the canvas is covered.
  CHECK(static_cast<double>(std::count(p.coverage.begin(), p.coverage.end(), 0)) <= 0.02 * p.canvas.size());
}

TEST_CASE("a shuffled 4x5 grid only links overlapping frames and places them") {
  const RasterImage big = synthetic_fundus(1400, 1400, 55);
  const Crops c = grid_crops(big, 200, 5, 4, 110, 4, 9);
  const OverlapGraph g = build_overlap_graph(c.images, {}, 1);
  for (const GraphEdge& e : g.edges) {
    CAPTURE(e.a);
    CAPTURE(e.b);
    CHECK(c.overlap(e.a, e.b) > 0.0);
  }
  // Each frame's accepted edge is its best-scoring nearest-neighbour candidate.
  for (const CandidateEdge& acc : g.candidates) {
    if (!acc.accepted) continue;
    for (const CandidateEdge& other : g.candidates) {
      if (other.from == acc.from && !other.searched && other.aligned) CHECK(other.mi <= acc.mi);
    }
  }
  // The breadth-first tree is consistent with parent links.
  CHECK(g.order.front() == g.anchor);
  std::set<int> seen;
  for (int v : g.order) {
    if (v != g.anchor) CHECK(seen.count(g.parent[v]) == 1);
    seen.insert(v);
  }
  StitchSettings s;
  s.allow_partial = true;
  const Panorama p = stitch(c.images, g, s);
  CHECK(p.unplaced.empty());
  CHECK(placement_rms(p, c) < 3.0);

  // Placements compose along the tree.
  for (int v : g.order) {
    if (v == g.anchor || !p.edge_transforms[v]) continue;
    const AffineTransform want = compose(*p.placements[g.parent[v]], *p.edge_transforms[v]);
    const auto a = want.params(), b = p.placements[v]->params();
    for (std::size_t k = 0; k < 6; ++k) CHECK(a[k] == doctest::Approx(b[k]));
  }
}

TEST_CASE("candidate MI is the same whichever way round a pair is registered") {
  Crops c;
  c.side = 200;
  c.origins = {{100, 100}, {180, 150}, {600, 620}};
  for (const Point2& o : c.origins) c.images.push_back(crop(scene(), CropBox::from_top_left(static_cast<int>(o.x), static_cast<int>(o.y), 200, 200)));
  GraphOptions opt;
  opt.neighbors = 2;
  const OverlapGraph g = build_overlap_graph(c.images, opt, 0);
  for (const CandidateEdge& x : g.candidates) {
    for (const CandidateEdge& y : g.candidates) {
      if (x.from != y.to || x.to != y.from) continue;
      CHECK(x.mi == y.mi);
      if (x.aligned) {
        const AffineTransform round = compose(x.transform, y.transform);
        CHECK(std::abs(round.tx) < 1e-9);
        CHECK(std::abs(round.a11 - 1.0) < 1e-9);
      }
    }
  }
  // The far frame has no true neighbour and must not be joined.
  for (const GraphEdge& e : g.edges) CHECK((e.a != 2 && e.b != 2));
  CHECK_THROWS_AS(stitch(c.images, g), Error);
  CHECK(code_of([&] { stitch(c.images, g); }) == ErrorCode::DisconnectedGraph);
  StitchSettings partial;
  partial.allow_partial = true;
  const Panorama p = stitch(c.images, g, partial);
  CHECK(p.unplaced == std::vector<int>{2});
  CHECK_FALSE(p.placements[2].has_value());
}

TEST_CASE("probe translation recovers an integer offset") {
  const RasterImage a = crop(scene(), CropBox::from_top_left(300, 200, 200, 200));
  const RasterImage b = crop(scene(), CropBox::from_top_left(250, 240, 200, 200));
  const ProbeResult r = probe_translation(a, b);
  // a(x) = b(x + (50, -40)).
  CHECK(std::abs(r.transform.tx - 50) <= 200.0 / 16);
  CHECK(std::abs(r.transform.ty + 40) <= 200.0 / 16);
  CHECK(code_of([&] { probe_translation(a, RasterImage(100, 100, 0.5)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("a single image is its own panorama") {
  const RasterImage a = crop(scene(), CropBox::from_top_left(10, 10, 120, 90));
  const Panorama p = stitch_images({a}, {}, {}, 0);
  CHECK(p.anchor == 0);
  CHECK(p.unplaced.empty());
  REQUIRE(p.canvas.width() == a.width());
  REQUIRE(p.canvas.height() == a.height());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(p.canvas.pixels()[i] == doctest::Approx(a.pixels()[i]));
  CHECK(code_of([&] { build_overlap_graph({a}, {}, 0); }) == ErrorCode::TooFewImages);
  CHECK(code_of([&] { stitch_images({}, {}, {}, 0); }) == ErrorCode::TooFewImages);
}

TEST_CASE("writers emit one line per candidate and per image") {
  Crops c;
  c.side = 200;
  c.origins = {{300, 300}, {390, 340}};
  for (const Point2& o : c.origins) c.images.push_back(crop(scene(), CropBox::from_top_left(static_cast<int>(o.x), static_cast<int>(o.y), 200, 200)));
  const OverlapGraph g = build_overlap_graph(c.images, {}, 0);
  const Panorama p = stitch(c.images, g);
  std::ostringstream graph, place;
  write_graph_records(graph, g);
  write_placements(place, p);
  const std::string gs = graph.str(), ps = place.str();
  CHECK(gs.rfind("i,j,mi,accepted,bridge\n", 0) == 0);
  CHECK(std::count(gs.begin(), gs.end(), '\n') == static_cast<long>(g.candidates.size()) + 1);
  CHECK(ps.rfind("image,placed,a11,a12,a21,a22,tx,ty\n", 0) == 0);
  CHECK(std::count(ps.begin(), ps.end(), '\n') == 3);
  CHECK(ps.find("\n0,1,") != std::string::npos);
}
