#include "tplreg/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <tuple>
#include <numeric>
#include <ostream>
#include <string>

#include "tplreg/error.hpp"
#include "tplreg/pca.hpp"

namespace tplreg {

namespace {

std::vector<RasterImage> common_size(const std::vector<RasterImage>& images) {
  std::vector<RasterImage> out;
  out.reserve(images.size());
  const int w = images.front().width();
  const int h = images.front().height();
  for (const RasterImage& img : images) out.push_back(resample(img, w, h));
  return out;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

// Share of a w x h frame that lands inside an equally sized frame under `t`,
// estimated on a 32 x 32 lattice of pixel centres.
double overlap_fraction(const AffineTransform& t, int w, int h) {
  constexpr int kLattice = 32;
  int inside = 0;
  for (int j = 0; j < kLattice; ++j) {
    for (int i = 0; i < kLattice; ++i) {
      const Point2 q = t.apply({(i + 0.5) * w / kLattice - 0.5, (j + 0.5) * h / kLattice - 0.5});
      inside += q.x >= -0.5 && q.x <= w - 0.5 && q.y >= -0.5 && q.y <= h - 0.5;
    }
  }
  return static_cast<double>(inside) / (kLattice * kLattice);
}

}  // namespace

ProbeResult probe_translation(const RasterImage& child, const RasterImage& parent,
                              const ProbeSettings& settings, int bins) {
  if (child.width() != parent.width() || child.height() != parent.height()) {
    throw Error(ErrorCode::DimensionMismatch, "probe frames differ in size");
  }
  const int w = child.width();
  const int h = child.height();
  const double factor = std::max(1.0, std::min(w, h) / 64.0);
  const int sw = std::max(8, static_cast<int>(std::lround(w / factor)));
  const int sh = std::max(8, static_cast<int>(std::lround(h / factor)));
  const double fx = static_cast<double>(w) / sw;
  const double fy = static_cast<double>(h) / sh;
  const double sigma = 0.5 * std::max(fx, fy);
  const RasterImage c = sigma > 0.5 ? resample(gaussian_blur(child, sigma), sw, sh) : resample(child, sw, sh);
  const RasterImage p = sigma > 0.5 ? resample(gaussian_blur(parent, sigma), sw, sh) : resample(parent, sw, sh);

  const int reach_x = static_cast<int>(std::floor(settings.range * sw));
  const int reach_y = static_cast<int>(std::floor(settings.range * sh));
  const int step = std::max(1, static_cast<int>(std::lround(settings.step * std::min(sw, sh))));
  double best_mi = -std::numeric_limits<double>::infinity();
  Point2 best{0.0, 0.0};
  for (int ty = -reach_y; ty <= reach_y; ty += step) {
    for (int tx = -reach_x; tx <= reach_x; tx += step) {
      const double overlap = static_cast<double>(sw - std::abs(tx)) * (sh - std::abs(ty)) / (sw * sh);
      if (sw - std::abs(tx) <= 0 || sh - std::abs(ty) <= 0 || overlap < settings.min_overlap) continue;
      double mi = 0.0;
      try {
        mi = mi_objective(c, p, AffineTransform::translation(tx, ty), bins).mi;
      } catch (const Error&) {
        continue;
      }
      if (mi > best_mi) {
        best_mi = mi;
        best = {static_cast<double>(tx), static_cast<double>(ty)};
      }
    }
  }
  if (!std::isfinite(best_mi)) throw Error(ErrorCode::NoValidPixels, "no probe offset had enough overlap");
  // Pixel centres map as x_full = (x_small + 0.5) f - 0.5, so a shift scales by f.
  return {AffineTransform::translation(best.x * fx, best.y * fy), best_mi};
}

std::vector<int> OverlapGraph::neighbors(int node) const {
  std::vector<int> out;
  for (const GraphEdge& e : edges) {
    if (e.a == node) out.push_back(e.b);
    if (e.b == node) out.push_back(e.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

OverlapGraph build_overlap_graph(const std::vector<RasterImage>& images, const GraphOptions& options,
                                 std::uint64_t seed) {
  if (images.size() < 2) {
    throw Error(ErrorCode::TooFewImages, "need at least 2 images, got " + std::to_string(images.size()));
  }
  if (options.neighbors < 1) throw Error(ErrorCode::InvalidArgument, "neighbour count must be positive");
  const std::vector<RasterImage> imgs = common_size(images);
  const int n = static_cast<int>(imgs.size());

  std::vector<std::vector<double>> rows;
  rows.reserve(imgs.size());
  for (const RasterImage& img : imgs) rows.push_back(to_vector(img));
  const DataMatrix data = DataMatrix::from_rows(rows);
  const int l = static_cast<int>(std::min<Eigen::Index>(options.components, std::min(data.rows(), data.cols())));
  const RandomizedOptions ro{10, 1, seed};
  const PcaModel pca = l + ro.oversample > std::min(data.rows(), data.cols()) ? fit_exact(data, l)
                                                                               : fit_randomized(data, l, ro);

  OverlapGraph g;
  g.nodes = n;
  const int k = std::min(options.neighbors, n - 1);

  // Registration of one ordered pair. The reverse direction reuses the
  // inverse so each unordered pair is registered once.
  std::map<std::pair<int, int>, CandidateEdge> done;
  auto evaluate = [&](int i, int j) {
    if (auto it = done.find({j, i}); it != done.end()) {
      CandidateEdge c = it->second;
      std::swap(c.from, c.to);
      if (c.aligned) c.transform = c.transform.inverse();
      c.accepted = false;
      return done[{i, j}] = c;
    }
    CandidateEdge c{i, j, 0.0, AffineTransform::identity(), false, false, false};
    try {
      const ProbeResult probe = probe_translation(imgs[i], imgs[j], options.probe, options.registration.bins);
      const RegistrationResult r = register_affine(imgs[i], imgs[j], probe.transform, options.registration);
      c.mi = r.final_mi;
      c.transform = r.transform;
      // Slivers of overlap give inflated MI from few samples.
      c.aligned = std::isfinite(r.final_mi) &&
                  overlap_fraction(r.transform, imgs[i].width(), imgs[i].height()) >= options.probe.min_overlap;
    } catch (const Error&) {
      // Unalignable pair (no overlap or flat frame): stays at MI 0.
    }
    return done[{i, j}] = c;
  };
  auto passes = [&](const CandidateEdge& c) { return c.aligned && c.mi >= options.accept_mi; };

  std::vector<std::pair<int, int>> accepted_pairs;
  for (int i = 0; i < n; ++i) {
    const auto row = pca.components.row(i);
    const std::vector<double> q(row.data(), row.data() + row.size());
    const std::vector<Neighbor> nn = nearest_neighbor(pca, q, std::min(k + 1, n));
    std::vector<CandidateEdge> mine;
    for (const Neighbor& nb : nn) {
      // Self may not be among the returned rows when duplicates tie ahead of it.
      if (nb.index == i || static_cast<int>(mine.size()) == k) continue;
      mine.push_back(evaluate(i, static_cast<int>(nb.index)));
    }
    auto best = std::max_element(mine.begin(), mine.end(),
                                 [](const CandidateEdge& a, const CandidateEdge& b) { return a.mi < b.mi; });
    if (best != mine.end() && passes(*best)) {
      best->accepted = true;
      accepted_pairs.emplace_back(std::min(best->from, best->to), std::max(best->from, best->to));
    }
    g.candidates.insert(g.candidates.end(), mine.begin(), mine.end());
  }

  auto pair_mi = [&](int a, int b) {
    double mi = -std::numeric_limits<double>::infinity();
    for (const CandidateEdge& c : g.candidates) {
      if (c.accepted && ((c.from == a && c.to == b) || (c.from == b && c.to == a))) mi = std::max(mi, c.mi);
    }
    return mi;
  };
  std::sort(accepted_pairs.begin(), accepted_pairs.end());
  accepted_pairs.erase(std::unique(accepted_pairs.begin(), accepted_pairs.end()), accepted_pairs.end());
  UnionFind uf(n);
  int groups = n;
  for (const auto& [a, b] : accepted_pairs) {
    g.edges.push_back({a, b, pair_mi(a, b), false});
    groups -= uf.unite(a, b);
  }

  if (options.bridge_components) {
    auto add_bridge = [&](const CandidateEdge& c) {
      g.edges.push_back({std::min(c.from, c.to), std::max(c.from, c.to), c.mi, true});
      --groups;
    };
    // Best-neighbour edges alone leave a forest; first join it with the
    // strongest validated candidates already at hand.
    std::vector<CandidateEdge> pool = g.candidates;
    std::stable_sort(pool.begin(), pool.end(),
                     [](const CandidateEdge& a, const CandidateEdge& b) { return a.mi > b.mi; });
    for (const CandidateEdge& c : pool) {
      if (passes(c) && uf.unite(c.from, c.to)) add_bridge(c);
    }
    // Then try further cross-component pairs, closest in feature space first.
    if (groups > 1 && options.max_search_pairs > 0) {
      std::vector<std::tuple<double, int, int>> pairs;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          pairs.emplace_back((pca.components.row(i) - pca.components.row(j)).squaredNorm(), i, j);
        }
      }
      std::sort(pairs.begin(), pairs.end());
      int budget = options.max_search_pairs;
      for (const auto& [d, i, j] : pairs) {
        if (groups == 1 || budget == 0) break;
        if (uf.find(i) == uf.find(j) || done.count({i, j}) || done.count({j, i})) continue;
        --budget;
        CandidateEdge c = evaluate(i, j);
        c.searched = true;
        if (passes(c) && uf.unite(i, j)) add_bridge(c);
        g.candidates.push_back(c);
      }
    }
  }

  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  for (const GraphEdge& e : g.edges) {
    ++degree[e.a];
    ++degree[e.b];
  }
  g.anchor = static_cast<int>(std::max_element(degree.begin(), degree.end()) - degree.begin());

  g.parent.assign(static_cast<std::size_t>(n), -1);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::deque<int> queue{g.anchor};
  seen[g.anchor] = 1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    g.order.push_back(u);
    for (int v : g.neighbors(u)) {
      if (seen[v]) continue;
      seen[v] = 1;
      g.parent[v] = u;
      queue.push_back(v);
    }
  }
  return g;
}

namespace {

// Starting point for registering child into parent: the graph's own alignment
// of the pair when it has one, else a fresh probe.
AffineTransform edge_init(const OverlapGraph& graph, int child, int parent,
                          const std::vector<RasterImage>& imgs, const StitchSettings& settings) {
  const CandidateEdge* best = nullptr;
  bool reversed = false;
  for (const CandidateEdge& c : graph.candidates) {
    if (!c.aligned) continue;
    const bool fwd = c.from == child && c.to == parent;
    const bool rev = c.from == parent && c.to == child;
    if ((fwd || rev) && (!best || c.mi > best->mi)) {
      best = &c;
      reversed = rev;
    }
  }
  if (best) return reversed ? best->transform.inverse() : best->transform;
  return probe_translation(imgs[child], imgs[parent], settings.probe, settings.registration.bins).transform;
}

}  // namespace

Panorama stitch(const std::vector<RasterImage>& images, const OverlapGraph& graph,
                const StitchSettings& settings) {
  if (images.empty()) throw Error(ErrorCode::TooFewImages, "no images to stitch");
  const int n = static_cast<int>(images.size());
  if (graph.nodes != n) throw Error(ErrorCode::DimensionMismatch, "graph does not match the image list");
  const std::vector<RasterImage> imgs = common_size(images);
  const int w = imgs.front().width();
  const int h = imgs.front().height();

  Panorama pano;
  pano.anchor = n == 1 ? 0 : graph.anchor;
  pano.placements.assign(imgs.size(), std::nullopt);
  pano.edge_transforms.assign(imgs.size(), std::nullopt);

  std::vector<char> reached(imgs.size(), 0);
  if (n == 1) {
    reached[0] = 1;
  } else {
    for (int v : graph.order) reached[v] = 1;
  }
  std::vector<int> unreached;
  for (int i = 0; i < n; ++i) {
    if (!reached[i]) unreached.push_back(i);
  }
  if (!unreached.empty() && !settings.allow_partial) {
    std::string list;
    for (int i : unreached) list += (list.empty() ? "" : ",") + std::to_string(i);
    throw Error(ErrorCode::DisconnectedGraph, "images not reachable from the anchor: " + list);
  }

  pano.placements[pano.anchor] = AffineTransform::identity();
  const std::vector<int> order = n == 1 ? std::vector<int>{0} : graph.order;
  for (int v : order) {
    if (v == pano.anchor) continue;
    const int p = graph.parent[v];
    if (p < 0 || !pano.placements[p]) continue;  // parent edge failed earlier
    try {
      const AffineTransform init = edge_init(graph, v, p, imgs, settings);
      const RegistrationResult r = register_affine(imgs[v], imgs[p], init, settings.registration);
      if (r.final_mi < settings.edge_mi_floor) continue;
      pano.edge_transforms[v] = r.transform;
      pano.placements[v] = compose(*pano.placements[p], r.transform);
    } catch (const Error&) {
      // The whole subtree below v stays unplaced.
    }
  }

  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto& pl : pano.placements) {
    if (!pl) continue;
    for (double y : {0.0, h - 1.0}) {
      for (double x : {0.0, w - 1.0}) {
        const Point2 q = pl->apply({x, y});
        min_x = std::min(min_x, q.x);
        min_y = std::min(min_y, q.y);
        max_x = std::max(max_x, q.x);
        max_y = std::max(max_y, q.y);
      }
    }
  }
  const double ox = std::floor(min_x);
  const double oy = std::floor(min_y);
  const AffineTransform offset = AffineTransform::translation(-ox, -oy);
  const int cw = static_cast<int>(std::ceil(max_x - ox)) + 1;
  const int ch = static_cast<int>(std::ceil(max_y - oy)) + 1;
  for (int i = 0; i < n; ++i) {
    if (pano.placements[i]) {
      pano.placements[i] = compose(offset, *pano.placements[i]);
    } else {
      pano.unplaced.push_back(i);
    }
  }

  // Feathered average: each frame weighs its samples by distance to its border.
  std::vector<double> acc(static_cast<std::size_t>(cw) * ch, 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    if (!pano.placements[i]) continue;
    const AffineTransform& fwd = *pano.placements[i];
    const AffineTransform inv = fwd.inverse();
    double bx0 = cw, by0 = ch, bx1 = 0, by1 = 0;
    for (double y : {0.0, h - 1.0}) {
      for (double x : {0.0, w - 1.0}) {
        const Point2 q = fwd.apply({x, y});
        bx0 = std::min(bx0, q.x);
        by0 = std::min(by0, q.y);
        bx1 = std::max(bx1, q.x);
        by1 = std::max(by1, q.y);
      }
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(bx0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(by0)));
    const int x1 = std::min(cw - 1, static_cast<int>(std::ceil(bx1)));
    const int y1 = std::min(ch - 1, static_cast<int>(std::ceil(by1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
        const BilinearSample b = sample_bilinear(imgs[i], s.x, s.y);
        if (!b.valid) continue;
        const double weight = std::min({s.x + 1.0, w - s.x, s.y + 1.0, h - s.y});
        const std::size_t k = static_cast<std::size_t>(y) * cw + x;
        acc[k] += weight * b.value;
        wsum[k] += weight;
      }
    }
  }
  pano.coverage.assign(acc.size(), 0);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    if (wsum[k] > 0.0) {
      acc[k] /= wsum[k];
      pano.coverage[k] = 1;
    }
  }
  pano.canvas = RasterImage(cw, ch, std::move(acc));
  return pano;
}

Panorama stitch_images(const std::vector<RasterImage>& images, const GraphOptions& graph_options,
                       const StitchSettings& settings, std::uint64_t seed) {
  if (images.size() == 1) {
    OverlapGraph g;
    g.nodes = 1;
    g.anchor = 0;
    g.parent = {-1};
    g.order = {0};
    return stitch(images, g, settings);
  }
  return stitch(images, build_overlap_graph(images, graph_options, seed), settings);
}

void write_graph_records(std::ostream& out, const OverlapGraph& graph) {
  out << "i,j,mi,accepted,bridge\n";
  for (const CandidateEdge& c : graph.candidates) {
    bool bridge = false;
    for (const GraphEdge& e : graph.edges) {
      bridge = bridge || (e.bridge && e.a == std::min(c.from, c.to) && e.b == std::max(c.from, c.to));
    }
    out << c.from << ',' << c.to << ',' << c.mi << ',' << (c.accepted ? 1 : 0) << ',' << (bridge ? 1 : 0)
        << '\n';
  }
}

void write_placements(std::ostream& out, const Panorama& panorama) {
  out << "image,placed,a11,a12,a21,a22,tx,ty\n";
  for (std::size_t i = 0; i < panorama.placements.size(); ++i) {
    const auto& p = panorama.placements[i];
    out << i << ',' << (p ? 1 : 0);
    if (p) {
      for (double v : p->params()) out << ',' << v;
    } else {
      out << ",,,,,,";
    }
    out << '\n';
  }
}

}  // namespace tplreg
