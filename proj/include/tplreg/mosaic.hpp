#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tplreg/affine.hpp"
#include "tplreg/image.hpp"
#include "tplreg/registration.hpp"

namespace tplreg {

/// Translation search run before each pairwise registration: offsets up to
/// `range` x frame on a lattice of `step` x frame, on reduced copies.
struct ProbeSettings {
  double range = 0.8;
  double step = 1.0 / 16.0;
  /// Offsets whose overlap is below this fraction of the frame are skipped.
  double min_overlap = 0.25;
};

/// Neighbour candidate of one image, scored by the MI of `from` registered
/// into `to` starting from the best probed translation.
struct CandidateEdge {
  int from = 0;
  int to = 0;
  double mi = 0.0;
  AffineTransform transform;  ///< from -> to, meaningful when `aligned`
  bool aligned = false;       ///< registration converged onto enough overlap
  bool accepted = false;  ///< the best of `from`'s candidates and above the acceptance MI
  /// Tried while joining components; not one of `from`'s nearest neighbours.
  bool searched = false;
};

struct GraphEdge {
  int a = 0;  ///< a < b
  int b = 0;
  double mi = 0.0;
  /// Not any node's best candidate; added only to join otherwise separate
  /// components, strongest candidate first.
  bool bridge = false;
};

struct OverlapGraph {
  int nodes = 0;
  std::vector<CandidateEdge> candidates;
  std::vector<GraphEdge> edges;  ///< deduplicated accepted edges, then bridges
  int anchor = -1;               ///< highest degree over `edges`, lowest index on ties
  std::vector<int> parent;       ///< breadth-first tree from the anchor; -1 at the anchor and unreached nodes
  std::vector<int> order;        ///< reached nodes in breadth-first order

  std::vector<int> neighbors(int node) const;
};

struct GraphOptions {
  int components = 20;
  int neighbors = 3;
  RegistrationSettings registration{};
  ProbeSettings probe{};
  /// Candidates scoring below this never become edges. Registered frames of
  /// the same scene score well above 1 nat; unrelated frames stay below 1.
  /// Candidates whose registered overlap is under `probe.min_overlap` are
  /// not aligned at all.
  double accept_mi = 1.2;
  /// Join separate components with the strongest remaining candidates that
  /// clear `accept_mi`, then with further cross-component pairs in order of
  /// feature distance, registering at most `max_search_pairs` of them.
  bool bridge_components = true;
  int max_search_pairs = 200;
};

/// PCA of the vectorized images, each image's nearest neighbours in score
/// space scored by registered MI, the best kept as an edge.
/// Images of other sizes are resampled to the first image's size.
OverlapGraph build_overlap_graph(const std::vector<RasterImage>& images, const GraphOptions& options,
                                 std::uint64_t seed);

struct StitchSettings {
  RegistrationSettings registration{};
  /// Used when the graph carries no aligned candidate for a tree edge.
  ProbeSettings probe{};
  /// Edge registrations ending below this MI leave the subtree unplaced.
  double edge_mi_floor = 0.05;
  /// Place what is reachable instead of failing on a disconnected graph.
  bool allow_partial = false;
};

struct Panorama {
  RasterImage canvas;
  ValidityMask coverage;
  /// image -> canvas; empty for images that could not be placed
  std::vector<std::optional<AffineTransform>> placements;
  /// child -> parent transform of every registered tree edge, index-aligned with images
  std::vector<std::optional<AffineTransform>> edge_transforms;
  int anchor = -1;
  std::vector<int> unplaced;
};

struct ProbeResult {
  AffineTransform transform;  ///< child -> parent translation
  double mi = 0.0;
};

/// Exhaustive translation search of `child` against `parent` on reduced
/// copies of both frames; offsets with too little overlap are skipped.
ProbeResult probe_translation(const RasterImage& child, const RasterImage& parent,
                              const ProbeSettings& settings = {}, int bins = 32);

/// Registers every image to its parent along the graph's tree and composes
/// the transforms into one canvas. Throws DisconnectedGraph (naming the
/// unreached images) unless allow_partial.
Panorama stitch(const std::vector<RasterImage>& images, const OverlapGraph& graph,
                const StitchSettings& settings = {});

/// Graph build plus stitch; a single image is returned as its own panorama.
Panorama stitch_images(const std::vector<RasterImage>& images, const GraphOptions& graph_options,
                       const StitchSettings& settings, std::uint64_t seed);

/// One "i,j,mi,accepted,bridge" line per candidate, with a header line.
void write_graph_records(std::ostream& out, const OverlapGraph& graph);
/// "image,placed,a11,a12,a21,a22,tx,ty" per image.
void write_placements(std::ostream& out, const Panorama& panorama);

}  // namespace tplreg
