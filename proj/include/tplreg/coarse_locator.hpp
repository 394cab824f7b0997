#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "tplreg/affine.hpp"
#include "tplreg/image.hpp"
#include "tplreg/pca.hpp"
#include "tplreg/tile_matrix.hpp"

namespace tplreg {

enum class PcaMethod { Randomized, Exact };

/// Second-stage (block PCA) parameters.
struct BlockOptions {
  int patch_stride = 5;
  int components = 10;
  /// Side of the re-cropped search region relative to the template side.
  double enlargement = 1.5;
  /// Patch side relative to the template side.
  double patch_fraction = 0.5;
};

/// Patch PCA of one target's enlarged region, optionally cached at build time.
struct PatchDictionary {
  CropBox region;
  TilingSpec tiling;
  PcaModel pca;
  std::vector<Point2> patch_centers;  ///< reference coordinates, index-aligned with scores
};

struct DictionaryOptions {
  int components = 20;
  PcaMethod method = PcaMethod::Randomized;
  RandomizedOptions randomized{};
  TileNormalization normalization = TileNormalization::None;
  /// Second index over the same tiles. Raw intensities hold up best under
  /// geometric change, mean-removed tiles under brightness change, so by
  /// default both are kept and each query tries the target of either.
  std::optional<TileNormalization> alternate = TileNormalization::Mean;
  /// Cache the patch PCA of every target (memory heavy; speeds up queries).
  bool precompute_patches = false;
  BlockOptions block{};
};

/// Tile PCA of the same boxes under another normalization.
struct AlternateIndex {
  TileNormalization normalization = TileNormalization::Mean;
  PcaModel pca;

  bool operator==(const AlternateIndex&) const = default;
};

/// Offline index over one reference image: the tile PCA plus tile placements.
struct TargetDictionary {
  PcaModel pca;
  std::vector<CropBox> boxes;
  TilingSpec tiling;
  int reference_width = 0;
  int reference_height = 0;
  std::uint64_t seed = 0;
  TileNormalization normalization = TileNormalization::None;
  std::optional<AlternateIndex> alternate;
  BlockOptions block{};
  std::vector<PatchDictionary> patch_models;  ///< empty unless precomputed

  std::size_t size() const { return boxes.size(); }
};

struct CoarseLocation {
  double center_x = 0.0;
  double center_y = 0.0;
  Eigen::Index chosen_target = 0;
  /// Best angle of the rotation sweep at the centre (radians) and its MI.
  double rotation = 0.0;
  double sweep_mi = 0.0;
  /// Found through the alternate index.
  bool alternate = false;
  /// (template patch index, matched target patch index)
  std::vector<std::pair<Eigen::Index, Eigen::Index>> patch_votes;

  bool operator==(const CoarseLocation&) const = default;
};

/// Rotations of the template about its centre tried at a coarse location,
/// -max..max in steps of `step` degrees. max 0 tries the translation only.
struct RotationSweep {
  double max_degrees = 20.0;
  double step_degrees = 5.0;
  int bins = 32;
};

struct CoarseOptions {
  bool use_block = true;
  BlockOptions block{};
  RotationSweep sweep{};
};

TargetDictionary build_dictionary(const RasterImage& reference, const TilingSpec& tiling,
                                  const DictionaryOptions& options, std::uint64_t seed);

/// Index of the target whose score is nearest the template's projection.
Eigen::Index locate_global(const TargetDictionary& dict, const RasterImage& template_image);
/// The same through the alternate index; throws InvalidArgument without one.
Eigen::Index locate_global_alternate(const TargetDictionary& dict, const RasterImage& template_image);

/// Patch-level refinement around the chosen target. Patches are normalized
/// like the primary index unless `normalization` says otherwise.
CoarseLocation locate_block(const TargetDictionary& dict, const RasterImage& reference,
                            const RasterImage& template_image, Eigen::Index coarse_target,
                            const BlockOptions& options,
                            std::optional<TileNormalization> normalization = std::nullopt);

struct SweepResult {
  double rotation = 0.0;  ///< radians
  double mi = 0.0;
};

/// MI of the template rotated about its centre and placed at `center`, best
/// over the sweep. Placements with no valid pixels are skipped.
SweepResult rotation_sweep(const RasterImage& reference, const RasterImage& template_image, Point2 center,
                           const RotationSweep& sweep);

/// Template placement of a sweep result: template -> reference.
AffineTransform sweep_transform(Point2 center, double rotation, int template_width, int template_height);

/// Global then (optionally) block localization. With an alternate index whose
/// target differs, both candidates are refined and the one with the higher
/// sweep MI is kept, the primary on ties.
CoarseLocation coarse_localize(const TargetDictionary& dict, const RasterImage& reference,
                               const RasterImage& template_image, const CoarseOptions& options);

/// Patch PCA of the enlarged region around target `target`; what
/// precompute_patches caches.
PatchDictionary build_patch_dictionary(const TargetDictionary& dict, const RasterImage& reference,
                                       Eigen::Index target, const BlockOptions& options);

/// Clamps a template-centre estimate so a template-sized box around it lies
/// inside the reference.
Point2 clamp_center(Point2 c, int template_width, int template_height, int reference_width,
                    int reference_height);

/// "TDIC" tag, version byte, tiling, reference size, seed, normalization, boxes, the PCA model
/// block, the optional alternate index, then the optional patch models.
void write_dictionary(std::ostream& out, const TargetDictionary& dict);
TargetDictionary read_dictionary(std::istream& in);

}  // namespace tplreg
