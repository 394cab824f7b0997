#include "tplreg/coarse_locator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "tplreg/error.hpp"
#include "tplreg/registration.hpp"

namespace tplreg {

namespace {

constexpr std::uint8_t kDictionaryVersion = 2;

RandomizedOptions clamp_oversample(RandomizedOptions opts, const DataOperator& data, int l) {
  const Eigen::Index room = std::min(data.rows(), data.cols()) - l;
  opts.oversample = static_cast<int>(std::clamp<Eigen::Index>(opts.oversample, 0, std::max<Eigen::Index>(room, 0)));
  return opts;
}

std::uint64_t patch_seed(std::uint64_t seed, Eigen::Index target) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(target + 1));
}

RasterImage to_tile_size(const RasterImage& image, const TilingSpec& tiling) {
  if (image.width() == tiling.tile_width && image.height() == tiling.tile_height) return image;
  return resample(image, tiling.tile_width, tiling.tile_height);
}

bool same_block(const BlockOptions& a, const BlockOptions& b) {
  return a.patch_stride == b.patch_stride && a.components == b.components &&
         a.enlargement == b.enlargement && a.patch_fraction == b.patch_fraction;
}

void write_box(std::ostream& out, const CropBox& b) {
  detail::write_le(out, b.center_x);
  detail::write_le(out, b.center_y);
  detail::write_le(out, static_cast<std::uint32_t>(b.width));
  detail::write_le(out, static_cast<std::uint32_t>(b.height));
}

CropBox read_box(std::istream& in) {
  CropBox b;
  b.center_x = detail::read_le<double>(in);
  b.center_y = detail::read_le<double>(in);
  b.width = static_cast<int>(detail::read_le<std::uint32_t>(in));
  b.height = static_cast<int>(detail::read_le<std::uint32_t>(in));
  return b;
}

void write_tiling(std::ostream& out, const TilingSpec& t) {
  detail::write_le(out, static_cast<std::uint32_t>(t.tile_width));
  detail::write_le(out, static_cast<std::uint32_t>(t.tile_height));
  detail::write_le(out, static_cast<std::uint32_t>(t.stride));
}

TilingSpec read_tiling(std::istream& in) {
  TilingSpec t;
  t.tile_width = static_cast<int>(detail::read_le<std::uint32_t>(in));
  t.tile_height = static_cast<int>(detail::read_le<std::uint32_t>(in));
  t.stride = static_cast<int>(detail::read_le<std::uint32_t>(in));
  return t;
}

PcaModel fit_tiles(const TileMatrix& tiles, const DictionaryOptions& options, std::uint64_t seed) {
  if (options.method == PcaMethod::Exact) return fit_exact(tiles, options.components);
  RandomizedOptions ro = clamp_oversample(options.randomized, tiles, options.components);
  ro.seed = seed;
  return fit_randomized(tiles, options.components, ro);
}

Eigen::Index nearest_target(const PcaModel& pca, TileNormalization normalization, const TilingSpec& tiling,
                            const RasterImage& template_image) {
  std::vector<double> v = to_vector(to_tile_size(template_image, tiling));
  normalize_features(v, normalization);
  const std::vector<double> z = project(pca, v);
  return nearest_neighbor(pca, z, 1).front().index;
}

TileNormalization read_normalization(std::istream& in) {
  const auto norm = detail::read_le<std::uint8_t>(in);
  if (norm > static_cast<std::uint8_t>(TileNormalization::Standardize)) {
    throw Error(ErrorCode::Format, "unknown tile normalization " + std::to_string(norm));
  }
  return static_cast<TileNormalization>(norm);
}

}  // namespace

Point2 clamp_center(Point2 c, int template_width, int template_height, int reference_width,
                    int reference_height) {
  const double hx = template_width / 2.0;
  const double hy = template_height / 2.0;
  const double max_x = std::max(hx, reference_width - hx);
  const double max_y = std::max(hy, reference_height - hy);
  return {std::clamp(c.x, hx, max_x), std::clamp(c.y, hy, max_y)};
}

TargetDictionary build_dictionary(const RasterImage& reference, const TilingSpec& tiling,
                                  const DictionaryOptions& options, std::uint64_t seed) {
  tiling.validate();
  if (reference.width() < tiling.tile_width || reference.height() < tiling.tile_height) {
    throw Error(ErrorCode::ReferenceTooSmall,
                "reference " + std::to_string(reference.width()) + "x" +
                    std::to_string(reference.height()) + " must be at least " +
                    std::to_string(tiling.tile_width) + "x" + std::to_string(tiling.tile_height));
  }
  const TileMatrix tiles(reference, tiling, options.normalization);
  if (options.components > tiles.rows()) {
    throw Error(ErrorCode::InvalidRank, std::to_string(options.components) +
                                            " components requested from only " +
                                            std::to_string(tiles.rows()) + " targets");
  }

  TargetDictionary dict;
  dict.tiling = tiling;
  dict.reference_width = reference.width();
  dict.reference_height = reference.height();
  dict.seed = seed;
  dict.normalization = options.normalization;
  dict.block = options.block;
  dict.pca = fit_tiles(tiles, options, seed);
  if (options.alternate && *options.alternate != options.normalization) {
    const TileMatrix alt(reference, tiling, *options.alternate);
    dict.alternate = AlternateIndex{*options.alternate, fit_tiles(alt, options, seed)};
  }
  dict.boxes.reserve(static_cast<std::size_t>(tiles.rows()));
  for (Eigen::Index i = 0; i < tiles.rows(); ++i) dict.boxes.push_back(tiles.box(i));

  if (options.precompute_patches) {
    dict.patch_models.reserve(dict.boxes.size());
    for (Eigen::Index i = 0; i < tiles.rows(); ++i) {
      dict.patch_models.push_back(build_patch_dictionary(dict, reference, i, options.block));
    }
  }
  return dict;
}

Eigen::Index locate_global(const TargetDictionary& dict, const RasterImage& template_image) {
  if (dict.boxes.empty() || dict.pca.observations() == 0) {
    throw Error(ErrorCode::EmptyDictionary, "dictionary holds no targets");
  }
  return nearest_target(dict.pca, dict.normalization, dict.tiling, template_image);
}

Eigen::Index locate_global_alternate(const TargetDictionary& dict, const RasterImage& template_image) {
  if (!dict.alternate) throw Error(ErrorCode::InvalidArgument, "dictionary has no alternate index");
  if (dict.boxes.empty() || dict.alternate->pca.observations() == 0) {
    throw Error(ErrorCode::EmptyDictionary, "dictionary holds no targets");
  }
  return nearest_target(dict.alternate->pca, dict.alternate->normalization, dict.tiling, template_image);
}

namespace {

PatchDictionary patch_dictionary(const TargetDictionary& dict, const RasterImage& reference, Eigen::Index target,
                                 const BlockOptions& options, TileNormalization normalization) {
  if (target < 0 || target >= static_cast<Eigen::Index>(dict.boxes.size())) {
    throw Error(ErrorCode::InvalidArgument, "target index out of range");
  }
  if (!(options.enlargement >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "enlargement must be at least 1");
  }
  const int tw = dict.tiling.tile_width;
  const int th = dict.tiling.tile_height;
  const int rw = static_cast<int>(std::lround(options.enlargement * tw));
  const int rh = static_cast<int>(std::lround(options.enlargement * th));
  if (rw > reference.width() || rh > reference.height()) {
    throw Error(ErrorCode::OutOfBounds, "enlarged region " + std::to_string(rw) + "x" +
                                            std::to_string(rh) + " does not fit in the reference");
  }
  const CropBox& box = dict.boxes[static_cast<std::size_t>(target)];
  const int left = std::clamp(static_cast<int>(std::lround(box.center_x - rw / 2.0)), 0,
                              reference.width() - rw);
  const int top = std::clamp(static_cast<int>(std::lround(box.center_y - rh / 2.0)), 0,
                             reference.height() - rh);

  PatchDictionary pd;
  pd.region = CropBox::from_top_left(left, top, rw, rh);
  pd.tiling.tile_width = std::max(1, static_cast<int>(std::lround(options.patch_fraction * tw)));
  pd.tiling.tile_height = std::max(1, static_cast<int>(std::lround(options.patch_fraction * th)));
  pd.tiling.stride = std::min({options.patch_stride, pd.tiling.tile_width, pd.tiling.tile_height});

  const RasterImage region = crop(reference, pd.region);
  const TileMatrix patches(region, pd.tiling, normalization);
  const int l = static_cast<int>(std::min<Eigen::Index>(options.components, patches.rows()));
  RandomizedOptions ro;
  ro = clamp_oversample(ro, patches, l);
  ro.seed = patch_seed(dict.seed, target);
  pd.pca = fit_randomized(patches, l, ro);
  pd.patch_centers.reserve(static_cast<std::size_t>(patches.rows()));
  for (Eigen::Index j = 0; j < patches.rows(); ++j) {
    const CropBox b = patches.box(j);
    pd.patch_centers.push_back({left + b.center_x, top + b.center_y});
  }
  return pd;
}

}  // namespace

PatchDictionary build_patch_dictionary(const TargetDictionary& dict, const RasterImage& reference,
                                       Eigen::Index target, const BlockOptions& options) {
  return patch_dictionary(dict, reference, target, options, dict.normalization);
}

CoarseLocation locate_block(const TargetDictionary& dict, const RasterImage& reference,
                            const RasterImage& template_image, Eigen::Index coarse_target,
                            const BlockOptions& options, std::optional<TileNormalization> normalization) {
  if (dict.boxes.empty()) throw Error(ErrorCode::EmptyDictionary, "dictionary holds no targets");
  if (reference.width() != dict.reference_width || reference.height() != dict.reference_height) {
    throw Error(ErrorCode::DimensionMismatch, "reference does not match the dictionary");
  }
  const TileNormalization norm = normalization.value_or(dict.normalization);
  const bool cached = !dict.patch_models.empty() && same_block(options, dict.block) && norm == dict.normalization;
  const PatchDictionary built =
      cached ? PatchDictionary{} : patch_dictionary(dict, reference, coarse_target, options, norm);
  const PatchDictionary& pd =
      cached ? dict.patch_models[static_cast<std::size_t>(coarse_target)] : built;

  const RasterImage t = to_tile_size(template_image, dict.tiling);
  const TileMatrix template_patches(t, pd.tiling, norm);
  const RowMatrix scores = project_tiles(pd.pca, template_patches);
  const double cx = t.width() / 2.0;
  const double cy = t.height() / 2.0;

  CoarseLocation loc;
  loc.chosen_target = coarse_target;
  double sx = 0.0;
  double sy = 0.0;
  std::vector<double> q(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index c = 0; c < scores.cols(); ++c) q[static_cast<std::size_t>(c)] = scores(i, c);
    const Eigen::Index j = nearest_neighbor(pd.pca, q, 1).front().index;
    const CropBox own = template_patches.box(i);
    const Point2 matched = pd.patch_centers[static_cast<std::size_t>(j)];
    sx += matched.x - (own.center_x - cx);
    sy += matched.y - (own.center_y - cy);
    loc.patch_votes.emplace_back(i, j);
  }
  const double n = static_cast<double>(scores.rows());
  const Point2 c = clamp_center({sx / n, sy / n}, t.width(), t.height(), reference.width(),
                                reference.height());
  loc.center_x = c.x;
  loc.center_y = c.y;
  return loc;
}

AffineTransform sweep_transform(Point2 center, double rotation, int template_width, int template_height) {
  const AffineTransform r = AffineTransform::rotation(rotation);
  const Point2 c = r.apply({template_width / 2.0, template_height / 2.0});
  return {r.a11, r.a12, r.a21, r.a22, center.x - c.x, center.y - c.y};
}

SweepResult rotation_sweep(const RasterImage& reference, const RasterImage& template_image, Point2 center,
                           const RotationSweep& sweep) {
  if (!(sweep.max_degrees >= 0.0) || (sweep.max_degrees > 0.0 && !(sweep.step_degrees > 0.0))) {
    throw Error(ErrorCode::InvalidArgument, "rotation sweep needs max >= 0 and a positive step");
  }
  const int steps = sweep.max_degrees > 0.0 ? static_cast<int>(std::floor(sweep.max_degrees / sweep.step_degrees + 1e-9)) : 0;
  SweepResult best{0.0, -1.0};
  bool any = false;
  // Zero first so it wins ties.
  for (int k = 0; k <= 2 * steps; ++k) {
    const int i = (k + 1) / 2 * (k % 2 == 1 ? 1 : -1);
    const double a = i * sweep.step_degrees * std::numbers::pi / 180.0;
    try {
      const double mi = mi_objective(template_image, reference,
                                     sweep_transform(center, a, template_image.width(), template_image.height()),
                                     sweep.bins)
                            .mi;
      if (!any || mi > best.mi) best = {a, mi};
      any = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoValidPixels) throw;
    }
  }
  if (!any) throw Error(ErrorCode::NoValidPixels, "no rotation of the template overlaps the reference");
  return best;
}

namespace {

CoarseLocation refine(const TargetDictionary& dict, const RasterImage& reference, const RasterImage& template_image,
                      Eigen::Index target, const CoarseOptions& options, TileNormalization normalization) {
  if (options.use_block) {
    return locate_block(dict, reference, template_image, target, options.block, normalization);
  }
  const CropBox& box = dict.boxes[static_cast<std::size_t>(target)];
  const Point2 c = clamp_center({box.center_x, box.center_y}, dict.tiling.tile_width,
                                dict.tiling.tile_height, dict.reference_width, dict.reference_height);
  CoarseLocation loc;
  loc.center_x = c.x;
  loc.center_y = c.y;
  loc.chosen_target = target;
  return loc;
}

void score(CoarseLocation& loc, const RasterImage& reference, const RasterImage& template_image,
           const RotationSweep& sweep) {
  try {
    const SweepResult r = rotation_sweep(reference, template_image, {loc.center_x, loc.center_y}, sweep);
    loc.rotation = r.rotation;
    loc.sweep_mi = r.mi;
  } catch (const Error& e) {
    // A constant template has no MI signal; the location stands unscored.
    if (e.code() != ErrorCode::DegenerateIntensity) throw;
  }
}

}  // namespace

CoarseLocation coarse_localize(const TargetDictionary& dict, const RasterImage& reference,
                               const RasterImage& template_image, const CoarseOptions& options) {
  if (reference.width() != dict.reference_width || reference.height() != dict.reference_height) {
    throw Error(ErrorCode::DimensionMismatch, "reference does not match the dictionary");
  }
  const Eigen::Index target = locate_global(dict, template_image);
  CoarseLocation loc = refine(dict, reference, template_image, target, options, dict.normalization);
  score(loc, reference, template_image, options.sweep);
  if (!dict.alternate) return loc;
  const Eigen::Index other = locate_global_alternate(dict, template_image);
  if (other == target) return loc;
  CoarseLocation alt = refine(dict, reference, template_image, other, options, dict.alternate->normalization);
  alt.alternate = true;
  score(alt, reference, template_image, options.sweep);
  return alt.sweep_mi > loc.sweep_mi ? alt : loc;
}

void write_dictionary(std::ostream& out, const TargetDictionary& dict) {
  using detail::write_le;
  detail::write_tag(out, "TDIC");
  write_le(out, kDictionaryVersion);
  write_tiling(out, dict.tiling);
  write_le(out, static_cast<std::uint32_t>(dict.reference_width));
  write_le(out, static_cast<std::uint32_t>(dict.reference_height));
  write_le(out, dict.seed);
  write_le(out, static_cast<std::uint8_t>(dict.normalization));
  write_le(out, static_cast<std::uint32_t>(dict.block.patch_stride));
  write_le(out, static_cast<std::uint32_t>(dict.block.components));
  write_le(out, dict.block.enlargement);
  write_le(out, dict.block.patch_fraction);
  write_le(out, static_cast<std::uint64_t>(dict.boxes.size()));
  for (const CropBox& b : dict.boxes) write_box(out, b);
  write_model(out, dict.pca);
  write_le(out, static_cast<std::uint8_t>(dict.alternate ? 1 : 0));
  if (dict.alternate) {
    write_le(out, static_cast<std::uint8_t>(dict.alternate->normalization));
    write_model(out, dict.alternate->pca);
  }
  write_le(out, static_cast<std::uint8_t>(dict.patch_models.empty() ? 0 : 1));
  if (!dict.patch_models.empty()) {
    write_le(out, static_cast<std::uint64_t>(dict.patch_models.size()));
    for (const PatchDictionary& pd : dict.patch_models) {
      write_box(out, pd.region);
      write_tiling(out, pd.tiling);
      write_model(out, pd.pca);
      write_le(out, static_cast<std::uint64_t>(pd.patch_centers.size()));
      for (const Point2& p : pd.patch_centers) {
        write_le(out, p.x);
        write_le(out, p.y);
      }
    }
  }
}

TargetDictionary read_dictionary(std::istream& in) {
  using detail::read_le;
  detail::expect_tag(in, "TDIC");
  const auto version = read_le<std::uint8_t>(in);
  if (version != kDictionaryVersion) {
    throw Error(ErrorCode::Format, "unsupported dictionary version " + std::to_string(version));
  }
  TargetDictionary dict;
  dict.tiling = read_tiling(in);
  dict.reference_width = static_cast<int>(read_le<std::uint32_t>(in));
  dict.reference_height = static_cast<int>(read_le<std::uint32_t>(in));
  dict.seed = read_le<std::uint64_t>(in);
  dict.normalization = read_normalization(in);
  dict.block.patch_stride = static_cast<int>(read_le<std::uint32_t>(in));
  dict.block.components = static_cast<int>(read_le<std::uint32_t>(in));
  dict.block.enlargement = read_le<double>(in);
  dict.block.patch_fraction = read_le<double>(in);
  const auto count = read_le<std::uint64_t>(in);
  if (count > (std::uint64_t{1} << 32)) throw Error(ErrorCode::Format, "implausible box count");
  dict.boxes.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) dict.boxes.push_back(read_box(in));
  dict.pca = read_model(in);
  if (static_cast<std::uint64_t>(dict.pca.observations()) != count) {
    throw Error(ErrorCode::Format, "box count does not match the PCA model");
  }
  if (read_le<std::uint8_t>(in) != 0) {
    AlternateIndex alt;
    alt.normalization = read_normalization(in);
    alt.pca = read_model(in);
    if (alt.pca.observations() != dict.pca.observations() || alt.pca.dimension() != dict.pca.dimension()) {
      throw Error(ErrorCode::Format, "alternate index does not match the primary one");
    }
    dict.alternate = std::move(alt);
  }
  if (read_le<std::uint8_t>(in) != 0) {
    const auto models = read_le<std::uint64_t>(in);
    if (models != count) throw Error(ErrorCode::Format, "patch model count mismatch");
    dict.patch_models.resize(static_cast<std::size_t>(models));
    for (PatchDictionary& pd : dict.patch_models) {
      pd.region = read_box(in);
      pd.tiling = read_tiling(in);
      pd.pca = read_model(in);
      const auto centers = read_le<std::uint64_t>(in);
      if (centers != static_cast<std::uint64_t>(pd.pca.observations())) {
        throw Error(ErrorCode::Format, "patch centre count mismatch");
      }
      pd.patch_centers.resize(static_cast<std::size_t>(centers));
      for (Point2& p : pd.patch_centers) {
        p.x = read_le<double>(in);
        p.y = read_le<double>(in);
      }
    }
  }
  return dict;
}

}  // namespace tplreg
