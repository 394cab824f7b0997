#include "tplreg/matcher.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"

namespace tplreg {

std::string_view to_string(MatchStatus status) {
  switch (status) {
    case MatchStatus::Matched: return "matched";
    case MatchStatus::LowConfidence: return "low-confidence";
    case MatchStatus::Failed: return "failed";
  }
  return "unknown";
}

CropBox region_around(Point2 center, int template_width, int template_height, double region_scale,
                      int reference_width, int reference_height) {
  if (!(region_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "region scale must be positive");
  const int w = std::clamp(static_cast<int>(std::lround(region_scale * template_width)), 1, reference_width);
  const int h = std::clamp(static_cast<int>(std::lround(region_scale * template_height)), 1, reference_height);
  int left = static_cast<int>(std::floor(center.x - w / 2.0 + 0.5));
  int top = static_cast<int>(std::floor(center.y - h / 2.0 + 0.5));
  left = std::clamp(left, 0, reference_width - w);
  top = std::clamp(top, 0, reference_height - h);
  return CropBox::from_top_left(left, top, w, h);
}

MatchResult match(const TargetDictionary& dict, const RasterImage& reference,
                  const RasterImage& template_image, const MatchSettings& settings) {
  using clock = std::chrono::steady_clock;
  MatchResult result;
  const auto t0 = clock::now();
  auto t1 = t0;
  try {
    if (dict.reference_width != reference.width() || dict.reference_height != reference.height()) {
      throw Error(ErrorCode::DimensionMismatch, "dictionary was built for a different reference size");
    }
    if (template_image.empty()) throw Error(ErrorCode::InvalidArgument, "empty template");
    {
      // A constant template carries no MI signal; reject before searching.
      const auto [lo, hi] =
          std::minmax_element(template_image.pixels().begin(), template_image.pixels().end());
      if (!(*hi - *lo > 1e-12)) throw Error(ErrorCode::DegenerateIntensity, "template is constant");
    }
    result.coarse = coarse_localize(dict, reference, template_image, settings.coarse);
    t1 = clock::now();
    result.coarse_seconds = std::chrono::duration<double>(t1 - t0).count();

    const int tw = template_image.width();
    const int th = template_image.height();
    result.region_box = region_around({result.coarse.center_x, result.coarse.center_y}, tw, th,
                                      settings.region_scale, reference.width(), reference.height());
    const RasterImage region = crop(reference, result.region_box);
    // Start from the coarse centre at the best swept angle, in region coordinates.
    const AffineTransform init =
        compose(AffineTransform::translation(-result.region_box.left(), -result.region_box.top()),
                sweep_transform({result.coarse.center_x, result.coarse.center_y}, result.coarse.rotation, tw, th));
    const RegistrationResult reg = register_affine(template_image, region, init, settings.registration);

    result.local_transform = reg.transform;
    result.global_transform =
        compose(AffineTransform::translation(result.region_box.left(), result.region_box.top()),
                reg.transform);
    result.final_mi = reg.final_mi;
    result.iterations = reg.iterations;
    result.status = reg.final_mi < settings.mi_floor ? MatchStatus::LowConfidence : MatchStatus::Matched;
  } catch (const Error& e) {
    result.status = MatchStatus::Failed;
    result.reason = e.code();
    result.message = e.what();
  }
  const auto t2 = clock::now();
  if (result.coarse_seconds == 0.0) t1 = t2;
  result.refine_seconds = std::chrono::duration<double>(t2 - t1).count();
  return result;
}

std::vector<Point2> apply_match(const MatchResult& result, const std::vector<Point2>& points) {
  if (result.status != MatchStatus::Matched) {
    throw Error(ErrorCode::NotMatched, "match status is " + std::string(to_string(result.status)));
  }
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.push_back(result.global_transform.apply(p));
  return out;
}

std::string to_record(const MatchResult& result, const std::string& template_id) {
  nlohmann::ordered_json j;
  j["template"] = template_id;
  j["status"] = to_string(result.status);
  if (result.reason) {
    j["reason"] = to_string(*result.reason);
    j["message"] = result.message;
  }
  if (result.status != MatchStatus::Failed) {
    const auto p = result.global_transform.params();
    j["transform"] = {p[0], p[1], p[2], p[3], p[4], p[5]};
    j["mi"] = result.final_mi;
    j["coarse_center"] = {result.coarse.center_x, result.coarse.center_y};
    j["region"] = {result.region_box.left(), result.region_box.top(), result.region_box.width,
                   result.region_box.height};
    j["iterations"] = result.iterations;
  }
  j["coarse_seconds"] = result.coarse_seconds;
  j["refine_seconds"] = result.refine_seconds;
  return j.dump();
}

}  // namespace tplreg
