#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tplreg/affine.hpp"
#include "tplreg/coarse_locator.hpp"
#include "tplreg/error.hpp"
#include "tplreg/image.hpp"
#include "tplreg/registration.hpp"

namespace tplreg {

enum class MatchStatus { Matched, LowConfidence, Failed };

std::string_view to_string(MatchStatus status);

struct MatchSettings {
  CoarseOptions coarse{};
  /// Side of the refinement region relative to the template side.
  double region_scale = 1.5;
  RegistrationSettings registration{};
  /// Final MI below this marks the match low-confidence.
  double mi_floor = 0.15;
};

struct MatchResult {
  CoarseLocation coarse;
  CropBox region_box;
  AffineTransform local_transform;   ///< template -> region
  AffineTransform global_transform;  ///< template -> reference
  double final_mi = 0.0;
  MatchStatus status = MatchStatus::Failed;
  std::optional<ErrorCode> reason;  ///< set when status is Failed
  std::string message;
  int iterations = 0;
  double coarse_seconds = 0.0;
  double refine_seconds = 0.0;
};

/// Region of side region_scale x template around `center`, shifted to lie
/// inside the reference and clipped to it when larger.
CropBox region_around(Point2 center, int template_width, int template_height, double region_scale,
                      int reference_width, int reference_height);

/// Coarse localization, crop of the refinement region, MI registration started
/// at the coarse centre and swept angle, composition into reference coordinates. Library
/// errors end up in `status` and `reason`; nothing is thrown for them.
MatchResult match(const TargetDictionary& dict, const RasterImage& reference,
                  const RasterImage& template_image, const MatchSettings& settings = {});

/// Maps template coordinates into the reference. Throws NotMatched unless
/// status is Matched.
std::vector<Point2> apply_match(const MatchResult& result, const std::vector<Point2>& points);

/// One line of JSON, no trailing newline.
std::string to_record(const MatchResult& result, const std::string& template_id);

}  // namespace tplreg
