#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tplreg/affine.hpp"
#include "tplreg/coarse_locator.hpp"
#include "tplreg/image.hpp"
#include "tplreg/matcher.hpp"

namespace tplreg {

enum class DegradationFamily { Affine, Noise, Blur, Brightness, Artifacts };

inline constexpr DegradationFamily kAllFamilies[] = {
    DegradationFamily::Affine, DegradationFamily::Noise, DegradationFamily::Blur,
    DegradationFamily::Brightness, DegradationFamily::Artifacts};

std::string_view to_string(DegradationFamily family);
DegradationFamily parse_family(std::string_view name);

/// Level 0 means no degradation.
struct DegradationSpec {
  DegradationFamily family = DegradationFamily::Noise;
  int level = 0;
  std::uint64_t seed = 0;

  bool operator==(const DegradationSpec&) const = default;
};

struct AffineLevel {
  double rotation_degrees;
  double shear;
};

/// Rotation/shear magnitude for levels 1..5; level 0 is the identity.
AffineLevel affine_level(int level);
double noise_fraction(int level);    ///< sigma relative to the image's mean intensity
double blur_sigma(int level);
double brightness_shift(int level);  ///< mid-tone shift as a fraction of the gray range
int artifact_count(int level);
double artifact_radius(int level);

/// Linear part R(+-theta) S(+-s) of an affine degradation; signs come from the seed.
AffineTransform affine_degradation(int level, std::uint64_t seed);

/// Applies exactly one degradation family; the result is clamped to [0,1].
/// The affine family warps about the image centre and zero-fills.
RasterImage generate_degradation(const RasterImage& image, const DegradationSpec& spec);

struct MatchingPair {
  RasterImage template_image;
  AffineTransform ground_truth;  ///< template -> full image
  Point2 center;                 ///< ground-truth template centre in the full image
};

/// Random interior square of side `template_size`, mapped to a parallelogram
/// by the affine degradation of `transform_level`, resampled back to a square.
/// Level 0 is an integer translation crop.
MatchingPair make_pair(const RasterImage& full, int template_size, int transform_level,
                       std::uint64_t seed);

/// RMS of the Euclidean distances between corresponding points.
double target_registration_error(const std::vector<Point2>& mapped, const std::vector<Point2>& observed);

/// RMS over the four template corners of the two transforms' images.
double corner_rms(const AffineTransform& estimate, const AffineTransform& truth, int width, int height);

enum class Method { RetinaMatch, GlobalMi, CoarseOnly, PcaOnly };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// Registration from a grid of translations over the whole reference (stride
/// half the template side), keeping the highest final MI.
RegistrationResult global_mi_register(const RasterImage& reference, const RasterImage& template_image,
                                      const RegistrationSettings& settings, int stride = 0);

struct TrialRecord {
  int pair_id = 0;
  Method method = Method::RetinaMatch;
  DegradationSpec degradation;
  int reference_index = 0;
  double rms_error = 0.0;  ///< centre distance for the coarse methods
  bool success = false;
  double runtime = 0.0;
  double coarse_error = 0.0;
  double coarse_seconds = 0.0;
  double refine_seconds = 0.0;
  std::string status;
};

struct Protocol {
  std::vector<DegradationSpec> cells;  ///< family/level combinations; seeds ignored
  int trials_per_cell = 30;
  int template_size = 200;
  std::vector<Method> methods{Method::CoarseOnly, Method::RetinaMatch};
  TilingSpec tiling{200, 200, 10};
  DictionaryOptions dictionary{};
  MatchSettings match{};
  double coarse_threshold = 40.0;
  double match_threshold = 8.0;
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0: hardware concurrency
};

struct SummaryRow {
  Method method;
  DegradationFamily family;
  int level;
  int trials;
  double success_rate;
  double mean_error;
  double sd_error;
  double mean_runtime;
  double sd_runtime;
};

struct ExperimentReport {
  std::vector<TrialRecord> records;  ///< sorted by pair id, then method
  std::vector<SummaryRow> summary;   ///< per method, family and level
};

/// Builds one dictionary per dataset image, simulates the pairs and runs every
/// configured method on each. Trial failures are recorded, never thrown.
ExperimentReport run_experiment(const std::vector<RasterImage>& dataset, const Protocol& protocol);

/// Cells for every family at the given levels.
std::vector<DegradationSpec> full_grid(const std::vector<int>& levels);

std::vector<RasterImage> synthetic_dataset(int count, int width, int height, std::uint64_t seed);

void write_trials_csv(std::ostream& out, const ExperimentReport& report);
/// Coarse methods on undegraded pairs: error, success and runtime per method.
void write_coarse_clean_csv(std::ostream& out, const ExperimentReport& report);
/// Coarse success rate per family (rows) and level (columns).
void write_coarse_degraded_csv(std::ostream& out, const ExperimentReport& report);
/// Matching success per method, family and level.
void write_match_success_csv(std::ostream& out, const ExperimentReport& report);

}  // namespace tplreg
