#include "tplreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>
#include <tuple>

#include "tplreg/error.hpp"
#include "tplreg/synthetic.hpp"

namespace tplreg {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

void check_level(int level) {
  if (level < 0 || level > 5) throw Error(ErrorCode::InvalidArgument, "degradation level must be in 0..5");
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Grayscale min (erode) or max (dilate) over a disk of radius r, written only
// inside the circle of radius `area` around (cx, cy).
void morph_in_disk(const RasterImage& src, std::vector<double>& dst, double cx, double cy, double area,
                   int r, bool take_min) {
  const int w = src.width();
  const int h = src.height();
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - area)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + area)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - area)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + area)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > area * area) continue;
      double v = src.at(x, y);
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > r * r) continue;
          const int sx = std::clamp(x + dx, 0, w - 1);
          const int sy = std::clamp(y + dy, 0, h - 1);
          v = take_min ? std::min(v, src.at(sx, sy)) : std::max(v, src.at(sx, sy));
        }
      }
      dst[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
}

RasterImage add_artifacts(const RasterImage& image, int level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int w = image.width();
  const int h = image.height();
  const int count = artifact_count(level);
  const double radius = artifact_radius(level);
  std::vector<double> out(image.pixels().begin(), image.pixels().end());
  std::uniform_real_distribution<double> ux(std::min(radius, w / 2.0), std::max(w - radius, w / 2.0));
  std::uniform_real_distribution<double> uy(std::min(radius, h / 2.0), std::max(h - radius, h / 2.0));
  std::uniform_int_distribution<int> kind(0, 3);
  std::vector<Point2> placed;
  for (int n = 0; n < count; ++n) {
    // Spread the lesions out; give up on spacing if the image is crowded.
    Point2 c{ux(rng), uy(rng)};
    for (int attempt = 0; attempt < 100; ++attempt) {
      const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Point2& p) {
        return std::hypot(p.x - c.x, p.y - c.y) > 3.0 * radius;
      });
      if (clear) break;
      c = {ux(rng), uy(rng)};
    }
    placed.push_back(c);
    const int k = kind(rng);
    if (k <= 1) {
      // Exudate (bright) or haemorrhage (dark) blob.
      const double amp = k == 0 ? 0.35 : -0.35;
      const double sigma = radius / 2.0;
      const int reach = static_cast<int>(std::ceil(2.0 * radius));
      for (int y = std::max(0, static_cast<int>(c.y) - reach); y <= std::min(h - 1, static_cast<int>(c.y) + reach); ++y) {
        for (int x = std::max(0, static_cast<int>(c.x) - reach); x <= std::min(w - 1, static_cast<int>(c.x) + reach); ++x) {
          const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
          out[static_cast<std::size_t>(y) * w + x] += amp * std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
    } else {
      // Vessels are dark, so a min filter widens them and a max filter thins them.
      const RasterImage current(w, h, out);
      morph_in_disk(current, out, c.x, c.y, 1.5 * radius, 2, k == 2);
    }
  }
  return RasterImage(w, h, std::move(out));
}

}  // namespace

std::string_view to_string(DegradationFamily family) {
  switch (family) {
    case DegradationFamily::Affine: return "affine";
    case DegradationFamily::Noise: return "noise";
    case DegradationFamily::Blur: return "blur";
    case DegradationFamily::Brightness: return "brightness";
    case DegradationFamily::Artifacts: return "artifacts";
  }
  return "unknown";
}

DegradationFamily parse_family(std::string_view name) {
  for (DegradationFamily f : kAllFamilies) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown degradation family '" + std::string(name) + "'");
}

AffineLevel affine_level(int level) {
  check_level(level);
  static constexpr AffineLevel table[] = {{0, 0}, {5, 0.1}, {10, 0.2}, {15, 0.2}, {15, 0.3}, {20, 0.3}};
  return table[level];
}

double noise_fraction(int level) {
  check_level(level);
  return level / 10.0;
}

double blur_sigma(int level) {
  check_level(level);
  return 0.5 * level;
}

double brightness_shift(int level) {
  check_level(level);
  return 0.04 * level;
}

int artifact_count(int level) {
  check_level(level);
  return 2 * level;
}

double artifact_radius(int level) {
  check_level(level);
  return level == 0 ? 0.0 : 3.0 + (level - 1) * 7.0 / 4.0;
}

AffineTransform affine_degradation(int level, std::uint64_t seed) {
  const AffineLevel a = affine_level(level);
  std::mt19937_64 rng(mix(seed, 0xAFF1));
  const double rs = (rng() & 1) ? 1.0 : -1.0;
  const double ss = (rng() & 1) ? 1.0 : -1.0;
  return compose(AffineTransform::rotation(rs * a.rotation_degrees * std::numbers::pi / 180.0),
                 AffineTransform::shear(ss * a.shear));
}

RasterImage generate_degradation(const RasterImage& image, const DegradationSpec& spec) {
  check_level(spec.level);
  if (spec.level == 0) return image;
  std::mt19937_64 rng(mix(spec.seed, static_cast<std::uint64_t>(spec.family)));
  switch (spec.family) {
    case DegradationFamily::Affine: {
      const AffineTransform a = affine_degradation(spec.level, spec.seed);
      const Point2 c{image.width() / 2.0, image.height() / 2.0};
      return warp_affine(image, about_point(a, c), image.width(), image.height()).image;
    }
    case DegradationFamily::Noise: {
      double mean = 0.0;
      for (double v : image.pixels()) mean += v;
      mean /= static_cast<double>(image.size());
      std::normal_distribution<double> noise(0.0, noise_fraction(spec.level) * mean);
      std::vector<double> out(image.pixels().begin(), image.pixels().end());
      for (double& v : out) v += noise(rng);
      return RasterImage(image.width(), image.height(), std::move(out));
    }
    case DegradationFamily::Blur:
      return gaussian_blur(image, blur_sigma(spec.level));
    case DegradationFamily::Brightness: {
      // Power curve through (0,0) and (1,1) that moves mid-gray by the shift.
      const double sign = (rng() & 1) ? 1.0 : -1.0;
      const double gamma = std::log(0.5 + sign * brightness_shift(spec.level)) / std::log(0.5);
      std::vector<double> out(image.pixels().begin(), image.pixels().end());
      for (double& v : out) v = std::pow(v, gamma);
      return RasterImage(image.width(), image.height(), std::move(out));
    }
    case DegradationFamily::Artifacts:
      return add_artifacts(image, spec.level, rng());
  }
  return image;
}

MatchingPair make_pair(const RasterImage& full, int template_size, int transform_level,
                       std::uint64_t seed) {
  check_level(transform_level);
  if (template_size < 2) throw Error(ErrorCode::InvalidArgument, "template side must be at least 2");
  const AffineTransform a =
      transform_level == 0 ? AffineTransform::identity() : affine_degradation(transform_level, seed);
  const double half = template_size / 2.0;
  double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
  for (double x : {0.0, template_size - 1.0}) {
    for (double y : {0.0, template_size - 1.0}) {
      const Point2 p = a.apply({x - half, y - half});
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  }
  // Centre = integer left/top + half, so level 0 is an exact pixel crop.
  const int min_left = static_cast<int>(std::ceil(-lo_x - half));
  const int max_left = static_cast<int>(std::floor(full.width() - 1 - hi_x - half));
  const int min_top = static_cast<int>(std::ceil(-lo_y - half));
  const int max_top = static_cast<int>(std::floor(full.height() - 1 - hi_y - half));
  if (max_left < min_left || max_top < min_top) {
    throw Error(ErrorCode::ReferenceTooSmall,
                "image " + std::to_string(full.width()) + "x" + std::to_string(full.height()) +
                    " cannot hold a warped " + std::to_string(template_size) + " px template");
  }
  std::mt19937_64 rng(mix(seed, 0x9A1));
  const int left = std::uniform_int_distribution<int>(min_left, max_left)(rng);
  const int top = std::uniform_int_distribution<int>(min_top, max_top)(rng);
  const Point2 c{left + half, top + half};

  MatchingPair pair;
  pair.ground_truth = compose(AffineTransform::translation(c.x, c.y),
                              compose(a, AffineTransform::translation(-half, -half)));
  pair.center = c;
  pair.template_image = warp_affine(full, pair.ground_truth, template_size, template_size).image;
  return pair;
}

double target_registration_error(const std::vector<Point2>& mapped, const std::vector<Point2>& observed) {
  if (mapped.size() != observed.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(mapped.size()) + " mapped points vs " +
                                               std::to_string(observed.size()) + " observed");
  }
  if (mapped.empty()) throw Error(ErrorCode::LengthMismatch, "no landmark points");
  double sum = 0.0;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    const double dx = mapped[i].x - observed[i].x;
    const double dy = mapped[i].y - observed[i].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(mapped.size()));
}

double corner_rms(const AffineTransform& estimate, const AffineTransform& truth, int width, int height) {
  std::vector<Point2> a, b;
  for (double y : {0.0, height - 1.0}) {
    for (double x : {0.0, width - 1.0}) {
      a.push_back(estimate.apply({x, y}));
      b.push_back(truth.apply({x, y}));
    }
  }
  return target_registration_error(a, b);
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::RetinaMatch: return "retinamatch";
    case Method::GlobalMi: return "global-mi";
    case Method::CoarseOnly: return "coarse-only";
    case Method::PcaOnly: return "pca-only";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::RetinaMatch, Method::GlobalMi, Method::CoarseOnly, Method::PcaOnly}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

RegistrationResult global_mi_register(const RasterImage& reference, const RasterImage& template_image,
                                      const RegistrationSettings& settings, int stride) {
  const int tw = template_image.width();
  const int th = template_image.height();
  if (stride <= 0) stride = std::max(1, std::min(tw, th) / 2);
  std::optional<RegistrationResult> best;
  for (int top = 0; top + th <= reference.height(); top += stride) {
    for (int left = 0; left + tw <= reference.width(); left += stride) {
      try {
        RegistrationResult r =
            register_affine(template_image, reference, AffineTransform::translation(left, top), settings);
        if (!best || r.final_mi > best->final_mi) best = std::move(r);
      } catch (const Error&) {
        // A start that diverges just does not compete.
      }
    }
  }
  if (!best) throw Error(ErrorCode::NotMatched, "no grid start produced a registration");
  return *best;
}

std::vector<DegradationSpec> full_grid(const std::vector<int>& levels) {
  std::vector<DegradationSpec> cells;
  for (DegradationFamily f : kAllFamilies) {
    for (int level : levels) cells.push_back({f, level, 0});
  }
  return cells;
}

std::vector<RasterImage> synthetic_dataset(int count, int width, int height, std::uint64_t seed) {
  std::vector<RasterImage> images;
  images.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) images.push_back(synthetic_fundus(width, height, mix(seed, i)));
  return images;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, count));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) fn(i);
  };
  if (n <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct PairTask {
  int pair_id;
  int reference_index;
  DegradationSpec spec;
  std::uint64_t pair_seed;
};

std::vector<TrialRecord> run_pair(const PairTask& task, const RasterImage& reference,
                                  const TargetDictionary& dict, const Protocol& protocol) {
  MatchingPair pair;
  const bool affine = task.spec.family == DegradationFamily::Affine;
  pair = make_pair(reference, protocol.template_size, affine ? task.spec.level : 0, task.pair_seed);
  if (!affine) pair.template_image = generate_degradation(pair.template_image, task.spec);
  const int t = protocol.template_size;

  std::vector<TrialRecord> out;
  for (Method method : protocol.methods) {
    TrialRecord rec;
    rec.pair_id = task.pair_id;
    rec.method = method;
    rec.degradation = task.spec;
    rec.reference_index = task.reference_index;
    const auto start = std::chrono::steady_clock::now();
    try {
      switch (method) {
        case Method::CoarseOnly:
        case Method::PcaOnly: {
          CoarseOptions opts = protocol.match.coarse;
          opts.use_block = method == Method::CoarseOnly;
          const CoarseLocation loc = coarse_localize(dict, reference, pair.template_image, opts);
          rec.runtime = seconds_since(start);
          rec.coarse_seconds = rec.runtime;
          rec.coarse_error = std::hypot(loc.center_x - pair.center.x, loc.center_y - pair.center.y);
          rec.rms_error = rec.coarse_error;
          rec.success = rec.rms_error < protocol.coarse_threshold;
          rec.status = "located";
          break;
        }
        case Method::RetinaMatch: {
          const MatchResult m = match(dict, reference, pair.template_image, protocol.match);
          rec.runtime = seconds_since(start);
          rec.coarse_seconds = m.coarse_seconds;
          rec.refine_seconds = m.refine_seconds;
          rec.status = std::string(to_string(m.status));
          if (m.status == MatchStatus::Failed) {
            rec.status += ":" + std::string(to_string(*m.reason));
            rec.rms_error = std::numeric_limits<double>::infinity();
            rec.coarse_error = std::numeric_limits<double>::quiet_NaN();
          } else {
            rec.coarse_error =
                std::hypot(m.coarse.center_x - pair.center.x, m.coarse.center_y - pair.center.y);
            rec.rms_error = corner_rms(m.global_transform, pair.ground_truth, t, t);
          }
          rec.success = rec.rms_error < protocol.match_threshold;
          break;
        }
        case Method::GlobalMi: {
          const RegistrationResult r =
              global_mi_register(reference, pair.template_image, protocol.match.registration);
          rec.runtime = seconds_since(start);
          rec.refine_seconds = rec.runtime;
          rec.coarse_error = std::numeric_limits<double>::quiet_NaN();
          rec.rms_error = corner_rms(r.transform, pair.ground_truth, t, t);
          rec.success = rec.rms_error < protocol.match_threshold;
          rec.status = "registered";
          break;
        }
      }
    } catch (const Error& e) {
      rec.runtime = seconds_since(start);
      rec.rms_error = std::numeric_limits<double>::infinity();
      rec.coarse_error = std::numeric_limits<double>::quiet_NaN();
      rec.success = false;
      rec.status = "failed:" + std::string(to_string(e.code()));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

ExperimentReport run_experiment(const std::vector<RasterImage>& dataset, const Protocol& protocol) {
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "experiment needs at least one image");
  if (protocol.trials_per_cell < 1) throw Error(ErrorCode::InvalidArgument, "trials per cell must be positive");

  std::vector<TargetDictionary> dicts(dataset.size());
  parallel_for(dataset.size(), protocol.threads, [&](std::size_t i) {
    dicts[i] = build_dictionary(dataset[i], protocol.tiling, protocol.dictionary, mix(protocol.seed, i));
  });

  // The crop position and degradation seed depend on the trial index and
  // family but not on the level, so levels of one family see the same crops.
  std::vector<PairTask> tasks;
  int id = 0;
  for (const DegradationSpec& cell : protocol.cells) {
    for (int t = 0; t < protocol.trials_per_cell; ++t) {
      const std::uint64_t s = mix(mix(protocol.seed, static_cast<std::uint64_t>(cell.family) + 1), t);
      const int ref = t % static_cast<int>(dataset.size());
      tasks.push_back({id++, ref, {cell.family, cell.level, s}, s});
    }
  }

  std::vector<std::vector<TrialRecord>> per_task(tasks.size());
  parallel_for(tasks.size(), protocol.threads, [&](std::size_t i) {
    const PairTask& task = tasks[i];
    try {
      per_task[i] = run_pair(task, dataset[task.reference_index], dicts[task.reference_index], protocol);
    } catch (const Error& e) {
      // Pair generation itself failed; every method counts as unsuccessful.
      for (Method m : protocol.methods) {
        TrialRecord rec;
        rec.pair_id = task.pair_id;
        rec.method = m;
        rec.degradation = task.spec;
        rec.reference_index = task.reference_index;
        rec.rms_error = std::numeric_limits<double>::infinity();
        rec.coarse_error = std::numeric_limits<double>::quiet_NaN();
        rec.status = "failed:" + std::string(to_string(e.code()));
        per_task[i].push_back(rec);
      }
    }
  });

  ExperimentReport report;
  for (auto& v : per_task) {
    for (auto& r : v) report.records.push_back(std::move(r));
  }
  std::stable_sort(report.records.begin(), report.records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.pair_id, a.method) < std::tie(b.pair_id, b.method);
  });

  std::map<std::tuple<int, int, int>, std::vector<const TrialRecord*>> groups;
  for (const TrialRecord& r : report.records) {
    groups[{static_cast<int>(r.method), static_cast<int>(r.degradation.family), r.degradation.level}].push_back(&r);
  }
  for (const auto& [key, recs] : groups) {
    std::vector<double> errors, runtimes;
    int successes = 0;
    for (const TrialRecord* r : recs) {
      if (std::isfinite(r->rms_error)) errors.push_back(r->rms_error);
      runtimes.push_back(r->runtime);
      successes += r->success ? 1 : 0;
    }
    const auto [me, se] = mean_sd(errors);
    const auto [mr, sr] = mean_sd(runtimes);
    report.summary.push_back({static_cast<Method>(std::get<0>(key)),
                              static_cast<DegradationFamily>(std::get<1>(key)), std::get<2>(key),
                              static_cast<int>(recs.size()),
                              static_cast<double>(successes) / static_cast<double>(recs.size()), me, se,
                              mr, sr});
  }
  return report;
}

void write_trials_csv(std::ostream& out, const ExperimentReport& report) {
  out << "pair_id,method,family,level,seed,reference,rms_error,success,runtime,coarse_error,"
         "coarse_seconds,refine_seconds,status\n";
  for (const TrialRecord& r : report.records) {
    out << r.pair_id << ',' << to_string(r.method) << ',' << to_string(r.degradation.family) << ','
        << r.degradation.level << ',' << r.degradation.seed << ',' << r.reference_index << ','
        << r.rms_error << ',' << (r.success ? 1 : 0) << ',' << r.runtime << ',' << r.coarse_error << ','
        << r.coarse_seconds << ',' << r.refine_seconds << ',' << r.status << '\n';
  }
}

void write_coarse_clean_csv(std::ostream& out, const ExperimentReport& report) {
  out << "method,trials,mean_error,sd_error,success_rate,mean_runtime,sd_runtime\n";
  for (Method m : {Method::PcaOnly, Method::CoarseOnly}) {
    std::vector<double> errors, runtimes;
    int trials = 0, successes = 0;
    for (const TrialRecord& r : report.records) {
      if (r.method != m || r.degradation.level != 0) continue;
      ++trials;
      successes += r.success ? 1 : 0;
      if (std::isfinite(r.rms_error)) errors.push_back(r.rms_error);
      runtimes.push_back(r.runtime);
    }
    if (trials == 0) continue;
    const auto [me, se] = mean_sd(errors);
    const auto [mr, sr] = mean_sd(runtimes);
    out << (m == Method::PcaOnly ? "pca" : "block-pca") << ',' << trials << ',' << me << ',' << se << ','
        << static_cast<double>(successes) / trials << ',' << mr << ',' << sr << '\n';
  }
}

void write_coarse_degraded_csv(std::ostream& out, const ExperimentReport& report) {
  std::map<std::pair<int, int>, double> rate;
  int max_level = 0;
  for (const SummaryRow& s : report.summary) {
    if (s.method != Method::CoarseOnly) continue;
    rate[{static_cast<int>(s.family), s.level}] = s.success_rate;
    max_level = std::max(max_level, s.level);
  }
  out << "family";
  for (int l = 1; l <= max_level; ++l) out << ",level" << l;
  out << '\n';
  for (DegradationFamily f : kAllFamilies) {
    bool any = false;
    for (int l = 1; l <= max_level; ++l) any = any || rate.count({static_cast<int>(f), l});
    if (!any) continue;
    out << to_string(f);
    for (int l = 1; l <= max_level; ++l) {
      out << ',';
      auto it = rate.find({static_cast<int>(f), l});
      if (it != rate.end()) out << it->second;
    }
    out << '\n';
  }
}

void write_match_success_csv(std::ostream& out, const ExperimentReport& report) {
  out << "method,family,level,trials,success_rate,mean_rms,mean_runtime\n";
  for (const SummaryRow& s : report.summary) {
    if (s.method != Method::RetinaMatch && s.method != Method::GlobalMi) continue;
    out << to_string(s.method) << ',' << to_string(s.family) << ',' << s.level << ',' << s.trials << ','
        << s.success_rate << ',' << s.mean_error << ',' << s.mean_runtime << '\n';
  }
}

}  // namespace tplreg
