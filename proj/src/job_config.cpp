#include "tplreg/job_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "tplreg/error.hpp"

namespace tplreg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': '" + value + "' is not " + want);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  const char* key;
  std::function<std::string(const JobConfig&)> get;
  std::function<void(JobConfig&, const std::string&, const std::string&)> set;
};

template <class M>
Field int_field(const char* key, M JobConfig::*member) {
  return {key, [member](const JobConfig& c) { return std::to_string(c.*member); },
          [member](JobConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<M>(k, v);
          }};
}

Field real_field(const char* key, double JobConfig::*member) {
  return {key, [member](const JobConfig& c) { return num(c.*member); },
          [member](JobConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<double>(k, v);
          }};
}

Field bool_field(const char* key, bool JobConfig::*member) {
  return {key, [member](const JobConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](JobConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); }};
}

Field text_field(const char* key, std::string JobConfig::*member) {
  return {key, [member](const JobConfig& c) { return c.*member; },
          [member](JobConfig& c, const std::string&, const std::string& v) { c.*member = v; }};
}

Field list_field(const char* key, std::vector<std::string> JobConfig::*member) {
  return {key, [member](const JobConfig& c) { return join(c.*member); },
          [member](JobConfig& c, const std::string&, const std::string& v) { c.*member = split_list(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      int_field("tile_size", &JobConfig::tile_size),
      int_field("tiling_stride", &JobConfig::tiling_stride),
      int_field("components", &JobConfig::components),
      text_field("pca", &JobConfig::pca),
      int_field("oversample", &JobConfig::oversample),
      int_field("power_iters", &JobConfig::power_iters),
      text_field("tile_normalization", &JobConfig::tile_normalization),
      text_field("alternate_normalization", &JobConfig::alternate_normalization),
      bool_field("precompute_patches", &JobConfig::precompute_patches),
      int_field("patch_stride", &JobConfig::patch_stride),
      int_field("patch_components", &JobConfig::patch_components),
      real_field("block_enlargement", &JobConfig::block_enlargement),
      real_field("patch_fraction", &JobConfig::patch_fraction),
      bool_field("use_block", &JobConfig::use_block),
      real_field("sweep_degrees", &JobConfig::sweep_degrees),
      real_field("sweep_step", &JobConfig::sweep_step),
      int_field("bins", &JobConfig::bins),
      int_field("max_iters", &JobConfig::max_iters),
      real_field("region_scale", &JobConfig::region_scale),
      real_field("mi_floor", &JobConfig::mi_floor),
      text_field("channel", &JobConfig::channel),
      int_field("mosaic_components", &JobConfig::mosaic_components),
      int_field("neighbors", &JobConfig::neighbors),
      real_field("accept_mi", &JobConfig::accept_mi),
      int_field("max_search_pairs", &JobConfig::max_search_pairs),
      bool_field("allow_partial", &JobConfig::allow_partial),
      list_field("methods", &JobConfig::methods),
      list_field("families", &JobConfig::families),
      {"levels", [](const JobConfig& c) { return join(c.levels); },
       [](JobConfig& c, const std::string& k, const std::string& v) {
         c.levels.clear();
         for (const std::string& item : split_list(v)) c.levels.push_back(parse_number<int>(k, item));
       }},
      int_field("trials", &JobConfig::trials),
      int_field("template_size", &JobConfig::template_size),
      real_field("coarse_threshold", &JobConfig::coarse_threshold),
      real_field("match_threshold", &JobConfig::match_threshold),
      int_field("threads", &JobConfig::threads),
      int_field("synthetic_count", &JobConfig::synthetic_count),
      int_field("synthetic_size", &JobConfig::synthetic_size),
      int_field("seed", &JobConfig::seed),
  };
  return table;
}

TileNormalization parse_normalization(const std::string& name) {
  return name == "none" ? TileNormalization::None
         : name == "mean" ? TileNormalization::Mean
                          : TileNormalization::Standardize;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, "config: " + what);
}

}  // namespace

void JobConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, trim(value));
      return;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> JobConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::vector<std::string> JobConfig::keys() const {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

void JobConfig::validate() const {
  require(tile_size >= 2, "tile_size must be at least 2");
  require(tiling_stride >= 1 && tiling_stride <= tile_size, "tiling_stride must lie in [1, tile_size]");
  require(components >= 1, "components must be positive");
  require(pca == "randomized" || pca == "exact", "pca must be randomized or exact");
  require(oversample >= 0 && power_iters >= 0, "oversample and power_iters must be non-negative");
  require(tile_normalization == "none" || tile_normalization == "mean" || tile_normalization == "standardize",
          "tile_normalization must be none, mean or standardize");
  require(alternate_normalization == "off" || alternate_normalization == "none" ||
              alternate_normalization == "mean" || alternate_normalization == "standardize",
          "alternate_normalization must be off, none, mean or standardize");
  require(sweep_degrees >= 0.0 && (sweep_degrees == 0.0 || sweep_step > 0.0),
          "sweep_degrees must be non-negative and sweep_step positive");
  require(patch_stride >= 1 && patch_components >= 1, "patch_stride and patch_components must be positive");
  require(block_enlargement >= 1.0, "block_enlargement must be at least 1");
  require(patch_fraction > 0.0 && patch_fraction <= 1.0, "patch_fraction must lie in (0, 1]");
  require(bins >= 8, "bins must be at least 8");
  require(max_iters >= 1, "max_iters must be positive");
  require(region_scale >= 1.0, "region_scale must be at least 1");
  require(channel == "green" || channel == "luminance", "channel must be green or luminance");
  require(mosaic_components >= 1 && neighbors >= 1, "mosaic_components and neighbors must be positive");
  require(max_search_pairs >= 0, "max_search_pairs must be non-negative");
  require(!methods.empty(), "methods must not be empty");
  for (const std::string& m : methods) parse_method(m);
  require(!families.empty(), "families must not be empty");
  for (const std::string& f : families) parse_family(f);
  require(!levels.empty(), "levels must not be empty");
  for (int l : levels) require(l >= 0 && l <= 5, "levels must lie in [0, 5]");
  require(trials >= 1 && template_size >= 8, "trials must be positive and template_size at least 8");
  require(threads >= 0, "threads must be non-negative");
  require(synthetic_count >= 1 && synthetic_size >= template_size, "synthetic set too small for the template");
}

TilingSpec JobConfig::tiling() const { return {tile_size, tile_size, tiling_stride}; }

DictionaryOptions JobConfig::dictionary_options() const {
  DictionaryOptions o;
  o.components = components;
  o.method = pca == "exact" ? PcaMethod::Exact : PcaMethod::Randomized;
  o.randomized = {oversample, power_iters, seed};
  o.normalization = parse_normalization(tile_normalization);
  if (alternate_normalization == "off") {
    o.alternate.reset();
  } else {
    o.alternate = parse_normalization(alternate_normalization);
  }
  o.precompute_patches = precompute_patches;
  o.block = {patch_stride, patch_components, block_enlargement, patch_fraction};
  return o;
}

MatchSettings JobConfig::match_settings() const {
  MatchSettings s;
  s.coarse.use_block = use_block;
  s.coarse.block = {patch_stride, patch_components, block_enlargement, patch_fraction};
  s.coarse.sweep.max_degrees = sweep_degrees;
  s.coarse.sweep.step_degrees = sweep_step;
  s.coarse.sweep.bins = bins;
  s.region_scale = region_scale;
  s.registration.bins = bins;
  s.registration.max_iters = max_iters;
  s.mi_floor = mi_floor;
  return s;
}

GraphOptions JobConfig::graph_options() const {
  GraphOptions g;
  g.components = mosaic_components;
  g.neighbors = neighbors;
  g.registration.bins = bins;
  g.registration.max_iters = max_iters;
  g.accept_mi = accept_mi;
  g.max_search_pairs = max_search_pairs;
  return g;
}

StitchSettings JobConfig::stitch_settings() const {
  StitchSettings s;
  s.registration.bins = bins;
  s.registration.max_iters = max_iters;
  s.allow_partial = allow_partial;
  return s;
}

Protocol JobConfig::protocol() const {
  Protocol p;
  for (const std::string& f : families) {
    for (int level : levels) p.cells.push_back({parse_family(f), level, 0});
  }
  p.trials_per_cell = trials;
  p.template_size = template_size;
  p.methods.clear();
  for (const std::string& m : methods) p.methods.push_back(parse_method(m));
  p.tiling = tiling();
  p.dictionary = dictionary_options();
  p.match = match_settings();
  p.coarse_threshold = coarse_threshold;
  p.match_threshold = match_threshold;
  p.seed = seed;
  p.threads = threads;
  return p;
}

ChannelPolicy JobConfig::channel_policy() const {
  return channel == "luminance" ? ChannelPolicy::Luminance : ChannelPolicy::Green;
}

void read_config(std::istream& in, JobConfig& config) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Format, "config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      std::string what = e.what();
      what.erase(0, what.find(": ") + 2);  // drop the code prefix; the new Error adds it back
      throw Error(e.code(), "config line " + std::to_string(number) + ": " + what);
    }
  }
}

void read_config_file(const std::filesystem::path& path, JobConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  read_config(in, config);
}

void write_config(std::ostream& out, const JobConfig& config) {
  for (const auto& [k, v] : config.entries()) out << k << " = " << v << '\n';
}

}  // namespace tplreg
