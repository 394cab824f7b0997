#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tplreg/coarse_locator.hpp"
#include "tplreg/harness.hpp"
#include "tplreg/image_io.hpp"
#include "tplreg/matcher.hpp"
#include "tplreg/mosaic.hpp"

namespace tplreg {

/// Every knob of every command. Files hold one `key = value` per line, `#`
/// starts a comment; command-line flags are applied on top with set().
struct JobConfig {
  // dictionary
  int tile_size = 200;
  int tiling_stride = 10;
  int components = 20;
  std::string pca = "randomized";  ///< randomized | exact
  int oversample = 10;
  int power_iters = 1;
  std::string tile_normalization = "none";       ///< none | mean | standardize
  std::string alternate_normalization = "mean";  ///< off | none | mean | standardize
  bool precompute_patches = false;
  // block PCA
  int patch_stride = 5;
  int patch_components = 10;
  double block_enlargement = 1.5;
  double patch_fraction = 0.5;
  bool use_block = true;
  double sweep_degrees = 20.0;
  double sweep_step = 5.0;
  // registration and matching
  int bins = 32;
  int max_iters = 100;
  double region_scale = 1.5;
  double mi_floor = 0.15;
  std::string channel = "green";  ///< green | luminance
  // stitching
  int mosaic_components = 20;
  int neighbors = 3;
  double accept_mi = 1.2;
  int max_search_pairs = 200;
  bool allow_partial = true;
  // benchmark
  std::vector<std::string> methods{"coarse-only", "retinamatch"};
  std::vector<std::string> families{"affine", "noise", "blur", "brightness", "artifacts"};
  std::vector<int> levels{0, 1, 2, 3, 4, 5};
  int trials = 30;
  int template_size = 200;
  double coarse_threshold = 40.0;
  double match_threshold = 8.0;
  int threads = 0;
  int synthetic_count = 4;
  int synthetic_size = 1000;

  std::uint64_t seed = 0;

  /// Throws InvalidArgument for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// Keys in a fixed order, each with its current value.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::vector<std::string> keys() const;

  /// Throws InvalidArgument when a value is out of its domain.
  void validate() const;

  TilingSpec tiling() const;
  DictionaryOptions dictionary_options() const;
  MatchSettings match_settings() const;
  GraphOptions graph_options() const;
  StitchSettings stitch_settings() const;
  Protocol protocol() const;
  ChannelPolicy channel_policy() const;
};

/// Applies every line of a key = value stream to `config`. Errors name the line.
void read_config(std::istream& in, JobConfig& config);
void read_config_file(const std::filesystem::path& path, JobConfig& config);
/// Round-trips through read_config.
void write_config(std::ostream& out, const JobConfig& config);

}  // namespace tplreg
