#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "tplreg/coarse_locator.hpp"
#include "tplreg/error.hpp"
#include "tplreg/harness.hpp"
#include "tplreg/image_io.hpp"
#include "tplreg/job_config.hpp"
#include "tplreg/matcher.hpp"
#include "tplreg/mosaic.hpp"

namespace fs = std::filesystem;

namespace tplreg::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Long flags that map one-to-one onto config keys.
const std::pair<const char*, const char*> kFlagKeys[] = {
    {"--tiling-stride", "tiling_stride"},
    {"--patch-stride", "patch_stride"},
    {"--components", "components"},
    {"--bins", "bins"},
    {"--seed", "seed"},
    {"--region-scale", "region_scale"},
    {"--methods", "methods"},
    {"--tile-normalization", "tile_normalization"},
    {"--tile-size", "tile_size"},
    {"--trials", "trials"},
};

struct Common {
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::vector<std::string> sets;  // --set key=value
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "key = value file; flags override it");
  for (const auto& [flag, key] : kFlagKeys) {
    CLI::Option* opt = cmd->add_option(flag, common.flag_values[key], std::string("sets ") + key);
    common.flag_options.emplace_back(key, opt);
  }
  cmd->add_option("--set", common.sets, "any other config key, as key=value");
}

// --config first, then the bench protocol file, then explicit flags, then --set entries.
JobConfig resolve(const Common& common, const std::string& protocol_path = "") {
  JobConfig config;
  if (!common.config_path.empty()) read_config_file(common.config_path, config);
  if (!protocol_path.empty() && protocol_path != "-") read_config_file(protocol_path, config);
  for (const auto& [key, opt] : common.flag_options) {
    if (opt->count() > 0) config.set(key, common.flag_values.at(key));
  }
  for (const std::string& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

int cmd_build(const JobConfig& config, const std::string& reference_path, const std::string& out_path,
              std::ostream& out) {
  const RasterImage reference = read_image(reference_path, config.channel_policy());
  out << "tiling f=" << config.tiling_stride << " f'=" << config.patch_stride << " l=" << config.components
      << " l'=" << config.patch_components << " tile=" << config.tile_size << " seed=" << config.seed << '\n';
  const auto t0 = Clock::now();
  const TargetDictionary dict =
      build_dictionary(reference, config.tiling(), config.dictionary_options(), config.seed);
  const double elapsed = seconds_since(t0);
  std::ofstream file = open_out(out_path);
  write_dictionary(file, dict);
  if (!file) throw Error(ErrorCode::Io, "failed writing " + out_path);
  out << "tiles " << dict.size() << " build " << std::fixed << std::setprecision(3) << elapsed << " s\n";
  return kOk;
}

int cmd_match(const JobConfig& config, const std::string& dict_path, const std::string& reference_path,
              const std::vector<std::string>& templates, const std::string& out_path, std::ostream& out,
              std::ostream& err) {
  std::ifstream dict_in(dict_path, std::ios::binary);
  if (!dict_in) throw Error(ErrorCode::Io, "cannot open dictionary " + dict_path);
  const TargetDictionary dict = read_dictionary(dict_in);
  const RasterImage reference = read_image(reference_path, config.channel_policy());
  if (reference.width() != dict.reference_width || reference.height() != dict.reference_height) {
    throw Error(ErrorCode::DimensionMismatch,
                "dictionary was built for a " + std::to_string(dict.reference_width) + "x" +
                    std::to_string(dict.reference_height) + " reference, got " +
                    std::to_string(reference.width()) + "x" + std::to_string(reference.height()));
  }

  std::ofstream file;
  if (out_path != "-") file = open_out(out_path);
  std::ostream& records = out_path == "-" ? out : file;
  std::ostream& report = out_path == "-" ? err : out;

  const MatchSettings settings = config.match_settings();
  int counts[3] = {0, 0, 0};
  bool io_failed = false;
  for (const std::string& path : templates) {
    MatchResult result;
    try {
      const RasterImage tmpl = read_image(path, config.channel_policy());
      result = match(dict, reference, tmpl, settings);
    } catch (const Error& e) {
      // Unreadable template: still one record, but the run reports the I/O error.
      result.status = MatchStatus::Failed;
      result.reason = e.code();
      result.message = e.what();
      io_failed = true;
    }
    ++counts[static_cast<int>(result.status)];
    records << to_record(result, path) << '\n';
  }
  records.flush();
  report << "matched " << counts[0] << " low-confidence " << counts[1] << " failed " << counts[2] << '\n';
  if (io_failed) {
    err << "error: some templates could not be read\n";
    return kConfigError;
  }
  return kOk;
}

int cmd_stitch(const JobConfig& config, const std::string& dir, const std::string& out_path,
               std::ostream& out) {
  const std::vector<fs::path> files = image_files(dir);
  if (files.empty()) throw Error(ErrorCode::Io, "no .png or .pgm images in " + dir);
  std::vector<RasterImage> images;
  for (const fs::path& f : files) images.push_back(read_image(f, config.channel_policy()));

  const auto t0 = Clock::now();
  OverlapGraph graph;
  Panorama pano;
  if (images.size() == 1) {
    pano = stitch_images(images, config.graph_options(), config.stitch_settings(), config.seed);
  } else {
    graph = build_overlap_graph(images, config.graph_options(), config.seed);
    pano = stitch(images, graph, config.stitch_settings());
  }
  const double elapsed = seconds_since(t0);

  write_png(out_path, pano.canvas);
  std::ofstream placements = open_out(out_path + ".placements.csv");
  write_placements(placements, pano);
  std::ofstream graph_file = open_out(out_path + ".graph.csv");
  write_graph_records(graph_file, graph);
  std::ofstream names = open_out(out_path + ".images.txt");
  for (std::size_t i = 0; i < files.size(); ++i) names << i << ' ' << files[i].filename().string() << '\n';

  out << "placed " << images.size() - pano.unplaced.size() << '/' << images.size() << " anchor "
      << files[pano.anchor].filename().string() << " canvas " << pano.canvas.width() << 'x'
      << pano.canvas.height() << " time " << std::fixed << std::setprecision(3) << elapsed << " s\n";
  return kOk;
}

int cmd_bench(const JobConfig& config, const std::string& dataset_dir, const std::string& out_dir,
              std::ostream& out) {
  std::vector<RasterImage> dataset;
  if (dataset_dir == "-") {
    dataset = synthetic_dataset(config.synthetic_count, config.synthetic_size, config.synthetic_size, config.seed);
  } else {
    for (const fs::path& f : image_files(dataset_dir)) dataset.push_back(read_image(f, config.channel_policy()));
    if (dataset.empty()) throw Error(ErrorCode::Io, "no .png or .pgm images in " + dataset_dir);
  }
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  {
    std::ofstream cfg = open_out(dir / "config.txt");
    write_config(cfg, config);
  }

  const auto t0 = Clock::now();
  const ExperimentReport report = run_experiment(dataset, config.protocol());
  const double elapsed = seconds_since(t0);

  std::ofstream trials = open_out(dir / "trials.csv");
  write_trials_csv(trials, report);
  std::ofstream clean = open_out(dir / "coarse_clean.csv");
  write_coarse_clean_csv(clean, report);
  std::ofstream degraded = open_out(dir / "coarse_degraded.csv");
  write_coarse_degraded_csv(degraded, report);
  std::ofstream success = open_out(dir / "match_success.csv");
  write_match_success_csv(success, report);

  out << std::left << std::setw(12) << "method" << std::setw(12) << "family" << std::setw(6) << "level"
      << std::setw(8) << "trials" << std::setw(10) << "success" << std::setw(12) << "mean_err"
      << "mean_s\n";
  out << std::fixed;
  for (const SummaryRow& r : report.summary) {
    out << std::setw(12) << to_string(r.method) << std::setw(12) << to_string(r.family) << std::setw(6) << r.level
        << std::setw(8) << r.trials << std::setw(10) << std::setprecision(3) << r.success_rate << std::setw(12)
        << std::setprecision(2) << r.mean_error << std::setprecision(3) << r.mean_runtime << '\n';
  }
  out << "records " << report.records.size() << " time " << std::setprecision(1) << elapsed << " s\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Template localization, registration and mosaicking"};
  app.require_subcommand(1);

  Common common;
  std::string reference, target, dict_path, out_path = "-", dir, protocol_path;
  std::vector<std::string> templates;

  CLI::App* build = app.add_subcommand("build", "index a reference image");
  build->add_option("reference", reference)->required();
  build->add_option("dictionary", target, "output path")->required();
  add_common(build, common);

  CLI::App* match_cmd = app.add_subcommand("match", "locate templates in a reference");
  match_cmd->add_option("dictionary", dict_path)->required();
  match_cmd->add_option("reference", reference)->required();
  match_cmd->add_option("templates", templates)->required();
  match_cmd->add_option("-o,--out", out_path, "JSON lines, '-' for stdout");
  add_common(match_cmd, common);

  CLI::App* stitch_cmd = app.add_subcommand("stitch", "mosaic a directory of overlapping images");
  stitch_cmd->add_option("images", dir)->required();
  stitch_cmd->add_option("panorama", target, "output PNG; sidecars get .placements.csv, .graph.csv")->required();
  add_common(stitch_cmd, common);

  CLI::App* bench = app.add_subcommand("bench", "run the degradation benchmark");
  bench->add_option("dataset", dir, "image directory, '-' for the built-in synthetic set")->required();
  bench->add_option("protocol", protocol_path, "key = value file, '-' for defaults")->required();
  bench->add_option("out", target, "output directory")->required();
  add_common(bench, common);

  CLI::App* show = app.add_subcommand("config", "print the effective configuration");
  add_common(show, common);

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (bench->parsed()) return cmd_bench(resolve(common, protocol_path), dir, target, out);
    const JobConfig config = resolve(common);
    if (build->parsed()) return cmd_build(config, reference, target, out);
    if (match_cmd->parsed()) return cmd_match(config, dict_path, reference, templates, out_path, out, err);
    if (stitch_cmd->parsed()) return cmd_stitch(config, dir, target, out);
    write_config(out, config);
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ReferenceTooSmall ? kTooSmall : kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace tplreg::cli
