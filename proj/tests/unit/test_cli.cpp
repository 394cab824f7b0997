#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <unistd.h>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "tplreg/error.hpp"
#include "tplreg/image_io.hpp"
#include "tplreg/job_config.hpp"
#include "tplreg/synthetic.hpp"

using namespace tplreg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tplreg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) v.push_back(line);
  return v;
}

// Scratch directory with a 300 px reference and a few crops of it.
struct Workspace {
  fs::path dir;
  fs::path reference;

  Workspace() {
    dir = fs::temp_directory_path() / ("tplreg_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const RasterImage ref = synthetic_fundus(300, 300, 12);
    reference = dir / "ref.png";
    write_png(reference, ref);
    write_png(dir / "t0.png", crop(ref, CropBox::from_top_left(40, 60, 100, 100)));
    write_png(dir / "t1.png", crop(ref, CropBox::from_top_left(170, 150, 100, 100)));
    write_png(dir / "small.png", RasterImage(80, 80, 0.5));
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("config files parse, ignore comments and round trip") {
  JobConfig c;
  std::istringstream in("# comment\n\ncomponents = 12   # trailing\n tiling_stride=7\nmethods = retinamatch, global-mi\n"
                        "levels = 1,3\nuse_block = false\nregion_scale = 1.75\n");
  read_config(in, c);
  CHECK(c.components == 12);
  CHECK(c.tiling_stride == 7);
  CHECK(c.methods == std::vector<std::string>{"retinamatch", "global-mi"});
  CHECK(c.levels == std::vector<int>{1, 3});
  CHECK_FALSE(c.use_block);
  CHECK(c.region_scale == 1.75);

  std::ostringstream out;
  write_config(out, c);
  JobConfig back;
  std::istringstream again(out.str());
  read_config(again, back);
  CHECK(back.entries() == c.entries());
  CHECK(c.keys().size() == c.entries().size());
}

TEST_CASE("config errors name the line") {
  JobConfig c;
  std::istringstream unknown("components = 3\nfrobnicate = 2\n");
  try {
    read_config(unknown, c);
    FAIL("accepted an unknown key");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream bad("components = many\n");
  CHECK_THROWS_AS(read_config(bad, c), Error);
  std::istringstream no_eq("components 3\n");
  CHECK_THROWS_AS(read_config(no_eq, c), Error);
  CHECK_THROWS_AS(c.set("use_block", "maybe"), Error);
  JobConfig bad_stride;
  bad_stride.tiling_stride = 500;
  CHECK_THROWS_AS(bad_stride.validate(), Error);
}

TEST_CASE("config maps onto the library settings") {
  JobConfig c;
  c.set("tile_size", "64");
  c.set("tiling_stride", "8");
  c.set("tile_normalization", "standardize");
  c.set("pca", "exact");
  c.set("methods", "pca-only,retinamatch");
  c.validate();
  CHECK(c.tiling() == TilingSpec{64, 64, 8});
  CHECK(c.dictionary_options().normalization == TileNormalization::Standardize);
  CHECK(c.dictionary_options().method == PcaMethod::Exact);
  CHECK(c.dictionary_options().block.patch_stride == 5);
  const Protocol p = c.protocol();
  CHECK(p.methods == std::vector<Method>{Method::PcaOnly, Method::RetinaMatch});
  CHECK(p.cells.size() == 5 * 6);
  CHECK(p.trials_per_cell == 30);

  JobConfig d;
  CHECK(d.dictionary_options().normalization == TileNormalization::None);
  CHECK(d.dictionary_options().alternate == TileNormalization::Mean);
  CHECK(d.match_settings().coarse.sweep.max_degrees == 20.0);
  d.set("alternate_normalization", "off");
  d.set("sweep_degrees", "0");
  d.validate();
  CHECK_FALSE(d.dictionary_options().alternate.has_value());
  CHECK(d.match_settings().coarse.sweep.max_degrees == 0.0);
  d.set("alternate_normalization", "sideways");
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("config command echoes defaults and applies flags") {
  const Run r = run({"config"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("tiling_stride = 10\n") != std::string::npos);
  CHECK(r.out.find("patch_stride = 5\n") != std::string::npos);
  CHECK(r.out.find("components = 20\n") != std::string::npos);
  CHECK(r.out.find("mi_floor = 0.15\n") != std::string::npos);
  const Run f = run({"config", "--components", "7", "--set", "accept_mi=1.5"});
  CHECK(f.out.find("components = 7\n") != std::string::npos);
  CHECK(f.out.find("accept_mi = 1.5\n") != std::string::npos);
  CHECK(run({"config", "--set", "nope=1"}).code == cli::kConfigError);
  CHECK(run({"config", "--set", "components"}).code == cli::kConfigError);
  CHECK(run({"config", "--no-such-flag"}).code == cli::kConfigError);
  CHECK(run({}).code == cli::kConfigError);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("build prints the tiling and is byte-identical for a fixed seed") {
  Workspace& ws = workspace();
  const std::vector<std::string> common{"--tile-size", "100", "--tiling-stride", "20"};
  std::vector<std::string> a{"build", ws.reference.string(), ws.path("a.dict")};
  std::vector<std::string> b{"build", ws.reference.string(), ws.path("b.dict")};
  a.insert(a.end(), common.begin(), common.end());
  b.insert(b.end(), common.begin(), common.end());
  const Run ra = run(a);
  REQUIRE(ra.code == cli::kOk);
  CHECK(ra.out.rfind("tiling f=20 f'=5 l=20 l'=10 tile=100 seed=0\n", 0) == 0);
  CHECK(ra.out.find("tiles 121 build") != std::string::npos);
  REQUIRE(run(b).code == cli::kOk);
  CHECK(slurp(ws.path("a.dict")) == slurp(ws.path("b.dict")));
}

TEST_CASE("build with default tiling echoes f=10 f'=5 l=20") {
  Workspace& ws = workspace();
  const Run r = run({"build", ws.reference.string(), ws.path("default.dict")});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.rfind("tiling f=10 f'=5 l=20 l'=10 tile=200 seed=0\n", 0) == 0);
}

TEST_CASE("build exits 2 on a reference smaller than one tile") {
  Workspace& ws = workspace();
  const Run r = run({"build", ws.path("small.png"), ws.path("small.dict")});
  CHECK(r.code == cli::kTooSmall);
  CHECK(r.err.find("ReferenceTooSmall") != std::string::npos);
  CHECK(run({"build", ws.path("missing.png"), ws.path("x.dict")}).code == cli::kConfigError);
}

TEST_CASE("match writes one record per template") {
  Workspace& ws = workspace();
  REQUIRE(run({"build", ws.reference.string(), ws.path("m.dict"), "--tile-size", "100", "--tiling-stride", "10"}).code ==
          cli::kOk);
  const Run ok = run({"match", ws.path("m.dict"), ws.reference.string(), ws.path("t0.png"), ws.path("t1.png"), "-o",
                      ws.path("out.jsonl")});
  CHECK(ok.code == cli::kOk);
  CHECK(ok.out == "matched 2 low-confidence 0 failed 0\n");
  const auto recs = lines_of(slurp(ws.path("out.jsonl")));
  REQUIRE(recs.size() == 2);
  const auto j0 = nlohmann::json::parse(recs[0]);
  CHECK(j0["status"] == "matched");
  CHECK(j0["transform"][4].get<double>() == doctest::Approx(40.0).epsilon(0.02));
  CHECK(j0["transform"][5].get<double>() == doctest::Approx(60.0).epsilon(0.02));

  // A missing template still gets its record, and the run reports failure.
  const Run partly = run({"match", ws.path("m.dict"), ws.reference.string(), ws.path("t0.png"), ws.path("gone.png")});
  CHECK(partly.code == cli::kConfigError);
  const auto lines = lines_of(partly.out);
  REQUIRE(lines.size() == 2);
  const auto j1 = nlohmann::json::parse(lines[1]);
  CHECK(j1["status"] == "failed");
  CHECK(j1["reason"] == "Io");
  CHECK(partly.err.find("matched 1 low-confidence 0 failed 1") != std::string::npos);
}

TEST_CASE("match refuses a reference of another size") {
  Workspace& ws = workspace();
  REQUIRE(run({"build", ws.reference.string(), ws.path("mm.dict"), "--tile-size", "100", "--tiling-stride", "50"}).code ==
          cli::kOk);
  const Run r = run({"match", ws.path("mm.dict"), ws.path("t0.png"), ws.path("t1.png")});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("DimensionMismatch") != std::string::npos);
}

TEST_CASE("stitch of a single image writes the panorama and sidecars") {
  Workspace& ws = workspace();
  const fs::path one = ws.dir / "one";
  fs::create_directories(one);
  fs::copy_file(ws.dir / "t0.png", one / "t0.png", fs::copy_options::overwrite_existing);
  const Run r = run({"stitch", one.string(), ws.path("pano.png")});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.rfind("placed 1/1 anchor t0.png", 0) == 0);
  CHECK(read_image(ws.path("pano.png"), ChannelPolicy::Green).width() == 100);
  CHECK(fs::exists(ws.path("pano.png.placements.csv")));
  CHECK(fs::exists(ws.path("pano.png.graph.csv")));
  CHECK(slurp(ws.path("pano.png.images.txt")) == "0 t0.png\n");
  CHECK(run({"stitch", ws.path("nowhere"), ws.path("p.png")}).code == cli::kConfigError);
}

TEST_CASE("bench reports every requested method") {
  Workspace& ws = workspace();
  const fs::path out = ws.dir / "bench";
  const Run r = run({"bench", "-", "-", out.string(), "--methods", "pca-only,coarse-only,retinamatch", "--trials", "2",
                     "--tile-size", "100", "--tiling-stride", "20", "--components", "8", "--set", "levels=0,2",
                     "--set", "families=blur", "--set", "synthetic_count=1", "--set", "synthetic_size=300",
                     "--set", "template_size=100", "--set", "threads=1"});
  REQUIRE(r.code == cli::kOk);
  const auto trials = lines_of(slurp(out / "trials.csv"));
  CHECK(trials.size() == 1 + 2 * 2 * 3);
  std::set<std::string> methods;
  for (std::size_t i = 1; i < trials.size(); ++i) methods.insert(trials[i].substr(trials[i].find(',') + 1, trials[i].find(',', trials[i].find(',') + 1) - trials[i].find(',') - 1));
  CHECK(methods == std::set<std::string>{"pca-only", "coarse-only", "retinamatch"});
  CHECK(lines_of(slurp(out / "coarse_clean.csv")).size() == 3);
  CHECK(fs::exists(out / "coarse_degraded.csv"));
  CHECK(lines_of(slurp(out / "match_success.csv")).size() == 3);
  JobConfig echoed;
  read_config_file(out / "config.txt", echoed);
  CHECK(echoed.trials == 2);
  CHECK(r.out.find("records 12") != std::string::npos);
}
