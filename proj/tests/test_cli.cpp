#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "vtg/core/error.hpp"
#include "vtg/io/config.hpp"

using namespace vtg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result vtg_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vtg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kTiny = R"(// desk-sized model
{
  "synth": {"pairs": 4, "classes": 2, "image_size": 16, "tactile_size": 16},
  "codec": {"kind": "pool", "factor": 2},
  "cvtp": {"encoder": {"base_width": 4, "stage_blocks": [1], "embed_dim": 8, "norm_groups": 4},
           "bank_size": 4, "batch_size": 2, "epochs": 1, "lr": 0.01},
  "diffusion": {"unet": {"base_channels": 8, "channel_mult": [1, 2], "attention_factors": [2],
                         "head_channels": 8, "context_dim": 8, "norm_groups": 4},
                "batch_size": 2, "max_steps": 2, "lr": 1e-3, "sample_steps": 4}
})";

}  // namespace

TEST_CASE("defaults validate and keep the published hyperparameters") {
  const auto d = cli::default_config();
  CHECK_NOTHROW(cli::validate_config(d));
  CHECK(d["cvtp"]["tau"] == 0.07);
  CHECK(d["cvtp"]["bank_size"] == 16385);
  CHECK(d["cvtp"]["encoder"]["embed_dim"] == 512);
  CHECK(d["diffusion"]["lr"] == 2e-6);
  CHECK(d["diffusion"]["drop_prob"] == 0.1);
  CHECK(d["diffusion"]["sample_steps"] == 200);
  CHECK(d["task"]["guidance"] == 7.5);
}

TEST_CASE("config hash ignores key order, comments, threads and output") {
  const auto a = io::parse_config(R"({"seed": 1, "data": {"context": 2, "root": "x"}})", "a");
  const auto b = io::parse_config("/* c */ {\"data\": {\"root\": \"x\", // r\n \"context\": 2}, \"seed\": 1}", "b");
  CHECK(io::config_hash(a) == io::config_hash(b));

  auto c = cli::default_config();
  auto d = c;
  d["threads"] = 4;
  d["output"] = "elsewhere";
  CHECK(cli::run_config_hash(c) == cli::run_config_hash(d));
  d["seed"] = 2;
  CHECK(cli::run_config_hash(c) != cli::run_config_hash(d));
  CHECK(cli::run_config_hash(c).size() == 64);
}

TEST_CASE("schema rejects unknown keys and wrong types") {
  auto c = cli::default_config();
  c["diffusion"]["lrr"] = 1.0;
  CHECK_THROWS_AS(cli::validate_config(c), Error);
  c = cli::default_config();
  c["cvtp"]["epochs"] = "many";
  CHECK_THROWS_AS(cli::validate_config(c), Error);
  c = cli::default_config();
  c["cvtp"]["lr"] = 1;  // integers are fine where floats are expected
  CHECK_NOTHROW(cli::validate_config(c));
  c["cvtp"]["epochs"] = 2.5;
  CHECK_THROWS_AS(cli::validate_config(c), Error);
}

TEST_CASE("error lines and exit codes") {
  auto r = vtg_run({"nonsense"});
  CHECK(r.code == 7);
  CHECK(r.err.rfind("error: E_UNKNOWN_COMMAND: ", 0) == 0);

  r = vtg_run({});
  CHECK(r.code == 6);

  const auto dir = scratch("missing");
  r = vtg_run({"sample", "--out", (dir / "out").string()});
  CHECK(r.code == 6);
  CHECK(r.err.rfind("error: E_MISSING_ARGUMENT: ", 0) == 0);
  CHECK_FALSE(fs::exists(dir / "out"));

  r = vtg_run({"train-cvtp", "--set", "cvtp.nope=1", "--data", "x", "--out", (dir / "o").string()});
  CHECK(r.code == 5);
  r = vtg_run({"train-cvtp", "--bogus-flag"});
  CHECK(r.code == 5);
  r = vtg_run({"train-cvtp", "--data", (dir / "absent").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  r = vtg_run({"train-cvtp", "--config", (dir / "absent.json").string()});
  CHECK(r.code != 0);

  r = vtg_run({"sample", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--checkpoint") != std::string::npos);
}

TEST_CASE("synth-data is deterministic per seed") {
  const auto dir = scratch("synth");
  std::ofstream(dir / "tiny.json") << kTiny;
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--seed", "5", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--seed", "5", "--out", (dir / "b").string(), "--threads", "1"}).code == 0);
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--seed", "6", "--out", (dir / "c").string()}).code == 0);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  int compared = 0;
  bool any_diff = false;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (e.path().extension() != ".png") continue;
    const auto name = fs::relative(e.path(), dir / "a");
    CHECK(slurp(e.path()) == slurp(dir / "b" / name));
    any_diff |= slurp(e.path()) != slurp(dir / "c" / name);
    ++compared;
  }
  CHECK(compared > 0);
  CHECK(any_diff);

  const auto sidecar = io::read_json(dir / "a" / cli::kSidecarName);
  CHECK(sidecar["kind"] == "vtg-run");
  CHECK(sidecar["command"] == "synth-data");
  CHECK(sidecar["seed"] == 5);
  CHECK(sidecar["config"]["synth"]["pairs"] == 4);
  CHECK(sidecar["config_hash"] == io::read_json(dir / "b" / cli::kSidecarName)["config_hash"]);
}

TEST_CASE("flags override the config file and --set overrides both") {
  const auto dir = scratch("flags");
  std::ofstream(dir / "tiny.json") << kTiny;
  const auto cfg = (dir / "tiny.json").string();
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--pairs", "3", "--out", (dir / "a").string()}).code == 0);
  CHECK(io::read_json(dir / "a" / cli::kSidecarName)["config"]["synth"]["pairs"] == 3);
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--pairs", "3", "--set", "synth.pairs=2", "--out",
                   (dir / "b").string()})
              .code == 0);
  CHECK(io::read_json(dir / "b" / "manifest.json")["entries"].size() == 2);
}

TEST_CASE("end-to-end pipeline on a tiny model, re-runnable from sidecars") {
  const auto dir = scratch("pipeline");
  std::ofstream(dir / "tiny.json") << kTiny;
  const auto cfg = (dir / "tiny.json").string();
  auto p = [&](const char* s) { return (dir / s).string(); };
  REQUIRE(vtg_run({"synth-data", "--config", cfg, "--out", p("data")}).code == 0);
  REQUIRE(vtg_run({"train-cvtp", "--config", cfg, "--data", p("data"), "--out", p("cv")}).code == 0);
  CHECK(fs::exists(dir / "cv" / "cvtp.ckpt"));
  CHECK(io::read_json(dir / "cv" / "losses.json").size() == 2);
  REQUIRE(vtg_run({"train-diffusion", "--config", cfg, "--data", p("data"), "--cvtp", p("cv"), "--out", p("m")}).code == 0);
  auto r = vtg_run({"sample", "--config", cfg, "--checkpoint", p("m"), "--data", p("data"), "--count", "2", "--out", p("s")});
  REQUIRE(r.code == 0);
  const auto listing = io::read_json(dir / "s" / "samples.json")["samples"];
  CHECK(listing.size() == 8);
  CHECK(fs::exists(dir / "s" / listing[0]["file"].get<std::string>()));

  // The sidecar reproduces the run bit for bit.
  REQUIRE(vtg_run({"sample", "--config", p("s/run.json"), "--out", p("s2")}).code == 0);
  for (const auto& s : listing) {
    const auto f = s["file"].get<std::string>();
    CHECK(slurp(dir / "s" / f) == slurp(dir / "s2" / f));
  }
  CHECK(vtg_run({"train-cvtp", "--config", p("s/run.json")}).code == 5);

  r = vtg_run({"evaluate", "--config", cfg, "--checkpoint", p("m"), "--samples", p("s"), "--data", p("data"), "--out", p("ev")});
  REQUIRE(r.code == 0);
  const auto report = io::read_json(dir / "ev" / "report.json");
  for (const char* k : {"ssim", "psnr", "fid", "cvtp", "material"}) CHECK(report["metrics"].contains(k));
  CHECK(report["config_hash"] == io::read_json(dir / "m" / cli::kSidecarName)["config_hash"]);

  r = vtg_run({"stylize", "--config", cfg, "--checkpoint", p("m"), "--data", p("data"), "--level", "0", "--out", p("st")});
  CHECK(r.code == 0);
  r = vtg_run({"stylize", "--config", cfg, "--checkpoint", p("m"), "--data", p("data"), "--source", "99", "--out", p("st")});
  CHECK(r.code == 2);
  r = vtg_run({"shade", "--config", cfg, "--checkpoint", p("m"), "--data", p("data"), "--out", p("sh")});
  CHECK(r.code == 5);
  REQUIRE(vtg_run({"train-diffusion", "--config", cfg, "--data", p("data"), "--concat", "reflectance", "--out", p("mr")}).code == 0);
  r = vtg_run({"shade", "--config", cfg, "--checkpoint", p("mr"), "--data", p("data"), "--out", p("sh")});
  CHECK(r.code == 0);
  CHECK(io::read_json(dir / "sh" / "shading.json")["samples"].size() == 4);
}
