#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "biomm/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "biomm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = biomm::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_CASE("exit codes for bad usage") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"--no-such-flag", "gradcheck"}).code == 1);
  CHECK(cli({"train", "--variant", "bmmn"}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  const auto v = cli({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find('.') != std::string::npos);
}

TEST_CASE("gradcheck subcommand") {
  auto r = cli({"gradcheck", "--list"});
  CHECK(r.code == 0);
  CHECK(r.out.find("conv1d_full") != std::string::npos);
  r = cli({"gradcheck", "--op", "linear", "--plain"});
  CHECK(r.code == 0);
  CHECK(r.out.find("ok") != std::string::npos);
  CHECK(r.out.find("\x1b[") == std::string::npos);
  CHECK(cli({"gradcheck", "--op", "nope"}).code == 1);
}

TEST_CASE("standalone binary reports exit codes") {
  const char* path = std::getenv("BIOMM_CLI_PATH");
  if (!path) return;
  const std::string exe = std::string("\"") + path + "\"";
  CHECK(std::system((exe + " gradcheck --op relu --plain > /dev/null").c_str()) == 0);
  CHECK(WEXITSTATUS(std::system((exe + " --bogus > /dev/null 2>&1").c_str())) == 1);
}

TEST_CASE("synth, preprocess, train, eval, assess") {
  TempDir tmp("biomm_test_cli");
  write_text(tmp / "spec.json",
             R"({"n_subjects":2,"trials_per_subject":2,"trial_seconds":3,"therapy":{"patients":1,"minutes":2}})");
  write_text(tmp / "cfg.json", R"({"epochs":1,"bae_epochs":1,"joint_epochs":1,"bae_segments":4,"batch_size":4})");

  REQUIRE(cli({"synth", "--spec", tmp / "spec.json", "--out", tmp / "corpus"}).code == 0);
  CHECK(fs::exists(tmp / "corpus/manifest.json"));
  CHECK(fs::exists(tmp / "corpus/s02_t02"));
  CHECK(fs::exists(tmp / "corpus/therapy"));

  REQUIRE(cli({"preprocess", "--in", tmp / "corpus", "--out", tmp / "data/samples.bin"}).code == 0);
  const auto side = read_json(tmp / "data/samples.json");
  CHECK(side["dropped_frames"] == 0);
  CHECK(side["samples"] == 12);
  const auto pm = read_json(tmp / "data/samples.manifest.json");
  CHECK(pm["command"] == "preprocess");
  CHECK(pm["config_hash"].get<std::string>().size() == 16);
  CHECK(pm.contains("wall_time_s"));

  const auto missing = cli({"train", "--variant", "bae2", "--data", tmp / "data/samples.bin", "--config",
                            tmp / "cfg.json", "--out", tmp / "m_bae2"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("auto-encoder") != std::string::npos);

  REQUIRE(cli({"train", "--variant", "bmmn", "--data", tmp / "data/samples.bin", "--config", tmp / "cfg.json",
               "--out", tmp / "m"})
              .code == 0);
  CHECK(fs::exists(tmp / "m/model.json"));
  CHECK(fs::exists(tmp / "m/params.ckpt"));
  CHECK(fs::exists(tmp / "m/metrics.csv"));
  const auto mm = read_json(tmp / "m/manifest.json");
  CHECK(mm["command"] == "train");
  CHECK(mm["seed"] == 1);

  REQUIRE(cli({"eval", "--model", tmp / "m", "--data", tmp / "data/samples.bin", "--out", tmp / "rep/eval.json"})
              .code == 0);
  const auto rep = read_json(tmp / "rep/eval.json");
  CHECK(rep["samples"] == 2);
  CHECK(fs::exists(tmp / "rep/eval.csv"));
  CHECK(fs::exists(tmp / "rep/eval.predictions.csv"));
  CHECK(fs::exists(tmp / "rep/eval.manifest.json"));

  REQUIRE(cli({"assess", "--model", tmp / "m", "--session", tmp / "corpus/therapy", "--out", tmp / "rep/assess.json",
               "--window", "0.5"})
              .code == 0);
  CHECK(read_json(tmp / "rep/assess.json")["patients"].size() == 1);
  CHECK(fs::exists(tmp / "rep/assess.quadrants.csv"));

  // Same seed, same bytes.
  REQUIRE(cli({"train", "--variant", "bmmn", "--data", tmp / "data/samples.bin", "--config", tmp / "cfg.json",
               "--out", tmp / "m2"})
              .code == 0);
  CHECK(slurp(tmp / "m/params.ckpt") == slurp(tmp / "m2/params.ckpt"));
  auto a = read_json(tmp / "m/manifest.json"), b = read_json(tmp / "m2/manifest.json");
  a.erase("wall_time_s");
  b.erase("wall_time_s");
  a.erase("outputs");
  b.erase("outputs");
  CHECK(a == b);

  REQUIRE(cli({"--seed", "9", "train", "--variant", "bmmn", "--data", tmp / "data/samples.bin", "--config",
               tmp / "cfg.json", "--out", tmp / "m3"})
              .code == 0);
  CHECK(read_json(tmp / "m3/manifest.json")["seed"] == 9);
  CHECK(slurp(tmp / "m/params.ckpt") != slurp(tmp / "m3/params.ckpt"));
}

TEST_CASE("bad config is a validation error") {
  TempDir tmp("biomm_test_cli_cfg");
  write_text(tmp / "bad.json", R"({"epochs":-3})");
  write_text(tmp / "broken.json", "{not json");
  write_text(tmp / "samples.bin", "garbage");
  CHECK(cli({"train", "--variant", "bmmn", "--data", tmp / "samples.bin", "--config", tmp / "bad.json", "--out",
             tmp / "m"})
            .code == 1);
  CHECK(cli({"train", "--variant", "bmmn", "--data", tmp / "samples.bin", "--config", tmp / "broken.json", "--out",
             tmp / "m"})
            .code == 1);
  CHECK(cli({"train", "--variant", "bmmn", "--data", tmp / "samples.bin", "--out", tmp / "m"}).code == 1);
}
