#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using uq::testing::data_path;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Workdir {
 public:
  explicit Workdir(const std::string& name) : dir_(fs::temp_directory_path() / ("uq_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workdir() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& p) const { return dir_ / p; }

  Run run(const std::string& args, const std::string& env = "") const {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + UQ_CLI_PATH + "' " + args +
                            " > /dev/null 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

 private:
  fs::path dir_;
};

const std::string kSingle = data_path("scenarios/single_room.json");

}  // namespace

TEST_CASE("synth: missing scenario and zero days are user errors") {
  Workdir w("errors");
  auto r = w.run("synth --scenario missing.json --out log.csv --days 3");
  CHECK(r.code == 2);
  CHECK(r.err.find("scenario not found") != std::string::npos);

  r = w.run("synth --scenario '" + kSingle + "' --out log.csv --days 0");
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(w / "log.csv"));

  CHECK(w.run("frobnicate").code == 2);
  CHECK(w.run("--help").code == 0);
}

TEST_CASE("single-room pipeline end to end, reproducible") {
  Workdir w("pipeline");
  REQUIRE(w.run("synth --scenario '" + kSingle + "' --out log.csv --days 20 --seed 3").code == 0);
  const auto manifest = nlohmann::json::parse(slurp(w / "log.csv.manifest.json"));
  CHECK(manifest["command"] == "synth");
  CHECK(manifest["config"]["seed"] == "3");
  CHECK(manifest["inputs"]["scenario"]["fnv1a64"].get<std::string>().size() == 16);

  REQUIRE(w.run("calibrate --log log.csv --out model.json --rooms 1 --clusters 1 --room-types 1 --with-routing --seed 3")
              .code == 0);
  REQUIRE(w.run("calibrate --log log.csv --out model2.json --rooms 1 --clusters 1 --room-types 1 --with-routing --seed 3")
              .code == 0);
  CHECK(slurp(w / "model.json") == slurp(w / "model2.json"));

  for (const std::string mode : {"two-level-sample", "two-level-argmax", "jsq"}) {
    REQUIRE(w.run("simulate --model model.json --mode " + mode + " --reps 3 --out sim_" + mode + " --seed 4").code == 0);
  }
  REQUIRE(w.run("simulate --model model.json --reps 3 --out again --seed 4 --threads 2").code == 0);
  for (const char* f : {"rep_0000.csv", "rep_0001.csv", "rep_0002.csv"}) {
    CHECK(slurp(w / ("sim_two-level-sample/" + std::string(f))) == slurp(w / ("again/" + std::string(f))));
  }

  REQUIRE(w.run("validate --sim sim_two-level-sample --reference log.csv --out val").code == 0);
  const auto report = nlohmann::json::parse(slurp(w / "val/report.json"));
  CHECK(report.contains("ks_wait"));
  CHECK(report.contains("mean_queue_length"));
  CHECK(report.contains("mean_wait_minutes"));
  const auto summary = slurp(w / "val/summary.csv");
  CHECK(summary.find("mean_queue_length") != std::string::npos);
  CHECK(summary.find("ks_wait") != std::string::npos);

  REQUIRE(w.run("report --report val/report.json --out rerender").code == 0);
  CHECK(slurp(w / "rerender/routed_by_type.csv") == slurp(w / "val/routed_by_type.csv"));

  auto r = w.run("validate --sim sim_jsq --reference nowhere.csv --out v2");
  CHECK(r.code == 2);
  CHECK(r.err.find("not found") != std::string::npos);
  CHECK(w.run("simulate --model nowhere.json --reps 2 --out s").code == 2);
}

TEST_CASE("config file values yield to flags; the environment supplies the default seed") {
  Workdir w("config");
  std::ofstream(w / "cfg.json") << R"({"days": 2, "seed": 11})";
  REQUIRE(w.run("synth --config cfg.json --scenario '" + kSingle + "' --out a.csv").code == 0);
  auto m = nlohmann::json::parse(slurp(w / "a.csv.manifest.json"));
  CHECK(m["config"]["days"] == "2");
  CHECK(m["config"]["seed"] == "11");

  REQUIRE(w.run("synth --config cfg.json --scenario '" + kSingle + "' --out b.csv --days 3").code == 0);
  m = nlohmann::json::parse(slurp(w / "b.csv.manifest.json"));
  CHECK(m["config"]["days"] == "3");
  CHECK(m["summary"]["days"] == 3);

  REQUIRE(w.run("synth --scenario '" + kSingle + "' --out env.csv --days 2", "ULTRAQUEUE_SEED=11").code == 0);
  CHECK(slurp(w / "env.csv") == slurp(w / "a.csv"));
  m = nlohmann::json::parse(slurp(w / "env.csv.manifest.json"));
  CHECK(m["config"]["seed"] == "11");

  REQUIRE(w.run("synth --scenario '" + kSingle + "' --out flag.csv --days 2 --seed 12", "ULTRAQUEUE_SEED=11").code == 0);
  CHECK(slurp(w / "flag.csv") != slurp(w / "a.csv"));

  CHECK(w.run("synth --config nothere.json --scenario '" + kSingle + "' --out c.csv --days 1").code == 2);
}
