#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "ultraqueue/bundle.hpp"
#include "ultraqueue/scenario.hpp"

using namespace uq;

namespace {

const CalibratedModel& small_model() {
  static const CalibratedModel m = [] {
    const auto log = synthesize_log(load_scenario(uq::testing::data_path("scenarios/center.json")), 15, 31).records;
    CalibrationConfig cfg;
    cfg.seed = 6;
    cfg.threads = 4;
    return build_model(log, cfg).model;
  }();
  return m;
}

}  // namespace

TEST_CASE("model bundle round trips bit for bit through a file") {
  const auto& m = small_model();
  const auto dir = std::filesystem::temp_directory_path() / "uq_bundle_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "nested" / "model.json";
  save_model(path, m);
  const auto loaded = load_model(path);
  CHECK(model_to_json(loaded).dump() == model_to_json(m).dump());
  CHECK(loaded.arrivals == m.arrivals);
  CHECK(loaded.patterns == m.patterns);
  CHECK(loaded.service == m.service);
  CHECK(loaded.gaps == m.gaps);
  CHECK(loaded.profiles == m.profiles);
  CHECK(loaded.routing == m.routing);
  CHECK(loaded.classes == m.classes);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bundle errors are input errors") {
  CHECK_THROWS_WITH_AS(load_model("/nonexistent/model.json"), doctest::Contains("model bundle not found"), InputError);

  auto j = model_to_json(small_model());
  j["schema_version"] = 2;
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("schema_version"), InputError);
  j = model_to_json(small_model());
  j.erase("service");
  CHECK_THROWS_AS(model_from_json(j), InputError);

  const auto bad = std::filesystem::temp_directory_path() / "uq_bad_bundle.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(load_model(bad), InputError);
  std::filesystem::remove(bad);
}
