#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "ultraqueue/scenario.hpp"

using namespace uq;
using uq::testing::data_path;

TEST_CASE("zero arrival rates give an empty log") {
  auto s = load_scenario(data_path("scenarios/single_room.json"));
  for (auto& kind : s.hourly_arrivals) std::fill(kind.begin(), kind.end(), 0.0);
  CHECK(synthesize_log(s, 5, 1).records.empty());
}

TEST_CASE("single room at 10/h for 100 days: total count within 3 standard errors of 10000") {
  const auto s = load_scenario(data_path("scenarios/single_room.json"));
  const auto result = synthesize_log(s, 100, 2024);
  int arrivals = 0;
  for (const auto& d : result.days) arrivals += d.arrivals;
  CHECK(std::abs(arrivals - 10000.0) <= 3.0 * std::sqrt(10000.0));
  CHECK(result.records.size() == static_cast<std::size_t>(arrivals));
}

TEST_CASE("fixed seed reproduces the log byte for byte, thread count included") {
  const auto s = load_scenario(data_path("scenarios/center.json"));
  const auto a = serialize_log(synthesize_log(s, 4, 9).records);
  CHECK(a == serialize_log(synthesize_log(s, 4, 9).records));
  CHECK(a == serialize_log(synthesize_log(s, 4, 9, 3).records));
  CHECK(a != serialize_log(synthesize_log(s, 4, 10).records));
}

TEST_CASE("scenario JSON round trips and validation names the problem") {
  const auto s = load_scenario(data_path("scenarios/center.json"));
  CHECK(to_json(scenario_from_json(to_json(s))) == to_json(s));

  auto j = to_json(s);
  j["items"][0]["probability"] = 0.9;
  CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("sum to 1"), InputError);
  j = to_json(s);
  j["schema_version"] = 2;
  CHECK_THROWS_AS(scenario_from_json(j), InputError);
  CHECK_THROWS_WITH_AS(load_scenario("/nonexistent/scenario.json"), doctest::Contains("scenario not found"), InputError);
  CHECK_THROWS_AS(synthesize_log(s, 0, 1), InputError);
}

TEST_CASE("coverage warning when an hour with arrivals can have every room closed") {
  auto s = load_scenario(data_path("scenarios/single_room.json"));
  CHECK(s.coverage_warnings().empty());
  s.rooms[0].weekday_shifts = {{7, 12, 1.0}};
  const auto w = s.coverage_warnings();
  CHECK(w.size() == 5);
  const auto result = synthesize_log(s, 3, 1, 1, "2024-01-01");
  CHECK_FALSE(result.warnings.empty());
  for (const auto& d : result.days) CHECK(d.unserved > 0);
}

TEST_CASE("ground-truth service means follow the multiplicative model") {
  const auto s = load_scenario(data_path("scenarios/center.json"));
  const ScenarioInputs in(s);
  SimPatient p;
  p.items = {"G"};
  p.group = 5;  // scenario patients carry their family as the group
  const int room = 6;  // room 7, type R3
  const double expected = s.families[5].service_mean * s.items[6].service_scale * s.type_service_factor[2] *
                          s.rooms[room].speed * s.hour_service_factor[2];
  CHECK(in.mean_service(room, 9, p) == doctest::Approx(expected));
  // Lognormal draws rounded to seconds keep the mean.
  Rng rng(3);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(in.service(room, 9, p, rng));
  CHECK(sum / n == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("break durations follow the shifted exponential with the stated probability") {
  const auto s = load_scenario(data_path("scenarios/center.json"));
  const ScenarioInputs in(s);
  Rng rng(5);
  int hits = 0;
  double total = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const Seconds b = in.break_duration(0, 9, rng);
    if (b > 0) {
      ++hits;
      total += static_cast<double>(b);
      CHECK(b >= static_cast<Seconds>(s.breaks.minimum));
    }
  }
  CHECK(hits / static_cast<double>(n) == doctest::Approx(s.breaks.probability).epsilon(0.03));
  CHECK(total / hits == doctest::Approx(s.breaks.mean).epsilon(0.03));
}
