#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "ultraqueue/bundle.hpp"
#include "ultraqueue/calibrate.hpp"
#include "ultraqueue/scenario.hpp"

using namespace uq;
using uq::testing::data_path;
using uq::testing::hms;
using uq::testing::record;

namespace {

RoomTypeModel single_type(std::vector<int> rooms) {
  RoomTypeModel m;
  m.rooms = rooms;
  m.members = {rooms};
  for (int r : rooms) m.room_type[r] = 0;
  return m;
}

std::string weekday(int i) {
  // 2024-01-01 is a Monday; i < 20 stays in January.
  const int day = 1 + (i / 5) * 7 + i % 5;
  return (day < 10 ? "2024-01-0" : "2024-01-") + std::to_string(day);
}

const std::vector<PatientRecord>& center_log() {
  static const auto log = synthesize_log(load_scenario(data_path("scenarios/center.json")), 30, 5).records;
  return log;
}

}  // namespace

TEST_CASE("arrival rate is the cell count divided by days of that kind") {
  std::vector<PatientRecord> log;
  for (int d = 0; d < 10; ++d) {
    for (int i = 0; i < 4; ++i) {
      log.push_back(record("p", 1, "09:15:00", "09:20:00", "09:30:00", {"A"}, weekday(d)));
    }
  }
  std::vector<std::string> warnings;
  const auto t = estimate_arrival_rates(log, std::vector<int>(log.size(), 0), 2, Horizon{}, &warnings);
  CHECK(t.days[0] == 10);
  CHECK_FALSE(t.has(DayKind::weekend));
  CHECK(t.at(0, DayKind::weekday, 9) == 4.0);
  CHECK(t.at(0, DayKind::weekday, 10) == 0.0);
  for (int h = 7; h < 17; ++h) CHECK(t.at(1, DayKind::weekday, h) == 0.0);
  CHECK(t.rate[0].rows() == 2);
  CHECK(t.rate[0].cols() == 10);
  CHECK_FALSE(warnings.empty());
}

TEST_CASE("estimated rate lies within three Poisson standard errors") {
  auto s = load_scenario(data_path("scenarios/single_room.json"));
  for (auto& kind : s.hourly_arrivals) std::fill(kind.begin(), kind.end(), 6.0);
  const auto log = synthesize_log(s, 200, 77).records;
  const auto t = estimate_arrival_rates(log, std::vector<int>(log.size(), 0), 1, Horizon{});
  const double days = t.days[0] + t.days[1];
  for (int h = 7; h < 17; ++h) {
    const double pooled = (t.at(0, DayKind::weekday, h) * t.days[0] + t.at(0, DayKind::weekend, h) * t.days[1]) / days;
    CHECK(std::abs(pooled - 6.0) <= 3.0 * std::sqrt(6.0 / days));
  }
}

TEST_CASE("open hours follow the overlap rule") {
  std::vector<PatientRecord> log = {
      record("a", 1, "09:00:00", "09:10:00", "09:50:00"),
      record("b", 2, "09:00:00", "09:55:00", "10:20:00"),
  };
  const auto lib = estimate_open_patterns(log, {1, 2, 3});
  REQUIRE(lib.days.size() == 1);
  const auto& d = lib.days[0];
  CHECK(d.open_hours[0] == (1ULL << 9));
  CHECK(d.open_hours[1] == ((1ULL << 9) | (1ULL << 10)));
  CHECK(d.open_hours[2] == 0);
  CHECK(d.is_open(1, 10));
  CHECK_FALSE(d.is_open(2, 9));
  CHECK(lib.days_of_kind(DayKind::weekday) == std::vector<int>{0});
  // No weekend days observed: every day is eligible.
  CHECK(lib.days_of_kind(DayKind::weekend) == std::vector<int>{0});
}

TEST_CASE("service lookup walks the fallback chain") {
  std::map<ServiceTable::CellKey, ServiceTable::Sample> cells;
  cells[{0, 9, 0}] = {240, 360};
  cells[{2, 11, 1}] = {500};
  const ServiceTable t({1, 2, 3}, {0, 0, 1}, 2, 2, cells);
  auto l = t.lookup(0, 9, 0);
  CHECK(l.level == 1);
  CHECK(*l.sample == std::vector<Seconds>{240, 360});
  CHECK(t.lookup(1, 9, 0).level == 2);
  CHECK(t.lookup(1, 13, 0).level == 3);
  CHECK(t.lookup(2, 9, 0).level == 4);
  CHECK(t.lookup(0, 9, 1).level == 4);
  CHECK(*t.lookup(0, 9, 1).sample == std::vector<Seconds>{500});
}

TEST_CASE("service samples: class without observations is an error, large cells match the mean") {
  Rng rng(3);
  std::vector<PatientRecord> log;
  for (int i = 0; i < 400; ++i) {
    auto r = record("p" + std::to_string(i), 1, "09:00:00", "09:00:00", "09:00:00");
    r.service_end_ts = r.service_start_ts + uq::testing::rounded_exponential(rng, 600.0);
    log.push_back(r);
  }
  const std::vector<int> cls(log.size(), 0);
  const std::vector<PatientClass> one = {{0, 0, Gender::female}};
  const auto t = estimate_service_table(log, cls, one, single_type({1}));
  const auto& s = *t.lookup(0, 9, 0).sample;
  CHECK(s.size() == 400);
  CHECK(std::is_sorted(s.begin(), s.end()));
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
  CHECK(std::abs(mean - 600.0) < 60.0);

  const std::vector<PatientClass> two = {{0, 0, Gender::female}, {1, 0, Gender::female}};
  CHECK_THROWS_WITH_AS(estimate_service_table(log, cls, two, single_type({1})), doctest::Contains("P2"),
                       CalibrationError);
}

TEST_CASE("breaks and walks from consecutive services") {
  const auto types = single_type({1});
  SUBCASE("busy handoff with a long gap is a break") {
    std::vector<PatientRecord> log = {record("a", 1, "09:40:00", "09:45:00", "10:00:00"),
                                      record("b", 1, "09:50:00", "10:03:00", "10:10:00")};
    const auto g = estimate_gaps(log, types);
    const auto& cell = g.cells().at({0, 10});
    CHECK(cell.busy_handoffs == 1);
    CHECK(cell.breaks == std::vector<Seconds>{180});
    CHECK(g.break_probability(0, 10) == 1.0);
  }
  SUBCASE("idle start with a delay is a walk") {
    std::vector<PatientRecord> log = {record("a", 1, "09:40:00", "09:45:00", "10:00:00"),
                                      record("b", 1, "10:05:00", "10:06:00", "10:10:00")};
    const auto g = estimate_gaps(log, types);
    const auto& cell = g.cells().at({0, 10});
    CHECK(cell.idle_starts == 1);
    CHECK(cell.walks == std::vector<Seconds>{60});
    CHECK(g.walk_probability(0, 10) == 1.0);
  }
  SUBCASE("gap below the threshold is no break") {
    std::vector<PatientRecord> log = {record("a", 1, "09:40:00", "09:45:00", "10:00:00"),
                                      record("b", 1, "09:50:00", "10:00:08", "10:10:00")};
    const auto g = estimate_gaps(log, types);
    CHECK(g.cells().at({0, 10}).busy_handoffs == 1);
    CHECK(g.cells().at({0, 10}).breaks.empty());
    CHECK(g.break_probability(0, 10) == 0.0);
    CHECK(estimate_gaps(log, types, 5).cells().at({0, 10}).breaks == std::vector<Seconds>{8});
  }
}

TEST_CASE("handoffs reconcile with consecutive pairs and probabilities stay in range") {
  const auto& log = center_log();
  CalibrationConfig cfg;
  cfg.train_routing = false;
  const auto model = build_model(log, cfg).model;

  std::map<std::pair<std::string, int>, int> per_room_day;
  for (const auto& r : log) per_room_day[{r.day_id, r.room_id}]++;
  int pairs = 0;
  for (auto& [k, n] : per_room_day) pairs += n - 1;
  int classified = 0;
  for (const auto& [key, cell] : model.gaps.cells()) {
    classified += cell.busy_handoffs + cell.idle_starts;
    CHECK(static_cast<int>(cell.breaks.size()) <= cell.busy_handoffs);
    CHECK(static_cast<int>(cell.walks.size()) <= cell.idle_starts);
    for (Seconds b : cell.breaks) CHECK(b > model.gaps.threshold());
  }
  CHECK(classified == pairs);
  for (int t = 0; t < model.gaps.n_types(); ++t) {
    for (int h = 7; h < 17; ++h) {
      CHECK(model.gaps.break_probability(t, h) >= 0.0);
      CHECK(model.gaps.break_probability(t, h) <= 1.0);
    }
  }
}

TEST_CASE("build_model: shapes, partition of rates, non-empty fallback samples") {
  const auto& log = center_log();
  CalibrationConfig cfg;
  cfg.train_routing = false;
  const auto result = build_model(log, cfg);
  const auto& m = result.model;
  CHECK(m.groups.n_groups() == 6);
  CHECK(m.room_types.n_types() == 4);
  CHECK_FALSE(m.routing.has_value());
  const auto n_classes = static_cast<Eigen::Index>(m.classes.size());
  for (int k = 0; k < kDayKinds; ++k) {
    CHECK(m.arrivals.rate[k].rows() == n_classes);
    CHECK(m.arrivals.rate[k].cols() == 10);
  }
  CHECK(m.profiles.size() == m.classes.size());

  // Class rates sum to the overall hourly rate.
  std::array<std::vector<double>, kDayKinds> total{std::vector<double>(10, 0.0), std::vector<double>(10, 0.0)};
  for (const auto& r : log) {
    if (Horizon{}.contains_hour(hour_of(r.arrival_ts))) total[index_of(day_kind_of(r.day_id))][hour_of(r.arrival_ts) - 7] += 1;
  }
  for (int k = 0; k < kDayKinds; ++k) {
    for (int h = 0; h < 10; ++h) {
      CHECK(m.arrivals.rate[k].col(h).sum() == doctest::Approx(total[k][h] / m.arrivals.days[k]));
    }
  }

  for (std::size_t room = 0; room < m.service.rooms().size(); ++room) {
    for (int h = 7; h < 17; ++h) {
      for (int c = 0; c < static_cast<int>(m.classes.size()); ++c) {
        const auto l = m.service.lookup(static_cast<int>(room), h, c);
        REQUIRE(l.sample != nullptr);
        CHECK_FALSE(l.sample->empty());
      }
    }
  }
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("calibration is a pure function of log, config and seed") {
  const auto& log = center_log();
  CalibrationConfig cfg;
  cfg.seed = 4;
  cfg.threads = 1;
  const auto a = build_model(log, cfg);
  cfg.threads = 4;
  const auto b = build_model(log, cfg);
  REQUIRE(a.model.routing.has_value());
  CHECK(model_to_json(a.model) == model_to_json(b.model));
  CHECK(model_to_json(model_from_json(model_to_json(a.model))).dump() == model_to_json(a.model).dump());
}

TEST_CASE("empty log and unknown rooms are input errors") {
  CalibrationConfig cfg;
  CHECK_THROWS_AS(build_model({}, cfg), InputError);
  cfg.rooms = {1, 2};
  CHECK_THROWS_AS(build_model({record("x", 7, "09:00:00", "09:00:00", "09:05:00")}, cfg), InputError);
}
