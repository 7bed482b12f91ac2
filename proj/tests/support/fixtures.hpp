#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ultraqueue/engine.hpp"
#include "ultraqueue/eventlog.hpp"
#include "ultraqueue/scenario.hpp"

namespace uq::testing {

inline std::string data_path(const std::string& rel) { return std::string(UQ_DATA_DIR) + "/" + rel; }

inline Seconds hms(const char* s) { return *parse_hms(s); }

inline PatientRecord record(std::string id, int room, const char* arrival, const char* start, const char* end,
                            std::vector<std::string> items = {"A"}, std::string day = "2024-01-01") {
  PatientRecord r;
  r.patient_id = std::move(id);
  r.age = 30.0;
  r.department = "Gynecology";
  r.exam_items = std::move(items);
  r.arrival_ts = hms(arrival);
  r.service_start_ts = hms(start);
  r.service_end_ts = hms(end);
  r.room_id = room;
  r.day_id = std::move(day);
  return r;
}

/// Rooms of one type with explicit open intervals; arrivals and service
/// durations come from callbacks, gaps are fixed.
class QueueInputs : public SimulationInputs {
 public:
  using ArrivalFn = std::function<std::vector<Seconds>(const DayContext&, Rng&)>;
  using ServiceFn = std::function<Seconds(int room, const SimPatient&, Rng&)>;

  QueueInputs(int n_rooms, ArrivalFn arrivals, ServiceFn service)
      : n_rooms_(n_rooms), arrivals_(std::move(arrivals)), service_(std::move(service)) {}

  /// Open interval used for every room on every day; defaults to the horizon.
  std::vector<OpenInterval> intervals;
  Seconds break_seconds = 0;
  Seconds walk_seconds = 0;

  std::vector<int> room_ids() const override {
    std::vector<int> ids(n_rooms_);
    for (int i = 0; i < n_rooms_; ++i) ids[i] = i + 1;
    return ids;
  }
  std::vector<int> room_types() const override { return std::vector<int>(n_rooms_, 0); }

  std::vector<SimPatient> arrivals(const DayContext& day, Rng& rng) const override {
    std::vector<SimPatient> out;
    const auto times = arrivals_(day, rng);
    for (std::size_t i = 0; i < times.size(); ++i) {
      SimPatient p;
      p.patient_id = day.day_id + "-" + std::to_string(i);
      p.class_index = 0;
      p.items = {"A"};
      p.arrival = times[i];
      out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<std::vector<OpenInterval>> open_schedule(const DayContext& day, Rng&) const override {
    std::vector<OpenInterval> iv = intervals;
    if (iv.empty() && !closed_all_day) iv.push_back({day.horizon.start(), day.horizon.end()});
    return std::vector<std::vector<OpenInterval>>(n_rooms_, iv);
  }

  Seconds service(int room, int, const SimPatient& p, Rng& rng) const override { return service_(room, p, rng); }
  Seconds break_duration(int, int, Rng&) const override { return break_seconds; }
  Seconds walk_duration(int, int, Rng&) const override { return walk_seconds; }

  bool closed_all_day = false;

 private:
  int n_rooms_;
  ArrivalFn arrivals_;
  ServiceFn service_;
};

/// Lowest-index open room, or hold.
class FirstOpenRouter : public Router {
 public:
  int route(const SimState& state, const SimPatient&, Rng&) const override {
    for (std::size_t i = 0; i < state.rooms.size(); ++i) {
      if (state.rooms[i].open) return static_cast<int>(i);
    }
    return -1;
  }
};

inline Seconds rounded_exponential(Rng& rng, double mean) {
  return std::max<Seconds>(1, std::llround(rng.exponential(mean)));
}

/// Poisson arrivals at a constant rate over the day's horizon.
inline QueueInputs::ArrivalFn poisson_arrivals(double per_hour) {
  return [per_hour](const DayContext& day, Rng& rng) {
    std::vector<double> rates(day.horizon.hours(), per_hour);
    return nhpp_times(rates, day.horizon, rng);
  };
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> n_ij;
  std::map<int, double> n_a, n_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    n_ij[{a[i], b[i]}] += 1;
    n_a[a[i]] += 1;
    n_b[b[i]] += 1;
  }
  auto c2 = [](double n) { return n * (n - 1) / 2; };
  double s_ij = 0, s_a = 0, s_b = 0;
  for (auto& [k, v] : n_ij) s_ij += c2(v);
  for (auto& [k, v] : n_a) s_a += c2(v);
  for (auto& [k, v] : n_b) s_b += c2(v);
  const double expected = s_a * s_b / c2(static_cast<double>(a.size()));
  const double max_index = (s_a + s_b) / 2;
  if (max_index == expected) return 1.0;
  return (s_ij - expected) / (max_index - expected);
}

/// Direct ECDF enumeration over the merged support.
template <typename T>
double ks_brute_force(const std::vector<T>& x, const std::vector<T>& y) {
  std::vector<T> support(x);
  support.insert(support.end(), y.begin(), y.end());
  double d = 0;
  for (const T& v : support) {
    const double fx = static_cast<double>(std::count_if(x.begin(), x.end(), [&](T u) { return u <= v; })) / x.size();
    const double fy = static_cast<double>(std::count_if(y.begin(), y.end(), [&](T u) { return u <= v; })) / y.size();
    d = std::max(d, std::abs(fx - fy));
  }
  return d;
}

/// Pairwise Mann-Whitney AUC, ties counted one half.
inline double auc_brute_force(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace uq::testing
