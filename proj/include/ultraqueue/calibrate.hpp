#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ultraqueue/classify.hpp"
#include "ultraqueue/eventlog.hpp"
#include "ultraqueue/policy.hpp"

namespace uq {

/// Hourly Poisson rates per (class, day kind, hour of the horizon).
struct ArrivalRateTable {
  Horizon horizon;
  int n_classes = 0;
  std::array<Eigen::MatrixXd, kDayKinds> rate;  // classes x horizon hours
  std::array<int, kDayKinds> days{};            // observed days of each kind

  bool has(DayKind k) const { return days[index_of(k)] > 0; }
  double at(int cls, DayKind k, int hour) const {
    return rate[index_of(k)](cls, hour - horizon.start_hour);
  }
  bool operator==(const ArrivalRateTable&) const = default;
};

ArrivalRateTable estimate_arrival_rates(const std::vector<PatientRecord>& log,
                                        const std::vector<int>& record_class, int n_classes,
                                        Horizon horizon, std::vector<std::string>* warnings = nullptr);

/// Open hours of every room on one observed day, kept whole so that
/// correlations between rooms survive resampling.
struct DayPattern {
  std::string day_id;
  DayKind kind = DayKind::weekday;
  std::vector<std::uint64_t> open_hours;  // per room index, bit h = open during hour h

  bool is_open(int room_index, int hour) const {
    return hour >= 0 && hour < 64 && ((open_hours[room_index] >> hour) & 1U);
  }
  bool operator==(const DayPattern&) const = default;
};

struct OpenPatternLibrary {
  std::vector<int> rooms;  // ascending room ids
  std::vector<DayPattern> days;

  /// Indices of days of the kind; all days when none of that kind exist.
  std::vector<int> days_of_kind(DayKind kind) const;
  bool operator==(const OpenPatternLibrary&) const = default;
};

/// A room is open in hour h on day d iff one of its services on d overlaps h.
OpenPatternLibrary estimate_open_patterns(const std::vector<PatientRecord>& log,
                                          const std::vector<int>& rooms);

/// Empirical service durations keyed by (room, start hour, class) with the
/// fallback chain room/hour/class -> type/hour/class -> type/class -> class.
class ServiceTable {
 public:
  using Sample = std::vector<Seconds>;
  using CellKey = std::tuple<int, int, int>;  // (room index, hour, class)

  ServiceTable() = default;
  ServiceTable(std::vector<int> rooms, std::vector<int> room_types, int n_types, int n_classes,
               std::map<CellKey, Sample> cells);

  struct Lookup {
    const Sample* sample = nullptr;
    int level = 0;  // 1 = room/hour/class ... 4 = class
  };
  Lookup lookup(int room_index, int hour, int cls) const;

  const std::vector<int>& rooms() const { return rooms_; }
  const std::vector<int>& room_types() const { return room_types_; }
  int n_types() const { return n_types_; }
  int n_classes() const { return n_classes_; }
  const std::map<CellKey, Sample>& cells() const { return cells_; }
  bool operator==(const ServiceTable& o) const {
    return rooms_ == o.rooms_ && room_types_ == o.room_types_ && n_types_ == o.n_types_ &&
           n_classes_ == o.n_classes_ && cells_ == o.cells_;
  }

 private:
  std::vector<int> rooms_;
  std::vector<int> room_types_;
  int n_types_ = 0;
  int n_classes_ = 0;
  std::map<CellKey, Sample> cells_;
  std::map<CellKey, Sample> by_type_hour_;          // (type, hour, class)
  std::map<std::pair<int, int>, Sample> by_type_;   // (type, class)
  std::vector<Sample> by_class_;
};

ServiceTable estimate_service_table(const std::vector<PatientRecord>& log,
                                    const std::vector<int>& record_class,
                                    const std::vector<PatientClass>& classes,
                                    const RoomTypeModel& types);

struct GapCell {
  int busy_handoffs = 0;
  std::vector<Seconds> breaks;  // sorted
  int idle_starts = 0;
  std::vector<Seconds> walks;   // sorted
  bool operator==(const GapCell&) const = default;
};

/// Break and walk behaviour per (room type, hour). Cells with no handoffs fall
/// back to the type's pooled cell, then to the pooled cell of all types.
class GapModel {
 public:
  GapModel() = default;
  GapModel(Seconds threshold, int n_types, std::map<std::pair<int, int>, GapCell> cells);

  Seconds threshold() const { return threshold_; }
  int n_types() const { return n_types_; }
  const std::map<std::pair<int, int>, GapCell>& cells() const { return cells_; }

  double break_probability(int type, int hour) const;
  const std::vector<Seconds>& break_sample(int type, int hour) const;
  double walk_probability(int type, int hour) const;
  const std::vector<Seconds>& walk_sample(int type, int hour) const;

  bool operator==(const GapModel& o) const {
    return threshold_ == o.threshold_ && n_types_ == o.n_types_ && cells_ == o.cells_;
  }

 private:
  const GapCell& resolve(int type, int hour, bool breaks) const;

  Seconds threshold_ = 10;
  int n_types_ = 0;
  std::map<std::pair<int, int>, GapCell> cells_;
  std::vector<GapCell> by_type_;
  GapCell pooled_;
};

/// Consecutive services per room and day: a busy handoff (next patient already
/// waiting) with a gap above the threshold is a break; an idle start (next
/// patient arrives after the previous service ended) with a delay above the
/// threshold is a walk.
GapModel estimate_gaps(const std::vector<PatientRecord>& log, const RoomTypeModel& types,
                       Seconds threshold = 10);

/// Attributes replayed for simulated patients of a class.
struct PatientProfile {
  double age = 0.0;
  std::string department;
  std::vector<std::string> items;
  bool operator==(const PatientProfile&) const = default;
};

struct CalibrationConfig {
  Horizon horizon;
  std::vector<int> rooms;  // empty: rooms observed in the log
  int n_item_clusters = 5;
  int n_room_types = 4;
  Seconds threshold_seconds = 10;
  std::uint64_t seed = 0;
  int profile_pool = 200;
  GmmOptions gmm;
  bool train_routing = true;
  unsigned threads = 1;
};

struct CalibratedModel {
  static constexpr int kSchemaVersion = 1;

  std::string source_digest;
  std::uint64_t seed = 0;
  Horizon horizon;
  ItemGroupModel groups;
  RoomTypeModel room_types;
  std::vector<PatientClass> classes;
  ArrivalRateTable arrivals;
  OpenPatternLibrary patterns;
  ServiceTable service;
  GapModel gaps;
  std::vector<std::vector<PatientProfile>> profiles;  // per class
  std::optional<RoutingPolicy> routing;

  /// Throws CalibrationError on dangling references between tables.
  void validate() const;
};

/// Class index of every record (group, age bucket, gender).
std::vector<int> record_classes(const ItemGroupModel& groups, const std::vector<PatientClass>& classes,
                                const std::vector<PatientRecord>& log);

struct BuildResult {
  CalibratedModel model;
  std::optional<RoutingEvaluation> evaluation;
  std::vector<std::string> warnings;
};

BuildResult build_model(const std::vector<PatientRecord>& log, const CalibrationConfig& config);

}  // namespace uq
