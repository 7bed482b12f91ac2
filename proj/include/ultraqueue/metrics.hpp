#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "ultraqueue/eventlog.hpp"

namespace uq {

/// Time-averaged number of patients waiting in each horizon hour, averaged over days.
struct QueueLengthCurve {
  Horizon horizon;
  std::vector<double> values;  // one per horizon hour

  double mean() const;
};

/// Waiting intervals [arrival, start) swept as a step function; with
/// include_in_service the service interval [start, end) counts too.
QueueLengthCurve queue_length_curve(const std::vector<PatientRecord>& log, Horizon horizon,
                                    bool include_in_service = false);

/// Exact Kolmogorov-Smirnov distance between the empirical CDFs of two samples.
template <typename T>
double ks_two_sample(std::vector<T> x, std::vector<T> y) {
  if (x.empty() || y.empty()) throw InputError("ks_two_sample: empty sample");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() || j < y.size()) {
    // Advance both ECDFs past the next support point.
    T v;
    if (j >= y.size() || (i < x.size() && x[i] <= y[j])) {
      v = x[i];
    } else {
      v = y[j];
    }
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

/// Absolute and relative difference of a simulated value against a reference;
/// the relative difference is undefined when the reference is not positive.
struct Diff {
  double sim = 0.0;
  double ref = 0.0;
  double abs = 0.0;
  std::optional<double> rel;
};

Diff diff_of(double sim, double ref);

struct CellDiff {
  int key = 0;  // room type index or room id
  int hour = 0;
  Diff diff;    // patients routed per day
};

struct ValidationReport {
  Horizon horizon;
  int sim_days = 0;
  int ref_days = 0;
  std::vector<std::string> type_labels;
  QueueLengthCurve sim_queue, ref_queue;
  Diff mean_queue_length;
  Diff mean_wait_minutes;            // all served patients, drain included
  Diff mean_wait_minutes_truncated;  // patients starting service before the horizon ends
  Diff mean_sojourn_minutes;
  std::vector<Diff> wait_by_hour;    // mean wait in minutes by arrival hour
  double ks_wait = 0.0;
  double ks_wait_truncated = 0.0;
  std::vector<CellDiff> routed_by_type;  // (type, hour), types x horizon hours
  std::vector<CellDiff> routed_by_room;  // (room, hour)
  std::vector<Seconds> sim_waits;        // pooled, sorted
  std::vector<Seconds> ref_waits;
  bool include_in_service = false;
};

struct CompareOptions {
  Horizon horizon;
  std::map<int, int> room_type;          // room id -> type index
  std::vector<std::string> type_labels;  // defines the number of types
  bool include_in_service = false;
};

ValidationReport compare(const std::vector<PatientRecord>& sim, const std::vector<PatientRecord>& ref,
                         const CompareOptions& options);

nlohmann::json to_json(const ValidationReport& r);
ValidationReport report_from_json(const nlohmann::json& j);

/// Writes summary.csv, queue_length.csv, wait_by_hour.csv, routed_by_type.csv,
/// routed_by_room.csv and wait_histogram.csv into dir; returns the files written.
std::vector<std::filesystem::path> render_report(const ValidationReport& r, const std::filesystem::path& dir,
                                                 double bin_minutes = 5.0);

/// Histogram of waiting minutes; bin i covers [i*w, (i+1)*w).
std::vector<std::size_t> wait_histogram(std::span<const Seconds> waits, double bin_minutes, std::size_t bins);

}  // namespace uq
