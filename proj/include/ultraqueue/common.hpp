#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uq {

/// Seconds since local midnight of the record's day.
using Seconds = std::int64_t;

inline constexpr Seconds kSecondsPerHour = 3600;

enum class Gender { male, female };
enum class DayKind { weekday, weekend };

inline constexpr int kDayKinds = 2;

inline int index_of(DayKind kind) { return kind == DayKind::weekday ? 0 : 1; }

std::string to_string(Gender g);
std::string to_string(DayKind k);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<DayKind> parse_day_kind(std::string_view s);

/// Bad user input: missing files, malformed rows, invalid configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A calibration step could not produce a usable estimate.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Half-open simulation window in whole hours, [start_hour, end_hour).
struct Horizon {
  int start_hour = 7;
  int end_hour = 17;

  Seconds start() const { return start_hour * kSecondsPerHour; }
  Seconds end() const { return end_hour * kSecondsPerHour; }
  int hours() const { return end_hour - start_hour; }
  bool contains_hour(int h) const { return h >= start_hour && h < end_hour; }
  bool operator==(const Horizon&) const = default;
};

inline int hour_of(Seconds t) { return static_cast<int>(t / kSecondsPerHour); }

/// "HH:MM:SS"; hours past 23 are allowed for drain periods.
std::string format_hms(Seconds t);
std::optional<Seconds> parse_hms(std::string_view s);

// Age buckets are half-open [lo, hi); the last one is unbounded.
inline constexpr std::array<double, 10> kAgeLowerBounds = {0.0,  0.5,  5.5,  10.5, 20.5,
                                                           30.5, 40.5, 50.5, 60.5, 70.5};
inline constexpr int kAgeBuckets = static_cast<int>(kAgeLowerBounds.size());

int age_bucket(double age);

/// Calendar helpers over ISO "YYYY-MM-DD" day identifiers.
std::optional<int> weekday_of(std::string_view day_id);  // 0 = Monday
DayKind day_kind_of(std::string_view day_id);
std::string add_days(std::string_view day_id, int days);
bool is_iso_date(std::string_view day_id);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, char sep);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace uq
