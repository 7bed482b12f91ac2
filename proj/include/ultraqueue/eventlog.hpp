#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ultraqueue/common.hpp"

namespace uq {

/// One exam visit as it appears in the canonical event log.
struct PatientRecord {
  std::string patient_id;
  Gender gender = Gender::female;
  double age = 0.0;
  std::string department;
  std::vector<std::string> exam_items;
  Seconds arrival_ts = 0;
  Seconds service_start_ts = 0;
  Seconds service_end_ts = 0;
  int room_id = 0;
  std::string technician_id;  // empty when unknown
  std::string day_id;

  Seconds wait() const { return service_start_ts - arrival_ts; }
  Seconds service() const { return service_end_ts - service_start_ts; }
  Seconds sojourn() const { return service_end_ts - arrival_ts; }
  bool multi_item() const { return exam_items.size() > 1; }

  bool operator==(const PatientRecord&) const = default;
};

/// Registration-desk export: item and report timestamps.
struct RawRecordA {
  std::string patient_id;
  std::string department;
  std::vector<std::string> exam_items;
  Seconds registration_ts = 0;
  Seconds service_calling_ts = 0;
  std::optional<Seconds> report_generation_ts;
  std::optional<Seconds> report_verification_ts;
  std::string day_id;

  bool operator==(const RawRecordA&) const = default;
};

/// Queueing-system export: demographics, room and queue timestamps.
struct RawRecordB {
  std::string patient_id;
  Gender gender = Gender::female;
  double age = 0.0;
  std::string technician_id;
  int room_id = 0;
  Seconds queue_start_ts = 0;
  Seconds queue_end_ts = 0;
  std::string day_id;

  bool operator==(const RawRecordB&) const = default;
};

struct RoomUniverse {
  int first = 1;
  int last = 32;
  bool contains(int room) const { return room >= first && room <= last; }
};

/// Row that parsed but violated a record invariant.
struct Rejection {
  std::size_t row = 0;  // 1-based data row, header excluded
  std::string field;
  std::string reason;
};

struct ParseResult {
  std::vector<PatientRecord> records;
  std::vector<Rejection> rejections;
};

/// Malformed input row; names the row and the offending field.
class LogFormatError : public InputError {
 public:
  LogFormatError(std::size_t row, std::string field, const std::string& what)
      : InputError("row " + std::to_string(row) + ", field '" + field + "': " + what),
        row_(row),
        field_(std::move(field)) {}
  std::size_t row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t row_;
  std::string field_;
};

inline constexpr const char* kCanonicalHeader =
    "patient_id,gender,age,department,exam_items,arrival_ts,service_start_ts,service_end_ts,"
    "room_id,technician_id,day_id";

ParseResult parse_log_text(std::string_view text, RoomUniverse universe = {});
ParseResult parse_log(const std::filesystem::path& path, RoomUniverse universe = {});

std::string serialize_log(const std::vector<PatientRecord>& records);
void write_log(const std::filesystem::path& path, const std::vector<PatientRecord>& records);

/// Checks arrival <= start <= end, room in universe, non-empty items.
std::optional<std::string> check_record(const PatientRecord& r, RoomUniverse universe = {});

struct MergeResult {
  std::vector<PatientRecord> records;
  std::vector<std::size_t> unmatched_a;   // indices into a
  std::vector<std::size_t> unmatched_b;   // indices into b
  std::vector<std::size_t> ambiguous_a;
  std::vector<std::size_t> ambiguous_b;
  std::vector<std::size_t> rejected_a;    // missing report time or ordering violation
  /// For each merged record, the source indices it came from.
  std::vector<std::pair<std::size_t, std::size_t>> sources;
};

/// Joins the two exports on (patient_id, day, registration = queue start,
/// service calling = queue end).
MergeResult merge_sources(const std::vector<RawRecordA>& a, const std::vector<RawRecordB>& b);

/// Distinct day ids in first-appearance order.
std::vector<std::string> distinct_days(const std::vector<PatientRecord>& records);

/// CSV cell splitting with RFC 4180 quotes.
std::vector<std::string> split_csv_row(std::string_view line);
std::string csv_escape(const std::string& cell);

}  // namespace uq
