#include "ultraqueue/eventlog.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace uq {

std::vector<std::string> split_csv_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::optional<std::string> check_record(const PatientRecord& r, RoomUniverse universe) {
  if (r.exam_items.empty()) return "exam_items is empty";
  if (r.arrival_ts > r.service_start_ts) return "service_start_ts precedes arrival_ts";
  if (r.service_start_ts > r.service_end_ts) return "service_end_ts precedes service_start_ts";
  if (!universe.contains(r.room_id)) return "room_id outside room universe";
  if (r.age < 0.0) return "negative age";
  return std::nullopt;
}

namespace {

enum Column {
  kPatientId,
  kGender,
  kAge,
  kDepartment,
  kExamItems,
  kArrival,
  kStart,
  kEnd,
  kRoom,
  kTechnician,
  kDay,
  kColumns
};

const char* const kColumnNames[kColumns] = {
    "patient_id",       "gender",         "age",     "department",    "exam_items", "arrival_ts",
    "service_start_ts", "service_end_ts", "room_id", "technician_id", "day_id"};

Seconds require_time(const std::vector<std::string>& cells, int col, std::size_t row) {
  auto t = parse_hms(cells[col]);
  if (!t) {
    throw LogFormatError(row, kColumnNames[col],
                         cells[col].empty() ? "missing timestamp" : "expected HH:MM:SS");
  }
  return *t;
}

}  // namespace

ParseResult parse_log_text(std::string_view text, RoomUniverse universe) {
  ParseResult result;
  std::size_t pos = 0;
  bool header_seen = false;
  std::size_t row = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != kCanonicalHeader) {
        throw LogFormatError(0, "header", "expected canonical header");
      }
      continue;
    }
    ++row;
    auto cells = split_csv_row(line);
    if (cells.size() != kColumns) {
      throw LogFormatError(row, "row",
                           "expected " + std::to_string(kColumns) + " fields, got " +
                               std::to_string(cells.size()));
    }
    PatientRecord r;
    r.patient_id = cells[kPatientId];
    if (r.patient_id.empty()) throw LogFormatError(row, "patient_id", "empty");
    auto g = parse_gender(cells[kGender]);
    if (!g) throw LogFormatError(row, "gender", "expected male or female");
    r.gender = *g;
    {
      const auto& s = cells[kAge];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), r.age);
      if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
        throw LogFormatError(row, "age", "expected a number");
      }
    }
    r.department = cells[kDepartment];
    for (auto& item : split(cells[kExamItems], ';')) {
      if (!item.empty()) r.exam_items.push_back(std::move(item));
    }
    r.arrival_ts = require_time(cells, kArrival, row);
    r.service_start_ts = require_time(cells, kStart, row);
    r.service_end_ts = require_time(cells, kEnd, row);
    {
      const auto& s = cells[kRoom];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), r.room_id);
      if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
        throw LogFormatError(row, "room_id", "expected an integer");
      }
    }
    r.technician_id = cells[kTechnician];
    r.day_id = cells[kDay];
    if (r.day_id.empty()) throw LogFormatError(row, "day_id", "empty");

    if (r.exam_items.empty()) {
      result.rejections.push_back({row, "exam_items", "exam_items is empty"});
    } else if (r.arrival_ts > r.service_start_ts) {
      result.rejections.push_back({row, "service_start_ts", "service start before arrival"});
    } else if (r.service_start_ts > r.service_end_ts) {
      result.rejections.push_back({row, "service_end_ts", "service end before service start"});
    } else if (!universe.contains(r.room_id)) {
      result.rejections.push_back({row, "room_id", "room outside universe"});
    } else if (r.age < 0.0) {
      result.rejections.push_back({row, "age", "negative age"});
    } else {
      result.records.push_back(std::move(r));
    }
  }
  return result;
}

ParseResult parse_log(const std::filesystem::path& path, RoomUniverse universe) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("log not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_log_text(ss.str(), universe);
}

std::string serialize_log(const std::vector<PatientRecord>& records) {
  std::string out = kCanonicalHeader;
  out.push_back('\n');
  for (const auto& r : records) {
    out += csv_escape(r.patient_id);
    out.push_back(',');
    out += to_string(r.gender);
    out.push_back(',');
    out += format_double(r.age);
    out.push_back(',');
    out += csv_escape(r.department);
    out.push_back(',');
    out += csv_escape(join(r.exam_items, ';'));
    out.push_back(',');
    out += format_hms(r.arrival_ts);
    out.push_back(',');
    out += format_hms(r.service_start_ts);
    out.push_back(',');
    out += format_hms(r.service_end_ts);
    out.push_back(',');
    out += std::to_string(r.room_id);
    out.push_back(',');
    out += csv_escape(r.technician_id);
    out.push_back(',');
    out += csv_escape(r.day_id);
    out.push_back('\n');
  }
  return out;
}

void write_log(const std::filesystem::path& path, const std::vector<PatientRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << serialize_log(records);
}

MergeResult merge_sources(const std::vector<RawRecordA>& a, const std::vector<RawRecordB>& b) {
  using Key = std::tuple<std::string, std::string, Seconds, Seconds>;
  MergeResult out;

  std::map<Key, std::vector<std::size_t>> a_by_key;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& r = a[i];
    if (!r.report_generation_ts || r.registration_ts > r.service_calling_ts ||
        r.service_calling_ts > *r.report_generation_ts || r.exam_items.empty()) {
      out.rejected_a.push_back(i);
      continue;
    }
    a_by_key[{r.patient_id, r.day_id, r.registration_ts, r.service_calling_ts}].push_back(i);
  }
  std::map<Key, std::vector<std::size_t>> b_by_key;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const auto& r = b[j];
    b_by_key[{r.patient_id, r.day_id, r.queue_start_ts, r.queue_end_ts}].push_back(j);
  }

  std::set<std::size_t> used_b;
  for (const auto& [key, as] : a_by_key) {
    auto it = b_by_key.find(key);
    if (it == b_by_key.end()) {
      out.unmatched_a.insert(out.unmatched_a.end(), as.begin(), as.end());
      continue;
    }
    const auto& bs = it->second;
    for (auto j : bs) used_b.insert(j);
    if (as.size() > 1 || bs.size() > 1) {
      out.ambiguous_a.insert(out.ambiguous_a.end(), as.begin(), as.end());
      out.ambiguous_b.insert(out.ambiguous_b.end(), bs.begin(), bs.end());
      continue;
    }
    const auto& ra = a[as.front()];
    const auto& rb = b[bs.front()];
    PatientRecord r;
    r.patient_id = ra.patient_id;
    r.gender = rb.gender;
    r.age = rb.age;
    r.department = ra.department;
    r.exam_items = ra.exam_items;
    r.arrival_ts = ra.registration_ts;
    r.service_start_ts = ra.service_calling_ts;
    r.service_end_ts = *ra.report_generation_ts;
    r.room_id = rb.room_id;
    r.technician_id = rb.technician_id;
    r.day_id = ra.day_id;
    out.records.push_back(std::move(r));
    out.sources.emplace_back(as.front(), bs.front());
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (!used_b.count(j)) out.unmatched_b.push_back(j);
  }
  // Merged rows follow the order of export A.
  std::vector<std::size_t> order(out.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto x, auto y) { return out.sources[x].first < out.sources[y].first; });
  std::vector<PatientRecord> records;
  std::vector<std::pair<std::size_t, std::size_t>> sources;
  for (auto i : order) {
    records.push_back(std::move(out.records[i]));
    sources.push_back(out.sources[i]);
  }
  out.records = std::move(records);
  out.sources = std::move(sources);
  std::sort(out.unmatched_a.begin(), out.unmatched_a.end());
  std::sort(out.ambiguous_a.begin(), out.ambiguous_a.end());
  std::sort(out.ambiguous_b.begin(), out.ambiguous_b.end());
  return out;
}

std::vector<std::string> distinct_days(const std::vector<PatientRecord>& records) {
  std::vector<std::string> days;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.day_id).second) days.push_back(r.day_id);
  }
  return days;
}

}  // namespace uq
