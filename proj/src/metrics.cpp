#include "ultraqueue/metrics.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace uq {

double QueueLengthCurve::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

QueueLengthCurve queue_length_curve(const std::vector<PatientRecord>& log, Horizon horizon,
                                    bool include_in_service) {
  QueueLengthCurve c;
  c.horizon = horizon;
  c.values.assign(horizon.hours(), 0.0);
  std::map<std::string, std::vector<std::pair<Seconds, int>>> steps;
  for (const auto& r : log) {
    const Seconds leave = include_in_service ? r.service_end_ts : r.service_start_ts;
    if (leave <= r.arrival_ts) continue;
    auto& s = steps[r.day_id];
    s.emplace_back(r.arrival_ts, +1);
    s.emplace_back(leave, -1);
  }
  if (steps.empty()) return c;
  std::vector<long long> area(horizon.hours(), 0);
  for (auto& [day, s] : steps) {
    std::sort(s.begin(), s.end());
    long long level = 0;
    Seconds t = s.front().first;
    for (const auto& [time, delta] : s) {
      // Credit `level` over [t, time) to the horizon hours it overlaps.
      for (Seconds a = std::max(t, horizon.start()); a < std::min(time, horizon.end());) {
        const int h = hour_of(a);
        const Seconds b = std::min<Seconds>(time, (h + 1) * kSecondsPerHour);
        area[h - horizon.start_hour] += level * (b - a);
        a = b;
      }
      level += delta;
      t = time;
    }
  }
  std::set<std::string> days;
  for (const auto& r : log) days.insert(r.day_id);
  const double denom = static_cast<double>(kSecondsPerHour) * static_cast<double>(days.size());
  for (int h = 0; h < horizon.hours(); ++h) c.values[h] = static_cast<double>(area[h]) / denom;
  return c;
}

Diff diff_of(double sim, double ref) {
  Diff d{sim, ref, std::abs(sim - ref), std::nullopt};
  if (ref > 0.0) d.rel = d.abs / ref;
  return d;
}

namespace {

int day_count(const std::vector<PatientRecord>& log) {
  std::set<std::string> days;
  for (const auto& r : log) days.insert(r.day_id);
  return static_cast<int>(days.size());
}

double mean_minutes(const std::vector<Seconds>& v) {
  if (v.empty()) return 0.0;
  return static_cast<double>(std::accumulate(v.begin(), v.end(), Seconds{0})) / static_cast<double>(v.size()) / 60.0;
}

struct Side {
  std::vector<Seconds> waits, waits_truncated, sojourns;
  std::vector<std::vector<Seconds>> waits_by_hour;
  std::map<std::pair<int, int>, double> by_type, by_room;
  int days = 0;
};

Side summarize(const std::vector<PatientRecord>& log, const CompareOptions& o) {
  Side s;
  s.days = day_count(log);
  s.waits_by_hour.resize(o.horizon.hours());
  for (const auto& r : log) {
    s.waits.push_back(r.wait());
    s.sojourns.push_back(r.sojourn());
    if (r.service_start_ts < o.horizon.end()) s.waits_truncated.push_back(r.wait());
    const int h = hour_of(r.arrival_ts);
    if (!o.horizon.contains_hour(h)) continue;
    s.waits_by_hour[h - o.horizon.start_hour].push_back(r.wait());
    if (auto it = o.room_type.find(r.room_id); it != o.room_type.end()) s.by_type[{it->second, h}] += 1.0;
    s.by_room[{r.room_id, h}] += 1.0;
  }
  if (s.days > 0) {
    for (auto& [k, v] : s.by_type) v /= s.days;
    for (auto& [k, v] : s.by_room) v /= s.days;
  }
  std::sort(s.waits.begin(), s.waits.end());
  return s;
}

nlohmann::json diff_json(const Diff& d) {
  nlohmann::json j = {{"sim", d.sim}, {"ref", d.ref}, {"abs", d.abs}};
  j["rel"] = d.rel ? nlohmann::json(*d.rel) : nlohmann::json(nullptr);
  return j;
}

Diff diff_from(const nlohmann::json& j) {
  Diff d{j.at("sim").get<double>(), j.at("ref").get<double>(), j.at("abs").get<double>(), std::nullopt};
  if (!j.at("rel").is_null()) d.rel = j.at("rel").get<double>();
  return d;
}

nlohmann::json cells_json(const std::vector<CellDiff>& cells) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : cells) a.push_back({{"key", c.key}, {"hour", c.hour}, {"diff", diff_json(c.diff)}});
  return a;
}

std::vector<CellDiff> cells_from(const nlohmann::json& j) {
  std::vector<CellDiff> out;
  for (const auto& c : j) out.push_back({c.at("key").get<int>(), c.at("hour").get<int>(), diff_from(c.at("diff"))});
  return out;
}

std::string rel_cell(const Diff& d) { return d.rel ? format_double(*d.rel) : "undefined"; }

}  // namespace

ValidationReport compare(const std::vector<PatientRecord>& sim, const std::vector<PatientRecord>& ref,
                         const CompareOptions& o) {
  if (sim.empty() || ref.empty()) throw InputError("compare: both logs must be non-empty");
  ValidationReport r;
  r.horizon = o.horizon;
  r.type_labels = o.type_labels;
  r.include_in_service = o.include_in_service;
  const Side a = summarize(sim, o);
  const Side b = summarize(ref, o);
  r.sim_days = a.days;
  r.ref_days = b.days;
  r.sim_queue = queue_length_curve(sim, o.horizon, o.include_in_service);
  r.ref_queue = queue_length_curve(ref, o.horizon, o.include_in_service);
  r.mean_queue_length = diff_of(r.sim_queue.mean(), r.ref_queue.mean());
  r.mean_wait_minutes = diff_of(mean_minutes(a.waits), mean_minutes(b.waits));
  r.mean_wait_minutes_truncated = diff_of(mean_minutes(a.waits_truncated), mean_minutes(b.waits_truncated));
  r.mean_sojourn_minutes = diff_of(mean_minutes(a.sojourns), mean_minutes(b.sojourns));
  for (int h = 0; h < o.horizon.hours(); ++h) {
    r.wait_by_hour.push_back(diff_of(mean_minutes(a.waits_by_hour[h]), mean_minutes(b.waits_by_hour[h])));
  }
  r.ks_wait = ks_two_sample(a.waits, b.waits);
  if (!a.waits_truncated.empty() && !b.waits_truncated.empty()) {
    r.ks_wait_truncated = ks_two_sample(a.waits_truncated, b.waits_truncated);
  }
  auto lookup = [](const std::map<std::pair<int, int>, double>& m, int k, int h) {
    auto it = m.find({k, h});
    return it == m.end() ? 0.0 : it->second;
  };
  for (int t = 0; t < static_cast<int>(o.type_labels.size()); ++t) {
    for (int h = o.horizon.start_hour; h < o.horizon.end_hour; ++h) {
      r.routed_by_type.push_back({t, h, diff_of(lookup(a.by_type, t, h), lookup(b.by_type, t, h))});
    }
  }
  std::set<int> rooms;
  for (const auto& [k, v] : a.by_room) rooms.insert(k.first);
  for (const auto& [k, v] : b.by_room) rooms.insert(k.first);
  for (const auto& [id, t] : o.room_type) rooms.insert(id);
  for (int room : rooms) {
    for (int h = o.horizon.start_hour; h < o.horizon.end_hour; ++h) {
      r.routed_by_room.push_back({room, h, diff_of(lookup(a.by_room, room, h), lookup(b.by_room, room, h))});
    }
  }
  r.sim_waits = a.waits;
  r.ref_waits = b.waits;
  return r;
}

nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json wbh = nlohmann::json::array();
  for (const auto& d : r.wait_by_hour) wbh.push_back(diff_json(d));
  return {{"schema_version", 1},
          {"horizon", {{"start_hour", r.horizon.start_hour}, {"end_hour", r.horizon.end_hour}}},
          {"sim_days", r.sim_days},
          {"ref_days", r.ref_days},
          {"type_labels", r.type_labels},
          {"include_in_service", r.include_in_service},
          {"sim_queue", r.sim_queue.values},
          {"ref_queue", r.ref_queue.values},
          {"mean_queue_length", diff_json(r.mean_queue_length)},
          {"mean_wait_minutes", diff_json(r.mean_wait_minutes)},
          {"mean_wait_minutes_truncated", diff_json(r.mean_wait_minutes_truncated)},
          {"mean_sojourn_minutes", diff_json(r.mean_sojourn_minutes)},
          {"wait_by_hour", wbh},
          {"ks_wait", r.ks_wait},
          {"ks_wait_truncated", r.ks_wait_truncated},
          {"routed_by_type", cells_json(r.routed_by_type)},
          {"routed_by_room", cells_json(r.routed_by_room)},
          {"sim_waits", r.sim_waits},
          {"ref_waits", r.ref_waits}};
}

ValidationReport report_from_json(const nlohmann::json& j) {
  ValidationReport r;
  try {
    r.horizon = {j.at("horizon").at("start_hour").get<int>(), j.at("horizon").at("end_hour").get<int>()};
    r.sim_days = j.at("sim_days").get<int>();
    r.ref_days = j.at("ref_days").get<int>();
    r.type_labels = j.at("type_labels").get<std::vector<std::string>>();
    r.include_in_service = j.at("include_in_service").get<bool>();
    r.sim_queue = {r.horizon, j.at("sim_queue").get<std::vector<double>>()};
    r.ref_queue = {r.horizon, j.at("ref_queue").get<std::vector<double>>()};
    r.mean_queue_length = diff_from(j.at("mean_queue_length"));
    r.mean_wait_minutes = diff_from(j.at("mean_wait_minutes"));
    r.mean_wait_minutes_truncated = diff_from(j.at("mean_wait_minutes_truncated"));
    r.mean_sojourn_minutes = diff_from(j.at("mean_sojourn_minutes"));
    for (const auto& d : j.at("wait_by_hour")) r.wait_by_hour.push_back(diff_from(d));
    r.ks_wait = j.at("ks_wait").get<double>();
    r.ks_wait_truncated = j.at("ks_wait_truncated").get<double>();
    r.routed_by_type = cells_from(j.at("routed_by_type"));
    r.routed_by_room = cells_from(j.at("routed_by_room"));
    r.sim_waits = j.at("sim_waits").get<std::vector<Seconds>>();
    r.ref_waits = j.at("ref_waits").get<std::vector<Seconds>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("report: ") + e.what());
  }
  return r;
}

std::vector<std::size_t> wait_histogram(std::span<const Seconds> waits, double bin_minutes, std::size_t bins) {
  if (!(bin_minutes > 0.0)) throw InputError("histogram bin width must be positive");
  std::vector<std::size_t> counts(bins, 0);
  const double width = bin_minutes * 60.0;
  for (Seconds w : waits) {
    auto b = static_cast<std::size_t>(std::floor(static_cast<double>(std::max<Seconds>(w, 0)) / width));
    counts[std::min(b, bins - 1)] += 1;
  }
  return counts;
}

std::vector<std::filesystem::path> render_report(const ValidationReport& r, const std::filesystem::path& dir,
                                                 double bin_minutes) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << body;
    written.push_back(path);
  };
  auto diff_row = [](std::ostringstream& os, const std::string& metric, const Diff& d) {
    os << metric << ',' << format_double(d.sim) << ',' << format_double(d.ref) << ',' << format_double(d.abs)
       << ',' << rel_cell(d) << '\n';
  };

  std::ostringstream summary;
  summary << "metric,sim,ref,abs_diff,rel_diff\n";
  diff_row(summary, "mean_queue_length", r.mean_queue_length);
  diff_row(summary, "mean_wait_minutes", r.mean_wait_minutes);
  diff_row(summary, "mean_wait_minutes_truncated", r.mean_wait_minutes_truncated);
  diff_row(summary, "mean_sojourn_minutes", r.mean_sojourn_minutes);
  summary << "ks_wait," << format_double(r.ks_wait) << ",,,\n";
  summary << "ks_wait_truncated," << format_double(r.ks_wait_truncated) << ",,,\n";
  emit("summary.csv", summary.str());

  std::ostringstream queue;
  queue << "hour,sim,ref\n";
  for (int h = 0; h < r.horizon.hours(); ++h) {
    queue << r.horizon.start_hour + h << ',' << format_double(r.sim_queue.values[h]) << ','
          << format_double(r.ref_queue.values[h]) << '\n';
  }
  emit("queue_length.csv", queue.str());

  std::ostringstream wbh;
  wbh << "hour,sim,ref,abs_diff,rel_diff\n";
  for (std::size_t h = 0; h < r.wait_by_hour.size(); ++h) {
    const auto& d = r.wait_by_hour[h];
    wbh << r.horizon.start_hour + static_cast<int>(h) << ',' << format_double(d.sim) << ','
        << format_double(d.ref) << ',' << format_double(d.abs) << ',' << rel_cell(d) << '\n';
  }
  emit("wait_by_hour.csv", wbh.str());

  std::ostringstream by_type;
  by_type << "room_type,hour,sim,ref,abs_diff,rel_diff\n";
  for (const auto& c : r.routed_by_type) {
    by_type << r.type_labels.at(c.key) << ',' << c.hour << ',' << format_double(c.diff.sim) << ','
            << format_double(c.diff.ref) << ',' << format_double(c.diff.abs) << ',' << rel_cell(c.diff) << '\n';
  }
  emit("routed_by_type.csv", by_type.str());

  std::ostringstream by_room;
  by_room << "room_id,hour,sim,ref,abs_diff,rel_diff\n";
  for (const auto& c : r.routed_by_room) {
    by_room << c.key << ',' << c.hour << ',' << format_double(c.diff.sim) << ',' << format_double(c.diff.ref)
            << ',' << format_double(c.diff.abs) << ',' << rel_cell(c.diff) << '\n';
  }
  emit("routed_by_room.csv", by_room.str());

  Seconds longest = 0;
  for (Seconds w : r.sim_waits) longest = std::max(longest, w);
  for (Seconds w : r.ref_waits) longest = std::max(longest, w);
  const auto bins = static_cast<std::size_t>(std::floor(static_cast<double>(longest) / (bin_minutes * 60.0))) + 1;
  const auto hs = wait_histogram(r.sim_waits, bin_minutes, bins);
  const auto hr = wait_histogram(r.ref_waits, bin_minutes, bins);
  std::ostringstream hist;
  hist << "bin_start_minutes,bin_end_minutes,sim_count,ref_count\n";
  for (std::size_t b = 0; b < bins; ++b) {
    hist << format_double(static_cast<double>(b) * bin_minutes) << ','
         << format_double(static_cast<double>(b + 1) * bin_minutes) << ',' << hs[b] << ',' << hr[b] << '\n';
  }
  emit("wait_histogram.csv", hist.str());
  return written;
}

}  // namespace uq
