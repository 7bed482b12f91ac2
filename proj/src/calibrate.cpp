#include "ultraqueue/calibrate.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "ultraqueue/rng.hpp"
#include "ultraqueue/routing.hpp"

namespace uq {

ArrivalRateTable estimate_arrival_rates(const std::vector<PatientRecord>& log,
                                        const std::vector<int>& record_class, int n_classes,
                                        Horizon horizon, std::vector<std::string>* warnings) {
  ArrivalRateTable t;
  t.horizon = horizon;
  t.n_classes = n_classes;
  std::array<std::set<std::string>, kDayKinds> days;
  for (const auto& r : log) days[index_of(day_kind_of(r.day_id))].insert(r.day_id);
  for (int k = 0; k < kDayKinds; ++k) {
    t.days[k] = static_cast<int>(days[k].size());
    t.rate[k] = Eigen::MatrixXd::Zero(n_classes, horizon.hours());
  }
  std::size_t outside = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const int h = hour_of(log[i].arrival_ts);
    if (!horizon.contains_hour(h)) {
      ++outside;
      continue;
    }
    t.rate[index_of(day_kind_of(log[i].day_id))](record_class[i], h - horizon.start_hour) += 1.0;
  }
  for (int k = 0; k < kDayKinds; ++k) {
    if (t.days[k] > 0) {
      t.rate[k] /= static_cast<double>(t.days[k]);
    } else if (warnings) {
      warnings->push_back("no " + to_string(k == 0 ? DayKind::weekday : DayKind::weekend) +
                          " days in the log; that day kind has no arrival rates");
    }
  }
  if (outside > 0 && warnings) {
    warnings->push_back(std::to_string(outside) + " arrivals outside the horizon were not counted");
  }
  return t;
}

std::vector<int> OpenPatternLibrary::days_of_kind(DayKind kind) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < days.size(); ++i) {
    if (days[i].kind == kind) out.push_back(static_cast<int>(i));
  }
  if (out.empty()) {
    out.resize(days.size());
    std::iota(out.begin(), out.end(), 0);
  }
  return out;
}

OpenPatternLibrary estimate_open_patterns(const std::vector<PatientRecord>& log,
                                          const std::vector<int>& rooms) {
  OpenPatternLibrary lib;
  lib.rooms = rooms;
  std::map<int, int> room_index;
  for (std::size_t i = 0; i < rooms.size(); ++i) room_index[rooms[i]] = static_cast<int>(i);
  std::map<std::string, DayPattern> by_day;
  for (const auto& r : log) {
    auto& day = by_day[r.day_id];
    if (day.open_hours.empty()) {
      day.day_id = r.day_id;
      day.kind = day_kind_of(r.day_id);
      day.open_hours.assign(rooms.size(), 0);
    }
    auto it = room_index.find(r.room_id);
    if (it == room_index.end()) continue;
    // [start, end) overlaps hour h; an instantaneous service marks its own hour.
    const int first = hour_of(r.service_start_ts);
    const int last = r.service_end_ts > r.service_start_ts ? hour_of(r.service_end_ts - 1) : first;
    for (int h = first; h <= last && h < 64; ++h) day.open_hours[it->second] |= std::uint64_t{1} << h;
  }
  for (auto& [id, day] : by_day) lib.days.push_back(std::move(day));
  return lib;
}

ServiceTable::ServiceTable(std::vector<int> rooms, std::vector<int> room_types, int n_types,
                           int n_classes, std::map<CellKey, Sample> cells)
    : rooms_(std::move(rooms)),
      room_types_(std::move(room_types)),
      n_types_(n_types),
      n_classes_(n_classes),
      cells_(std::move(cells)) {
  by_class_.assign(n_classes_, {});
  for (const auto& [key, sample] : cells_) {
    const auto [room, hour, cls] = key;
    const int type = room_types_.at(room);
    auto append = [&](Sample& dst) { dst.insert(dst.end(), sample.begin(), sample.end()); };
    append(by_type_hour_[{type, hour, cls}]);
    append(by_type_[{type, cls}]);
    append(by_class_.at(cls));
  }
}

ServiceTable::Lookup ServiceTable::lookup(int room_index, int hour, int cls) const {
  if (auto it = cells_.find({room_index, hour, cls}); it != cells_.end()) return {&it->second, 1};
  const int type = room_types_.at(room_index);
  if (auto it = by_type_hour_.find({type, hour, cls}); it != by_type_hour_.end()) return {&it->second, 2};
  if (auto it = by_type_.find({type, cls}); it != by_type_.end()) return {&it->second, 3};
  if (cls >= 0 && cls < n_classes_ && !by_class_[cls].empty()) return {&by_class_[cls], 4};
  return {};
}

ServiceTable estimate_service_table(const std::vector<PatientRecord>& log,
                                    const std::vector<int>& record_class,
                                    const std::vector<PatientClass>& classes,
                                    const RoomTypeModel& types) {
  std::map<int, int> room_index;
  std::vector<int> room_types;
  for (std::size_t i = 0; i < types.rooms.size(); ++i) {
    room_index[types.rooms[i]] = static_cast<int>(i);
    room_types.push_back(types.type_of(types.rooms[i]));
  }
  std::map<ServiceTable::CellKey, ServiceTable::Sample> cells;
  std::vector<int> per_class(classes.size(), 0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    const Seconds d = r.service();
    auto it = room_index.find(r.room_id);
    if (d <= 0 || it == room_index.end()) continue;
    cells[{it->second, hour_of(r.service_start_ts), record_class[i]}].push_back(d);
    ++per_class[record_class[i]];
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (per_class[c] == 0) {
      throw CalibrationError("service table: class " + classes[c].label() +
                             " has no positive service durations");
    }
  }
  for (auto& [key, sample] : cells) std::sort(sample.begin(), sample.end());
  return ServiceTable(types.rooms, std::move(room_types), types.n_types(),
                      static_cast<int>(classes.size()), std::move(cells));
}

GapModel::GapModel(Seconds threshold, int n_types, std::map<std::pair<int, int>, GapCell> cells)
    : threshold_(threshold), n_types_(n_types), cells_(std::move(cells)) {
  by_type_.assign(n_types_, {});
  auto merge = [](GapCell& dst, const GapCell& src) {
    dst.busy_handoffs += src.busy_handoffs;
    dst.idle_starts += src.idle_starts;
    dst.breaks.insert(dst.breaks.end(), src.breaks.begin(), src.breaks.end());
    dst.walks.insert(dst.walks.end(), src.walks.begin(), src.walks.end());
  };
  for (const auto& [key, cell] : cells_) {
    merge(by_type_.at(key.first), cell);
    merge(pooled_, cell);
  }
  for (auto& c : by_type_) {
    std::sort(c.breaks.begin(), c.breaks.end());
    std::sort(c.walks.begin(), c.walks.end());
  }
  std::sort(pooled_.breaks.begin(), pooled_.breaks.end());
  std::sort(pooled_.walks.begin(), pooled_.walks.end());
}

const GapCell& GapModel::resolve(int type, int hour, bool breaks) const {
  auto has = [breaks](const GapCell& c) { return breaks ? c.busy_handoffs > 0 : c.idle_starts > 0; };
  if (auto it = cells_.find({type, hour}); it != cells_.end() && has(it->second)) return it->second;
  if (type >= 0 && type < n_types_ && has(by_type_[type])) return by_type_[type];
  return pooled_;
}

double GapModel::break_probability(int type, int hour) const {
  const auto& c = resolve(type, hour, true);
  return c.busy_handoffs > 0 ? static_cast<double>(c.breaks.size()) / c.busy_handoffs : 0.0;
}

const std::vector<Seconds>& GapModel::break_sample(int type, int hour) const {
  const auto& c = resolve(type, hour, true);
  if (!c.breaks.empty()) return c.breaks;
  if (type >= 0 && type < n_types_ && !by_type_[type].breaks.empty()) return by_type_[type].breaks;
  return pooled_.breaks;
}

double GapModel::walk_probability(int type, int hour) const {
  const auto& c = resolve(type, hour, false);
  return c.idle_starts > 0 ? static_cast<double>(c.walks.size()) / c.idle_starts : 0.0;
}

const std::vector<Seconds>& GapModel::walk_sample(int type, int hour) const {
  const auto& c = resolve(type, hour, false);
  if (!c.walks.empty()) return c.walks;
  if (type >= 0 && type < n_types_ && !by_type_[type].walks.empty()) return by_type_[type].walks;
  return pooled_.walks;
}

GapModel estimate_gaps(const std::vector<PatientRecord>& log, const RoomTypeModel& types,
                       Seconds threshold) {
  std::map<std::pair<std::string, int>, std::vector<const PatientRecord*>> by_room_day;
  for (const auto& r : log) by_room_day[{r.day_id, r.room_id}].push_back(&r);

  std::map<std::pair<int, int>, GapCell> cells;
  for (auto& [key, recs] : by_room_day) {
    const int type = types.type_of(key.second);
    if (type < 0) continue;
    std::stable_sort(recs.begin(), recs.end(), [](const PatientRecord* a, const PatientRecord* b) {
      return a->service_start_ts < b->service_start_ts;
    });
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
      const auto& prev = *recs[i];
      const auto& next = *recs[i + 1];
      if (next.arrival_ts <= prev.service_end_ts) {
        auto& cell = cells[{type, hour_of(prev.service_end_ts)}];
        ++cell.busy_handoffs;
        const Seconds gap = next.service_start_ts - prev.service_end_ts;
        if (gap > threshold) cell.breaks.push_back(gap);
      } else {
        auto& cell = cells[{type, hour_of(next.arrival_ts)}];
        ++cell.idle_starts;
        const Seconds walk = next.service_start_ts - next.arrival_ts;
        if (walk > threshold) cell.walks.push_back(walk);
      }
    }
  }
  for (auto& [key, cell] : cells) {
    std::sort(cell.breaks.begin(), cell.breaks.end());
    std::sort(cell.walks.begin(), cell.walks.end());
  }
  return GapModel(threshold, types.n_types(), std::move(cells));
}

std::vector<int> record_classes(const ItemGroupModel& groups, const std::vector<PatientClass>& classes,
                                const std::vector<PatientRecord>& log) {
  std::vector<int> out;
  out.reserve(log.size());
  for (const auto& r : log) {
    out.push_back(class_index(classes, {groups.group_of(r.exam_items), age_bucket(r.age), r.gender}));
  }
  return out;
}

void CalibratedModel::validate() const {
  auto fail = [](const std::string& what) { throw CalibrationError("model validation: " + what); };
  const int n_classes = static_cast<int>(classes.size());
  const int n_types = room_types.n_types();
  for (const auto& c : classes) {
    if (c.item_group < 0 || c.item_group >= groups.n_groups()) fail("class with unknown item group");
  }
  if (arrivals.n_classes != n_classes) fail("arrival table class count differs from class list");
  if (service.n_classes() != n_classes) fail("service table class count differs from class list");
  if (service.rooms() != room_types.rooms) fail("service table rooms differ from room universe");
  if (patterns.rooms != room_types.rooms) fail("open patterns reference a different room universe");
  if (gaps.n_types() != n_types) fail("gap model type count differs from room types");
  if (static_cast<int>(profiles.size()) != n_classes) fail("profile pools do not cover every class");
  for (int c = 0; c < n_classes; ++c) {
    if (profiles[c].empty()) fail("class " + classes[c].label() + " has no profiles");
  }
  for (const auto& day : patterns.days) {
    if (day.open_hours.size() != patterns.rooms.size()) fail("pattern " + day.day_id + " has wrong width");
  }
  if (routing) {
    if (routing->n_types() != n_types) fail("routing policy type count differs");
    if (static_cast<int>(routing->level2.size()) != n_types) fail("missing level-2 forests");
    for (int t = 0; t < n_types; ++t) {
      if (routing->type_rooms[t] != room_types.members[t]) fail("level-2 labels differ from room type members");
    }
    if (routing->n_groups != groups.n_groups()) fail("routing policy group count differs");
  }
}

BuildResult build_model(const std::vector<PatientRecord>& log, const CalibrationConfig& config) {
  if (log.empty()) throw InputError("calibration log is empty");
  BuildResult out;
  auto& m = out.model;
  m.seed = config.seed;
  m.horizon = config.horizon;
  m.source_digest = hex64(fnv1a64(serialize_log(log)));

  std::vector<int> rooms = config.rooms;
  if (rooms.empty()) {
    std::set<int> seen;
    for (const auto& r : log) seen.insert(r.room_id);
    rooms.assign(seen.begin(), seen.end());
  }
  std::sort(rooms.begin(), rooms.end());
  for (const auto& r : log) {
    if (!std::binary_search(rooms.begin(), rooms.end(), r.room_id)) {
      throw InputError("record " + r.patient_id + " uses room " + std::to_string(r.room_id) +
                       " outside the configured room universe");
    }
  }

  const auto table = item_features(log, rooms);
  for (const auto& [item, n] : table.insufficient) {
    out.warnings.push_back("item " + item + " has " + std::to_string(n) +
                           " single-item observation(s); assigned to the largest cluster");
  }
  if (static_cast<int>(table.items.size()) < config.n_item_clusters) {
    throw CalibrationError("only " + std::to_string(table.items.size()) +
                           " exam items have enough single-item visits for " +
                           std::to_string(config.n_item_clusters) + " clusters");
  }
  const auto fit = fit_gmm(table.features, config.n_item_clusters, derive_seed(config.seed, {1}), config.gmm);
  if (fit.reseeds > 0) out.warnings.push_back("item clustering re-seeded a collapsed component");
  m.groups = assign_item_groups(fit, table, log);
  m.room_types = cluster_rooms(log, rooms, config.n_room_types);
  m.classes = build_patient_classes(m.groups, log);
  const auto rc = record_classes(m.groups, m.classes, log);

  m.arrivals = estimate_arrival_rates(log, rc, static_cast<int>(m.classes.size()), config.horizon, &out.warnings);
  m.patterns = estimate_open_patterns(log, rooms);
  m.service = estimate_service_table(log, rc, m.classes, m.room_types);
  m.gaps = estimate_gaps(log, m.room_types, config.threshold_seconds);

  // Bounded per-class attribute pools, chosen by a seeded shuffle and kept in log order.
  std::vector<std::vector<std::size_t>> members(m.classes.size());
  for (std::size_t i = 0; i < log.size(); ++i) members[rc[i]].push_back(i);
  m.profiles.resize(m.classes.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto idx = members[c];
    if (static_cast<int>(idx.size()) > config.profile_pool) {
      Rng rng(derive_seed(config.seed, {2, c}));
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(config.profile_pool);
      std::sort(idx.begin(), idx.end());
    }
    for (auto i : idx) m.profiles[c].push_back({log[i].age, log[i].department, log[i].exam_items});
  }

  if (config.train_routing) {
    RoutingTrainOptions opts;
    opts.seed = derive_seed(config.seed, {3});
    opts.threads = config.threads;
    auto trained = train_policy(log, m, opts);
    m.routing = std::move(trained.policy);
    out.evaluation = std::move(trained.evaluation);
    out.warnings.insert(out.warnings.end(), trained.warnings.begin(), trained.warnings.end());
  }
  m.validate();
  return out;
}

}  // namespace uq
