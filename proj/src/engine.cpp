#include "ultraqueue/engine.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "ultraqueue/parallel.hpp"

namespace uq {

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::end_service: return "end_service";
    case EventKind::end_break: return "end_break";
    case EventKind::room_open: return "room_open";
    case EventKind::arrival: return "arrival";
    case EventKind::begin_service: return "begin_service";
    case EventKind::room_close: return "room_close";
    case EventKind::end_of_day: return "end_of_day";
  }
  return "unknown";
}

int SimState::room_index(int room_id) const {
  auto it = std::lower_bound(rooms.begin(), rooms.end(), room_id,
                             [](const RoomState& r, int id) { return r.room_id < id; });
  if (it == rooms.end() || it->room_id != room_id) return -1;
  return static_cast<int>(it - rooms.begin());
}

int SimState::in_service() const {
  int n = 0;
  for (const auto& r : rooms) n += r.status == RoomStatus::busy ? 1 : 0;
  return n;
}

int SimState::queued() const {
  int n = 0;
  for (const auto& r : rooms) n += r.waiting();
  return n;
}

DayContext day_context(const SimConfig& config, int rep) {
  DayContext ctx;
  ctx.rep = rep;
  ctx.day_id = add_days(config.start_date, rep);
  ctx.kind = day_kind_of(ctx.day_id);
  ctx.weekday = weekday_of(ctx.day_id).value_or(0);
  ctx.horizon = config.horizon;
  return ctx;
}

namespace {

struct Later {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

class Day {
 public:
  Day(const SimulationInputs& inputs, const Router& router, const SimConfig& config, int rep,
      const EventObserver& observer)
      : inputs_(inputs),
        router_(router),
        config_(config),
        observer_(observer),
        base_(derive_seed(config.seed, {static_cast<std::uint64_t>(rep)})),
        arrival_rng_(derive_seed(base_, {0})),
        routing_rng_(derive_seed(base_, {1})),
        service_rng_(derive_seed(base_, {2})),
        gap_rng_(derive_seed(base_, {3})),
        pattern_rng_(derive_seed(base_, {4})) {
    const auto ctx = day_context(config, rep);
    st_.rep = rep;
    st_.day_id = ctx.day_id;
    st_.kind = ctx.kind;
    st_.weekday = ctx.weekday;
    st_.horizon = config.horizon;
    const auto ids = inputs.room_ids();
    const auto types = inputs.room_types();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      RoomState r;
      r.room_id = ids[i];
      r.type = types[i];
      st_.rooms.push_back(r);
    }

    st_.patients = inputs.arrivals(ctx, arrival_rng_);
    for (std::size_t i = 0; i < st_.patients.size(); ++i) {
      auto& p = st_.patients[i];
      if (p.patient_id.empty()) p.patient_id = ctx.day_id + "-" + std::to_string(i + 1);
      push(p.arrival, EventKind::arrival, -1, static_cast<int>(i));
    }
    const auto schedule = inputs.open_schedule(ctx, pattern_rng_);
    for (std::size_t r = 0; r < schedule.size(); ++r) {
      for (const auto& iv : schedule[r]) {
        push(iv.open, EventKind::room_open, static_cast<int>(r), -1);
        push(iv.close, EventKind::room_close, static_cast<int>(r), -1);
      }
    }
    push(config.horizon.end(), EventKind::end_of_day, -1, -1);
  }

  DayResult run() {
    while (!calendar_.empty()) {
      const SimEvent e = calendar_.top();
      calendar_.pop();
      if (e.time < st_.clock) throw std::logic_error("event scheduled in the past");
      st_.clock = e.time;
      handle(e);
      if (observer_) observer_(e, st_);
    }
    DayResult out;
    out.day_id = st_.day_id;
    out.seed = base_;
    out.arrivals = st_.arrived;
    out.unserved = static_cast<int>(st_.holding.size());
    for (const auto& p : st_.patients) {
      if (p.end < 0) continue;
      PatientRecord r;
      r.patient_id = p.patient_id;
      r.gender = p.gender;
      r.age = p.age;
      r.department = p.department;
      r.exam_items = p.items;
      r.arrival_ts = p.arrival;
      r.service_start_ts = p.start;
      r.service_end_ts = p.end;
      r.room_id = st_.rooms[p.room].room_id;
      r.day_id = st_.day_id;
      out.records.push_back(std::move(r));
    }
    return out;
  }

 private:
  void push(Seconds t, EventKind k, int room, int patient) {
    calendar_.push({t, k, seq_++, room, patient});
  }

  int hour() const { return hour_of(st_.clock); }

  void route(int p) {
    const int r = router_.route(st_, st_.patients[p], routing_rng_);
    if (r < 0) {
      st_.holding.push_back(p);
      return;
    }
    auto& room = st_.rooms.at(r);
    if (!room.open) throw std::logic_error("router chose a closed room");
    st_.patients[p].room = r;
    if (room.status == RoomStatus::idle) {
      room.status = RoomStatus::calling;
      room.current = p;
      const Seconds w = config_.walks ? inputs_.walk_duration(r, hour(), gap_rng_) : 0;
      st_.patients[p].walk = w;
      push(st_.clock + w, EventKind::begin_service, r, p);
    } else {
      room.queue.push_back(p);
    }
  }

  void start_service(int r, int p) {
    auto& room = st_.rooms[r];
    auto& patient = st_.patients[p];
    room.status = RoomStatus::busy;
    room.current = p;
    patient.start = st_.clock;
    const Seconds s = inputs_.service(r, hour(), patient, service_rng_);
    if (s < 0) throw std::logic_error("negative service duration");
    push(st_.clock + s, EventKind::end_service, r, p);
  }

  void next_from_queue(int r) {
    auto& room = st_.rooms[r];
    const int p = room.queue.front();
    room.queue.pop_front();
    start_service(r, p);
  }

  void handle(const SimEvent& e) {
    switch (e.kind) {
      case EventKind::arrival:
        ++st_.arrived;
        route(e.patient);
        break;
      case EventKind::begin_service:
        start_service(e.room, e.patient);
        break;
      case EventKind::end_service: {
        auto& room = st_.rooms[e.room];
        st_.patients[e.patient].end = st_.clock;
        ++st_.completed;
        room.current = -1;
        if (room.queue.empty()) {
          room.status = RoomStatus::idle;
          break;
        }
        const Seconds b = config_.breaks ? inputs_.break_duration(e.room, hour(), gap_rng_) : 0;
        if (b > 0) {
          room.status = RoomStatus::on_break;
          push(st_.clock + b, EventKind::end_break, e.room, -1);
        } else {
          next_from_queue(e.room);
        }
        break;
      }
      case EventKind::end_break:
        next_from_queue(e.room);
        break;
      case EventKind::room_open: {
        st_.rooms[e.room].open = true;
        std::vector<int> waiting;
        waiting.swap(st_.holding);
        for (int p : waiting) route(p);
        break;
      }
      case EventKind::room_close:
        st_.rooms[e.room].open = false;
        break;
      case EventKind::end_of_day:
        break;
    }
  }

  const SimulationInputs& inputs_;
  const Router& router_;
  const SimConfig& config_;
  const EventObserver& observer_;
  std::uint64_t base_;
  Rng arrival_rng_, routing_rng_, service_rng_, gap_rng_, pattern_rng_;
  SimState st_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> calendar_;
  std::uint64_t seq_ = 0;
};

}  // namespace

DayResult simulate_day(const SimulationInputs& inputs, const Router& router, const SimConfig& config,
                       int rep, const EventObserver& observer) {
  return Day(inputs, router, config, rep, observer).run();
}

std::vector<DayResult> run_replications(const SimulationInputs& inputs, const Router& router,
                                        const SimConfig& config) {
  if (config.n_replications < 1) throw InputError("n_replications must be >= 1");
  std::vector<DayResult> out(config.n_replications);
  parallel_for(out.size(), config.threads,
               [&](std::size_t i) { out[i] = simulate_day(inputs, router, config, static_cast<int>(i)); });
  return out;
}

std::vector<PatientRecord> flatten(const std::vector<DayResult>& days) {
  std::vector<PatientRecord> out;
  for (const auto& d : days) out.insert(out.end(), d.records.begin(), d.records.end());
  return out;
}

std::vector<Seconds> nhpp_times(std::span<const double> hourly_rates, Horizon horizon, Rng& rng) {
  std::vector<Seconds> out;
  double max_rate = 0.0;
  for (double r : hourly_rates) max_rate = std::max(max_rate, r);
  if (!(max_rate > 0.0)) return out;
  const double mean_gap = static_cast<double>(kSecondsPerHour) / max_rate;
  double t = static_cast<double>(horizon.start());
  const auto end = static_cast<double>(horizon.end());
  while (true) {
    t += rng.exponential(mean_gap);
    if (t >= end) break;
    const auto h = static_cast<std::size_t>(std::floor(t / kSecondsPerHour)) - horizon.start_hour;
    const double accept = h < hourly_rates.size() ? hourly_rates[h] / max_rate : 0.0;
    if (rng.uniform() < accept) out.push_back(static_cast<Seconds>(std::floor(t)));
  }
  return out;
}

std::vector<ArrivalDraw> generate_arrivals(const ArrivalRateTable& rates, DayKind kind,
                                           std::uint64_t stream_seed) {
  std::vector<ArrivalDraw> out;
  const auto& m = rates.rate[index_of(kind)];
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (int c = 0; c < rates.n_classes; ++c) {
    for (Eigen::Index h = 0; h < m.cols(); ++h) row[h] = m(c, h);
    Rng rng(derive_seed(stream_seed, {static_cast<std::uint64_t>(c)}));
    for (Seconds t : nhpp_times(row, rates.horizon, rng)) out.push_back({t, c});
  }
  std::sort(out.begin(), out.end(), [](const ArrivalDraw& a, const ArrivalDraw& b) {
    return a.time != b.time ? a.time < b.time : a.class_index < b.class_index;
  });
  return out;
}

ModelInputs::ModelInputs(const CalibratedModel& model) : model_(model) {
  for (int id : model.room_types.rooms) types_.push_back(model.room_types.type_of(id));
}

std::vector<SimPatient> ModelInputs::arrivals(const DayContext& day, Rng& rng) const {
  DayKind kind = day.kind;
  if (!model_.arrivals.has(kind)) kind = kind == DayKind::weekday ? DayKind::weekend : DayKind::weekday;
  const auto draws = generate_arrivals(model_.arrivals, kind, rng.next());
  std::vector<SimPatient> out;
  out.reserve(draws.size());
  for (const auto& d : draws) {
    const auto& cls = model_.classes[d.class_index];
    const auto& pool = model_.profiles[d.class_index];
    const auto& profile = pool[rng.below(pool.size())];
    SimPatient p;
    p.class_index = d.class_index;
    p.group = cls.item_group;
    p.gender = cls.gender;
    p.age = profile.age;
    p.department = profile.department;
    p.items = profile.items;
    p.arrival = d.time;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<OpenInterval>> ModelInputs::open_schedule(const DayContext& day, Rng& rng) const {
  const auto candidates = model_.patterns.days_of_kind(day.kind);
  if (candidates.empty()) throw CalibrationError("model has no open-hour patterns");
  const auto& pattern = model_.patterns.days[candidates[rng.below(candidates.size())]];
  std::vector<std::vector<OpenInterval>> out(model_.patterns.rooms.size());
  const auto& h = day.horizon;
  for (std::size_t r = 0; r < out.size(); ++r) {
    int run_start = -1;
    for (int hour = h.start_hour; hour <= h.end_hour; ++hour) {
      const bool open = hour < h.end_hour && pattern.is_open(static_cast<int>(r), hour);
      if (open && run_start < 0) run_start = hour;
      if (!open && run_start >= 0) {
        out[r].push_back({run_start * kSecondsPerHour, hour * kSecondsPerHour});
        run_start = -1;
      }
    }
  }
  return out;
}

Seconds ModelInputs::service(int room_index, int hour, const SimPatient& patient, Rng& rng) const {
  const auto cell = model_.service.lookup(room_index, hour, patient.class_index);
  if (!cell.sample || cell.sample->empty()) {
    throw std::logic_error("service table has no sample for class " + std::to_string(patient.class_index));
  }
  return (*cell.sample)[rng.below(cell.sample->size())];
}

Seconds ModelInputs::break_duration(int room_index, int hour, Rng& rng) const {
  const int type = types_[room_index];
  if (!rng.bernoulli(model_.gaps.break_probability(type, hour))) return 0;
  const auto& s = model_.gaps.break_sample(type, hour);
  return s.empty() ? 0 : s[rng.below(s.size())];
}

Seconds ModelInputs::walk_duration(int room_index, int hour, Rng& rng) const {
  const int type = types_[room_index];
  if (!rng.bernoulli(model_.gaps.walk_probability(type, hour))) return 0;
  const auto& s = model_.gaps.walk_sample(type, hour);
  return s.empty() ? 0 : s[rng.below(s.size())];
}

DayResult run_day(const CalibratedModel& model, const Router& router, const SimConfig& config, int rep) {
  const ModelInputs inputs(model);
  return simulate_day(inputs, router, config, rep);
}

}  // namespace uq
