#include "ultraqueue/routing.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

namespace uq {

namespace {

constexpr int kWeekdays = 7;

void add_patient_block(forest::FeatureSchema& s, int n_groups) {
  s.add("age", "age");
  for (int g = 0; g < n_groups; ++g) s.add("group_P" + std::to_string(g + 1), "item_group");
  s.add("hour", "hour");
  for (int d = 0; d < kWeekdays; ++d) s.add("weekday_" + std::to_string(d), "weekday");
}

void push_patient_block(std::vector<double>& x, const RoutingContext& ctx, int n_groups) {
  x.push_back(ctx.age);
  for (int g = 0; g < n_groups; ++g) x.push_back(g == ctx.group ? 1.0 : 0.0);
  x.push_back(static_cast<double>(ctx.hour));
  for (int d = 0; d < kWeekdays; ++d) x.push_back(d == ctx.weekday ? 1.0 : 0.0);
}

RoutingContext context_of(const SimState& state, const SimPatient& p) {
  return {p.age, p.group, hour_of(state.clock), state.weekday};
}

}  // namespace

forest::FeatureSchema level1_schema(int n_groups, int n_types) {
  forest::FeatureSchema s;
  add_patient_block(s, n_groups);
  for (int t = 0; t < n_types; ++t) s.add("queue_R" + std::to_string(t + 1), "queue_R" + std::to_string(t + 1));
  for (int t = 0; t < n_types; ++t) s.add("open_R" + std::to_string(t + 1), "open_R" + std::to_string(t + 1));
  return s;
}

std::vector<double> level1_features(const RoutingContext& ctx, int n_groups,
                                    std::span<const int> queue_by_type,
                                    std::span<const int> open_by_type) {
  std::vector<double> x;
  x.reserve(1 + n_groups + 1 + kWeekdays + queue_by_type.size() + open_by_type.size());
  push_patient_block(x, ctx, n_groups);
  for (int q : queue_by_type) x.push_back(q);
  for (int o : open_by_type) x.push_back(o);
  return x;
}

forest::FeatureSchema level2_schema(int n_groups, const std::vector<int>& rooms) {
  forest::FeatureSchema s;
  add_patient_block(s, n_groups);
  for (int r : rooms) s.add("queue_room" + std::to_string(r), "queue_room" + std::to_string(r));
  for (int r : rooms) s.add("open_room" + std::to_string(r), "open_room" + std::to_string(r));
  return s;
}

std::vector<double> level2_features(const RoutingContext& ctx, int n_groups,
                                    std::span<const int> queue, std::span<const int> open) {
  std::vector<double> x;
  x.reserve(1 + n_groups + 1 + kWeekdays + queue.size() + open.size());
  push_patient_block(x, ctx, n_groups);
  for (int q : queue) x.push_back(q);
  for (int o : open) x.push_back(o);
  return x;
}

RoutingFeaturesL1 extract_l1(const SimState& state, const SimPatient& patient, int n_types) {
  RoutingFeaturesL1 f;
  f.context = context_of(state, patient);
  f.queue_by_type.assign(n_types, 0);
  f.open_by_type.assign(n_types, 0);
  for (const auto& room : state.rooms) {
    f.queue_by_type[room.type] += room.waiting();
    if (room.open) ++f.open_by_type[room.type];
  }
  return f;
}

int choose_masked(std::span<const double> proba, std::span<const char> mask, RoutingMode mode,
                  Rng& rng) {
  std::vector<double> w(proba.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < proba.size(); ++i) {
    if (mask[i]) {
      w[i] = std::max(0.0, proba[i]);
      any = true;
    }
  }
  if (!any) return -1;
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  }
  if (mode == RoutingMode::argmax) {
    int best = -1;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (mask[i] && (best < 0 || w[i] > w[best])) best = static_cast<int>(i);
    }
    return best;
  }
  return rng.categorical(w);
}

int TwoLevelRouter::route(const SimState& state, const SimPatient& patient, Rng& rng) const {
  const int n_types = policy_.n_types();
  const auto f = extract_l1(state, patient, n_types);
  std::vector<char> type_mask(n_types, 0);
  for (int t = 0; t < n_types; ++t) {
    type_mask[t] = f.open_by_type[t] > 0 && policy_.admissible(patient.group, t);
  }
  const auto x1 = level1_features(f.context, policy_.n_groups, f.queue_by_type, f.open_by_type);
  const Eigen::VectorXd p1 = policy_.level1.predict_proba(x1);
  const int type = choose_masked({p1.data(), static_cast<std::size_t>(p1.size())}, type_mask, mode_, rng);
  if (type < 0) return -1;

  const auto& rooms = policy_.type_rooms[type];
  std::vector<int> index(rooms.size()), queue(rooms.size()), open(rooms.size());
  std::vector<char> room_mask(rooms.size());
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    index[i] = state.room_index(rooms[i]);
    const auto& rs = state.rooms[index[i]];
    queue[i] = rs.waiting();
    open[i] = rs.open ? 1 : 0;
    room_mask[i] = rs.open;
  }
  const auto x2 = level2_features(f.context, policy_.n_groups, queue, open);
  const Eigen::VectorXd p2 = policy_.level2[type].predict_proba(x2);
  const int pick = choose_masked({p2.data(), static_cast<std::size_t>(p2.size())}, room_mask, mode_, rng);
  return pick < 0 ? -1 : index[pick];
}

int JsqRouter::route(const SimState& state, const SimPatient& patient, Rng&) const {
  int best = -1;
  for (std::size_t i = 0; i < state.rooms.size(); ++i) {
    const auto& r = state.rooms[i];
    if (!r.open) continue;
    if (patient.group < 0 || patient.group >= static_cast<int>(eligible_.size()) ||
        !eligible_[patient.group][r.type]) {
      continue;
    }
    if (best < 0 || r.in_system() < state.rooms[best].in_system()) best = static_cast<int>(i);
  }
  return best;
}

std::vector<std::vector<char>> observed_eligibility(const std::vector<PatientRecord>& log,
                                                    const ItemGroupModel& groups,
                                                    const RoomTypeModel& types) {
  std::vector<std::vector<char>> e(groups.n_groups(), std::vector<char>(types.n_types(), 0));
  for (const auto& r : log) {
    const int t = types.type_of(r.room_id);
    if (t >= 0) e[groups.group_of(r.exam_items)][t] = 1;
  }
  return e;
}

std::vector<std::vector<char>> model_eligibility(const CalibratedModel& model) {
  if (model.routing) return model.routing->eligible;
  // Without a trained policy, a (group, type) pair is admissible when the
  // calibration log served that group in a room of that type.
  std::vector<std::vector<char>> e(model.groups.n_groups(), std::vector<char>(model.room_types.n_types(), 0));
  const auto& types = model.service.room_types();
  for (const auto& [key, sample] : model.service.cells()) {
    const auto [room, hour, cls] = key;
    if (!sample.empty()) e[model.classes[cls].item_group][types[room]] = 1;
  }
  return e;
}

std::vector<ReplayRow> replay_features(const std::vector<PatientRecord>& log,
                                       const CalibratedModel& model) {
  const auto& rooms = model.room_types.rooms;
  std::map<int, int> room_index;
  for (std::size_t i = 0; i < rooms.size(); ++i) room_index[rooms[i]] = static_cast<int>(i);
  std::map<std::string, const DayPattern*> pattern_of;
  for (const auto& d : model.patterns.days) pattern_of[d.day_id] = &d;

  std::map<std::string, std::vector<std::size_t>> by_day;
  for (std::size_t i = 0; i < log.size(); ++i) by_day[log[i].day_id].push_back(i);

  std::vector<std::optional<ReplayRow>> rows(log.size());
  for (auto& [day, idx] : by_day) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return log[a].arrival_ts < log[b].arrival_ts; });
    const DayPattern* pattern = pattern_of.count(day) ? pattern_of[day] : nullptr;
    const int weekday = weekday_of(day).value_or(0);
    // Per room, (start, walked) of patients who arrived but have not started.
    // A start in the arrival's own second is ambiguous: the engine starts a
    // queued patient at end_service or end_break, before same-second
    // arrivals, but a patient who walked into an idle room begins after them.
    // The patient walked iff the room's previous patient had finished by the
    // time it arrived.
    using Pending = std::pair<Seconds, int>;
    std::vector<std::priority_queue<Pending, std::vector<Pending>, std::greater<>>> pending(rooms.size());
    std::vector<Seconds> last_end(rooms.size(), std::numeric_limits<Seconds>::min());
    for (std::size_t i : idx) {
      const auto& r = log[i];
      const Seconds t = r.arrival_ts;
      for (auto& q : pending) {
        while (!q.empty() && (q.top().first < t || (q.top().first == t && q.top().second == 0))) q.pop();
      }
      const int ri = room_index.at(r.room_id);
      const int h = hour_of(t);
      if (model.horizon.contains_hour(h)) {
        ReplayRow row;
        row.record = i;
        row.context = {r.age, model.groups.group_of(r.exam_items), h, weekday};
        row.queue.resize(rooms.size());
        row.open.resize(rooms.size());
        for (std::size_t k = 0; k < rooms.size(); ++k) {
          row.queue[k] = static_cast<int>(pending[k].size());
          row.open[k] = pattern && pattern->is_open(static_cast<int>(k), h) ? 1 : 0;
        }
        row.room_index = ri;
        row.type = model.room_types.type_of(r.room_id);
        rows[i] = std::move(row);
      }
      pending[ri].push({r.service_start_ts, last_end[ri] <= t ? 1 : 0});
      last_end[ri] = r.service_end_ts;
    }
  }
  std::vector<ReplayRow> out;
  for (auto& r : rows) {
    if (r) out.push_back(std::move(*r));
  }
  return out;
}

namespace {

forest::Dataset make_dataset(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                             int n_classes) {
  forest::Dataset d;
  d.n_classes = n_classes;
  d.y = y;
  const auto cols = x.empty() ? 0 : static_cast<Eigen::Index>(x.front().size());
  d.x.resize(static_cast<Eigen::Index>(x.size()), cols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) d.x(static_cast<Eigen::Index>(i), c) = x[i][c];
  }
  return d;
}

RoutingEvaluation::Row score(const forest::RandomForest& f, const forest::Dataset& d,
                             std::string level, std::string model, std::string split,
                             std::vector<std::string>* warnings) {
  RoutingEvaluation::Row row{std::move(level), std::move(model), std::move(split), 0.0, 0.0,
                             static_cast<int>(d.rows())};
  if (d.rows() == 0) {
    row.auc = row.accuracy = std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  const Eigen::MatrixXd p = f.predict_proba(d.x);
  row.accuracy = forest::accuracy(p, d.y);
  try {
    std::vector<std::string> w;
    row.auc = forest::ovr_auc(p, d.y, &w);
  } catch (const InputError&) {
    row.auc = std::numeric_limits<double>::quiet_NaN();
    if (warnings) warnings->push_back(row.level + " " + row.model + " " + row.split + ": AUC undefined");
  }
  return row;
}

}  // namespace

TrainedRouting train_policy(const std::vector<PatientRecord>& log, const CalibratedModel& model,
                            const RoutingTrainOptions& options) {
  TrainedRouting out;
  auto& policy = out.policy;
  const int n_types = model.room_types.n_types();
  policy.n_groups = model.groups.n_groups();
  policy.type_rooms = model.room_types.members;
  policy.eligible = observed_eligibility(log, model.groups, model.room_types);

  const auto rows = replay_features(log, model);
  if (rows.empty()) throw CalibrationError("routing: no arrivals inside the horizon");

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(options.seed, {0}));
  split_rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(options.train_fraction * static_cast<double>(rows.size()));
  std::vector<char> is_train(rows.size(), 0);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = 1;

  // Level 1.
  std::array<std::vector<std::vector<double>>, 2> x1;
  std::array<std::vector<int>, 2> y1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::vector<int> q(n_types, 0), o(n_types, 0);
    for (std::size_t k = 0; k < r.queue.size(); ++k) {
      const int t = model.service.room_types()[k];
      q[t] += r.queue[k];
      o[t] += r.open[k];
    }
    const int s = is_train[i] ? 0 : 1;
    x1[s].push_back(level1_features(r.context, policy.n_groups, q, o));
    y1[s].push_back(r.type);
  }
  const auto schema1 = level1_schema(policy.n_groups, n_types);
  const auto train1 = make_dataset(x1[0], y1[0], n_types);
  const auto test1 = make_dataset(x1[1], y1[1], n_types);
  auto hp1 = options.level1;
  hp1.seed = derive_seed(options.seed, {1});
  policy.level1 = forest::train(train1, schema1, hp1, options.threads, &out.warnings);
  out.evaluation.rows.push_back(score(policy.level1, train1, "L1", "all", "train", &out.warnings));
  out.evaluation.rows.push_back(score(policy.level1, test1, "L1", "all", "test", &out.warnings));
  if (test1.rows() > 0) {
    out.evaluation.level1_importance = forest::permutation_importance(
        policy.level1, test1, forest::Metric::accuracy, options.importance_repeats,
        derive_seed(options.seed, {3}));
  }

  // Level 2, one forest per room type.
  for (int t = 0; t < n_types; ++t) {
    const auto& members = policy.type_rooms[t];
    std::vector<int> member_index;
    for (int id : members) {
      member_index.push_back(static_cast<int>(
          std::lower_bound(model.room_types.rooms.begin(), model.room_types.rooms.end(), id) -
          model.room_types.rooms.begin()));
    }
    std::array<std::vector<std::vector<double>>, 2> x2;
    std::array<std::vector<int>, 2> y2;
    std::vector<int> per_room(members.size(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.type != t) continue;
      std::vector<int> q, o;
      int label = -1;
      for (std::size_t k = 0; k < member_index.size(); ++k) {
        q.push_back(r.queue[member_index[k]]);
        o.push_back(r.open[member_index[k]]);
        if (member_index[k] == r.room_index) label = static_cast<int>(k);
      }
      const int s = is_train[i] ? 0 : 1;
      x2[s].push_back(level2_features(r.context, policy.n_groups, q, o));
      y2[s].push_back(label);
      if (s == 0) ++per_room[label];
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (per_room[k] < options.min_room_rows) {
        out.warnings.push_back("room " + std::to_string(members[k]) + " has only " +
                               std::to_string(per_room[k]) + " training rows");
      }
    }
    const int n_rooms = static_cast<int>(members.size());
    const auto train2 = make_dataset(x2[0], y2[0], n_rooms);
    const auto test2 = make_dataset(x2[1], y2[1], n_rooms);
    auto hp2 = static_cast<std::size_t>(t) < options.level2.size()
                   ? options.level2[t]
                   : forest::Hyperparams::second_level(std::min(t, 3));
    hp2.seed = derive_seed(options.seed, {2, static_cast<std::uint64_t>(t)});
    if (train2.rows() == 0) throw CalibrationError("routing: room type " + model.room_types.label(t) + " has no training rows");
    policy.level2.push_back(forest::train(train2, level2_schema(policy.n_groups, members), hp2,
                                          options.threads, &out.warnings));
    const auto label = model.room_types.label(t);
    out.evaluation.rows.push_back(score(policy.level2.back(), train2, "L2", label, "train", &out.warnings));
    out.evaluation.rows.push_back(score(policy.level2.back(), test2, "L2", label, "test", &out.warnings));
  }
  return out;
}

std::string evaluation_csv(const RoutingEvaluation& eval) {
  std::ostringstream os;
  os << "level,model,split,auc,accuracy,rows\n";
  for (const auto& r : eval.rows) {
    os << r.level << ',' << r.model << ',' << r.split << ',' << format_double(r.auc) << ','
       << format_double(r.accuracy) << ',' << r.rows << '\n';
  }
  return os.str();
}

std::string importance_csv(const RoutingEvaluation& eval) {
  std::ostringstream os;
  os << "feature,importance\n";
  for (const auto& f : eval.level1_importance) os << f.feature << ',' << format_double(f.importance) << '\n';
  return os.str();
}

nlohmann::json to_json(const RoutingPolicy& p) {
  nlohmann::json level2 = nlohmann::json::array();
  for (const auto& f : p.level2) level2.push_back(forest::to_json(f));
  nlohmann::json eligible = nlohmann::json::array();
  for (const auto& row : p.eligible) {
    nlohmann::json r = nlohmann::json::array();
    for (char c : row) r.push_back(c != 0);
    eligible.push_back(r);
  }
  return {{"n_groups", p.n_groups},
          {"type_rooms", p.type_rooms},
          {"eligible", eligible},
          {"level1", forest::to_json(p.level1)},
          {"level2", level2}};
}

RoutingPolicy policy_from_json(const nlohmann::json& j) {
  RoutingPolicy p;
  p.n_groups = j.at("n_groups").get<int>();
  p.type_rooms = j.at("type_rooms").get<std::vector<std::vector<int>>>();
  for (const auto& row : j.at("eligible")) {
    std::vector<char> r;
    for (const auto& c : row) r.push_back(c.get<bool>() ? 1 : 0);
    p.eligible.push_back(std::move(r));
  }
  p.level1 = forest::forest_from_json(j.at("level1"));
  for (const auto& f : j.at("level2")) p.level2.push_back(forest::forest_from_json(f));
  return p;
}

}  // namespace uq
