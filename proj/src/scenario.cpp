#include "ultraqueue/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace uq {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError("scenario: " + what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

bool closed_at(const ShiftOption& s, int hour) { return !(hour >= s.start_hour && hour < s.end_hour); }

}  // namespace

void SynthScenario::validate() const {
  require(horizon.start_hour >= 0 && horizon.start_hour < horizon.end_hour && horizon.end_hour <= 24,
          "horizon start must precede end within one day");
  require(is_iso_date(start_date), "start_date must be YYYY-MM-DD");
  require(!families.empty(), "at least one family is required");
  require(n_types >= 1, "n_types must be >= 1");
  for (const auto& f : families) {
    require(f.service_mean > 0.0, "family " + f.name + " needs a positive service mean");
    require(f.service_cv >= 0.0, "family " + f.name + " has a negative service cv");
    require(static_cast<int>(f.type_preference.size()) == n_types,
            "family " + f.name + " needs one preference per room type");
    for (double p : f.type_preference) require(p >= 0.0, "family " + f.name + " has a negative preference");
  }
  double total = 0.0;
  std::set<std::string> codes;
  for (const auto& it : items) {
    require(it.family >= 0 && it.family < static_cast<int>(families.size()), "item " + it.code + " has an unknown family");
    require(is_probability(it.probability), "item " + it.code + " probability outside [0,1]");
    require(it.service_scale > 0.0, "item " + it.code + " needs a positive service scale");
    require(codes.insert(it.code).second, "duplicate item code " + it.code);
    total += it.probability;
  }
  require(!items.empty(), "the item catalog is empty");
  require(std::abs(total - 1.0) <= 1e-6, "item probabilities must sum to 1");
  require(is_probability(multi_item_probability), "multi_item_probability outside [0,1]");
  if (multi_item_probability > 0.0) {
    require(multi_item_family >= 0 && multi_item_family < static_cast<int>(families.size()),
            "multi_item_family must name a family");
    require(items.size() >= 2, "multi-item visits need at least two items");
  }
  require(is_probability(female_fraction), "female_fraction outside [0,1]");
  require(static_cast<int>(age_weights.size()) == kAgeBuckets, "age_weights needs one weight per age bucket");
  require(std::accumulate(age_weights.begin(), age_weights.end(), 0.0) > 0.0, "age_weights are all zero");
  for (double w : age_weights) require(w >= 0.0, "negative age weight");
  for (const auto& h : hourly_arrivals) {
    require(static_cast<int>(h.size()) == horizon.hours(), "hourly arrivals need one rate per horizon hour");
    for (double r : h) require(r >= 0.0, "negative arrival rate");
  }
  require(!rooms.empty(), "no rooms");
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const auto& r = rooms[i];
    require(i == 0 || rooms[i - 1].id < r.id, "rooms must have ascending distinct ids");
    require(r.type >= 0 && r.type < n_types, "room " + std::to_string(r.id) + " has an unknown type");
    require(r.speed > 0.0 && r.weight >= 0.0, "room " + std::to_string(r.id) + " has a bad speed or weight");
    for (const auto* shifts : {&r.weekday_shifts, &r.weekend_shifts}) {
      require(!shifts->empty(), "room " + std::to_string(r.id) + " needs shift options for both day kinds");
      double w = 0.0;
      for (const auto& s : *shifts) {
        require(s.start_hour <= s.end_hour && s.weight >= 0.0, "room " + std::to_string(r.id) + " has a bad shift");
        w += s.weight;
      }
      require(w > 0.0, "room " + std::to_string(r.id) + " has zero total shift weight");
    }
  }
  require(static_cast<int>(type_service_factor.size()) == n_types, "type_service_factor needs one value per type");
  require(static_cast<int>(hour_service_factor.size()) == horizon.hours(),
          "hour_service_factor needs one value per horizon hour");
  for (const auto* g : {&breaks, &walks}) {
    require(is_probability(g->probability), "gap probability outside [0,1]");
    require(g->minimum >= 0.0 && g->mean >= g->minimum, "gap mean must be >= minimum >= 0");
  }
  require(queue_sensitivity >= 0.0, "queue_sensitivity must be >= 0");
}

std::vector<std::string> SynthScenario::coverage_warnings() const {
  std::vector<std::string> out;
  for (int k = 0; k < kDayKinds; ++k) {
    for (int h = horizon.start_hour; h < horizon.end_hour; ++h) {
      if (hourly_arrivals[k][h - horizon.start_hour] <= 0.0) continue;
      const bool can_be_empty = std::all_of(rooms.begin(), rooms.end(), [&](const ScenarioRoom& r) {
        const auto& shifts = k == 0 ? r.weekday_shifts : r.weekend_shifts;
        return std::any_of(shifts.begin(), shifts.end(),
                           [&](const ShiftOption& s) { return s.weight > 0.0 && closed_at(s, h); });
      });
      if (can_be_empty) {
        out.push_back(std::string(k == 0 ? "weekday" : "weekend") + " hour " + std::to_string(h) +
                      " has arrivals but every room can be closed; patients will be held");
      }
    }
  }
  return out;
}

namespace {

ShiftOption shift_from_json(const nlohmann::json& j) {
  return {j.at("start_hour").get<int>(), j.at("end_hour").get<int>(), j.value("weight", 1.0)};
}

nlohmann::json shift_to_json(const ShiftOption& s) {
  return {{"start_hour", s.start_hour}, {"end_hour", s.end_hour}, {"weight", s.weight}};
}

GapSpec gap_from_json(const nlohmann::json& j) {
  return {j.at("probability").get<double>(), j.at("minimum").get<double>(), j.at("mean").get<double>()};
}

nlohmann::json gap_to_json(const GapSpec& g) {
  return {{"probability", g.probability}, {"minimum", g.minimum}, {"mean", g.mean}};
}

}  // namespace

SynthScenario scenario_from_json(const nlohmann::json& j) {
  SynthScenario s;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != SynthScenario::kSchemaVersion) {
      throw InputError("scenario: unsupported schema_version " + std::to_string(version));
    }
    s.name = j.value("name", "");
    s.horizon = {j.at("horizon").at("start_hour").get<int>(), j.at("horizon").at("end_hour").get<int>()};
    s.start_date = j.value("start_date", s.start_date);
    for (const auto& f : j.at("families")) {
      s.families.push_back({f.at("name").get<std::string>(), f.value("department", ""),
                            f.at("service_mean").get<double>(), f.at("service_cv").get<double>(),
                            f.at("type_preference").get<std::vector<double>>()});
    }
    for (const auto& it : j.at("items")) {
      s.items.push_back({it.at("code").get<std::string>(), it.at("family").get<int>(),
                         it.at("probability").get<double>(), it.value("service_scale", 1.0)});
    }
    s.multi_item_probability = j.at("multi_item").at("probability").get<double>();
    s.multi_item_family = j.at("multi_item").at("family").get<int>();
    s.female_fraction = j.at("demographics").at("female_fraction").get<double>();
    s.age_weights = j.at("demographics").at("age_weights").get<std::vector<double>>();
    s.hourly_arrivals[0] = j.at("arrivals").at("weekday").get<std::vector<double>>();
    s.hourly_arrivals[1] = j.at("arrivals").at("weekend").get<std::vector<double>>();
    s.n_types = j.at("n_types").get<int>();
    for (const auto& r : j.at("rooms")) {
      ScenarioRoom room;
      room.id = r.at("id").get<int>();
      room.type = r.at("type").get<int>();
      room.speed = r.value("speed", 1.0);
      room.weight = r.value("weight", 1.0);
      for (const auto& sh : r.at("weekday_shifts")) room.weekday_shifts.push_back(shift_from_json(sh));
      for (const auto& sh : r.at("weekend_shifts")) room.weekend_shifts.push_back(shift_from_json(sh));
      s.rooms.push_back(std::move(room));
    }
    s.type_service_factor = j.at("type_service_factor").get<std::vector<double>>();
    s.hour_service_factor = j.at("hour_service_factor").get<std::vector<double>>();
    s.breaks = gap_from_json(j.at("breaks"));
    s.walks = gap_from_json(j.at("walks"));
    s.queue_sensitivity = j.at("router").at("queue_sensitivity").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SynthScenario& s) {
  nlohmann::json families = nlohmann::json::array();
  for (const auto& f : s.families) {
    families.push_back({{"name", f.name},
                        {"department", f.department},
                        {"service_mean", f.service_mean},
                        {"service_cv", f.service_cv},
                        {"type_preference", f.type_preference}});
  }
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : s.items) {
    items.push_back({{"code", it.code}, {"family", it.family}, {"probability", it.probability},
                     {"service_scale", it.service_scale}});
  }
  nlohmann::json rooms = nlohmann::json::array();
  for (const auto& r : s.rooms) {
    nlohmann::json wd = nlohmann::json::array(), we = nlohmann::json::array();
    for (const auto& sh : r.weekday_shifts) wd.push_back(shift_to_json(sh));
    for (const auto& sh : r.weekend_shifts) we.push_back(shift_to_json(sh));
    rooms.push_back({{"id", r.id}, {"type", r.type}, {"speed", r.speed}, {"weight", r.weight},
                     {"weekday_shifts", wd}, {"weekend_shifts", we}});
  }
  return {{"schema_version", SynthScenario::kSchemaVersion},
          {"name", s.name},
          {"horizon", {{"start_hour", s.horizon.start_hour}, {"end_hour", s.horizon.end_hour}}},
          {"start_date", s.start_date},
          {"families", families},
          {"items", items},
          {"multi_item", {{"probability", s.multi_item_probability}, {"family", s.multi_item_family}}},
          {"demographics", {{"female_fraction", s.female_fraction}, {"age_weights", s.age_weights}}},
          {"arrivals", {{"weekday", s.hourly_arrivals[0]}, {"weekend", s.hourly_arrivals[1]}}},
          {"n_types", s.n_types},
          {"rooms", rooms},
          {"type_service_factor", s.type_service_factor},
          {"hour_service_factor", s.hour_service_factor},
          {"breaks", gap_to_json(s.breaks)},
          {"walks", gap_to_json(s.walks)},
          {"router", {{"queue_sensitivity", s.queue_sensitivity}}}};
}

SynthScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("scenario not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("scenario " + path.string() + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

ScenarioInputs::ScenarioInputs(const SynthScenario& s) : s_(s) {
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    item_weights_.push_back(s.items[i].probability);
    item_index_[s.items[i].code] = static_cast<int>(i);
  }
}

std::vector<int> ScenarioInputs::room_ids() const {
  std::vector<int> ids;
  for (const auto& r : s_.rooms) ids.push_back(r.id);
  return ids;
}

std::vector<int> ScenarioInputs::room_types() const {
  std::vector<int> t;
  for (const auto& r : s_.rooms) t.push_back(r.type);
  return t;
}

std::vector<SimPatient> ScenarioInputs::arrivals(const DayContext& day, Rng& rng) const {
  const auto times = nhpp_times(s_.hourly_arrivals[index_of(day.kind)], s_.horizon, rng);
  std::vector<SimPatient> out;
  out.reserve(times.size());
  for (Seconds t : times) {
    SimPatient p;
    p.arrival = t;
    if (rng.bernoulli(s_.multi_item_probability)) {
      p.group = s_.multi_item_family;
      const std::size_t n = std::min<std::size_t>(rng.bernoulli(0.7) ? 2 : 3, s_.items.size());
      std::vector<double> w = item_weights_;
      for (std::size_t k = 0; k < n; ++k) {
        const int i = rng.categorical(w);
        p.items.push_back(s_.items[i].code);
        w[i] = 0.0;
      }
    } else {
      const int i = rng.categorical(item_weights_);
      p.items.push_back(s_.items[i].code);
      p.group = s_.items[i].family;
    }
    p.gender = rng.bernoulli(s_.female_fraction) ? Gender::female : Gender::male;
    const int bucket = rng.categorical(s_.age_weights);
    const double lo = kAgeLowerBounds[bucket];
    const double hi = bucket + 1 < kAgeBuckets ? kAgeLowerBounds[bucket + 1] : 95.0;
    // Ages are recorded to one decimal; stay strictly below the next bucket.
    p.age = std::min(std::floor((lo + rng.uniform() * (hi - lo)) * 10.0) / 10.0, hi - 0.1);
    p.age = std::max(p.age, lo);
    p.department = s_.families[p.group].department;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<OpenInterval>> ScenarioInputs::open_schedule(const DayContext& day, Rng& rng) const {
  std::vector<std::vector<OpenInterval>> out(s_.rooms.size());
  for (std::size_t r = 0; r < s_.rooms.size(); ++r) {
    const auto& shifts = day.kind == DayKind::weekday ? s_.rooms[r].weekday_shifts : s_.rooms[r].weekend_shifts;
    std::vector<double> w;
    for (const auto& s : shifts) w.push_back(s.weight);
    const auto& s = shifts[rng.categorical(w)];
    const int a = std::max(s.start_hour, s_.horizon.start_hour);
    const int b = std::min(s.end_hour, s_.horizon.end_hour);
    if (a < b) out[r].push_back({a * kSecondsPerHour, b * kSecondsPerHour});
  }
  return out;
}

double ScenarioInputs::mean_service(int room_index, int hour, const SimPatient& patient) const {
  const auto& room = s_.rooms[room_index];
  const auto& fam = s_.families[patient.group];
  double scale = 1.0;
  if (patient.items.size() == 1) {
    auto it = item_index_.find(patient.items.front());
    if (it != item_index_.end()) scale = s_.items[it->second].service_scale;
  }
  const int h = std::clamp(hour - s_.horizon.start_hour, 0, s_.horizon.hours() - 1);
  return fam.service_mean * scale * s_.type_service_factor[room.type] * room.speed * s_.hour_service_factor[h];
}

Seconds ScenarioInputs::service(int room_index, int hour, const SimPatient& patient, Rng& rng) const {
  const double mean = mean_service(room_index, hour, patient);
  const double cv = s_.families[patient.group].service_cv;
  // Lognormal with the requested mean and coefficient of variation.
  const double sigma2 = std::log1p(cv * cv);
  const double x = std::exp(std::log(mean) - 0.5 * sigma2 + std::sqrt(sigma2) * rng.normal());
  return std::max<Seconds>(1, std::llround(x));
}

namespace {

Seconds draw_gap(const GapSpec& g, Rng& rng) {
  if (!rng.bernoulli(g.probability)) return 0;
  return std::max<Seconds>(1, std::llround(g.minimum + rng.exponential(g.mean - g.minimum)));
}

}  // namespace

Seconds ScenarioInputs::break_duration(int, int, Rng& rng) const { return draw_gap(s_.breaks, rng); }

Seconds ScenarioInputs::walk_duration(int, int, Rng& rng) const { return draw_gap(s_.walks, rng); }

int GroundTruthRouter::route(const SimState& state, const SimPatient& patient, Rng& rng) const {
  const auto& pref = s_.families[patient.group].type_preference;
  std::vector<double> w(state.rooms.size(), 0.0);
  for (std::size_t i = 0; i < state.rooms.size(); ++i) {
    const auto& r = state.rooms[i];
    if (!r.open) continue;
    w[i] = pref[r.type] * s_.rooms[i].weight * std::exp(-s_.queue_sensitivity * r.waiting());
  }
  return rng.categorical(w);
}

SynthResult synthesize_log(const SynthScenario& scenario, int n_days, std::uint64_t seed,
                           unsigned threads, const std::string& start_date) {
  if (n_days < 1) throw InputError("n_days must be >= 1");
  scenario.validate();
  SimConfig config;
  config.horizon = scenario.horizon;
  config.n_replications = n_days;
  config.seed = seed;
  config.start_date = start_date.empty() ? scenario.start_date : start_date;
  config.threads = threads;
  const ScenarioInputs inputs(scenario);
  const GroundTruthRouter router(scenario);
  SynthResult out;
  out.days = run_replications(inputs, router, config);
  out.records = flatten(out.days);
  out.warnings = scenario.coverage_warnings();
  int unserved = 0;
  for (const auto& d : out.days) unserved += d.unserved;
  if (unserved > 0) {
    out.warnings.push_back(std::to_string(unserved) + " patients found no open room and were not served");
  }
  return out;
}

}  // namespace uq
