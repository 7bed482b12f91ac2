#include "ultraqueue/bundle.hpp"

#include <fstream>

#include "ultraqueue/json_util.hpp"
#include "ultraqueue/routing.hpp"

namespace uq {

namespace {

nlohmann::json horizon_json(const Horizon& h) {
  return {{"start_hour", h.start_hour}, {"end_hour", h.end_hour}};
}

Horizon horizon_from(const nlohmann::json& j) {
  return {j.at("start_hour").get<int>(), j.at("end_hour").get<int>()};
}

Gender gender_from(const nlohmann::json& j) {
  auto g = parse_gender(j.get<std::string>());
  if (!g) throw InputError("model: bad gender " + j.dump());
  return *g;
}

}  // namespace

nlohmann::json model_to_json(const CalibratedModel& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : m.classes) classes.push_back({c.item_group, c.age_bucket, to_string(c.gender)});

  nlohmann::json arrivals = {{"horizon", horizon_json(m.arrivals.horizon)},
                             {"n_classes", m.arrivals.n_classes},
                             {"days", m.arrivals.days},
                             {"weekday", matrix_to_json(m.arrivals.rate[0])},
                             {"weekend", matrix_to_json(m.arrivals.rate[1])}};

  nlohmann::json days = nlohmann::json::array();
  for (const auto& d : m.patterns.days) {
    days.push_back({{"day_id", d.day_id}, {"kind", to_string(d.kind)}, {"open_hours", d.open_hours}});
  }

  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, sample] : m.service.cells()) {
    const auto [room, hour, cls] = key;
    cells.push_back({room, hour, cls, sample});
  }
  nlohmann::json service = {{"rooms", m.service.rooms()},
                            {"room_types", m.service.room_types()},
                            {"n_types", m.service.n_types()},
                            {"n_classes", m.service.n_classes()},
                            {"cells", cells}};

  nlohmann::json gap_cells = nlohmann::json::array();
  for (const auto& [key, c] : m.gaps.cells()) {
    gap_cells.push_back({{"type", key.first},
                         {"hour", key.second},
                         {"busy_handoffs", c.busy_handoffs},
                         {"breaks", c.breaks},
                         {"idle_starts", c.idle_starts},
                         {"walks", c.walks}});
  }
  nlohmann::json gaps = {{"threshold_seconds", m.gaps.threshold()}, {"n_types", m.gaps.n_types()}, {"cells", gap_cells}};

  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& pool : m.profiles) {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& pr : pool) p.push_back({pr.age, pr.department, pr.items});
    profiles.push_back(std::move(p));
  }

  return {{"schema_version", CalibratedModel::kSchemaVersion},
          {"provenance", {{"source_digest", m.source_digest}, {"seed", m.seed}}},
          {"horizon", horizon_json(m.horizon)},
          {"item_groups", to_json(m.groups)},
          {"room_types", to_json(m.room_types)},
          {"classes", classes},
          {"arrivals", arrivals},
          {"open_patterns", {{"rooms", m.patterns.rooms}, {"days", days}}},
          {"service", service},
          {"gaps", gaps},
          {"profiles", profiles},
          {"routing", m.routing ? to_json(*m.routing) : nlohmann::json(nullptr)}};
}

CalibratedModel model_from_json(const nlohmann::json& j) {
  CalibratedModel m;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != CalibratedModel::kSchemaVersion) {
      throw InputError("model: unsupported schema_version " + std::to_string(version));
    }
    m.source_digest = j.at("provenance").at("source_digest").get<std::string>();
    m.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    m.horizon = horizon_from(j.at("horizon"));
    m.groups = item_groups_from_json(j.at("item_groups"));
    m.room_types = room_types_from_json(j.at("room_types"));
    for (const auto& c : j.at("classes")) {
      m.classes.push_back({c[0].get<int>(), c[1].get<int>(), gender_from(c[2])});
    }

    const auto& a = j.at("arrivals");
    m.arrivals.horizon = horizon_from(a.at("horizon"));
    m.arrivals.n_classes = a.at("n_classes").get<int>();
    m.arrivals.days = a.at("days").get<std::array<int, kDayKinds>>();
    m.arrivals.rate[0] = matrix_from_json(a.at("weekday"), m.arrivals.horizon.hours());
    m.arrivals.rate[1] = matrix_from_json(a.at("weekend"), m.arrivals.horizon.hours());

    const auto& p = j.at("open_patterns");
    m.patterns.rooms = p.at("rooms").get<std::vector<int>>();
    for (const auto& d : p.at("days")) {
      DayPattern day;
      day.day_id = d.at("day_id").get<std::string>();
      const auto kind = parse_day_kind(d.at("kind").get<std::string>());
      if (!kind) throw InputError("model: bad day kind in open patterns");
      day.kind = *kind;
      day.open_hours = d.at("open_hours").get<std::vector<std::uint64_t>>();
      m.patterns.days.push_back(std::move(day));
    }

    const auto& s = j.at("service");
    std::map<ServiceTable::CellKey, ServiceTable::Sample> cells;
    for (const auto& c : s.at("cells")) {
      cells[{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()}] = c[3].get<std::vector<Seconds>>();
    }
    m.service = ServiceTable(s.at("rooms").get<std::vector<int>>(), s.at("room_types").get<std::vector<int>>(),
                             s.at("n_types").get<int>(), s.at("n_classes").get<int>(), std::move(cells));

    const auto& g = j.at("gaps");
    std::map<std::pair<int, int>, GapCell> gap_cells;
    for (const auto& c : g.at("cells")) {
      gap_cells[{c.at("type").get<int>(), c.at("hour").get<int>()}] =
          GapCell{c.at("busy_handoffs").get<int>(), c.at("breaks").get<std::vector<Seconds>>(),
                  c.at("idle_starts").get<int>(), c.at("walks").get<std::vector<Seconds>>()};
    }
    m.gaps = GapModel(g.at("threshold_seconds").get<Seconds>(), g.at("n_types").get<int>(), std::move(gap_cells));

    for (const auto& pool : j.at("profiles")) {
      std::vector<PatientProfile> out;
      for (const auto& pr : pool) {
        out.push_back({pr[0].get<double>(), pr[1].get<std::string>(), pr[2].get<std::vector<std::string>>()});
      }
      m.profiles.push_back(std::move(out));
    }
    if (!j.at("routing").is_null()) m.routing = policy_from_json(j.at("routing"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model bundle: ") + e.what());
  }
  m.validate();
  return m;
}

nlohmann::json read_json(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(what + " not found: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j, int indent) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(indent) << '\n';
}

void save_model(const std::filesystem::path& path, const CalibratedModel& model) {
  write_json(path, model_to_json(model));
}

CalibratedModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path, "model bundle"));
}

}  // namespace uq
