#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "ultraqueue/bundle.hpp"
#include "ultraqueue/calibrate.hpp"
#include "ultraqueue/engine.hpp"
#include "ultraqueue/metrics.hpp"
#include "ultraqueue/parallel.hpp"
#include "ultraqueue/rng.hpp"
#include "ultraqueue/routing.hpp"
#include "ultraqueue/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Common {
  std::uint64_t seed = 0;
  unsigned threads = uq::default_threads();
  std::string config;
};

struct SynthArgs {
  std::string scenario;
  std::string out;
  int days = 0;
  std::string start_date;
};

struct CalibrateArgs {
  std::string log;
  std::string out;
  std::string rooms = "1-32";
  int start_hour = 7;
  int end_hour = 17;
  int clusters = 5;
  int room_types = 4;
  long long threshold = 10;
  int profile_pool = 200;
  bool with_routing = false;
  std::string eval_dir;
};

struct TrainArgs {
  std::string log;
  std::string model;
  std::string out;
  std::string eval_dir;
  int importance_repeats = 3;
  int min_room_rows = 50;
};

struct SimulateArgs {
  std::string model;
  std::string mode = "two-level-sample";
  int reps = 100;
  std::string out;
  std::string start_date = "2024-01-01";
  bool no_breaks = false;
  bool no_walks = false;
};

struct ValidateArgs {
  std::string sim;
  std::string reference;
  std::string out;
  std::string model;
  bool include_in_service = false;
  double bin_minutes = 5.0;
};

struct ReportArgs {
  std::string report;
  std::string out;
  double bin_minutes = 5.0;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const fs::path& p) { return uq::hex64(uq::fnv1a64(read_file(p))); }

std::string config_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

/// Splices "--key=value" pairs from a JSON config file in front of the
/// subcommand's own arguments; repeated options keep the last value, so
/// flags on the command line win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  const json cfg = uq::read_json(path, "config file");
  if (!cfg.is_object()) throw uq::InputError("config file must hold a JSON object: " + path);
  std::vector<std::string> injected;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") continue;
    if (value.is_null()) continue;
    injected.push_back("--" + key + "=" + config_value(value));
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

/// Every option of a subcommand with its resolved value.
json resolved_config(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->get_type_size() == 0) {
      out[name] = opt->as<bool>();
      continue;
    }
    std::string value = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
    out[name] = value;
  }
  return out;
}

json manifest_base(const CLI::App& sub, const Common& common) {
  json cfg = resolved_config(sub);
  cfg["seed"] = std::to_string(common.seed);
  if (cfg.contains("threads")) cfg["threads"] = std::to_string(common.threads);
  return {{"tool", "ultraqueue"}, {"version", kVersion}, {"command", sub.get_name()}, {"config", cfg}};
}

json output_entry(const fs::path& p) { return {{"path", p.string()}, {"fnv1a64", file_digest(p)}}; }

json input_entry(const fs::path& p) { return {{"path", fs::absolute(p).string()}, {"fnv1a64", file_digest(p)}}; }

uq::RoomUniverse parse_universe(const std::string& s) {
  const auto parts = uq::split(s, '-');
  try {
    if (parts.size() == 1) return {std::stoi(parts[0]), std::stoi(parts[0])};
    if (parts.size() == 2) return {std::stoi(parts[0]), std::stoi(parts[1])};
  } catch (const std::exception&) {
  }
  throw uq::InputError("--rooms expects FIRST-LAST or a single room id, got '" + s + "'");
}

std::vector<uq::PatientRecord> load_log(const fs::path& p, uq::RoomUniverse universe) {
  if (!fs::exists(p)) throw uq::InputError("log not found: " + p.string());
  auto parsed = uq::parse_log(p, universe);
  for (const auto& r : parsed.rejections) {
    std::cerr << "warning: " << p.string() << ": row " << r.row << ", field '" << r.field
              << "' rejected: " << r.reason << "\n";
  }
  return std::move(parsed.records);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw uq::InputError("cannot write " + p.string());
  out << text;
}

fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_synth(const CLI::App& sub, const Common& c, const SynthArgs& a) {
  if (a.days < 1) throw uq::InputError("--days must be at least 1");
  const auto scenario = uq::load_scenario(a.scenario);
  const auto result = uq::synthesize_log(scenario, a.days, c.seed, c.threads, a.start_date);
  print_warnings(result.warnings);
  uq::write_log(a.out, result.records);

  int unserved = 0;
  for (const auto& d : result.days) unserved += d.unserved;
  json m = manifest_base(sub, c);
  m["inputs"] = {{"scenario", input_entry(a.scenario)}};
  m["outputs"] = {output_entry(a.out)};
  m["summary"] = {{"days", result.days.size()}, {"records", result.records.size()}, {"unserved", unserved}};
  m["warnings"] = result.warnings;
  uq::write_json(manifest_path_for(a.out), m, 2);
  std::cout << "wrote " << result.records.size() << " records over " << a.days << " days to " << a.out << "\n";
  return 0;
}

void write_evaluation(const fs::path& dir, const uq::RoutingEvaluation& eval, json& outputs) {
  const fs::path e = dir / "routing_evaluation.csv";
  const fs::path f = dir / "feature_importance.csv";
  write_text(e, uq::evaluation_csv(eval));
  write_text(f, uq::importance_csv(eval));
  outputs.push_back(output_entry(e));
  outputs.push_back(output_entry(f));
}

fs::path eval_dir_for(const std::string& explicit_dir, const fs::path& out) {
  if (!explicit_dir.empty()) return explicit_dir;
  return out.has_parent_path() ? out.parent_path() : fs::path(".");
}

int cmd_calibrate(const CLI::App& sub, const Common& c, const CalibrateArgs& a) {
  const auto universe = parse_universe(a.rooms);
  const auto log = load_log(a.log, universe);
  if (log.empty()) throw uq::InputError("log has no usable records: " + a.log);

  uq::CalibrationConfig cfg;
  cfg.horizon = {a.start_hour, a.end_hour};
  if (cfg.horizon.hours() < 1 || cfg.horizon.start_hour < 0 || cfg.horizon.end_hour > 24) {
    throw uq::InputError("horizon must satisfy 0 <= start < end <= 24");
  }
  cfg.n_item_clusters = a.clusters;
  cfg.n_room_types = a.room_types;
  cfg.threshold_seconds = a.threshold;
  cfg.seed = c.seed;
  cfg.profile_pool = a.profile_pool;
  cfg.train_routing = a.with_routing;
  cfg.threads = c.threads;

  auto built = uq::build_model(log, cfg);
  print_warnings(built.warnings);
  uq::save_model(a.out, built.model);

  json m = manifest_base(sub, c);
  m["inputs"] = {{"log", input_entry(a.log)}};
  json outputs = json::array({output_entry(a.out)});
  if (built.evaluation) write_evaluation(eval_dir_for(a.eval_dir, a.out), *built.evaluation, outputs);
  m["outputs"] = outputs;
  m["warnings"] = built.warnings;
  uq::write_json(manifest_path_for(a.out), m, 2);
  std::cout << "calibrated " << built.model.classes.size() << " classes, " << built.model.room_types.n_types()
            << " room types; model written to " << a.out << "\n";
  return 0;
}

int cmd_train(const CLI::App& sub, const Common& c, const TrainArgs& a) {
  auto model = uq::load_model(a.model);
  const auto& rooms = model.room_types.rooms;
  const auto log = load_log(a.log, {rooms.front(), rooms.back()});
  const std::string digest = uq::hex64(uq::fnv1a64(uq::serialize_log(log)));
  if (digest != model.source_digest) {
    std::cerr << "warning: log differs from the one the model was calibrated on\n";
  }

  uq::RoutingTrainOptions opts;
  opts.seed = uq::derive_seed(c.seed, {3});
  opts.threads = c.threads;
  opts.importance_repeats = a.importance_repeats;
  opts.min_room_rows = a.min_room_rows;
  auto trained = uq::train_policy(log, model, opts);
  print_warnings(trained.warnings);
  model.routing = std::move(trained.policy);
  uq::save_model(a.out, model);

  json m = manifest_base(sub, c);
  m["inputs"] = {{"log", input_entry(a.log)}, {"model", input_entry(a.model)}};
  json outputs = json::array({output_entry(a.out)});
  write_evaluation(eval_dir_for(a.eval_dir, a.out), trained.evaluation, outputs);
  m["outputs"] = outputs;
  m["warnings"] = trained.warnings;
  uq::write_json(manifest_path_for(a.out), m, 2);
  std::cout << uq::evaluation_csv(trained.evaluation);
  return 0;
}

int cmd_simulate(const CLI::App& sub, const Common& c, const SimulateArgs& a) {
  if (a.reps < 1) throw uq::InputError("--reps must be at least 1");
  if (!uq::is_iso_date(a.start_date)) throw uq::InputError("--start-date must be YYYY-MM-DD");
  const auto model = uq::load_model(a.model);

  std::unique_ptr<uq::Router> router;
  if (a.mode == "jsq") {
    router = std::make_unique<uq::JsqRouter>(uq::model_eligibility(model));
  } else {
    if (!model.routing) throw uq::InputError("model has no routing policy; run train-routing or use --mode jsq");
    const auto mode = a.mode == "two-level-argmax" ? uq::RoutingMode::argmax : uq::RoutingMode::sample;
    router = std::make_unique<uq::TwoLevelRouter>(*model.routing, mode);
  }

  uq::SimConfig cfg;
  cfg.horizon = model.horizon;
  cfg.n_replications = a.reps;
  cfg.seed = c.seed;
  cfg.start_date = a.start_date;
  cfg.breaks = !a.no_breaks;
  cfg.walks = !a.no_walks;
  cfg.threads = c.threads;
  const uq::ModelInputs inputs(model);
  const auto days = uq::run_replications(inputs, *router, cfg);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  json outputs = json::array();
  json reps = json::array();
  for (std::size_t i = 0; i < days.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "rep_%04zu.csv", i);
    const fs::path p = dir / name;
    uq::write_log(p, days[i].records);
    outputs.push_back(output_entry(p));
    reps.push_back({{"file", name},
                    {"day_id", days[i].day_id},
                    {"seed", days[i].seed},
                    {"arrivals", days[i].arrivals},
                    {"unserved", days[i].unserved}});
  }
  json m = manifest_base(sub, c);
  m["inputs"] = {{"model", input_entry(a.model)}};
  m["outputs"] = outputs;
  m["replications"] = reps;
  uq::write_json(dir / "manifest.json", m, 2);
  std::cout << "simulated " << days.size() << " replications into " << dir.string() << "\n";
  return 0;
}

void print_summary(const uq::ValidationReport& r) {
  auto line = [](const char* name, const uq::Diff& d) {
    std::cout << name << ": sim " << uq::format_double(d.sim) << ", ref " << uq::format_double(d.ref);
    if (d.rel) std::cout << ", relative diff " << uq::format_double(*d.rel);
    std::cout << "\n";
  };
  std::cout << "waiting-time KS diff: " << uq::format_double(r.ks_wait) << "\n";
  line("mean queue length", r.mean_queue_length);
  line("mean wait (min)", r.mean_wait_minutes);
}

int cmd_validate(const CLI::App& sub, const Common& c, const ValidateArgs& a) {
  const fs::path sim_dir = a.sim;
  const json sim_manifest = uq::read_json(sim_dir / "manifest.json", "simulation manifest");
  std::string model_path = a.model;
  if (model_path.empty()) {
    model_path = sim_manifest.at("inputs").at("model").at("path").get<std::string>();
  }
  const auto model = uq::load_model(model_path);
  if (!fs::exists(a.reference)) throw uq::InputError("reference log not found: " + a.reference);

  const auto& rooms = model.room_types.rooms;
  const uq::RoomUniverse universe{rooms.front(), rooms.back()};
  std::vector<uq::PatientRecord> sim;
  for (const auto& rep : sim_manifest.at("replications")) {
    auto part = load_log(sim_dir / rep.at("file").get<std::string>(), universe);
    sim.insert(sim.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto ref = load_log(a.reference, universe);

  uq::CompareOptions opts;
  opts.horizon = model.horizon;
  opts.room_type = model.room_types.room_type;
  for (int t = 0; t < model.room_types.n_types(); ++t) opts.type_labels.push_back(model.room_types.label(t));
  opts.include_in_service = a.include_in_service;
  const auto report = uq::compare(sim, ref, opts);

  const fs::path out = a.out;
  const fs::path report_path = out / "report.json";
  uq::write_json(report_path, uq::to_json(report));
  json outputs = json::array({output_entry(report_path)});
  for (const auto& p : uq::render_report(report, out, a.bin_minutes)) outputs.push_back(output_entry(p));

  json m = manifest_base(sub, c);
  m["inputs"] = {{"simulation_manifest", input_entry(sim_dir / "manifest.json")},
                 {"model", input_entry(model_path)},
                 {"reference", input_entry(a.reference)}};
  m["outputs"] = outputs;
  uq::write_json(out / "manifest.json", m, 2);
  print_summary(report);
  return 0;
}

int cmd_report(const CLI::App& sub, const Common& c, const ReportArgs& a) {
  const auto report = uq::report_from_json(uq::read_json(a.report, "report"));
  json outputs = json::array();
  for (const auto& p : uq::render_report(report, a.out, a.bin_minutes)) outputs.push_back(output_entry(p));
  json m = manifest_base(sub, c);
  m["inputs"] = {{"report", input_entry(a.report)}};
  m["outputs"] = outputs;
  uq::write_json(fs::path(a.out) / "manifest.json", m, 2);
  print_summary(report);
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool threads) {
  sub->add_option("--seed", c.seed, "master seed (default: $ULTRAQUEUE_SEED, else 0)");
  if (threads) sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--config", c.config, "JSON file of option values; command-line flags override it");
}

/// Seed precedence: flag or config file, then the environment, then 0.
void resolve_seed(const CLI::App& sub, Common& c) {
  if (sub.get_option("--seed")->count() > 0) return;
  if (const char* env = std::getenv("ULTRAQUEUE_SEED")) {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw uq::InputError(std::string("ULTRAQUEUE_SEED is not an unsigned integer: ") + env);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outpatient ultrasound queueing network: synthesize, calibrate, simulate, validate", "ultraqueue"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  SynthArgs synth;
  CalibrateArgs cal;
  TrainArgs train;
  SimulateArgs simulate;
  ValidateArgs validate;
  ReportArgs report;

  auto* s = app.add_subcommand("synth", "generate a synthetic event log from a scenario");
  s->add_option("--scenario", synth.scenario, "scenario JSON")->required();
  s->add_option("--out", synth.out, "output log CSV")->required();
  s->add_option("--days", synth.days, "number of days")->required();
  s->add_option("--start-date", synth.start_date, "first day (default: the scenario's)");
  add_common(s, common, true);

  auto* c = app.add_subcommand("calibrate", "estimate a model bundle from an event log");
  c->add_option("--log", cal.log, "event log CSV")->required();
  c->add_option("--out", cal.out, "output model JSON")->required();
  c->add_option("--rooms", cal.rooms, "room universe FIRST-LAST (or one room id)");
  c->add_option("--start-hour", cal.start_hour, "first horizon hour");
  c->add_option("--end-hour", cal.end_hour, "end of the horizon (exclusive hour)");
  c->add_option("--clusters", cal.clusters, "exam item clusters")->check(CLI::PositiveNumber);
  c->add_option("--room-types", cal.room_types, "room types")->check(CLI::PositiveNumber);
  c->add_option("--threshold-seconds", cal.threshold, "largest gap still treated as no break");
  c->add_option("--profile-pool", cal.profile_pool, "patient profiles kept per class")->check(CLI::PositiveNumber);
  c->add_flag("--with-routing", cal.with_routing, "also train the two-level routing policy");
  c->add_option("--eval-dir", cal.eval_dir, "directory for routing evaluation CSVs (default: next to --out)");
  add_common(c, common, true);

  auto* t = app.add_subcommand("train-routing", "train the two-level routing policy into a model bundle");
  t->add_option("--log", train.log, "event log CSV used for calibration")->required();
  t->add_option("--model", train.model, "input model JSON")->required();
  t->add_option("--out", train.out, "output model JSON")->required();
  t->add_option("--eval-dir", train.eval_dir, "directory for evaluation CSVs (default: next to --out)");
  t->add_option("--importance-repeats", train.importance_repeats, "permutation repeats")->check(CLI::PositiveNumber);
  t->add_option("--min-room-rows", train.min_room_rows, "rows below which a room type gets no forest");
  add_common(t, common, true);

  auto* m = app.add_subcommand("simulate", "run replications of a calibrated model");
  m->add_option("--model", simulate.model, "model JSON")->required();
  m->add_option("--mode", simulate.mode, "routing policy")
      ->check(CLI::IsMember({"two-level-sample", "two-level-argmax", "jsq"}));
  m->add_option("--reps", simulate.reps, "replications");
  m->add_option("--out", simulate.out, "output directory")->required();
  m->add_option("--start-date", simulate.start_date, "day of the first replication");
  m->add_flag("--no-breaks", simulate.no_breaks, "disable technician breaks");
  m->add_flag("--no-walks", simulate.no_walks, "disable walking delays");
  add_common(m, common, true);

  auto* v = app.add_subcommand("validate", "compare simulated logs with a reference log");
  v->add_option("--sim", validate.sim, "simulation output directory")->required();
  v->add_option("--reference", validate.reference, "reference log CSV")->required();
  v->add_option("--out", validate.out, "report directory")->required();
  v->add_option("--model", validate.model, "model JSON (default: the one named in the simulation manifest)");
  v->add_flag("--include-in-service", validate.include_in_service, "count patients in service as queued");
  v->add_option("--bin-minutes", validate.bin_minutes, "wait histogram bin width")->check(CLI::PositiveNumber);
  add_common(v, common, false);

  auto* r = app.add_subcommand("report", "re-render report CSVs from report.json");
  r->add_option("--report", report.report, "report.json from validate")->required();
  r->add_option("--out", report.out, "output directory")->required();
  r->add_option("--bin-minutes", report.bin_minutes, "wait histogram bin width")->check(CLI::PositiveNumber);
  add_common(r, common, false);

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const uq::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    resolve_seed(*sub, common);
    if (sub == s) return cmd_synth(*sub, common, synth);
    if (sub == c) return cmd_calibrate(*sub, common, cal);
    if (sub == t) return cmd_train(*sub, common, train);
    if (sub == m) return cmd_simulate(*sub, common, simulate);
    if (sub == v) return cmd_validate(*sub, common, validate);
    if (sub == r) return cmd_report(*sub, common, report);
  } catch (const uq::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const uq::CalibrationError& e) {
    std::cerr << "calibration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
