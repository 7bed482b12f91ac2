// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "ultraqueue/bundle.hpp"
#include "ultraqueue/calibrate.hpp"
#include "ultraqueue/classify.hpp"
#include "ultraqueue/engine.hpp"
#include "ultraqueue/forest.hpp"
#include "ultraqueue/metrics.hpp"
#include "ultraqueue/routing.hpp"
#include "ultraqueue/scenario.hpp"

using namespace uq;
using uq::testing::FirstOpenRouter;
using uq::testing::QueueInputs;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. M/M/1 with lambda = 0.8/min and mean service 1 min: mean wait 4 min.
Outcome mm1() {
  const auto t0 = std::chrono::steady_clock::now();
  QueueInputs in(1, uq::testing::poisson_arrivals(48.0), [](int, const SimPatient&, Rng& rng) {
    return uq::testing::rounded_exponential(rng, 60.0);
  });
  // Four long days of 5250 hours each keep the empty-start transient negligible.
  SimConfig cfg;
  cfg.horizon = {0, 5250};
  cfg.n_replications = 4;
  cfg.seed = 2024;
  cfg.breaks = cfg.walks = false;
  const auto days = run_replications(in, FirstOpenRouter{}, cfg);
  double total_wait = 0;
  std::size_t n = 0;
  for (const auto& d : days) {
    for (const auto& r : d.records) total_wait += static_cast<double>(r.wait());
    n += d.records.size();
  }
  const double mean_min = total_wait / static_cast<double>(n) / 60.0;
  const double rel = std::abs(mean_min - 4.0) / 4.0;
  const double elapsed = seconds_since(t0);
  return {n >= 1000000 && rel <= 0.05 && elapsed < 60.0,
          std::to_string(n) + " arrivals, mean wait " + fmt("%.4f", mean_min) + " min (rel err " + fmt("%.4f", rel) +
              " <= 0.05), " + fmt("%.1f", elapsed) + " s < 60 s"};
}

// 2. Engine waits equal the Lindley recursion on a fixed sequence.
Outcome lindley() {
  Rng rng(7);
  std::vector<Seconds> arrivals;
  std::map<Seconds, Seconds> service;
  Seconds t = 0;
  for (int i = 0; i < 10000; ++i) {
    t += 1 + static_cast<Seconds>(rng.below(16));
    arrivals.push_back(t);
    service[t] = 1 + static_cast<Seconds>(rng.below(15));
  }
  QueueInputs in(1, [&](const DayContext&, Rng&) { return arrivals; },
                 [&](int, const SimPatient& p, Rng&) { return service.at(p.arrival); });
  SimConfig cfg;
  cfg.horizon = {0, 24};
  cfg.breaks = cfg.walks = false;
  const auto d = simulate_day(in, FirstOpenRouter{}, cfg, 0);
  if (d.records.size() != arrivals.size()) return {false, "served " + std::to_string(d.records.size())};
  Seconds w = 0;
  int mismatches = 0;
  Seconds max_wait = 0;
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (i > 0) w = std::max<Seconds>(0, w + service[arrivals[i - 1]] - (arrivals[i] - arrivals[i - 1]));
    if (d.records[i].wait() != w) ++mismatches;
    max_wait = std::max(max_wait, w);
  }
  return {mismatches == 0, "10000 arrivals, " + std::to_string(mismatches) + " mismatches, longest wait " +
                               std::to_string(max_wait) + " s"};
}

struct ClosedLoop {
  ValidationReport two_level;
  ValidationReport jsq;
  double seconds = 0;
};

const ClosedLoop& closed_loop() {
  static const ClosedLoop result = [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto scenario = load_scenario(uq::testing::data_path("scenarios/center.json"));
    const auto train = synthesize_log(scenario, 200, 101, 4);
    CalibrationConfig cfg;
    cfg.seed = 202;
    cfg.threads = 4;
    const auto built = build_model(train.records, cfg);
    const auto& model = built.model;

    // Fresh ground-truth days over the same calendar.
    const auto reference = synthesize_log(scenario, 100, 303, 4).records;

    CompareOptions opts;
    opts.horizon = model.horizon;
    opts.room_type = model.room_types.room_type;
    for (int t = 0; t < model.room_types.n_types(); ++t) opts.type_labels.push_back(model.room_types.label(t));

    SimConfig sim;
    sim.n_replications = 100;
    sim.seed = 404;
    sim.threads = 4;
    sim.start_date = scenario.start_date;
    const ModelInputs inputs(model);
    const TwoLevelRouter two_level(*model.routing, RoutingMode::sample);
    const JsqRouter jsq(model_eligibility(model));

    ClosedLoop out;
    out.two_level = compare(flatten(run_replications(inputs, two_level, sim)), reference, opts);
    out.jsq = compare(flatten(run_replications(inputs, jsq, sim)), reference, opts);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return result;
}

// 3. Closed-loop reproduction of the validation table.
Outcome closed_loop_fidelity() {
  const auto& c = closed_loop();
  const auto& r = c.two_level;
  const double q = r.mean_queue_length.rel.value_or(1e9);
  const double w = r.mean_wait_minutes.rel.value_or(1e9);
  const bool pass = r.ks_wait <= 0.06 && q <= 0.10 && w <= 0.20;
  return {pass, "KS " + fmt("%.4f", r.ks_wait) + " (<= 0.06), queue length " + fmt("%.3f", r.mean_queue_length.sim) +
                    " vs " + fmt("%.3f", r.mean_queue_length.ref) + " rel " + fmt("%.4f", q) + " (<= 0.10), wait " +
                    fmt("%.2f", r.mean_wait_minutes.sim) + " vs " + fmt("%.2f", r.mean_wait_minutes.ref) +
                    " min rel " + fmt("%.4f", w) + " (<= 0.20); pipeline " + fmt("%.0f", c.seconds) + " s"};
}

// 4. JSQ baseline is further from the truth than the learned policy.
Outcome baseline_ordering() {
  const auto& c = closed_loop();
  return {c.jsq.ks_wait > c.two_level.ks_wait,
          "KS jsq " + fmt("%.4f", c.jsq.ks_wait) + " > two-level " + fmt("%.4f", c.two_level.ks_wait)};
}

// 5. Routed counts per (room type, hour).
Outcome routed_counts() {
  const auto& r = closed_loop().two_level;
  double worst = 0;
  int cells = 0;
  std::string where;
  for (const auto& cell : r.routed_by_type) {
    if (cell.diff.ref < 1.0 || !cell.diff.rel) continue;
    ++cells;
    if (*cell.diff.rel > worst) {
      worst = *cell.diff.rel;
      where = "R" + std::to_string(cell.key + 1) + " hour " + std::to_string(cell.hour);
    }
  }
  return {cells > 0 && worst <= 0.25,
          std::to_string(cells) + " cells with >= 1/h, worst rel diff " + fmt("%.4f", worst) + " at " + where +
              " (<= 0.25)"};
}

// 6. Per-hour arrival counts of a piecewise rate profile.
Outcome nhpp() {
  ArrivalRateTable table;
  table.n_classes = 2;
  table.days = {1, 1};
  const double profile[2][10] = {{2, 5, 8, 8, 3, 0.5, 4, 6, 2, 1}, {1, 1, 2, 3, 3, 0, 1, 2, 1, 0.5}};
  for (auto& m : table.rate) {
    m.resize(2, 10);
    for (int c = 0; c < 2; ++c) {
      for (int h = 0; h < 10; ++h) m(c, h) = profile[c][h];
    }
  }
  const int days = 10000;
  std::vector<double> counts(10, 0.0);
  QueueInputs in(4, [&](const DayContext& day, Rng& rng) {
    std::vector<Seconds> times;
    for (const auto& a : generate_arrivals(table, day.kind, rng.next())) times.push_back(a.time);
    return times;
  }, [](int, const SimPatient&, Rng&) { return Seconds{30}; });
  SimConfig cfg;
  cfg.n_replications = days;
  cfg.seed = 55;
  cfg.threads = 4;
  for (const auto& d : run_replications(in, FirstOpenRouter{}, cfg)) {
    for (const auto& r : d.records) counts[hour_of(r.arrival_ts) - 7] += 1;
  }
  double worst_z = 0;
  for (int h = 0; h < 10; ++h) {
    const double mean = profile[0][h] + profile[1][h];
    const double se = std::sqrt(mean / days);
    worst_z = std::max(worst_z, std::abs(counts[h] / days - mean) / se);
  }
  return {worst_z <= 3.0, "10 hours over 10000 days, largest |z| " + fmt("%.3f", worst_z) + " (<= 3)"};
}

forest::Dataset separable(int n, std::uint64_t seed) {
  Rng rng(seed);
  forest::Dataset d;
  d.n_classes = 2;
  d.x.resize(n, 6);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) d.x(i, j) = rng.uniform();
    d.y[i] = d.x(i, 0) > 0.5 ? 1 : 0;
  }
  return d;
}

// 7. Forest accuracy, importance ranking and AUC against the pairwise oracle.
Outcome forest_check() {
  forest::FeatureSchema schema;
  for (int j = 1; j <= 6; ++j) schema.add("x" + std::to_string(j));
  const auto train = separable(10000, 1);
  const auto test = separable(5000, 2);
  const auto f = forest::train(train, schema, forest::Hyperparams::first_level(), 4);
  const double acc = forest::accuracy(f.predict_proba(test.x), test.y);
  const auto imp = forest::permutation_importance(f, test, forest::Metric::accuracy, 3, 9);
  const bool x1_first = imp.front().feature == "x1" &&
                        std::all_of(imp.begin() + 1, imp.end(), [&](auto& v) { return v.importance < imp[0].importance; });

  double worst = 0;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(181));
    const auto sub = separable(n, 100 + trial);
    Eigen::MatrixXd proba = f.predict_proba(sub.x);
    // Coarsen scores so that ties are exercised.
    proba = (proba * 4).array().round() / 4;
    double brute = 0;
    int used = 0;
    for (int c = 0; c < 2; ++c) {
      std::vector<double> s(n);
      std::vector<bool> pos(n);
      int n_pos = 0;
      for (int i = 0; i < n; ++i) {
        s[i] = proba(i, c);
        pos[i] = sub.y[i] == c;
        n_pos += pos[i];
      }
      if (n_pos == 0 || n_pos == n) continue;
      brute += uq::testing::auc_brute_force(s, pos);
      ++used;
    }
    worst = std::max(worst, std::abs(forest::ovr_auc(proba, sub.y) - brute / used));
  }
  return {acc >= 0.95 && x1_first && worst <= 1e-9,
          "test accuracy " + fmt("%.4f", acc) + " (>= 0.95), top feature " + imp.front().feature + " importance " +
              fmt("%.4f", imp.front().importance) + ", next " + fmt("%.4f", imp[1].importance) +
              ", AUC oracle max diff " + fmt("%.1e", worst) + " (<= 1e-9)"};
}

// 8. KS against brute-force ECDF enumeration.
Outcome ks_check() {
  Rng rng(8);
  int cases = 0, mismatches = 0;
  for (int trial = 0; trial < 150; ++trial, ++cases) {
    const std::size_t n = 1 + rng.below(1000), m = 1 + rng.below(1000);
    if (trial % 2 == 0) {
      const auto span = 1 + rng.below(200);
      std::vector<Seconds> x(n), y(m);
      for (auto& v : x) v = static_cast<Seconds>(rng.below(span));
      for (auto& v : y) v = static_cast<Seconds>(rng.below(span) + rng.below(5));
      if (ks_two_sample(x, y) != uq::testing::ks_brute_force(x, y)) ++mismatches;
    } else {
      std::vector<double> x(n), y(m);
      for (auto& v : x) v = rng.normal();
      for (auto& v : y) v = rng.normal() * 1.5 + 0.2;
      if (ks_two_sample(x, y) != uq::testing::ks_brute_force(x, y)) ++mismatches;
    }
  }
  return {mismatches == 0 && cases >= 100,
          std::to_string(cases) + " random cases (n, m <= 1000), " + std::to_string(mismatches) + " mismatches"};
}

// 9. EM log-likelihood monotonicity and recovery of separated clusters.
Outcome em_check() {
  Rng rng(9);
  double worst_drop = 0;
  int datasets = 0;
  for (int trial = 0; trial < 60; ++trial, ++datasets) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const int d = 2 + static_cast<int>(rng.below(4));
    const int n = 40 + static_cast<int>(rng.below(200));
    Eigen::MatrixXd centers(k, d);
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < d; ++j) centers(c, j) = rng.normal() * 3;
    }
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(rng.below(k));
      for (int j = 0; j < d; ++j) x(i, j) = centers(c, j) + rng.normal();
    }
    const auto fit = fit_gmm(x, k, 1000 + trial);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
      worst_drop = std::max(worst_drop, fit.log_likelihood[i - 1] - fit.log_likelihood[i]);
    }
  }
  Eigen::MatrixXd x(200, 3);
  std::vector<int> truth(200);
  for (int i = 0; i < 200; ++i) {
    truth[i] = i < 100 ? 0 : 1;
    for (int j = 0; j < 3; ++j) x(i, j) = (truth[i] == 0 ? -10.0 : 10.0) + rng.normal();
  }
  const double ari = uq::testing::adjusted_rand_index(truth, fit_gmm(x, 2, 5).assignment);
  return {worst_drop <= 1e-9 && ari >= 0.95,
          std::to_string(datasets) + " datasets, largest log-likelihood drop " + fmt("%.2e", worst_drop) +
              " (<= 1e-9), ARI " + fmt("%.4f", ari) + " (>= 0.95)"};
}

// 10. Break probability and mean recovered from a synthetic log.
Outcome gap_round_trip() {
  const auto scenario = load_scenario(uq::testing::data_path("scenarios/center.json"));
  const auto log = synthesize_log(scenario, 200, 10, 4).records;
  RoomTypeModel types;
  for (const auto& room : scenario.rooms) {
    types.rooms.push_back(room.id);
    types.room_type[room.id] = 0;
  }
  types.members = {types.rooms};
  const auto gaps = estimate_gaps(log, types, 10);
  double handoffs = 0, breaks = 0, total = 0;
  for (const auto& [key, cell] : gaps.cells()) {
    handoffs += cell.busy_handoffs;
    breaks += static_cast<double>(cell.breaks.size());
    for (Seconds b : cell.breaks) total += static_cast<double>(b);
  }
  const double p = breaks / handoffs;
  const double mean = total / breaks;
  const double rel = std::abs(mean - scenario.breaks.mean) / scenario.breaks.mean;
  return {std::abs(p - scenario.breaks.probability) <= 0.03 && rel <= 0.10,
          fmt("%.0f", handoffs) + " busy handoffs, break probability " + fmt("%.4f", p) + " vs " +
              fmt("%.2f", scenario.breaks.probability) + " (+-0.03), mean " + fmt("%.1f", mean) + " s vs " +
              fmt("%.0f", scenario.breaks.mean) + " (rel " + fmt("%.4f", rel) + " <= 0.10)"};
}

// 11. Every stage is a pure function of its inputs and seed.
Outcome determinism() {
  const auto scenario = load_scenario(uq::testing::data_path("scenarios/center.json"));
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* stage) {
    if (!ok) failed.push_back(stage);
  };
  const auto log1 = serialize_log(synthesize_log(scenario, 30, 1, 1).records);
  const auto log = synthesize_log(scenario, 30, 1, 4).records;
  expect(log1 == serialize_log(log), "synth");

  CalibrationConfig cfg;
  cfg.seed = 2;
  cfg.threads = 1;
  const auto a = build_model(log, cfg);
  cfg.threads = 4;
  const auto b = build_model(log, cfg);
  const auto model_json = model_to_json(a.model).dump();
  expect(model_json == model_to_json(b.model).dump(), "calibrate");
  expect(evaluation_csv(*a.evaluation) == evaluation_csv(*b.evaluation), "routing evaluation");

  RoutingTrainOptions topt;
  topt.seed = 3;
  expect(train_policy(log, a.model, topt).policy == train_policy(log, a.model, topt).policy, "train-routing");

  const auto model = model_from_json(nlohmann::json::parse(model_json));
  const ModelInputs inputs(model);
  const TwoLevelRouter router(*model.routing, RoutingMode::sample);
  SimConfig sim;
  sim.n_replications = 16;
  sim.seed = 4;
  sim.threads = 1;
  const auto s1 = flatten(run_replications(inputs, router, sim));
  sim.threads = 4;
  const auto s4 = flatten(run_replications(inputs, router, sim));
  expect(serialize_log(s1) == serialize_log(s4), "simulate");
  const JsqRouter jsq(model_eligibility(model));
  expect(serialize_log(flatten(run_replications(inputs, jsq, sim))) ==
             serialize_log(flatten(run_replications(inputs, jsq, sim))),
         "simulate jsq");

  CompareOptions opts;
  opts.room_type = model.room_types.room_type;
  for (int t = 0; t < model.room_types.n_types(); ++t) opts.type_labels.push_back(model.room_types.label(t));
  expect(to_json(compare(s1, log, opts)).dump() == to_json(compare(s4, log, opts)).dump(), "validate");

  std::string detail = "synth, calibrate, train-routing, simulate (1 vs 4 threads), validate";
  if (failed.empty()) return {true, detail + ": byte-identical"};
  detail = "differs in:";
  for (const auto& f : failed) detail += " " + f;
  return {false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"M/M/1 oracle", mm1},
      {"Lindley equivalence", lindley},
      {"closed-loop fidelity", closed_loop_fidelity},
      {"JSQ baseline ordering", baseline_ordering},
      {"routed counts per type and hour", routed_counts},
      {"NHPP per-hour counts", nhpp},
      {"forest correctness", forest_check},
      {"KS correctness", ks_check},
      {"EM monotonicity", em_check},
      {"gap-model round trip", gap_round_trip},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
