#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "ultraqueue/calibrate.hpp"
#include "ultraqueue/policy.hpp"
#include "ultraqueue/sim_state.hpp"

namespace uq {

/// Patient and clock attributes shared by both routing levels.
struct RoutingContext {
  double age = 0.0;
  int group = 0;
  int hour = 0;
  int weekday = 0;
};

// Level 1: age, item group one-hot, hour, weekday one-hot, waiting patients per
// room type, open rooms per room type.
forest::FeatureSchema level1_schema(int n_groups, int n_types);
std::vector<double> level1_features(const RoutingContext& ctx, int n_groups,
                                    std::span<const int> queue_by_type,
                                    std::span<const int> open_by_type);

// Level 2: the same patient block, then waiting patients and an open flag per
// room of the chosen type.
forest::FeatureSchema level2_schema(int n_groups, const std::vector<int>& rooms);
std::vector<double> level2_features(const RoutingContext& ctx, int n_groups,
                                    std::span<const int> queue, std::span<const int> open);

struct RoutingFeaturesL1 {
  RoutingContext context;
  std::vector<int> queue_by_type;
  std::vector<int> open_by_type;
};

RoutingFeaturesL1 extract_l1(const SimState& state, const SimPatient& patient, int n_types);

/// Zeroes masked entries, renormalizes and samples or takes the argmax (lowest
/// index on ties). Falls back to uniform over the mask when no unmasked mass
/// remains; -1 when the mask is empty.
int choose_masked(std::span<const double> proba, std::span<const char> mask, RoutingMode mode,
                  Rng& rng);

class TwoLevelRouter : public Router {
 public:
  TwoLevelRouter(const RoutingPolicy& policy, RoutingMode mode) : policy_(policy), mode_(mode) {}
  int route(const SimState& state, const SimPatient& patient, Rng& rng) const override;

 private:
  const RoutingPolicy& policy_;
  RoutingMode mode_;
};

/// Join-shortest-queue over open admissible rooms, counting waiting and
/// in-service patients; ties go to the lowest room id.
class JsqRouter : public Router {
 public:
  explicit JsqRouter(std::vector<std::vector<char>> eligible) : eligible_(std::move(eligible)) {}
  int route(const SimState& state, const SimPatient& patient, Rng& rng) const override;

 private:
  std::vector<std::vector<char>> eligible_;  // [group][type]
};

/// Item group x room type admissibility observed in a log (count >= 1).
std::vector<std::vector<char>> observed_eligibility(const std::vector<PatientRecord>& log,
                                                    const ItemGroupModel& groups,
                                                    const RoomTypeModel& types);

/// State seen by one historical arrival, reconstructed by replaying its day.
/// Eligibility of the model's policy, or the (group, type) pairs present in
/// its service table when no policy was trained.
std::vector<std::vector<char>> model_eligibility(const CalibratedModel& model);

struct ReplayRow {
  std::size_t record = 0;
  RoutingContext context;
  std::vector<int> queue;  // per room index: earlier arrivals to the room still waiting at this arrival
  std::vector<int> open;   // per room index: open in the arrival hour per the day's pattern
  int room_index = 0;
  int type = 0;
};

/// One row per record arriving inside the horizon, in log order.
std::vector<ReplayRow> replay_features(const std::vector<PatientRecord>& log,
                                       const CalibratedModel& model);

struct RoutingTrainOptions {
  forest::Hyperparams level1 = forest::Hyperparams::first_level();
  std::vector<forest::Hyperparams> level2;  // per type; empty: defaults by type order
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double train_fraction = 0.8;
  int importance_repeats = 3;
  int min_room_rows = 50;
};

struct TrainedRouting {
  RoutingPolicy policy;
  RoutingEvaluation evaluation;
  std::vector<std::string> warnings;
};

TrainedRouting train_policy(const std::vector<PatientRecord>& log, const CalibratedModel& model,
                            const RoutingTrainOptions& options);

/// Columns: level,model,split,auc,accuracy,rows
std::string evaluation_csv(const RoutingEvaluation& eval);
/// Columns: feature,importance
std::string importance_csv(const RoutingEvaluation& eval);

nlohmann::json to_json(const RoutingPolicy& policy);
RoutingPolicy policy_from_json(const nlohmann::json& j);

}  // namespace uq
