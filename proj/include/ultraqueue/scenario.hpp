#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "ultraqueue/engine.hpp"

namespace uq {

/// One daily shift option; start_hour == end_hour means the room stays closed.
struct ShiftOption {
  int start_hour = 7;
  int end_hour = 17;
  double weight = 1.0;
};

struct ScenarioRoom {
  int id = 1;
  int type = 0;
  double speed = 1.0;   // multiplies service durations
  double weight = 1.0;  // routing attractiveness within admissible rooms
  std::vector<ShiftOption> weekday_shifts;
  std::vector<ShiftOption> weekend_shifts;
};

/// Items of a family share a service profile and room-type preferences.
struct ScenarioFamily {
  std::string name;
  std::string department;
  double service_mean = 600.0;  // seconds
  double service_cv = 0.4;
  std::vector<double> type_preference;  // per room type; 0 = not admissible
};

struct ScenarioItem {
  std::string code;
  int family = 0;
  double probability = 0.0;   // among single-item visits
  double service_scale = 1.0;
};

/// Shifted exponential: minimum + Exp(mean - minimum), applied with a probability.
struct GapSpec {
  double probability = 0.0;
  double minimum = 0.0;
  double mean = 0.0;
};

struct SynthScenario {
  static constexpr int kSchemaVersion = 1;

  std::string name;
  Horizon horizon;
  std::string start_date = "2024-01-01";
  std::vector<ScenarioFamily> families;
  std::vector<ScenarioItem> items;
  double multi_item_probability = 0.0;
  int multi_item_family = -1;
  double female_fraction = 0.5;
  std::vector<double> age_weights;                      // one per age bucket
  std::array<std::vector<double>, kDayKinds> hourly_arrivals;  // patients per hour of the horizon
  int n_types = 1;
  std::vector<ScenarioRoom> rooms;                      // ascending id
  std::vector<double> type_service_factor;
  std::vector<double> hour_service_factor;              // per horizon hour; drain hours use the last
  GapSpec breaks;
  GapSpec walks;
  double queue_sensitivity = 0.0;

  /// Throws InputError naming the first violated constraint.
  void validate() const;
  /// Whether some hour with positive arrivals can have every room closed.
  std::vector<std::string> coverage_warnings() const;
};

SynthScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthScenario& s);
SynthScenario load_scenario(const std::filesystem::path& path);

/// Ground-truth components of a scenario, consumed by the engine.
class ScenarioInputs : public SimulationInputs {
 public:
  explicit ScenarioInputs(const SynthScenario& s);

  std::vector<int> room_ids() const override;
  std::vector<int> room_types() const override;
  std::vector<SimPatient> arrivals(const DayContext& day, Rng& rng) const override;
  std::vector<std::vector<OpenInterval>> open_schedule(const DayContext& day, Rng& rng) const override;
  Seconds service(int room_index, int hour, const SimPatient& patient, Rng& rng) const override;
  Seconds break_duration(int room_index, int hour, Rng& rng) const override;
  Seconds walk_duration(int room_index, int hour, Rng& rng) const override;

  /// Mean service seconds of a patient in a room at an hour.
  double mean_service(int room_index, int hour, const SimPatient& patient) const;

 private:
  const SynthScenario& s_;
  std::vector<double> item_weights_;
  std::map<std::string, int> item_index_;
};

/// Samples an open admissible room with weight
/// preference(family, type) * room weight * exp(-queue_sensitivity * waiting).
class GroundTruthRouter : public Router {
 public:
  explicit GroundTruthRouter(const SynthScenario& s) : s_(s) {}
  int route(const SimState& state, const SimPatient& patient, Rng& rng) const override;

 private:
  const SynthScenario& s_;
};

struct SynthResult {
  std::vector<PatientRecord> records;
  std::vector<DayResult> days;
  std::vector<std::string> warnings;
};

/// Runs the engine under the scenario's ground truth for n_days consecutive
/// days from start_date (the scenario's own when empty).
SynthResult synthesize_log(const SynthScenario& scenario, int n_days, std::uint64_t seed,
                           unsigned threads = 1, const std::string& start_date = {});

}  // namespace uq
