#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ultraqueue/calibrate.hpp"
#include "ultraqueue/eventlog.hpp"
#include "ultraqueue/sim_state.hpp"

namespace uq {

// Declaration order is the processing priority of simultaneous events.
enum class EventKind { end_service, end_break, room_open, arrival, begin_service, room_close, end_of_day };

std::string to_string(EventKind k);

struct SimEvent {
  Seconds time = 0;
  EventKind kind = EventKind::arrival;
  std::uint64_t seq = 0;
  int room = -1;
  int patient = -1;
};

struct SimConfig {
  Horizon horizon;
  int n_replications = 1;
  std::uint64_t seed = 0;
  std::string start_date = "2024-01-01";  // replication i simulates start_date + i days
  bool breaks = true;
  bool walks = true;
  unsigned threads = 1;
};

struct DayResult {
  std::string day_id;
  std::uint64_t seed = 0;
  std::vector<PatientRecord> records;  // served patients in arrival order
  int arrivals = 0;
  int unserved = 0;  // still holding when the day ended
};

/// Called after every processed event with the post-event state.
using EventObserver = std::function<void(const SimEvent&, const SimState&)>;

DayContext day_context(const SimConfig& config, int rep);

DayResult simulate_day(const SimulationInputs& inputs, const Router& router, const SimConfig& config,
                       int rep, const EventObserver& observer = {});

/// Replication i draws every stream from (config.seed, i), so the result does
/// not depend on the thread count.
std::vector<DayResult> run_replications(const SimulationInputs& inputs, const Router& router,
                                        const SimConfig& config);

std::vector<PatientRecord> flatten(const std::vector<DayResult>& days);

/// Homogeneous-per-hour Poisson arrival times over the horizon by thinning
/// against the largest hourly rate; times are floored to whole seconds.
std::vector<Seconds> nhpp_times(std::span<const double> hourly_rates, Horizon horizon, Rng& rng);

struct ArrivalDraw {
  Seconds time = 0;
  int class_index = 0;
  bool operator==(const ArrivalDraw&) const = default;
};

/// Class c uses the sub-stream derive_seed(stream_seed, {c}); results merged by (time, class).
std::vector<ArrivalDraw> generate_arrivals(const ArrivalRateTable& rates, DayKind kind,
                                           std::uint64_t stream_seed);

/// Simulation inputs resampled from a calibrated model.
class ModelInputs : public SimulationInputs {
 public:
  explicit ModelInputs(const CalibratedModel& model);

  std::vector<int> room_ids() const override { return model_.room_types.rooms; }
  std::vector<int> room_types() const override { return types_; }
  std::vector<SimPatient> arrivals(const DayContext& day, Rng& rng) const override;
  std::vector<std::vector<OpenInterval>> open_schedule(const DayContext& day, Rng& rng) const override;
  Seconds service(int room_index, int hour, const SimPatient& patient, Rng& rng) const override;
  Seconds break_duration(int room_index, int hour, Rng& rng) const override;
  Seconds walk_duration(int room_index, int hour, Rng& rng) const override;

 private:
  const CalibratedModel& model_;
  std::vector<int> types_;
};

DayResult run_day(const CalibratedModel& model, const Router& router, const SimConfig& config, int rep);

}  // namespace uq
