#pragma once

#include <deque>
#include <string>
#include <vector>

#include "ultraqueue/common.hpp"
#include "ultraqueue/rng.hpp"

namespace uq {

struct SimPatient {
  std::string patient_id;
  int class_index = -1;
  int group = 0;  // item group used for eligibility and routing
  double age = 0.0;
  Gender gender = Gender::female;
  std::string department;
  std::vector<std::string> items;

  Seconds arrival = 0;
  Seconds start = -1;
  Seconds end = -1;
  int room = -1;  // room index once routed
  Seconds walk = 0;
};

// `calling` is the walk between joining an idle room and service start; the
// patient already owns the room but has not started.
enum class RoomStatus { idle, calling, busy, on_break };

struct RoomState {
  int room_id = 0;
  int type = 0;
  bool open = false;  // accepts new patients; a closed room still drains its queue
  RoomStatus status = RoomStatus::idle;
  std::deque<int> queue;  // patient indices in join order
  int current = -1;       // calling or in-service patient

  /// Patients assigned here who have not started service.
  int waiting() const {
    return static_cast<int>(queue.size()) + (status == RoomStatus::calling ? 1 : 0);
  }
  int in_system() const { return waiting() + (status == RoomStatus::busy ? 1 : 0); }
};

struct SimState {
  Seconds clock = 0;
  int rep = 0;
  std::string day_id;
  DayKind kind = DayKind::weekday;
  int weekday = 0;
  Horizon horizon;
  std::vector<RoomState> rooms;  // ascending room id
  std::vector<int> holding;      // no admissible open room at arrival
  std::vector<SimPatient> patients;
  int arrived = 0;
  int completed = 0;

  int room_index(int room_id) const;
  int in_service() const;
  int queued() const;
};

/// Chooses a room index for a patient, or -1 to hold the patient until a room opens.
class Router {
 public:
  virtual ~Router() = default;
  virtual int route(const SimState& state, const SimPatient& patient, Rng& rng) const = 0;
};

struct DayContext {
  int rep = 0;
  std::string day_id;
  DayKind kind = DayKind::weekday;
  int weekday = 0;
  Horizon horizon;
};

struct OpenInterval {
  Seconds open = 0;
  Seconds close = 0;
};

/// Stochastic components of a simulated day.
class SimulationInputs {
 public:
  virtual ~SimulationInputs() = default;
  virtual std::vector<int> room_ids() const = 0;    // ascending
  virtual std::vector<int> room_types() const = 0;  // aligned with room_ids
  /// Arrivals of one day, sorted by time; only the attribute fields are used.
  virtual std::vector<SimPatient> arrivals(const DayContext& day, Rng& rng) const = 0;
  virtual std::vector<std::vector<OpenInterval>> open_schedule(const DayContext& day, Rng& rng) const = 0;
  virtual Seconds service(int room_index, int hour, const SimPatient& patient, Rng& rng) const = 0;
  /// Break before the next queued patient; 0 means none.
  virtual Seconds break_duration(int room_index, int hour, Rng& rng) const = 0;
  /// Walk of a patient joining an idle room; 0 means none.
  virtual Seconds walk_duration(int room_index, int hour, Rng& rng) const = 0;
};

}  // namespace uq
