#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "odcal/network.hpp"
#include "odcal/rng.hpp"

namespace odcal {

/// Krauss car-following parameters. Defaults follow the usual passenger-car
/// values of the common reference simulator.
struct CarFollowingParams {
  double accel = 2.6;          // m/s^2
  double decel = 4.5;          // m/s^2
  double tau = 1.0;            // s
  double sigma = 0.5;          // driver imperfection in [0, 1]
  double min_gap = 2.5;        // m
  double vehicle_length = 5.0; // m
  double speed_dev = 0.05;        // sd of the per-vehicle desired-speed factor (mean 1)
  double speed_factor_max = 1.0;  // the factor is redrawn outside [0.2, speed_factor_max]

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Fastest speed that still lets the follower stop behind a leader braking at
/// `decel`: -b*tau + sqrt((b*tau)^2 + v_leader^2 + 2*b*gap), floored at 0.
double krauss_safe_speed(double v_leader, double gap, const CarFollowingParams& params);

/// v_des = min(v + a*dt, v_safe, v_max); returns max(0, v_des - sigma*a*dt*rand_draw).
double krauss_next_speed(double v, double v_safe, double v_max, const CarFollowingParams& params, double dt,
                         double rand_draw);

struct Vehicle {
  int id = 0;
  int od_index = 0;
  Route route;
  int route_position = 0;
  double offset = 0.0;  // m from link start (front bumper)
  double speed = 0.0;   // m/s
  int depart_step = 0;
  double speed_factor = 1.0;  // desired speed as a fraction of the link limit
  double planned_speed = 0.0;  // scratch: speed chosen in the current step's car-following pass

  LinkId current_link() const { return route[static_cast<std::size_t>(route_position)]; }
  bool on_last_link() const { return route_position + 1 == static_cast<int>(route.size()); }
};

struct SimSnapshot {
  std::vector<int> vehicle_count;  // N_l
  std::vector<double> mean_speed;  // v̄_l; free-flow speed on empty links
  double clock = 0.0;
};

/// Raised by a checked Simulation when a state invariant fails after a step.
class SimulatorAssertion : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Discrete-time single-lane microscopic simulation.
///
/// Value type: copying a Simulation snapshots the complete world state
/// including its random generator, so a copy continues bit-identically.
class Simulation {
 public:
  Simulation(std::shared_ptr<const NetworkSpec> network, CarFollowingParams params, std::uint64_t seed,
             double dt = 1.0);

  const NetworkSpec& network() const noexcept { return *network_; }
  const CarFollowingParams& params() const noexcept { return params_; }
  double dt() const noexcept { return dt_; }
  double clock() const noexcept { return clock_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Dispatch one vehicle on the current shortest route of `od_index`. The
  /// vehicle enters at offset 0 with speed 0, or joins the FIFO queue of its
  /// first link while the entry cell is occupied.
  void insert_vehicle(int od_index, int depart_step);

  /// Replace every active vehicle's route beyond its current link with the
  /// shortest path under costs from the current snapshot. Also refreshes the
  /// routes used for new insertions.
  void reroute_all();

  /// Advance the world by dt seconds.
  void step();

  SimSnapshot snapshot() const;

  /// Counts accumulated since the last reset, one entry per detector.
  const std::vector<int>& detector_counts() const noexcept { return detector_acc_; }
  std::vector<int> read_and_reset_detectors();

  const std::deque<Vehicle>& vehicles_on(LinkId link) const {
    return lanes_[static_cast<std::size_t>(link)];
  }
  const Route& insertion_route(int od_index) const { return od_routes_[static_cast<std::size_t>(od_index)]; }

  int active_count() const noexcept { return active_; }
  int queued_count() const noexcept { return queued_; }
  int arrived_count() const noexcept { return arrived_; }
  int inserted_total() const noexcept { return inserted_; }

  /// Empty string when all state invariants hold; otherwise a description of the first violation.
  std::string check_invariants() const;

  /// When enabled, every step ends with check_invariants() and throws SimulatorAssertion on failure.
  void set_checked(bool on) noexcept { checked_ = on; }

  /// Per-step CSV rows (step,vehicle,link,offset,speed) to `os` after every step; nullptr disables.
  void set_trajectory_log(std::ostream* os);

 private:
  struct Crossing {
    LinkId from = 0;
    double overshoot = 0.0;
    double when = 0.0;  // fraction of the step at which the front bumper reaches the node
    int vehicle_id = 0;
  };

  bool entry_free(LinkId link) const;
  void flush_queues();
  void compute_speeds();
  void move_link(LinkId link);
  void resolve_entries(LinkId into);
  void count_detector(LinkId link, double from_offset, double to_offset);
  void log_step() const;

  std::shared_ptr<const NetworkSpec> network_;
  CarFollowingParams params_;
  double dt_;
  std::uint64_t seed_;
  Rng rng_;
  double clock_ = 0.0;
  long step_index_ = 0;

  std::vector<std::deque<Vehicle>> lanes_;         // front (largest offset) first
  std::vector<std::deque<Vehicle>> entry_queues_;  // per first link
  std::vector<Route> od_routes_;
  enum class Front : unsigned char { Free, Pending, Transferred, Held };
  std::vector<std::vector<Crossing>> pending_;  // crossings into each link this step
  std::vector<Front> front_state_;
  std::vector<double> exit_offset_;  // offset on the next link of a transferred front vehicle

  std::vector<int> detector_acc_;
  bool checked_ = false;
  int next_vehicle_id_ = 0;
  int active_ = 0;
  int queued_ = 0;
  int arrived_ = 0;
  int inserted_ = 0;
  std::ostream* traj_log_ = nullptr;
};

}  // namespace odcal
