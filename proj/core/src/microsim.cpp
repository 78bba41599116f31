#include "odcal/microsim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace odcal {

void CarFollowingParams::validate() const {
  if (!(accel > 0.0)) throw std::invalid_argument("accel must be > 0");
  if (!(decel > 0.0)) throw std::invalid_argument("decel must be > 0");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("sigma must be in [0, 1]");
  if (!(min_gap >= 0.0)) throw std::invalid_argument("min_gap must be >= 0");
  if (!(vehicle_length > 0.0)) throw std::invalid_argument("vehicle_length must be > 0");
  if (!(speed_dev >= 0.0)) throw std::invalid_argument("speed_dev must be >= 0");
  if (!(speed_factor_max > 0.2)) throw std::invalid_argument("speed_factor_max must be > 0.2");
}

double krauss_safe_speed(double v_leader, double gap, const CarFollowingParams& params) {
  const double bt = params.decel * params.tau;
  const double v = -bt + std::sqrt(bt * bt + v_leader * v_leader + 2.0 * params.decel * gap);
  return std::max(0.0, v);
}

double krauss_next_speed(double v, double v_safe, double v_max, const CarFollowingParams& params, double dt,
                         double rand_draw) {
  const double v_des = std::min({v + params.accel * dt, v_safe, v_max});
  return std::max(0.0, v_des - params.sigma * params.accel * dt * rand_draw);
}

Simulation::Simulation(std::shared_ptr<const NetworkSpec> network, CarFollowingParams params,
                       std::uint64_t seed, double dt)
    : network_(std::move(network)), params_(params), dt_(dt), seed_(seed), rng_(seed) {
  if (!network_) throw std::invalid_argument("Simulation requires a network");
  params_.validate();
  if (!(dt_ > 0.0)) throw std::invalid_argument("dt must be > 0");
  const auto links = static_cast<std::size_t>(network_->link_count());
  lanes_.assign(links, {});
  entry_queues_.assign(links, {});
  pending_.assign(links, {});
  front_state_.assign(links, Front::Free);
  exit_offset_.assign(links, 0.0);
  detector_acc_.assign(static_cast<std::size_t>(network_->detector_count()), 0);
  const EdgeCosts ff = free_flow_costs(*network_);
  for (const OdPair& od : network_->od_pairs()) {
    od_routes_.push_back(shortest_path(*network_, ff, od.origin, od.destination));
  }
}

bool Simulation::entry_free(LinkId link) const {
  const auto& lane = lanes_[static_cast<std::size_t>(link)];
  return lane.empty() || lane.back().offset >= params_.min_gap + params_.vehicle_length;
}

void Simulation::insert_vehicle(int od_index, int depart_step) {
  if (od_index < 0 || od_index >= network_->od_count()) throw std::out_of_range("od_index out of range");
  Vehicle v;
  v.id = next_vehicle_id_++;
  v.od_index = od_index;
  v.route = od_routes_[static_cast<std::size_t>(od_index)];
  v.depart_step = depart_step;
  if (params_.speed_dev > 0.0) {
    do {
      v.speed_factor = 1.0 + params_.speed_dev * standard_normal(rng_);
    } while (v.speed_factor < 0.2 || v.speed_factor > params_.speed_factor_max);
  }
  ++inserted_;
  const LinkId first = v.route.front();
  auto& queue = entry_queues_[static_cast<std::size_t>(first)];
  if (queue.empty() && entry_free(first)) {
    lanes_[static_cast<std::size_t>(first)].push_back(std::move(v));
    ++active_;
  } else {
    queue.push_back(std::move(v));
    ++queued_;
  }
}

void Simulation::flush_queues() {
  for (std::size_t l = 0; l < entry_queues_.size(); ++l) {
    auto& queue = entry_queues_[l];
    while (!queue.empty() && entry_free(static_cast<LinkId>(l))) {
      lanes_[l].push_back(std::move(queue.front()));
      queue.pop_front();
      --queued_;
      ++active_;
    }
  }
}

void Simulation::reroute_all() {
  const NetworkSpec& net = *network_;
  const EdgeCosts costs = edge_costs_from_snapshot(net, snapshot());
  std::vector<std::pair<NodeId, ShortestPathTree>> trees;
  const auto tree_for = [&](NodeId dest) -> const ShortestPathTree& {
    for (auto& [d, t] : trees) {
      if (d == dest) return t;
    }
    trees.emplace_back(dest, ShortestPathTree(net, costs, dest));
    return trees.back().second;
  };
  for (std::size_t k = 0; k < od_routes_.size(); ++k) {
    const OdPair& od = net.od_pairs()[k];
    od_routes_[k] = tree_for(od.destination).route_from(od.origin);
  }
  for (auto& lane : lanes_) {
    for (Vehicle& v : lane) {
      if (v.on_last_link()) continue;
      const NodeId dest = net.od_pairs()[static_cast<std::size_t>(v.od_index)].destination;
      Route tail = tree_for(dest).route_from(net.link(v.current_link()).to_node);
      v.route.resize(static_cast<std::size_t>(v.route_position) + 1);
      v.route.insert(v.route.end(), tail.begin(), tail.end());
    }
  }
}

void Simulation::compute_speeds() {
  const NetworkSpec& net = *network_;
  const double len_v = params_.vehicle_length;
  for (std::size_t l = 0; l < lanes_.size(); ++l) {
    auto& lane = lanes_[l];
    const LinkSpec& link = net.links()[l];
    for (std::size_t i = 0; i < lane.size(); ++i) {
      Vehicle& v = lane[i];
      double v_safe = std::numeric_limits<double>::infinity();
      if (i > 0) {
        const Vehicle& leader = lane[i - 1];
        const double gap = leader.offset - v.offset - len_v - params_.min_gap;
        v_safe = krauss_safe_speed(leader.speed, std::max(0.0, gap), params_);
      } else if (!v.on_last_link()) {
        const LinkId next = v.route[static_cast<std::size_t>(v.route_position) + 1];
        const auto& next_lane = lanes_[static_cast<std::size_t>(next)];
        if (!next_lane.empty()) {
          const Vehicle& leader = next_lane.back();
          const double gap = (link.length - v.offset) + leader.offset - len_v - params_.min_gap;
          v_safe = krauss_safe_speed(leader.speed, std::max(0.0, gap), params_);
        }
      }
      v.planned_speed = krauss_next_speed(v.speed, v_safe, v.speed_factor * link.free_flow_speed, params_, dt_, uniform01(rng_));
    }
  }
}

void Simulation::count_detector(LinkId link, double from_offset, double to_offset) {
  const int slot = network_->detector_index(link);
  if (slot < 0) return;
  const double mid = 0.5 * network_->link(link).length;
  if (from_offset < mid && mid <= to_offset) ++detector_acc_[static_cast<std::size_t>(slot)];
}

void Simulation::move_link(LinkId l) {
  const auto li = static_cast<std::size_t>(l);
  auto& lane = lanes_[li];
  const double len = network_->link(l).length;
  const double len_v = params_.vehicle_length;
  std::size_t i = 0;
  double limit = len;
  switch (front_state_[li]) {
    case Front::Transferred:
      limit = std::min(len, len + exit_offset_[li] - len_v);
      break;
    case Front::Held:
      limit = lane[0].offset - len_v;
      i = 1;
      break;
    case Front::Pending:
      limit = len - len_v;
      i = 1;
      break;
    case Front::Free:
      if (!lane.empty()) {
        Vehicle& v = lane[0];
        const double old = v.offset;
        const double desired = old + v.planned_speed * dt_;
        if (v.on_last_link() && desired >= len) {
          count_detector(l, old, desired);
          lane.pop_front();
          --active_;
          ++arrived_;
          limit = len;
        } else {
          v.offset = std::min(desired, len);
          v.speed = v.planned_speed;
          count_detector(l, old, v.offset);
          limit = v.offset - len_v;
          i = 1;
        }
      }
      break;
  }
  for (; i < lane.size(); ++i) {
    Vehicle& v = lane[i];
    const double old = v.offset;
    v.offset = std::max(old, std::min(old + v.planned_speed * dt_, limit));
    v.speed = std::min(v.planned_speed, (v.offset - old) / dt_);
    count_detector(l, old, v.offset);
    limit = v.offset - len_v;
  }
}

void Simulation::resolve_entries(LinkId into) {
  auto& crossings = pending_[static_cast<std::size_t>(into)];
  if (crossings.empty()) return;
  std::sort(crossings.begin(), crossings.end(), [](const Crossing& a, const Crossing& b) {
    return a.when != b.when ? a.when < b.when : a.vehicle_id < b.vehicle_id;
  });
  auto& target = lanes_[static_cast<std::size_t>(into)];
  const LinkSpec& into_link = network_->link(into);
  for (const Crossing& c : crossings) {
    const auto from = static_cast<std::size_t>(c.from);
    auto& source = lanes_[from];
    Vehicle& v = source.front();
    const double len = network_->link(c.from).length;
    const double old = v.offset;
    const double room =
        target.empty() ? std::numeric_limits<double>::infinity() : target.back().offset - params_.vehicle_length;
    const double place = std::min(c.overshoot, room);
    count_detector(c.from, old, len);
    if (place >= 0.0) {
      Vehicle moved = std::move(v);
      source.pop_front();
      moved.route_position += 1;
      moved.offset = place;
      moved.speed = std::min({moved.planned_speed, ((len - old) + place) / dt_, moved.speed_factor * into_link.free_flow_speed});
      count_detector(into, 0.0, place);
      target.push_back(std::move(moved));
      front_state_[from] = Front::Transferred;
      exit_offset_[from] = place;
    } else {
      v.offset = len;
      v.speed = std::min(v.planned_speed, (len - old) / dt_);
      front_state_[from] = Front::Held;
    }
  }
  crossings.clear();
}

void Simulation::step() {
  flush_queues();
  compute_speeds();

  const NetworkSpec& net = *network_;
  for (std::size_t l = 0; l < lanes_.size(); ++l) {
    front_state_[l] = Front::Free;
    const auto& lane = lanes_[l];
    if (lane.empty()) continue;
    const Vehicle& v = lane.front();
    if (v.on_last_link()) continue;
    const double len = net.links()[l].length;
    const double travel = v.planned_speed * dt_;
    const double desired = v.offset + travel;
    if (desired > len) {
      const LinkId next = v.route[static_cast<std::size_t>(v.route_position) + 1];
      pending_[static_cast<std::size_t>(next)].push_back(
          Crossing{static_cast<LinkId>(l), desired - len, (len - v.offset) / travel, v.id});
      front_state_[l] = Front::Pending;
    }
  }

  for (LinkId l : net.downstream_first_order()) {
    move_link(l);
    resolve_entries(l);
  }

  clock_ += dt_;
  ++step_index_;
  if (traj_log_) log_step();
  if (checked_) {
    if (std::string why = check_invariants(); !why.empty()) {
      throw SimulatorAssertion("step " + std::to_string(step_index_) + ": " + why);
    }
  }
}

SimSnapshot Simulation::snapshot() const {
  SimSnapshot snap;
  snap.clock = clock_;
  const auto links = lanes_.size();
  snap.vehicle_count.assign(links, 0);
  snap.mean_speed.assign(links, 0.0);
  for (std::size_t l = 0; l < links; ++l) {
    const auto& lane = lanes_[l];
    snap.vehicle_count[l] = static_cast<int>(lane.size());
    if (lane.empty()) {
      snap.mean_speed[l] = network_->links()[l].free_flow_speed;
    } else {
      double sum = 0.0;
      for (const Vehicle& v : lane) sum += v.speed;
      snap.mean_speed[l] = sum / static_cast<double>(lane.size());
    }
  }
  return snap;
}

std::vector<int> Simulation::read_and_reset_detectors() {
  std::vector<int> out(detector_acc_.size(), 0);
  out.swap(detector_acc_);
  return out;
}

std::string Simulation::check_invariants() const {
  std::ostringstream why;
  if (inserted_ != active_ + queued_ + arrived_) {
    why << "conservation: inserted " << inserted_ << " != active " << active_ << " + queued " << queued_
        << " + arrived " << arrived_;
    return why.str();
  }
  int active = 0;
  for (std::size_t l = 0; l < lanes_.size(); ++l) {
    const auto& lane = lanes_[l];
    const LinkSpec& link = network_->links()[l];
    active += static_cast<int>(lane.size());
    for (std::size_t i = 0; i < lane.size(); ++i) {
      const Vehicle& v = lane[i];
      if (v.current_link() != static_cast<LinkId>(l)) {
        why << "vehicle " << v.id << " stored on link " << l << " but routed on " << v.current_link();
        return why.str();
      }
      if (v.offset < 0.0 || v.offset > link.length) {
        why << "vehicle " << v.id << " offset " << v.offset << " outside link " << l;
        return why.str();
      }
      if (v.speed < 0.0 || v.speed > v.speed_factor * link.free_flow_speed) {
        why << "vehicle " << v.id << " speed " << v.speed << " outside [0, v_max]";
        return why.str();
      }
      if (i > 0 && lane[i - 1].offset - v.offset < params_.vehicle_length - 1e-9) {
        why << "vehicles " << lane[i - 1].id << " and " << v.id << " closer than vehicle length on link " << l;
        return why.str();
      }
    }
  }
  if (active != active_) {
    why << "active counter " << active_ << " != stored vehicles " << active;
    return why.str();
  }
  for (int c : detector_acc_) {
    if (c < 0) return "negative detector accumulator";
  }
  return {};
}

void Simulation::set_trajectory_log(std::ostream* os) {
  traj_log_ = os;
  if (traj_log_) *traj_log_ << "step,vehicle,link,offset,speed\n";
}

void Simulation::log_step() const {
  for (std::size_t l = 0; l < lanes_.size(); ++l) {
    for (const Vehicle& v : lanes_[l]) {
      *traj_log_ << step_index_ << ',' << v.id << ',' << l << ',' << v.offset << ',' << v.speed << '\n';
    }
  }
}

}  // namespace odcal
