#pragma once

// Non-learning comparison strategies. Both fly through the MDP action
// interface, so service, hover and timing come from the same environment as
// the learned policy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "uavtraj/channel.hpp"
#include "uavtraj/ddpg.hpp"
#include "uavtraj/mdp.hpp"
#include "uavtraj/rng.hpp"

namespace uavtraj {

// ---- waypoint pilot -------------------------------------------------------

/// Action that flies straight toward `target`, arriving exactly when it is
/// within one step's reach.
inline Action steer_towards(const Vec3& from, const Vec3& target, double max_speed, double flight_time) {
  const Vec3 d = target - from;
  const double dist = d.norm();
  Action a;
  if (dist <= 0.0) return {0.0, 0.0, 2.0 * std::numbers::pi};
  a.speed = std::min(max_speed, dist / flight_time);
  a.pitch = std::acos(std::clamp(d.z / dist, -1.0, 1.0));
  double heading = std::atan2(d.y, d.x);
  if (heading <= 0.0) heading += 2.0 * std::numbers::pi;
  a.heading = heading;
  return a;
}

inline constexpr double kArrivalTolerance = 1e-6;

/// Flies the waypoints in order until the episode ends or the list is
/// exhausted. Returns true when every waypoint was reached.
inline bool fly_waypoints(UavEnvironment& env, const std::vector<Vec3>& waypoints, double speed = 0.0) {
  const auto& cfg = env.config();
  const double v = speed > 0.0 ? std::min(speed, cfg.max_speed) : cfg.max_speed;
  for (const auto& wp : waypoints) {
    while (distance(env.state().position, wp) > kArrivalTolerance) {
      if (env.done()) return false;
      env.step(steer_towards(env.state().position, wp, v, cfg.flight_time));
    }
    if (env.done()) return false;
  }
  return true;
}

inline EpisodeResult finish(const UavEnvironment& env) {
  EpisodeResult res;
  res.completed = env.state().served_count() == static_cast<int>(env.num_gts());
  res.steps = env.step_index();
  res.mission_time = env.elapsed();
  res.records = env.records();
  return res;
}

// ---- scan -----------------------------------------------------------------

struct ScanConfig {
  double spacing = 0.0;   // m; 0 = calibrate from the channel
  double altitude = 0.0;  // m; 0 = z_min
  double speed = 0.0;     // m/s; 0 = max speed
};

/// Horizontal radius within which a LoS GT clears the wake-up threshold at
/// `altitude` with unit small-scale gain.
inline double los_coverage_radius(const ChannelParams& ch, double threshold_db, double altitude) {
  const double max_loss = ch.tx_power_dbm - ch.noise_dbm - threshold_db - ch.eta_los_db;
  const double d_max =
      std::pow(10.0, (max_loss - free_space_pathloss_db(1.0, ch.carrier_hz)) / 20.0);
  if (!(d_max > altitude)) throw std::invalid_argument("no LoS coverage at the requested scan altitude");
  return std::sqrt(d_max * d_max - altitude * altitude);
}

inline double calibrate_scan_spacing(const ChannelParams& ch, const MdpConfig& mdp, double altitude) {
  return 2.0 * los_coverage_radius(ch, mdp.snr_threshold_db, altitude);
}

/// Boustrophedon over vertical strips: ceil(D / spacing) evenly spaced strip
/// centerlines, starting at the (0, 0) corner and ending at (0, D).
inline std::vector<Vec3> scan_waypoints(double side, double spacing, double altitude) {
  if (!(spacing > 0.0)) throw std::invalid_argument("scan spacing must be positive");
  const int strips = std::max(1, static_cast<int>(std::ceil(side / spacing - 1e-12)));
  const double pitch = side / strips;
  std::vector<Vec3> wp;
  for (int i = 0; i < strips; ++i) {
    const double x = (i + 0.5) * pitch;
    const bool up = i % 2 == 0;
    wp.push_back({x, up ? 0.0 : side, altitude});
    wp.push_back({x, up ? side : 0.0, altitude});
  }
  wp.push_back({0.0, side, altitude});
  return wp;
}

inline double path_length(const Vec3& start, const std::vector<Vec3>& wp) {
  double len = 0.0;
  Vec3 at = start;
  for (const auto& p : wp) {
    len += distance(at, p);
    at = p;
  }
  return len;
}

struct ScanPlan {
  Vec3 start;
  std::vector<Vec3> waypoints;
};

inline ScanPlan scan_plan(const EnvParams& env, const ChannelParams& ch, const MdpConfig& mdp, const ScanConfig& cfg) {
  const double altitude = cfg.altitude > 0.0 ? cfg.altitude : env.z_min;
  if (altitude < env.z_min || altitude > env.z_max) throw std::invalid_argument("scan altitude outside [z_min, z_max]");
  const double spacing = cfg.spacing > 0.0 ? cfg.spacing : calibrate_scan_spacing(ch, mdp, altitude);
  return {{0.0, 0.0, altitude}, scan_waypoints(env.side, spacing, altitude)};
}

/// Runs the sweep from the lower-left corner in an environment whose episode
/// seed is `seed`. The episode stops at sweep end or at completion.
inline EpisodeResult scan_trajectory(UavEnvironment& env, const ScanConfig& cfg, std::uint64_t seed) {
  const ScanPlan plan = scan_plan(env.map().params, env.channel(), env.config(), cfg);
  env.reset_at(plan.start, seed);
  fly_waypoints(env, plan.waypoints, cfg.speed);
  return finish(env);
}

// ---- ACO ------------------------------------------------------------------

struct AcoConfig {
  int ants = 30;
  int iterations = 200;
  double pheromone_weight = 1.0;  // alpha
  double heuristic_weight = 3.0;  // beta, on 1 / distance
  double evaporation = 0.5;
  double initial_trail = 1.0;
  double altitude = 0.0;  // m; 0 = z_min

  void validate() const {
    if (ants < 1 || iterations < 1) throw std::invalid_argument("ACO needs at least one ant and one iteration");
    if (!(evaporation > 0.0 && evaporation < 1.0)) throw std::invalid_argument("evaporation must lie in (0, 1)");
    if (pheromone_weight < 0.0 || heuristic_weight < 0.0) throw std::invalid_argument("ACO weights must be >= 0");
    if (!(initial_trail > 0.0)) throw std::invalid_argument("initial trail must be positive");
  }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double open_tour_length(const Point2& start, const std::vector<Point2>& pts, const std::vector<std::size_t>& order) {
  double len = 0.0;
  Point2 at = start;
  for (auto i : order) {
    len += std::hypot(pts[i].x - at.x, pts[i].y - at.y);
    at = pts[i];
  }
  return len;
}

struct AcoResult {
  std::vector<std::size_t> order;
  double length = 0.0;
  std::vector<double> best_per_iteration;
};

/// Ant System for the open path that starts at `start` and visits every
/// point once. Each iteration evaporates all trails and lets every ant
/// deposit 1 / length on its edges; the best tour so far is returned.
inline AcoResult aco_route(const std::vector<Point2>& pts, const Point2& start, const AcoConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t k = pts.size();
  if (k == 0) throw std::invalid_argument("ACO needs at least one GT");
  // Node 0 is the start, node i + 1 is pts[i].
  const std::size_t n = k + 1;
  auto node = [&](std::size_t i) { return i == 0 ? start : pts[i - 1]; };
  std::vector<double> dist(n * n, 0.0), eta(n * n, 0.0), trail(n * n, cfg.initial_trail);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::hypot(node(i).x - node(j).x, node(i).y - node(j).y);
      dist[i * n + j] = d;
      eta[i * n + j] = 1.0 / std::max(d, 1e-9);
    }

  AcoResult best;
  best.length = std::numeric_limits<double>::infinity();
  std::vector<std::vector<std::size_t>> tours(static_cast<std::size_t>(cfg.ants));
  std::vector<double> lengths(static_cast<std::size_t>(cfg.ants));
  std::vector<double> weights(n);
  std::vector<std::uint8_t> visited(n);

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int a = 0; a < cfg.ants; ++a) {
      auto& tour = tours[static_cast<std::size_t>(a)];
      tour.clear();
      std::fill(visited.begin(), visited.end(), 0);
      visited[0] = 1;
      std::size_t at = 0;
      double len = 0.0;
      for (std::size_t step = 0; step < k; ++step) {
        double total = 0.0;
        for (std::size_t j = 1; j < n; ++j) {
          weights[j] = visited[j] ? 0.0
                                  : std::pow(trail[at * n + j], cfg.pheromone_weight) *
                                        std::pow(eta[at * n + j], cfg.heuristic_weight);
          total += weights[j];
        }
        std::size_t next = 0;
        if (total > 0.0) {
          double r = rng.uniform() * total;
          for (std::size_t j = 1; j < n; ++j) {
            if (visited[j]) continue;
            next = j;
            r -= weights[j];
            if (r < 0.0) break;
          }
        } else {
          for (std::size_t j = 1; j < n && next == 0; ++j)
            if (!visited[j]) next = j;
        }
        visited[next] = 1;
        len += dist[at * n + next];
        tour.push_back(next);
        at = next;
      }
      lengths[static_cast<std::size_t>(a)] = len;
      if (len < best.length) {
        best.length = len;
        best.order.clear();
        for (auto v : tour) best.order.push_back(v - 1);
      }
    }
    for (auto& t : trail) t *= 1.0 - cfg.evaporation;
    for (int a = 0; a < cfg.ants; ++a) {
      std::size_t prev = 0;
      const double deposit = 1.0 / std::max(lengths[static_cast<std::size_t>(a)], 1e-9);
      for (auto v : tours[static_cast<std::size_t>(a)]) {
        trail[prev * n + v] += deposit;
        trail[v * n + prev] += deposit;
        prev = v;
      }
    }
    best.best_per_iteration.push_back(best.length);
  }
  return best;
}

/// Flies the route at a fixed altitude and full speed from the environment's
/// current position. GTs served en route keep their flags; the episode ends
/// at completion, at the step budget, or after the last waypoint.
inline EpisodeResult aco_fly(UavEnvironment& env, const std::vector<std::size_t>& route, const AcoConfig& cfg) {
  const double altitude = cfg.altitude > 0.0 ? cfg.altitude : env.map().params.z_min;
  std::vector<Vec3> wp;
  for (auto i : route) wp.push_back({env.map().gts.at(i).x, env.map().gts.at(i).y, altitude});
  fly_waypoints(env, wp);
  return finish(env);
}

/// ACO baseline for one realization: random start (as for the learned
/// policy), route from that start, then fly it.
inline EpisodeResult aco_episode(UavEnvironment& env, const AcoConfig& cfg, std::uint64_t seed) {
  const MdpState& s0 = env.reset(seed);
  std::vector<Point2> pts;
  for (const auto& g : env.map().gts) pts.push_back({g.x, g.y});
  Rng rng(derive_seed(seed, "aco"));
  const AcoResult route = aco_route(pts, {s0.position.x, s0.position.y}, cfg, rng);
  return aco_fly(env, route.order, cfg);
}

template <typename EpisodeFn>
EvalSummary evaluate_baseline(const std::string& name, const UrbanMap& map, const ChannelParams& channel,
                              const MdpConfig& mdp, int realizations, std::uint64_t seed, EpisodeFn&& fn) {
  EvalSummary summary{name, {}};
  UavEnvironment env(map, channel, mdp);
  for (int i = 0; i < realizations; ++i) summary.runs.push_back(fn(env, realization_seed(seed, i)));
  return summary;
}

inline EvalSummary evaluate_scan(const UrbanMap& map, const ChannelParams& channel, const MdpConfig& mdp,
                                 const ScanConfig& cfg, int realizations, std::uint64_t seed) {
  return evaluate_baseline("scan", map, channel, mdp, realizations, seed,
                           [&](UavEnvironment& env, std::uint64_t s) { return scan_trajectory(env, cfg, s); });
}

inline EvalSummary evaluate_aco(const UrbanMap& map, const ChannelParams& channel, const MdpConfig& mdp,
                                const AcoConfig& cfg, int realizations, std::uint64_t seed) {
  return evaluate_baseline("aco", map, channel, mdp, realizations, seed,
                           [&](UavEnvironment& env, std::uint64_t s) { return aco_episode(env, cfg, s); });
}

}  // namespace uavtraj
