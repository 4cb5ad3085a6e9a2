#pragma once

// Episodic UAV data-delivery environment: move, broadcast wake-up, serve-once
// bookkeeping, ZF transmission with hover, pheromone and shaped reward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavtraj/channel.hpp"
#include "uavtraj/environment.hpp"
#include "uavtraj/precoding.hpp"
#include "uavtraj/rng.hpp"

namespace uavtraj {

struct MdpConfig {
  double flight_time = 2.5;        // delta_ft (s)
  double max_speed = 20.0;         // m/s
  double snr_threshold_db = 0.0;   // rho_th
  double kappa_cov = 10.0;
  double kappa_idle = 2.0;         // pheromone lost on a step without transmission
  double boundary_penalty = 20.0;  // P_ob
  int max_steps = 200;             // N_max
  double zeta_init = 0.0;
  double bandwidth_hz = 5e6;
  double file_size_bits = 20e6;

  void validate() const {
    if (!(flight_time > 0.0 && max_speed > 0.0 && kappa_cov > 0.0 && kappa_idle > 0.0 &&
          boundary_penalty > 0.0 && max_steps > 0 && bandwidth_hz > 0.0 && file_size_bits > 0.0))
      throw std::invalid_argument("MDP constants must be positive");
  }
};

struct Action {
  double speed = 0.0;    // [0, max_speed]
  double pitch = 0.0;    // [0, pi] from +z
  double heading = 0.0;  // (0, 2 pi] from +x
};

struct MdpState {
  std::vector<std::uint8_t> woken;   // b: broadcast SNR above threshold this step
  std::vector<std::uint8_t> served;  // c
  Vec3 position;
  double zeta = 0.0;

  std::size_t num_gts() const { return served.size(); }
  int served_count() const { return static_cast<int>(std::count(served.begin(), served.end(), 1)); }

  /// [b_1..b_K, c_1..c_K, x, y, z, zeta]
  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(2 * woken.size() + 4);
    for (auto b : woken) v.push_back(b);
    for (auto c : served) v.push_back(c);
    v.insert(v.end(), {position.x, position.y, position.z, zeta});
    return v;
  }
};

inline constexpr std::size_t state_size(std::size_t num_gts) { return 2 * num_gts + 4; }

struct StepRecord {
  int step = 0;
  Vec3 position;  // after the step
  Action action;
  int active = 0;  // K_n
  double hover_time = 0.0;
  double zeta = 0.0;
  double reward = 0.0;
  int served_total = 0;
  bool violated = false;
};

struct StepOutcome {
  double reward = 0.0;
  MdpState next_state;
  bool done = false;
  bool completed = false;
  double duration = 0.0;  // delta_ft + hover
  std::vector<std::size_t> served_this_step;
};

// ---- building blocks ------------------------------------------------------

struct MoveResult {
  Vec3 position;
  bool violated = false;
};

inline constexpr double kBoundaryTolerance = 1e-9;

/// Spherical displacement of length flight_time * speed. Destinations outside
/// [0, D]^2 x [z_min, z_max] cancel the move.
inline MoveResult move(const Vec3& from, const Action& a, double flight_time, const EnvParams& bounds) {
  const double m = flight_time * a.speed;
  Vec3 to{from.x + m * std::sin(a.pitch) * std::cos(a.heading), from.y + m * std::sin(a.pitch) * std::sin(a.heading),
          from.z + m * std::cos(a.pitch)};
  auto inside = [](double v, double lo, double hi) {
    return v >= lo - kBoundaryTolerance && v <= hi + kBoundaryTolerance;
  };
  if (!inside(to.x, 0.0, bounds.side) || !inside(to.y, 0.0, bounds.side) || !inside(to.z, bounds.z_min, bounds.z_max))
    return {from, true};
  to.x = std::clamp(to.x, 0.0, bounds.side);
  to.y = std::clamp(to.y, 0.0, bounds.side);
  to.z = std::clamp(to.z, bounds.z_min, bounds.z_max);
  return {to, false};
}

inline std::vector<std::uint8_t> wake_up(const Vec3& position, const UrbanMap& map, const ChannelParams& channel,
                                         double threshold_db, const FadingSource& fading, std::uint64_t step,
                                         FadingStage stage = FadingStage::broadcast) {
  const double threshold = db_to_linear(threshold_db);
  std::vector<std::uint8_t> b(map.gts.size(), 0);
  for (std::size_t k = 0; k < map.gts.size(); ++k) {
    Rng rng = fading.stream(step, stage, k);
    b[k] = broadcast_snr(broadcast_channel(position, map.gts[k], map, channel, rng), channel) >= threshold ? 1 : 0;
  }
  return b;
}

struct ServeUpdate {
  std::vector<std::uint8_t> fresh;   // b~
  std::vector<std::uint8_t> served;  // c
};

inline ServeUpdate update_served(const std::vector<std::uint8_t>& woken, const std::vector<std::uint8_t>& served_prev) {
  if (woken.size() != served_prev.size()) throw std::invalid_argument("flag vectors differ in length");
  ServeUpdate u{std::vector<std::uint8_t>(woken.size(), 0), served_prev};
  for (std::size_t k = 0; k < woken.size(); ++k) {
    u.fresh[k] = (woken[k] == 1 && served_prev[k] == 0) ? 1 : 0;
    u.served[k] = static_cast<std::uint8_t>(std::min(served_prev[k] + u.fresh[k], 1));
  }
  return u;
}

inline double pheromone_update(double zeta_prev, int active, double kappa_cov, double kappa_dis, double penalty) {
  return zeta_prev + active * kappa_cov - kappa_dis - penalty;
}

/// 2 / (1 + exp(-zeta / (K kappa_cov))) - 1, a tanh-shaped map into (-1, 1).
inline double shaped_reward(double zeta, std::size_t num_gts, double kappa_cov) {
  const double scale = static_cast<double>(num_gts) * kappa_cov;
  if (!(scale > 0.0)) throw std::invalid_argument("K * kappa_cov must be positive");
  return 2.0 / (1.0 + std::exp(-zeta / scale)) - 1.0;
}

inline double mission_time(const std::vector<StepRecord>& records, double flight_time) {
  double t = 0.0;
  for (const auto& r : records) t += flight_time + r.hover_time;
  return t;
}

// ---- environment ----------------------------------------------------------

class UavEnvironment {
 public:
  UavEnvironment(const UrbanMap& map, ChannelParams channel, MdpConfig config)
      : map_(&map), channel_(channel), config_(config) {
    channel_.validate();
    config_.validate();
    if (map.gts.empty()) throw std::invalid_argument("map has no GTs");
  }

  const UrbanMap& map() const { return *map_; }
  const ChannelParams& channel() const { return channel_; }
  const MdpConfig& config() const { return config_; }
  std::size_t num_gts() const { return map_->gts.size(); }
  std::size_t observation_size() const { return state_size(num_gts()); }

  /// Random start over [0, D]^2 x [z_min, z_max].
  const MdpState& reset(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "start"));
    const auto& p = map_->params;
    const double x = rng.uniform(0.0, p.side);
    const double y = rng.uniform(0.0, p.side);
    const double z = rng.uniform(p.z_min, p.z_max);
    return reset_at({x, y, z}, seed);
  }

  const MdpState& reset_at(const Vec3& start, std::uint64_t seed) {
    fading_ = FadingSource{derive_seed(seed, "fading")};
    step_ = 0;
    done_ = false;
    records_.clear();
    state_.position = start;
    state_.served.assign(num_gts(), 0);
    state_.zeta = config_.zeta_init;
    state_.woken = wake_up(start, *map_, channel_, config_.snr_threshold_db, fading_, 0, FadingStage::initial);
    return state_;
  }

  StepOutcome step(const Action& action) {
    if (done_) throw std::logic_error("step() called on a finished episode");
    validate_action(action);
    const int n = step_;

    const MoveResult mv = move(state_.position, action, config_.flight_time, map_->params);
    state_.position = mv.position;

    state_.woken = wake_up(state_.position, *map_, channel_, config_.snr_threshold_db, fading_,
                           static_cast<std::uint64_t>(n));
    const std::vector<std::uint8_t> served_prev = state_.served;
    ServeUpdate su = update_served(state_.woken, served_prev);

    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < su.fresh.size(); ++k)
      if (su.fresh[k]) active.push_back(k);
    double hover = 0.0;
    if (!active.empty()) hover = transmit(active, static_cast<std::uint64_t>(n));
    // Users dropped by transmit() stay unserved and remain eligible later.
    for (std::size_t k = 0; k < su.fresh.size(); ++k)
      if (su.fresh[k] && std::find(active.begin(), active.end(), k) == active.end()) su.served[k] = served_prev[k];
    state_.served = su.served;

    const int kn = static_cast<int>(active.size());
    const double kappa_dis = kn > 0 ? hover : config_.kappa_idle;
    state_.zeta = pheromone_update(state_.zeta, kn, config_.kappa_cov, kappa_dis,
                                   mv.violated ? config_.boundary_penalty : 0.0);

    StepOutcome out;
    out.reward = shaped_reward(state_.zeta, num_gts(), config_.kappa_cov);
    out.completed = state_.served_count() == static_cast<int>(num_gts());
    if (out.completed) out.reward += config_.max_steps - n;
    ++step_;
    out.done = out.completed || step_ >= config_.max_steps;
    done_ = out.done;
    out.duration = config_.flight_time + hover;
    out.served_this_step = active;
    out.next_state = state_;

    records_.push_back({n, state_.position, action, kn, hover, state_.zeta, out.reward, state_.served_count(),
                        mv.violated});
    return out;
  }

  const MdpState& state() const { return state_; }
  int step_index() const { return step_; }
  bool done() const { return done_; }
  const std::vector<StepRecord>& records() const { return records_; }
  double elapsed() const { return mission_time(records_, config_.flight_time); }

  void validate_action(const Action& a) const {
    constexpr double eps = 1e-12;
    if (!(a.speed >= -eps && a.speed <= config_.max_speed + eps) || !(a.pitch >= -eps && a.pitch <= std::numbers::pi + eps) ||
        !(a.heading >= -eps && a.heading <= 2.0 * std::numbers::pi + eps))
      throw std::invalid_argument("action outside [0, v_max] x [0, pi] x (0, 2 pi]");
  }

 private:
  /// Serves `active` (trimmed in place to the users actually served) and
  /// returns the hover time.
  double transmit(std::vector<std::size_t>& active, std::uint64_t n) {
    const auto nt = static_cast<std::size_t>(channel_.num_antennas);
    if (active.size() > nt) {
      std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        return distance(state_.position, map_->gts[a]) < distance(state_.position, map_->gts[b]);
      });
      active.resize(nt);
      std::sort(active.begin(), active.end());
    }
    FadingStage stage = FadingStage::transmission;
    for (;;) {
      Eigen::MatrixXcd H(static_cast<Eigen::Index>(active.size()), channel_.num_antennas);
      for (std::size_t i = 0; i < active.size(); ++i) {
        Rng rng = fading_.stream(n, stage, active[i]);
        H.row(static_cast<Eigen::Index>(i)) = miso_channel(state_.position, map_->gts[active[i]], *map_, channel_, rng)
                                                   .gains.transpose();
      }
      try {
        const std::vector<double> f(active.size(), config_.file_size_bits);
        return link_budget(H, db_to_linear(channel_.tx_power_dbm), db_to_linear(channel_.noise_dbm),
                           config_.bandwidth_hz, f)
            .hover_time;
      } catch (const DegenerateGeometry&) {
        if (stage == FadingStage::transmission) {
          stage = FadingStage::transmission_retry;
          continue;
        }
        if (active.size() == 1) {
          active.clear();
          return 0.0;
        }
        active.erase(active.begin() + worst_conditioned_user(H));
      }
    }
  }

  const UrbanMap* map_;
  ChannelParams channel_;
  MdpConfig config_;
  FadingSource fading_;
  MdpState state_;
  int step_ = 0;
  bool done_ = false;
  std::vector<StepRecord> records_;
};

// ---- trajectory log -------------------------------------------------------

inline void write_trajectory_header(std::ostream& os) {
  os << "strategy,n,x,y,z,speed,pitch,heading,active,hover_time,zeta,reward,served_total,violated\n";
}

inline void write_trajectory(std::ostream& os, const std::string& strategy, const std::vector<StepRecord>& records) {
  const auto old_precision = os.precision(17);
  for (const auto& r : records)
    os << strategy << ',' << r.step << ',' << r.position.x << ',' << r.position.y << ',' << r.position.z << ','
       << r.action.speed << ',' << r.action.pitch << ',' << r.action.heading << ',' << r.active << ','
       << r.hover_time << ',' << r.zeta << ',' << r.reward << ',' << r.served_total << ',' << (r.violated ? 1 : 0)
       << '\n';
  os.precision(old_precision);
}

}  // namespace uavtraj
