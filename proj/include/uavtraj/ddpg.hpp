#pragma once

// DDPG trainer for the UAV environment: replay buffer, exploration with
// per-episode noise decay, critic regression onto bootstrapped targets,
// deterministic policy gradient through the critic, and soft target updates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uavtraj/mdp.hpp"
#include "uavtraj/neuralnet.hpp"
#include "uavtraj/rng.hpp"

namespace uavtraj {

inline constexpr int kActionSize = 3;

struct Transition {
  std::vector<double> state;
  Action action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 125000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  const Transition& operator[](std::size_t i) const { return data_.at(i); }

  /// `count` distinct slots, uniformly (Floyd's algorithm).
  std::vector<std::size_t> sample(std::size_t count, Rng& rng) const {
    const std::size_t n = data_.size();
    if (count > n) throw std::invalid_argument("minibatch larger than buffer fill");
    std::vector<std::size_t> picked;
    picked.reserve(count);
    std::unordered_set<std::size_t> seen;
    for (std::size_t j = n - count; j < n; ++j) {
      const std::size_t t = rng.index(j + 1);
      const std::size_t v = seen.contains(t) ? j : t;
      seen.insert(v);
      picked.push_back(v);
    }
    return picked;
  }

  void save(std::ostream& os) const {
    os.write("UAVRPLY1", 8);
    io::write_pod<std::uint64_t>(os, capacity_);
    io::write_pod<std::uint64_t>(os, cursor_);
    io::write_pod<std::uint64_t>(os, data_.size());
    const std::uint64_t width = data_.empty() ? 0 : data_.front().state.size();
    io::write_pod(os, width);
    for (const auto& t : data_) {
      io::write_doubles(os, t.state.data(), t.state.size());
      io::write_doubles(os, t.next_state.data(), t.next_state.size());
      const double rest[5] = {t.action.speed, t.action.pitch, t.action.heading, t.reward, t.done ? 1.0 : 0.0};
      io::write_doubles(os, rest, 5);
    }
  }

  static ReplayBuffer load(std::istream& is) {
    io::expect_magic(is, "UAVRPLY1");
    ReplayBuffer buf(io::read_pod<std::uint64_t>(is));
    buf.cursor_ = io::read_pod<std::uint64_t>(is);
    const auto n = io::read_pod<std::uint64_t>(is);
    const auto width = io::read_pod<std::uint64_t>(is);
    buf.data_.resize(n);
    for (auto& t : buf.data_) {
      t.state.resize(width);
      t.next_state.resize(width);
      io::read_doubles(is, t.state.data(), width);
      io::read_doubles(is, t.next_state.data(), width);
      double rest[5];
      io::read_doubles(is, rest, 5);
      t.action = {rest[0], rest[1], rest[2]};
      t.reward = rest[3];
      t.done = rest[4] != 0.0;
    }
    return buf;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

struct TrainConfig {
  int episodes = 8000;
  int batch_size = 256;
  double gamma = 0.99;
  double tau = 0.005;
  double noise_std = 0.6;
  double noise_decay = 0.999;  // per episode
  std::size_t warmup = 2000;
  std::size_t buffer_capacity = 125000;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int hidden_width = 200;
  int checkpoint_every = 0;  // episodes; 0 disables periodic checkpoints

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    if (batch_size < 1 || static_cast<std::size_t>(batch_size) > warmup)
      throw std::invalid_argument("minibatch must be positive and not exceed the warmup threshold");
    if (episodes < 0 || hidden_width < 1 || buffer_capacity <= warmup)
      throw std::invalid_argument("invalid training configuration");
  }

  double noise_at(int episode) const { return noise_std * std::pow(noise_decay, episode); }
};

// ---- observation / action scaling -----------------------------------------

/// Maps raw states and actions to the network's working ranges: positions to
/// [-1, 1], pheromone to units of K kappa_cov, actions to [-1, 1]^3.
class Scaling {
 public:
  Scaling() = default;
  Scaling(const EnvParams& env, const MdpConfig& mdp, std::size_t num_gts)
      : side_(env.side), z_min_(env.z_min), z_max_(env.z_max), max_speed_(mdp.max_speed),
        zeta_scale_(static_cast<double>(num_gts) * mdp.kappa_cov), num_gts_(num_gts) {}

  std::size_t state_size() const { return 2 * num_gts_ + 4; }
  double max_speed() const { return max_speed_; }

  void state_into(const std::vector<double>& s, Eigen::Ref<Eigen::VectorXd> out) const {
    const std::size_t k2 = 2 * num_gts_;
    if (s.size() != k2 + 4) throw std::invalid_argument("state length must be 2K+4");
    for (std::size_t i = 0; i < k2; ++i) out[static_cast<Eigen::Index>(i)] = s[i];
    const auto base = static_cast<Eigen::Index>(k2);
    out[base] = 2.0 * s[k2] / side_ - 1.0;
    out[base + 1] = 2.0 * s[k2 + 1] / side_ - 1.0;
    out[base + 2] = 2.0 * (s[k2 + 2] - z_min_) / (z_max_ - z_min_) - 1.0;
    out[base + 3] = s[k2 + 3] / zeta_scale_;
  }

  Eigen::VectorXd state(const std::vector<double>& s) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(state_size()));
    state_into(s, v);
    return v;
  }

  Action action(const Eigen::Vector3d& u) const {
    Action a;
    a.speed = std::clamp(0.5 * (u[0] + 1.0), 0.0, 1.0) * max_speed_;
    a.pitch = std::clamp(0.5 * (u[1] + 1.0), 0.0, 1.0) * std::numbers::pi;
    a.heading = std::clamp(u[2] + 1.0, 0.0, 2.0) * std::numbers::pi;
    if (a.heading <= 0.0) a.heading = 2.0 * std::numbers::pi;  // (0, 2 pi]
    return a;
  }

  Eigen::Vector3d normalized(const Action& a) const {
    return {2.0 * a.speed / max_speed_ - 1.0, 2.0 * a.pitch / std::numbers::pi - 1.0,
            a.heading / std::numbers::pi - 1.0};
  }

 private:
  double side_ = 1.0;
  double z_min_ = 0.0;
  double z_max_ = 1.0;
  double max_speed_ = 1.0;
  double zeta_scale_ = 1.0;
  std::size_t num_gts_ = 0;
};

// ---- learning rules on bare networks --------------------------------------

struct Batch {
  Eigen::MatrixXd states;       // S x B, scaled
  Eigen::MatrixXd actions;      // 3 x B, in [-1, 1]
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;  // S x B, scaled
  Eigen::VectorXd done;         // 1 for terminal transitions
  Eigen::Index size() const { return states.cols(); }
};

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd x(top.rows() + bottom.rows(), top.cols());
  x << top, bottom;
  return x;
}

/// y = r + gamma (1 - done) Q'(s', pi'(s')).
inline Eigen::VectorXd critic_targets(const Mlp& critic_target, const Mlp& actor_target, const Eigen::VectorXd& rewards,
                                      const Eigen::MatrixXd& next_states, const Eigen::VectorXd& done, double gamma) {
  const Eigen::MatrixXd next_actions = actor_target.forward(next_states);
  const Eigen::RowVectorXd q_next = critic_target.forward(stack_rows(next_states, next_actions)).row(0);
  return (rewards.array() + gamma * (1.0 - done.array()) * q_next.transpose().array()).matrix();
}

/// Mean squared TD error and (optionally) its gradient w.r.t. critic parameters.
inline double critic_loss(const Mlp& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                          const Eigen::VectorXd& targets, Gradients* grad = nullptr) {
  Mlp::Cache cache;
  const Eigen::MatrixXd q = critic.forward(stack_rows(states, actions), grad ? &cache : nullptr);
  const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
  const double b = static_cast<double>(targets.size());
  if (grad) *grad = critic.backward(cache, (2.0 / b) * err);
  return err.squaredNorm() / b;
}

/// One Adam step on the critic; returns the pre-step loss.
inline double update_critic(Mlp& critic, Adam& opt, const Batch& batch, const Eigen::VectorXd& targets) {
  Gradients g;
  const double loss = critic_loss(critic, batch.states, batch.actions, targets, &g);
  opt.step(critic, g);
  return loss;
}

/// J = mean_b Q(s_b, pi(s_b)). When requested, `grad_ascent` receives dJ/dphi
/// for the actor parameters, chained through the critic's input gradient.
inline double actor_objective(const Mlp& actor, const Mlp& critic, const Eigen::MatrixXd& states,
                              Gradients* grad_ascent = nullptr) {
  Mlp::Cache actor_cache;
  Mlp::Cache critic_cache;
  const Eigen::MatrixXd actions = actor.forward(states, grad_ascent ? &actor_cache : nullptr);
  const Eigen::MatrixXd q = critic.forward(stack_rows(states, actions), grad_ascent ? &critic_cache : nullptr);
  const double b = static_cast<double>(states.cols());
  if (grad_ascent) {
    Eigen::MatrixXd grad_in;
    critic.backward(critic_cache, Eigen::RowVectorXd::Constant(states.cols(), 1.0 / b), &grad_in);
    *grad_ascent = actor.backward(actor_cache, grad_in.bottomRows(actor.output_size()));
  }
  return q.sum() / b;
}

/// One Adam step ascending J; the critic is read-only. Returns pre-step J.
inline double update_actor(Mlp& actor, Adam& opt, const Mlp& critic, const Eigen::MatrixXd& states) {
  Gradients g;
  const double j = actor_objective(actor, critic, states, &g);
  g *= -1.0;
  opt.step(actor, g);
  return j;
}

// ---- agent ---------------------------------------------------------------

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DdpgAgent {
  Scaling scaling;
  Mlp actor;
  Mlp critic;
  Mlp actor_target;
  Mlp critic_target;
  Adam actor_opt;
  Adam critic_opt;

  DdpgAgent() = default;

  DdpgAgent(const Scaling& s, const TrainConfig& cfg, std::uint64_t seed) : scaling(s) {
    const int in = static_cast<int>(s.state_size());
    const int h = cfg.hidden_width;
    Rng actor_init(derive_seed(seed, "actor-init"));
    Rng critic_init(derive_seed(seed, "critic-init"));
    actor = Mlp({in, h, h, kActionSize}, Activation::relu, Activation::tanh, actor_init);
    critic = Mlp({in + kActionSize, h, h, 1}, Activation::relu, Activation::linear, critic_init);
    actor_target = actor;
    critic_target = critic;
    actor_opt = Adam(actor, cfg.actor_lr);
    critic_opt = Adam(critic, cfg.critic_lr);
  }

  /// pi(s) in [-1, 1]^3.
  Eigen::Vector3d policy(const std::vector<double>& state) const {
    return actor.forward(scaling.state(state)).col(0);
  }

  Action greedy_action(const std::vector<double>& state) const { return scaling.action(policy(state)); }

  /// pi(s) + N(0, noise_std^2) per coordinate, clipped to the action box.
  Action select_action(const std::vector<double>& state, double noise_std, Rng& rng) const {
    Eigen::Vector3d u = policy(state);
    if (noise_std > 0.0)
      for (int i = 0; i < kActionSize; ++i) u[i] = std::clamp(u[i] + noise_std * rng.normal(), -1.0, 1.0);
    return scaling.action(u);
  }

  Batch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx) const {
    const auto b = static_cast<Eigen::Index>(idx.size());
    const auto s = static_cast<Eigen::Index>(scaling.state_size());
    Batch batch{Eigen::MatrixXd(s, b), Eigen::MatrixXd(kActionSize, b), Eigen::VectorXd(b), Eigen::MatrixXd(s, b),
                Eigen::VectorXd(b)};
    for (Eigen::Index j = 0; j < b; ++j) {
      const Transition& t = buffer[idx[static_cast<std::size_t>(j)]];
      scaling.state_into(t.state, batch.states.col(j));
      scaling.state_into(t.next_state, batch.next_states.col(j));
      batch.actions.col(j) = scaling.normalized(t.action);
      batch.rewards[j] = t.reward;
      batch.done[j] = t.done ? 1.0 : 0.0;
    }
    return batch;
  }

  struct UpdateStats {
    double critic_loss;
    double actor_objective;
  };

  UpdateStats learn(const Batch& batch, double gamma, double tau) {
    const Eigen::VectorXd y = critic_targets(critic_target, actor_target, batch.rewards, batch.next_states, batch.done, gamma);
    const double loss = update_critic(critic, critic_opt, batch, y);
    const double j = update_actor(actor, actor_opt, critic, batch.states);
    soft_update(critic_target, critic, tau);
    soft_update(actor_target, actor, tau);
    if (!std::isfinite(loss) || !std::isfinite(j) || !actor.all_finite() || !critic.all_finite())
      throw DivergenceError("non-finite loss or parameters during DDPG update");
    return {loss, j};
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto put = [&](const char* name, auto&& fn) {
      std::ofstream os(dir / name, std::ios::binary);
      if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
      fn(os);
    };
    put("actor.bin", [&](std::ostream& os) { save_mlp(os, actor); });
    put("critic.bin", [&](std::ostream& os) { save_mlp(os, critic); });
    put("actor_target.bin", [&](std::ostream& os) { save_mlp(os, actor_target); });
    put("critic_target.bin", [&](std::ostream& os) { save_mlp(os, critic_target); });
    put("actor_opt.bin", [&](std::ostream& os) { actor_opt.save(os); });
    put("critic_opt.bin", [&](std::ostream& os) { critic_opt.save(os); });
  }

  void load(const std::filesystem::path& dir) {
    auto get = [&](const char* name, auto&& fn) {
      std::ifstream is(dir / name, std::ios::binary);
      if (!is) throw std::runtime_error("missing checkpoint file " + (dir / name).string());
      fn(is);
    };
    get("actor.bin", [&](std::istream& is) { actor = load_mlp(is); });
    get("critic.bin", [&](std::istream& is) { critic = load_mlp(is); });
    get("actor_target.bin", [&](std::istream& is) { actor_target = load_mlp(is); });
    get("critic_target.bin", [&](std::istream& is) { critic_target = load_mlp(is); });
    get("actor_opt.bin", [&](std::istream& is) { actor_opt.load(is); });
    get("critic_opt.bin", [&](std::istream& is) { critic_opt.load(is); });
  }
};

// ---- training loop ------------------------------------------------------

struct EpisodeStats {
  int episode = 0;
  double reward = 0.0;  // accumulated over the episode
  int steps = 0;
  bool completed = false;
  double mission_time = 0.0;
};

inline void write_reward_curve_header(std::ostream& os) { os << "episode,accumulated_reward,steps,completed,mission_time\n"; }

inline void write_reward_curve_row(std::ostream& os, const EpisodeStats& e) {
  const auto p = os.precision(17);
  os << e.episode << ',' << e.reward << ',' << e.steps << ',' << (e.completed ? 1 : 0) << ',' << e.mission_time << '\n';
  os.precision(p);
}

inline std::uint64_t episode_seed(std::uint64_t seed, int episode) {
  return derive_seed(derive_seed(seed, "episodes"), {static_cast<std::uint64_t>(episode)});
}

class Trainer {
 public:
  Trainer(const UrbanMap& map, ChannelParams channel, MdpConfig mdp, TrainConfig cfg, std::uint64_t seed)
      : env_(map, channel, mdp), cfg_(cfg), seed_(seed),
        agent_(Scaling(map.params, mdp, map.gts.size()), cfg, seed), buffer_(cfg.buffer_capacity),
        exploration_(derive_seed(seed, "exploration")), sampler_(derive_seed(seed, "replay")) {
    cfg_.validate();
  }

  const DdpgAgent& agent() const { return agent_; }
  DdpgAgent& agent() { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<EpisodeStats>& curve() const { return curve_; }
  int next_episode() const { return next_episode_; }
  std::uint64_t updates() const { return updates_; }
  const TrainConfig& config() const { return cfg_; }
  UavEnvironment& environment() { return env_; }

  EpisodeStats run_episode() {
    const int ep = next_episode_;
    const double noise = cfg_.noise_at(ep);
    std::vector<double> s = env_.reset(episode_seed(seed_, ep)).flatten();
    EpisodeStats stats;
    stats.episode = ep;
    for (;;) {
      const Action a = agent_.select_action(s, noise, exploration_);
      StepOutcome out = env_.step(a);
      std::vector<double> s_next = out.next_state.flatten();
      stats.reward += out.reward;
      buffer_.push({s, a, out.reward, s_next, out.done});
      if (buffer_.size() > cfg_.warmup) {
        const auto idx = buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), sampler_);
        agent_.learn(agent_.make_batch(buffer_, idx), cfg_.gamma, cfg_.tau);
        ++updates_;
      }
      s = std::move(s_next);
      if (out.done) {
        stats.completed = out.completed;
        break;
      }
    }
    stats.steps = env_.step_index();
    stats.mission_time = env_.elapsed();
    curve_.push_back(stats);
    ++next_episode_;
    return stats;
  }

  /// Runs until `episodes` have been completed in total.
  void run(int episodes, const std::function<void(const EpisodeStats&)>& on_episode = {}) {
    while (next_episode_ < episodes) {
      const EpisodeStats e = run_episode();
      if (on_episode) on_episode(e);
    }
  }

  void save_checkpoint(const std::filesystem::path& dir) const {
    agent_.save(dir);
    {
      std::ofstream os(dir / "replay.bin", std::ios::binary);
      buffer_.save(os);
    }
    nlohmann::json state{{"next_episode", next_episode_},
                         {"updates", updates_},
                         {"exploration_rng", exploration_.serialize()},
                         {"replay_rng", sampler_.serialize()},
                         {"seed", seed_}};
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : curve_) curve.push_back({e.episode, e.reward, e.steps, e.completed, e.mission_time});
    state["curve"] = curve;
    std::ofstream os(dir / "trainer_state.json");
    os << state.dump(1);
  }

  void load_checkpoint(const std::filesystem::path& dir) {
    agent_.load(dir);
    {
      std::ifstream is(dir / "replay.bin", std::ios::binary);
      if (!is) throw std::runtime_error("missing replay.bin in checkpoint");
      buffer_ = ReplayBuffer::load(is);
    }
    std::ifstream is(dir / "trainer_state.json");
    if (!is) throw std::runtime_error("missing trainer_state.json in checkpoint");
    const auto state = nlohmann::json::parse(is);
    if (state.at("seed").get<std::uint64_t>() != seed_) throw std::runtime_error("checkpoint was produced with another seed");
    next_episode_ = state.at("next_episode").get<int>();
    updates_ = state.at("updates").get<std::uint64_t>();
    exploration_.deserialize(state.at("exploration_rng").get<std::string>());
    sampler_.deserialize(state.at("replay_rng").get<std::string>());
    curve_.clear();
    for (const auto& e : state.at("curve"))
      curve_.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<int>(), e.at(3).get<bool>(),
                        e.at(4).get<double>()});
  }

 private:
  UavEnvironment env_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  DdpgAgent agent_;
  ReplayBuffer buffer_;
  Rng exploration_;
  Rng sampler_;
  std::vector<EpisodeStats> curve_;
  int next_episode_ = 0;
  std::uint64_t updates_ = 0;
};

// ---- evaluation ---------------------------------------------------------

struct EpisodeResult {
  double mission_time = 0.0;
  bool completed = false;
  int steps = 0;
  std::vector<StepRecord> records;
};

struct EvalSummary {
  std::string strategy;
  std::vector<EpisodeResult> runs;

  double mean_time() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.mission_time;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }
  double std_time() const {
    if (runs.size() < 2) return 0.0;
    const double m = mean_time();
    double s = 0.0;
    for (const auto& r : runs) s += (r.mission_time - m) * (r.mission_time - m);
    return std::sqrt(s / static_cast<double>(runs.size() - 1));
  }
  double completion_rate() const {
    double c = 0.0;
    for (const auto& r : runs) c += r.completed ? 1.0 : 0.0;
    return runs.empty() ? 0.0 : c / static_cast<double>(runs.size());
  }
};

/// Seed of realization i; every strategy sees the same start and fading streams.
inline std::uint64_t realization_seed(std::uint64_t seed, int i) {
  return derive_seed(derive_seed(seed, "realizations"), {static_cast<std::uint64_t>(i)});
}

/// Runs one episode to termination with a state -> action policy.
inline EpisodeResult run_policy_episode(UavEnvironment& env, const std::function<Action(const MdpState&)>& policy) {
  EpisodeResult res;
  bool done = false;
  while (!done) {
    const StepOutcome out = env.step(policy(env.state()));
    done = out.done;
    res.completed = out.completed;
  }
  res.steps = env.step_index();
  res.mission_time = env.elapsed();
  res.records = env.records();
  return res;
}

/// Noise-free greedy rollouts of a trained actor over independent realizations.
inline EvalSummary evaluate(const DdpgAgent& agent, const UrbanMap& map, const ChannelParams& channel,
                            const MdpConfig& mdp, int realizations, std::uint64_t seed) {
  EvalSummary summary{"drl", {}};
  UavEnvironment env(map, channel, mdp);
  for (int i = 0; i < realizations; ++i) {
    env.reset(realization_seed(seed, i));
    summary.runs.push_back(
        run_policy_episode(env, [&](const MdpState& s) { return agent.greedy_action(s.flatten()); }));
  }
  return summary;
}

inline void write_eval_summary(std::ostream& os, const EvalSummary& s, std::size_t num_gts) {
  const auto p = os.precision(17);
  os << "strategy,num_gts,realization,mission_time,completed,steps\n";
  for (std::size_t i = 0; i < s.runs.size(); ++i)
    os << s.strategy << ',' << num_gts << ',' << i << ',' << s.runs[i].mission_time << ','
       << (s.runs[i].completed ? 1 : 0) << ',' << s.runs[i].steps << '\n';
  os << s.strategy << ',' << num_gts << ",mean," << s.mean_time() << ',' << s.completion_rate() << ",\n";
  os.precision(p);
}

}  // namespace uavtraj
