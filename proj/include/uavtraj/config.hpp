#pragma once

// Run configuration: one JSON document with a section per subsystem. Every
// key is optional and defaults to the reference setup; unknown keys are errors.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "uavtraj/baselines.hpp"
#include "uavtraj/channel.hpp"
#include "uavtraj/ddpg.hpp"
#include "uavtraj/environment.hpp"
#include "uavtraj/mdp.hpp"

namespace uavtraj {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  int realizations = 25;
};

struct RunConfig {
  EnvParams env;
  ChannelParams channel;
  MdpConfig mdp;
  TrainConfig train;
  ScanConfig scan;
  AcoConfig aco;
  EvalConfig eval;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> env_seed;
  std::string map_file;
  std::string output_dir = "run";

  std::uint64_t map_seed() const { return env_seed ? *env_seed : derive_seed(seed, "environment"); }
  std::uint64_t train_seed() const { return derive_seed(seed, "train"); }
  std::uint64_t eval_seed() const { return derive_seed(seed, "eval"); }

  void validate() const {
    env.validate();
    channel.validate();
    mdp.validate();
    train.validate();
    aco.validate();
    if (eval.realizations < 1) throw ConfigError("eval.realizations must be >= 1");
  }
};

namespace detail {

/// Reads known keys out of one JSON object and rejects whatever is left.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  template <typename T>
  SectionReader& read(const char* key, T& field) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        it->get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError("unknown key '" + name_ + "." + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::SectionReader top(j, "config");
  nlohmann::json env_j = j.value("environment", nlohmann::json::object());
  nlohmann::json ch_j = j.value("channel", nlohmann::json::object());
  nlohmann::json mdp_j = j.value("mdp", nlohmann::json::object());
  nlohmann::json train_j = j.value("train", nlohmann::json::object());
  nlohmann::json scan_j = j.value("scan", nlohmann::json::object());
  nlohmann::json aco_j = j.value("aco", nlohmann::json::object());
  nlohmann::json eval_j = j.value("eval", nlohmann::json::object());

  std::uint64_t env_seed = 0;
  const bool has_env_seed = j.contains("env_seed");
  nlohmann::json sink;  // sections are parsed below; here they are only marked as known
  top.read("environment", sink).read("channel", sink).read("mdp", sink).read("train", sink).read("scan", sink)
      .read("aco", sink).read("eval", sink);
  top.read("seed", c.seed).read("env_seed", env_seed).read("map_file", c.map_file).read("output_dir", c.output_dir);
  top.finish();
  if (has_env_seed) c.env_seed = env_seed;

  detail::SectionReader(env_j, "environment")
      .read("alpha", c.env.alpha)
      .read("beta", c.env.beta)
      .read("lambda", c.env.lambda)
      .read("side", c.env.side)
      .read("height_min", c.env.height_min)
      .read("height_max", c.env.height_max)
      .read("z_min", c.env.z_min)
      .read("z_max", c.env.z_max)
      .read("num_gts", c.env.num_gts)
      .finish();

  double rician_db = linear_to_db(c.channel.rician_factor);
  detail::SectionReader(ch_j, "channel")
      .read("carrier_hz", c.channel.carrier_hz)
      .read("eta_los_db", c.channel.eta_los_db)
      .read("eta_nlos_db", c.channel.eta_nlos_db)
      .read("rician_factor_db", rician_db)
      .read("num_antennas", c.channel.num_antennas)
      .read("noise_dbm", c.channel.noise_dbm)
      .read("tx_power_dbm", c.channel.tx_power_dbm)
      .finish();
  if (ch_j.contains("rician_factor_db")) c.channel.rician_factor = db_to_linear(rician_db);

  detail::SectionReader(mdp_j, "mdp")
      .read("flight_time", c.mdp.flight_time)
      .read("max_speed", c.mdp.max_speed)
      .read("snr_threshold_db", c.mdp.snr_threshold_db)
      .read("kappa_cov", c.mdp.kappa_cov)
      .read("kappa_idle", c.mdp.kappa_idle)
      .read("boundary_penalty", c.mdp.boundary_penalty)
      .read("max_steps", c.mdp.max_steps)
      .read("zeta_init", c.mdp.zeta_init)
      .read("bandwidth_hz", c.mdp.bandwidth_hz)
      .read("file_size_bits", c.mdp.file_size_bits)
      .finish();

  detail::SectionReader(train_j, "train")
      .read("episodes", c.train.episodes)
      .read("batch_size", c.train.batch_size)
      .read("gamma", c.train.gamma)
      .read("tau", c.train.tau)
      .read("noise_std", c.train.noise_std)
      .read("noise_decay", c.train.noise_decay)
      .read("warmup", c.train.warmup)
      .read("buffer_capacity", c.train.buffer_capacity)
      .read("actor_lr", c.train.actor_lr)
      .read("critic_lr", c.train.critic_lr)
      .read("hidden_width", c.train.hidden_width)
      .read("checkpoint_every", c.train.checkpoint_every)
      .finish();

  detail::SectionReader(scan_j, "scan")
      .read("spacing", c.scan.spacing)
      .read("altitude", c.scan.altitude)
      .read("speed", c.scan.speed)
      .finish();

  detail::SectionReader(aco_j, "aco")
      .read("ants", c.aco.ants)
      .read("iterations", c.aco.iterations)
      .read("pheromone_weight", c.aco.pheromone_weight)
      .read("heuristic_weight", c.aco.heuristic_weight)
      .read("evaporation", c.aco.evaporation)
      .read("initial_trail", c.aco.initial_trail)
      .read("altitude", c.aco.altitude)
      .finish();

  detail::SectionReader(eval_j, "eval").read("realizations", c.eval.realizations).finish();

  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  if (c.env_seed) j["env_seed"] = *c.env_seed;
  if (!c.map_file.empty()) j["map_file"] = c.map_file;
  j["output_dir"] = c.output_dir;
  j["environment"] = c.env;
  j["channel"] = {{"carrier_hz", c.channel.carrier_hz},
                  {"eta_los_db", c.channel.eta_los_db},
                  {"eta_nlos_db", c.channel.eta_nlos_db},
                  {"rician_factor_db", linear_to_db(c.channel.rician_factor)},
                  {"num_antennas", c.channel.num_antennas},
                  {"noise_dbm", c.channel.noise_dbm},
                  {"tx_power_dbm", c.channel.tx_power_dbm}};
  j["mdp"] = {{"flight_time", c.mdp.flight_time},
              {"max_speed", c.mdp.max_speed},
              {"snr_threshold_db", c.mdp.snr_threshold_db},
              {"kappa_cov", c.mdp.kappa_cov},
              {"kappa_idle", c.mdp.kappa_idle},
              {"boundary_penalty", c.mdp.boundary_penalty},
              {"max_steps", c.mdp.max_steps},
              {"zeta_init", c.mdp.zeta_init},
              {"bandwidth_hz", c.mdp.bandwidth_hz},
              {"file_size_bits", c.mdp.file_size_bits}};
  j["train"] = {{"episodes", c.train.episodes},
                {"batch_size", c.train.batch_size},
                {"gamma", c.train.gamma},
                {"tau", c.train.tau},
                {"noise_std", c.train.noise_std},
                {"noise_decay", c.train.noise_decay},
                {"warmup", c.train.warmup},
                {"buffer_capacity", c.train.buffer_capacity},
                {"actor_lr", c.train.actor_lr},
                {"critic_lr", c.train.critic_lr},
                {"hidden_width", c.train.hidden_width},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["scan"] = {{"spacing", c.scan.spacing}, {"altitude", c.scan.altitude}, {"speed", c.scan.speed}};
  j["aco"] = {{"ants", c.aco.ants},
              {"iterations", c.aco.iterations},
              {"pheromone_weight", c.aco.pheromone_weight},
              {"heuristic_weight", c.aco.heuristic_weight},
              {"evaporation", c.aco.evaporation},
              {"initial_trail", c.aco.initial_trail},
              {"altitude", c.aco.altitude}};
  j["eval"] = {{"realizations", c.eval.realizations}};
  return j;
}

}  // namespace uavtraj
