#pragma once

// Subcommand implementations behind the `uavtraj` executable. Each returns a
// process exit code: 0 success, 1 usage/input error, 2 training divergence.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavtraj/baselines.hpp"
#include "uavtraj/config.hpp"
#include "uavtraj/ddpg.hpp"
#include "uavtraj/environment.hpp"

namespace uavtraj::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDiverged = 2 };

namespace fs = std::filesystem;

inline UrbanMap load_map_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open map file " + path.string());
  return map_from_json(nlohmann::json::parse(is));
}

/// The map a run works on: the configured map file, or a fresh realization
/// from the environment parameters and the map seed.
inline UrbanMap resolve_map(const RunConfig& cfg) {
  if (!cfg.map_file.empty()) return load_map_file(cfg.map_file);
  return generate_map(cfg.env, cfg.map_seed());
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline int cmd_gen_env(const RunConfig& cfg, std::ostream& log) {
  const UrbanMap map = generate_map(cfg.env, cfg.map_seed());
  const fs::path out = fs::path(cfg.output_dir) / "map.json";
  write_text(out, map_to_json(map).dump(1) + "\n");
  log << "buildings: " << map.buildings.size() << "\n"
      << "built fraction: " << map.built_fraction() << "\n"
      << "gts: " << map.gts.size() << "\n"
      << "map written to " << out.string() << "\n";
  return kSuccess;
}

inline std::string reward_curve_text(const std::vector<EpisodeStats>& curve) {
  std::ostringstream os;
  write_reward_curve_header(os);
  for (const auto& e : curve) write_reward_curve_row(os, e);
  return os.str();
}

/// Trains on the run's map; `resume_from` continues an earlier checkpoint.
inline int cmd_train(const RunConfig& cfg, std::ostream& log, const std::string& resume_from = {}) {
  const fs::path out(cfg.output_dir);
  const UrbanMap map = resolve_map(cfg);
  fs::create_directories(out);
  write_text(out / "map.json", map_to_json(map).dump(1) + "\n");
  write_text(out / "config.json", run_config_to_json(cfg).dump(1) + "\n");

  Trainer trainer(map, cfg.channel, cfg.mdp, cfg.train, cfg.train_seed());
  if (!resume_from.empty()) {
    trainer.load_checkpoint(resume_from);
    log << "resumed at episode " << trainer.next_episode() << "\n";
  }
  const fs::path ckpt = out / "checkpoint";
  auto save_all = [&](const fs::path& dir) {
    trainer.save_checkpoint(dir);
    write_text(dir / "config.json", run_config_to_json(cfg).dump(1) + "\n");
    write_text(out / "reward_curve.csv", reward_curve_text(trainer.curve()));
  };

  try {
    trainer.run(cfg.train.episodes, [&](const EpisodeStats& e) {
      if (cfg.train.checkpoint_every > 0 && (e.episode + 1) % cfg.train.checkpoint_every == 0) {
        save_all(ckpt);
        log << "episode " << e.episode + 1 << " reward " << e.reward << " steps " << e.steps << "\n";
      }
    });
  } catch (const DivergenceError& e) {
    log << "training diverged: " << e.what() << "\n";
    save_all(out / "diverged");
    return kDiverged;
  }
  save_all(ckpt);

  // Trajectory of one greedy rollout of the final policy, for plotting.
  UavEnvironment env(map, cfg.channel, cfg.mdp);
  env.reset(realization_seed(cfg.eval_seed(), 0));
  const EpisodeResult greedy = run_policy_episode(
      env, [&](const MdpState& s) { return trainer.agent().greedy_action(s.flatten()); });
  std::ostringstream traj;
  write_trajectory_header(traj);
  write_trajectory(traj, "drl", greedy.records);
  write_text(out / "trajectory_train.csv", traj.str());

  log << "trained " << trainer.curve().size() << " episodes, " << trainer.updates() << " updates\n";
  return kSuccess;
}

inline int cmd_eval(const RunConfig& cfg, const std::string& strategy, const std::string& checkpoint,
                    std::ostream& log) {
  const UrbanMap map = resolve_map(cfg);
  EvalSummary summary;
  if (strategy == "drl") {
    if (checkpoint.empty()) {
      log << "eval --strategy drl requires --checkpoint\n";
      return kUsage;
    }
    DdpgAgent agent(Scaling(map.params, cfg.mdp, map.gts.size()), cfg.train, cfg.train_seed());
    agent.load(checkpoint);
    if (agent.actor.input_size() != static_cast<int>(state_size(map.gts.size()))) {
      log << "checkpoint actor expects " << agent.actor.input_size() << " inputs, map needs "
          << state_size(map.gts.size()) << "\n";
      return kUsage;
    }
    summary = evaluate(agent, map, cfg.channel, cfg.mdp, cfg.eval.realizations, cfg.eval_seed());
  } else if (strategy == "scan") {
    summary = evaluate_scan(map, cfg.channel, cfg.mdp, cfg.scan, cfg.eval.realizations, cfg.eval_seed());
  } else if (strategy == "aco") {
    summary = evaluate_aco(map, cfg.channel, cfg.mdp, cfg.aco, cfg.eval.realizations, cfg.eval_seed());
  } else {
    log << "unknown strategy '" << strategy << "' (expected drl, scan or aco)\n";
    return kUsage;
  }

  const fs::path out(cfg.output_dir);
  std::ostringstream os;
  write_eval_summary(os, summary, map.gts.size());
  write_text(out / ("eval_" + strategy + ".csv"), os.str());
  std::ostringstream traj;
  write_trajectory_header(traj);
  if (!summary.runs.empty()) write_trajectory(traj, strategy, summary.runs.front().records);
  write_text(out / ("trajectory_" + strategy + ".csv"), traj.str());
  if (!fs::exists(out / "map.json")) write_text(out / "map.json", map_to_json(map).dump(1) + "\n");

  log << strategy << ": mean mission time " << summary.mean_time() << " s over " << summary.runs.size()
      << " realizations, completion rate " << summary.completion_rate() << "\n";
  return kSuccess;
}

// ---- plot export ----------------------------------------------------------

struct EvalMean {
  std::string strategy;
  std::size_t num_gts = 0;
  double mean_time = 0.0;
};

/// Reads the aggregate row of an eval summary file.
inline std::optional<EvalMean> read_eval_mean(const fs::path& path) {
  std::istringstream is(read_text(path));
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() >= 4 && cells[2] == "mean") return EvalMean{cells[0], std::stoul(cells[1]), std::stod(cells[3])};
  }
  return std::nullopt;
}

/// Emits plot-ready tables under <run_dir>/plots:
///   buildings.csv, gts.csv           map layout
///   trajectory.csv                   every trajectory_*.csv concatenated
///   reward_curve.csv                 episode vs accumulated reward
///   completion_vs_k.csv              K, drl, aco, scan mean mission times
inline int cmd_export_plots(const fs::path& run_dir, std::ostream& log) {
  if (!fs::is_directory(run_dir)) {
    log << "run directory " << run_dir.string() << " does not exist\n";
    return kUsage;
  }
  const fs::path plots = run_dir / "plots";
  std::vector<std::string> written;

  if (fs::exists(run_dir / "map.json")) {
    const UrbanMap map = load_map_file(run_dir / "map.json");
    std::ostringstream b;
    b.precision(17);
    b << "cx,cy,half_x,half_y,height\n";
    for (const auto& bld : map.buildings)
      b << bld.cx << ',' << bld.cy << ',' << bld.half_x << ',' << bld.half_y << ',' << bld.height << '\n';
    write_text(plots / "buildings.csv", b.str());
    std::ostringstream g;
    g.precision(17);
    g << "gt,x,y\n";
    for (std::size_t i = 0; i < map.gts.size(); ++i) g << i << ',' << map.gts[i].x << ',' << map.gts[i].y << '\n';
    write_text(plots / "gts.csv", g.str());
    written.insert(written.end(), {"buildings.csv", "gts.csv"});
  }

  std::vector<fs::path> trajectories;
  std::vector<fs::path> evals;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file() || entry.path().parent_path() == plots) continue;
    const std::string name = entry.path().filename().string();
    if (name.starts_with("trajectory_") && name.ends_with(".csv")) trajectories.push_back(entry.path());
    if (name.starts_with("eval_") && name.ends_with(".csv")) evals.push_back(entry.path());
  }
  std::sort(trajectories.begin(), trajectories.end());
  std::sort(evals.begin(), evals.end());

  if (!trajectories.empty()) {
    std::ostringstream t;
    write_trajectory_header(t);
    for (const auto& p : trajectories) {
      std::istringstream is(read_text(p));
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line))
        if (!line.empty()) t << line << '\n';
    }
    write_text(plots / "trajectory.csv", t.str());
    written.push_back("trajectory.csv");
  }

  if (fs::exists(run_dir / "reward_curve.csv")) {
    std::istringstream is(read_text(run_dir / "reward_curve.csv"));
    std::ostringstream r;
    r << "episode,accumulated_reward\n";
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      if (c1 != std::string::npos) r << line.substr(0, c2) << '\n';
    }
    write_text(plots / "reward_curve.csv", r.str());
    written.push_back("reward_curve.csv");
  }

  if (!evals.empty()) {
    std::map<std::size_t, std::map<std::string, double>> table;
    for (const auto& p : evals)
      if (auto m = read_eval_mean(p)) table[m->num_gts][m->strategy] = m->mean_time;
    std::ostringstream c;
    c.precision(17);
    c << "K,drl,aco,scan\n";
    for (const auto& [k, row] : table) {
      c << k;
      for (const char* s : {"drl", "aco", "scan"}) {
        c << ',';
        if (auto it = row.find(s); it != row.end()) c << it->second;
      }
      c << '\n';
    }
    write_text(plots / "completion_vs_k.csv", c.str());
    written.push_back("completion_vs_k.csv");
  }

  if (written.empty()) {
    log << "nothing to export in " << run_dir.string() << "\n";
    return kUsage;
  }
  for (const auto& w : written) log << "wrote " << (plots / w).string() << "\n";
  return kSuccess;
}

}  // namespace uavtraj::cli
