#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uavtraj/cli.hpp"

int main(int argc, char** argv) {
  using namespace uavtraj;

  CLI::App app{"UAV 3D trajectory design lab: map generation, DDPG training, evaluation and baselines"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::uint64_t env_seed = 0;
  std::string out;
  std::string checkpoint;
  std::string strategy;
  int gts = 0;
  int episodes = 0;
  std::string run_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--env-seed", env_seed, "map seed (default: derived from --seed)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--gts", gts, "number of ground terminals");
  };

  auto* gen = app.add_subcommand("gen-env", "generate and save an urban map");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train the DDPG trajectory policy");
  add_common(train);
  train->add_option("--episodes", episodes, "training episodes");
  train->add_option("--checkpoint", checkpoint, "resume from this checkpoint directory");
  auto* eval = app.add_subcommand("eval", "evaluate a strategy over independent realizations");
  add_common(eval);
  eval->add_option("--strategy", strategy, "drl, scan or aco")->required()->check(CLI::IsMember({"drl", "scan", "aco"}));
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory (drl)");
  auto* plots = app.add_subcommand("export-plots", "write plot-ready tables from a run directory");
  plots->add_option("--run-dir", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kSuccess : cli::kUsage;
  }

  if (plots->parsed()) return cli::cmd_export_plots(run_dir, std::cout);

  CLI::App* sub = app.get_subcommands().front();
  RunConfig cfg;
  try {
    cfg = config_path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--env-seed")) cfg.env_seed = env_seed;
    if (sub->count("--out")) cfg.output_dir = out;
    if (sub->count("--gts")) cfg.env.num_gts = gts;
    if (sub->get_option_no_throw("--episodes") && sub->count("--episodes")) cfg.train.episodes = episodes;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return cli::kUsage;
  }

  try {
    if (gen->parsed()) return cli::cmd_gen_env(cfg, std::cout);
    if (train->parsed()) return cli::cmd_train(cfg, std::cout, checkpoint);
    if (eval->parsed()) return cli::cmd_eval(cfg, strategy, checkpoint, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kUsage;
  }
  return cli::kUsage;
}
