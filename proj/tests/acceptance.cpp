// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "uavtraj/baselines.hpp"
#include "uavtraj/cli.hpp"
#include "uavtraj/config.hpp"
#include "uavtraj/ddpg.hpp"
#include "uavtraj/mdp.hpp"
#include "uavtraj/neuralnet.hpp"
#include "uavtraj/precoding.hpp"

using namespace uavtraj;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Verdict& v, double secs) {
  std::printf("criterion %d %-28s %s  (%.1f s)  %s\n", id, name, v.pass ? "PASS" : "FAIL", secs, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

double pooled_se(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(sample_var(a) / a.size() + sample_var(b) / b.size());
}

// ---- 1: ZF exactness -------------------------------------------------------

Verdict zf_exactness() {
  Rng rng(derive_seed(1, "acceptance-zf"));
  const int nt = 12;
  double worst_offdiag = 0.0, worst_trace = 0.0;
  int redraws = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(12));
    Eigen::MatrixXcd h(k, nt);
    // Well-conditioned draws only: i.i.d. CN(0, 1) with a Gram condition below 1e6.
    for (;;) {
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < nt; ++j) h(i, j) = rng.complex_normal();
      if (gram_condition(h) < 1e6) break;
      ++redraws;
    }
    const ZfPrecoder zf = zf_precoder(h);
    Eigen::MatrixXcd hw = h * zf.W;
    hw.diagonal().setZero();
    worst_offdiag = std::max(worst_offdiag, hw.cwiseAbs().maxCoeff() / zf.xi);
    worst_trace = std::max(worst_trace, std::abs((zf.W * zf.W.adjoint()).trace().real() - k) / k);
  }
  return {worst_offdiag < 1e-9 && worst_trace < 1e-9,
          fmt("max offdiag/xi %.2e, max trace rel err %.2e, %d ill-conditioned redraws", worst_offdiag, worst_trace,
              redraws)};
}

// ---- 2: gradient oracle ---------------------------------------------------
// Each network is scored by the norm-wise relative error of its whole
// gradient vector. The worst single-entry ratio is reported alongside; on
// entries near 1e-8 it measures finite-difference round-off, not backprop.

struct GradCheck {
  double normwise = 0.0;
  double worst_entry = 0.0;
};

GradCheck compare(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  GradCheck c;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
    c.worst_entry = std::max(c.worst_entry, std::abs(analytic[i] - numeric[i]) /
                                                std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-300}));
  }
  c.normwise = std::sqrt(diff) / std::max(std::sqrt(std::max(na, nn)), 1e-300);
  return c;
}

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

// Central differences of a scalar function of the network parameters.
std::vector<double> central_differences(Mlp& net, const std::function<double()>& f, double h) {
  auto ptrs = net.parameter_pointers();
  std::vector<double> out(ptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double keep = *ptrs[i];
    *ptrs[i] = keep + h;
    const double up = f();
    *ptrs[i] = keep - h;
    const double dn = f();
    *ptrs[i] = keep;
    out[i] = (up - dn) / (2 * h);
  }
  return out;
}

// L = sum(w .* net(x)) against backward().
GradCheck net_check(Mlp net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, double h) {
  Mlp::Cache cache;
  net.forward(x, &cache);
  const auto analytic = flatten(net.backward(cache, w));
  return compare(analytic, central_differences(net, [&] { return (net.forward(x).array() * w.array()).sum(); }, h));
}

Verdict gradient_oracle() {
  Rng rng(derive_seed(1, "acceptance-grad"));
  const double h = 1e-6;
  const Mlp actor({14, 8, 8, 3}, Activation::relu, Activation::tanh, rng, 0.5);
  const Mlp critic({17, 8, 8, 1}, Activation::relu, Activation::linear, rng, 0.5);
  const Eigen::MatrixXd s = random_matrix(14, 8, rng);
  const GradCheck ca = net_check(actor, s, random_matrix(3, 8, rng), h);
  const GradCheck cc = net_check(critic, random_matrix(17, 8, rng), random_matrix(1, 8, rng), h);

  // Composed path: d/dphi mean_b Q(s_b, pi_phi(s_b)).
  Mlp a = actor;
  Gradients g;
  actor_objective(a, critic, s, &g);
  const GradCheck cp = compare(flatten(g), central_differences(a, [&] { return actor_objective(a, critic, s); }, h));

  const double worst = std::max({ca.normwise, cc.normwise, cp.normwise});
  return {worst < 1e-5, fmt("rel err actor %.2e, critic %.2e, actor->critic %.2e (worst single entry %.1e, %.1e, "
                            "%.1e)",
                            ca.normwise, cc.normwise, cp.normwise, ca.worst_entry, cc.worst_entry, cp.worst_entry)};
}

// ---- 3: channel statistics and LoS oracle ---------------------------------

// Ray-marching LoS with buildings bucketed on a 10 m grid so each sample only
// looks at nearby footprints.
class MarchingOracle {
 public:
  explicit MarchingOracle(const UrbanMap& map) : map_(map) {
    for (std::size_t i = 0; i < map.buildings.size(); ++i) {
      const auto& b = map.buildings[i];
      for (long cx = cell(b.cx - b.half_x); cx <= cell(b.cx + b.half_x); ++cx)
        for (long cy = cell(b.cy - b.half_y); cy <= cell(b.cy + b.half_y); ++cy) grid_[key(cx, cy)].push_back(i);
    }
  }

  bool los(const Vec3& a, const Vec3& b, double step) const {
    const double len = distance(a, b);
    const long n = std::max(1L, static_cast<long>(std::ceil(len / step)));
    for (long i = 0; i <= n; ++i) {
      const Vec3 p = a + (b - a) * (static_cast<double>(i) / n);
      const auto it = grid_.find(key(cell(p.x), cell(p.y)));
      if (it == grid_.end()) continue;
      for (auto idx : it->second) {
        const auto& bld = map_.buildings[idx];
        if (bld.footprint_contains_strictly(p.x, p.y) && p.z > 0.0 && p.z < bld.height) return false;
      }
    }
    return true;
  }

 private:
  static long cell(double v) { return static_cast<long>(std::floor(v / 10.0)); }
  static long long key(long x, long y) { return (static_cast<long long>(x) << 32) ^ static_cast<unsigned long>(y); }

  const UrbanMap& map_;
  std::unordered_map<long long, std::vector<std::size_t>> grid_;
};

Verdict channel_statistics() {
  const ChannelParams ch;  // G = 15 dB
  Rng rng(derive_seed(1, "acceptance-channel"));
  double power = 0.0;
  for (int i = 0; i < 10000; ++i) power += small_scale(rng.uniform(-1, 1), ch, rng).squaredNorm() / ch.num_antennas;
  power /= 10000;

  double h = 0.0;
  for (int i = 0; i < 10000; ++i) h += sample_rayleigh_height(50.0, rng);
  h /= 10000;

  const UrbanMap map = generate_map(EnvParams{}, derive_seed(1, "acceptance-los-map"));
  const MarchingOracle oracle(map);
  int disagreements = 0, unresolved = 0, blocked = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 uav{rng.uniform(0, 1000), rng.uniform(0, 1000), rng.uniform(75, 125)};
    Vec3 gt;
    do gt = {rng.uniform(0, 1000), rng.uniform(0, 1000), 0.0};
    while (map.indoor(gt.x, gt.y));
    const bool exact = is_los(uav, gt, map);
    blocked += exact ? 0 : 1;
    if (exact != oracle.los(uav, gt, 0.01)) {
      ++disagreements;
      // Within marching tolerance when a 100x finer march agrees with the exact test.
      if (exact != oracle.los(uav, gt, 1e-4)) ++unresolved;
    }
  }
  const bool ok = std::abs(power - 1.0) <= 0.03 && std::abs(h - 50.0) <= 2.5 && unresolved == 0;
  return {ok, fmt("mean power %.4f, raw height mean %.2f m, LoS %d/1000 blocked, %d coarse disagreements, %d "
                  "beyond tolerance",
                  power, h, blocked, disagreements, unresolved)};
}

// ---- 4: MDP bookkeeping ---------------------------------------------------

Verdict mdp_bookkeeping() {
  EnvParams p;
  p.side = 400;
  p.num_gts = 5;
  const UrbanMap map = generate_map(p, derive_seed(1, "acceptance-mdp-map"));
  MdpConfig cfg;
  cfg.max_steps = 100;
  UavEnvironment env(map, ChannelParams{}, cfg);
  Rng rng(derive_seed(1, "acceptance-mdp"));
  const std::size_t k = map.gts.size();
  int violations = 0, completed = 0;
  double worst_time_gap = 0.0;
  for (int ep = 0; ep < 1000; ++ep) {
    env.reset(derive_seed(7, {static_cast<std::uint64_t>(ep)}));
    std::vector<std::uint8_t> c = env.state().served;
    std::vector<int> fired(k, 0);
    double t_steps = 0.0, hover_sum = 0.0;
    bool done = false;
    int n = 0;
    while (!done) {
      const Action a{rng.uniform(0, 20), rng.uniform(0, std::numbers::pi), rng.uniform(1e-12, 2 * std::numbers::pi)};
      const StepOutcome out = env.step(a);
      ++n;
      done = out.done;
      if (out.next_state.flatten().size() != 2 * k + 4) ++violations;
      for (std::size_t g = 0; g < k; ++g)
        if (out.next_state.served[g] < c[g]) ++violations;  // c never drops
      for (auto g : out.served_this_step) ++fired[g];
      c = out.next_state.served;
      t_steps += out.duration;
      hover_sum += env.records().back().hover_time;
      const bool all = out.next_state.served_count() == static_cast<int>(k);
      if (out.done != (all || n == cfg.max_steps)) ++violations;
      if (out.completed != all) ++violations;
    }
    for (std::size_t g = 0; g < k; ++g)
      if (fired[g] > 1 || fired[g] != c[g]) ++violations;
    if (env.elapsed() != t_steps) ++violations;
    worst_time_gap = std::max(worst_time_gap, std::abs(env.elapsed() - (n * cfg.flight_time + hover_sum)));
    completed += c == std::vector<std::uint8_t>(k, 1) ? 1 : 0;
  }

  Eigen::VectorXd snr(1);
  snr << 1.0;
  const double hover = rates_and_hover(snr, 5e6, {20e6}).hover_time;
  const bool ok = violations == 0 && worst_time_gap <= 1e-9 && hover == 4.0;
  return {ok, fmt("%d bookkeeping violations over 1000 episodes (%d completed), max |T - (N dft + sum dht)| %.1e s, "
                  "0 dB hover %.6f s",
                  violations, completed, worst_time_gap, hover)};
}

// ---- 5: ACO vs exhaustive optimum -----------------------------------------

Verdict aco_oracle() {
  int within = 0;
  double worst_ratio = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    Rng rng(derive_seed(derive_seed(1, "acceptance-aco"), {static_cast<std::uint64_t>(inst)}));
    std::vector<Point2> pts;
    for (int i = 0; i < 8; ++i) pts.push_back({rng.uniform(0, 1000), rng.uniform(0, 1000)});
    const Point2 start{rng.uniform(0, 1000), rng.uniform(0, 1000)};
    std::vector<std::size_t> order(8);
    std::iota(order.begin(), order.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do best = std::min(best, open_tour_length(start, pts, order));
    while (std::next_permutation(order.begin(), order.end()));
    const double ratio = aco_route(pts, start, AcoConfig{}, rng).length / best;
    worst_ratio = std::max(worst_ratio, ratio);
    within += ratio <= 1.05 ? 1 : 0;
  }
  return {within >= 45, fmt("%d/50 within 5%% of optimum, worst ratio %.4f", within, worst_ratio)};
}

// ---- 6 and 7: reduced-scale learning --------------------------------------

RunConfig reduced_config() {
  RunConfig c;
  c.seed = 1;
  c.env.side = 400;
  c.env.num_gts = 5;
  c.mdp.max_steps = 100;
  c.train.episodes = 1500;
  c.train.hidden_width = 64;
  c.train.batch_size = 64;
  c.eval.realizations = 25;
  return c;
}

std::vector<double> random_policy_rewards(const UrbanMap& map, const RunConfig& cfg, std::uint64_t train_seed,
                                          int first_episode, int count) {
  UavEnvironment env(map, cfg.channel, cfg.mdp);
  Rng rng(derive_seed(train_seed, "random-policy"));
  std::vector<double> out;
  for (int ep = first_episode; ep < first_episode + count; ++ep) {
    env.reset(episode_seed(train_seed, ep));
    double total = 0.0;
    bool done = false;
    while (!done) {
      const StepOutcome o = env.step({rng.uniform(0, cfg.mdp.max_speed), rng.uniform(0, std::numbers::pi),
                                      rng.uniform(1e-12, 2 * std::numbers::pi)});
      total += o.reward;
      done = o.done;
    }
    out.push_back(total);
  }
  return out;
}

struct TrainedRun {
  DdpgAgent agent;
  std::vector<double> rewards;
};

TrainedRun train_reduced(const UrbanMap& map, const RunConfig& cfg, std::uint64_t train_seed) {
  Trainer t(map, cfg.channel, cfg.mdp, cfg.train, train_seed);
  t.run(cfg.train.episodes, [&](const EpisodeStats& e) {
    if ((e.episode + 1) % 250 == 0)
      std::printf("  [train seed %llu] episode %d, reward %.2f, steps %d\n",
                  static_cast<unsigned long long>(train_seed), e.episode + 1, e.reward, e.steps);
    std::fflush(stdout);
  });
  TrainedRun r{t.agent(), {}};
  for (const auto& e : t.curve()) r.rewards.push_back(e.reward);
  return r;
}

Verdict learning_trend(const UrbanMap& map, const RunConfig& cfg, const TrainedRun& run, double train_secs) {
  const std::vector<double> first(run.rewards.begin(), run.rewards.begin() + 100);
  const std::vector<double> last(run.rewards.end() - 100, run.rewards.end());
  const int m = cfg.train.episodes;
  const std::vector<double> random = random_policy_rewards(map, cfg, cfg.train_seed(), m - 100, 100);
  const double gap_first = mean(last) - mean(first), se_first = pooled_se(last, first);
  const double gap_random = mean(last) - mean(random), se_random = pooled_se(last, random);
  const bool ok = gap_first > 2 * se_first && gap_random > 2 * se_random && train_secs < 45 * 60;
  return {ok, fmt("last-100 mean %.2f vs first-100 %.2f (margin %.2f, 2SE %.2f) vs random %.2f (margin %.2f, 2SE "
                  "%.2f), %d buildings",
                  mean(last), mean(first), gap_first, 2 * se_first, mean(random), gap_random, 2 * se_random,
                  static_cast<int>(map.buildings.size()))};
}

struct Ordering {
  double drl, aco, scan, drl_completion;
  bool holds() const { return drl <= aco && aco <= scan && drl_completion >= 0.9; }
};

Ordering compare_strategies(const UrbanMap& map, const RunConfig& cfg, const DdpgAgent& agent) {
  const auto drl = evaluate(agent, map, cfg.channel, cfg.mdp, cfg.eval.realizations, cfg.eval_seed());
  const auto aco = evaluate_aco(map, cfg.channel, cfg.mdp, cfg.aco, cfg.eval.realizations, cfg.eval_seed());
  const auto scan = evaluate_scan(map, cfg.channel, cfg.mdp, cfg.scan, cfg.eval.realizations, cfg.eval_seed());
  return {drl.mean_time(), aco.mean_time(), scan.mean_time(), drl.completion_rate()};
}

// ---- 8: determinism --------------------------------------------------------

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "uavtraj_acceptance_determinism";
  fs::remove_all(root);
  RunConfig cfg = reduced_config();
  cfg.train.episodes = 120;
  std::ostringstream sink;
  std::string curves[2];
  std::string evals[2][3];
  for (int run = 0; run < 2; ++run) {
    cfg.output_dir = (root / ("run" + std::to_string(run))).string();
    if (cli::cmd_train(cfg, sink) != cli::kSuccess) return {false, "cmd_train failed"};
    curves[run] = cli::read_text(fs::path(cfg.output_dir) / "reward_curve.csv");
    const std::string ckpt = (fs::path(cfg.output_dir) / "checkpoint").string();
    int s = 0;
    for (const char* strategy : {"drl", "aco", "scan"}) {
      if (cli::cmd_eval(cfg, strategy, ckpt, sink) != cli::kSuccess) return {false, "cmd_eval failed"};
      evals[run][s++] = cli::read_text(fs::path(cfg.output_dir) / ("eval_" + std::string(strategy) + ".csv"));
    }
  }
  const bool curve_same = curves[0] == curves[1] && !curves[0].empty();
  bool eval_same = true;
  for (int s = 0; s < 3; ++s) eval_same = eval_same && evals[0][s] == evals[1][s];
  fs::remove_all(root);
  return {curve_same && eval_same,
          fmt("reward curves %s (%zu bytes), eval summaries %s", curve_same ? "byte-identical" : "DIFFER",
              curves[0].size(), eval_same ? "byte-identical" : "DIFFER")};
}

template <typename Fn>
void run_criterion(int id, const char* name, Fn&& fn) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, v, seconds_since(t0));
}

}  // namespace

int main() {
  {
    const auto t0 = Clock::now();
    Verdict v = zf_exactness();
    const double secs = seconds_since(t0);
    v.pass = v.pass && secs < 10.0;
    report(1, "zf-exactness", v, secs);
  }
  {
    const auto t0 = Clock::now();
    Verdict v = gradient_oracle();
    const double secs = seconds_since(t0);
    v.pass = v.pass && secs < 30.0;
    report(2, "gradient-oracle", v, secs);
  }
  run_criterion(3, "channel-statistics", channel_statistics);
  run_criterion(4, "mdp-bookkeeping", mdp_bookkeeping);
  {
    const auto t0 = Clock::now();
    Verdict v = aco_oracle();
    const double secs = seconds_since(t0);
    v.pass = v.pass && secs < 120.0;
    report(5, "aco-oracle", v, secs);
  }

  const RunConfig cfg = reduced_config();
  const UrbanMap map = generate_map(cfg.env, cfg.map_seed());
  std::vector<TrainedRun> runs;
  {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      runs.push_back(train_reduced(map, cfg, cfg.train_seed()));
      v = learning_trend(map, cfg, runs.front(), seconds_since(t0));
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    report(6, "reduced-scale-learning", v, seconds_since(t0));
  }
  {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      if (runs.empty()) throw std::runtime_error("no trained policy from criterion 6");
      std::vector<Ordering> seen{compare_strategies(map, cfg, runs.front().agent)};
      std::string detail;
      int holds = seen.back().holds() ? 1 : 0;
      // A single failing seed falls back to the best-of-three rule.
      for (std::uint64_t extra = 2; holds < 2 && !seen.front().holds() && extra <= 3; ++extra) {
        const TrainedRun r = train_reduced(map, cfg, derive_seed(cfg.train_seed(), {extra}));
        seen.push_back(compare_strategies(map, cfg, r.agent));
        holds += seen.back().holds() ? 1 : 0;
      }
      for (std::size_t i = 0; i < seen.size(); ++i)
        detail += fmt("%sseed %zu: DRL %.1f s (completion %.2f), ACO %.1f s, Scan %.1f s", i ? "; " : "", i + 1,
                      seen[i].drl, seen[i].drl_completion, seen[i].aco, seen[i].scan);
      v = {seen.front().holds() || holds >= 2, detail};
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    report(7, "strategy-ordering", v, seconds_since(t0));
  }
  run_criterion(8, "determinism", determinism);

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
