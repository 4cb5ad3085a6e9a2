#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "uavtraj/mdp.hpp"

using namespace uavtraj;

namespace {

constexpr double kPi = std::numbers::pi;

UrbanMap open_map(std::vector<Vec3> gts, double side = 400) {
  UrbanMap m;
  m.params.side = side;
  m.params.num_gts = static_cast<int>(gts.size());
  m.gts = std::move(gts);
  return m;
}

}  // namespace

TEST(Mdp, VerticalClimb) {
  EnvParams b;
  const MoveResult r = move({100, 200, 75}, {20, 0, 1.0}, 2.5, b);
  EXPECT_FALSE(r.violated);
  EXPECT_EQ(r.position.x, 100.0);
  EXPECT_EQ(r.position.y, 200.0);
  EXPECT_DOUBLE_EQ(r.position.z, 125.0);
}

TEST(Mdp, HorizontalMoveAlongY) {
  EnvParams b;
  const MoveResult r = move({100, 200, 100}, {20, kPi / 2, kPi / 2}, 2.5, b);
  EXPECT_FALSE(r.violated);
  EXPECT_NEAR(r.position.x, 100.0, 1e-12);
  EXPECT_NEAR(r.position.y, 250.0, 1e-12);
  EXPECT_NEAR(r.position.z, 100.0, 1e-12);
}

TEST(Mdp, BorderCrossingCancelsMove) {
  EnvParams b;
  const Vec3 from{100, 200, 120};
  const MoveResult up = move(from, {20, 0, 1.0}, 2.5, b);
  EXPECT_TRUE(up.violated);
  EXPECT_EQ(up.position, from);
  const MoveResult west = move({10, 10, 100}, {20, kPi / 2, kPi}, 2.5, b);
  EXPECT_TRUE(west.violated);
}

TEST(Mdp, WakeUpThresholdLimits) {
  const UrbanMap m = open_map({{10, 10, 0}, {390, 390, 0}});
  ChannelParams ch;
  FadingSource f{1};
  const auto all = wake_up({200, 200, 100}, m, ch, -std::numeric_limits<double>::infinity(), f, 0);
  const auto none = wake_up({200, 200, 100}, m, ch, std::numeric_limits<double>::infinity(), f, 0);
  EXPECT_EQ(all, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(none, (std::vector<std::uint8_t>{0, 0}));
}

TEST(Mdp, WakeUpAtFiveDecibels) {
  // Pure LoS with no fading: |h|^2 = 10^(-PL/10). Choose the distance where
  // PL = 80 dB so the broadcast SNR is 5 dB.
  ChannelParams ch;
  ch.rician_factor = std::numeric_limits<double>::infinity();
  const double d = std::pow(10.0, (80.0 - ch.eta_los_db - free_space_pathloss_db(1.0, ch.carrier_hz)) / 20.0);
  const UrbanMap m = open_map({{200, 200, 0}});
  const Vec3 uav{200, 200, d};
  Rng r(0);
  EXPECT_NEAR(linear_to_db(broadcast_snr(broadcast_channel(uav, 0, m, ch, r), ch)), 5.0, 1e-9);
  EXPECT_EQ(wake_up(uav, m, ch, 0.0, FadingSource{3}, 0), std::vector<std::uint8_t>{1});
  EXPECT_EQ(wake_up(uav, m, ch, 5.1, FadingSource{3}, 0), std::vector<std::uint8_t>{0});
}

TEST(Mdp, ServeOnceRule) {
  const ServeUpdate u = update_served({1, 1}, {0, 1});
  EXPECT_EQ(u.fresh, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(u.served, (std::vector<std::uint8_t>{1, 1}));
  const ServeUpdate idle = update_served({0, 0}, {0, 1});
  EXPECT_EQ(idle.fresh, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(idle.served, (std::vector<std::uint8_t>{0, 1}));
  const ServeUpdate again = update_served({1, 1}, u.served);
  EXPECT_EQ(again.fresh, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_THROW(update_served({1}, {0, 0}), std::invalid_argument);
}

TEST(Mdp, PheromoneExamples) {
  EXPECT_DOUBLE_EQ(pheromone_update(0.0, 2, 10.0, 4.0, 0.0), 16.0);
  EXPECT_DOUBLE_EQ(pheromone_update(7.0, 0, 10.0, 2.0, 0.0), 5.0);
  EXPECT_DOUBLE_EQ(pheromone_update(7.0, 0, 10.0, 2.0, 20.0), -15.0);
}

TEST(Mdp, ShapedReward) {
  EXPECT_EQ(shaped_reward(0.0, 5, 10.0), 0.0);
  EXPECT_NEAR(shaped_reward(50.0, 5, 10.0), 2.0 / (1.0 + std::exp(-1.0)) - 1.0, 1e-15);
  EXPECT_NEAR(shaped_reward(50.0, 5, 10.0), 0.4621, 1e-4);
  EXPECT_NEAR(shaped_reward(1e6, 5, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(shaped_reward(-1e6, 5, 10.0), -1.0, 1e-12);
  EXPECT_LT(shaped_reward(1e3, 5, 10.0), 1.0);
}

TEST(Mdp, MissionTimeSumsFlightAndHover) {
  std::vector<StepRecord> recs(10);
  EXPECT_DOUBLE_EQ(mission_time(recs, 2.5), 25.0);
  recs[3].hover_time = 4.0;
  EXPECT_DOUBLE_EQ(mission_time(recs, 2.5), 29.0);
}

TEST(Mdp, ResetIsDeterministicAndClean) {
  EnvParams p;
  p.side = 400;
  p.num_gts = 5;
  const UrbanMap m = generate_map(p, 1);
  UavEnvironment env(m, ChannelParams{}, MdpConfig{});
  const auto s1 = env.reset(77).flatten();
  env.step({20, kPi / 2, 1.0});
  const auto s2 = env.reset(77).flatten();
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(s1.size(), 14u);
  EXPECT_EQ(env.state().served_count(), 0);
  EXPECT_EQ(env.state().zeta, 0.0);
  EXPECT_EQ(env.step_index(), 0);
}

TEST(Mdp, IdleStepInOpenSpace) {
  // Nobody can be woken: huge threshold.
  const UrbanMap m = open_map({{10, 10, 0}});
  MdpConfig cfg;
  cfg.snr_threshold_db = 500;
  UavEnvironment env(m, ChannelParams{}, cfg);
  env.reset_at({200, 200, 100}, 1);
  const StepOutcome out = env.step({10, kPi / 2, 1.0});
  EXPECT_FALSE(out.done);
  EXPECT_DOUBLE_EQ(out.duration, 2.5);
  EXPECT_DOUBLE_EQ(out.next_state.zeta, -2.0);
  EXPECT_DOUBLE_EQ(out.reward, shaped_reward(-2.0, 1, 10.0));
}

TEST(Mdp, BoundaryViolationKeepsPositionAndPenalizes) {
  const UrbanMap m = open_map({{10, 10, 0}});
  MdpConfig cfg;
  cfg.snr_threshold_db = 500;
  UavEnvironment env(m, ChannelParams{}, cfg);
  env.reset_at({200, 200, 124}, 1);
  const StepOutcome out = env.step({20, 0.0, 1.0});
  EXPECT_EQ(out.next_state.position, (Vec3{200, 200, 124}));
  EXPECT_DOUBLE_EQ(out.next_state.zeta, -2.0 - 20.0);
  EXPECT_TRUE(env.records().back().violated);
}

TEST(Mdp, CompletionAddsRemainingSteps) {
  // Deterministic LoS channel. The GT clears the threshold from 85 m but not
  // from 121.8 m (7.85 dB vs 4.72 dB broadcast SNR), so hovering at the start
  // serves nobody and the 50 m descent at n = 150 completes the mission.
  const UrbanMap m = open_map({{200, 200, 0}});
  ChannelParams ch;
  ch.rician_factor = std::numeric_limits<double>::infinity();
  MdpConfig cfg;
  cfg.snr_threshold_db = 6.3;
  cfg.max_steps = 200;
  UavEnvironment env(m, ch, cfg);
  env.reset_at({200, 160, 115}, 1);
  for (int n = 0; n < 150; ++n) ASSERT_FALSE(env.step({0, 0, 1.0}).done);
  EXPECT_DOUBLE_EQ(env.state().zeta, -300.0);
  const StepOutcome out = env.step({20, std::acos(-0.6), kPi / 2});
  EXPECT_NEAR(out.next_state.position.y, 200.0, 1e-9);
  EXPECT_NEAR(out.next_state.position.z, 85.0, 1e-9);
  EXPECT_TRUE(out.done);
  EXPECT_TRUE(out.completed);
  EXPECT_EQ(out.served_this_step, std::vector<std::size_t>{0});
  const double hover = env.records().back().hover_time;
  EXPECT_GT(hover, 0.0);
  EXPECT_DOUBLE_EQ(out.next_state.zeta, -300.0 + 10.0 - hover);
  EXPECT_DOUBLE_EQ(out.reward, shaped_reward(out.next_state.zeta, 1, 10.0) + 50.0);
  EXPECT_DOUBLE_EQ(out.duration, 2.5 + hover);
  EXPECT_DOUBLE_EQ(env.elapsed(), 151 * 2.5 + hover);
}

TEST(Mdp, EpisodeStopsAtStepBudget) {
  const UrbanMap m = open_map({{10, 10, 0}});
  MdpConfig cfg;
  cfg.snr_threshold_db = 500;
  cfg.max_steps = 7;
  UavEnvironment env(m, ChannelParams{}, cfg);
  env.reset_at({200, 200, 100}, 1);
  int n = 0;
  while (!env.done()) {
    env.step({5, kPi / 2, 1.0});
    ++n;
  }
  EXPECT_EQ(n, 7);
  EXPECT_DOUBLE_EQ(env.elapsed(), 7 * 2.5);
  EXPECT_THROW(env.step({0, 0, 1.0}), std::logic_error);
}

TEST(Mdp, ActionOutsideBoxIsRejected) {
  const UrbanMap m = open_map({{10, 10, 0}});
  UavEnvironment env(m, ChannelParams{}, MdpConfig{});
  env.reset_at({200, 200, 100}, 1);
  EXPECT_THROW(env.step({25, 0, 1}), std::invalid_argument);
  EXPECT_THROW(env.step({5, -0.5, 1}), std::invalid_argument);
  EXPECT_THROW(env.step({5, 0, 7}), std::invalid_argument);
}

TEST(Mdp, MoreActiveUsersThanAntennasKeepsClosest) {
  std::vector<Vec3> gts;
  for (int i = 0; i < 4; ++i) gts.push_back({200.0 + 30.0 * i, 200, 0});
  const UrbanMap m = open_map(gts);
  ChannelParams ch;
  ch.num_antennas = 2;
  MdpConfig cfg;
  cfg.snr_threshold_db = -500;
  UavEnvironment env(m, ch, cfg);
  env.reset_at({200, 200, 100}, 1);
  const StepOutcome out = env.step({0, 0, 1.0});
  EXPECT_EQ(out.served_this_step, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(out.next_state.served, (std::vector<std::uint8_t>{1, 1, 0, 0}));
}

TEST(Mdp, TrajectoryCsvHasOneRowPerStep) {
  const UrbanMap m = open_map({{10, 10, 0}});
  MdpConfig cfg;
  cfg.max_steps = 3;
  cfg.snr_threshold_db = 500;
  UavEnvironment env(m, ChannelParams{}, cfg);
  env.reset_at({200, 200, 100}, 1);
  while (!env.done()) env.step({1, kPi / 2, 1.0});
  std::ostringstream os;
  write_trajectory_header(os);
  write_trajectory(os, "drl", env.records());
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 4);
}
