#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "preflab/datagen.hpp"
#include "preflab/envs.hpp"
#include "preflab/error.hpp"

using namespace preflab;
using namespace preflab::geometry;

namespace {

const EnvId kEnvs[] = {EnvId::reacher, EnvId::feeding, EnvId::itch};

int in_mouth(const EnvState& s) {
  const auto& f = std::get<FeedingState>(s.body);
  return static_cast<int>(std::count(f.particles.begin(), f.particles.end(), Particle::in_mouth));
}

// Total contact force a trajectory applied to the human (and robot base).
double total_force(EnvId env, const Trajectory& t) {
  if (env == EnvId::feeding) return t.steps.back().raw[24];  // cumulative_force
  double s = 0.0;
  for (const auto& st : t.steps) s += st.raw[24];  // total_tool_force
  return s;
}

Vec64 toward(const EnvConfig& cfg, Vec2 from, Vec2 goal) {
  auto c = [&](double v) { return std::clamp(v / cfg.max_speed, -cfg.action_bound, cfg.action_bound); };
  return {c(goal.x - from.x), c(goal.y - from.y)};
}

}  // namespace

TEST(Reset, Deterministic) {
  for (EnvId env : kEnvs) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    EXPECT_EQ(reset(cfg, 17), reset(cfg, 17)) << to_string(env);
    EXPECT_NE(reset(cfg, 17), reset(cfg, 18)) << to_string(env);
  }
}

TEST(Reset, FeedingStartsWithFullSpoon) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::feeding);
  const EnvState s = reset(cfg, 3);
  const auto& f = std::get<FeedingState>(s.body);
  EXPECT_EQ(s.t, 0);
  EXPECT_EQ(std::count(f.particles.begin(), f.particles.end(), Particle::on_spoon), 5);
  const Vec64 priv = priv_obs(cfg, s);
  EXPECT_DOUBLE_EQ(priv[0], distance(f.spoon, f.mouth));
  EXPECT_EQ(priv[1], 0.0);
  EXPECT_EQ(priv[2], 0.0);
}

TEST(Reset, ReacherTargetsReachable) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::reacher);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto& r = std::get<ReacherState>(reset(cfg, seed).body);
    const double d = std::hypot(r.target.x, r.target.y);
    ASSERT_LE(d, kReacherLink1 + kReacherLink2) << seed;
    ASSERT_GE(d, std::abs(kReacherLink1 - kReacherLink2)) << seed;
  }
}

TEST(Observations, Dimensions) {
  const std::size_t raw[] = {11, 25, 30}, priv[] = {1, 3, 2};
  for (int i = 0; i < 3; ++i) {
    const EnvConfig cfg = EnvConfig::defaults(kEnvs[i]);
    const EnvState s = reset(cfg, 1);
    EXPECT_EQ(raw_obs(cfg, s).size(), raw[i]);
    EXPECT_EQ(priv_obs(cfg, s).size(), priv[i]);
    EXPECT_EQ(raw_dim(kEnvs[i]), raw[i]);
    EXPECT_EQ(raw_feature_names(kEnvs[i]).size(), raw[i]);
  }
}

TEST(Observations, ReacherDistanceFromKinematics) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::reacher);
  EnvState s = reset(cfg, 5);
  const double a[] = {0.7, -0.4};
  for (int t = 0; t < 10; ++t) {
    s = step(cfg, s, a).next;
    const auto& r = std::get<ReacherState>(s.body);
    const double x = 0.5 * std::cos(r.q1) + 0.5 * std::cos(r.q1 + r.q2);
    const double y = 0.5 * std::sin(r.q1) + 0.5 * std::sin(r.q1 + r.q2);
    EXPECT_NEAR(priv_obs(cfg, s)[0], std::hypot(x - r.target.x, y - r.target.y), 1e-12);
  }
}

TEST(Step, ZeroActionHoldsPosition) {
  const double zero[] = {0, 0};
  for (EnvId env : kEnvs) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    const EnvState s = reset(cfg, 9);
    const StepResult r = step(cfg, s, zero);
    const Vec64 before = raw_obs(cfg, s), after = raw_obs(cfg, r.next);
    EXPECT_EQ(before[0], after[0]) << to_string(env);
    EXPECT_EQ(before[1], after[1]) << to_string(env);
    if (env == EnvId::reacher) EXPECT_DOUBLE_EQ(r.gt_reward, -priv_obs(cfg, s)[0]);
  }
}

TEST(Step, WrongActionLength) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  const double a[] = {0, 0, 0};
  EXPECT_THROW(step(cfg, reset(cfg, 0), a), InvalidInput);
}

TEST(Step, ReacherAtTargetScoresZero) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::reacher);
  EnvState s = reset(cfg, 2);
  auto& r = std::get<ReacherState>(s.body);
  r.target = reacher_ee(r.q1, r.q2);
  const double zero[] = {0, 0};
  EXPECT_NEAR(gt_reward(cfg, s, zero), 0.0, 1e-12);
}

TEST(Step, FeedingFeedsAtMouth) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::feeding);
  EnvState s = reset(cfg, 4);
  auto& f = std::get<FeedingState>(s.body);
  f.spoon = f.mouth;
  f.particles = {Particle::in_mouth, Particle::in_mouth, Particle::on_floor, Particle::on_spoon,
                 Particle::on_floor};
  const double zero[] = {0, 0};
  const StepResult r = step(cfg, s, zero);
  EXPECT_EQ(in_mouth(r.next), in_mouth(s) + 1);
  EXPECT_DOUBLE_EQ(r.gt_reward, 10.0);
}

TEST(Step, FastSpoonSpills) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::feeding);
  const EnvState s = reset(cfg, 4);
  const double fast[] = {1, 0};
  const StepResult r = step(cfg, s, fast);
  EXPECT_EQ(std::get<FeedingState>(r.next.body).spilled_last, 1);
  EXPECT_EQ(priv_obs(cfg, r.next)[2], 1.0);
}

TEST(Rewards, Formulas) {
  const double zero[] = {0, 0};
  EXPECT_EQ(rewards::reacher(0.0, zero), 0.0);
  EXPECT_DOUBLE_EQ(rewards::feeding(1, 1, 0.0), 5.0);
  EXPECT_DOUBLE_EQ(rewards::itch(2.0, 0.0, 2.0), 2.0);
}

TEST(Step, ItchPressOnTarget) {
  EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  cfg.contact_stiffness = 25.0;  // full overlap 0.08 -> force 2
  EnvState s = reset(cfg, 6);
  auto& it = std::get<ItchState>(s.body);
  it.tool = it.itch;
  const double zero[] = {0, 0};
  const StepResult r = step(cfg, s, zero);
  EXPECT_NEAR(priv_obs(cfg, r.next)[1], 2.0, 1e-12);
  EXPECT_NEAR(r.gt_reward, 2.0, 1e-12);
}

TEST(Step, ItchBasePressGeometry) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  EnvState s = reset(cfg, 6);
  auto& it = std::get<ItchState>(s.body);
  it.tool = {kItchRobotBase.x + 0.2, kItchRobotBase.y};
  const double zero[] = {0, 0};
  const StepResult r = step(cfg, s, zero);
  // overlap of the tool disc with the base disc, worked out independently
  const double expected = cfg.contact_stiffness * (kToolRadius + kBaseRadius - 0.2);
  const Vec64 raw = raw_obs(cfg, r.next);
  EXPECT_NEAR(raw[24], expected, 1e-12);  // total_tool_force
  EXPECT_GT(raw[24], 0.0);
  EXPECT_EQ(raw[25], 0.0);                 // force_at_target
  EXPECT_EQ(priv_obs(cfg, r.next)[1], 0.0);
}

TEST(Success, Rules) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::feeding);
  EnvState s = reset(cfg, 0);
  auto& f = std::get<FeedingState>(s.body);
  f.particles.fill(Particle::in_mouth);
  EXPECT_EQ(success(cfg, s), true);
  f.particles = {Particle::in_mouth, Particle::in_mouth, Particle::in_mouth, Particle::on_floor,
                 Particle::on_floor};
  EXPECT_EQ(success(cfg, s), false);
  EXPECT_FALSE(success(EnvConfig::defaults(EnvId::reacher), reset(EnvConfig::defaults(EnvId::reacher), 0)));

  // the tool starts clear of the arm; holding still never touches it
  const EnvConfig icfg = EnvConfig::defaults(EnvId::itch);
  EnvState is = reset(icfg, 1);
  const double zero[] = {0, 0};
  for (int t = 0; t < icfg.horizon; ++t) is = step(icfg, is, zero).next;
  EXPECT_EQ(std::get<ItchState>(is.body).cumulative_target_force, 0.0);
  EXPECT_EQ(success(icfg, is), false);
}

TEST(Config, TextRoundTrip) {
  EnvConfig c = EnvConfig::defaults(EnvId::feeding);
  c.seed = 7;
  c.spill_speed = 0.05;
  EXPECT_EQ(EnvConfig::parse(c.to_text()), c);
  EXPECT_EQ(EnvConfig::parse("env=feeding horizon=100 seed=7").seed, 7u);
  EXPECT_THROW(EnvConfig::parse("env=feeding bogus=1"), InvalidInput);
  EXPECT_THROW(EnvConfig::parse("env=feeding horizon=0"), InvalidInput);
}

TEST(Properties, SpuriousForceCorrelation) {
  for (EnvId env : {EnvId::feeding, EnvId::itch}) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    int idle = 0;
    for (int i = 0; i < 20; ++i) {
      const Trajectory e = rollout(cfg, Policy::expert(), 100, i, i, "expert");
      if (e.success.value_or(false)) EXPECT_GT(total_force(env, e), 0.0) << to_string(env) << i;
      const Trajectory r = rollout(cfg, Policy::uniform_random(), 200, i, i, "random");
      if (total_force(env, r) < 0.01) ++idle;
    }
    EXPECT_GE(idle, 18) << to_string(env);
  }
}

TEST(Properties, ForceCanBeHackedWithoutTheTask) {
  for (EnvId env : {EnvId::feeding, EnvId::itch}) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    double expert_force = 0.0;
    for (int i = 0; i < 20; ++i) {
      expert_force += total_force(env, rollout(cfg, Policy::expert(), 300, i, i, "expert")) / 20;
    }
    // adversary: shove the spoon into the torso / the tool into the robot base
    EnvState s = reset(cfg, 301);
    double force = 0.0;
    for (int t = 0; t < cfg.horizon; ++t) {
      Vec64 a;
      if (env == EnvId::feeding) {
        const auto& f = std::get<FeedingState>(s.body);
        a = toward(cfg, f.spoon, f.torso);
      } else {
        a = toward(cfg, std::get<ItchState>(s.body).tool, kItchRobotBase);
      }
      s = step(cfg, s, a).next;
      const Vec64 raw = raw_obs(cfg, s);
      force = env == EnvId::feeding ? raw[24] : force + raw[24];
    }
    EXPECT_GE(force, expert_force) << to_string(env);
    EXPECT_EQ(success(cfg, s), false) << to_string(env);
    if (env == EnvId::feeding) EXPECT_EQ(in_mouth(s), 0);
    if (env == EnvId::itch) EXPECT_EQ(std::get<ItchState>(s.body).cumulative_target_force, 0.0);
  }
}

TEST(Properties, PrivilegedFeaturesRecomputable) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  const Trajectory t = rollout(cfg, Policy::expert(), 8, 0, 0, "expert");
  for (const auto& st : t.steps) {
    // dist_to_itch from tool - itch, force_at_target mirrored in the raw vector
    EXPECT_NEAR(st.priv[0], std::hypot(st.raw[6], st.raw[7]), 1e-12);
    EXPECT_EQ(st.priv[1], st.raw[25]);
  }
}
