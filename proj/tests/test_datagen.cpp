#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "preflab/datagen.hpp"
#include "preflab/error.hpp"
#include "preflab/hash.hpp"
#include "test_util.hpp"

using namespace preflab;

namespace {

const EnvId kEnvs[] = {EnvId::reacher, EnvId::feeding, EnvId::itch};

std::map<std::string, std::vector<double>> returns_by_source(const std::vector<Trajectory>& ts) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& t : ts) out[t.source].push_back(t.ret);
  return out;
}

}  // namespace

TEST(Epsilon, DefaultsGive120ValidTrajectories) {
  for (EnvId env : kEnvs) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    const auto ts = epsilon_rollouts(cfg);
    ASSERT_EQ(ts.size(), 120u);
    std::set<int> ids;
    for (const auto& t : ts) {
      ids.insert(t.id);
      EXPECT_NO_THROW(check_trajectory(cfg, t));
      EXPECT_EQ(t.ret, sum_rewards(t));
    }
    EXPECT_EQ(ids.size(), 120u);
    EXPECT_EQ(returns_by_source(ts).size(), 6u);
  }
}

TEST(Epsilon, ZeroNoiseIsTheExpert) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::feeding);
  const double zero[] = {0.0};
  const auto ts = epsilon_rollouts(cfg, zero, 3, 21);
  for (int i = 0; i < 3; ++i) {
    const Trajectory e = rollout(cfg, Policy::expert(), 21, static_cast<std::uint64_t>(i), i, "x");
    EXPECT_EQ(ts[static_cast<std::size_t>(i)].steps, e.steps);
    EXPECT_EQ(ts[static_cast<std::size_t>(i)].ret, e.ret);
  }
}

TEST(Epsilon, ReturnFallsWithNoise) {
  for (EnvId env : kEnvs) {
    const auto by = returns_by_source(epsilon_rollouts(EnvConfig::defaults(env)));
    std::vector<double> eps, means;
    for (double e : kDefaultEpsilonLevels) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "epsilon=%g", e);
      eps.push_back(e);
      means.push_back(testutil::mean(by.at(tag)));
    }
    EXPECT_LE(testutil::spearman(eps, means), -0.9) << to_string(env);
  }
}

TEST(Epsilon, RejectsBadLevels) {
  const double bad[] = {1.5};
  EXPECT_THROW(epsilon_rollouts(EnvConfig::defaults(EnvId::reacher), bad), InvalidInput);
}

TEST(CheckpointRollouts, SkillCurveEnds) {
  EXPECT_EQ(checkpoint_skill(1.0), 1.0);
  EXPECT_EQ(checkpoint_skill(0.0), 0.0);
  EXPECT_DOUBLE_EQ(checkpoint_skill(0.25), 0.5);
}

TEST(CheckpointRollouts, FullCheckpointIsTheExpert) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  const double one[] = {1.0};
  const auto ts = checkpoint_rollouts(cfg, one, 2, 5);
  const Trajectory e = rollout(cfg, Policy::expert(), 5, 0, 0, "x");
  EXPECT_EQ(ts[0].steps, e.steps);
}

TEST(CheckpointRollouts, EarlyWorseThanFinal) {
  for (EnvId env : kEnvs) {
    const auto ts = checkpoint_rollouts(EnvConfig::defaults(env));
    ASSERT_EQ(ts.size(), 120u);
    const auto by = returns_by_source(ts);
    EXPECT_LT(testutil::mean(by.at("checkpoint=0.01")), testutil::mean(by.at("checkpoint=1")))
        << to_string(env);
  }
}

TEST(Tiered, CountsAndOrdering) {
  for (EnvId env : {EnvId::feeding, EnvId::itch}) {
    const auto ts = tiered_demos(EnvConfig::defaults(env), 3);
    ASSERT_EQ(ts.size(), 20u);
    const auto by = returns_by_source(ts);
    EXPECT_EQ(by.at("tier=success").size(), 8u);
    EXPECT_EQ(by.at("tier=failure").size(), 7u);
    EXPECT_EQ(by.at("tier=half").size(), 5u);
    for (const auto& t : ts) {
      if (t.source == "tier=success") EXPECT_EQ(t.success, true) << to_string(env) << t.id;
    }
    EXPECT_GT(testutil::mean(by.at("tier=success")), testutil::mean(by.at("tier=half")));
    EXPECT_GT(testutil::mean(by.at("tier=half")), testutil::mean(by.at("tier=failure")));
  }
}

TEST(Tiered, NeedsASuccessDefinition) {
  EXPECT_THROW(tiered_demos(EnvConfig::defaults(EnvId::reacher)), ConfigError);
}

TEST(Store, RoundTripAndDeterminism) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::itch);
  const auto a = epsilon_rollouts(cfg, kDefaultEpsilonLevels, 20, 99);
  const auto b = epsilon_rollouts(cfg, kDefaultEpsilonLevels, 20, 99);
  std::stringstream sa, sb;
  write_trajectories(sa, a);
  write_trajectories(sb, b);
  EXPECT_EQ(sha256_hex(sa.str()), sha256_hex(sb.str()));
  const auto back = read_trajectories(sa);
  EXPECT_EQ(back, a);
}

TEST(Store, LineFormat) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::reacher);
  const Trajectory t = rollout(cfg, Policy::expert(), 1, 0, 4, "epsilon=0");
  const std::string line = trajectory_line(t);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  for (const char* key : {"\"id\"", "\"env\"", "\"source\"", "\"return\"", "\"success\"", "\"steps\"",
                          "\"raw\"", "\"priv\"", "\"a\"", "\"r\""}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
}

TEST(Store, RejectsBrokenReturn) {
  const EnvConfig cfg = EnvConfig::defaults(EnvId::reacher);
  Trajectory t = rollout(cfg, Policy::expert(), 1, 0, 0, "x");
  t.ret += 1.0;
  EXPECT_THROW(check_trajectory(cfg, t), InvalidInput);
}

TEST(Expert, SucceedsReliably) {
  for (EnvId env : {EnvId::feeding, EnvId::itch}) {
    const EnvConfig cfg = EnvConfig::defaults(env);
    int ok = 0;
    for (int i = 0; i < 100; ++i) {
      ok += rollout(cfg, Policy::expert(), 77, static_cast<std::uint64_t>(i), i, "x").success.value_or(false);
    }
    EXPECT_GE(ok, 95) << to_string(env);
  }
}
