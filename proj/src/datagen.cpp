#include "preflab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

namespace {

std::string level_tag(const char* kind, double level) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s=%g", kind, level);
  return buf;
}

}  // namespace

double sum_rewards(const Trajectory& traj) {
  double total = 0.0;
  for (const auto& s : traj.steps) total += s.reward;
  return total;
}

void check_trajectory(const EnvConfig& cfg, const Trajectory& traj) {
  if (traj.env != cfg.env) throw InvalidInput("trajectory env mismatch");
  if (traj.steps.size() != static_cast<std::size_t>(cfg.horizon)) {
    throw InvalidInput("trajectory " + std::to_string(traj.id) + " has " +
                       std::to_string(traj.steps.size()) + " steps, expected " +
                       std::to_string(cfg.horizon));
  }
  for (const auto& s : traj.steps) {
    if (s.raw.size() != raw_dim(cfg.env) || s.priv.size() != priv_dim(cfg.env) ||
        s.action.size() != action_dim(cfg.env)) {
      throw InvalidInput("trajectory " + std::to_string(traj.id) + " has a malformed step");
    }
  }
  if (sum_rewards(traj) != traj.ret) {
    throw InvalidInput("trajectory " + std::to_string(traj.id) + " return does not re-sum");
  }
}

Trajectory rollout(const EnvConfig& cfg, const Policy& policy, std::uint64_t seed,
                   std::uint64_t stream_index, int id, std::string source) {
  Trajectory traj;
  traj.id = id;
  traj.env = cfg.env;
  traj.source = std::move(source);
  traj.steps.reserve(static_cast<std::size_t>(cfg.horizon));
  EnvState state = reset(cfg, derive_seed(seed, {stream_index, 0}));
  Rng rng(derive_seed(seed, {stream_index, 1}));
  Vec64 obs = raw_obs(cfg, state);
  for (int t = 0; t < cfg.horizon; ++t) {
    Vec64 action = policy.act(cfg, state, obs, rng);
    StepResult r = step(cfg, state, action);
    for (double& a : action) a = std::clamp(a, -cfg.action_bound, cfg.action_bound);
    obs = r.raw;
    traj.steps.push_back({std::move(r.raw), std::move(r.priv), std::move(action), r.gt_reward});
    state = std::move(r.next);
  }
  traj.ret = sum_rewards(traj);
  traj.success = success(cfg, state);
  return traj;
}

std::vector<Trajectory> epsilon_rollouts(const EnvConfig& cfg, std::span<const double> eps_levels,
                                         int n_per_level, std::uint64_t seed) {
  if (n_per_level < 1) throw InvalidInput("epsilon_rollouts: n_per_level must be >= 1");
  std::vector<Trajectory> out;
  int id = 0;
  for (double eps : eps_levels) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidInput("epsilon levels must lie in [0,1]");
    const Policy policy = Policy::blended(1.0 - eps);
    for (int i = 0; i < n_per_level; ++i, ++id) {
      out.push_back(rollout(cfg, policy, seed, static_cast<std::uint64_t>(id), id,
                            level_tag("epsilon", eps)));
    }
  }
  return out;
}

double checkpoint_skill(double fraction) { return std::sqrt(fraction); }

std::vector<Trajectory> checkpoint_rollouts(const EnvConfig& cfg,
                                            std::span<const double> fractions,
                                            int n_per_checkpoint, std::uint64_t seed) {
  if (n_per_checkpoint < 1) throw InvalidInput("checkpoint_rollouts: n_per_cp must be >= 1");
  std::vector<Trajectory> out;
  int id = 0;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidInput("checkpoint fractions must lie in [0,1]");
    const Policy policy = Policy::blended(checkpoint_skill(f));
    for (int i = 0; i < n_per_checkpoint; ++i, ++id) {
      out.push_back(rollout(cfg, policy, seed, static_cast<std::uint64_t>(id), id,
                            level_tag("checkpoint", f)));
    }
  }
  return out;
}

std::vector<Trajectory> tiered_demos(const EnvConfig& cfg, std::uint64_t seed) {
  if (!has_success(cfg.env)) {
    throw ConfigError("tiered demonstrations need a task with success (not " +
                      to_string(cfg.env) + ")");
  }
  std::vector<Trajectory> out;
  int id = 0;
  auto add = [&](const Policy& p, const char* tier) {
    out.push_back(rollout(cfg, p, seed, static_cast<std::uint64_t>(id), id,
                          std::string("tier=") + tier));
    ++id;
  };
  for (int i = 0; i < kTierSuccess; ++i) add(Policy::expert(), "success");
  for (int i = 0; i < kTierFailure; ++i) {
    add(Policy::failure(derive_seed(seed, {0xfa11ULL, static_cast<std::uint64_t>(i)})), "failure");
  }
  for (int i = 0; i < kTierHalf; ++i) {
    add(Policy::half(derive_seed(seed, {0x4a1fULL, static_cast<std::uint64_t>(i)})), "half");
  }
  return out;
}

}  // namespace preflab
