#pragma once

// Ranked demonstration generation: epsilon-greedy expert rollouts,
// checkpoint-style skill interpolation, and tiered scripted demonstrations.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preflab/envs.hpp"
#include "preflab/policy.hpp"

namespace preflab {

// One transition: the observation it produced, the action, and its reward.
struct StepRecord {
  Vec64 raw;
  Vec64 priv;
  Vec64 action;
  double reward = 0.0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Trajectory {
  int id = 0;
  EnvId env = EnvId::reacher;
  std::string source;  // "epsilon=0.2", "checkpoint=0.05", "tier=success", ...
  double ret = 0.0;
  std::optional<bool> success;
  std::vector<StepRecord> steps;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Left-to-right sum of step rewards (the definition of a trajectory's return).
double sum_rewards(const Trajectory& traj);

// Throws InvalidInput if the trajectory violates its invariants for `cfg`.
void check_trajectory(const EnvConfig& cfg, const Trajectory& traj);

// Rollout stream seeds are derived from (seed, stream_index).
Trajectory rollout(const EnvConfig& cfg, const Policy& policy, std::uint64_t seed,
                   std::uint64_t stream_index, int id, std::string source);

inline const std::vector<double> kDefaultEpsilonLevels = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
inline const std::vector<double> kDefaultCheckpointFractions = {0.01, 0.05, 0.1, 0.2, 0.8, 1.0};
inline constexpr int kDefaultRolloutsPerLevel = 20;

std::vector<Trajectory> epsilon_rollouts(const EnvConfig& cfg,
                                         std::span<const double> eps_levels = kDefaultEpsilonLevels,
                                         int n_per_level = kDefaultRolloutsPerLevel,
                                         std::uint64_t seed = 0);

// Skill of a checkpoint taken at training fraction f.
double checkpoint_skill(double fraction);

std::vector<Trajectory> checkpoint_rollouts(
    const EnvConfig& cfg, std::span<const double> fractions = kDefaultCheckpointFractions,
    int n_per_checkpoint = kDefaultRolloutsPerLevel, std::uint64_t seed = 0);

inline constexpr int kTierSuccess = 8;
inline constexpr int kTierFailure = 7;
inline constexpr int kTierHalf = 5;

// 8 successful, 7 failed and 5 half-successful demonstrations (feeding/itch).
std::vector<Trajectory> tiered_demos(const EnvConfig& cfg, std::uint64_t seed = 0);

// Trajectory store: one JSON object per line, floats with 17 significant digits.
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);
std::string trajectory_line(const Trajectory& traj);

}  // namespace preflab
