#pragma once

// Planar kinematic analogs of the Reacher, Feeding and Itch-Scratching tasks.
//
// Every environment is a pure transition function over a value-type state.
// Observations come in two flavours: a raw vector (the default feature order
// used for feature augmentation) and a short privileged vector whose entries
// directly drive the ground-truth reward.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "preflab/numerics.hpp"

namespace preflab {

enum class EnvId { reacher, feeding, itch };

std::string to_string(EnvId env);
EnvId parse_env(const std::string& name);
std::size_t raw_dim(EnvId env);
std::size_t priv_dim(EnvId env);
std::size_t action_dim(EnvId env);
bool has_success(EnvId env);
const std::vector<std::string>& raw_feature_names(EnvId env);
const std::vector<std::string>& priv_feature_names(EnvId env);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct EnvConfig {
  EnvId env = EnvId::reacher;
  int horizon = 50;
  double action_bound = 1.0;       // per-component clip of the action
  double max_speed = 0.5;          // reacher: joint rad/step per unit torque; others: distance/step
  double contact_stiffness = 10.0; // force = stiffness * overlap
  double spill_speed = 0.045;      // feeding
  double feed_radius = 0.05;       // feeding
  double feed_speed = 0.01;        // feeding
  double itch_radius = 0.1;        // itch
  int feed_success_particles = 4;  // feeding success: particles in mouth at horizon end
  double itch_success_force = 5.0; // itch success: cumulative force at target
  std::uint64_t seed = 0;

  static EnvConfig defaults(EnvId env);
  void validate() const;

  // Plain-text "key=value key=value ..." form; parse() starts from the env's
  // defaults, so "env=feeding seed=7" is a complete config.
  std::string to_text() const;
  static EnvConfig parse(const std::string& text);

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

enum class Particle { on_spoon, in_mouth, on_floor };

struct ReacherState {
  double q1 = 0.0, q2 = 0.0;
  double dq1 = 0.0, dq2 = 0.0;
  Vec2 target;
  friend bool operator==(const ReacherState&, const ReacherState&) = default;
};

inline constexpr int kNumParticles = 5;

struct FeedingState {
  Vec2 spoon, spoon_vel;
  Vec2 mouth, head, torso;
  std::array<Particle, kNumParticles> particles{};
  std::array<double, 3> joints{}, joint_vel{};
  double force_mouth = 0.0, force_head = 0.0, force_torso = 0.0;
  double cumulative_force = 0.0;
  int fed_last = 0, spilled_last = 0;  // transitions of the last step
  friend bool operator==(const FeedingState&, const FeedingState&) = default;
};

struct ItchState {
  Vec2 tool, tool_vel;
  Vec2 elbow, wrist;  // forearm capsule axis
  Vec2 itch;
  std::array<double, 4> arm_angles{};
  std::array<double, 6> robot_q{}, robot_dq{};
  double force_arm = 0.0, force_base = 0.0, force_at_target = 0.0;
  double cumulative_target_force = 0.0;
  friend bool operator==(const ItchState&, const ItchState&) = default;
};

struct EnvState {
  EnvId env = EnvId::reacher;
  int t = 0;
  std::variant<ReacherState, FeedingState, ItchState> body;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  EnvState next;
  Vec64 raw;   // observation of `next`
  Vec64 priv;  // privileged features of `next`
  double gt_reward = 0.0;
};

EnvState reset(const EnvConfig& cfg, std::uint64_t seed);

// Deterministic transition. The action is clipped to the configured bounds;
// a wrong action length throws InvalidInput.
StepResult step(const EnvConfig& cfg, const EnvState& state, std::span<const double> action);

// Ground-truth reward of taking `action` in `state` (the reward of the
// transition performed by step()).
double gt_reward(const EnvConfig& cfg, const EnvState& state, std::span<const double> action);

Vec64 raw_obs(const EnvConfig& cfg, const EnvState& state);
Vec64 priv_obs(const EnvConfig& cfg, const EnvState& state);

// Ground-truth reward terms of one transition, as used by step().
namespace rewards {
double reacher(double dist, std::span<const double> action);
double feeding(int fed, int spilled, double dist_to_mouth);
double itch(double force_at_target, double dist_to_itch, double total_force);
}  // namespace rewards

// Task success at the end of an episode; nullopt for reacher.
std::optional<bool> success(const EnvConfig& cfg, const EnvState& final_state);

// Geometry shared by the scripted controllers and tests.
namespace geometry {

inline constexpr double kReacherLink1 = 0.5;
inline constexpr double kReacherLink2 = 0.5;
inline constexpr double kArmLength = kReacherLink1 + kReacherLink2;
inline constexpr double kReacherTargetMin = 0.2;
inline constexpr double kReacherTargetMax = 0.9;

inline constexpr double kWorkspace = 1.2;  // |x|,|y| bound for spoon and tool

inline constexpr double kSpoonRadius = 0.02;
inline constexpr double kMouthRadius = 0.04;
inline constexpr double kHeadRadius = 0.15;
inline constexpr double kTorsoRadius = 0.28;

inline constexpr double kToolRadius = 0.02;
inline constexpr double kForearmRadius = 0.06;
inline constexpr double kBaseRadius = 0.30;
inline constexpr Vec2 kItchRobotBase{-0.95, -0.85};
inline constexpr Vec2 kFeedingRobotBase{-1.0, -0.9};

Vec2 reacher_ee(double q1, double q2);
double disc_overlap(Vec2 p, double r, Vec2 center, double center_r);
double segment_distance(Vec2 p, Vec2 a, Vec2 b);
double distance(Vec2 a, Vec2 b);

// Planar n-link arc configuration reaching `target` from `base`: the first
// joint aims the arc, the remaining joints share one bend angle.
std::vector<double> arc_ik(Vec2 base, Vec2 target, int links, double link_length);

}  // namespace geometry

}  // namespace preflab
