#include "preflab/policy.hpp"

#include <algorithm>
#include <cmath>

#include "preflab/error.hpp"

namespace preflab {

namespace {

using namespace geometry;

// Velocity command toward `goal`: proportional with a speed cap, expressed as
// a normalized action.
Vec64 seek(const EnvConfig& cfg, Vec2 from, Vec2 goal, double gain, double speed_cap) {
  const double dx = goal.x - from.x, dy = goal.y - from.y;
  const double d = std::hypot(dx, dy);
  if (d < 1e-12) return {0.0, 0.0};
  const double speed = std::min(speed_cap, gain * d);
  return {std::clamp(speed * dx / d / cfg.max_speed, -cfg.action_bound, cfg.action_bound),
          std::clamp(speed * dy / d / cfg.max_speed, -cfg.action_bound, cfg.action_bound)};
}

constexpr double kExpertGain = 0.35;
constexpr double kReacherGain = 4.0;
constexpr double kFeedApproachOffset = 0.03;
constexpr double kItchPressDepth = 0.03;
constexpr double kScratchAmplitude = 0.04;

Vec64 reacher_expert(const EnvConfig& cfg, const ReacherState& s) {
  // Proportional pull of the end effector toward the target; with the
  // Jacobian-transpose actuation this is gradient descent on the distance.
  const Vec2 ee = reacher_ee(s.q1, s.q2);
  return {std::clamp(kReacherGain * (s.target.x - ee.x), -cfg.action_bound, cfg.action_bound),
          std::clamp(kReacherGain * (s.target.y - ee.y), -cfg.action_bound, cfg.action_bound)};
}

Vec2 feeding_goal(const FeedingState& s) { return {s.mouth.x - kFeedApproachOffset, s.mouth.y}; }

Vec64 feeding_expert(const EnvConfig& cfg, const FeedingState& s, double speed_scale = 1.0) {
  const double cap = 0.85 * cfg.spill_speed * speed_scale;
  return seek(cfg, s.spoon, feeding_goal(s), kExpertGain, cap);
}

Vec2 itch_left_normal(const ItchState& s) {
  const double dx = s.wrist.x - s.elbow.x, dy = s.wrist.y - s.elbow.y;
  const double len = std::hypot(dx, dy);
  // Forearm runs downward; its left side faces the robot.
  return {dy / len, -dx / len};
}

Vec2 itch_goal(const ItchState& s, int t) {
  const double dx = s.wrist.x - s.elbow.x, dy = s.wrist.y - s.elbow.y;
  const double len = std::hypot(dx, dy);
  const Vec2 n = itch_left_normal(s);
  const double standoff = kToolRadius + kForearmRadius - kItchPressDepth;
  const double along = kScratchAmplitude * std::sin(0.6 * t);
  return {s.itch.x + n.x * standoff + along * dx / len, s.itch.y + n.y * standoff + along * dy / len};
}

Vec64 itch_expert(const EnvConfig& cfg, const ItchState& s, int t, double speed_scale = 1.0) {
  return seek(cfg, s.tool, itch_goal(s, t), kExpertGain, 0.8 * cfg.max_speed * speed_scale);
}

// Waypoint in free space on the robot side of the workspace, away from the
// human and the robot base.
Vec2 wander_point(std::uint64_t variant, int leg) {
  Rng rng(derive_seed(variant, {static_cast<std::uint64_t>(leg), 0x77ULL}));
  return {rng.uniform(-1.1, -0.2), rng.uniform(-0.1, 1.1)};
}

Vec64 failure_action(const EnvConfig& cfg, const EnvState& state, std::uint64_t variant) {
  const int leg = state.t / 25;
  switch (state.env) {
    case EnvId::feeding: {
      const auto& s = std::get<FeedingState>(state.body);
      // Jerky full-speed motion between waypoints; everything on the spoon spills.
      const Vec2 wp = wander_point(variant, leg);
      return seek(cfg, s.spoon, wp, 1.0, cfg.max_speed);
    }
    case EnvId::itch: {
      const auto& s = std::get<ItchState>(state.body);
      return seek(cfg, s.tool, wander_point(variant, leg), kExpertGain, 0.8 * cfg.max_speed);
    }
    case EnvId::reacher: break;
  }
  throw ConfigError("scripted failure demonstrations need a task with success");
}

Vec64 half_action(const EnvConfig& cfg, const EnvState& state, std::uint64_t variant) {
  switch (state.env) {
    case EnvId::feeding: {
      const auto& s = std::get<FeedingState>(state.body);
      // Spill two particles with a fast start, then feed the rest.
      if (state.t < 2) return seek(cfg, s.spoon, feeding_goal(s), 1.0, cfg.max_speed);
      return feeding_expert(cfg, s, 0.9 + 0.1 * Rng(variant).uniform());
    }
    case EnvId::itch: {
      const auto& s = std::get<ItchState>(state.body);
      // Scratch briefly, then drift off to hover in free space.
      const int arrive = 30;
      if (state.t < arrive + 6) return itch_expert(cfg, s, state.t);
      return seek(cfg, s.tool, wander_point(variant, 0), kExpertGain, 0.8 * cfg.max_speed);
    }
    case EnvId::reacher: break;
  }
  throw ConfigError("scripted half-success demonstrations need a task with success");
}

}  // namespace

Vec64 expert_action(const EnvConfig& cfg, const EnvState& state) {
  switch (state.env) {
    case EnvId::reacher: return reacher_expert(cfg, std::get<ReacherState>(state.body));
    case EnvId::feeding: return feeding_expert(cfg, std::get<FeedingState>(state.body));
    case EnvId::itch: return itch_expert(cfg, std::get<ItchState>(state.body), state.t);
  }
  return {};
}

Vec64 random_action(const EnvConfig& cfg, Rng& rng) {
  Vec64 a(action_dim(cfg.env));
  for (double& v : a) v = rng.uniform(-cfg.action_bound, cfg.action_bound);
  return a;
}

Policy Policy::blended(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("blend alpha must be in [0,1]");
  return {PolicyKind::blend, alpha, std::nullopt, 0};
}

Vec64 Policy::act(const EnvConfig& cfg, const EnvState& state, std::span<const double> raw,
                  Rng& rng) const {
  switch (kind) {
    case PolicyKind::scripted_expert: return expert_action(cfg, state);
    case PolicyKind::random: return random_action(cfg, rng);
    case PolicyKind::blend: {
      // One uniform draw per step decides; the random action uses fresh draws.
      if (rng.uniform() < alpha) return expert_action(cfg, state);
      return random_action(cfg, rng);
    }
    case PolicyKind::net:
      if (!net) throw InvalidInput("net policy without parameters");
      return net->act(raw);
    case PolicyKind::scripted_failure: return failure_action(cfg, state, variant);
    case PolicyKind::scripted_half: return half_action(cfg, state, variant);
  }
  return {};
}

// ---------------------------------------------------------------- PolicyNet

PolicyNet::PolicyNet(EnvId env, std::size_t hidden, double action_bound)
    : env_(env), hidden_(hidden), action_bound_(action_bound), obs_scale_(observation_scale(env)) {
  if (hidden < 1) throw InvalidInput("policy net: hidden width must be >= 1");
  params_.assign(parameter_count(), 0.0);
}

std::size_t PolicyNet::parameter_count() const noexcept {
  const std::size_t in = obs_scale_.size(), out = action_dim(env_);
  return hidden_ * in + hidden_ + out * hidden_ + out;
}

void PolicyNet::set_params(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw InvalidInput("policy net: expected " + std::to_string(parameter_count()) +
                       " parameters, got " + std::to_string(flat.size()));
  }
  params_.assign(flat.begin(), flat.end());
}

Vec64 PolicyNet::act(std::span<const double> raw) const {
  const std::size_t in = obs_scale_.size(), out = action_dim(env_);
  if (raw.size() != in) throw InvalidInput("policy net: observation length mismatch");
  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * in;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + out * hidden_;
  double x[64];
  for (std::size_t i = 0; i < in; ++i) x[i] = raw[i] * obs_scale_[i];
  Vec64 h(hidden_);
  for (std::size_t j = 0; j < hidden_; ++j) {
    double z = b1[j];
    const double* row = w1 + j * in;
    for (std::size_t i = 0; i < in; ++i) z += row[i] * x[i];
    h[j] = std::tanh(z);
  }
  Vec64 a(out);
  for (std::size_t k = 0; k < out; ++k) {
    double z = b2[k];
    const double* row = w2 + k * hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) z += row[j] * h[j];
    a[k] = action_bound_ * std::tanh(z);
  }
  return a;
}

Vec64 PolicyNet::observation_scale(EnvId env) {
  Vec64 s(raw_dim(env), 1.0);
  switch (env) {
    case EnvId::reacher:
      s[6] = s[7] = 5.0;            // joint speeds
      s[8] = s[9] = s[10] = 5.0;    // ee - target
      break;
    case EnvId::feeding:
      s[2] = s[3] = 20.0;                          // spoon velocity
      for (std::size_t j = 13; j < 16; ++j) s[j] = 10.0;  // joint velocities
      s[16] = s[17] = 2.0;                         // spoon - mouth
      for (std::size_t j = 18; j < 21; ++j) s[j] = 0.2;   // particle counts
      for (std::size_t j = 21; j < 24; ++j) s[j] = 0.3;   // forces
      s[24] = 0.01;                                // cumulative force
      break;
    case EnvId::itch:
      s[2] = s[3] = 20.0;
      s[6] = s[7] = 2.0;
      for (std::size_t j = 18; j < 24; ++j) s[j] = 10.0;
      s[24] = s[25] = 0.3;
      break;
  }
  return s;
}

}  // namespace preflab
