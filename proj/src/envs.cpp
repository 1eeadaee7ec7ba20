#include "preflab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

namespace geometry {

Vec2 reacher_ee(double q1, double q2) {
  return {kReacherLink1 * std::cos(q1) + kReacherLink2 * std::cos(q1 + q2),
          kReacherLink1 * std::sin(q1) + kReacherLink2 * std::sin(q1 + q2)};
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double disc_overlap(Vec2 p, double r, Vec2 center, double center_r) {
  return std::max(0.0, r + center_r - distance(p, center));
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return distance(p, {a.x + u * dx, a.y + u * dy});
}

std::vector<double> arc_ik(Vec2 base, Vec2 target, int links, double link_length) {
  const double rho = distance(base, target);
  const double phi = std::atan2(target.y - base.y, target.x - base.x);
  const double n = static_cast<double>(links);
  // chord(beta) = L sin(n beta / 2) / sin(beta / 2), decreasing on [0, 2 pi / n].
  auto chord = [&](double beta) {
    if (beta < 1e-12) return n * link_length;
    return link_length * std::sin(n * beta / 2.0) / std::sin(beta / 2.0);
  };
  double beta = 0.0;
  if (rho < n * link_length) {
    double lo = 0.0, hi = 2.0 * std::numbers::pi / n;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (chord(mid) > rho ? lo : hi) = mid;
    }
    beta = 0.5 * (lo + hi);
  }
  std::vector<double> q(static_cast<std::size_t>(links), beta);
  q[0] = phi - (n - 1.0) * beta / 2.0;
  return q;
}

}  // namespace geometry

namespace {

using namespace geometry;

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

Vec2 clamp_workspace(Vec2 p) {
  return {std::clamp(p.x, -kWorkspace, kWorkspace), std::clamp(p.y, -kWorkspace, kWorkspace)};
}

Vec64 clip_action(const EnvConfig& cfg, std::span<const double> action) {
  if (action.size() != action_dim(cfg.env)) {
    throw InvalidInput("step: action has " + std::to_string(action.size()) +
                       " components, expected " + std::to_string(action_dim(cfg.env)));
  }
  Vec64 a(action.begin(), action.end());
  for (double& v : a) {
    if (!std::isfinite(v)) throw InvalidInput("step: non-finite action");
    v = std::clamp(v, -cfg.action_bound, cfg.action_bound);
  }
  return a;
}

int count(const FeedingState& s, Particle p) {
  return static_cast<int>(std::count(s.particles.begin(), s.particles.end(), p));
}

template <std::size_t N>
std::array<double, N> to_array(const std::vector<double>& v) {
  std::array<double, N> out{};
  std::copy_n(v.begin(), N, out.begin());
  return out;
}

// ---------------------------------------------------------------- reacher

constexpr double kReacherStartElbow = std::numbers::pi / 2;

EnvState reset_reacher(Rng& rng) {
  ReacherState s;
  s.q2 = kReacherStartElbow;
  const double r = rng.uniform(kReacherTargetMin, kReacherTargetMax);
  const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
  s.target = {r * std::cos(ang), r * std::sin(ang)};
  return {EnvId::reacher, 0, s};
}

StepResult step_reacher(const EnvConfig& cfg, const EnvState& state, const Vec64& a) {
  ReacherState s = std::get<ReacherState>(state.body);
  // The action is a planar force at the end effector; the joint torques are
  // J^T a and the joints move at max_speed per unit torque.
  const double s1 = std::sin(s.q1), c1 = std::cos(s.q1);
  const double s12 = std::sin(s.q1 + s.q2), c12 = std::cos(s.q1 + s.q2);
  const double j11 = -kReacherLink1 * s1 - kReacherLink2 * s12, j12 = -kReacherLink2 * s12;
  const double j21 = kReacherLink1 * c1 + kReacherLink2 * c12, j22 = kReacherLink2 * c12;
  s.dq1 = cfg.max_speed * (j11 * a[0] + j21 * a[1]);
  s.dq2 = cfg.max_speed * (j12 * a[0] + j22 * a[1]);
  s.q1 = wrap_angle(s.q1 + s.dq1);
  s.q2 = wrap_angle(s.q2 + s.dq2);
  const double dist = distance(reacher_ee(s.q1, s.q2), s.target);
  StepResult out;
  out.next = {EnvId::reacher, state.t + 1, s};
  out.gt_reward = rewards::reacher(dist, a);
  return out;
}

// ---------------------------------------------------------------- feeding

void feeding_contacts(const EnvConfig& cfg, FeedingState& s) {
  const double k = cfg.contact_stiffness;
  s.force_mouth = k * disc_overlap(s.spoon, kSpoonRadius, s.mouth, kMouthRadius);
  s.force_head = k * disc_overlap(s.spoon, kSpoonRadius, s.head, kHeadRadius);
  s.force_torso = k * disc_overlap(s.spoon, kSpoonRadius, s.torso, kTorsoRadius);
}

EnvState reset_feeding(const EnvConfig& cfg, Rng& rng) {
  FeedingState s;
  const Vec2 off{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
  s.head = {0.75 + off.x, 0.15 + off.y};
  s.mouth = {s.head.x - (kHeadRadius + kSpoonRadius), s.head.y};
  s.torso = {0.75 + off.x, -0.45 + off.y};
  s.spoon = {-0.7 + rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  s.particles.fill(Particle::on_spoon);
  s.joints = to_array<3>(arc_ik(kFeedingRobotBase, s.spoon, 3, 0.8));
  feeding_contacts(cfg, s);
  s.cumulative_force = 0.0;
  return {EnvId::feeding, 0, s};
}

StepResult step_feeding(const EnvConfig& cfg, const EnvState& state, const Vec64& a) {
  FeedingState s = std::get<FeedingState>(state.body);
  const Vec2 prev = s.spoon;
  s.spoon = clamp_workspace({prev.x + cfg.max_speed * a[0], prev.y + cfg.max_speed * a[1]});
  s.spoon_vel = {s.spoon.x - prev.x, s.spoon.y - prev.y};
  const double speed = std::hypot(s.spoon_vel.x, s.spoon_vel.y);

  s.fed_last = 0;
  s.spilled_last = 0;
  const auto on_spoon = std::find(s.particles.begin(), s.particles.end(), Particle::on_spoon);
  if (on_spoon != s.particles.end()) {
    if (speed > cfg.spill_speed) {
      *on_spoon = Particle::on_floor;
      s.spilled_last = 1;
    } else if (speed <= cfg.feed_speed && distance(s.spoon, s.mouth) <= cfg.feed_radius) {
      *on_spoon = Particle::in_mouth;
      s.fed_last = 1;
    }
  }

  feeding_contacts(cfg, s);
  s.cumulative_force += s.force_mouth + s.force_head + s.force_torso;

  const auto joints = to_array<3>(arc_ik(kFeedingRobotBase, s.spoon, 3, 0.8));
  for (std::size_t j = 0; j < 3; ++j) s.joint_vel[j] = wrap_angle(joints[j] - s.joints[j]);
  s.joints = joints;

  StepResult out;
  out.gt_reward = rewards::feeding(s.fed_last, s.spilled_last, distance(s.spoon, s.mouth));
  out.next = {EnvId::feeding, state.t + 1, s};
  return out;
}

// ---------------------------------------------------------------- itch

void itch_contacts(const EnvConfig& cfg, ItchState& s) {
  const double k = cfg.contact_stiffness;
  s.force_arm =
      k * std::max(0.0, kToolRadius + kForearmRadius - segment_distance(s.tool, s.elbow, s.wrist));
  s.force_base = k * disc_overlap(s.tool, kToolRadius, kItchRobotBase, kBaseRadius);
  s.force_at_target = distance(s.tool, s.itch) <= cfg.itch_radius ? s.force_arm : 0.0;
}

EnvState reset_itch(const EnvConfig& cfg, Rng& rng) {
  ItchState s;
  const Vec2 off{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
  const double tilt = rng.uniform(-0.3, 0.3);
  const Vec2 mid{0.55 + off.x, 0.05 + off.y};
  const Vec2 dir{std::sin(tilt), -std::cos(tilt)};
  s.elbow = {mid.x - 0.4 * dir.x, mid.y - 0.4 * dir.y};
  s.wrist = {mid.x + 0.4 * dir.x, mid.y + 0.4 * dir.y};
  const double u = rng.uniform(0.2, 0.8);
  s.itch = {s.elbow.x + u * (s.wrist.x - s.elbow.x), s.elbow.y + u * (s.wrist.y - s.elbow.y)};
  const Vec2 shoulder{s.elbow.x + 0.3, s.elbow.y + 0.25};
  const double upper = std::atan2(s.elbow.y - shoulder.y, s.elbow.x - shoulder.x);
  const double fore = std::atan2(dir.y, dir.x);
  s.arm_angles = {upper, wrap_angle(fore - upper), rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5)};
  s.tool = {-0.3 + rng.uniform(-0.05, 0.05), 0.15 + rng.uniform(-0.05, 0.05)};
  s.robot_q = to_array<6>(arc_ik(kItchRobotBase, s.tool, 6, 0.45));
  itch_contacts(cfg, s);
  s.cumulative_target_force = 0.0;
  return {EnvId::itch, 0, s};
}

StepResult step_itch(const EnvConfig& cfg, const EnvState& state, const Vec64& a) {
  ItchState s = std::get<ItchState>(state.body);
  const Vec2 prev = s.tool;
  s.tool = clamp_workspace({prev.x + cfg.max_speed * a[0], prev.y + cfg.max_speed * a[1]});
  s.tool_vel = {s.tool.x - prev.x, s.tool.y - prev.y};
  itch_contacts(cfg, s);
  s.cumulative_target_force += s.force_at_target;
  const auto q = to_array<6>(arc_ik(kItchRobotBase, s.tool, 6, 0.45));
  for (std::size_t j = 0; j < 6; ++j) s.robot_dq[j] = wrap_angle(q[j] - s.robot_q[j]);
  s.robot_q = q;

  StepResult out;
  const double total = s.force_arm + s.force_base;
  out.gt_reward = rewards::itch(s.force_at_target, distance(s.tool, s.itch), total);
  out.next = {EnvId::itch, state.t + 1, s};
  return out;
}

}  // namespace

std::string to_string(EnvId env) {
  switch (env) {
    case EnvId::reacher: return "reacher";
    case EnvId::feeding: return "feeding";
    case EnvId::itch: return "itch";
  }
  return "?";
}

EnvId parse_env(const std::string& name) {
  if (name == "reacher") return EnvId::reacher;
  if (name == "feeding") return EnvId::feeding;
  if (name == "itch") return EnvId::itch;
  throw InvalidInput("unknown environment '" + name + "'");
}

std::size_t raw_dim(EnvId env) { return raw_feature_names(env).size(); }
std::size_t priv_dim(EnvId env) { return priv_feature_names(env).size(); }
std::size_t action_dim(EnvId) { return 2; }
bool has_success(EnvId env) { return env != EnvId::reacher; }

const std::vector<std::string>& raw_feature_names(EnvId env) {
  static const std::vector<std::string> reacher = {
      "cos_q1", "sin_q1", "cos_q2", "sin_q2", "target_x", "target_y",
      "dq1",    "dq2",    "ee_minus_target_x", "ee_minus_target_y", "ee_minus_target_z"};
  static const std::vector<std::string> feeding = {
      "spoon_x",        "spoon_y",        "spoon_vx",      "spoon_vy",      "mouth_x",
      "mouth_y",        "head_x",         "head_y",        "torso_x",       "torso_y",
      "joint1",         "joint2",         "joint3",        "joint1_vel",    "joint2_vel",
      "joint3_vel",     "spoon_minus_mouth_x", "spoon_minus_mouth_y", "particles_on_spoon",
      "particles_in_mouth", "particles_on_floor", "force_on_human", "force_on_head",
      "force_on_torso", "cumulative_force"};
  static const std::vector<std::string> itch = {
      "tool_x",       "tool_y",       "tool_vx",      "tool_vy",      "itch_x",
      "itch_y",       "tool_minus_itch_x", "tool_minus_itch_y", "arm_shoulder", "arm_elbow",
      "arm_wrist",    "arm_roll",     "robot_q1",     "robot_q2",     "robot_q3",
      "robot_q4",     "robot_q5",     "robot_q6",     "robot_dq1",    "robot_dq2",
      "robot_dq3",    "robot_dq4",    "robot_dq5",    "robot_dq6",    "total_tool_force",
      "force_at_target", "contact_arm", "contact_base", "contact_target", "dist_to_base"};
  switch (env) {
    case EnvId::reacher: return reacher;
    case EnvId::feeding: return feeding;
    case EnvId::itch: return itch;
  }
  return reacher;
}

const std::vector<std::string>& priv_feature_names(EnvId env) {
  static const std::vector<std::string> reacher = {"dist_to_target"};
  static const std::vector<std::string> feeding = {"dist_to_mouth", "n_in_mouth", "n_on_floor"};
  static const std::vector<std::string> itch = {"dist_to_itch", "force_at_target"};
  switch (env) {
    case EnvId::reacher: return reacher;
    case EnvId::feeding: return feeding;
    case EnvId::itch: return itch;
  }
  return reacher;
}

EnvState reset(const EnvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x5eedULL}));
  switch (cfg.env) {
    case EnvId::reacher: return reset_reacher(rng);
    case EnvId::feeding: return reset_feeding(cfg, rng);
    case EnvId::itch: return reset_itch(cfg, rng);
  }
  return {};
}

StepResult step(const EnvConfig& cfg, const EnvState& state, std::span<const double> action) {
  if (state.env != cfg.env) throw InvalidInput("step: state/config environment mismatch");
  const Vec64 a = clip_action(cfg, action);
  StepResult out;
  switch (cfg.env) {
    case EnvId::reacher: out = step_reacher(cfg, state, a); break;
    case EnvId::feeding: out = step_feeding(cfg, state, a); break;
    case EnvId::itch: out = step_itch(cfg, state, a); break;
  }
  out.raw = raw_obs(cfg, out.next);
  out.priv = priv_obs(cfg, out.next);
  return out;
}

double gt_reward(const EnvConfig& cfg, const EnvState& state, std::span<const double> action) {
  return step(cfg, state, action).gt_reward;
}

namespace rewards {

double reacher(double dist, std::span<const double> a) {
  return -dist - 0.1 * (a[0] * a[0] + a[1] * a[1]);
}

double feeding(int fed, int spilled, double dist_to_mouth) {
  return 10.0 * fed - 5.0 * spilled - 0.1 * dist_to_mouth;
}

// contact anywhere but the itch is penalized lightly
double itch(double force_at_target, double dist_to_itch, double total_force) {
  return 1.0 * force_at_target - 0.1 * dist_to_itch - 0.01 * (total_force - force_at_target);
}

}  // namespace rewards

Vec64 raw_obs(const EnvConfig& cfg, const EnvState& state) {
  if (state.env != cfg.env) throw InvalidInput("raw_obs: state/config environment mismatch");
  switch (state.env) {
    case EnvId::reacher: {
      const auto& s = std::get<ReacherState>(state.body);
      const Vec2 ee = reacher_ee(s.q1, s.q2);
      return {std::cos(s.q1), std::sin(s.q1), std::cos(s.q2), std::sin(s.q2), s.target.x,
              s.target.y,     s.dq1,          s.dq2,          ee.x - s.target.x,
              ee.y - s.target.y, 0.0};
    }
    case EnvId::feeding: {
      const auto& s = std::get<FeedingState>(state.body);
      const double human = s.force_mouth + s.force_head + s.force_torso;
      return {s.spoon.x,     s.spoon.y,     s.spoon_vel.x, s.spoon_vel.y, s.mouth.x,
              s.mouth.y,     s.head.x,      s.head.y,      s.torso.x,     s.torso.y,
              s.joints[0],   s.joints[1],   s.joints[2],   s.joint_vel[0], s.joint_vel[1],
              s.joint_vel[2], s.spoon.x - s.mouth.x, s.spoon.y - s.mouth.y,
              static_cast<double>(count(s, Particle::on_spoon)),
              static_cast<double>(count(s, Particle::in_mouth)),
              static_cast<double>(count(s, Particle::on_floor)), human, s.force_head,
              s.force_torso, s.cumulative_force};
    }
    case EnvId::itch: {
      const auto& s = std::get<ItchState>(state.body);
      Vec64 o = {s.tool.x, s.tool.y, s.tool_vel.x, s.tool_vel.y, s.itch.x, s.itch.y,
                 s.tool.x - s.itch.x, s.tool.y - s.itch.y};
      o.insert(o.end(), s.arm_angles.begin(), s.arm_angles.end());
      o.insert(o.end(), s.robot_q.begin(), s.robot_q.end());
      o.insert(o.end(), s.robot_dq.begin(), s.robot_dq.end());
      o.push_back(s.force_arm + s.force_base);
      o.push_back(s.force_at_target);
      o.push_back(s.force_arm > 0.0 ? 1.0 : 0.0);
      o.push_back(s.force_base > 0.0 ? 1.0 : 0.0);
      o.push_back(s.force_at_target > 0.0 ? 1.0 : 0.0);
      o.push_back(distance(s.tool, kItchRobotBase));
      return o;
    }
  }
  return {};
}

Vec64 priv_obs(const EnvConfig& cfg, const EnvState& state) {
  if (state.env != cfg.env) throw InvalidInput("priv_obs: state/config environment mismatch");
  switch (state.env) {
    case EnvId::reacher: {
      const auto& s = std::get<ReacherState>(state.body);
      return {distance(reacher_ee(s.q1, s.q2), s.target)};
    }
    case EnvId::feeding: {
      const auto& s = std::get<FeedingState>(state.body);
      return {distance(s.spoon, s.mouth), static_cast<double>(count(s, Particle::in_mouth)),
              static_cast<double>(count(s, Particle::on_floor))};
    }
    case EnvId::itch: {
      const auto& s = std::get<ItchState>(state.body);
      return {distance(s.tool, s.itch), s.force_at_target};
    }
  }
  return {};
}

std::optional<bool> success(const EnvConfig& cfg, const EnvState& final_state) {
  switch (final_state.env) {
    case EnvId::reacher: return std::nullopt;
    case EnvId::feeding:
      return count(std::get<FeedingState>(final_state.body), Particle::in_mouth) >=
             cfg.feed_success_particles;
    case EnvId::itch:
      return std::get<ItchState>(final_state.body).cumulative_target_force >=
             cfg.itch_success_force;
  }
  return std::nullopt;
}

}  // namespace preflab
