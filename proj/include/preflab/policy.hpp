#pragma once

// Controllers that act in the analog environments: scripted task experts,
// scripted demonstrators of lower quality, epsilon/checkpoint blends, and the
// parametric network policy searched by policyopt.

#include <cstdint>
#include <optional>
#include <span>

#include "preflab/envs.hpp"
#include "preflab/numerics.hpp"
#include "preflab/rng.hpp"

namespace preflab {

// raw observation -> tanh hidden layer -> tanh-squashed action.
class PolicyNet {
 public:
  static constexpr std::size_t kDefaultHidden = 32;

  PolicyNet() = default;
  PolicyNet(EnvId env, std::size_t hidden = kDefaultHidden, double action_bound = 1.0);

  EnvId env() const noexcept { return env_; }
  std::size_t hidden() const noexcept { return hidden_; }
  double action_bound() const noexcept { return action_bound_; }
  std::size_t input_dim() const noexcept { return obs_scale_.size(); }
  std::size_t output_dim() const noexcept { return action_dim(env_); }
  std::size_t parameter_count() const noexcept;

  std::span<const double> params() const noexcept { return params_; }
  void set_params(std::span<const double> flat);

  Vec64 act(std::span<const double> raw) const;

  // Fixed per-feature input scaling applied before the first layer.
  static Vec64 observation_scale(EnvId env);

  friend bool operator==(const PolicyNet&, const PolicyNet&) = default;

 private:
  EnvId env_ = EnvId::reacher;
  std::size_t hidden_ = kDefaultHidden;
  double action_bound_ = 1.0;
  Vec64 obs_scale_;
  Vec64 params_;  // W1 (hidden x in), b1, W2 (act x hidden), b2
};

enum class PolicyKind {
  scripted_expert,
  random,
  blend,            // expert with probability alpha, uniform random otherwise
  net,
  scripted_failure, // demonstrates a failed attempt
  scripted_half,    // partially succeeds, partially fails
};

struct Policy {
  PolicyKind kind = PolicyKind::scripted_expert;
  double alpha = 1.0;
  std::optional<PolicyNet> net;
  std::uint64_t variant = 0;  // per-demonstration variation of scripted demos

  static Policy expert() { return {}; }
  static Policy uniform_random() { return {PolicyKind::random, 0.0, std::nullopt, 0}; }
  static Policy blended(double alpha);
  static Policy from_net(PolicyNet net) { return {PolicyKind::net, 1.0, std::move(net), 0}; }
  static Policy failure(std::uint64_t variant) {
    return {PolicyKind::scripted_failure, 0.0, std::nullopt, variant};
  }
  static Policy half(std::uint64_t variant) {
    return {PolicyKind::scripted_half, 0.0, std::nullopt, variant};
  }

  Vec64 act(const EnvConfig& cfg, const EnvState& state, std::span<const double> raw,
            Rng& rng) const;
};

// Noise-free scripted expert action for the current state.
Vec64 expert_action(const EnvConfig& cfg, const EnvState& state);

Vec64 random_action(const EnvConfig& cfg, Rng& rng);

}  // namespace preflab
