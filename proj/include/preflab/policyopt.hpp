#pragma once

// Cross-entropy-method policy search against an arbitrary per-transition
// reward, and seeded policy evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preflab/datagen.hpp"
#include "preflab/policy.hpp"
#include "preflab/reward.hpp"

namespace preflab {

// Scores the recorded transitions of one episode.
class RewardFunction {
 public:
  virtual ~RewardFunction() = default;
  virtual double episode_return(std::span<const StepRecord> steps) const = 0;
  virtual std::string name() const = 0;
};

class GroundTruthReward final : public RewardFunction {
 public:
  double episode_return(std::span<const StepRecord> steps) const override;
  std::string name() const override { return "gt"; }
};

class LearnedReward final : public RewardFunction {
 public:
  explicit LearnedReward(RewardModel model) : model_(std::move(model)) {}
  double episode_return(std::span<const StepRecord> steps) const override;
  std::string name() const override { return "learned"; }
  const RewardModel& model() const noexcept { return model_; }

 private:
  RewardModel model_;
};

class ConstantReward final : public RewardFunction {
 public:
  explicit ConstantReward(double value) : value_(value) {}
  double episode_return(std::span<const StepRecord> steps) const override;
  std::string name() const override { return "constant"; }

 private:
  double value_;
};

struct CemConfig {
  int population = 40;
  double elite_frac = 0.2;
  int iterations = 60;
  double init_std = 0.5;
  double std_floor = 0.02;
  int episodes = 3;  // per candidate
  std::size_t hidden = PolicyNet::kDefaultHidden;
  int workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
  int n_elite() const;
};

struct CurvePoint {
  int iter = 0;
  double mean_return = 0.0;
  double max_return = 0.0;
  double stddev_norm = 0.0;
  double elite_mean = 0.0;  // not part of the CSV
};

// Objective of one candidate; the seed is shared by every candidate of an
// iteration (common random numbers).
using CemObjective = std::function<double(std::span<const double> theta, std::uint64_t episode_seed)>;

struct CemSearchResult {
  Vec64 mean;
  std::vector<CurvePoint> curve;
  int discarded = 0;
};

// Maximizes `objective` over R^dim starting from N(0, init_std^2 I).
CemSearchResult cem_search(std::size_t dim, const CemObjective& objective, const CemConfig& cem);

struct CemResult {
  PolicyNet policy;  // mean of the final search distribution
  std::vector<CurvePoint> curve;
  int discarded = 0;  // candidates with non-finite returns
};

CemResult optimize(const EnvConfig& cfg, const RewardFunction& reward, const CemConfig& cem);

void write_curve(std::ostream& out, std::span<const CurvePoint> curve);

struct EvalResult {
  int episodes = 0;
  double mean_return = 0.0;       // under the evaluated reward function
  double mean_true_return = 0.0;  // under the ground truth
  std::optional<double> success_rate;  // undefined for reacher
  double mean_final_distance = 0.0;    // first privileged feature at the last step
};

inline constexpr int kDefaultEvalEpisodes = 100;

EvalResult evaluate(const EnvConfig& cfg, const Policy& policy, const RewardFunction& reward,
                    int n_episodes = kDefaultEvalEpisodes, std::uint64_t seed = 0);

// Policy file: "policy env=<id> hidden=<h> bound=<b>" then the flat parameters.
void write_policy(std::ostream& out, const PolicyNet& net);
PolicyNet read_policy(std::istream& in);

}  // namespace preflab
