#pragma once

// Bradley-Terry reward learning: a per-step network whose summed outputs are
// the trajectory logits compared by pairwise preferences.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "preflab/datagen.hpp"
#include "preflab/numerics.hpp"
#include "preflab/prefs.hpp"

namespace preflab {

enum class FeatureMode { privileged_only, raw_only, augmented };

struct FeatureConfig {
  FeatureMode mode = FeatureMode::privileged_only;
  std::size_t k = 0;  // raw features appended in augmented mode

  static FeatureConfig privileged() { return {FeatureMode::privileged_only, 0}; }
  static FeatureConfig raw() { return {FeatureMode::raw_only, 0}; }
  static FeatureConfig augmented_with(std::size_t k) { return {FeatureMode::augmented, k}; }

  void validate(EnvId env) const;
  std::size_t input_dim(EnvId env) const;
  std::vector<std::string> names(EnvId env) const;
  // Writes input_dim(env) values into out.
  void extract(std::span<const double> raw, std::span<const double> priv, double* out) const;

  // "privileged", "raw", "augmented:<k>"
  std::string describe() const;
  static FeatureConfig parse(const std::string& text);

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

std::string to_string(FeatureMode mode);

// Half of the raw observation used by the capacity and data-collection
// studies: reacher 5, feeding 10, itch 15.
std::size_t half_raw(EnvId env);

// Per-feature standardization fitted on the training trajectories.
struct Normalizer {
  Vec64 mean;
  Vec64 scale;

  static Normalizer identity(std::size_t dim);
  void apply(double* x) const;
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct TrainReport {
  int epochs = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
};

struct RewardModel {
  EnvId env = EnvId::reacher;
  FeatureConfig features;
  Normalizer norm;
  NetSpec spec;
  NetParams params;
  TrainReport report;

  // Model output for one transition.
  double step_reward(std::span<const double> raw, std::span<const double> priv) const;
  // Model outputs for every step, one batched pass.
  Vec64 step_rewards(std::span<const StepRecord> steps) const;
};

double traj_return_logit(const RewardModel& model, const Trajectory& traj);

// P(a < b) = exp(r_b) / (exp(r_a) + exp(r_b)), overflow safe.
double pref_prob_logits(double logit_a, double logit_b);
double pref_prob(const RewardModel& model, const Trajectory& a, const Trajectory& b);

struct TrainConfig {
  OptConfig opt;
  int max_epochs = 100;
  int patience = 10;
  std::size_t batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;

  void validate() const;
};

// Named regularization presets: "base" (wd 0.01), "sparse" (l1 0.1),
// "ladder" (wd 0.01, l1 0.01).
TrainConfig train_preset(const std::string& name);
const std::vector<std::string>& train_preset_names();

// Stacked per-step features of a set of trajectories, with the pair index
// lists used by the loss. Exposed for loss-level gradient checks.
struct PairProblem {
  NetSpec spec;
  Mat64 x;                          // one normalized row per step
  std::vector<std::size_t> offset;  // first row of trajectory t
  std::vector<std::size_t> length;  // rows of trajectory t
  std::vector<std::pair<std::size_t, std::size_t>> train;  // (worse, better) trajectory indices
  std::vector<std::pair<std::size_t, std::size_t>> val;
};

PairProblem build_problem(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                          const FeatureConfig& features, const Normalizer& norm,
                          const NetSpec& spec);

// Mean negative log-likelihood over `pairs`; accumulates its gradient into
// *g when g is non-null.
double pair_loss(const PairProblem& problem, const NetParams& params,
                 std::span<const std::pair<std::size_t, std::size_t>> pairs, NetParams* g);

Normalizer fit_normalizer(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                          const FeatureConfig& features);

RewardModel train(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                  const FeatureConfig& features, const NetSpec& spec, const TrainConfig& config);

// Fraction of pairs of `split` ordered correctly by the model; ties count 0.5.
double pairwise_accuracy(const RewardModel& model, const PreferenceDataset& dataset,
                         std::span<const Trajectory> store, Split split);

// linear, (64), (128), (64,64), (128,64), (128,128), (256,128), (256,256)
std::vector<NetSpec> capacity_ladder(std::size_t input_dim = 0);

// Model file: feature/normalizer/report lines followed by the checkpoint.
void write_model(std::ostream& out, const RewardModel& model);
RewardModel read_model(std::istream& in);

}  // namespace preflab
