#pragma once

// Causal-confusion evidence: cross-reward evaluation of PREF and GT policies,
// linear weight attribution, and the feature / capacity / data-collection
// sweeps built from single pipeline runs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "preflab/datagen.hpp"
#include "preflab/policyopt.hpp"
#include "preflab/prefs.hpp"
#include "preflab/reward.hpp"

namespace preflab {

struct CrossEval {
  double learned_pref = 0.0;  // learned reward of the PREF policy
  double learned_gt = 0.0;
  double true_pref = 0.0;
  double true_gt = 0.0;
  std::optional<double> success_pref;
  std::optional<double> success_gt;
  double dist_pref = 0.0;  // mean final first privileged feature
  double dist_gt = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  bool confusion = false;
};

// Learned reward strictly prefers PREF while the true reward strictly prefers GT.
bool confusion_flag(double learned_pref, double learned_gt, double true_pref, double true_gt);

CrossEval cross_eval(const EnvConfig& cfg, const RewardModel& model, const Policy& pref_policy,
                     const Policy& gt_policy, int n_episodes = kDefaultEvalEpisodes,
                     std::uint64_t seed = 0);

struct Attribution {
  std::string name;
  std::size_t index = 0;
  double share = 0.0;  // |w_i| / sum |w_j|
  bool raw = false;
  bool force = false;
};

struct AttributionReport {
  std::vector<Attribution> ranking;  // descending share
  bool force_in_top3_raw = false;
};

bool is_force_feature(const std::string& name);
AttributionReport linear_attribution(const RewardModel& model);

enum class DatagenScheme { rl_noise, checkpoint, tiered };
std::string to_string(DatagenScheme s);
DatagenScheme parse_datagen(const std::string& name);

std::vector<Trajectory> generate(const EnvConfig& cfg, DatagenScheme scheme, std::uint64_t seed);

// One end-to-end run: data -> preferences -> reward -> PREF policy -> eval.
struct Experiment {
  EnvId env = EnvId::feeding;
  std::uint64_t seed = 0;
  DatagenScheme datagen = DatagenScheme::rl_noise;
  SelectionScheme selection = SelectionScheme::delta_pair;
  int delta_pair = kDefaultDeltaPair;  // clamped to half the population when larger
  int m = 0;                           // all_pairs: 0 picks the smallest m with C(m,2) >= n_prefs
  int n_prefs = kDefaultPairs;
  double val_frac = kDefaultValFraction;
  FeatureConfig features;
  std::vector<std::size_t> hidden;  // reward architecture
  std::string preset = "base";
  CemConfig cem;
  int eval_episodes = kDefaultEvalEpisodes;

  std::string condition;  // free-form label used in reports
};

CemConfig default_cem(EnvId env);

// Returns the effective (delta_pair, m) used for a population of n trajectories.
int effective_delta(const Experiment& e, std::size_t population);
int effective_m(const Experiment& e, std::size_t population);

PreferenceDataset select_preferences(const Experiment& e, std::span<const Trajectory> trajs);

struct SweepRow {
  std::string env;
  std::string condition;
  std::uint64_t seed = 0;
  std::size_t k_raw = 0;
  std::string arch;
  std::string datagen;
  std::string selection;
  std::size_t n_prefs = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double mean_true_return = 0.0;
  std::optional<double> success;
  double learned_pref = 0.0;
  double learned_gt = 0.0;
  double true_pref = 0.0;
  double true_gt = 0.0;
  bool confusion = false;

  // provenance, kept out of the CSV
  std::string preset;
  std::string trajectory_hash;
  std::string dataset_hash;
  std::string model_hash;
  double dist_pref = 0.0;
  double dist_gt = 0.0;
  std::optional<double> success_gt;
  bool force_in_top3_raw = false;

  std::string key() const;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// GT policies are shared by every condition with the same (env, seed, cem).
class GtPolicyCache {
 public:
  PolicyNet get(const EnvConfig& cfg, const CemConfig& cem);

 private:
  std::mutex mu_;
  std::map<std::string, PolicyNet> cache_;
};

struct ExperimentArtifacts {
  std::vector<Trajectory> trajectories;
  PreferenceDataset dataset;
  RewardModel model;
  PolicyNet pref_policy;
  PolicyNet gt_policy;
  CrossEval eval;
  SweepRow row;
};

// Report row for finished artifacts (trajectories, dataset, model, eval).
SweepRow make_row(const Experiment& e, const ExperimentArtifacts& a, const std::string& dataset_hash,
                  const std::string& model_hash);

ExperimentArtifacts run_experiment(const Experiment& e, GtPolicyCache& gt_cache);

using RowCallback = std::function<void(const SweepRow&)>;

// Runs experiments on `workers` threads; rows come back sorted by key.
std::vector<SweepRow> run_all(std::span<const Experiment> experiments, int workers,
                              const RowCallback& on_row = {});

std::vector<std::size_t> default_k_grid(EnvId env);

std::vector<Experiment> feature_sweep_plan(EnvId env, std::span<const std::size_t> k_values,
                                           std::span<const std::uint64_t> seeds);
std::vector<Experiment> capacity_sweep_plan(EnvId env, std::span<const std::uint64_t> seeds);
std::vector<Experiment> datagen_plan(EnvId env, std::span<const std::uint64_t> seeds);

std::vector<SweepRow> feature_sweep(EnvId env, std::span<const std::size_t> k_values,
                                    std::span<const std::uint64_t> seeds, int workers = 1);
std::vector<SweepRow> capacity_sweep(EnvId env, std::span<const std::uint64_t> seeds,
                                     int workers = 1);
std::vector<SweepRow> datagen_comparison(EnvId env, std::span<const std::uint64_t> seeds,
                                         int workers = 1);

// env,condition,seed,k_raw,arch,datagen,selection,n_prefs,train_acc,val_acc,
// mean_true_return,success,learned_pref,learned_gt,true_pref,true_gt,confusion
extern const char* const kReportHeader;
std::string report_line(const SweepRow& row);
void write_report(std::ostream& out, std::span<const SweepRow> rows);

// Row record with provenance, one JSON object (used for resumable sweeps).
std::string row_json(const SweepRow& row);
SweepRow parse_row_json(const std::string& text);

}  // namespace preflab
