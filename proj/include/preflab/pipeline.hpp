#pragma once

// Stage-wise pipeline behind the command line: a run configuration, one
// function per stage, and SHA-256 manifests chaining the artifacts together.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "preflab/diagnostics.hpp"

namespace preflab {

struct RunConfig {
  EnvId env = EnvId::feeding;
  std::uint64_t seed = 0;
  DatagenScheme datagen = DatagenScheme::rl_noise;
  SelectionScheme selection = SelectionScheme::delta_pair;
  int delta_pair = kDefaultDeltaPair;
  int m = 0;  // all_pairs; 0 = smallest m with C(m,2) >= n_prefs
  int n_prefs = kDefaultPairs;
  double val_frac = kDefaultValFraction;
  FeatureConfig features = FeatureConfig::raw();
  std::string net = "128-64";  // "linear", "64", "128-64", ...
  std::string preset = "base";
  CemConfig cem;
  int eval_episodes = kDefaultEvalEpisodes;
  std::filesystem::path out = "out";

  static RunConfig defaults(EnvId env);

  // key=value, one per line; '#' starts a comment. Keys missing from the
  // text keep their defaults for the given (or default) env.
  static RunConfig parse(const std::string& text);
  std::string to_text() const;

  void validate() const;
  // Hash over every field that influences artifacts (not out / workers).
  std::string hash() const;
  Experiment experiment() const;
};

RunConfig load_config(const std::filesystem::path& path);

// PREFLAB_SEED, when set, replaces the seed. Returns true if it did.
bool apply_seed_override(RunConfig& cfg);

struct Manifest {
  std::string stage;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // file name -> sha256
  std::map<std::string, std::string> outputs;  // file name -> sha256

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Throws IntegrityError unless every output of the stage's manifest under
// `dir` still hashes to the recorded value.
Manifest verify_stage(const std::filesystem::path& dir, const std::string& stage);

namespace files {
inline constexpr const char* kTrajectories = "trajectories.jsonl";
inline constexpr const char* kDataset = "prefs.jsonl";
inline constexpr const char* kModel = "reward.model";
inline constexpr const char* kPrefPolicy = "policy_pref.txt";
inline constexpr const char* kGtPolicy = "policy_gt.txt";
inline constexpr const char* kPrefCurve = "curve_pref.csv";
inline constexpr const char* kGtCurve = "curve_gt.csv";
inline constexpr const char* kReport = "report.csv";
inline constexpr const char* kConfig = "config.txt";
}  // namespace files

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& stage);

// Each stage reads its inputs from cfg.out, checks them against the upstream
// manifest, writes its artifacts plus "<stage>.manifest.json" and returns it.
Manifest stage_gen(const RunConfig& cfg);
Manifest stage_prefs(const RunConfig& cfg);
Manifest stage_train_reward(const RunConfig& cfg);
Manifest stage_train_policy(const RunConfig& cfg);
Manifest stage_eval(const RunConfig& cfg);

// All five stages in order.
std::vector<Manifest> run_pipeline(const RunConfig& cfg);

enum class SweepKind { feature, capacity, datagen };
std::string to_string(SweepKind k);
SweepKind parse_sweep(const std::string& name);

struct SweepOptions {
  SweepKind kind = SweepKind::feature;
  EnvId env = EnvId::feeding;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::size_t> k_values;  // feature sweep; empty = default grid
  std::optional<CemConfig> cem;  // replaces the per-env default for every row
  int workers = 1;
  std::filesystem::path out = "out";
};

std::vector<Experiment> sweep_plan(const SweepOptions& opt);

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::size_t reused = 0;  // rows taken from an earlier, interrupted run
  std::size_t computed = 0;
  std::filesystem::path report;
};

// Resumable: every finished row is stored under out/rows/ with a hash file;
// rerunning skips rows whose record still matches its hash. A record that
// fails the check raises IntegrityError naming the file to delete.
SweepOutcome run_sweep(const SweepOptions& opt);

}  // namespace preflab
