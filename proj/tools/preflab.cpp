// preflab: stage-wise preference-learning pipeline and sweeps.
//
//   preflab gen --env feeding --scheme rl_noise --seed 7 --out run
//   preflab prefs --n 2000 --delta 60 --out run
//   preflab train-reward --features raw --net 128-64 --out run
//   preflab train-policy --out run
//   preflab eval --episodes 100 --out run
//   preflab sweep capacity --env feeding --seeds 3 --workers 4 --out cap
//
// Later stages pick up <out>/config.txt, so flags given to gen carry over.
// Precedence: defaults < <out>/config.txt or --config < PREFLAB_SEED < flags.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "preflab/error.hpp"
#include "preflab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace preflab;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out, env, scheme, selection, features, net, preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> n, delta, m, episodes, iterations, population, cem_episodes, workers;
  std::optional<double> val_frac, init_std;
};

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run config file (key=value lines)");
  cmd->add_option("--out", o.out, "artifact directory (default: out)");
  cmd->add_option("--env", o.env, "reacher | feeding | itch");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--scheme", o.scheme, "data generation: rl_noise | checkpoint | tiered");
  cmd->add_option("--selection", o.selection, "delta_pair | all_pairs");
  cmd->add_option("--n", o.n, "number of preference pairs");
  cmd->add_option("--delta", o.delta, "minimum rank gap for delta_pair");
  cmd->add_option("--m", o.m, "all_pairs subset size (0 = auto)");
  cmd->add_option("--val-frac", o.val_frac, "validation fraction");
  cmd->add_option("--features", o.features, "privileged | raw | augmented:<k>");
  cmd->add_option("--net", o.net, "reward architecture: linear | 64 | 128-64 | ...");
  cmd->add_option("--preset", o.preset, "training preset: base | sparse | ladder");
  cmd->add_option("--iterations", o.iterations, "CEM iterations");
  cmd->add_option("--population", o.population, "CEM population");
  cmd->add_option("--cem-episodes", o.cem_episodes, "episodes per CEM candidate");
  cmd->add_option("--init-std", o.init_std, "CEM initial stddev");
  cmd->add_option("--workers", o.workers, "threads for CEM candidate evaluation");
  cmd->add_option("--episodes", o.episodes, "evaluation episodes");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  bool loaded = false;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
    loaded = true;
  } else {
    const fs::path out = o.out ? fs::path(*o.out) : fs::path("out");
    if (fs::exists(out / files::kConfig)) {
      cfg = load_config(out / files::kConfig);
      loaded = true;
    }
  }
  apply_seed_override(cfg);
  if (o.env) {
    const EnvId env = parse_env(*o.env);
    if (env != cfg.env && !loaded) {
      const auto seed = cfg.seed;
      cfg = RunConfig::defaults(env);
      cfg.seed = seed;
    }
    cfg.env = env;
  }
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.scheme) cfg.datagen = parse_datagen(*o.scheme);
  if (o.selection) cfg.selection = parse_selection(*o.selection);
  if (o.n) cfg.n_prefs = *o.n;
  if (o.delta) cfg.delta_pair = *o.delta;
  if (o.m) cfg.m = *o.m;
  if (o.val_frac) cfg.val_frac = *o.val_frac;
  if (o.features) cfg.features = FeatureConfig::parse(*o.features);
  if (o.net) cfg.net = *o.net;
  if (o.preset) cfg.preset = *o.preset;
  if (o.iterations) cfg.cem.iterations = *o.iterations;
  if (o.population) cfg.cem.population = *o.population;
  if (o.cem_episodes) cfg.cem.episodes = *o.cem_episodes;
  if (o.init_std) cfg.cem.init_std = *o.init_std;
  if (o.workers) cfg.cem.workers = *o.workers;
  if (o.episodes) cfg.eval_episodes = *o.episodes;
  cfg.validate();
  return cfg;
}

void print(const Manifest& m, const fs::path& dir) {
  for (const auto& [name, h] : m.outputs) {
    std::cout << m.stage << ": " << (dir / name).string() << " sha256=" << h << '\n';
  }
}

void print_file(const fs::path& p) {
  std::ifstream in(p);
  std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"preference-based reward learning testbed"};
  app.require_subcommand(1);

  Overrides o;
  using StageFn = std::function<Manifest(const RunConfig&)>;
  const std::vector<std::pair<std::string, StageFn>> stages = {
      {"gen", stage_gen},
      {"prefs", stage_prefs},
      {"train-reward", stage_train_reward},
      {"train-policy", stage_train_policy},
      {"eval", stage_eval},
  };
  std::vector<CLI::App*> stage_cmds;
  for (const auto& [name, fn] : stages) {
    auto* cmd = app.add_subcommand(name, "run the " + name + " stage");
    add_run_options(cmd, o);
    stage_cmds.push_back(cmd);
  }
  auto* run_cmd = app.add_subcommand("run", "run every stage in order");
  add_run_options(run_cmd, o);

  SweepOptions sweep;
  std::string sweep_kind, sweep_env = "feeding", sweep_out = "sweep";
  int n_seeds = 3;
  std::uint64_t base_seed = 0;
  std::vector<std::size_t> ks;
  auto* sweep_cmd = app.add_subcommand("sweep", "feature | capacity | datagen sweep");
  sweep_cmd->add_option("kind", sweep_kind, "feature | capacity | datagen")->required();
  sweep_cmd->add_option("--env", sweep_env, "reacher | feeding | itch");
  sweep_cmd->add_option("--seeds", n_seeds, "number of seeds")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", base_seed, "first seed");
  sweep_cmd->add_option("--k", ks, "feature sweep: raw-feature counts (default grid)");
  sweep_cmd->add_option("--workers", sweep.workers, "experiments run in parallel")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep_out, "sweep directory");
  std::optional<int> sweep_iters;
  sweep_cmd->add_option("--iterations", sweep_iters, "CEM iterations (default: per-env preset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      const RunConfig cfg = resolve(o);
      print(stages[i].second(cfg), cfg.out);
      if (stages[i].first == "eval") print_file(cfg.out / files::kReport);
    }
    if (run_cmd->parsed()) {
      const RunConfig cfg = resolve(o);
      for (const auto& m : run_pipeline(cfg)) print(m, cfg.out);
      print_file(cfg.out / files::kReport);
    }
    if (sweep_cmd->parsed()) {
      RunConfig probe;
      probe.seed = base_seed;
      if (apply_seed_override(probe) && !sweep_cmd->count("--seed")) base_seed = probe.seed;
      sweep.kind = parse_sweep(sweep_kind);
      sweep.env = parse_env(sweep_env);
      sweep.seeds.clear();
      for (int s = 0; s < n_seeds; ++s) sweep.seeds.push_back(base_seed + static_cast<std::uint64_t>(s));
      sweep.k_values = ks;
      sweep.out = sweep_out;
      if (sweep_iters) {
        sweep.cem = default_cem(sweep.env);
        sweep.cem->iterations = *sweep_iters;
      }
      const SweepOutcome r = run_sweep(sweep);
      std::cerr << "sweep " << sweep_kind << ": " << r.rows.size() << " rows (" << r.reused
                << " reused, " << r.computed << " computed) -> " << r.report.string() << '\n';
      print_file(r.report);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
