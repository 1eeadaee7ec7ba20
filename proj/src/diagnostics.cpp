#include "preflab/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "preflab/error.hpp"
#include "preflab/hash.hpp"
#include "preflab/rng.hpp"

namespace preflab {

bool confusion_flag(double learned_pref, double learned_gt, double true_pref, double true_gt) {
  return learned_pref > learned_gt && true_pref < true_gt;
}

CrossEval cross_eval(const EnvConfig& cfg, const RewardModel& model, const Policy& pref_policy,
                     const Policy& gt_policy, int n_episodes, std::uint64_t seed) {
  if (model.env != cfg.env) throw InvalidInput("cross_eval: model and environment differ");
  const LearnedReward learned(model);
  const EvalResult p = evaluate(cfg, pref_policy, learned, n_episodes, seed);
  const EvalResult g = evaluate(cfg, gt_policy, learned, n_episodes, seed);
  CrossEval c;
  c.learned_pref = p.mean_return;
  c.learned_gt = g.mean_return;
  c.true_pref = p.mean_true_return;
  c.true_gt = g.mean_true_return;
  c.success_pref = p.success_rate;
  c.success_gt = g.success_rate;
  c.dist_pref = p.mean_final_distance;
  c.dist_gt = g.mean_final_distance;
  c.train_acc = model.report.train_acc;
  c.val_acc = model.report.val_acc;
  c.confusion = confusion_flag(c.learned_pref, c.learned_gt, c.true_pref, c.true_gt);
  return c;
}

bool is_force_feature(const std::string& name) { return name.find("force") != std::string::npos; }

AttributionReport linear_attribution(const RewardModel& model) {
  if (!model.spec.is_linear()) throw InvalidInput("linear_attribution: model is not linear");
  const auto names = model.features.names(model.env);
  const auto w = model.params.layers.at(0).weight.row(0);
  const std::size_t n_priv =
      model.features.mode == FeatureMode::raw_only ? 0 : priv_dim(model.env);
  double total = 0.0;
  for (double v : w) total += std::abs(v);
  AttributionReport rep;
  for (std::size_t i = 0; i < w.size(); ++i) {
    Attribution a;
    a.name = names[i];
    a.index = i;
    a.share = total > 0.0 ? std::abs(w[i]) / total : 0.0;
    a.raw = model.features.mode != FeatureMode::privileged_only && i >= n_priv;
    a.force = is_force_feature(a.name);
    rep.ranking.push_back(a);
  }
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [](const Attribution& a, const Attribution& b) { return a.share > b.share; });
  int seen = 0;
  for (const auto& a : rep.ranking) {
    if (!a.raw) continue;
    if (a.force && a.share > 0.0) rep.force_in_top3_raw = true;
    if (++seen == 3) break;
  }
  return rep;
}

std::string to_string(DatagenScheme s) {
  switch (s) {
    case DatagenScheme::rl_noise: return "rl_noise";
    case DatagenScheme::checkpoint: return "checkpoint";
    case DatagenScheme::tiered: return "tiered";
  }
  return "?";
}

DatagenScheme parse_datagen(const std::string& name) {
  if (name == "rl_noise" || name == "epsilon") return DatagenScheme::rl_noise;
  if (name == "checkpoint" || name == "trex") return DatagenScheme::checkpoint;
  if (name == "tiered") return DatagenScheme::tiered;
  throw InvalidInput("unknown datagen scheme '" + name + "' (rl_noise | checkpoint | tiered)");
}

std::vector<Trajectory> generate(const EnvConfig& cfg, DatagenScheme scheme, std::uint64_t seed) {
  switch (scheme) {
    case DatagenScheme::rl_noise:
      return epsilon_rollouts(cfg, kDefaultEpsilonLevels, kDefaultRolloutsPerLevel, seed);
    case DatagenScheme::checkpoint:
      return checkpoint_rollouts(cfg, kDefaultCheckpointFractions, kDefaultRolloutsPerLevel, seed);
    case DatagenScheme::tiered:
      return tiered_demos(cfg, seed);
  }
  return {};
}

CemConfig default_cem(EnvId env) {
  CemConfig c;
  (void)env;
  c.population = 40;
  c.elite_frac = 0.2;
  c.init_std = 0.15;
  c.std_floor = 0.02;
  c.episodes = 3;
  c.iterations = 150;
  return c;
}

int effective_delta(const Experiment& e, std::size_t population) {
  return std::min(e.delta_pair, static_cast<int>(population / 2));
}

int effective_m(const Experiment& e, std::size_t population) {
  if (e.m > 0) return e.m;
  int m = 2;
  while (m * (m - 1) / 2 < e.n_prefs && static_cast<std::size_t>(m) < population) ++m;
  return m;
}

PreferenceDataset select_preferences(const Experiment& e, std::span<const Trajectory> trajs) {
  const Ranking ranked = rank(trajs);
  PreferenceDataset ds;
  if (e.selection == SelectionScheme::delta_pair) {
    ds = delta_pair_sample(ranked, effective_delta(e, trajs.size()), e.n_prefs,
                           derive_seed(e.seed, {2}));
  } else {
    ds = all_pairs_select(ranked, effective_m(e, trajs.size()), derive_seed(e.seed, {2}));
  }
  split(ds, e.val_frac, derive_seed(e.seed, {3}));
  return ds;
}

std::string SweepRow::key() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%020llu", static_cast<unsigned long long>(seed));
  return env + "|" + condition + "|" + buf;
}

namespace {

std::string cem_key(const EnvConfig& cfg, const CemConfig& c) {
  std::ostringstream s;
  s << cfg.to_text() << '|' << c.population << ',' << format_double(c.elite_frac) << ','
    << c.iterations << ',' << format_double(c.init_std) << ',' << format_double(c.std_floor) << ','
    << c.episodes << ',' << c.hidden << ',' << c.seed;
  return s.str();
}

std::size_t k_raw_of(const FeatureConfig& f, EnvId env) {
  switch (f.mode) {
    case FeatureMode::privileged_only: return 0;
    case FeatureMode::raw_only: return raw_dim(env);
    case FeatureMode::augmented: return f.k;
  }
  return 0;
}

}  // namespace

PolicyNet GtPolicyCache::get(const EnvConfig& cfg, const CemConfig& cem) {
  const std::string key = cem_key(cfg, cem);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  PolicyNet net = optimize(cfg, GroundTruthReward{}, cem).policy;
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(key, std::move(net)).first->second;
}

SweepRow make_row(const Experiment& e, const ExperimentArtifacts& a, const std::string& dataset_hash,
                  const std::string& model_hash) {
  SweepRow r;
  const NetSpec& spec = a.model.spec;
  r.env = to_string(e.env);
  r.condition = e.condition.empty() ? e.features.describe() + "/" + spec.arch_name() : e.condition;
  r.seed = e.seed;
  r.k_raw = k_raw_of(e.features, e.env);
  r.arch = spec.arch_name();
  r.datagen = to_string(e.datagen);
  r.selection = e.selection == SelectionScheme::delta_pair
                    ? "delta_pair(" + std::to_string(effective_delta(e, a.trajectories.size())) + ")"
                    : "all_pairs(" + std::to_string(effective_m(e, a.trajectories.size())) + ")";
  r.n_prefs = a.dataset.pairs.size();
  r.train_acc = a.eval.train_acc;
  r.val_acc = a.eval.val_acc;
  r.mean_true_return = a.eval.true_pref;
  r.success = a.eval.success_pref;
  r.learned_pref = a.eval.learned_pref;
  r.learned_gt = a.eval.learned_gt;
  r.true_pref = a.eval.true_pref;
  r.true_gt = a.eval.true_gt;
  r.confusion = a.eval.confusion;
  r.preset = e.preset;
  r.trajectory_hash = a.dataset.trajectory_hash;
  r.dataset_hash = dataset_hash;
  r.model_hash = model_hash;
  r.dist_pref = a.eval.dist_pref;
  r.dist_gt = a.eval.dist_gt;
  r.success_gt = a.eval.success_gt;
  r.force_in_top3_raw = spec.is_linear() && linear_attribution(a.model).force_in_top3_raw;
  return r;
}

ExperimentArtifacts run_experiment(const Experiment& e, GtPolicyCache& gt_cache) {
  const EnvConfig cfg = EnvConfig::defaults(e.env);
  e.features.validate(e.env);
  ExperimentArtifacts a;
  a.trajectories = generate(cfg, e.datagen, derive_seed(e.seed, {1}));
  a.dataset = select_preferences(e, a.trajectories);

  std::ostringstream traj_text;
  write_trajectories(traj_text, a.trajectories);
  a.dataset.trajectory_hash = sha256_hex(traj_text.str());
  std::ostringstream ds_text;
  write_dataset(ds_text, a.dataset);

  TrainConfig tc = train_preset(e.preset);
  tc.seed = derive_seed(e.seed, {4});
  const NetSpec spec{e.features.input_dim(e.env), e.hidden};
  a.model = train(a.dataset, a.trajectories, e.features, spec, tc);
  std::ostringstream model_text;
  write_model(model_text, a.model);

  CemConfig cem = e.cem;
  cem.seed = derive_seed(e.seed, {5});
  a.pref_policy = optimize(cfg, LearnedReward(a.model), cem).policy;
  a.gt_policy = gt_cache.get(cfg, cem);
  a.eval = cross_eval(cfg, a.model, Policy::from_net(a.pref_policy), Policy::from_net(a.gt_policy),
                      e.eval_episodes, derive_seed(e.seed, {6}));

  a.row = make_row(e, a, sha256_hex(ds_text.str()), sha256_hex(model_text.str()));
  return a;
}

std::vector<SweepRow> run_all(std::span<const Experiment> experiments, int workers,
                              const RowCallback& on_row) {
  std::vector<SweepRow> rows(experiments.size());
  GtPolicyCache cache;
  std::atomic<std::size_t> next{0};
  std::mutex cb_mu;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t i = next++; i < experiments.size(); i = next++) {
      try {
        rows[i] = run_experiment(experiments[i], cache).row;
        if (on_row) {
          std::lock_guard<std::mutex> lock(cb_mu);
          on_row(rows[i]);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(cb_mu);
        if (!error) error = std::current_exception();
        next = experiments.size();
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(experiments.size())));
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  std::sort(rows.begin(), rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.key() < b.key(); });
  return rows;
}

std::vector<std::size_t> default_k_grid(EnvId env) {
  const double n = static_cast<double>(raw_dim(env));
  std::vector<std::size_t> ks;
  for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto k = static_cast<std::size_t>(std::lround(f * n));
    if (ks.empty() || ks.back() != k) ks.push_back(k);
  }
  return ks;
}

namespace {

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

std::vector<Experiment> feature_sweep_plan(EnvId env, std::span<const std::size_t> k_values,
                                           std::span<const std::uint64_t> seeds) {
  std::vector<Experiment> plan;
  for (std::size_t k : k_values) {
    if (k > raw_dim(env)) throw ConfigError("feature sweep: k=" + std::to_string(k) + " exceeds raw dim");
    for (std::uint64_t s : seeds) {
      Experiment e;
      e.env = env;
      e.seed = s;
      e.features = k == 0 ? FeatureConfig::privileged() : FeatureConfig::augmented_with(k);
      e.preset = "sparse";
      e.cem = default_cem(env);
      e.condition = "k=" + padded(k, 2);
      plan.push_back(e);
    }
  }
  return plan;
}

std::vector<Experiment> capacity_sweep_plan(EnvId env, std::span<const std::uint64_t> seeds) {
  std::vector<Experiment> plan;
  const std::vector<FeatureConfig> modes = {FeatureConfig::privileged(),
                                            FeatureConfig::augmented_with(half_raw(env))};
  const auto ladder = capacity_ladder();
  for (const auto& f : modes) {
    for (std::size_t a = 0; a < ladder.size(); ++a) {
      for (std::uint64_t s : seeds) {
        Experiment e;
        e.env = env;
        e.seed = s;
        e.features = f;
        e.hidden = ladder[a].hidden;
        e.preset = "ladder";
        e.cem = default_cem(env);
        e.condition = (f.mode == FeatureMode::privileged_only ? std::string("privileged")
                                                               : std::string("augmented")) +
                      "/" + std::to_string(a) + ":" + ladder[a].arch_name();
        plan.push_back(e);
      }
    }
  }
  return plan;
}

std::vector<Experiment> datagen_plan(EnvId env, std::span<const std::uint64_t> seeds) {
  std::vector<DatagenScheme> schemes = {DatagenScheme::rl_noise, DatagenScheme::checkpoint};
  if (has_success(env)) schemes.push_back(DatagenScheme::tiered);
  std::vector<Experiment> plan;
  for (DatagenScheme d : schemes) {
    for (SelectionScheme sel : {SelectionScheme::delta_pair, SelectionScheme::all_pairs}) {
      for (std::uint64_t s : seeds) {
        Experiment e;
        e.env = env;
        e.seed = s;
        e.datagen = d;
        e.selection = sel;
        e.features = FeatureConfig::augmented_with(half_raw(env));
        e.preset = "ladder";
        e.cem = default_cem(env);
        e.condition = to_string(d) + "/" + to_string(sel);
        plan.push_back(e);
      }
    }
  }
  return plan;
}

std::vector<SweepRow> feature_sweep(EnvId env, std::span<const std::size_t> k_values,
                                    std::span<const std::uint64_t> seeds, int workers) {
  const auto plan = feature_sweep_plan(env, k_values, seeds);
  return run_all(plan, workers);
}

std::vector<SweepRow> capacity_sweep(EnvId env, std::span<const std::uint64_t> seeds, int workers) {
  const auto plan = capacity_sweep_plan(env, seeds);
  return run_all(plan, workers);
}

std::vector<SweepRow> datagen_comparison(EnvId env, std::span<const std::uint64_t> seeds,
                                         int workers) {
  const auto plan = datagen_plan(env, seeds);
  return run_all(plan, workers);
}

const char* const kReportHeader =
    "env,condition,seed,k_raw,arch,datagen,selection,n_prefs,train_acc,val_acc,"
    "mean_true_return,success,learned_pref,learned_gt,true_pref,true_gt,confusion";

std::string report_line(const SweepRow& r) {
  std::ostringstream s;
  s << r.env << ',' << r.condition << ',' << r.seed << ',' << r.k_raw << ',' << r.arch << ','
    << r.datagen << ',' << r.selection << ',' << r.n_prefs << ',' << format_double(r.train_acc)
    << ',' << format_double(r.val_acc) << ',' << format_double(r.mean_true_return) << ','
    << (r.success ? format_double(*r.success) : std::string()) << ','
    << format_double(r.learned_pref) << ',' << format_double(r.learned_gt) << ','
    << format_double(r.true_pref) << ',' << format_double(r.true_gt) << ','
    << (r.confusion ? 1 : 0);
  return s.str();
}

void write_report(std::ostream& out, std::span<const SweepRow> rows) {
  std::vector<const SweepRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const SweepRow* a, const SweepRow* b) { return a->key() < b->key(); });
  out << kReportHeader << '\n';
  for (const auto* r : sorted) out << report_line(*r) << '\n';
  if (!out) throw IoError("failed writing report");
}

std::string row_json(const SweepRow& r) {
  nlohmann::ordered_json j;
  j["env"] = r.env;
  j["condition"] = r.condition;
  j["seed"] = r.seed;
  j["k_raw"] = r.k_raw;
  j["arch"] = r.arch;
  j["datagen"] = r.datagen;
  j["selection"] = r.selection;
  j["n_prefs"] = r.n_prefs;
  // doubles go through %.17g strings so rows round-trip bit-exactly
  auto num = [](double v) { return format_double(v); };
  j["train_acc"] = num(r.train_acc);
  j["val_acc"] = num(r.val_acc);
  j["mean_true_return"] = num(r.mean_true_return);
  j["success"] = r.success ? nlohmann::ordered_json(num(*r.success)) : nlohmann::ordered_json();
  j["learned_pref"] = num(r.learned_pref);
  j["learned_gt"] = num(r.learned_gt);
  j["true_pref"] = num(r.true_pref);
  j["true_gt"] = num(r.true_gt);
  j["confusion"] = r.confusion;
  j["preset"] = r.preset;
  j["trajectory_hash"] = r.trajectory_hash;
  j["dataset_hash"] = r.dataset_hash;
  j["model_hash"] = r.model_hash;
  j["dist_pref"] = num(r.dist_pref);
  j["dist_gt"] = num(r.dist_gt);
  j["success_gt"] = r.success_gt ? nlohmann::ordered_json(num(*r.success_gt)) : nlohmann::ordered_json();
  j["force_in_top3_raw"] = r.force_in_top3_raw;
  return j.dump();
}

SweepRow parse_row_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto num = [&](const char* k) { return std::stod(j.at(k).get<std::string>()); };
    auto opt = [&](const char* k) -> std::optional<double> {
      if (j.at(k).is_null()) return std::nullopt;
      return std::stod(j.at(k).get<std::string>());
    };
    SweepRow r;
    r.env = j.at("env").get<std::string>();
    r.condition = j.at("condition").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k_raw = j.at("k_raw").get<std::size_t>();
    r.arch = j.at("arch").get<std::string>();
    r.datagen = j.at("datagen").get<std::string>();
    r.selection = j.at("selection").get<std::string>();
    r.n_prefs = j.at("n_prefs").get<std::size_t>();
    r.train_acc = num("train_acc");
    r.val_acc = num("val_acc");
    r.mean_true_return = num("mean_true_return");
    r.success = opt("success");
    r.learned_pref = num("learned_pref");
    r.learned_gt = num("learned_gt");
    r.true_pref = num("true_pref");
    r.true_gt = num("true_gt");
    r.confusion = j.at("confusion").get<bool>();
    r.preset = j.at("preset").get<std::string>();
    r.trajectory_hash = j.at("trajectory_hash").get<std::string>();
    r.dataset_hash = j.at("dataset_hash").get<std::string>();
    r.model_hash = j.at("model_hash").get<std::string>();
    r.dist_pref = num("dist_pref");
    r.dist_gt = num("dist_gt");
    r.success_gt = opt("success_gt");
    r.force_in_top3_raw = j.at("force_in_top3_raw").get<bool>();
    return r;
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("sweep row record: ") + e.what());
  }
}

}  // namespace preflab
