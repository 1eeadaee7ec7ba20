#include "preflab/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "preflab/error.hpp"
#include "preflab/hash.hpp"
#include "preflab/rng.hpp"

namespace fs = std::filesystem;

namespace preflab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Writes via a temporary file so a reader never sees half a file.
void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, p);
}

// shortest text that reads back to the same double
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string config_text(const RunConfig& c, bool runtime_fields) {
  std::ostringstream s;
  s << "env=" << to_string(c.env) << '\n'
    << "seed=" << c.seed << '\n'
    << "datagen=" << to_string(c.datagen) << '\n'
    << "selection=" << to_string(c.selection) << '\n'
    << "delta_pair=" << c.delta_pair << '\n'
    << "m=" << c.m << '\n'
    << "n_prefs=" << c.n_prefs << '\n'
    << "val_frac=" << num(c.val_frac) << '\n'
    << "features=" << c.features.describe() << '\n'
    << "net=" << c.net << '\n'
    << "preset=" << c.preset << '\n'
    << "cem.population=" << c.cem.population << '\n'
    << "cem.elite_frac=" << num(c.cem.elite_frac) << '\n'
    << "cem.iterations=" << c.cem.iterations << '\n'
    << "cem.init_std=" << num(c.cem.init_std) << '\n'
    << "cem.std_floor=" << num(c.cem.std_floor) << '\n'
    << "cem.episodes=" << c.cem.episodes << '\n'
    << "cem.hidden=" << c.cem.hidden << '\n'
    << "eval_episodes=" << c.eval_episodes << '\n';
  if (runtime_fields) s << "cem.workers=" << c.cem.workers << '\n' << "out=" << c.out.string() << '\n';
  return s.str();
}

}  // namespace

RunConfig RunConfig::defaults(EnvId env) {
  RunConfig c;
  c.env = env;
  c.cem = default_cem(env);
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected key=value");
    }
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  EnvId env = EnvId::feeding;
  for (const auto& [k, v] : kv) {
    if (k == "env") env = parse_env(v);
  }
  RunConfig c = defaults(env);
  std::set<std::string> seen;
  for (const auto& [key, value] : kv) {
    if (!seen.insert(key).second) throw InvalidInput("config: duplicate key '" + key + "'");
    try {
      if (key == "env") continue;
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "datagen") c.datagen = parse_datagen(value);
      else if (key == "selection") c.selection = parse_selection(value);
      else if (key == "delta_pair") c.delta_pair = std::stoi(value);
      else if (key == "m") c.m = std::stoi(value);
      else if (key == "n_prefs") c.n_prefs = std::stoi(value);
      else if (key == "val_frac") c.val_frac = std::stod(value);
      else if (key == "features") c.features = FeatureConfig::parse(value);
      else if (key == "net") c.net = value;
      else if (key == "preset") c.preset = value;
      else if (key == "cem.population") c.cem.population = std::stoi(value);
      else if (key == "cem.elite_frac") c.cem.elite_frac = std::stod(value);
      else if (key == "cem.iterations") c.cem.iterations = std::stoi(value);
      else if (key == "cem.init_std") c.cem.init_std = std::stod(value);
      else if (key == "cem.std_floor") c.cem.std_floor = std::stod(value);
      else if (key == "cem.episodes") c.cem.episodes = std::stoi(value);
      else if (key == "cem.hidden") c.cem.hidden = std::stoul(value);
      else if (key == "cem.workers") c.cem.workers = std::stoi(value);
      else if (key == "eval_episodes") c.eval_episodes = std::stoi(value);
      else if (key == "out") c.out = value;
      else throw InvalidInput("config: unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw InvalidInput("config: bad value for '" + key + "': '" + value + "'");
    }
  }
  return c;
}

std::string RunConfig::to_text() const { return config_text(*this, true); }

void RunConfig::validate() const {
  features.validate(env);
  (void)NetSpec::parse_arch(net);
  (void)train_preset(preset);
  cem.validate();
  if (datagen == DatagenScheme::tiered && !has_success(env)) {
    throw ConfigError("tiered demonstrations need a task with success (not " + to_string(env) + ")");
  }
  if (delta_pair < 0) throw ConfigError("delta_pair must be >= 0");
  if (m < 0 || m == 1) throw ConfigError("m must be 0 (auto) or >= 2");
  if (n_prefs < 1) throw ConfigError("n_prefs must be >= 1");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw ConfigError("val_frac must be in [0,1)");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
}

std::string RunConfig::hash() const { return sha256_hex(config_text(*this, false)); }

Experiment RunConfig::experiment() const {
  Experiment e;
  e.env = env;
  e.seed = seed;
  e.datagen = datagen;
  e.selection = selection;
  e.delta_pair = delta_pair;
  e.m = m;
  e.n_prefs = n_prefs;
  e.val_frac = val_frac;
  e.features = features;
  e.hidden = NetSpec::parse_arch(net);
  e.preset = preset;
  e.cem = cem;
  e.eval_episodes = eval_episodes;
  return e;
}

RunConfig load_config(const fs::path& path) { return RunConfig::parse(read_text(path)); }

bool apply_seed_override(RunConfig& cfg) {
  const char* v = std::getenv("PREFLAB_SEED");
  if (!v || !*v) return false;
  try {
    std::size_t used = 0;
    const std::string s(v);
    const auto seed = std::stoull(s, &used);
    if (used != s.size()) throw InvalidInput("");
    cfg.seed = seed;
  } catch (const std::exception&) {
    throw InvalidInput(std::string("PREFLAB_SEED is not an unsigned integer: '") + v + "'");
  }
  return true;
}

// ---- manifests

void write_manifest(const fs::path& path, const Manifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["config_hash"] = m.config_hash;
  j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.inputs) j["inputs"][k] = v;
  j["outputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.outputs) j["outputs"][k] = v;
  write_text(path, j.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing manifest " + path.string() + " (run the earlier stage first)");
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [k, v] : j.at("inputs").items()) m.inputs[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("outputs").items()) m.outputs[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

fs::path manifest_path(const fs::path& dir, const std::string& stage) {
  return dir / (stage + ".manifest.json");
}

Manifest verify_stage(const fs::path& dir, const std::string& stage) {
  const Manifest m = read_manifest(manifest_path(dir, stage));
  if (m.stage != stage) throw IntegrityError("manifest for '" + stage + "' names stage '" + m.stage + "'");
  for (const auto& [name, expected] : m.outputs) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw IoError("missing artifact " + p.string() + " (re-run stage " + stage + ")");
    const std::string got = sha256_file(p);
    if (got != expected) {
      throw IntegrityError(p.string() + ": hash " + got + " does not match manifest " + expected +
                           " (re-run stage " + stage + ")");
    }
  }
  return m;
}

// ---- stages

namespace {

Manifest start(const RunConfig& cfg, const std::string& stage) {
  cfg.validate();
  fs::create_directories(cfg.out);
  Manifest m;
  m.stage = stage;
  m.config_hash = cfg.hash();
  return m;
}

std::string put(const RunConfig& cfg, Manifest& m, const std::string& name, const std::string& text) {
  write_text(cfg.out / name, text);
  const std::string h = sha256_hex(text);
  m.outputs[name] = h;
  return h;
}

void finish(const RunConfig& cfg, const Manifest& m) {
  write_text(cfg.out / files::kConfig, cfg.to_text());
  write_manifest(manifest_path(cfg.out, m.stage), m);
}

std::string output_of(const Manifest& m, const std::string& name) {
  const auto it = m.outputs.find(name);
  if (it == m.outputs.end()) throw IntegrityError("manifest '" + m.stage + "' does not list " + name);
  return it->second;
}

std::vector<Trajectory> load_trajectories(const RunConfig& cfg, Manifest& m) {
  const Manifest gen = verify_stage(cfg.out, "gen");
  m.inputs[files::kTrajectories] = output_of(gen, files::kTrajectories);
  std::ifstream in(cfg.out / files::kTrajectories);
  auto trajs = read_trajectories(in);
  const EnvConfig env_cfg = EnvConfig::defaults(cfg.env);
  for (const auto& t : trajs) {
    if (t.env != cfg.env) {
      throw ConfigError("trajectory store holds " + to_string(t.env) + " data, config says " +
                        to_string(cfg.env));
    }
    check_trajectory(env_cfg, t);
  }
  return trajs;
}

PreferenceDataset load_dataset(const RunConfig& cfg, Manifest& m) {
  const Manifest pm = verify_stage(cfg.out, "prefs");
  m.inputs[files::kDataset] = output_of(pm, files::kDataset);
  std::ifstream in(cfg.out / files::kDataset);
  auto ds = read_dataset(in);
  const auto traj_hash = m.inputs.at(files::kTrajectories);
  if (ds.trajectory_hash != traj_hash) {
    throw IntegrityError("preference dataset was built from trajectories " + ds.trajectory_hash +
                         ", store is " + traj_hash + " (re-run prefs)");
  }
  return ds;
}

RewardModel load_model(const RunConfig& cfg, Manifest& m) {
  const Manifest rm = verify_stage(cfg.out, "train-reward");
  m.inputs[files::kModel] = output_of(rm, files::kModel);
  if (rm.inputs.at(files::kDataset) != m.inputs.at(files::kDataset)) {
    throw IntegrityError("reward model was trained on a different dataset (re-run train-reward)");
  }
  std::ifstream in(cfg.out / files::kModel);
  RewardModel model = read_model(in);
  if (model.env != cfg.env) throw ConfigError("reward model is for " + to_string(model.env));
  return model;
}

PolicyNet load_policy(const RunConfig& cfg, const std::string& name) {
  std::ifstream in(cfg.out / name);
  if (!in) throw IoError("cannot open " + (cfg.out / name).string());
  return read_policy(in);
}

}  // namespace

Manifest stage_gen(const RunConfig& cfg) {
  Manifest m = start(cfg, "gen");
  const Experiment e = cfg.experiment();
  const auto trajs = generate(EnvConfig::defaults(cfg.env), cfg.datagen, derive_seed(e.seed, {1}));
  std::ostringstream s;
  write_trajectories(s, trajs);
  put(cfg, m, files::kTrajectories, s.str());
  finish(cfg, m);
  return m;
}

Manifest stage_prefs(const RunConfig& cfg) {
  Manifest m = start(cfg, "prefs");
  const auto trajs = load_trajectories(cfg, m);
  PreferenceDataset ds = select_preferences(cfg.experiment(), trajs);
  ds.trajectory_hash = m.inputs.at(files::kTrajectories);
  std::ostringstream s;
  write_dataset(s, ds);
  put(cfg, m, files::kDataset, s.str());
  finish(cfg, m);
  return m;
}

Manifest stage_train_reward(const RunConfig& cfg) {
  Manifest m = start(cfg, "train-reward");
  const auto trajs = load_trajectories(cfg, m);
  const auto ds = load_dataset(cfg, m);
  const Experiment e = cfg.experiment();
  TrainConfig tc = train_preset(e.preset);
  tc.seed = derive_seed(e.seed, {4});
  const NetSpec spec{e.features.input_dim(e.env), e.hidden};
  const RewardModel model = train(ds, trajs, e.features, spec, tc);
  std::ostringstream s;
  write_model(s, model);
  put(cfg, m, files::kModel, s.str());
  finish(cfg, m);
  return m;
}

Manifest stage_train_policy(const RunConfig& cfg) {
  Manifest m = start(cfg, "train-policy");
  load_trajectories(cfg, m);
  load_dataset(cfg, m);
  const RewardModel model = load_model(cfg, m);
  const EnvConfig env_cfg = EnvConfig::defaults(cfg.env);
  CemConfig cem = cfg.cem;
  cem.seed = derive_seed(cfg.seed, {5});

  const CemResult pref = optimize(env_cfg, LearnedReward(model), cem);
  const CemResult gt = optimize(env_cfg, GroundTruthReward{}, cem);
  auto emit_policy = [&](const char* name, const PolicyNet& net) {
    std::ostringstream s;
    write_policy(s, net);
    put(cfg, m, name, s.str());
  };
  auto emit_curve = [&](const char* name, const CemResult& r) {
    std::ostringstream s;
    write_curve(s, r.curve);
    put(cfg, m, name, s.str());
  };
  emit_policy(files::kPrefPolicy, pref.policy);
  emit_policy(files::kGtPolicy, gt.policy);
  emit_curve(files::kPrefCurve, pref);
  emit_curve(files::kGtCurve, gt);
  finish(cfg, m);
  return m;
}

Manifest stage_eval(const RunConfig& cfg) {
  Manifest m = start(cfg, "eval");
  const Experiment e = cfg.experiment();
  ExperimentArtifacts a;
  a.trajectories = load_trajectories(cfg, m);
  a.dataset = load_dataset(cfg, m);
  a.model = load_model(cfg, m);
  const Manifest pm = verify_stage(cfg.out, "train-policy");
  if (pm.inputs.at(files::kModel) != m.inputs.at(files::kModel)) {
    throw IntegrityError("policies were optimized against a different reward model (re-run train-policy)");
  }
  for (const char* name : {files::kPrefPolicy, files::kGtPolicy}) m.inputs[name] = output_of(pm, name);
  a.pref_policy = load_policy(cfg, files::kPrefPolicy);
  a.gt_policy = load_policy(cfg, files::kGtPolicy);
  a.eval = cross_eval(EnvConfig::defaults(cfg.env), a.model, Policy::from_net(a.pref_policy),
                      Policy::from_net(a.gt_policy), e.eval_episodes, derive_seed(e.seed, {6}));
  const SweepRow row =
      make_row(e, a, m.inputs.at(files::kDataset), m.inputs.at(files::kModel));
  std::ostringstream s;
  write_report(s, std::span<const SweepRow>(&row, 1));
  put(cfg, m, files::kReport, s.str());
  finish(cfg, m);
  return m;
}

std::vector<Manifest> run_pipeline(const RunConfig& cfg) {
  return {stage_gen(cfg), stage_prefs(cfg), stage_train_reward(cfg), stage_train_policy(cfg),
          stage_eval(cfg)};
}

// ---- sweeps

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::feature: return "feature";
    case SweepKind::capacity: return "capacity";
    case SweepKind::datagen: return "datagen";
  }
  return "?";
}

SweepKind parse_sweep(const std::string& name) {
  if (name == "feature") return SweepKind::feature;
  if (name == "capacity") return SweepKind::capacity;
  if (name == "datagen") return SweepKind::datagen;
  throw ConfigError("unknown sweep kind '" + name + "' (feature, capacity, datagen)");
}

std::vector<Experiment> sweep_plan(const SweepOptions& opt) {
  if (opt.seeds.empty()) throw ConfigError("sweep: no seeds");
  std::vector<Experiment> plan;
  switch (opt.kind) {
    case SweepKind::feature: {
      const auto ks = opt.k_values.empty() ? default_k_grid(opt.env) : opt.k_values;
      plan = feature_sweep_plan(opt.env, ks, opt.seeds);
      break;
    }
    case SweepKind::capacity: plan = capacity_sweep_plan(opt.env, opt.seeds); break;
    case SweepKind::datagen: plan = datagen_plan(opt.env, opt.seeds); break;
  }
  if (opt.cem) {
    opt.cem->validate();
    for (auto& e : plan) e.cem = *opt.cem;
  }
  return plan;
}

namespace {

std::string row_file_stem(const std::string& key) {
  std::string s = key;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_')) c = '_';
  }
  return s;
}

std::string row_key(const Experiment& e) {
  SweepRow r;
  r.env = to_string(e.env);
  r.condition = e.condition;
  r.seed = e.seed;
  return r.key();
}

std::string sweep_text(const SweepOptions& opt, std::span<const Experiment> plan) {
  std::ostringstream s;
  s << "kind=" << to_string(opt.kind) << "\nenv=" << to_string(opt.env) << "\n";
  if (!plan.empty()) {
    const CemConfig& c = plan.front().cem;
    s << "cem=" << c.population << ',' << num(c.elite_frac) << ',' << c.iterations << ','
      << num(c.init_std) << ',' << num(c.std_floor) << ',' << c.episodes << ',' << c.hidden << '\n';
  }
  s << "rows=";
  for (std::size_t i = 0; i < plan.size(); ++i) s << (i ? "," : "") << row_key(plan[i]);
  s << '\n';
  return s.str();
}

}  // namespace

SweepOutcome run_sweep(const SweepOptions& opt) {
  const auto plan = sweep_plan(opt);
  for (const auto& e : plan) {
    if (e.condition.empty()) throw ConfigError("sweep plan row without a condition label");
  }
  const fs::path rows_dir = opt.out / "rows";
  fs::create_directories(rows_dir);

  const fs::path plan_file = opt.out / "sweep.txt";
  const std::string plan_text = sweep_text(opt, plan);
  if (fs::exists(plan_file) && read_text(plan_file) != plan_text) {
    throw ConfigError(opt.out.string() + " holds a different sweep; use a fresh --out directory");
  }
  write_text(plan_file, plan_text);

  SweepOutcome outcome;
  std::vector<Experiment> todo;
  for (const auto& e : plan) {
    const std::string stem = row_file_stem(row_key(e));
    const fs::path row_path = rows_dir / (stem + ".json");
    const fs::path hash_path = rows_dir / (stem + ".sha256");
    if (!fs::exists(row_path)) {
      todo.push_back(e);
      continue;
    }
    const std::string text = read_text(row_path);
    const std::string want = fs::exists(hash_path) ? trim(read_text(hash_path)) : std::string();
    if (sha256_hex(text) != want) {
      throw IntegrityError(row_path.string() + " does not match its recorded hash; delete it and " +
                           hash_path.filename().string() + " and re-run the sweep");
    }
    SweepRow row = parse_row_json(text);
    if (row.key() != row_key(e)) {
      throw IntegrityError(row_path.string() + " holds row " + row.key() + "; delete it and re-run");
    }
    outcome.rows.push_back(std::move(row));
    ++outcome.reused;
  }

  // hash first, then the record: a record on disk always has its hash
  auto save = [&](const SweepRow& row) {
    const std::string text = row_json(row);
    const std::string stem = row_file_stem(row.key());
    write_text(rows_dir / (stem + ".sha256"), sha256_hex(text) + "\n");
    write_text(rows_dir / (stem + ".json"), text);
  };
  auto fresh = run_all(todo, opt.workers, save);
  outcome.computed = fresh.size();
  for (auto& r : fresh) outcome.rows.push_back(std::move(r));
  std::sort(outcome.rows.begin(), outcome.rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.key() < b.key(); });

  std::ostringstream report;
  write_report(report, outcome.rows);
  outcome.report = opt.out / files::kReport;
  Manifest m;
  m.stage = "sweep";
  m.config_hash = sha256_hex(plan_text);
  write_text(outcome.report, report.str());
  m.outputs[files::kReport] = sha256_hex(report.str());
  for (const auto& r : outcome.rows) {
    const std::string stem = row_file_stem(r.key());
    m.inputs["rows/" + stem + ".json"] = sha256_hex(row_json(r));
  }
  write_manifest(manifest_path(opt.out, "sweep"), m);
  return outcome;
}

}  // namespace preflab
