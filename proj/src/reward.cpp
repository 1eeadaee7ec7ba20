#include "preflab/reward.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

std::string to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::privileged_only: return "privileged";
    case FeatureMode::raw_only: return "raw";
    case FeatureMode::augmented: return "augmented";
  }
  return "?";
}

void FeatureConfig::validate(EnvId env) const {
  if (mode == FeatureMode::augmented && k > raw_dim(env)) {
    throw ConfigError("augmented features: k=" + std::to_string(k) + " exceeds raw dim " +
                      std::to_string(raw_dim(env)));
  }
}

std::size_t FeatureConfig::input_dim(EnvId env) const {
  switch (mode) {
    case FeatureMode::privileged_only: return priv_dim(env);
    case FeatureMode::raw_only: return raw_dim(env);
    case FeatureMode::augmented: return priv_dim(env) + k;
  }
  return 0;
}

std::vector<std::string> FeatureConfig::names(EnvId env) const {
  const auto& raw = raw_feature_names(env);
  const auto& priv = priv_feature_names(env);
  switch (mode) {
    case FeatureMode::privileged_only: return priv;
    case FeatureMode::raw_only: return raw;
    case FeatureMode::augmented: {
      auto out = priv;
      out.insert(out.end(), raw.begin(), raw.begin() + static_cast<long>(k));
      return out;
    }
  }
  return {};
}

void FeatureConfig::extract(std::span<const double> raw, std::span<const double> priv,
                            double* out) const {
  switch (mode) {
    case FeatureMode::privileged_only:
      std::copy(priv.begin(), priv.end(), out);
      return;
    case FeatureMode::raw_only:
      std::copy(raw.begin(), raw.end(), out);
      return;
    case FeatureMode::augmented:
      out = std::copy(priv.begin(), priv.end(), out);
      std::copy(raw.begin(), raw.begin() + static_cast<long>(k), out);
      return;
  }
}

std::string FeatureConfig::describe() const {
  if (mode == FeatureMode::augmented) return "augmented:" + std::to_string(k);
  return to_string(mode);
}

FeatureConfig FeatureConfig::parse(const std::string& text) {
  if (text == "privileged" || text == "privileged_only") return privileged();
  if (text == "raw" || text == "raw_only") return raw();
  const std::string prefix = "augmented:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const long k = std::stol(text.substr(prefix.size()), &used);
      if (k < 0 || used != text.size() - prefix.size()) throw std::invalid_argument("k");
      return augmented_with(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw InvalidInput("bad feature spec '" + text + "'");
    }
  }
  throw InvalidInput("unknown feature mode '" + text + "' (privileged | raw | augmented:<k>)");
}

std::size_t half_raw(EnvId env) {
  switch (env) {
    case EnvId::reacher: return 5;
    case EnvId::feeding: return 10;
    case EnvId::itch: return 15;
  }
  return 0;
}

Normalizer Normalizer::identity(std::size_t dim) { return {Vec64(dim, 0.0), Vec64(dim, 1.0)}; }

void Normalizer::apply(double* x) const {
  for (std::size_t i = 0; i < mean.size(); ++i) x[i] = (x[i] - mean[i]) / scale[i];
}

namespace {

void check_env(const RewardModel& model, const Trajectory& traj) {
  if (traj.env != model.env) throw InvalidInput("trajectory env does not match reward model");
}

Mat64 feature_rows(const RewardModel& model, std::span<const StepRecord> steps) {
  const std::size_t d = model.spec.input_dim;
  Mat64 x(steps.size(), d);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    if (s.raw.size() != raw_dim(model.env) || s.priv.size() != priv_dim(model.env)) {
      throw InvalidInput("step features do not match the reward model's environment");
    }
    model.features.extract(s.raw, s.priv, x.row(t).data());
    model.norm.apply(x.row(t).data());
  }
  return x;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vec64 trajectory_logits(const PairProblem& p, const Vec64& step_out) {
  Vec64 r(p.offset.size(), 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.length[t]; ++i) s += step_out[p.offset[t] + i];
    r[t] = s;
  }
  return r;
}

double logit_accuracy(const Vec64& r, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (pairs.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& [w, b] : pairs) {
    if (r[b] > r[w]) {
      hits += 1.0;
    } else if (r[b] == r[w]) {
      hits += 0.5;
    }
  }
  return hits / static_cast<double>(pairs.size());
}

std::vector<std::size_t> train_trajectory_indices(const PreferenceDataset& dataset,
                                                  std::span<const Trajectory> store) {
  std::unordered_map<int, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index[store[i].id] = i;
  std::vector<std::size_t> out;
  std::vector<char> seen(store.size(), 0);
  for (const auto& p : dataset.pairs) {
    if (p.split != Split::train) continue;
    for (int id : {p.first, p.second}) {
      auto it = index.find(id);
      if (it == index.end()) throw InvalidInput("pair references unknown trajectory " + std::to_string(id));
      if (!seen[it->second]) {
        seen[it->second] = 1;
        out.push_back(it->second);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double RewardModel::step_reward(std::span<const double> raw, std::span<const double> priv) const {
  Vec64 x(spec.input_dim);
  features.extract(raw, priv, x.data());
  norm.apply(x.data());
  return forward(spec, params, x);
}

Vec64 RewardModel::step_rewards(std::span<const StepRecord> steps) const {
  if (steps.empty()) return {};
  return forward_batch(spec, params, feature_rows(*this, steps)).output;
}

double traj_return_logit(const RewardModel& model, const Trajectory& traj) {
  check_env(model, traj);
  const Vec64 out = model.step_rewards(traj.steps);
  double s = 0.0;
  for (double v : out) s += v;
  return s;
}

double pref_prob_logits(double logit_a, double logit_b) {
  const double m = std::max(logit_a, logit_b);
  const double ea = std::exp(logit_a - m), eb = std::exp(logit_b - m);
  return eb / (ea + eb);
}

double pref_prob(const RewardModel& model, const Trajectory& a, const Trajectory& b) {
  return pref_prob_logits(traj_return_logit(model, a), traj_return_logit(model, b));
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigError("patience must be in [1, max_epochs]");
  make_opt_state(opt, NetParams{});  // validates the optimizer coefficients
}

TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  c.opt.algorithm = Optimizer::adam;
  c.opt.lr = 0.05;
  if (name == "base") {
    c.opt.weight_decay = 0.01;
  } else if (name == "sparse") {
    c.opt.l1 = 0.1;
  } else if (name == "ladder") {
    c.opt.weight_decay = 0.01;
    c.opt.l1 = 0.01;
  } else {
    throw ConfigError("unknown training preset '" + name + "'");
  }
  return c;
}

const std::vector<std::string>& train_preset_names() {
  static const std::vector<std::string> names = {"base", "sparse", "ladder"};
  return names;
}

PairProblem build_problem(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                          const FeatureConfig& features, const Normalizer& norm,
                          const NetSpec& spec) {
  if (store.empty()) throw InvalidInput("empty trajectory store");
  const EnvId env = store.front().env;
  if (spec.input_dim != features.input_dim(env)) {
    throw InvalidInput("netspec input_dim does not match the feature configuration");
  }
  PairProblem p;
  p.spec = spec;
  std::unordered_map<int, std::size_t> local;  // trajectory id -> index in the problem
  std::vector<const Trajectory*> used;
  std::unordered_map<int, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].env != env) throw InvalidInput("trajectory store mixes environments");
    index[store[i].id] = i;
  }
  auto local_index = [&](int id) {
    if (auto it = local.find(id); it != local.end()) return it->second;
    auto it = index.find(id);
    if (it == index.end()) throw InvalidInput("pair references unknown trajectory " + std::to_string(id));
    local[id] = used.size();
    used.push_back(&store[it->second]);
    return used.size() - 1;
  };
  for (const auto& pair : dataset.pairs) {
    const auto w = local_index(pair.first), b = local_index(pair.second);
    (pair.split == Split::train ? p.train : p.val).emplace_back(w, b);
  }
  std::size_t rows = 0;
  for (const auto* t : used) rows += t->steps.size();
  const RewardModel shape{env, features, norm, spec, {}, {}};
  p.x = Mat64(rows, spec.input_dim);
  std::size_t r = 0;
  for (const auto* t : used) {
    p.offset.push_back(r);
    p.length.push_back(t->steps.size());
    const Mat64 rows_t = feature_rows(shape, t->steps);
    std::copy(rows_t.values().begin(), rows_t.values().end(), p.x.row(r).data());
    r += t->steps.size();
  }
  return p;
}

double pair_loss(const PairProblem& problem, const NetParams& params,
                 std::span<const std::pair<std::size_t, std::size_t>> pairs, NetParams* g) {
  if (pairs.empty()) throw InvalidInput("pair_loss: no pairs");
  const ForwardCache cache = forward_batch(problem.spec, params, problem.x);
  const Vec64 r = trajectory_logits(problem, cache.output);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  Vec64 d_r(r.size(), 0.0);
  for (const auto& [w, b] : pairs) {
    const double z = r[w] - r[b];  // -log P(w < b) = softplus(r_w - r_b)
    loss += softplus(z);
    const double s = sigmoid(z) * inv_n;
    d_r[w] += s;
    d_r[b] -= s;
  }
  loss *= inv_n;
  if (g) {
    Vec64 upstream(problem.x.rows(), 0.0);
    for (std::size_t t = 0; t < r.size(); ++t) {
      for (std::size_t i = 0; i < problem.length[t]; ++i) upstream[problem.offset[t] + i] = d_r[t];
    }
    backward_batch(problem.spec, params, cache, upstream, *g);
  }
  return loss;
}

Normalizer fit_normalizer(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                          const FeatureConfig& features) {
  if (store.empty()) throw InvalidInput("empty trajectory store");
  const EnvId env = store.front().env;
  const std::size_t d = features.input_dim(env);
  Vec64 sum(d, 0.0), sq(d, 0.0), x(d);
  std::size_t n = 0;
  for (std::size_t i : train_trajectory_indices(dataset, store)) {
    for (const auto& s : store[i].steps) {
      features.extract(s.raw, s.priv, x.data());
      for (std::size_t j = 0; j < d; ++j) {
        sum[j] += x[j];
        sq[j] += x[j] * x[j];
      }
      ++n;
    }
  }
  Normalizer norm = Normalizer::identity(d);
  if (n == 0) return norm;
  for (std::size_t j = 0; j < d; ++j) {
    const double mu = sum[j] / static_cast<double>(n);
    const double var = std::max(0.0, sq[j] / static_cast<double>(n) - mu * mu);
    norm.mean[j] = mu;
    // Constant features keep unit scale.
    norm.scale[j] = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
  }
  return norm;
}

RewardModel train(const PreferenceDataset& dataset, std::span<const Trajectory> store,
                  const FeatureConfig& features, const NetSpec& spec, const TrainConfig& config) {
  config.validate();
  spec.validate();
  if (dataset.pairs.empty()) throw InvalidInput("train: empty preference dataset");
  if (store.empty()) throw InvalidInput("train: empty trajectory store");
  const EnvId env = store.front().env;
  features.validate(env);
  if (spec.final_bias) throw ConfigError("reward models have no final-layer bias");

  RewardModel model;
  model.env = env;
  model.features = features;
  model.spec = spec;
  model.norm = fit_normalizer(dataset, store, features);
  const PairProblem problem = build_problem(dataset, store, features, model.norm, spec);
  if (problem.train.empty()) throw InvalidInput("train: no training pairs");
  if (problem.val.empty()) throw InvalidInput("train: no validation pairs (split the dataset first)");

  NetParams params = init_params(spec, config.seed);
  OptState opt = make_opt_state(config.opt, params);
  NetParams best = params;
  double best_val = pair_loss(problem, params, problem.val, nullptr);
  int best_epoch = 0;
  int since_best = 0;
  auto& rep = model.report;

  std::vector<std::pair<std::size_t, std::size_t>> order = problem.train;
  const std::size_t batch = config.batch_size == 0 ? order.size()
                                                   : std::min(config.batch_size, order.size());
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (batch < order.size()) {
      Rng rng(derive_seed(config.seed, {0xba7cULL, static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      NetParams g = params.zeros_like();
      const double loss = pair_loss(problem, params, std::span(order).subspan(start, len), &g);
      if (!std::isfinite(loss)) throw TrainingDiverged("reward training loss is not finite", epoch);
      try {
        step(opt, params, g);
      } catch (const TrainingDiverged&) {
        throw TrainingDiverged("reward training gradient is not finite", epoch);
      }
      epoch_loss += loss * static_cast<double>(len);
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = pair_loss(problem, params, problem.val, nullptr);
    if (!std::isfinite(val) || !params.finite()) {
      throw TrainingDiverged("reward validation loss is not finite", epoch);
    }
    rep.val_loss.push_back(val);
    rep.epochs = epoch;
    if (val < best_val) {
      best_val = val;
      best = params;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.params = std::move(best);
  rep.best_epoch = best_epoch;
  rep.best_val_loss = best_val;
  const Vec64 r = trajectory_logits(problem, forward_batch(spec, model.params, problem.x).output);
  rep.train_acc = logit_accuracy(r, problem.train);
  rep.val_acc = logit_accuracy(r, problem.val);
  return model;
}

double pairwise_accuracy(const RewardModel& model, const PreferenceDataset& dataset,
                         std::span<const Trajectory> store, Split split) {
  std::unordered_map<int, const Trajectory*> index;
  for (const auto& t : store) index[t.id] = &t;
  std::unordered_map<int, double> logit;
  auto get = [&](int id) {
    if (auto it = logit.find(id); it != logit.end()) return it->second;
    auto it = index.find(id);
    if (it == index.end()) throw InvalidInput("pair references unknown trajectory " + std::to_string(id));
    return logit[id] = traj_return_logit(model, *it->second);
  };
  double hits = 0.0;
  std::size_t n = 0;
  for (const auto& p : dataset.pairs) {
    if (p.split != split) continue;
    const double a = get(p.first), b = get(p.second);
    hits += b > a ? 1.0 : (b == a ? 0.5 : 0.0);
    ++n;
  }
  if (n == 0) throw InvalidInput("pairwise_accuracy: no pairs in the " + to_string(split) + " split");
  return hits / static_cast<double>(n);
}

std::vector<NetSpec> capacity_ladder(std::size_t input_dim) {
  const std::vector<std::vector<std::size_t>> widths = {
      {}, {64}, {128}, {64, 64}, {128, 64}, {128, 128}, {256, 128}, {256, 256}};
  std::vector<NetSpec> out;
  for (const auto& w : widths) out.push_back(NetSpec{input_dim, w});
  return out;
}

namespace {

std::string join(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

Vec64 split_doubles(const std::string& s) {
  Vec64 out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput("model file: bad number '" + item + "'");
    }
  }
  return out;
}

// "key=value" tokens after a leading tag.
std::unordered_map<std::string, std::string> tagged_line(std::istream& in, const std::string& tag) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("model file: missing '" + tag + "' line");
  std::istringstream ss(line);
  std::string word;
  ss >> word;
  if (word != tag) throw InvalidInput("model file: expected '" + tag + "' line, got '" + word + "'");
  std::unordered_map<std::string, std::string> kv;
  while (ss >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw InvalidInput("model file: bad token '" + word + "'");
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  return kv;
}

const std::string& need(const std::unordered_map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw InvalidInput("model file: missing key '" + key + "'");
  return it->second;
}

}  // namespace

void write_model(std::ostream& out, const RewardModel& m) {
  out << "features mode=" << to_string(m.features.mode) << " k=" << m.features.k
      << " env=" << to_string(m.env) << '\n';
  out << "normalizer mean=" << join(m.norm.mean) << " scale=" << join(m.norm.scale) << '\n';
  const auto& r = m.report;
  out << "report epochs=" << r.epochs << " best_epoch=" << r.best_epoch
      << " best_val_loss=" << format_double(r.best_val_loss)
      << " train_acc=" << format_double(r.train_acc) << " val_acc=" << format_double(r.val_acc)
      << '\n';
  write_checkpoint(out, m.spec, m.params);
}

RewardModel read_model(std::istream& in) {
  RewardModel m;
  const auto f = tagged_line(in, "features");
  const auto& mode = need(f, "mode");
  if (mode == "augmented") {
    m.features = FeatureConfig::parse("augmented:" + need(f, "k"));
  } else {
    m.features = FeatureConfig::parse(mode);
  }
  m.env = parse_env(need(f, "env"));
  const auto nl = tagged_line(in, "normalizer");
  m.norm.mean = split_doubles(need(nl, "mean"));
  m.norm.scale = split_doubles(need(nl, "scale"));
  const auto rl = tagged_line(in, "report");
  try {
    m.report.epochs = std::stoi(need(rl, "epochs"));
    m.report.best_epoch = std::stoi(need(rl, "best_epoch"));
    m.report.best_val_loss = std::stod(need(rl, "best_val_loss"));
    m.report.train_acc = std::stod(need(rl, "train_acc"));
    m.report.val_acc = std::stod(need(rl, "val_acc"));
  } catch (const std::logic_error&) {
    throw InvalidInput("model file: bad report line");
  }
  Checkpoint ck = read_checkpoint(in);
  m.spec = std::move(ck.spec);
  m.params = std::move(ck.params);
  const std::size_t d = m.features.input_dim(m.env);
  if (m.spec.input_dim != d || m.norm.mean.size() != d || m.norm.scale.size() != d) {
    throw InvalidInput("model file: feature dimensions disagree");
  }
  for (double s : m.norm.scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidInput("model file: bad normalizer scale");
  }
  if (m.spec.final_bias) throw InvalidInput("model file: reward models have no final bias");
  return m;
}

}  // namespace preflab
