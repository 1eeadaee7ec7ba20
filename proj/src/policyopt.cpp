#include "preflab/policyopt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

double GroundTruthReward::episode_return(std::span<const StepRecord> steps) const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

double LearnedReward::episode_return(std::span<const StepRecord> steps) const {
  const Vec64 out = model_.step_rewards(steps);
  double s = 0.0;
  for (double v : out) s += v;
  return s;
}

double ConstantReward::episode_return(std::span<const StepRecord> steps) const {
  return value_ * static_cast<double>(steps.size());
}

void CemConfig::validate() const {
  if (population < 4) throw ConfigError("cem: population must be >= 4");
  if (!(elite_frac > 0.0 && elite_frac < 1.0)) throw ConfigError("cem: elite_frac must be in (0,1)");
  if (iterations < 0) throw ConfigError("cem: iterations must be >= 0");
  if (!(init_std > 0.0) || std_floor < 0.0) throw ConfigError("cem: bad stddev settings");
  if (episodes < 1) throw ConfigError("cem: episodes must be >= 1");
  if (hidden < 1) throw ConfigError("cem: hidden must be >= 1");
  if (workers < 1) throw ConfigError("cem: workers must be >= 1");
}

int CemConfig::n_elite() const {
  return std::max(1, static_cast<int>(std::lround(elite_frac * population)));
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  const int w = std::min(workers, n);
  if (w <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += w) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double candidate_return(const EnvConfig& cfg, const RewardFunction& reward, const PolicyNet& net,
                        std::uint64_t episode_seed, int episodes) {
  const Policy policy = Policy::from_net(net);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const Trajectory traj = rollout(cfg, policy, episode_seed, static_cast<std::uint64_t>(e), e, "cem");
    total += reward.episode_return(traj.steps);
  }
  return total / episodes;
}

}  // namespace

CemSearchResult cem_search(std::size_t dim, const CemObjective& objective, const CemConfig& cem) {
  cem.validate();
  Vec64 mean(dim, 0.0), stddev(dim, cem.init_std);
  CemSearchResult result;
  const int n_elite = cem.n_elite();

  std::vector<Vec64> cand(static_cast<std::size_t>(cem.population), Vec64(dim));
  Vec64 returns(static_cast<std::size_t>(cem.population));
  for (int it = 0; it < cem.iterations; ++it) {
    const auto iter = static_cast<std::uint64_t>(it);
    const std::uint64_t episode_seed = derive_seed(cem.seed, {0xe915ULL, iter});
    parallel_for(cem.population, cem.workers, [&](int c) {
      auto& theta = cand[static_cast<std::size_t>(c)];
      Rng rng(derive_seed(cem.seed, {iter, static_cast<std::uint64_t>(c)}));
      for (std::size_t j = 0; j < dim; ++j) theta[j] = mean[j] + stddev[j] * rng.normal();
      returns[static_cast<std::size_t>(c)] = objective(theta, episode_seed);
    });

    std::vector<int> order;
    for (int c = 0; c < cem.population; ++c) {
      if (std::isfinite(returns[static_cast<std::size_t>(c)])) order.push_back(c);
    }
    result.discarded += cem.population - static_cast<int>(order.size());
    if (order.empty()) throw TrainingDiverged("cem: every candidate return is non-finite", it);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return returns[static_cast<std::size_t>(a)] > returns[static_cast<std::size_t>(b)];
    });
    const int k = std::min<int>(n_elite, static_cast<int>(order.size()));

    CurvePoint pt;
    pt.iter = it;
    double sum = 0.0;
    for (int c : order) sum += returns[static_cast<std::size_t>(c)];
    pt.mean_return = sum / static_cast<double>(order.size());
    pt.max_return = returns[static_cast<std::size_t>(order.front())];
    double elite = 0.0;
    for (int e = 0; e < k; ++e) elite += returns[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])];
    pt.elite_mean = elite / k;

    for (std::size_t j = 0; j < dim; ++j) {
      double m = 0.0;
      for (int e = 0; e < k; ++e) m += cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][j];
      m /= k;
      double v = 0.0;
      for (int e = 0; e < k; ++e) {
        const double d = cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][j] - m;
        v += d * d;
      }
      mean[j] = m;
      stddev[j] = std::max(std::sqrt(v / k), cem.std_floor);
    }
    pt.stddev_norm = norm2(stddev);
    result.curve.push_back(pt);
  }
  result.mean = std::move(mean);
  return result;
}

CemResult optimize(const EnvConfig& cfg, const RewardFunction& reward, const CemConfig& cem) {
  cfg.validate();
  cem.validate();
  PolicyNet net(cfg.env, cem.hidden, cfg.action_bound);
  auto objective = [&](std::span<const double> theta, std::uint64_t episode_seed) {
    PolicyNet local(cfg.env, cem.hidden, cfg.action_bound);
    local.set_params(theta);
    return candidate_return(cfg, reward, local, episode_seed, cem.episodes);
  };
  CemSearchResult r = cem_search(net.parameter_count(), objective, cem);
  net.set_params(r.mean);
  CemResult result;
  result.policy = std::move(net);
  result.curve = std::move(r.curve);
  result.discarded = r.discarded;
  return result;
}

void write_curve(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "iter,mean_return,max_return,stddev_norm\n";
  for (const auto& p : curve) {
    out << p.iter << ',' << format_double(p.mean_return) << ',' << format_double(p.max_return)
        << ',' << format_double(p.stddev_norm) << '\n';
  }
}

EvalResult evaluate(const EnvConfig& cfg, const Policy& policy, const RewardFunction& reward,
                    int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw InvalidInput("evaluate: n_episodes must be >= 1");
  EvalResult r;
  r.episodes = n_episodes;
  const std::uint64_t eval_seed = derive_seed(seed, {0xe7a1ULL});
  int successes = 0;
  for (int i = 0; i < n_episodes; ++i) {
    const Trajectory traj = rollout(cfg, policy, eval_seed, static_cast<std::uint64_t>(i), i, "eval");
    r.mean_return += reward.episode_return(traj.steps);
    r.mean_true_return += traj.ret;
    r.mean_final_distance += traj.steps.back().priv.front();
    if (traj.success.value_or(false)) ++successes;
  }
  r.mean_return /= n_episodes;
  r.mean_true_return /= n_episodes;
  r.mean_final_distance /= n_episodes;
  if (has_success(cfg.env)) r.success_rate = static_cast<double>(successes) / n_episodes;
  return r;
}

void write_policy(std::ostream& out, const PolicyNet& net) {
  out << "policy env=" << to_string(net.env()) << " hidden=" << net.hidden()
      << " bound=" << format_double(net.action_bound()) << '\n';
  const auto p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << format_double(p[i]);
  out << '\n';
  if (!out) throw IoError("failed writing policy");
}

PolicyNet read_policy(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("policy file: empty");
  std::istringstream hs(line);
  std::string tag, tok;
  hs >> tag;
  if (tag != "policy") throw InvalidInput("policy file: bad header");
  std::string env, hidden, bound;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw InvalidInput("policy file: bad token '" + tok + "'");
    const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "env") env = val;
    else if (key == "hidden") hidden = val;
    else if (key == "bound") bound = val;
  }
  if (env.empty() || hidden.empty() || bound.empty()) throw InvalidInput("policy file: incomplete header");
  PolicyNet net;
  try {
    net = PolicyNet(parse_env(env), std::stoul(hidden), std::stod(bound));
  } catch (const std::logic_error&) {
    throw InvalidInput("policy file: bad header values");
  }
  Vec64 flat;
  double v;
  while (in >> v) flat.push_back(v);
  if (!in.eof()) throw InvalidInput("policy file: bad parameter value");
  if (!all_finite(flat)) throw InvalidInput("policy file: non-finite parameter");
  net.set_params(flat);
  return net;
}

}  // namespace preflab
