#pragma once

// Small helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "preflab/datagen.hpp"
#include "preflab/prefs.hpp"
#include "preflab/reward.hpp"
#include "preflab/rng.hpp"

namespace testutil {

// Ranks with ties averaged (1-based).
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Worst relative error between pair_loss's gradient and central differences
// over `n_configs` random (env, features, architecture, data) draws.
inline double loss_fd_worst(int n_configs, std::uint64_t seed) {
  using namespace preflab;
  Rng rng(seed);
  double worst = 0.0;
  int done = 0;
  while (done < n_configs) {
    const EnvId env = static_cast<EnvId>(rng.below(3));
    EnvConfig cfg = EnvConfig::defaults(env);
    cfg.horizon = 3 + static_cast<int>(rng.below(6));
    const double levels[] = {0.0, 0.5, 1.0};
    const auto store = epsilon_rollouts(cfg, levels, 4, rng.next());

    FeatureConfig fc;
    switch (rng.below(3)) {
      case 0: fc = FeatureConfig::privileged(); break;
      case 1: fc = FeatureConfig::raw(); break;
      default: fc = FeatureConfig::augmented_with(rng.below(raw_dim(env) + 1));
    }
    NetSpec spec;
    spec.input_dim = fc.input_dim(env);
    const auto depth = rng.below(3);
    for (std::uint64_t l = 0; l < depth; ++l) spec.hidden.push_back(2 + rng.below(7));

    auto ds = delta_pair_sample(rank(store), 1, 10, rng.next());
    split(ds, 0.3, rng.next());
    const Normalizer norm = fit_normalizer(ds, store, fc);
    const PairProblem prob = build_problem(ds, store, fc, norm, spec);
    const NetParams p = init_params(spec, rng.next());

    // skip draws that sit on a leaky-relu kink
    const auto cache = forward_batch(spec, p, prob.x);
    double kink = INFINITY;
    for (const auto& z : cache.preact) {
      for (double v : z.values()) kink = std::min(kink, std::abs(v));
    }
    if (!spec.hidden.empty() && kink < 1e-3) continue;
    ++done;

    NetParams g = p.zeros_like();
    pair_loss(prob, p, prob.train, &g);
    const Vec64 ga = g.flatten();
    const Vec64 flat = p.flatten();
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      NetParams hi = p, lo = p;
      Vec64 f = flat;
      f[i] += h;
      hi.assign_flat(f);
      f[i] -= 2 * h;
      lo.assign_flat(f);
      const double fd =
          (pair_loss(prob, hi, prob.train, nullptr) - pair_loss(prob, lo, prob.train, nullptr)) / (2 * h);
      const double rel = std::abs(fd - ga[i]) / std::max({std::abs(fd), std::abs(ga[i]), 1e-6});
#ifdef FD_DEBUG
      if (rel > 1e-5) std::fprintf(stderr, "env %d dim %zu hid %zu i %zu fd %.12g ga %.12g rel %g kink %g\n", (int)env, spec.input_dim, spec.hidden.size(), i, fd, ga[i], rel, kink);
#endif
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace testutil
