#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "preflab/error.hpp"
#include "preflab/numerics.hpp"
#include "preflab/rng.hpp"

using namespace preflab;

namespace {

NetSpec linear_spec(std::size_t n) { return NetSpec{n, {}}; }

NetParams linear_params(std::initializer_list<double> w) {
  NetParams p = zero_params(linear_spec(w.size()));
  std::size_t i = 0;
  for (double v : w) p.layers[0].weight(0, i++) = v;
  return p;
}

double min_abs_preact(const NetSpec& spec, const NetParams& p, std::span<const double> x) {
  Mat64 xm(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xm(0, i) = x[i];
  const auto cache = forward_batch(spec, p, xm);
  double m = INFINITY;
  for (const auto& z : cache.preact) {
    for (double v : z.values()) m = std::min(m, std::abs(v));
  }
  return m;
}

}  // namespace

TEST(Forward, LinearDotProduct) {
  const double x[] = {3, 4};
  EXPECT_DOUBLE_EQ(forward(linear_spec(2), linear_params({1, 2}), x), 11.0);
}

TEST(Forward, ZeroParamsGiveZero) {
  const NetSpec spec{3, {5, 4}};
  const double x[] = {0.3, -2.0, 7.0};
  EXPECT_EQ(forward(spec, zero_params(spec), x), 0.0);
}

TEST(Forward, OneHiddenLayerByHand) {
  NetSpec spec{2, {2}};
  spec.slope = 0.01;
  NetParams p = zero_params(spec);
  p.layers[0].weight(0, 0) = 1.0;
  p.layers[0].weight(0, 1) = -2.0;
  p.layers[0].weight(1, 0) = 0.5;
  p.layers[0].weight(1, 1) = 1.0;
  p.layers[0].bias = {0.1, -0.3};
  p.layers[1].weight(0, 0) = 2.0;
  p.layers[1].weight(0, 1) = -1.0;
  const double x[] = {0.4, 0.7};

  // unit 0: 0.4 - 1.4 + 0.1 = -0.9 -> leaky -0.009
  // unit 1: 0.2 + 0.7 - 0.3 = 0.6
  const double h0 = 0.01 * (1.0 * 0.4 - 2.0 * 0.7 + 0.1);
  const double h1 = 0.5 * 0.4 + 1.0 * 0.7 - 0.3;
  EXPECT_NEAR(forward(spec, p, x), 2.0 * h0 - 1.0 * h1, 1e-15);
  EXPECT_NEAR(forward(spec, p, x), -0.618, 1e-12);
}

TEST(Forward, DimensionMismatchRejected) {
  const double x[] = {1, 2, 3};
  EXPECT_THROW(forward(linear_spec(2), linear_params({1, 2}), x), InvalidInput);
}

TEST(Grad, LinearGradientIsInput) {
  const double x[] = {3, 4};
  const NetParams g = grad(linear_spec(2), linear_params({1, 2}), x);
  EXPECT_EQ(g.layers[0].weight(0, 0), 3.0);
  EXPECT_EQ(g.layers[0].weight(0, 1), 4.0);
}

TEST(Grad, ZeroInputLinear) {
  const double x[] = {0, 0, 0};
  const NetParams g = grad(linear_spec(3), linear_params({1, -2, 5}), x);
  for (double v : g.layers[0].weight.values()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, FiniteDifferences100Draws) {
  Rng rng(0xfd);
  double worst = 0.0;
  int draws = 0;
  while (draws < 100) {
    NetSpec spec;
    spec.input_dim = 1 + rng.below(6);
    const auto depth = rng.below(3);
    for (std::uint64_t l = 0; l < depth; ++l) spec.hidden.push_back(1 + rng.below(6));
    spec.final_bias = rng.bernoulli(0.5);
    const NetParams p = init_params(spec, rng.next());
    Vec64 x(spec.input_dim);
    for (double& v : x) v = rng.normal();
    if (min_abs_preact(spec, p, x) < 1e-3) continue;  // stay away from kinks
    ++draws;

    const Vec64 g = grad(spec, p, x).flatten();
    Vec64 flat = p.flatten();
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      NetParams hi = p, lo = p;
      Vec64 f = flat;
      f[i] += h;
      hi.assign_flat(f);
      f[i] -= 2 * h;
      lo.assign_flat(f);
      const double fd = (forward(spec, hi, x) - forward(spec, lo, x)) / (2 * h);
      const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Properties, LinearHomogeneity) {
  const NetSpec spec = linear_spec(4);
  const NetParams p = init_params(spec, 3);
  const double x[] = {0.5, -1.0, 2.0, 0.25};
  double ax[4];
  for (int i = 0; i < 4; ++i) ax[i] = 4.0 * x[i];
  EXPECT_NEAR(forward(spec, p, ax), 4.0 * forward(spec, p, x), 1e-12);
}

TEST(Properties, InitDeterministicAndBounded) {
  const NetSpec spec{7, {16, 8}};
  EXPECT_EQ(init_params(spec, 42), init_params(spec, 42));
  EXPECT_NE(init_params(spec, 42), init_params(spec, 43));
  const NetParams p = init_params(spec, 42);
  const double bound = 1.0 / std::sqrt(7.0);
  for (double v : p.layers[0].weight.values()) EXPECT_LE(std::abs(v), bound);
  EXPECT_TRUE(p.layers.back().bias.empty());
}

TEST(Optimizer, SgdStep) {
  NetParams w = linear_params({1});
  OptState opt = make_opt_state({Optimizer::sgd, 0.1}, w);
  step(opt, w, linear_params({2}));
  EXPECT_NEAR(w.layers[0].weight(0, 0), 0.8, 1e-15);
}

TEST(Optimizer, SgdDecayOnly) {
  NetParams w = linear_params({1});
  OptConfig c{Optimizer::sgd, 0.1};
  c.weight_decay = 0.01;
  OptState opt = make_opt_state(c, w);
  step(opt, w, linear_params({0}));
  EXPECT_NEAR(w.layers[0].weight(0, 0), 0.999, 1e-15);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  NetParams w = linear_params({0.5});
  OptState opt = make_opt_state({Optimizer::adam, 0.001, 0.9, 0.999, 1e-8}, w);
  step(opt, w, linear_params({1}));
  // m_hat = 1, v_hat = 1 -> delta = -lr * 1 / (1 + eps)
  EXPECT_NEAR(w.layers[0].weight(0, 0) - 0.5, -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Optimizer, L1SubgradientSignOfZero) {
  NetParams w = linear_params({0.0, 2.0, -2.0});
  OptConfig c{Optimizer::sgd, 0.1};
  c.l1 = 0.5;
  OptState opt = make_opt_state(c, w);
  step(opt, w, linear_params({0, 0, 0}));
  EXPECT_EQ(w.layers[0].weight(0, 0), 0.0);
  EXPECT_NEAR(w.layers[0].weight(0, 1), 1.95, 1e-15);
  EXPECT_NEAR(w.layers[0].weight(0, 2), -1.95, 1e-15);
}

TEST(Optimizer, DecayLeavesBiasAlone) {
  NetSpec spec{1, {}};
  spec.final_bias = true;
  NetParams w = zero_params(spec);
  w.layers[0].weight(0, 0) = 1.0;
  w.layers[0].bias = {1.0};
  OptConfig c{Optimizer::sgd, 0.1};
  c.weight_decay = 0.5;
  OptState opt = make_opt_state(c, w);
  step(opt, w, zero_params(spec));
  EXPECT_NEAR(w.layers[0].weight(0, 0), 0.95, 1e-15);
  EXPECT_EQ(w.layers[0].bias[0], 1.0);
}

TEST(Optimizer, NonFiniteGradientDiverges) {
  NetParams w = linear_params({1});
  OptState opt = make_opt_state({}, w);
  EXPECT_THROW(step(opt, w, linear_params({NAN})), TrainingDiverged);
}

TEST(Optimizer, QuadraticDecreasesMonotonically) {
  // f(w) = (w - 3)^2; adam moves ~lr per step so it is monotone until close
  for (Optimizer algo : {Optimizer::sgd, Optimizer::adam}) {
    NetParams w = linear_params({-2.0});
    OptState opt = make_opt_state({algo, 0.1}, w);
    double prev = INFINITY;
    for (int it = 0; it < 200; ++it) {
      const double x = w.layers[0].weight(0, 0);
      const double f = (x - 3) * (x - 3);
      if (it < 40) EXPECT_LE(f, prev) << to_string(algo) << " iteration " << it;
      prev = f;
      step(opt, w, linear_params({2 * (x - 3)}));
    }
    EXPECT_LT(prev, 0.5) << to_string(algo);
  }
}

TEST(Checkpoint, RoundTripExact) {
  NetSpec spec{5, {7, 3}};
  spec.final_bias = true;
  spec.slope = 0.02;
  const NetParams p = init_params(spec, 11);
  std::stringstream s;
  write_checkpoint(s, spec, p);
  const std::string header = s.str().substr(0, s.str().find('\n'));
  EXPECT_EQ(header, "netspec input_dim=5 hidden=7,3 slope=0.02 final_bias=1");
  const Checkpoint back = read_checkpoint(s);
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.params, p);
}

TEST(Checkpoint, RejectsNonFinite) {
  std::stringstream s("netspec input_dim=1 hidden= slope=0.01 final_bias=0\nW0 1 1 nan\n");
  EXPECT_THROW(read_checkpoint(s), InvalidInput);
}
