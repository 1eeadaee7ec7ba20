#include "preflab/numerics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "preflab/error.hpp"
#include "preflab/rng.hpp"

namespace preflab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

CMapMat as_eigen(const Mat64& m) {
  return CMapMat(m.data(), static_cast<Eigen::Index>(m.rows()),
                 static_cast<Eigen::Index>(m.cols()));
}
MapMat as_eigen(Mat64& m) {
  return MapMat(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

std::size_t layer_in(const NetSpec& spec, std::size_t l) {
  return l == 0 ? spec.input_dim : spec.hidden[l - 1];
}
std::size_t layer_out(const NetSpec& spec, std::size_t l) {
  return l < spec.hidden.size() ? spec.hidden[l] : 1;
}
bool layer_has_bias(const NetSpec& spec, std::size_t l) {
  return l + 1 < spec.num_layers() || spec.final_bias;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) noexcept {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void NetSpec::validate() const {
  if (input_dim < 1) throw InvalidInput("netspec: input_dim must be >= 1");
  for (std::size_t w : hidden) {
    if (w < 1) throw InvalidInput("netspec: hidden widths must be >= 1");
  }
  if (!(slope > 0.0 && slope < 1.0)) throw InvalidInput("netspec: slope must be in (0,1)");
}

std::string NetSpec::arch_name() const {
  if (hidden.empty()) return "linear";
  std::string s;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(hidden[i]);
  }
  return s;
}

std::vector<std::size_t> NetSpec::parse_arch(const std::string& name) {
  std::vector<std::size_t> widths;
  if (name == "linear" || name.empty()) return widths;
  std::size_t pos = 0;
  while (pos <= name.size()) {
    std::size_t next = name.find_first_of("-,x", pos);
    if (next == std::string::npos) next = name.size();
    const std::string tok = name.substr(pos, next - pos);
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw InvalidInput("");
      widths.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw InvalidInput("bad architecture name '" + name + "'");
    }
    pos = next + 1;
  }
  return widths;
}

std::size_t NetParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Vec64 NetParams::flatten() const {
  Vec64 flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void NetParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw InvalidInput("assign_flat: expected " + std::to_string(parameter_count()) +
                       " values, got " + std::to_string(flat.size()));
  }
  std::size_t k = 0;
  for (auto& l : layers) {
    for (double& w : l.weight.values()) w = flat[k++];
    for (double& b : l.bias) b = flat[k++];
  }
}

NetParams NetParams::zeros_like() const {
  NetParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Mat64(l.weight.rows(), l.weight.cols()), Vec64(l.bias.size(), 0.0)});
  }
  return z;
}

void NetParams::add_scaled(const NetParams& other, double alpha) {
  if (other.layers.size() != layers.size()) throw InvalidInput("add_scaled: layer mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto dst = layers[i].weight.values();
    auto src = other.layers[i].weight.values();
    if (dst.size() != src.size() || layers[i].bias.size() != other.layers[i].bias.size()) {
      throw InvalidInput("add_scaled: shape mismatch");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += alpha * src[k];
    for (std::size_t k = 0; k < layers[i].bias.size(); ++k) {
      layers[i].bias[k] += alpha * other.layers[i].bias[k];
    }
  }
}

bool NetParams::finite() const noexcept {
  for (const auto& l : layers) {
    if (!all_finite(l.weight.values()) || !all_finite(l.bias)) return false;
  }
  return true;
}

NetParams zero_params(const NetSpec& spec) {
  spec.validate();
  NetParams p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.layers.push_back({Mat64(layer_out(spec, l), layer_in(spec, l)),
                        Vec64(layer_has_bias(spec, l) ? layer_out(spec, l) : 0, 0.0)});
  }
  return p;
}

NetParams init_params(const NetSpec& spec, std::uint64_t seed) {
  NetParams p = zero_params(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer_in(spec, l)));
    for (double& w : p.layers[l].weight.values()) w = rng.uniform(-bound, bound);
    for (double& b : p.layers[l].bias) b = rng.uniform(-bound, bound);
  }
  return p;
}

void check_params(const NetSpec& spec, const NetParams& params) {
  spec.validate();
  if (params.layers.size() != spec.num_layers()) {
    throw InvalidInput("params: expected " + std::to_string(spec.num_layers()) + " layers, got " +
                       std::to_string(params.layers.size()));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const std::size_t bias_len = layer_has_bias(spec, l) ? layer_out(spec, l) : 0;
    if (layer.weight.rows() != layer_out(spec, l) || layer.weight.cols() != layer_in(spec, l) ||
        layer.bias.size() != bias_len) {
      throw InvalidInput("params: layer " + std::to_string(l) + " shape mismatch");
    }
  }
  if (!params.finite()) throw InvalidInput("params: non-finite entry");
}

ForwardCache forward_batch(const NetSpec& spec, const NetParams& params, const Mat64& x) {
  if (x.cols() != spec.input_dim) {
    throw InvalidInput("forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                       std::to_string(spec.input_dim));
  }
  if (params.layers.size() != spec.num_layers()) throw InvalidInput("forward: layer mismatch");
  ForwardCache cache;
  cache.inputs.reserve(spec.num_layers());
  cache.preact.reserve(spec.hidden.size());
  cache.inputs.push_back(x);
  const auto n = static_cast<Eigen::Index>(x.rows());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& layer = params.layers[l];
    const Mat64& in = cache.inputs.back();
    Mat64 z(x.rows(), layer.weight.rows());
    as_eigen(z).noalias() = as_eigen(in) * as_eigen(layer.weight).transpose();
    if (!layer.bias.empty()) {
      as_eigen(z).rowwise() += CMapVec(layer.bias.data(), static_cast<Eigen::Index>(layer.bias.size()))
                                   .transpose();
    }
    if (l + 1 == spec.num_layers()) {
      cache.output.assign(z.data(), z.data() + z.size());
      break;
    }
    Mat64 h(z.rows(), z.cols());
    auto zv = z.values();
    auto hv = h.values();
    for (std::size_t k = 0; k < zv.size(); ++k) hv[k] = zv[k] > 0.0 ? zv[k] : spec.slope * zv[k];
    cache.preact.push_back(std::move(z));
    cache.inputs.push_back(std::move(h));
  }
  (void)n;
  return cache;
}

void backward_batch(const NetSpec& spec, const NetParams& params, const ForwardCache& cache,
                    std::span<const double> upstream, NetParams& g) {
  const std::size_t n = cache.inputs.front().rows();
  if (upstream.size() != n) throw InvalidInput("backward: upstream length mismatch");
  if (g.layers.size() != params.layers.size()) throw InvalidInput("backward: grad shape mismatch");
  // delta holds d(objective)/d(pre-activation) for the current layer, n x out.
  Mat64 delta(n, 1);
  for (std::size_t i = 0; i < n; ++i) delta(i, 0) = upstream[i];
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& gl = g.layers[l];
    as_eigen(gl.weight).noalias() += as_eigen(delta).transpose() * as_eigen(cache.inputs[l]);
    if (!gl.bias.empty()) {
      MapVec(gl.bias.data(), static_cast<Eigen::Index>(gl.bias.size())) +=
          as_eigen(delta).colwise().sum().transpose();
    }
    if (l == 0) break;
    Mat64 prev(n, layer.weight.cols());
    as_eigen(prev).noalias() = as_eigen(delta) * as_eigen(layer.weight);
    const auto z = cache.preact[l - 1].values();
    auto pv = prev.values();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      if (!(z[k] > 0.0)) pv[k] *= spec.slope;
    }
    delta = std::move(prev);
  }
}

double forward(const NetSpec& spec, const NetParams& params, std::span<const double> x) {
  if (x.size() != spec.input_dim) {
    throw InvalidInput("forward: input length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(spec.input_dim));
  }
  Mat64 m(1, x.size());
  std::copy(x.begin(), x.end(), m.data());
  return forward_batch(spec, params, m).output[0];
}

NetParams grad(const NetSpec& spec, const NetParams& params, std::span<const double> x) {
  if (x.size() != spec.input_dim) {
    throw InvalidInput("grad: input length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(spec.input_dim));
  }
  Mat64 m(1, x.size());
  std::copy(x.begin(), x.end(), m.data());
  const ForwardCache cache = forward_batch(spec, params, m);
  NetParams g = params.zeros_like();
  const double one = 1.0;
  backward_batch(spec, params, cache, std::span<const double>(&one, 1), g);
  return g;
}

std::string to_string(Optimizer opt) { return opt == Optimizer::adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd") return Optimizer::sgd;
  throw InvalidInput("unknown optimizer '" + name + "'");
}

OptState make_opt_state(const OptConfig& config, const NetParams& like) {
  if (!(config.lr > 0.0)) throw InvalidInput("optimizer: learning rate must be > 0");
  if (config.weight_decay < 0.0 || config.l1 < 0.0) {
    throw InvalidInput("optimizer: regularization coefficients must be >= 0");
  }
  return OptState{config, like.zeros_like(), like.zeros_like(), 0};
}

void step(OptState& opt, NetParams& params, const NetParams& grads) {
  if (grads.layers.size() != params.layers.size() || opt.m.layers.size() != params.layers.size()) {
    throw InvalidInput("step: shape mismatch");
  }
  if (!grads.finite()) {
    throw TrainingDiverged("non-finite gradient at optimizer step " + std::to_string(opt.steps),
                           static_cast<int>(opt.steps));
  }
  const OptConfig& c = opt.config;
  ++opt.steps;
  const double t = static_cast<double>(opt.steps);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m,
                    std::span<double> v, bool is_weight) {
    if (w.size() != g.size()) throw InvalidInput("step: tensor size mismatch");
    const double decay = is_weight ? 1.0 - c.lr * c.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      double gk = g[k];
      if (is_weight && c.l1 > 0.0) gk += c.l1 * static_cast<double>((w[k] > 0.0) - (w[k] < 0.0));
      w[k] *= decay;
      if (c.algorithm == Optimizer::sgd) {
        w[k] -= c.lr * gk;
      } else {
        m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
        v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
        w[k] -= c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
      }
    }
  };

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    update(p.weight.values(), g.weight.values(), opt.m.layers[l].weight.values(),
           opt.v.layers[l].weight.values(), true);
    update(p.bias, g.bias, opt.m.layers[l].bias, opt.v.layers[l].bias, false);
  }
}

}  // namespace preflab
