#pragma once

// Dense vectors/matrices, a leaky-ReLU MLP with reverse-mode gradients, and
// the Adam/SGD optimizers used for reward learning and policy search.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace preflab {

// 64-byte aligned storage: vectorized reductions then split the same way no
// matter where the heap put the buffer, which keeps results bit-reproducible.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAlloc&, const AlignedAlloc<U>&) noexcept { return true; }
};

using Vec64 = std::vector<double, AlignedAlloc<double>>;

// Row-major dense matrix of doubles.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec64 data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a) noexcept;

// Architecture of a scalar-output MLP. An empty hidden list is a linear model.
struct NetSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  double slope = 0.01;  // leaky-ReLU negative slope
  bool final_bias = false;

  void validate() const;
  bool is_linear() const noexcept { return hidden.empty(); }
  std::size_t num_layers() const noexcept { return hidden.size() + 1; }

  // "linear", "64", "128-64", ...
  std::string arch_name() const;
  static std::vector<std::size_t> parse_arch(const std::string& name);

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// weight is (out x in); bias is empty for an omitted final bias.
struct DenseLayer {
  Mat64 weight;
  Vec64 bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct NetParams {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const noexcept;
  Vec64 flatten() const;
  void assign_flat(std::span<const double> flat);
  NetParams zeros_like() const;
  void add_scaled(const NetParams& other, double alpha);
  bool finite() const noexcept;

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
NetParams init_params(const NetSpec& spec, std::uint64_t seed);
NetParams zero_params(const NetSpec& spec);

// Throws InvalidInput if shapes disagree with spec or any entry is non-finite.
void check_params(const NetSpec& spec, const NetParams& params);

double forward(const NetSpec& spec, const NetParams& params, std::span<const double> x);
NetParams grad(const NetSpec& spec, const NetParams& params, std::span<const double> x);

// Cached activations of a batched forward pass (rows of the input are samples).
struct ForwardCache {
  std::vector<Mat64> inputs;  // input to each layer
  std::vector<Mat64> preact;  // pre-activation of each hidden layer
  Vec64 output;
};

ForwardCache forward_batch(const NetSpec& spec, const NetParams& params, const Mat64& x);

// g += sum_i upstream[i] * d(output_i)/d(params)
void backward_batch(const NetSpec& spec, const NetParams& params, const ForwardCache& cache,
                    std::span<const double> upstream, NetParams& g);

enum class Optimizer { adam, sgd };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& name);

struct OptConfig {
  Optimizer algorithm = Optimizer::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, weights only
  double l1 = 0.0;            // subgradient on weights only
};

struct OptState {
  OptConfig config;
  NetParams m;
  NetParams v;
  std::uint64_t steps = 0;
};

OptState make_opt_state(const OptConfig& config, const NetParams& like);

// One optimizer update. Throws TrainingDiverged on non-finite gradients.
void step(OptState& opt, NetParams& params, const NetParams& grads);

// Text checkpoint: a netspec header and one line per tensor.
void write_checkpoint(std::ostream& out, const NetSpec& spec, const NetParams& params);
struct Checkpoint {
  NetSpec spec;
  NetParams params;
};
Checkpoint read_checkpoint(std::istream& in);
std::string format_netspec_line(const NetSpec& spec);
NetSpec parse_netspec_line(const std::string& line);

// %.17g formatting (round-trip exact for doubles).
std::string format_double(double v);

}  // namespace preflab
