#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cfflow/schema.hpp"

namespace cfflow {

// What the flow is conditioned on: the query, the desired class, the sparsity
// exponent and the feature-level actionability mask.
struct ConditioningContext {
  EncodedVector x;
  std::size_t target = 0;
  double p = 2.0;
  FeatureMask mask;
};

// Flattened conditioner input: concat(x, one_hot(target), log p, mask bits).
struct ConditionerLayout {
  std::size_t encoded_dim = 0;
  std::size_t class_count = 0;
  std::size_t feature_count = 0;

  std::size_t dim() const { return encoded_dim + class_count + 1 + feature_count; }
  std::vector<double> flatten(const ConditioningContext& ctx) const;
  void flatten_into(const ConditioningContext& ctx, double* out) const;
  bool operator==(const ConditionerLayout&) const = default;
};

struct FlowArchitecture {
  std::size_t dim = 0;          // flow input dimension D
  std::size_t context_dim = 0;  // 0 for an unconditional density
  std::size_t layers = 5;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 1;  // masked hidden layers inside each autoregressive block
  double log_scale_clamp = 7.0;
  // When set, the stack acts on x' - c[0..D) where c is the context row, so a
  // conditioner whose layout starts with the query models the displacement.
  bool center_on_context = false;

  bool operator==(const FlowArchitecture&) const = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

struct LogProbResult {
  double log_prob = 0.0;
  std::vector<double> z;
  double log_det = 0.0;
};

struct LogProbBatch {
  std::vector<double> z;  // n x D
  std::vector<double> log_det;
  std::vector<double> log_prob;
};

// Stack of masked autoregressive affine layers over a standard normal base.
// Layer l maps u to z = (u - mu(u_<, c)) * exp(-a(u_<, c)) with a clamped to
// [-clamp, clamp]; coordinate order reverses between consecutive layers.
// Const member functions are safe to call concurrently.
class FlowModel {
 public:
  FlowModel() = default;
  // Every parameter zero: the identity map.
  explicit FlowModel(const FlowArchitecture& arch);

  const FlowArchitecture& arch() const { return arch_; }
  std::size_t dim() const { return arch_.dim; }
  std::size_t context_dim() const { return arch_.context_dim; }

  // Hidden weights ~ U(+-1/sqrt(fan_in)); output weights scaled by `output_scale`.
  void initialize(std::mt19937_64& rng, double output_scale = 0.01);

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  // 1 for free parameters, 0 for entries removed by the autoregressive masks.
  const std::vector<double>& parameter_mask() const { return param_mask_; }
  // Zeroes masked-out entries (after loading external weights).
  void apply_masks();
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  // Autoregressive degree (1..D) of each input coordinate in layer l.
  const std::vector<int>& degrees(std::size_t layer) const { return degrees_.at(layer); }

  const std::optional<ConditionerLayout>& conditioner() const { return conditioner_; }
  void set_conditioner(const ConditionerLayout& layout);

  // Row-major batches: x is n x D, ctx is n x context_dim.
  LogProbBatch forward_batch(std::span<const double> x, std::span<const double> ctx, std::size_t n) const;
  std::vector<double> inverse_batch(std::span<const double> z, std::span<const double> ctx, std::size_t n) const;

  // Single autoregressive layer, exposed for masking checks.
  void forward_layer(std::size_t layer, std::span<const double> u, std::span<const double> ctx, std::size_t n,
                     std::vector<double>& z, std::vector<double>& log_det) const;

  // Mean negative log-likelihood of the batch; `grad` receives its exact gradient.
  double nll_and_grad(std::span<const double> x, std::span<const double> ctx, std::size_t n,
                      std::vector<double>& grad) const;

 private:
  struct LayerCache;
  struct Layout {
    std::vector<std::size_t> w, v, b;  // per hidden layer
    std::size_t w_out = 0, b_out = 0;
  };

  void build();
  std::vector<double> centered_input(std::span<const double> x, std::span<const double> ctx, std::size_t n) const;
  void net(std::size_t layer, const double* u, const double* ctx_term, std::size_t n, LayerCache* cache,
           std::vector<double>& out) const;
  void context_terms(std::size_t layer, std::span<const double> ctx, std::size_t n,
                     std::vector<std::vector<double>>& terms) const;
  void layer_forward(std::size_t layer, const double* u, std::span<const double> ctx, std::size_t n,
                     double* z, double* log_det, LayerCache* cache) const;
  void layer_inverse(std::size_t layer, const double* z, std::span<const double> ctx, std::size_t n,
                     double* u) const;

  FlowArchitecture arch_;
  std::vector<double> params_;
  std::vector<double> param_mask_;
  std::vector<TensorInfo> tensors_;
  std::vector<std::vector<int>> degrees_;
  std::vector<Layout> layout_;
  std::optional<ConditionerLayout> conditioner_;
};

double standard_normal_log_density(std::span<const double> z);

// Single-instance convenience forms over the model's conditioner layout.
LogProbResult forward(const FlowModel& model, const EncodedVector& x, const ConditioningContext& ctx);
EncodedVector inverse(const FlowModel& model, std::span<const double> z, const ConditioningContext& ctx);
// n draws z ~ N(0, I) pushed through the inverse under a shared context.
std::vector<EncodedVector> sample(const FlowModel& model, const ConditioningContext& ctx, std::size_t n,
                                  std::mt19937_64& rng);

struct FlowSample {
  EncodedVector x;
  ConditioningContext ctx;
};

// Gradient of the mean negative log-likelihood over the batch.
std::vector<double> grad_nll(const FlowModel& model, std::span<const FlowSample> batch);

}  // namespace cfflow
