#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfflow/bundle.hpp"
#include "cfflow/metrics.hpp"

namespace cfflow {

struct GenerateOptions {
  std::size_t n = 10;
  double p = 2.0;
  FeatureMask mask;                   // empty bits means no mask
  std::optional<std::size_t> target;  // unset: flip the prediction
  bool rank_by_score = false;
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double eps = kDefaultEps;
  std::uint64_t seed = 0;
};

struct Counterfactual {
  Instance features;
  EncodedVector encoded;  // decoded then re-encoded (exact one-hot blocks)
  bool valid = false;
  double class_prob = 0.0;
  double proximity_num = 0.0;
  std::vector<std::string> changed_features;  // eps * range rule for continuous features
  std::optional<double> score;
  std::string explanation;  // why an entry is invalid beyond misclassification
};

struct GenerationResult {
  Instance factual;
  std::optional<std::size_t> predicted;
  std::vector<double> factual_proba;
  std::size_t target = 0;
  std::vector<Counterfactual> counterfactuals;
  std::vector<std::string> warnings;
  double millis = 0.0;
};

// Target used when the request says "flip": the other class for binary models,
// otherwise the most probable class other than the prediction.
std::size_t flip_target(std::span<const double> proba);

// One flow sampling pass for `x` under (p, mask, target), decoded and annotated.
GenerationResult generate_counterfactuals(const ModelBundle& bundle, const Instance& x, const GenerateOptions& options);

// Seed of row `row` in a batch run seeded with `seed`.
std::uint64_t row_seed(std::uint64_t seed, std::size_t row);

// Generates for every row, in parallel over rows; results are independent of
// the thread count.
std::vector<GenerationResult> generate_batch(const ModelBundle& bundle, std::span<const Instance> rows,
                                             const GenerateOptions& options, std::size_t threads = 0);

}  // namespace cfflow
