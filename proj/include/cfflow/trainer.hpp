#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "cfflow/classifier.hpp"
#include "cfflow/flow.hpp"
#include "cfflow/neighborhood.hpp"
#include "cfflow/optimizer.hpp"

namespace cfflow {

inline const std::vector<double> kDefaultPValues{0.01, 0.25, 0.5, 1.0, 2.0};

struct TrainConfig {
  std::size_t steps = 4000;
  std::size_t batch_instances = 128;
  std::size_t k = 16;
  std::vector<double> p_values = kDefaultPValues;
  // Feature-level masks; the all-zeros mask is added when absent.
  std::vector<FeatureMask> masks;
  // Unnormalized class prior; empty means uniform.
  std::vector<double> class_prior;
  double alpha = kDefaultAlpha;
  std::uint64_t seed = 0;
  AdamSettings optimizer;

  std::size_t layers = 5;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 1;
  double log_scale_clamp = 7.0;
  bool center_on_query = true;  // the flow models x' - x
  double init_output_scale = 0.01;

  double dequant_noise = 0.05;
  // Width of symmetric uniform noise on continuous (z-scored) coordinates;
  // smooths atoms such as zero-inflated columns. 0 disables it.
  double continuous_noise = 0.05;
  double holdout_fraction = 0.1;
  std::size_t validation_pairs = 512;
  std::size_t log_every = 100;
  // Re-check every drawn target's label against y'.
  bool audit_targets = false;

  // Fills defaults that depend on the schema and throws on invalid settings.
  void normalize(const TableSchema& schema);
};

struct TrainReport {
  std::vector<std::size_t> logged_steps;
  std::vector<double> train_nll;       // mean over the steps since the previous log point
  std::vector<double> validation_nll;  // held-out pairs at each log point (empty without a hold-out)
  std::optional<double> final_validation_nll;
  double first_decile_nll = 0.0;  // mean training NLL over the first 10% of steps
  double last_decile_nll = 0.0;   // and over the last 10%
  std::size_t steps = 0;
  std::size_t train_rows = 0;
  std::size_t holdout_rows = 0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  FlowModel model;
  TrainReport report;
};

// y' drawn from the prior restricted to classes other than `label_of_x`.
std::size_t sample_target_class(std::size_t label_of_x, std::span<const double> prior, std::mt19937_64& rng);

// Memoized neighbor sets keyed by (row, y', p index, mask index).
class NeighborCache {
 public:
  const NeighborSet* find(std::size_t row, std::size_t target, std::size_t p_index, std::size_t mask_index) const;
  const NeighborSet& insert(std::size_t row, std::size_t target, std::size_t p_index, std::size_t mask_index,
                            NeighborSet set);
  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, NeighborSet> map_;
};

struct TrainingPair {
  std::size_t target_row = 0;
  std::size_t p_index = 0;
  std::size_t mask_index = 0;
  ConditioningContext ctx;
};

// Everything train() derives from the schema and data once.
struct TrainingData {
  TrainingData(const TableSchema& schema, const EncodedDataset& pool, const TrainConfig& config);

  const TableSchema& schema;
  const EncodedDataset& pool;  // neighbor candidates
  std::vector<MetricParams> metrics;  // p_index * masks + mask_index
  std::vector<double> prior;
  std::vector<unsigned char> categorical;  // per encoded coordinate
  std::size_t mask_count = 0;

  const MetricParams& metric(std::size_t p_index, std::size_t mask_index) const;
};

// Draws (y', p, m) for query x, finds its neighborhood in class y' and picks a
// target from q-hat. `cache_row` enables memoization for queries that are pool rows.
TrainingPair build_training_pair(std::span<const double> x, std::size_t label_of_x, const TrainConfig& config,
                                 const TrainingData& data, std::mt19937_64& rng, NeighborCache* cache = nullptr,
                                 std::optional<std::size_t> cache_row = std::nullopt);

// Adds U[0, noise) to every categorical coordinate and U[-w/2, w/2) with
// w = continuous_noise to every other coordinate.
void dequantize(std::span<double> x, std::span<const unsigned char> categorical, double noise,
                double continuous_noise, std::mt19937_64& rng);

TrainResult train(const TableSchema& schema, const LabeledDataset& data, TrainConfig config);

struct DensityConfig {
  std::size_t steps = 2000;
  std::size_t batch = 128;
  std::size_t layers = 5;
  std::size_t hidden = 64;
  std::size_t hidden_layers = 1;
  double dequant_noise = 0.05;
  double continuous_noise = 0.05;
  std::uint64_t seed = 0;
  AdamSettings optimizer;
};

// Unconditional flow over encoded rows; the p_data estimator of the candidate score.
FlowModel train_density(const TableSchema& schema, const EncodedDataset& data, const DensityConfig& config);

}  // namespace cfflow
