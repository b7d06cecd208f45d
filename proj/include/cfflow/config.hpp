#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfflow/classifier.hpp"
#include "cfflow/metrics.hpp"
#include "cfflow/trainer.hpp"

namespace cfflow {

// Defaults carried by a bundle for generation and evaluation.
struct MetricDefaults {
  std::size_t n = 10;
  double eps = kDefaultEps;
  std::size_t k_lof = kDefaultLofK;
  double lambda1 = 1.0;
  double lambda2 = 0.0;

  nlohmann::json to_json() const;
  static MetricDefaults from_json(const nlohmann::json& j);
};

// Experiment configuration file. Keys (all optional except "dataset"):
//
//   dataset            CSV path, relative to the config file
//   label_column       default "label"
//   output             bundle directory, default "bundle"
//   seed               seeds everything not seeded below, default 0
//   classifier         {kind, hidden, epochs, learning_rate, l2, seed}; when
//                      present the flow trains on the classifier's labels,
//                      otherwise on the label column as-is
//   train              {steps, batch_instances, k, p_values, masks, class_prior,
//                      alpha, seed, learning_rate, clip_norm, holdout_fraction,
//                      dequant_noise, continuous_noise, validation_pairs, log_every}
//   flow               {layers, hidden, hidden_layers, log_scale_clamp, center_on_query}
//   density            {steps, batch, layers, hidden, seed}; trains the p_data
//                      estimator when present
//   metrics            {n, eps, k_lof, lambda1, lambda2}
//
// `masks` is a list of feature-name lists. Unknown keys are rejected.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::string label_column = "label";
  std::filesystem::path output = "bundle";
  std::uint64_t seed = 0;
  std::optional<ClassifierKind> classifier_kind;
  ClassifierSettings classifier;
  TrainConfig train;
  std::vector<std::vector<std::string>> mask_names;
  std::optional<DensityConfig> density;
  MetricDefaults metrics;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace cfflow
