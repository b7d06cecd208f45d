#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfflow/classifier.hpp"
#include "cfflow/config.hpp"
#include "cfflow/flow.hpp"
#include "cfflow/schema.hpp"

namespace cfflow {

// Everything generation needs, stored as a directory with manifest.json and a
// little-endian float32 weights.bin. Weights are held in double once loaded.
struct ModelBundle {
  TableSchema schema;
  std::optional<Classifier> classifier;
  FlowModel flow;
  std::optional<FlowModel> density;
  std::vector<double> p_values;   // trained P
  std::vector<FeatureMask> masks;  // trained M
  std::size_t k = 16;
  double alpha = kDefaultAlpha;
  nlohmann::json train_config;  // as used, for the record
  MetricDefaults metric_defaults;
  // Encoded training rows (reference set for LOF); may be empty.
  std::vector<double> reference_rows;
  std::string bundle_id;  // content hash, filled by save/load
};

// Writes the bundle and returns its id.
std::string save_bundle(const std::filesystem::path& dir, ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

nlohmann::json train_config_json(const TrainConfig& config, const TableSchema& schema);

}  // namespace cfflow
