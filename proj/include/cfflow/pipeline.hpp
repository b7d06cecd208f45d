#pragma once

#include <optional>

#include "cfflow/bundle.hpp"
#include "cfflow/config.hpp"
#include "cfflow/csv.hpp"

namespace cfflow {

struct PipelineResult {
  ModelBundle bundle;
  LabeledDataset data;  // the labels the flow was trained on
  std::optional<FitReport> classifier_report;
  TrainReport train_report;
};

// Classifier (optional), labeling, flow training and the optional density
// estimator, assembled into an unsaved bundle.
PipelineResult run_training(const Table& table, const ExperimentConfig& config);

}  // namespace cfflow
