#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "cfflow/bundle.hpp"
#include "cfflow/datasets.hpp"
#include "cfflow/pipeline.hpp"

namespace cfflow::testing {

// Two continuous features and one 3-way categorical, statistics fixed by hand.
inline TableSchema mixed_schema() {
  FeatureSpec a{"a", FeatureKind::continuous, {}, {1.0, 2.0, -3.0, 7.0}};
  FeatureSpec b{"b", FeatureKind::continuous, {}, {0.0, 0.5, -1.0, 1.0}};
  FeatureSpec c{"c", FeatureKind::categorical, {"r", "g", "b"}, {}};
  return TableSchema({a, b, c}, {"no", "yes"}, "label");
}

inline Instance mixed(double a, double b, const std::string& c) { return Instance{{a, b, c}}; }

// A small two-moons bundle trained once per process.
inline std::shared_ptr<const ModelBundle> moons_bundle() {
  static const std::shared_ptr<const ModelBundle> bundle = [] {
    const Table table = datasets::two_moons(400, 0.1, 5);
    ExperimentConfig cfg;
    cfg.seed = 3;
    cfg.classifier_kind = ClassifierKind::mlp_2_layer;
    cfg.classifier.hidden = 16;
    cfg.classifier.seed = 3;
    cfg.train.seed = 3;
    cfg.train.steps = 300;
    cfg.train.batch_instances = 64;
    cfg.train.hidden = 32;
    cfg.train.layers = 3;
    cfg.train.k = 8;
    cfg.train.p_values = {0.01, 2.0};
    cfg.train.log_every = 100;
    cfg.mask_names = {{"x1"}};
    auto result = run_training(table, cfg);
    return std::make_shared<const ModelBundle>(std::move(result.bundle));
  }();
  return bundle;
}

// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("cfflow-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace cfflow::testing
