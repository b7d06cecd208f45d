#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfflow/schema.hpp"

namespace cfflow {

enum class ClassifierKind { logistic_linear, mlp_2_layer };

std::string_view to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(std::string_view name);

struct ClassifierSettings {
  std::size_t hidden = 32;  // mlp-2-layer only
  std::size_t epochs = 600;
  double learning_rate = 0.02;
  double l2 = 1e-4;
  double tolerance = 1e-4;  // gradient norm under which training counts as converged
  std::uint64_t seed = 7;
};

struct LabeledDataset {
  std::vector<Instance> instances;
  std::vector<int> labels;

  std::size_t size() const { return instances.size(); }
  std::vector<std::size_t> class_counts(std::size_t class_count) const;
};

// Throws Error unless every class in [0, class_count) has at least `min_rows` rows.
void require_class_support(const LabeledDataset& data, std::size_t class_count, std::size_t min_rows);

// The model h(.) on encoded inputs. Immutable after fitting; safe for
// concurrent prediction.
class Classifier {
 public:
  Classifier() = default;
  // All weights zero.
  Classifier(ClassifierKind kind, std::size_t input_dim, std::size_t class_count, std::size_t hidden = 0);

  ClassifierKind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t class_count() const { return class_count_; }
  std::size_t hidden() const { return hidden_; }

  std::vector<double> predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const EncodedVector& x) const { return predict_proba(x.view()); }
  int predict(std::span<const double> x) const;

  // Row-major n x class_count probabilities for n x input_dim inputs.
  std::vector<double> predict_proba_rows(std::span<const double> rows, std::size_t n) const;

  // Flat parameter vector: linear [W (C x D), b]; mlp [W1 (H x D), b1, W2 (C x H), b2].
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Mean cross-entropy (+ l2/2 |W|^2) and its gradient over labeled encoded rows.
  double loss_and_grad(std::span<const double> rows, std::span<const int> labels, double l2,
                       std::vector<double>& grad) const;

 private:
  void logits_rows(std::span<const double> rows, std::size_t n, std::vector<double>& logits,
                   std::vector<double>* hidden_out) const;

  ClassifierKind kind_ = ClassifierKind::logistic_linear;
  std::size_t input_dim_ = 0;
  std::size_t class_count_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

struct FitReport {
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  bool converged = false;
  std::string warning;
};

struct FitResult {
  Classifier classifier;
  FitReport report;
};

FitResult fit_classifier(const TableSchema& schema, const LabeledDataset& data, ClassifierKind kind,
                         const ClassifierSettings& settings = {});

// labels[i] = argmax predict_proba(instances[i]).
LabeledDataset label_dataset(const Classifier& clf, const TableSchema& schema, std::vector<Instance> instances);

}  // namespace cfflow
