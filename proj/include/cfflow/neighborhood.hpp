#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cfflow/classifier.hpp"
#include "cfflow/schema.hpp"

namespace cfflow {

inline constexpr double kDefaultAlpha = 1e4;

// Parameters of the masked L_p dissimilarity. `mask` lives in encoded space
// (one entry per encoded coordinate); every coordinate of a one-hot block
// carries its feature's bit.
struct MetricParams {
  double p = 2.0;
  std::vector<double> mask;
  double alpha = kDefaultAlpha;

  // alpha on masked coordinates, 1 elsewhere.
  std::vector<double> weights() const;
  void validate(std::size_t dim) const;
};

std::vector<double> expand_mask(const TableSchema& schema, const FeatureMask& mask);
MetricParams make_metric(const TableSchema& schema, double p, const FeatureMask& mask,
                         double alpha = kDefaultAlpha);

// (sum_j |a_j - b_j|^p)^(1/p). Below p = 0.1 the sum is accumulated in
// log-sum-exp form; the result may legitimately overflow to +inf.
double dist_p(std::span<const double> a, std::span<const double> b, double p);

// alpha * sum_j m_j |a_j - b_j|^p + sum_j (1 - m_j) |a_j - b_j|^p, no outer root.
double dist_pm(std::span<const double> a, std::span<const double> b, const MetricParams& params);

// Encoded rows of a labeled dataset grouped by class. Immutable once built.
class EncodedDataset {
 public:
  EncodedDataset() = default;
  EncodedDataset(const TableSchema& schema, const LabeledDataset& data);
  EncodedDataset(std::size_t dim, std::vector<double> rows, std::vector<int> labels, std::size_t class_count);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t class_count() const { return by_class_.size(); }
  std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
  const std::vector<double>& rows() const { return rows_; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::size_t>& rows_of_class(std::size_t c) const { return by_class_.at(c); }

 private:
  std::size_t dim_ = 0;
  std::vector<double> rows_;
  std::vector<int> labels_;
  std::vector<std::vector<std::size_t>> by_class_;
};

struct NeighborSet {
  std::vector<std::size_t> indices;  // dataset row indices
  std::vector<double> distances;     // nondecreasing dist_pm values

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

// Exact K nearest rows of `target_class` under dist_pm; ties go to the lower row index.
NeighborSet knn(std::span<const double> query, std::size_t target_class, const MetricParams& params, std::size_t k,
                const EncodedDataset& data);

// `count` i.i.d. uniform draws from the neighbor row indices.
std::vector<std::size_t> sample_qhat(const NeighborSet& neighbors, std::size_t count, std::mt19937_64& rng);

}  // namespace cfflow
