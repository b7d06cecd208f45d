#include "cfflow/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfflow/simd.hpp"

namespace cfflow {
namespace {

void check_p(double p) {
  if (!(p > 0.0) || !std::isfinite(p)) throw Error("distance exponent p must be positive and finite");
}

}  // namespace

std::vector<double> MetricParams::weights() const {
  std::vector<double> w(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) w[j] = mask[j] != 0.0 ? alpha : 1.0;
  return w;
}

void MetricParams::validate(std::size_t dim) const {
  check_p(p);
  if (!(alpha >= 1.0)) throw Error("mask penalty alpha must be >= 1");
  if (mask.size() != dim) {
    throw Error("mask has " + std::to_string(mask.size()) + " entries, expected " + std::to_string(dim));
  }
  for (double m : mask) {
    if (m != 0.0 && m != 1.0) throw Error("mask entries must be 0 or 1");
  }
}

std::vector<double> expand_mask(const TableSchema& schema, const FeatureMask& mask) {
  if (mask.size() != schema.feature_count()) {
    throw Error("feature mask has " + std::to_string(mask.size()) + " bits, schema has " +
                std::to_string(schema.feature_count()) + " features");
  }
  std::vector<double> out(schema.encoded_dim(), 0.0);
  for (const auto& block : schema.blocks()) {
    if (!mask.bits[block.feature]) continue;
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(block.offset), block.width, 1.0);
  }
  return out;
}

MetricParams make_metric(const TableSchema& schema, double p, const FeatureMask& mask, double alpha) {
  MetricParams params{p, expand_mask(schema, mask), alpha};
  params.validate(schema.encoded_dim());
  return params;
}

double dist_p(std::span<const double> a, std::span<const double> b, double p) {
  check_p(p);
  if (a.size() != b.size()) throw Error("dist_p: dimension mismatch");
  if (p >= 0.1) {
    const double s = simd::kernels().power_sum(a.data(), b.data(), nullptr, a.size(), p);
    return p == 1.0 ? s : (p == 2.0 ? std::sqrt(s) : std::pow(s, 1.0 / p));
  }
  // log of each term is p * log|d|; combine with log-sum-exp, then divide by p.
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = std::fabs(a[j] - b[j]);
    if (d < simd::kZeroDiff) continue;
    logs.push_back(p * std::log(d));
    mx = std::max(mx, logs.back());
  }
  if (logs.empty()) return 0.0;
  double s = 0.0;
  for (double l : logs) s += std::exp(l - mx);
  return std::exp((mx + std::log(s)) / p);
}

double dist_pm(std::span<const double> a, std::span<const double> b, const MetricParams& params) {
  check_p(params.p);
  if (a.size() != b.size() || params.mask.size() != a.size()) throw Error("dist_pm: dimension mismatch");
  const auto w = params.weights();
  return simd::kernels().power_sum(a.data(), b.data(), w.data(), a.size(), params.p);
}

EncodedDataset::EncodedDataset(const TableSchema& schema, const LabeledDataset& data)
    : EncodedDataset(schema.encoded_dim(), encode_rows(data.instances, schema), data.labels, schema.class_count()) {}

EncodedDataset::EncodedDataset(std::size_t dim, std::vector<double> rows, std::vector<int> labels,
                               std::size_t class_count)
    : dim_(dim), rows_(std::move(rows)), labels_(std::move(labels)), by_class_(class_count) {
  if (rows_.size() != dim_ * labels_.size()) throw Error("encoded dataset: rows and labels disagree");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int y = labels_[i];
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) throw Error("encoded dataset: label out of range");
    by_class_[static_cast<std::size_t>(y)].push_back(i);
  }
}

NeighborSet knn(std::span<const double> query, std::size_t target_class, const MetricParams& params, std::size_t k,
                const EncodedDataset& data) {
  params.validate(data.dim());
  if (query.size() != data.dim()) throw Error("knn: query dimension mismatch");
  if (k == 0) throw Error("knn: K must be positive");
  if (target_class >= data.class_count()) throw Error("knn: target class out of range");
  const auto& candidates = data.rows_of_class(target_class);
  if (candidates.size() < k) {
    throw Error("knn: class " + std::to_string(target_class) + " has " + std::to_string(candidates.size()) +
                " rows, fewer than K = " + std::to_string(k));
  }
  const auto w = params.weights();
  const auto& kern = simd::kernels();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t idx : candidates) {
    scored.emplace_back(kern.power_sum(query.data(), data.row(idx).data(), w.data(), data.dim(), params.p), idx);
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  NeighborSet out;
  out.indices.reserve(k);
  out.distances.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.distances.push_back(scored[i].first);
    out.indices.push_back(scored[i].second);
  }
  return out;
}

std::vector<std::size_t> sample_qhat(const NeighborSet& neighbors, std::size_t count, std::mt19937_64& rng) {
  if (neighbors.empty()) throw Error("sample_qhat: empty neighbor set");
  std::uniform_int_distribution<std::size_t> pick(0, neighbors.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = neighbors.indices[pick(rng)];
  return out;
}

}  // namespace cfflow
