#include <algorithm>
#include <cmath>
#include <limits>

#include "cfflow/metrics.hpp"
#include "cfflow/simd.hpp"

namespace cfflow {

LofModel::LofModel(std::vector<double> rows, std::size_t dim, std::size_t k)
    : rows_(std::move(rows)), dim_(dim), k_(k) {
  if (dim_ == 0 || rows_.size() % dim_ != 0) throw Error("LOF: malformed training matrix");
  if (k_ == 0) throw Error("LOF: k must be positive");
  const std::size_t n = size();
  if (n < k_ + 1) {
    throw Error("LOF: need at least k + 1 = " + std::to_string(k_ + 1) + " training rows, got " + std::to_string(n));
  }
  std::vector<std::vector<std::pair<double, std::size_t>>> nbs(n);
  k_distance_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbs[i] = neighbors({rows_.data() + i * dim_, dim_}, i);
    k_distance_[i] = nbs[i].back().first;
  }
  lrd_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (const auto& [d, j] : nbs[i]) reach += std::max(d, k_distance_[j]);
    reach /= static_cast<double>(k_);
    lrd_[i] = reach > 0.0 ? 1.0 / reach : std::numeric_limits<double>::infinity();
  }
}

std::vector<std::pair<double, std::size_t>> LofModel::neighbors(std::span<const double> q,
                                                                std::optional<std::size_t> exclude) const {
  const auto& kern = simd::kernels();
  const std::size_t n = size();
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (exclude && *exclude == j) continue;
    all.emplace_back(std::sqrt(kern.power_sum(q.data(), rows_.data() + j * dim_, nullptr, dim_, 2.0)), j);
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_), all.end());
  all.resize(k_);
  return all;
}

double LofModel::lof_from(const std::vector<std::pair<double, std::size_t>>& nb) const {
  double reach = 0.0, lrd_sum = 0.0;
  for (const auto& [d, j] : nb) {
    reach += std::max(d, k_distance_[j]);
    lrd_sum += lrd_[j];
  }
  reach /= static_cast<double>(k_);
  if (!(reach > 0.0) || !std::isfinite(lrd_sum)) return 1.0;
  // mean(lrd of neighbors) / lrd(query)
  return lrd_sum / static_cast<double>(k_) * reach;
}

double LofModel::score(std::span<const double> query) const {
  if (query.size() != dim_) throw Error("LOF: query dimension mismatch");
  return lof_from(neighbors(query, std::nullopt));
}

double LofModel::training_score(std::size_t i) const {
  if (i >= size()) throw Error("LOF: training row out of range");
  return lof_from(neighbors({rows_.data() + i * dim_, dim_}, i));
}

}  // namespace cfflow
