#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "cfflow/classifier.hpp"
#include "cfflow/flow.hpp"
#include "cfflow/neighborhood.hpp"
#include "cfflow/schema.hpp"

namespace cfflow {

inline constexpr double kDefaultEps = 0.05;
inline constexpr std::size_t kDefaultLofK = 20;
inline constexpr double kChangeTolerance = 1e-9;

using Objectives = std::array<double, 3>;

// Volume dominated by `points` (all objectives minimized) inside the box bounded
// by `reference`. Points not strictly below the reference in every coordinate add nothing.
double hypervolume_3d(std::span<const Objectives> points, const Objectives& reference);
// ln(volume + 1e-12).
double hypervolume_log(std::span<const Objectives> points, const Objectives& reference);

// Local outlier factor against a fixed training set, Euclidean metric, exactly
// k neighbors per query.
class LofModel {
 public:
  LofModel() = default;
  LofModel(std::vector<double> rows, std::size_t dim, std::size_t k);

  std::size_t k() const { return k_; }
  std::size_t size() const { return dim_ ? rows_.size() / dim_ : 0; }
  // LOF of an outside query; 1 when the reachability distances degenerate to zero.
  double score(std::span<const double> query) const;
  // LOF of training row i with itself excluded from its neighbors.
  double training_score(std::size_t i) const;

 private:
  std::vector<std::pair<double, std::size_t>> neighbors(std::span<const double> q,
                                                        std::optional<std::size_t> exclude) const;
  double lof_from(const std::vector<std::pair<double, std::size_t>>& nb) const;

  std::vector<double> rows_;
  std::size_t dim_ = 0;
  std::size_t k_ = 0;
  std::vector<double> k_distance_;
  std::vector<double> lrd_;  // +inf for degenerate rows
};

// Per-CF objective vector used for the hypervolume: (proximity_num, sparsity_cat, eps_sparsity_num).
Objectives cf_objectives(const Instance& x0, const Instance& cf, const TableSchema& schema, double eps = kDefaultEps);

// Fraction of `cfs` the classifier assigns to `target`.
double validity(std::span<const Instance> cfs, std::size_t target, const Classifier& clf, const TableSchema& schema);

// The following average over the given list; callers pass the valid CFs.
double sparsity_cat(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema);
double sparsity_num(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema);
double eps_sparsity(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema,
                    double eps = kDefaultEps);
// Mean L1 distance over z-scored continuous coordinates.
double proximity_num(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema);

// Restricted to one feature: fraction of CFs whose change on it exceeds eps * range.
double eps_change_rate(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema,
                       std::size_t feature, double eps = kDefaultEps);

struct ScoreParams {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  const FlowModel* density = nullptr;  // unconditional; required when lambda2 > 0
};

// log p(target | cf) - lambda1 * d(x0, cf) + lambda2 * p_data(cf); d is dist_pm.
double score(std::span<const double> cf, std::span<const double> x0, std::size_t target, const Classifier& clf,
             const ScoreParams& params, const MetricParams& distance);

struct InstanceCounterfactuals {
  Instance factual;
  std::size_t target = 0;
  std::vector<Instance> counterfactuals;
};

struct InstanceMetrics {
  std::size_t total = 0;
  std::size_t valid = 0;
  double validity = 0.0;
  double mean_class_prob = 0.0;
  // NaN when no CF is valid.
  double proximity_num = 0.0;
  double sparsity_cat = 0.0;
  double sparsity_num = 0.0;
  double eps_sparsity_num = 0.0;
  double hypervolume = 0.0;
  double lof = 0.0;
};

struct MetricsOptions {
  double eps = kDefaultEps;
};

struct MetricsReport {
  std::size_t instances = 0;
  std::size_t counterfactuals = 0;
  std::size_t valid = 0;
  double validity = 0.0;
  double mean_class_prob = 0.0;  // over all CFs
  double proximity_num = 0.0;    // over valid CFs from here on
  double sparsity_cat = 0.0;
  double sparsity_num = 0.0;
  double eps_sparsity_num = 0.0;
  double hypervolume_log = 0.0;  // ln(mean per-instance volume + 1e-12)
  double lof_log = 0.0;          // ln(mean LOF)
  Objectives hv_reference{};
  double eps = kDefaultEps;
  std::size_t k_lof = kDefaultLofK;
  std::vector<InstanceMetrics> per_instance;

  nlohmann::json to_json() const;
};

// Throws Error when there is nothing to evaluate.
MetricsReport evaluate_counterfactuals(std::span<const InstanceCounterfactuals> items, const TableSchema& schema,
                                       const Classifier& clf, const LofModel& lof, const MetricsOptions& options = {});

void write_report_table(std::ostream& out, const MetricsReport& report, const std::string& label = "cfflow");
void write_instance_csv(std::ostream& out, const MetricsReport& report);

}  // namespace cfflow
