#include "cfflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace cfflow {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double raw_number(const RawValue& v) { return std::get<double>(v); }

struct ChangeCounts {
  std::size_t cat = 0, num = 0, num_eps = 0;
  double l1_z = 0.0;
};

ChangeCounts changes(const Instance& x0, const Instance& cf, const TableSchema& schema, double eps) {
  if (x0.values.size() != schema.feature_count() || cf.values.size() != schema.feature_count()) {
    throw Error("instance does not match the schema");
  }
  ChangeCounts c;
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const auto& spec = schema.feature(f);
    if (spec.is_continuous()) {
      const double delta = std::fabs(raw_number(cf.values[f]) - raw_number(x0.values[f]));
      if (delta > kChangeTolerance) ++c.num;
      if (delta > eps * spec.stats.range()) ++c.num_eps;
      c.l1_z += delta / spec.stats.stddev;
    } else if (std::get<std::string>(cf.values[f]) != std::get<std::string>(x0.values[f])) {
      ++c.cat;
    }
  }
  return c;
}

double frac(std::size_t count, std::size_t total) {
  return total ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
}

template <typename F>
double mean_over(std::span<const Instance> cfs, F&& f) {
  if (cfs.empty()) return kNaN;
  double s = 0.0;
  for (const auto& cf : cfs) s += f(cf);
  return s / static_cast<double>(cfs.size());
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

Objectives cf_objectives(const Instance& x0, const Instance& cf, const TableSchema& schema, double eps) {
  const auto c = changes(x0, cf, schema, eps);
  return {c.l1_z, frac(c.cat, schema.categorical_count()), frac(c.num_eps, schema.continuous_count())};
}

double validity(std::span<const Instance> cfs, std::size_t target, const Classifier& clf, const TableSchema& schema) {
  if (cfs.empty()) throw Error("validity of an empty counterfactual list");
  std::size_t hits = 0;
  for (const auto& cf : cfs) {
    if (static_cast<std::size_t>(clf.predict(encode(cf, schema).view())) == target) ++hits;
  }
  return frac(hits, cfs.size());
}

double sparsity_cat(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema) {
  return mean_over(cfs, [&](const Instance& cf) {
    return frac(changes(x0, cf, schema, kDefaultEps).cat, schema.categorical_count());
  });
}

double sparsity_num(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema) {
  return mean_over(cfs, [&](const Instance& cf) {
    return frac(changes(x0, cf, schema, kDefaultEps).num, schema.continuous_count());
  });
}

double eps_sparsity(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema, double eps) {
  if (!(eps > 0.0)) throw Error("eps must be positive");
  return mean_over(cfs, [&](const Instance& cf) {
    return frac(changes(x0, cf, schema, eps).num_eps, schema.continuous_count());
  });
}

double proximity_num(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema) {
  return mean_over(cfs, [&](const Instance& cf) { return changes(x0, cf, schema, kDefaultEps).l1_z; });
}

double eps_change_rate(const Instance& x0, std::span<const Instance> cfs, const TableSchema& schema,
                       std::size_t feature, double eps) {
  const auto& spec = schema.feature(feature);
  if (!spec.is_continuous()) throw Error("eps change rate needs a continuous feature, got '" + spec.name + "'");
  return mean_over(cfs, [&](const Instance& cf) {
    const double delta = std::fabs(raw_number(cf.values[feature]) - raw_number(x0.values[feature]));
    return delta > eps * spec.stats.range() ? 1.0 : 0.0;
  });
}

double score(std::span<const double> cf, std::span<const double> x0, std::size_t target, const Classifier& clf,
             const ScoreParams& params, const MetricParams& distance) {
  if (params.lambda1 < 0.0 || params.lambda2 < 0.0) throw Error("score weights must be non-negative");
  const auto probs = clf.predict_proba(cf);
  if (target >= probs.size()) throw Error("score: target class out of range");
  double s = std::log(std::max(probs[target], std::numeric_limits<double>::min()));
  if (params.lambda1 != 0.0) s -= params.lambda1 * dist_pm(x0, cf, distance);
  if (params.lambda2 != 0.0) {
    if (!params.density) throw Error("score: lambda2 > 0 needs a density estimator");
    if (params.density->dim() != cf.size() || params.density->context_dim() != 0) {
      throw Error("score: density estimator does not match the encoded dimension");
    }
    const auto lp = params.density->forward_batch(cf, {}, 1).log_prob[0];
    s += params.lambda2 * std::exp(lp);
  }
  return s;
}

MetricsReport evaluate_counterfactuals(std::span<const InstanceCounterfactuals> items, const TableSchema& schema,
                                       const Classifier& clf, const LofModel& lof, const MetricsOptions& options) {
  if (!(options.eps > 0.0)) throw Error("eps must be positive");
  MetricsReport report;
  report.eps = options.eps;
  report.k_lof = lof.k();
  report.instances = items.size();
  for (const auto& item : items) report.counterfactuals += item.counterfactuals.size();
  if (report.counterfactuals == 0) throw Error("no counterfactuals to evaluate");

  struct Scored {
    std::vector<Objectives> valid_objectives;
    std::vector<double> lof;
  };
  std::vector<Scored> scored(items.size());
  Objectives pool_max{0.0, 0.0, 0.0};
  double prob_sum = 0.0, prox_sum = 0.0, cat_sum = 0.0, num_sum = 0.0, eps_sum = 0.0, lof_sum = 0.0;

  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    auto& m = report.per_instance.emplace_back();
    m.total = item.counterfactuals.size();
    double p_sum = 0.0, prox = 0.0, cat = 0.0, num = 0.0, eps = 0.0;
    for (const auto& cf : item.counterfactuals) {
      const auto enc = encode(cf, schema);
      const auto probs = clf.predict_proba(enc);
      if (item.target >= probs.size()) throw Error("target class out of range");
      p_sum += probs[item.target];
      const auto pred = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      if (pred != item.target) continue;
      ++m.valid;
      const auto c = changes(item.factual, cf, schema, options.eps);
      const Objectives o{c.l1_z, frac(c.cat, schema.categorical_count()), frac(c.num_eps, schema.continuous_count())};
      for (std::size_t k = 0; k < 3; ++k) pool_max[k] = std::max(pool_max[k], o[k]);
      scored[i].valid_objectives.push_back(o);
      scored[i].lof.push_back(lof.score(enc.view()));
      prox += c.l1_z;
      cat += o[1];
      num += frac(c.num, schema.continuous_count());
      eps += o[2];
    }
    prob_sum += p_sum;
    m.validity = frac(m.valid, m.total);
    m.mean_class_prob = m.total ? p_sum / static_cast<double>(m.total) : kNaN;
    report.valid += m.valid;
    prox_sum += prox;
    cat_sum += cat;
    num_sum += num;
    eps_sum += eps;
    double l = 0.0;
    for (double v : scored[i].lof) l += v;
    lof_sum += l;
    if (m.valid) {
      const auto nv = static_cast<double>(m.valid);
      m.proximity_num = prox / nv;
      m.sparsity_cat = cat / nv;
      m.sparsity_num = num / nv;
      m.eps_sparsity_num = eps / nv;
      m.lof = l / nv;
    } else {
      m.proximity_num = m.sparsity_cat = m.sparsity_num = m.eps_sparsity_num = m.lof = m.hypervolume = kNaN;
    }
  }

  for (std::size_t k = 0; k < 3; ++k) report.hv_reference[k] = pool_max[k] > 0.0 ? 1.1 * pool_max[k] : 1.0;

  report.validity = frac(report.valid, report.counterfactuals);
  report.mean_class_prob = prob_sum / static_cast<double>(report.counterfactuals);
  if (report.valid == 0) {
    report.proximity_num = report.sparsity_cat = report.sparsity_num = report.eps_sparsity_num = kNaN;
    report.hypervolume_log = report.lof_log = kNaN;
    return report;
  }
  const auto nv = static_cast<double>(report.valid);
  report.proximity_num = prox_sum / nv;
  report.sparsity_cat = cat_sum / nv;
  report.sparsity_num = num_sum / nv;
  report.eps_sparsity_num = eps_sum / nv;
  report.lof_log = std::log(lof_sum / nv);
  double hv_sum = 0.0;
  std::size_t hv_n = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (scored[i].valid_objectives.empty()) continue;
    report.per_instance[i].hypervolume = hypervolume_3d(scored[i].valid_objectives, report.hv_reference);
    hv_sum += report.per_instance[i].hypervolume;
    ++hv_n;
  }
  report.hypervolume_log = std::log(hv_sum / static_cast<double>(hv_n) + 1e-12);
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["instances"] = instances;
  j["counterfactuals"] = counterfactuals;
  j["valid"] = valid;
  j["validity"] = number_or_null(validity);
  j["mean_class_prob"] = number_or_null(mean_class_prob);
  j["proximity_num"] = number_or_null(proximity_num);
  j["sparsity_cat"] = number_or_null(sparsity_cat);
  j["sparsity_num"] = number_or_null(sparsity_num);
  j["eps_sparsity_num"] = number_or_null(eps_sparsity_num);
  j["hypervolume_log"] = number_or_null(hypervolume_log);
  j["lof_log"] = number_or_null(lof_log);
  j["hv_reference"] = {hv_reference[0], hv_reference[1], hv_reference[2]};
  j["eps"] = eps;
  j["k_lof"] = k_lof;
  return j;
}

void write_report_table(std::ostream& out, const MetricsReport& r, const std::string& label) {
  const std::vector<std::pair<std::string, double>> cols{
      {"Validity", r.validity},          {"Classif.prob", r.mean_class_prob}, {"Proximity.cont", r.proximity_num},
      {"Sparsity.cat", r.sparsity_cat},  {"Sparsity.cont", r.sparsity_num},   {"EpsSparsity.cont", r.eps_sparsity_num},
      {"LOF.log", r.lof_log},            {"Hypervol.log", r.hypervolume_log}};
  const auto width = std::max<std::size_t>(label.size(), 6);
  out << std::left << std::setw(static_cast<int>(width)) << "Model";
  for (const auto& [name, v] : cols) out << "  " << std::right << std::setw(16) << name;
  out << '\n' << std::left << std::setw(static_cast<int>(width)) << label;
  out << std::right << std::fixed << std::setprecision(4);
  for (const auto& [name, v] : cols) {
    out << "  " << std::setw(16);
    if (std::isfinite(v)) out << v;
    else out << "nan";
  }
  out << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_instance_csv(std::ostream& out, const MetricsReport& r) {
  out << "instance,total,valid,validity,class_prob,proximity_num,sparsity_cat,sparsity_num,eps_sparsity_num,"
         "hypervolume,lof\n";
  const auto field = [&](double v) -> std::string {
    return std::isfinite(v) ? format_value(RawValue{v}) : std::string();
  };
  for (std::size_t i = 0; i < r.per_instance.size(); ++i) {
    const auto& m = r.per_instance[i];
    out << i << ',' << m.total << ',' << m.valid << ',' << field(m.validity) << ',' << field(m.mean_class_prob) << ','
        << field(m.proximity_num) << ',' << field(m.sparsity_cat) << ',' << field(m.sparsity_num) << ','
        << field(m.eps_sparsity_num) << ',' << field(m.hypervolume) << ',' << field(m.lof) << '\n';
  }
}

}  // namespace cfflow
