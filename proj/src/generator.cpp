#include "cfflow/generator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <mutex>
#include <thread>

namespace cfflow {

std::size_t flip_target(std::span<const double> proba) {
  if (proba.size() < 2) throw Error("flip needs at least 2 classes");
  const auto pred = static_cast<std::size_t>(std::max_element(proba.begin(), proba.end()) - proba.begin());
  if (proba.size() == 2) return 1 - pred;
  std::size_t best = pred == 0 ? 1 : 0;
  for (std::size_t c = 0; c < proba.size(); ++c) {
    if (c != pred && proba[c] > proba[best]) best = c;
  }
  return best;
}

std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(row) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GenerationResult generate_counterfactuals(const ModelBundle& bundle, const Instance& x, const GenerateOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const auto& schema = bundle.schema;
  if (opt.n == 0) throw Error("n must be positive");
  if (!(opt.p > 0.0) || !std::isfinite(opt.p)) throw Error("p must be positive and finite");
  if (!(opt.eps > 0.0)) throw Error("eps must be positive");
  schema.validate(x);
  const FeatureMask mask = opt.mask.bits.empty() ? schema.empty_mask() : opt.mask;
  if (mask.size() != schema.feature_count()) throw Error("mask does not match the schema");

  GenerationResult out;
  out.factual = x;
  const auto x_enc = encode(x, schema);
  if (bundle.classifier) {
    out.factual_proba = bundle.classifier->predict_proba(x_enc);
    out.predicted = static_cast<std::size_t>(
        std::max_element(out.factual_proba.begin(), out.factual_proba.end()) - out.factual_proba.begin());
  }
  if (opt.target) {
    if (*opt.target >= schema.class_count()) throw Error("target class out of range");
    out.target = *opt.target;
  } else {
    if (!bundle.classifier) throw Error("bundle has no classifier; a target class is required");
    out.target = flip_target(out.factual_proba);
  }
  if (std::find(bundle.p_values.begin(), bundle.p_values.end(), opt.p) == bundle.p_values.end()) {
    out.warnings.push_back("p = " + format_value(RawValue{opt.p}) + " is outside the trained set");
  }
  if (std::find(bundle.masks.begin(), bundle.masks.end(), mask) == bundle.masks.end()) {
    out.warnings.push_back("mask is not one of the trained masks");
  }

  const std::size_t d = schema.encoded_dim(), n = opt.n;
  const ConditioningContext ctx{x_enc, out.target, opt.p, mask};
  std::vector<double> c = bundle.flow.conditioner()->flatten(ctx);
  std::vector<double> ctx_rows;
  ctx_rows.reserve(n * c.size());
  for (std::size_t i = 0; i < n; ++i) ctx_rows.insert(ctx_rows.end(), c.begin(), c.end());

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(n * d);
  for (double& v : z) v = normal(rng);

  std::vector<double> xs;
  std::vector<std::string> failures(n);
  try {
    xs = bundle.flow.inverse_batch(z, ctx_rows, n);
  } catch (const Error&) {
    xs.assign(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      try {
        const auto row = bundle.flow.inverse_batch({z.data() + i * d, d}, c, 1);
        std::copy(row.begin(), row.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    }
  }

  const MetricParams distance = make_metric(schema, opt.p, mask, bundle.alpha);
  const ScoreParams score_params{opt.lambda1, opt.lambda2, bundle.density ? &*bundle.density : nullptr};
  out.counterfactuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& cf = out.counterfactuals[i];
    if (!failures[i].empty()) {
      cf.features = x;
      cf.encoded = x_enc;
      cf.explanation = "sampling failed: " + failures[i];
      continue;
    }
    cf.features = decode(std::span<const double>(xs.data() + i * d, d), schema);
    cf.encoded = encode(cf.features, schema);
    const auto o = cf_objectives(x, cf.features, schema, opt.eps);
    cf.proximity_num = o[0];
    for (std::size_t f = 0; f < schema.feature_count(); ++f) {
      const auto& spec = schema.feature(f);
      bool changed;
      if (spec.is_continuous()) {
        changed = std::fabs(std::get<double>(cf.features.values[f]) - std::get<double>(x.values[f])) >
                  opt.eps * spec.stats.range();
      } else {
        changed = cf.features.values[f] != x.values[f];
      }
      if (changed) cf.changed_features.push_back(spec.name);
    }
    if (bundle.classifier) {
      const auto proba = bundle.classifier->predict_proba(cf.encoded);
      cf.class_prob = proba[out.target];
      cf.valid = static_cast<std::size_t>(std::max_element(proba.begin(), proba.end()) - proba.begin()) == out.target;
      const double s = score(cf.encoded.view(), x_enc.view(), out.target, *bundle.classifier, score_params, distance);
      if (std::isfinite(s)) cf.score = s;
      else cf.explanation = "score is not finite";
    } else {
      cf.explanation = "bundle has no classifier";
    }
  }
  if (opt.rank_by_score) {
    std::stable_sort(out.counterfactuals.begin(), out.counterfactuals.end(),
                     [](const Counterfactual& a, const Counterfactual& b) {
                       if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
                       return a.score && *a.score > *b.score;
                     });
  }
  out.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<GenerationResult> generate_batch(const ModelBundle& bundle, std::span<const Instance> rows,
                                             const GenerateOptions& options, std::size_t threads) {
  std::vector<GenerationResult> out(rows.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, rows.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        GenerateOptions o = options;
        o.seed = row_seed(options.seed, i);
        out[i] = generate_counterfactuals(bundle, rows[i], o);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace cfflow
