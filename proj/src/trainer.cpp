#include "cfflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace cfflow {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

std::vector<unsigned char> categorical_coordinates(const TableSchema& schema) {
  std::vector<unsigned char> out(schema.encoded_dim(), 0);
  for (const auto& block : schema.blocks()) {
    if (schema.feature(block.feature).is_continuous()) continue;
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(block.offset), block.width, 1);
  }
  return out;
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  if (to <= from) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

}  // namespace

void TrainConfig::normalize(const TableSchema& schema) {
  if (batch_instances == 0) throw Error("batch_instances must be positive");
  if (k == 0) throw Error("K must be positive");
  if (p_values.empty()) throw Error("the set of p values is empty");
  for (double p : p_values) {
    if (!(p > 0.0) || !std::isfinite(p)) throw Error("p values must be positive and finite");
  }
  if (!(alpha >= 1.0)) throw Error("alpha must be >= 1");
  for (const auto& m : masks) {
    if (m.size() != schema.feature_count()) throw Error("mask size does not match the schema");
  }
  const auto empty = schema.empty_mask();
  if (std::find(masks.begin(), masks.end(), empty) == masks.end()) masks.insert(masks.begin(), empty);
  if (class_prior.empty()) class_prior.assign(schema.class_count(), 1.0);
  if (class_prior.size() != schema.class_count()) throw Error("class prior has the wrong number of classes");
  for (double w : class_prior) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error("class prior must be strictly positive on every class");
  }
  if (layers == 0 || hidden == 0 || hidden_layers == 0) throw Error("flow architecture sizes must be positive");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw Error("holdout_fraction must lie in [0, 1)");
  if (dequant_noise < 0.0 || continuous_noise < 0.0) throw Error("dequantization noise must be non-negative");
  if (log_every == 0) log_every = 1;
}

std::size_t sample_target_class(std::size_t label_of_x, std::span<const double> prior, std::mt19937_64& rng) {
  if (prior.size() < 2) throw Error("target sampling needs at least 2 classes");
  if (label_of_x >= prior.size()) throw Error("label out of range");
  std::vector<double> w(prior.begin(), prior.end());
  w[label_of_x] = 0.0;
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return pick(rng);
}

const NeighborSet* NeighborCache::find(std::size_t row, std::size_t target, std::size_t p_index,
                                       std::size_t mask_index) const {
  const auto it = map_.find({row, target, p_index, mask_index});
  return it == map_.end() ? nullptr : &it->second;
}

const NeighborSet& NeighborCache::insert(std::size_t row, std::size_t target, std::size_t p_index,
                                         std::size_t mask_index, NeighborSet set) {
  return map_.insert_or_assign({row, target, p_index, mask_index}, std::move(set)).first->second;
}

TrainingData::TrainingData(const TableSchema& schema_, const EncodedDataset& pool_, const TrainConfig& config)
    : schema(schema_),
      pool(pool_),
      prior(config.class_prior),
      categorical(categorical_coordinates(schema_)),
      mask_count(config.masks.size()) {
  for (double p : config.p_values) {
    for (const auto& m : config.masks) metrics.push_back(make_metric(schema, p, m, config.alpha));
  }
  if (prior.empty()) prior.assign(schema.class_count(), 1.0);
}

const MetricParams& TrainingData::metric(std::size_t p_index, std::size_t mask_index) const {
  return metrics.at(p_index * mask_count + mask_index);
}

TrainingPair build_training_pair(std::span<const double> x, std::size_t label_of_x, const TrainConfig& config,
                                 const TrainingData& data, std::mt19937_64& rng, NeighborCache* cache,
                                 std::optional<std::size_t> cache_row) {
  const std::size_t n_p = config.p_values.size(), n_m = config.masks.size();
  TrainingPair pair;
  const std::size_t target = sample_target_class(label_of_x, data.prior, rng);
  pair.p_index = std::uniform_int_distribution<std::size_t>(0, n_p - 1)(rng);
  pair.mask_index = std::uniform_int_distribution<std::size_t>(0, n_m - 1)(rng);
  const MetricParams& metric = data.metric(pair.p_index, pair.mask_index);

  const NeighborSet* neighbors = nullptr;
  NeighborSet local;
  if (cache && cache_row) neighbors = cache->find(*cache_row, target, pair.p_index, pair.mask_index);
  if (!neighbors) {
    local = knn(x, target, metric, config.k, data.pool);
    neighbors = cache && cache_row ? &cache->insert(*cache_row, target, pair.p_index, pair.mask_index, std::move(local))
                                   : &local;
  }
  pair.target_row = sample_qhat(*neighbors, 1, rng).front();
  if (config.audit_targets && static_cast<std::size_t>(data.pool.label(pair.target_row)) != target) {
    throw Error("training target row " + std::to_string(pair.target_row) + " is not labeled as the target class");
  }
  pair.ctx.x.data.assign(x.begin(), x.end());
  pair.ctx.target = target;
  pair.ctx.p = config.p_values[pair.p_index];
  pair.ctx.mask = config.masks[pair.mask_index];
  return pair;
}

void dequantize(std::span<double> x, std::span<const unsigned char> categorical, double noise,
                double continuous_noise, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (categorical[j]) {
      if (noise > 0.0) x[j] += noise * u(rng);
    } else if (continuous_noise > 0.0) {
      x[j] += continuous_noise * (u(rng) - 0.5);
    }
  }
}

TrainResult train(const TableSchema& schema, const LabeledDataset& data, TrainConfig config) {
  const auto start = std::chrono::steady_clock::now();
  config.normalize(schema);
  if (data.labels.size() != data.instances.size()) throw Error("labels and instances differ in length");
  const std::size_t d = schema.encoded_dim(), classes = schema.class_count();

  // Split rows into the neighbor pool and a held-out set.
  auto split_rng = stream(config.seed, 1);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto holdout = static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(data.size())));
  const std::size_t pool_n = data.size() - holdout;
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool_n));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(pool_n), order.end());

  const auto all_rows = encode_rows(data.instances, schema);
  auto gather = [&](std::size_t from, std::size_t to, std::vector<double>& rows, std::vector<int>& labels) {
    for (std::size_t t = from; t < to; ++t) {
      const std::size_t i = order[t];
      rows.insert(rows.end(), all_rows.begin() + static_cast<std::ptrdiff_t>(i * d),
                  all_rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      labels.push_back(data.labels[i]);
    }
  };
  std::vector<double> pool_rows, held_rows;
  std::vector<int> pool_labels, held_labels;
  gather(0, pool_n, pool_rows, pool_labels);
  gather(pool_n, data.size(), held_rows, held_labels);
  const EncodedDataset pool(d, std::move(pool_rows), std::move(pool_labels), classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (pool.rows_of_class(c).size() < config.k) {
      throw Error("class '" + schema.class_labels()[c] + "' has " + std::to_string(pool.rows_of_class(c).size()) +
                  " training rows, fewer than K = " + std::to_string(config.k));
    }
  }
  const TrainingData tdata(schema, pool, config);

  const ConditionerLayout layout{d, classes, schema.feature_count()};
  FlowArchitecture arch{d, layout.dim(), config.layers, config.hidden, config.hidden_layers, config.log_scale_clamp,
                        config.center_on_query};
  FlowModel model(arch);
  model.set_conditioner(layout);
  auto init_rng = stream(config.seed, 0);
  model.initialize(init_rng, config.init_output_scale);

  TrainReport report;
  report.train_rows = pool_n;
  report.holdout_rows = holdout;

  // Fixed validation pairs: held-out queries, targets from the pool.
  std::vector<double> val_x, val_ctx;
  std::size_t val_n = 0;
  if (holdout > 0 && config.validation_pairs > 0) {
    auto val_rng = stream(config.seed, 3);
    std::uniform_int_distribution<std::size_t> pick(0, holdout - 1);
    val_n = config.validation_pairs;
    val_x.resize(val_n * d);
    val_ctx.resize(val_n * layout.dim());
    for (std::size_t b = 0; b < val_n; ++b) {
      const std::size_t q = pick(val_rng);
      const std::span<const double> xq(held_rows.data() + q * d, d);
      const auto pair = build_training_pair(xq, static_cast<std::size_t>(held_labels[q]), config, tdata, val_rng);
      std::span<double> target(val_x.data() + b * d, d);
      std::copy(pool.row(pair.target_row).begin(), pool.row(pair.target_row).end(), target.begin());
      dequantize(target, tdata.categorical, config.dequant_noise, config.continuous_noise, val_rng);
      layout.flatten_into(pair.ctx, val_ctx.data() + b * layout.dim());
    }
  }
  auto validation_nll = [&]() {
    const auto batch = model.forward_batch(val_x, val_ctx, val_n);
    double s = 0.0;
    for (double lp : batch.log_prob) s -= lp;
    return s / static_cast<double>(val_n);
  };

  auto pair_rng = stream(config.seed, 2);
  NeighborCache cache;
  Adam opt(model.parameters().size(), config.optimizer);
  const std::size_t batch = config.batch_instances, cdim = layout.dim();
  std::vector<double> bx(batch * d), bctx(batch * cdim), grad;
  std::vector<double> step_nll;
  step_nll.reserve(config.steps);
  std::uniform_int_distribution<std::size_t> pick_row(0, pool_n - 1);
  double window = 0.0;
  std::size_t window_n = 0;

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = pick_row(pair_rng);
      const auto pair = build_training_pair(pool.row(row), static_cast<std::size_t>(pool.label(row)), config, tdata,
                                            pair_rng, &cache, row);
      std::span<double> target(bx.data() + b * d, d);
      std::copy(pool.row(pair.target_row).begin(), pool.row(pair.target_row).end(), target.begin());
      dequantize(target, tdata.categorical, config.dequant_noise, config.continuous_noise, pair_rng);
      layout.flatten_into(pair.ctx, bctx.data() + b * cdim);
    }
    double loss = 0.0;
    try {
      loss = model.nll_and_grad(bx, bctx, batch, grad);
    } catch (const Error& e) {
      throw Error("training step " + std::to_string(step) + ": " + e.what());
    }
    opt.step(model.parameters(), grad);
    step_nll.push_back(loss);
    window += loss;
    ++window_n;
    if ((step + 1) % config.log_every == 0 || step + 1 == config.steps) {
      report.logged_steps.push_back(step + 1);
      report.train_nll.push_back(window / static_cast<double>(window_n));
      if (val_n) report.validation_nll.push_back(validation_nll());
      window = 0.0;
      window_n = 0;
    }
  }

  report.steps = config.steps;
  if (config.steps > 0) {
    const std::size_t decile = std::max<std::size_t>(1, config.steps / 10);
    report.first_decile_nll = mean_of(step_nll, 0, decile);
    report.last_decile_nll = mean_of(step_nll, config.steps - decile, config.steps);
  }
  if (val_n) report.final_validation_nll = validation_nll();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

FlowModel train_density(const TableSchema& schema, const EncodedDataset& data, const DensityConfig& config) {
  const std::size_t d = schema.encoded_dim();
  if (data.dim() != d) throw Error("density data does not match the schema");
  if (data.size() == 0) throw Error("density estimator needs at least one row");
  if (config.batch == 0) throw Error("density batch must be positive");
  FlowModel model(FlowArchitecture{d, 0, config.layers, config.hidden, config.hidden_layers, 7.0});
  auto init_rng = stream(config.seed, 10);
  model.initialize(init_rng);
  const auto categorical = categorical_coordinates(schema);
  auto rng = stream(config.seed, 11);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Adam opt(model.parameters().size(), config.optimizer);
  std::vector<double> bx(config.batch * d), grad;
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto row = data.row(pick(rng));
      std::span<double> x(bx.data() + b * d, d);
      std::copy(row.begin(), row.end(), x.begin());
      dequantize(x, categorical, config.dequant_noise, config.continuous_noise, rng);
    }
    try {
      model.nll_and_grad(bx, {}, config.batch, grad);
    } catch (const Error& e) {
      throw Error("density training step " + std::to_string(step) + ": " + e.what());
    }
    opt.step(model.parameters(), grad);
  }
  return model;
}

}  // namespace cfflow
