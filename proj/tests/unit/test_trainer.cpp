#include <algorithm>
#include <cmath>
#include <random>

#include "cfflow/datasets.hpp"
#include "cfflow/trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cfflow;

namespace {

LabeledDataset labeled(const Table& t) { return LabeledDataset{t.rows, t.labels}; }

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("target class is never the current label") {
    std::mt19937_64 rng(1);
    const std::vector<double> binary{1.0, 1.0};
    for (int i = 0; i < 100; ++i) {
      CHECK(sample_target_class(0, binary, rng) == 1);
      CHECK(sample_target_class(1, binary, rng) == 0);
    }
    const std::vector<double> three{1.0, 3.0, 1.0};
    std::size_t ones = 0;
    for (int i = 0; i < 40000; ++i) {
      const auto t = sample_target_class(0, three, rng);
      CHECK(t != 0);
      ones += t == 1;
    }
    CHECK(static_cast<double>(ones) / 40000.0 == doctest::Approx(0.75).epsilon(0.02));
    const std::vector<double> uniform3{1.0, 1.0, 1.0};
    std::size_t zeros = 0;
    for (int i = 0; i < 30000; ++i) {
      const auto t = sample_target_class(2, uniform3, rng);
      CHECK(t != 2);
      zeros += t == 0;
    }
    CHECK(std::fabs(static_cast<double>(zeros) / 30000.0 - 0.5) <= 0.01);
    const std::vector<double> single{1.0};
    CHECK_THROWS_AS(sample_target_class(0, single, rng), Error);
  }

  TEST_CASE("zero steps returns the initialized flow") {
    const Table t = datasets::two_moons(200, 0.1, 1);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.hidden = 8;
    cfg.layers = 2;
    const auto r = train(t.schema, labeled(t), cfg);
    CHECK(r.report.steps == 0);
    CHECK(r.report.train_nll.empty());
    CHECK(r.model.dim() == t.schema.encoded_dim());
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const Table t = datasets::two_moons(200, 0.1, 2);
    TrainConfig cfg;
    cfg.steps = 40;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.batch_instances = 16;
    cfg.seed = 77;
    const auto a = train(t.schema, labeled(t), cfg), b = train(t.schema, labeled(t), cfg);
    CHECK(a.model.parameters() == b.model.parameters());
    cfg.seed = 78;
    CHECK(train(t.schema, labeled(t), cfg).model.parameters() != a.model.parameters());
  }

  TEST_CASE("every drawn target carries the requested class") {
    const Table t = datasets::adult_like(300, 4);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.batch_instances = 32;
    cfg.k = 4;
    cfg.audit_targets = true;
    CHECK_NOTHROW(train(t.schema, labeled(t), cfg));
  }

  TEST_CASE("every drawn target carries its class over 10 000 draws") {
    const Table t = datasets::adult_like(400, 6);
    const LabeledDataset data = labeled(t);
    const EncodedDataset pool(t.schema, data);
    TrainConfig cfg;
    cfg.k = 8;
    cfg.masks = {t.schema.mask_from_names(std::vector<std::string>{"capital-gain", "capital-loss"})};
    cfg.audit_targets = true;
    cfg.normalize(t.schema);
    const TrainingData td(t.schema, pool, cfg);
    std::mt19937_64 rng(3);
    NeighborCache cache;
    std::uniform_int_distribution<std::size_t> row(0, pool.size() - 1);
    std::size_t wrong = 0;
    for (int i = 0; i < 10000; ++i) {
      const std::size_t r = row(rng);
      const auto pair = build_training_pair(pool.row(r), static_cast<std::size_t>(pool.label(r)), cfg, td, rng, &cache, r);
      wrong += static_cast<std::size_t>(pool.label(pair.target_row)) != pair.ctx.target ||
               pair.ctx.target == static_cast<std::size_t>(pool.label(r));
    }
    CHECK(wrong == 0);
  }

  TEST_CASE("masked feature is held fixed when K candidates agree on it") {
    const auto schema = testing::mixed_schema();
    std::vector<double> rows;
    std::vector<int> labels;
    auto add = [&](const Instance& x, int y) {
      const auto e = encode(x, schema);
      rows.insert(rows.end(), e.data.begin(), e.data.end());
      labels.push_back(y);
    };
    // Class 1: five rows share a = 2 with the query, the closer ones differ on a.
    for (int i = 0; i < 5; ++i) add(testing::mixed(2.0, -0.9 + 0.4 * i, i % 2 ? "g" : "b"), 1);
    for (int i = 0; i < 6; ++i) add(testing::mixed(2.1 + 0.01 * i, 0.0, "r"), 1);
    for (int i = 0; i < 4; ++i) add(testing::mixed(-1.0 + i, 0.5, "r"), 0);
    const EncodedDataset pool(schema.encoded_dim(), rows, labels, 2);
    TrainConfig cfg;
    cfg.k = 5;
    cfg.masks = {FeatureMask{{1, 0, 0}}};
    cfg.normalize(schema);
    const TrainingData td(schema, pool, cfg);
    const auto x = encode(testing::mixed(2.0, 0.0, "r"), schema);
    std::mt19937_64 rng(8);
    std::size_t masked_draws = 0, unmasked_changes = 0, unmasked_draws = 0;
    for (int i = 0; i < 4000; ++i) {
      const auto pair = build_training_pair(x.data, 0, cfg, td, rng);
      const bool differs = pool.row(pair.target_row)[0] != x.data[0];
      if (pair.mask_index == 1) {
        ++masked_draws;
        CHECK_FALSE(differs);
      } else {
        ++unmasked_draws;
        unmasked_changes += differs;
      }
    }
    CHECK(masked_draws > 1000);
    CHECK(unmasked_changes > unmasked_draws / 2);
  }

  TEST_CASE("training pairs come from the K nearest rows of the target class") {
    const auto schema = testing::mixed_schema();
    std::vector<double> rows;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
      const auto e = encode(testing::mixed(0.3 * i - 2.0, 0.0, i % 3 == 0 ? "r" : "g"), schema);
      rows.insert(rows.end(), e.data.begin(), e.data.end());
      labels.push_back(i % 2);
    }
    EncodedDataset pool(schema.encoded_dim(), rows, labels, 2);
    TrainConfig cfg;
    cfg.k = 3;
    cfg.p_values = {2.0};
    cfg.normalize(schema);
    TrainingData data(schema, pool, cfg);
    const auto x = encode(testing::mixed(0.0, 0.0, "r"), schema);
    const auto nb = knn(x.data, 1, data.metric(0, 0), 3, pool);
    std::mt19937_64 rng(5);
    NeighborCache cache;
    for (int i = 0; i < 200; ++i) {
      const auto pair = build_training_pair(x.data, 0, cfg, data, rng, &cache, 0);
      CHECK(std::find(nb.indices.begin(), nb.indices.end(), pair.target_row) != nb.indices.end());
      CHECK(pair.ctx.p == 2.0);
      CHECK(pair.ctx.x.data == x.data);
    }
    CHECK(cache.size() == 1);
  }

  TEST_CASE("dequantization ranges") {
    std::mt19937_64 rng(9);
    const std::vector<unsigned char> cat{0, 1, 1, 0};
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> x{1.0, 0.0, 1.0, -2.0};
      dequantize(x, cat, 0.05, 0.05, rng);
      CHECK(x[0] >= 1.0 - 0.025);
      CHECK(x[0] < 1.0 + 0.025);
      CHECK(x[1] >= 0.0);
      CHECK(x[1] < 0.05);
      CHECK(x[2] >= 1.0);
      CHECK(x[2] < 1.05);
      CHECK(x[3] >= -2.025);
      CHECK(x[3] < -1.975);
    }
    std::vector<double> x{1.0, 0.0, 1.0, -2.0};
    const auto keep = x;
    dequantize(x, cat, 0.0, 0.0, rng);
    CHECK(x == keep);
  }

  TEST_CASE("normalize adds the empty mask and validates settings") {
    const auto schema = testing::mixed_schema();
    TrainConfig cfg;
    cfg.masks = {FeatureMask{{1, 0, 0}}};
    cfg.normalize(schema);
    REQUIRE(cfg.masks.size() == 2);
    CHECK(cfg.masks[0] == schema.empty_mask());
    CHECK(cfg.class_prior == std::vector<double>{1.0, 1.0});
    TrainConfig bad;
    bad.p_values = {0.0};
    CHECK_THROWS_AS(bad.normalize(schema), Error);
    bad = TrainConfig{};
    bad.class_prior = {1.0, 0.0};
    CHECK_THROWS_AS(bad.normalize(schema), Error);
    bad = TrainConfig{};
    bad.continuous_noise = -1.0;
    CHECK_THROWS_AS(bad.normalize(schema), Error);
  }

  TEST_CASE("held-out NLL falls by at least 20% on two moons") {
    const Table t = datasets::two_moons(1000, 0.1, 3);
    TrainConfig cfg;
    cfg.steps = 4000;
    cfg.k = 16;
    cfg.p_values = {0.01, 2.0};
    cfg.seed = 1;
    cfg.log_every = 100;
    const auto r = train(t.schema, labeled(t), cfg);
    CHECK(r.report.last_decile_nll < r.report.first_decile_nll);
    REQUIRE(r.report.final_validation_nll.has_value());
    REQUIRE(r.report.validation_nll.size() == 40);
    CHECK(r.report.holdout_rows == 100);
    const double at100 = r.report.validation_nll.front(), final = *r.report.final_validation_nll;
    CHECK((at100 - final) / std::fabs(at100) >= 0.2);
  }

  TEST_CASE("density estimator trains on encoded rows") {
    const Table t = datasets::two_moons(300, 0.1, 4);
    EncodedDataset data(t.schema, labeled(t));
    DensityConfig cfg;
    cfg.steps = 200;
    cfg.hidden = 16;
    cfg.layers = 2;
    const auto m = train_density(t.schema, data, cfg);
    CHECK(m.context_dim() == 0);
    auto mean_log_prob = [&](const FlowModel& f) {
      const auto lp = f.forward_batch(data.rows(), {}, data.size()).log_prob;
      double s = 0.0;
      for (double v : lp) s += v / static_cast<double>(lp.size());
      return s;
    };
    CHECK(mean_log_prob(m) > mean_log_prob(FlowModel(m.arch())) + 0.1);
  }
}
