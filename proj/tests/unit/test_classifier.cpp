#include <cmath>
#include <numeric>
#include <random>

#include "cfflow/classifier.hpp"
#include "cfflow/datasets.hpp"
#include "doctest.h"

using namespace cfflow;

namespace {

double accuracy(const Classifier& clf, const TableSchema& schema, const std::vector<Instance>& rows,
                const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) hit += clf.predict(encode(rows[i], schema).view()) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("zero-weight logistic model is uniform") {
    Classifier clf(ClassifierKind::logistic_linear, 3, 2);
    const std::vector<double> x{0.3, -1.0, 2.0};
    const auto p = clf.predict_proba(x);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
  }

  TEST_CASE("probabilities are normalized") {
    Classifier clf(ClassifierKind::mlp_2_layer, 4, 3, 8);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (auto& w : clf.parameters()) w = n(rng);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = 3.0 * n(rng);
      const auto p = clf.predict_proba(x);
      double s = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("argmax follows the sign of w.x + b for a hand-set linear model") {
    Classifier clf(ClassifierKind::logistic_linear, 2, 2);
    // layout [W (2 x 2), b (2)]
    clf.parameters() = {0.0, 0.0, 1.5, -2.0, 0.0, 0.25};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 500; ++i) {
      const std::vector<double> x{u(rng), u(rng)};
      const double margin = 1.5 * x[0] - 2.0 * x[1] + 0.25;
      if (std::fabs(margin) < 1e-9) continue;
      CHECK(clf.predict(x) == (margin > 0 ? 1 : 0));
    }
  }

  TEST_CASE("separable data reaches full training accuracy") {
    std::vector<FeatureSpec> f{{"u", FeatureKind::continuous, {}, {0.0, 1.0, -3.0, 3.0}},
                               {"v", FeatureKind::continuous, {}, {0.0, 1.0, -3.0, 3.0}}};
    TableSchema schema(f, {"neg", "pos"});
    LabeledDataset data;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    while (data.size() < 200) {
      const double a = u(rng), b = u(rng);
      if (std::fabs(a + b) < 0.3) continue;
      data.instances.push_back(Instance{{a, b}});
      data.labels.push_back(a + b > 0 ? 1 : 0);
    }
    const auto fit = fit_classifier(schema, data, ClassifierKind::logistic_linear);
    CHECK(fit.report.train_accuracy >= 0.99);
  }

  TEST_CASE("two-moons mlp generalizes to a held-out fifth") {
    const auto t = datasets::two_moons(1000, 0.1, 21);
    LabeledDataset train{{t.rows.begin(), t.rows.begin() + 800}, {t.labels.begin(), t.labels.begin() + 800}};
    const std::vector<Instance> test(t.rows.begin() + 800, t.rows.end());
    const std::vector<int> test_labels(t.labels.begin() + 800, t.labels.end());
    const auto fit = fit_classifier(t.schema, train, ClassifierKind::mlp_2_layer);
    CHECK(accuracy(fit.classifier, t.schema, test, test_labels) >= 0.95);
  }

  TEST_CASE("single-class input is an error") {
    const auto t = datasets::two_moons(20, 0.1, 1);
    LabeledDataset data{t.rows, std::vector<int>(t.rows.size(), 0)};
    CHECK_THROWS_AS(fit_classifier(t.schema, data, ClassifierKind::logistic_linear), Error);
  }

  TEST_CASE("labeling is pointwise argmax") {
    const auto t = datasets::two_moons(300, 0.1, 6);
    const auto fit = fit_classifier(t.schema, LabeledDataset{t.rows, t.labels}, ClassifierKind::mlp_2_layer);
    const auto labeled = label_dataset(fit.classifier, t.schema, t.rows);
    REQUIRE(labeled.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto p = fit.classifier.predict_proba(encode(t.rows[i], t.schema));
      CHECK(labeled.labels[i] == static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    std::vector<Instance> reversed(t.rows.rbegin(), t.rows.rend());
    const auto rl = label_dataset(fit.classifier, t.schema, reversed);
    for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(rl.labels[i] == labeled.labels[t.rows.size() - 1 - i]);
    CHECK(label_dataset(fit.classifier, t.schema, {}).size() == 0);
  }

  TEST_CASE("loss gradient matches finite differences") {
    const auto t = datasets::two_moons(40, 0.1, 2);
    const auto rows = encode_rows(t.rows, t.schema);
    Classifier clf(ClassifierKind::mlp_2_layer, 2, 2, 5);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (auto& w : clf.parameters()) w = 0.5 * n(rng);
    std::vector<double> g, unused;
    clf.loss_and_grad(rows, t.labels, 1e-3, g);
    for (std::size_t k = 0; k < clf.parameters().size(); ++k) {
      const double h = 1e-6, o = clf.parameters()[k];
      clf.parameters()[k] = o + h;
      const double lp = clf.loss_and_grad(rows, t.labels, 1e-3, unused);
      clf.parameters()[k] = o - h;
      const double lm = clf.loss_and_grad(rows, t.labels, 1e-3, unused);
      clf.parameters()[k] = o;
      CHECK(g[k] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5).scale(1e-3));
    }
  }
}
