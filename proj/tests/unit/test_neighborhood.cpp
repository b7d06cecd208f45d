#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cfflow/neighborhood.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cfflow;

namespace {

// Independent re-implementation of the masked sum.
double naive_pm(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& mask,
                double p, double alpha) {
  double masked = 0.0, free = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = std::fabs(a[j] - b[j]) < 1e-12 ? 0.0 : std::pow(std::fabs(a[j] - b[j]), p);
    (mask[j] != 0.0 ? masked : free) += t;
  }
  return alpha * masked + free;
}

EncodedDataset random_dataset(std::size_t n, std::size_t dim, std::size_t classes, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> c(0, static_cast<int>(classes) - 1);
  std::vector<double> rows(n * dim);
  std::vector<int> labels(n);
  for (auto& v : rows) v = g(rng);
  for (auto& l : labels) l = c(rng);
  return EncodedDataset(dim, std::move(rows), std::move(labels), classes);
}

}  // namespace

TEST_SUITE("neighborhood") {
  TEST_CASE("dist_p basics") {
    const std::vector<double> o{0, 0}, b{3, 4};
    CHECK(dist_p(o, b, 2.0) == doctest::Approx(5.0).epsilon(1e-15));
    for (double p : {0.01, 0.5, 2.0}) CHECK(dist_p(b, b, p) == 0.0);
    CHECK(dist_p(o, b, 0.5) == dist_p(b, o, 0.5));
  }

  TEST_CASE("dist_p at small exponents matches arbitrary-precision values") {
    // (1 + 1)^100
    const std::vector<double> o{0, 0}, one{1, 1};
    CHECK(dist_p(o, one, 0.01) == doctest::Approx(1.2676506002282294e30).epsilon(1e-12));
    // 50-digit reference for a 5-dim pair with one equal coordinate
    const std::vector<double> a{0.3, -1.2, 2.5, 0.0, 0.75}, b{0.1, -1.2, -0.5, 0.4, 0.7501};
    CHECK(dist_p(a, b, 0.01) == doctest::Approx(1.212996283390922489026084e+59).epsilon(1e-10));
    CHECK(dist_p(a, b, 0.05) == doctest::Approx(110149237194.6294762494872).epsilon(1e-10));
    CHECK(dist_p(a, b, 0.5) == doctest::Approx(7.962103392154916335718555).epsilon(1e-12));
    CHECK(dist_p(a, b, 2.0) == doctest::Approx(3.033150179269071406574034).epsilon(1e-12));
  }

  TEST_CASE("dist_pm reduces to the unmasked sum and weights masked terms") {
    const std::vector<double> a{0.0, 1.0, 2.0}, b{0.5, 1.0, 0.0};
    MetricParams none{2.0, {0, 0, 0}, 1e4};
    CHECK(dist_pm(a, b, none) == doctest::Approx(std::pow(dist_p(a, b, 2.0), 2.0)).epsilon(1e-14));
    MetricParams masked{2.0, {1, 0, 0}, 1e4};
    const std::vector<double> c{0.3, 1.0, 2.0};
    CHECK(dist_pm(a, c, masked) == doctest::Approx(1e4 * 0.09).epsilon(1e-14));
  }

  TEST_CASE("dist_pm matches the independent summation on random pairs") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    std::bernoulli_distribution bit(0.3);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> a(10), b(10), m(10);
      for (int j = 0; j < 10; ++j) {
        a[j] = g(rng);
        b[j] = g(rng);
        m[j] = bit(rng) ? 1.0 : 0.0;
      }
      for (double p : {0.01, 0.5, 1.0, 2.0}) {
        const MetricParams params{p, m, 37.0};
        CHECK(dist_pm(a, b, params) == doctest::Approx(naive_pm(a, b, m, p, 37.0)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("mask dominance") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a[j] = g(rng);
      b[j] = g(rng);
    }
    const MetricParams small{0.5, {1, 0, 0, 0, 0, 0}, 10.0}, large{0.5, {1, 1, 0, 1, 0, 0}, 10.0};
    CHECK(dist_pm(a, b, large) > dist_pm(a, b, small));
  }

  TEST_CASE("invalid metric parameters are rejected") {
    const std::vector<double> a{0, 0}, b{1, 1};
    CHECK_THROWS_AS(MetricParams({2.0, {0.5, 0}, 10.0}).validate(2), Error);
    CHECK_THROWS_AS(MetricParams({2.0, {0, 0}, 0.5}).validate(2), Error);
    CHECK_THROWS_AS(MetricParams({2.0, {0}, 10.0}).validate(2), Error);
    CHECK_THROWS_AS(dist_pm(a, b, MetricParams{2.0, {0}, 10.0}), Error);
    CHECK_THROWS_AS(dist_p(a, b, 0.0), Error);
  }

  TEST_CASE("mask expansion keeps one-hot blocks atomic") {
    const auto schema = testing::mixed_schema();
    const std::vector<std::string> names{"c"};
    CHECK(expand_mask(schema, schema.mask_from_names(names)) == std::vector<double>{0, 0, 1, 1, 1});
  }

  TEST_CASE("knn: duplicate and tie-break") {
    // class 1 rows: 0 (dup of query), 1, 2
    EncodedDataset data(2, {0, 0, 1, 0, 0, 2, 5, 5}, {1, 1, 1, 0}, 2);
    const std::vector<double> q{0, 0};
    const auto nb = knn(q, 1, MetricParams{2.0, {0, 0}, 1e4}, 1, data);
    CHECK(nb.indices == std::vector<std::size_t>{0});
    CHECK(nb.distances[0] == 0.0);

    std::vector<double> rows(10 * 2, 9.0);
    rows[5 * 2] = 1.0, rows[5 * 2 + 1] = 0.0;
    rows[9 * 2] = 0.0, rows[9 * 2 + 1] = 1.0;
    EncodedDataset tie(2, rows, std::vector<int>(10, 0), 1);
    CHECK(knn(q, 0, MetricParams{2.0, {0, 0}, 1e4}, 1, tie).indices == std::vector<std::size_t>{5});
  }

  TEST_CASE("knn equals a brute-force full sort") {
    std::mt19937_64 rng(42);
    const auto data = random_dataset(200, 6, 2, rng);
    std::normal_distribution<double> g;
    for (double p : {0.01, 0.5, 2.0}) {
      for (const std::vector<double>& mask : {std::vector<double>(6, 0.0), std::vector<double>{0, 0, 1, 0, 0, 0}}) {
        for (std::size_t k : {1u, 5u, 16u}) {
          std::vector<double> q(6);
          for (auto& v : q) v = g(rng);
          const MetricParams params{p, mask, 1e4};
          const auto nb = knn(q, 1, params, k, data);
          std::vector<std::pair<double, std::size_t>> all;
          for (std::size_t i : data.rows_of_class(1)) {
            const std::vector<double> r(data.row(i).begin(), data.row(i).end());
            all.emplace_back(naive_pm(q, r, mask, p, 1e4), i);
          }
          std::sort(all.begin(), all.end());
          REQUIRE(nb.size() == k);
          for (std::size_t t = 0; t < k; ++t) CHECK(nb.indices[t] == all[t].second);
          CHECK(std::is_sorted(nb.distances.begin(), nb.distances.end()));
        }
      }
    }
  }

  TEST_CASE("knn rejects too-small classes") {
    EncodedDataset data(1, {0, 1, 2}, {0, 0, 1}, 2);
    const std::vector<double> q{0};
    CHECK_THROWS_AS(knn(q, 1, MetricParams{2.0, {0}, 1e4}, 2, data), Error);
  }

  TEST_CASE("sample_qhat is uniform over the neighborhood and seeded") {
    NeighborSet one{{7}, {0.0}};
    std::mt19937_64 rng(1);
    for (auto i : sample_qhat(one, 50, rng)) CHECK(i == 7);

    NeighborSet four{{3, 8, 11, 40}, {0, 1, 2, 3}};
    std::mt19937_64 r1(5);
    const auto draws = sample_qhat(four, 100000, r1);
    for (std::size_t idx : four.indices) {
      const double f = static_cast<double>(std::count(draws.begin(), draws.end(), idx)) / 100000.0;
      CHECK(std::fabs(f - 0.25) <= 0.01);
    }
    std::mt19937_64 a(9), b(9);
    CHECK(sample_qhat(four, 100, a) == sample_qhat(four, 100, b));
    NeighborSet empty;
    CHECK_THROWS_AS(sample_qhat(empty, 1, a), Error);
  }
}
