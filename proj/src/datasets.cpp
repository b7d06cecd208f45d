#include "cfflow/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace cfflow::datasets {
namespace {

template <std::size_t N>
const std::string& pick(std::mt19937_64& rng, const std::array<std::string, N>& labels,
                        const std::array<double, N>& weights) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return labels[dist(rng)];
}

std::string fmt(double v) { return format_value(RawValue{v}); }

}  // namespace

std::string two_moons_csv(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, noise);
  std::ostringstream os;
  os << "x1,x2,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x += jitter(rng);
    y += jitter(rng);
    os << fmt(x) << ',' << fmt(y) << ',' << label << '\n';
  }
  return os.str();
}

Table two_moons(std::size_t n, double noise, std::uint64_t seed) {
  std::istringstream in(two_moons_csv(n, noise, seed));
  return parse_csv(in, {}, "two-moons");
}

std::string adult_like_csv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  static const std::array<std::string, 4> workclass{"Private", "Self-emp", "Gov", "Other"};
  static const std::array<std::string, 5> education{"HS-grad", "Some-college", "Bachelors", "Masters",
                                                    "Doctorate"};
  static const std::array<std::string, 3> marital{"Married", "Never-married", "Divorced"};
  static const std::array<std::string, 5> occupation{"Craft", "Sales", "Exec-managerial", "Prof-specialty",
                                                     "Service"};
  static const std::array<std::string, 4> relationship{"Husband", "Wife", "Own-child", "Not-in-family"};
  static const std::array<std::string, 3> race{"White", "Black", "Other"};
  static const std::array<std::string, 2> sex{"Male", "Female"};
  static const std::array<std::string, 3> country{"United-States", "Mexico", "Other"};
  // Capital amounts recur across records in census extracts.
  static constexpr std::array<double, 10> gains{15024, 7688, 7298, 3103, 5178, 5013, 4386, 8614, 3325, 2174};
  static constexpr std::array<double, 8> losses{1902, 1977, 1887, 1848, 1485, 1740, 1602, 1590};

  std::ostringstream os;
  os << "age,capital-gain,capital-loss,hours-per-week,workclass,education,marital-status,occupation,"
        "relationship,race,sex,native-country,income\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double age = std::clamp(std::round(38.0 + 13.0 * normal(rng)), 17.0, 80.0);
    const double gain = unit(rng) < 0.85 ? 0.0 : gains[std::uniform_int_distribution<std::size_t>(0, 9)(rng)];
    const double loss = unit(rng) < 0.92 ? 0.0 : losses[std::uniform_int_distribution<std::size_t>(0, 7)(rng)];
    const double hours = unit(rng) < 0.55 ? 40.0 : std::clamp(std::round(40.0 + 12.0 * normal(rng)), 1.0, 99.0);
    const auto& wc = pick(rng, workclass, {0.65, 0.12, 0.15, 0.08});
    const auto edu_i = std::discrete_distribution<std::size_t>{0.35, 0.3, 0.2, 0.1, 0.05}(rng);
    const auto& ms = pick(rng, marital, {0.5, 0.33, 0.17});
    const auto occ_i = std::discrete_distribution<std::size_t>{0.25, 0.2, 0.2, 0.2, 0.15}(rng);
    const auto& rel = ms == "Married" ? pick(rng, relationship, {0.75, 0.2, 0.0, 0.05})
                                      : pick(rng, relationship, {0.0, 0.0, 0.45, 0.55});
    const auto& rc = pick(rng, race, {0.8, 0.1, 0.1});
    const auto& sx = rel == "Husband" ? sex[0] : (rel == "Wife" ? sex[1] : pick(rng, sex, {0.55, 0.45}));
    const auto& nc = pick(rng, country, {0.88, 0.05, 0.07});

    static constexpr std::array<double, 5> edu_effect{0.0, 0.4, 1.1, 1.6, 2.1};
    static constexpr std::array<double, 5> occ_effect{0.0, 0.2, 0.9, 0.8, -0.5};
    double logit = -3.2 + 0.035 * (age - 38.0) + (gain > 0 ? 2.8 : 0.0) + (loss > 0 ? 1.3 : 0.0) +
                   0.04 * (hours - 40.0) + edu_effect[edu_i] + occ_effect[occ_i] +
                   (ms == "Married" ? 1.2 : 0.0) + (wc == "Self-emp" ? 0.3 : 0.0);
    const bool rich = unit(rng) < 1.0 / (1.0 + std::exp(-logit));

    os << fmt(age) << ',' << fmt(gain) << ',' << fmt(loss) << ',' << fmt(hours) << ',' << wc << ','
       << education[edu_i] << ',' << ms << ',' << occupation[occ_i] << ',' << rel << ',' << rc << ',' << sx
       << ',' << nc << ',' << (rich ? ">50K" : "<=50K") << '\n';
  }
  return os.str();
}

Table adult_like(std::size_t n, std::uint64_t seed) {
  std::istringstream in(adult_like_csv(n, seed));
  return parse_csv(in, CsvOptions{"income", std::nullopt}, "adult-like");
}

}  // namespace cfflow::datasets
