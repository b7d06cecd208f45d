#pragma once

#include <cstdint>
#include <string>

#include "cfflow/csv.hpp"

namespace cfflow::datasets {

// Two interleaved half circles with Gaussian noise; features x1, x2, label 0/1.
std::string two_moons_csv(std::size_t n, double noise, std::uint64_t seed);
Table two_moons(std::size_t n, double noise, std::uint64_t seed);

// Census-income-shaped synthetic table: 4 continuous (age, capital-gain,
// capital-loss, hours-per-week; zero-inflated / integer valued like the real
// columns) and 8 categorical features, label "income" in {<=50K, >50K}.
std::string adult_like_csv(std::size_t n, std::uint64_t seed);
Table adult_like(std::size_t n, std::uint64_t seed);

}  // namespace cfflow::datasets
