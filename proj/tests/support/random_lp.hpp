#pragma once

// Randomized small LP instances on a half-integer coefficient grid (the grid
// provokes degenerate vertices and ties). All variables are nonnegative,
// which keeps the instances inside the vertex-enumeration oracle's domain.

#include <cstdint>
#include <random>
#include <vector>

#include "ivbounds/lp.hpp"

namespace random_lp {

inline double grid_coef(std::mt19937_64& eng) {
  std::uniform_int_distribution<int> d(-6, 6);
  return d(eng) / 2.0;
}

inline ivbounds::lp::LpProblem make(std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_int_distribution<int> nv(1, 4);
  std::uniform_int_distribution<int> mg(1, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const std::size_t n = static_cast<std::size_t>(nv(eng));
  const std::size_t m = static_cast<std::size_t>(mg(eng));
  ivbounds::lp::LpProblem p(n);
  for (auto& c : p.objective) c = grid_coef(eng);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(n);
    for (auto& a : row) a = grid_coef(eng);
    p.add_ge(std::move(row), grid_coef(eng));
  }
  if (n >= 2 && u(eng) < 0.3) {
    std::vector<double> row(n);
    for (auto& a : row) a = grid_coef(eng);
    p.add_eq(std::move(row), grid_coef(eng));
  }
  // Half of the instances get a bounding box so that bounded optima dominate
  // the mix; the rest are free to be unbounded.
  if (u(eng) < 0.5) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> row(n, 0.0);
      row[j] = -1.0;
      p.add_ge(std::move(row), -3.0);
    }
  }
  return p;
}

}  // namespace random_lp
