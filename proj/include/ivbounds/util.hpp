#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

namespace ivbounds::util {

inline constexpr double inf = std::numeric_limits<double>::infinity();

inline bool is_strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i - 1] < v[i])) return false;
  return true;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

// Index of the last grid point <= y, or npos if y precedes the grid.
// Grid must be sorted ascending.
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

inline std::size_t step_index(const std::vector<double>& grid, double y) {
  auto it = std::upper_bound(grid.begin(), grid.end(), y);
  if (it == grid.begin()) return npos;
  return static_cast<std::size_t>(it - grid.begin()) - 1;
}

// Right-continuous step-function lookup: values[i] holds the function value at
// grid[i]; below the first grid point the function is `below`.
inline double step_value(const std::vector<double>& grid,
                         const std::vector<double>& values, double y,
                         double below = 0.0) {
  const std::size_t i = step_index(grid, y);
  return i == npos ? below : values[i];
}

// Piecewise-linear lookup clamped to the endpoint values outside the grid.
inline double linear_value(const std::vector<double>& grid,
                           const std::vector<double>& values, double y) {
  if (y <= grid.front()) return values.front();
  if (y >= grid.back()) return values.back();
  const std::size_t i = step_index(grid, y);
  const double t = (y - grid[i]) / (grid[i + 1] - grid[i]);
  return values[i] + t * (values[i + 1] - values[i]);
}

// Order statistic at probability tau of a sorted sample: the ceil(tau*n)-th
// smallest value (the generalized-inverse empirical quantile).
inline double sorted_quantile(const std::vector<double>& sorted, double tau) {
  const std::size_t n = sorted.size();
  double r = std::ceil(tau * static_cast<double>(n));
  auto k = static_cast<std::size_t>(std::max(1.0, std::min(r, static_cast<double>(n))));
  return sorted[k - 1];
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    s += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

// Deterministic parallel loop: results must be written to disjoint slots by
// index so the schedule cannot affect output. Serial when threads <= 1.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const unsigned t = std::min<unsigned>(threads, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += t) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline unsigned default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

}  // namespace ivbounds::util
