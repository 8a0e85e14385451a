#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ivbounds/errors.hpp"
#include "ivbounds/util.hpp"

namespace ivbounds {

// Which counterfactual distribution is being bounded: `treated` bounds the
// untreated outcome of the treated, `untreated` the treated outcome of the
// untreated.
enum class Arm { treated, untreated };

inline const char* arm_name(Arm a) {
  return a == Arm::treated ? "treated" : "untreated";
}

}  // namespace ivbounds

namespace ivbounds::data {

struct InstrumentSupport {
  std::vector<double> levels;  // strictly increasing

  std::size_t size() const { return levels.size(); }

  void validate() const {
    if (levels.size() < 2)
      throw DataError("instrument support needs at least two levels");
    if (!util::is_strictly_increasing(levels))
      throw DataError("instrument levels must be strictly increasing");
    for (double z : levels)
      if (!std::isfinite(z)) throw DataError("non-finite instrument level");
  }
};

struct Observation {
  double y = 0.0;
  int d = 0;           // 0 or 1
  std::size_t z = 0;   // index into the support levels
};

struct Sample {
  InstrumentSupport support;
  std::vector<Observation> obs;

  void validate() const {
    support.validate();
    if (obs.empty()) throw DataError("empty sample");
    for (const auto& o : obs) {
      if (!std::isfinite(o.y)) throw DataError("non-finite outcome");
      if (o.d != 0 && o.d != 1) throw DataError("treatment must be 0 or 1");
      if (o.z >= support.size()) throw DataError("instrument index out of range");
    }
  }
};

enum class GridPolicy { all_unique, pooled_quantiles };

struct GridSpec {
  GridPolicy policy = GridPolicy::all_unique;
  std::size_t k = 101;  // pooled_quantiles only
};

enum class CdfKind { step, smooth };

// Estimated (or analytically supplied) probability objects on a common
// outcome grid. Columns are nondecreasing in the grid index; `joint[d][l][i]`
// is P[Y <= y_i, D = d | Z = z_l] and `marginal[d][i]` is P[Y <= y_i | D = d].
// An empty treatment stratum leaves `marginal[d]` empty and is an error only
// when that marginal is requested.
struct EmpiricalModel {
  std::vector<double> levels;
  std::vector<double> propensity;
  std::vector<std::size_t> n_per_level;
  std::vector<double> y_grid;
  std::array<std::vector<std::vector<double>>, 2> joint;
  std::array<std::vector<double>, 2> marginal;
  double treated_share = 0.0;
  CdfKind kind = CdfKind::step;
  std::vector<std::string> warnings;

  std::size_t n_levels() const { return levels.size(); }
  std::size_t grid_size() const { return y_grid.size(); }

  double value_at(const std::vector<double>& col, double y) const {
    return kind == CdfKind::step ? util::step_value(y_grid, col, y)
                                 : util::linear_value(y_grid, col, y);
  }

  double joint_at(int d, std::size_t l, double y) const {
    return value_at(joint[static_cast<std::size_t>(d)][l], y);
  }

  double marginal_at(int d, double y) const {
    const auto& m = marginal[static_cast<std::size_t>(d)];
    if (m.empty())
      throw DataError(std::string("empty treatment stratum d=") + std::to_string(d));
    return value_at(m, y);
  }

  // Pooled outcome CDF values on the grid, weighting strata by share.
  std::vector<double> pooled_cdf() const {
    std::vector<double> out(y_grid.size(), 0.0);
    for (std::size_t i = 0; i < y_grid.size(); ++i) {
      double v = 0.0;
      if (!marginal[1].empty()) v += treated_share * marginal[1][i];
      if (!marginal[0].empty()) v += (1.0 - treated_share) * marginal[0][i];
      out[i] = v;
    }
    return out;
  }

  // Evaluation grid: k equispaced pooled-sample quantile levels mapped
  // through the generalized inverse of the pooled CDF, deduplicated.
  std::vector<double> eval_quantile_grid(std::size_t k) const {
    const std::vector<double> pool = pooled_cdf();
    std::vector<double> out;
    out.reserve(k);
    for (std::size_t j = 1; j <= k; ++j) {
      const double tau = static_cast<double>(j) / static_cast<double>(k + 1);
      auto it = std::lower_bound(pool.begin(), pool.end(), tau);
      const std::size_t idx = it == pool.end()
                                  ? y_grid.size() - 1
                                  : static_cast<std::size_t>(it - pool.begin());
      const double q = y_grid[idx];
      if (out.empty() || q > out.back()) out.push_back(q);
    }
    return out;
  }

  void validate() const {
    if (!util::is_strictly_increasing(levels))
      throw DataError("model levels not strictly increasing");
    if (!util::is_strictly_increasing(y_grid))
      throw DataError("model grid not strictly increasing");
    if (propensity.size() != levels.size())
      throw DataError("propensity size mismatch");
    const double tol = 1e-9;
    for (double p : propensity)
      if (p < -tol || p > 1.0 + tol) throw DataError("propensity outside [0,1]");
    for (int d = 0; d < 2; ++d) {
      const auto& block = joint[static_cast<std::size_t>(d)];
      if (block.size() != levels.size()) throw DataError("joint block size mismatch");
      for (std::size_t l = 0; l < block.size(); ++l) {
        const auto& col = block[l];
        if (col.size() != y_grid.size()) throw DataError("joint column size mismatch");
        const double cap = d == 1 ? propensity[l] : 1.0 - propensity[l];
        double prev = 0.0;
        for (double v : col) {
          if (v < prev - tol) throw DataError("joint column not monotone");
          if (v < -tol || v > cap + tol) throw DataError("joint column out of range");
          prev = v;
        }
      }
      const auto& m = marginal[static_cast<std::size_t>(d)];
      if (!m.empty()) {
        if (m.size() != y_grid.size()) throw DataError("marginal size mismatch");
        double prev = 0.0;
        for (double v : m) {
          if (v < prev - tol) throw DataError("marginal not monotone");
          if (v < -tol || v > 1.0 + tol) throw DataError("marginal out of range");
          prev = v;
        }
      }
    }
  }
};

struct ColumnMap {
  std::string y = "y";
  std::string d = "d";
  std::string z = "z";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& tok, long line) {
  if (tok.empty()) throw ParseError("missing field", line);
  const char* s = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ParseError("cannot parse number '" + tok + "'", line);
  return v;
}

}  // namespace detail

// Comma-separated input with a header row naming the outcome, treatment, and
// instrument columns. Instrument levels are the sorted distinct values seen.
inline Sample load_csv(const std::string& path, const ColumnMap& cols = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const auto header = detail::split_csv_line(line);
  long iy = -1, id = -1, iz = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == cols.y) iy = static_cast<long>(j);
    if (header[j] == cols.d) id = static_cast<long>(j);
    if (header[j] == cols.z) iz = static_cast<long>(j);
  }
  if (iy < 0 || id < 0 || iz < 0)
    throw ParseError("header must contain columns '" + cols.y + "', '" + cols.d +
                         "', '" + cols.z + "'",
                     1);

  struct Raw {
    double y, z;
    int d;
  };
  std::vector<Raw> raw;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(f.size()),
                       line_no);
    const double y = detail::parse_number(f[static_cast<std::size_t>(iy)], line_no);
    const double dv = detail::parse_number(f[static_cast<std::size_t>(id)], line_no);
    const double z = detail::parse_number(f[static_cast<std::size_t>(iz)], line_no);
    if (dv != 0.0 && dv != 1.0)
      throw ParseError("treatment must be 0 or 1", line_no);
    if (!std::isfinite(y) || !std::isfinite(z))
      throw ParseError("non-finite value", line_no);
    raw.push_back({y, z, dv == 1.0 ? 1 : 0});
  }
  if (raw.empty()) throw DataError("no data rows in " + path);

  std::vector<double> levels;
  levels.reserve(raw.size());
  for (const auto& r : raw) levels.push_back(r.z);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  Sample s;
  s.support.levels = levels;
  s.support.validate();
  s.obs.reserve(raw.size());
  for (const auto& r : raw) {
    const auto it = std::lower_bound(levels.begin(), levels.end(), r.z);
    s.obs.push_back({r.y, r.d, static_cast<std::size_t>(it - levels.begin())});
  }
  return s;
}

// Cell-count estimator of the probability objects on the chosen grid.
inline EmpiricalModel estimate(const Sample& sample, const GridSpec& grid = {}) {
  sample.validate();
  const std::size_t L = sample.support.size();

  EmpiricalModel m;
  m.levels = sample.support.levels;
  m.n_per_level.assign(L, 0);
  std::vector<std::size_t> n_treated(L, 0);
  std::array<std::vector<std::vector<double>>, 2> cell_y;
  cell_y[0].assign(L, {});
  cell_y[1].assign(L, {});
  std::array<std::vector<double>, 2> strat_y;
  std::vector<double> pooled;
  pooled.reserve(sample.obs.size());

  for (const auto& o : sample.obs) {
    ++m.n_per_level[o.z];
    if (o.d == 1) ++n_treated[o.z];
    cell_y[static_cast<std::size_t>(o.d)][o.z].push_back(o.y);
    strat_y[static_cast<std::size_t>(o.d)].push_back(o.y);
    pooled.push_back(o.y);
  }
  for (std::size_t l = 0; l < L; ++l)
    if (m.n_per_level[l] == 0)
      throw DataError("no observations at instrument level " +
                      std::to_string(sample.support.levels[l]));

  m.propensity.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    m.propensity[l] =
        static_cast<double>(n_treated[l]) / static_cast<double>(m.n_per_level[l]);
    if (m.propensity[l] == 0.0 || m.propensity[l] == 1.0)
      m.warnings.push_back("degenerate propensity at level " +
                           std::to_string(m.levels[l]));
  }
  m.treated_share =
      static_cast<double>(strat_y[1].size()) / static_cast<double>(sample.obs.size());

  std::sort(pooled.begin(), pooled.end());
  if (grid.policy == GridPolicy::all_unique) {
    m.y_grid = pooled;
    m.y_grid.erase(std::unique(m.y_grid.begin(), m.y_grid.end()), m.y_grid.end());
  } else {
    if (grid.k == 0) throw ConfigError("quantile grid needs k >= 1");
    std::vector<double> g;
    for (std::size_t j = 1; j <= grid.k; ++j) {
      const double q = util::sorted_quantile(
          pooled, static_cast<double>(j) / static_cast<double>(grid.k + 1));
      if (g.empty() || q > g.back()) g.push_back(q);
    }
    m.y_grid = std::move(g);
  }

  const std::size_t G = m.y_grid.size();
  auto counts_to_cdf = [&](std::vector<double>& ys, double denom,
                           std::vector<double>& out) {
    std::sort(ys.begin(), ys.end());
    out.resize(G);
    for (std::size_t i = 0; i < G; ++i) {
      const auto c = std::upper_bound(ys.begin(), ys.end(), m.y_grid[i]) - ys.begin();
      out[i] = denom == 0.0 ? 0.0 : static_cast<double>(c) / denom;
    }
  };

  for (int d = 0; d < 2; ++d) {
    m.joint[static_cast<std::size_t>(d)].assign(L, {});
    for (std::size_t l = 0; l < L; ++l)
      counts_to_cdf(cell_y[static_cast<std::size_t>(d)][l],
                    static_cast<double>(m.n_per_level[l]),
                    m.joint[static_cast<std::size_t>(d)][l]);
    if (!strat_y[static_cast<std::size_t>(d)].empty()) {
      counts_to_cdf(strat_y[static_cast<std::size_t>(d)],
                    static_cast<double>(strat_y[static_cast<std::size_t>(d)].size()),
                    m.marginal[static_cast<std::size_t>(d)]);
    } else {
      m.warnings.push_back("empty treatment stratum d=" + std::to_string(d));
    }
  }
  return m;
}

}  // namespace ivbounds::data
