#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ivbounds/bounds.hpp"
#include "ivbounds/dataset.hpp"
#include "ivbounds/errors.hpp"
#include "ivbounds/lp.hpp"
#include "ivbounds/simulate.hpp"
#include "ivbounds/util.hpp"

namespace ivbounds::diag {

// Largest minus smallest propensity: a weak-instrument screen. Bounds are
// vacuous when the instrument barely moves take-up.
inline double propensity_spread(const data::EmpiricalModel& m) {
  const auto [lo, hi] =
      std::minmax_element(m.propensity.begin(), m.propensity.end());
  return *hi - *lo;
}

// One switching group: units that take treatment between two adjacent
// points of the propensity-ordered instrument.
struct ComplierGroup {
  std::size_t lo_level = 0, hi_level = 0;  // original level indices
  double share = 0.0;                      // propensity increment
  bool kept = false;
  std::vector<double> cdf_treated, cdf_untreated;  // shaped, on the decomposition grid
  double shape_violation_treated = 0.0, shape_violation_untreated = 0.0;
};

struct ComplierDecomposition {
  std::vector<std::size_t> order;  // level indices sorted by propensity
  double always_share = 0.0, never_share = 0.0;
  std::vector<double> y_grid;
  std::vector<ComplierGroup> groups;  // L-1 entries in propensity order
  std::vector<std::string> warnings;

  std::size_t n_kept() const {
    std::size_t k = 0;
    for (const auto& g : groups) k += g.kept ? 1 : 0;
    return k;
  }

  // Shaped group CDF of the given arm evaluated off-grid (step lookup).
  double group_cdf(std::size_t g, int d, double y) const {
    const auto& c = d == 1 ? groups[g].cdf_treated : groups[g].cdf_untreated;
    return util::step_value(y_grid, c, y);
  }
};

// Difference-quotient complier outcome CDFs between adjacent levels of the
// propensity ordering. Raw quotients need not be monotone in finite
// samples; curves are shaped by a running max and the largest correction is
// reported per group and arm.
inline ComplierDecomposition complier_cdfs(const data::EmpiricalModel& m,
                                           double min_share = 0.02) {
  const std::size_t L = m.n_levels();
  const std::size_t G = m.grid_size();
  ComplierDecomposition dec;
  dec.y_grid = m.y_grid;
  dec.order.resize(L);
  std::iota(dec.order.begin(), dec.order.end(), std::size_t{0});
  std::stable_sort(dec.order.begin(), dec.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return m.propensity[a] < m.propensity[b];
                   });
  dec.always_share = m.propensity[dec.order.front()];
  dec.never_share = 1.0 - m.propensity[dec.order.back()];

  for (std::size_t r = 0; r + 1 < L; ++r) {
    ComplierGroup g;
    g.lo_level = dec.order[r];
    g.hi_level = dec.order[r + 1];
    g.share = m.propensity[g.hi_level] - m.propensity[g.lo_level];
    g.kept = g.share >= min_share;
    if (!g.kept) {
      dec.warnings.push_back("complier group between levels " +
                             std::to_string(m.levels[g.lo_level]) + " and " +
                             std::to_string(m.levels[g.hi_level]) +
                             " dropped: share " + std::to_string(g.share));
      dec.groups.push_back(std::move(g));
      continue;
    }
    for (int d = 0; d < 2; ++d) {
      const auto& hi = m.joint[static_cast<std::size_t>(d)][g.hi_level];
      const auto& lo = m.joint[static_cast<std::size_t>(d)][g.lo_level];
      std::vector<double> raw(G);
      // treated-arm probability rises with propensity, untreated falls
      const double sgn = d == 1 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < G; ++i)
        raw[i] = sgn * (hi[i] - lo[i]) / g.share;
      std::vector<double> shaped = bounds::monotone_lower(raw);
      double viol = 0.0;
      for (std::size_t i = 0; i < G; ++i)
        viol = std::max(viol, std::fabs(shaped[i] - raw[i]));
      if (d == 1) {
        g.cdf_treated = std::move(shaped);
        g.shape_violation_treated = viol;
      } else {
        g.cdf_untreated = std::move(shaped);
        g.shape_violation_untreated = viol;
      }
    }
    dec.groups.push_back(std::move(g));
  }
  return dec;
}

struct FosdResult {
  int dominance_arm = 1;  // arm whose curves carry the dominance constraint
  bool passed = true;
  double violation = 0.0;
  double y_star = 0.0;
  std::vector<std::size_t> group_index;               // kept groups, in order
  std::vector<double> w_dominant, w_dominated;        // witness mixtures
};

// Searches for two mixtures of complier groups ordered by first-order
// dominance on one arm whose ordering breaks on the other arm. For each
// candidate y* an LP maximizes the other-arm CDF gap subject to dominance
// of the constraint arm on the whole grid; the worst y* is reported with
// the witness mixtures. Violation zero (up to tol) means the ordering is
// preserved.
inline FosdResult fosd_preservation_test(const ComplierDecomposition& dec,
                                         const std::vector<double>& grid,
                                         int dominance_arm = 1, double tol = 1e-8,
                                         const lp::SolveOptions& opts = {}) {
  if (dominance_arm != 0 && dominance_arm != 1)
    throw ConfigError("dominance arm must be 0 or 1");
  if (grid.empty()) throw ConfigError("empty diagnostic grid");
  FosdResult res;
  res.dominance_arm = dominance_arm;
  for (std::size_t g = 0; g < dec.groups.size(); ++g)
    if (dec.groups[g].kept) res.group_index.push_back(g);
  const std::size_t R = res.group_index.size();
  if (R == 0) throw DataError("no complier group exceeds the share floor");
  res.w_dominant.assign(R, 0.0);
  res.w_dominated.assign(R, 0.0);
  res.w_dominant[0] = 1.0;
  res.w_dominated[0] = 1.0;

  const int other_arm = 1 - dominance_arm;
  // vars: omega (dominant mixture) then omega-tilde (dominated), all >= 0
  lp::LpProblem base(2 * R);
  {
    std::vector<double> row(2 * R, 0.0);
    for (std::size_t r = 0; r < R; ++r) row[r] = 1.0;
    base.add_eq(row, 1.0);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t r = 0; r < R; ++r) row[R + r] = 1.0;
    base.add_eq(row, 1.0);
  }
  {
    std::vector<double> row(2 * R);
    for (double y : grid) {
      for (std::size_t r = 0; r < R; ++r) {
        const double f = dec.group_cdf(res.group_index[r], dominance_arm, y);
        row[r] = -f;
        row[R + r] = f;
      }
      base.add_ge(row, 0.0);
    }
  }

  for (double ys : grid) {
    lp::LpProblem p = base;
    for (std::size_t r = 0; r < R; ++r) {
      const double f = dec.group_cdf(res.group_index[r], other_arm, ys);
      p.objective[r] = -f;      // maximize omega part
      p.objective[R + r] = f;   // minus omega-tilde part
    }
    const lp::LpSolution s = lp::solve(p, opts);
    if (s.status != lp::Status::optimal)
      throw SolverError("dominance search LP did not solve");
    const double v = -s.value;
    if (v > res.violation) {
      res.violation = v;
      res.y_star = ys;
      for (std::size_t r = 0; r < R; ++r) {
        res.w_dominant[r] = s.x[r];
        res.w_dominated[r] = s.x[R + r];
      }
    }
  }
  res.passed = res.violation <= tol;
  return res;
}

struct ViolationConfig {
  sim::DgpConfig dgp;           // dgp.n = fitting scenarios per replication
  std::size_t reps = 200;
  std::size_t eval_n = 100000;  // fresh evaluation draws per replication
  Arm arm = Arm::treated;
  bounds::Side side = bounds::Side::upper;
  double ybar = std::numeric_limits<double>::quiet_NaN();  // default: pooled median
  double tol = 1e-12;
  std::uint64_t seed = 7;
};

struct ViolationReport {
  std::size_t n = 0, reps = 0, infeasible_reps = 0;
  double ybar = 0.0;
  double mean_violation = 0.0;  // across successful reps
  double mc_stderr = 0.0;
  double bound = 0.0;  // 1/(n+1) reference line
  std::vector<double> per_rep;
};

// Out-of-sample violation probability of the sampled-constraint weight LP:
// each replication fits weights with domination imposed only at the drawn
// outcome points (population probability objects, so the only randomness is
// the constraint locations), then measures the chance a fresh outcome point
// yields a violated constraint. Fit and evaluation streams are disjoint.
inline ViolationReport violation_experiment(const ViolationConfig& vc) {
  vc.dgp.validate();
  if (vc.reps == 0 || vc.eval_n == 0) throw ConfigError("empty experiment");
  const sim::DgpConfig& cfg = vc.dgp;
  const std::size_t L = cfg.n_levels;
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  const int obs = vc.arm == Arm::treated ? 1 : 0;
  const int miss = 1 - obs;
  const double csgn = vc.side == bounds::Side::upper ? 1.0 : -1.0;

  std::vector<double> prop(L), weight(L);
  double obs_share = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double p = sim::pop::propensity(cfg, zs[l]);
    prop[l] = obs == 1 ? p : 1.0 - p;
    obs_share += pr[l] * prop[l];
  }
  for (std::size_t l = 0; l < L; ++l) weight[l] = pr[l] / obs_share;

  // marginal CDF of the observed arm from the same joint values
  auto joints_at = [&](double y, std::vector<double>& out) {
    for (std::size_t l = 0; l < L; ++l)
      out[l] = sim::pop::joint(cfg, obs, y, zs[l]);
  };
  auto marginal_from = [&](const std::vector<double>& j) {
    double v = 0.0;
    for (std::size_t l = 0; l < L; ++l) v += weight[l] * j[l];
    return v;
  };

  ViolationReport rep;
  rep.n = cfg.n;
  rep.reps = vc.reps;
  rep.bound = 1.0 / static_cast<double>(cfg.n + 1);
  rep.ybar = std::isnan(vc.ybar) ? sim::pop::pooled_quantile(cfg, 0.5) : vc.ybar;
  rep.per_rep.reserve(vc.reps);

  std::vector<double> jrow(L), gamma(L), row(L);
  for (std::size_t r = 0; r < vc.reps; ++r) {
    const data::Sample fit = sim::draw_sample(cfg, vc.seed, 2 * r);

    lp::LpProblem p(L);
    for (std::size_t l = 0; l < L; ++l) p.signs[l] = lp::VarSign::free_var;
    {
      std::vector<double> ones(L, 1.0);
      p.add_eq(ones, 0.0);
      p.add_eq(prop, 1.0);
    }
    for (const auto& o : fit.obs) {
      joints_at(o.y, jrow);
      for (std::size_t l = 0; l < L; ++l) row[l] = csgn * jrow[l];
      p.add_ge(row, csgn * marginal_from(jrow));
    }
    const double osgn = vc.side == bounds::Side::upper ? -1.0 : 1.0;
    for (std::size_t l = 0; l < L; ++l)
      p.objective[l] = osgn * sim::pop::joint(cfg, miss, rep.ybar, zs[l]);

    const lp::LpSolution sol = lp::solve(p);
    if (sol.status != lp::Status::optimal) {
      ++rep.infeasible_reps;
      continue;
    }
    gamma = sol.x;

    sim::DgpConfig ecfg = cfg;
    ecfg.n = vc.eval_n;
    const data::Sample ev = sim::draw_sample(ecfg, vc.seed, 2 * r + 1);
    std::size_t bad = 0;
    for (const auto& o : ev.obs) {
      joints_at(o.y, jrow);
      double lhs = 0.0;
      for (std::size_t l = 0; l < L; ++l) lhs += gamma[l] * jrow[l];
      const double slack = csgn * (lhs - marginal_from(jrow));
      if (slack < -vc.tol) ++bad;
    }
    rep.per_rep.push_back(static_cast<double>(bad) /
                          static_cast<double>(vc.eval_n));
  }

  const std::size_t ok = rep.per_rep.size();
  if (ok == 0) throw SolverError("all replications failed to solve");
  double mean = 0.0;
  for (double v : rep.per_rep) mean += v;
  mean /= static_cast<double>(ok);
  double var = 0.0;
  for (double v : rep.per_rep) var += (v - mean) * (v - mean);
  var = ok > 1 ? var / static_cast<double>(ok - 1) : 0.0;
  rep.mean_violation = mean;
  rep.mc_stderr = std::sqrt(var / static_cast<double>(ok));
  return rep;
}

}  // namespace ivbounds::diag
