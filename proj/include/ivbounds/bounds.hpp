#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ivbounds/dataset.hpp"
#include "ivbounds/errors.hpp"
#include "ivbounds/lp.hpp"
#include "ivbounds/util.hpp"

namespace ivbounds::bounds {

enum class Side { lower, upper };

enum class PointStatus { ok, infeasible, unbounded };

inline const char* point_status_name(PointStatus s) {
  switch (s) {
    case PointStatus::ok: return "ok";
    case PointStatus::infeasible: return "infeasible";
    case PointStatus::unbounded: return "unbounded";
  }
  return "?";
}

struct GammaBound {
  double value = std::numeric_limits<double>::quiet_NaN();
  PointStatus status = PointStatus::infeasible;
  std::vector<double> gamma;
};

namespace detail {

// Weight applied by the normalization constraint: the probability of
// observing the arm whose counterfactual is being bounded.
inline double observed_prob(const data::EmpiricalModel& m, Arm arm, std::size_t l) {
  return arm == Arm::treated ? m.propensity[l] : 1.0 - m.propensity[l];
}

inline int observed_d(Arm arm) { return arm == Arm::treated ? 1 : 0; }

// Constraint system shared by every bound at a given (arm, side): weights
// sum to zero, integrate to one against the observed-arm probability, and
// the weighted observed-arm joint CDF dominates (upper) or is dominated by
// (lower) the observed-arm marginal CDF at every grid point.
inline lp::LpProblem make_weight_problem(const data::EmpiricalModel& m, Arm arm,
                                         Side side) {
  const std::size_t L = m.n_levels();
  const std::size_t G = m.grid_size();
  const int obs = observed_d(arm);
  lp::LpProblem p(L);
  for (std::size_t l = 0; l < L; ++l) p.signs[l] = lp::VarSign::free_var;

  std::vector<double> ones(L, 1.0), props(L);
  for (std::size_t l = 0; l < L; ++l) props[l] = observed_prob(m, arm, l);
  p.add_eq(ones, 0.0);
  p.add_eq(props, 1.0);

  const auto& jb = m.joint[static_cast<std::size_t>(obs)];
  const auto& mg = m.marginal[static_cast<std::size_t>(obs)];
  if (mg.empty())
    throw DataError("cannot form bound constraints: empty observed stratum");
  const double sgn = side == Side::upper ? 1.0 : -1.0;
  std::vector<double> row(L);
  for (std::size_t i = 0; i < G; ++i) {
    // Grid points deep in the lower tail produce rows whose every entry
    // sits below the accuracy of the probability inputs; such rows carry
    // noise, not dominance information, so they are not posed at all.
    double top = 0.0;
    for (std::size_t l = 0; l < L; ++l) top = std::max(top, jb[l][i]);
    if (top < 1e-7 && mg[i] < 1e-6) continue;
    for (std::size_t l = 0; l < L; ++l) row[l] = sgn * jb[l][i];
    p.add_ge(row, sgn * mg[i]);
  }
  return p;
}

inline void set_bound_objective(lp::LpProblem& p, const data::EmpiricalModel& m,
                                Arm arm, Side side, double ybar) {
  const std::size_t L = m.n_levels();
  const int miss = 1 - observed_d(arm);
  const double sgn = side == Side::upper ? -1.0 : 1.0;
  for (std::size_t l = 0; l < L; ++l)
    p.objective[l] = sgn * m.joint_at(miss, l, ybar);
}

inline GammaBound run_bound(const lp::LpProblem& p, Side side,
                            const lp::SolveOptions& opts) {
  const lp::LpSolution s = lp::solve(p, opts);
  GammaBound out;
  switch (s.status) {
    case lp::Status::optimal:
      out.status = PointStatus::ok;
      out.value = side == Side::upper ? s.value : -s.value;
      out.gamma = s.x;
      break;
    case lp::Status::infeasible:
      out.status = PointStatus::infeasible;
      break;
    case lp::Status::unbounded:
      out.status = PointStatus::unbounded;
      break;
  }
  return out;
}

}  // namespace detail

// Best bound on the counterfactual CDF at one outcome value. The upper
// bound is the smallest value of -sum_l gamma_l P[Y<=ybar, D=miss | z_l]
// over admissible weights whose observed-arm combination dominates the
// observed marginal; the lower bound reverses the domination.
inline GammaBound solve_gamma_bound(const data::EmpiricalModel& m, Arm arm,
                                    Side side, double ybar,
                                    const lp::SolveOptions& opts = {}) {
  lp::LpProblem p = detail::make_weight_problem(m, arm, side);
  detail::set_bound_objective(p, m, arm, side, ybar);
  return detail::run_bound(p, side, opts);
}

// Smallest uniform relaxation of the domination constraints that makes the
// weight set nonempty; zero when it already is. The normalization rows stay
// exact since they define the weight space.
inline double feasibility_slack(const data::EmpiricalModel& m, Arm arm, Side side,
                                const lp::SolveOptions& opts = {}) {
  const lp::LpProblem base = detail::make_weight_problem(m, arm, side);
  const std::size_t L = base.n_vars;
  lp::LpProblem p(L + 1);
  for (std::size_t l = 0; l < L; ++l) p.signs[l] = lp::VarSign::free_var;
  p.objective[L] = 1.0;
  for (std::size_t r = 0; r < base.eq_rows.size(); ++r) {
    std::vector<double> row = base.eq_rows[r];
    row.push_back(0.0);
    p.add_eq(row, base.eq_rhs[r]);
  }
  for (std::size_t r = 0; r < base.ge_rows.size(); ++r) {
    std::vector<double> row = base.ge_rows[r];
    row.push_back(1.0);
    p.add_ge(row, base.ge_rhs[r]);
  }
  const lp::LpSolution s = lp::solve(p, opts);
  if (s.status != lp::Status::optimal)
    throw SolverError("slack relaxation did not solve");
  return std::max(0.0, s.value);
}

// Clamp to [0,1] and enforce monotonicity from the valid side: a lower CDF
// envelope can only be tightened upward from the left, an upper envelope
// downward from the right.
inline std::vector<double> monotone_lower(std::vector<double> v) {
  double run = 0.0;
  for (auto& x : v) {
    x = std::min(1.0, std::max(0.0, x));
    run = std::max(run, x);
    x = run;
  }
  return v;
}

inline std::vector<double> monotone_upper(std::vector<double> v) {
  double run = 1.0;
  for (std::size_t i = v.size(); i-- > 0;) {
    v[i] = std::min(1.0, std::max(0.0, v[i]));
    run = std::min(run, v[i]);
    v[i] = run;
  }
  return v;
}

struct ShapeReport {
  bool any_crossing = false;
  std::vector<std::uint8_t> crossing;  // lower exceeds upper after shaping
};

inline ShapeReport monotonize(std::vector<double>& lower, std::vector<double>& upper) {
  lower = monotone_lower(std::move(lower));
  upper = monotone_upper(std::move(upper));
  ShapeReport rep;
  rep.crossing.assign(lower.size(), 0);
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (lower[i] > upper[i] + 1e-12) {
      rep.crossing[i] = 1;
      rep.any_crossing = true;
    }
  return rep;
}

struct BoundCurve {
  Arm arm = Arm::treated;
  std::vector<double> y;
  std::vector<double> raw_lower, raw_upper;  // NaN where the point failed
  std::vector<double> lower, upper;          // shaped envelopes
  std::vector<std::uint8_t> feasible_lower, feasible_upper;
  std::vector<std::uint8_t> crossing;
  bool any_crossing = false;
  std::size_t n_infeasible = 0;
};

// Pointwise bounds over an evaluation grid, then shape. Failed points enter
// the shaping step with the vacuous bound for their side.
inline BoundCurve cdf_bound_curve(const data::EmpiricalModel& m, Arm arm,
                                  const std::vector<double>& eval_grid,
                                  unsigned threads = 1,
                                  const lp::SolveOptions& opts = {}) {
  if (eval_grid.empty()) throw ConfigError("empty evaluation grid");
  const std::size_t G = eval_grid.size();
  BoundCurve c;
  c.arm = arm;
  c.y = eval_grid;
  c.raw_lower.assign(G, 0.0);
  c.raw_upper.assign(G, 0.0);
  c.feasible_lower.assign(G, 0);
  c.feasible_upper.assign(G, 0);
  std::vector<double> shaped_lo(G), shaped_up(G);

  const lp::LpProblem lo_base = detail::make_weight_problem(m, arm, Side::lower);
  const lp::LpProblem up_base = detail::make_weight_problem(m, arm, Side::upper);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto solve_point = [&](lp::LpProblem& p, Side side, std::size_t i, double& raw,
                         double& shaped, std::uint8_t& feas) {
    detail::set_bound_objective(p, m, arm, side, eval_grid[i]);
    const GammaBound b = detail::run_bound(p, side, opts);
    if (b.status == PointStatus::ok) {
      raw = b.value;
      shaped = b.value;
      feas = 1;
    } else {
      raw = nan;
      shaped = side == Side::lower ? 0.0 : 1.0;
      feas = 0;
    }
  };

  if (threads <= 1) {
    lp::LpProblem lo = lo_base, up = up_base;
    for (std::size_t i = 0; i < G; ++i) {
      solve_point(lo, Side::lower, i, c.raw_lower[i], shaped_lo[i],
                  c.feasible_lower[i]);
      solve_point(up, Side::upper, i, c.raw_upper[i], shaped_up[i],
                  c.feasible_upper[i]);
    }
  } else {
    util::parallel_for(G, threads, [&](std::size_t i) {
      lp::LpProblem lo = lo_base, up = up_base;
      solve_point(lo, Side::lower, i, c.raw_lower[i], shaped_lo[i],
                  c.feasible_lower[i]);
      solve_point(up, Side::upper, i, c.raw_upper[i], shaped_up[i],
                  c.feasible_upper[i]);
    });
  }

  for (std::size_t i = 0; i < G; ++i)
    if (!c.feasible_lower[i] || !c.feasible_upper[i]) ++c.n_infeasible;

  const ShapeReport rep = monotonize(shaped_lo, shaped_up);
  c.lower = std::move(shaped_lo);
  c.upper = std::move(shaped_up);
  c.crossing = rep.crossing;
  c.any_crossing = rep.any_crossing;
  return c;
}

// Quantile bounds by inverting the CDF envelopes: the upper envelope, being
// the larger CDF, reaches tau first and yields the smaller quantile.
struct QuantileBound {
  double lower = -util::inf;
  double upper = util::inf;
};

inline QuantileBound quantile_bounds(const BoundCurve& c, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau outside (0,1)");
  QuantileBound q;
  q.lower = util::inf;
  q.upper = util::inf;
  for (std::size_t i = 0; i < c.y.size(); ++i)
    if (c.upper[i] >= tau) {
      q.lower = c.y[i];
      break;
    }
  for (std::size_t i = 0; i < c.y.size(); ++i)
    if (c.lower[i] >= tau) {
      q.upper = c.y[i];
      break;
    }
  return q;
}

// Treatment-effect bounds at quantile tau. The effect is treated-arm minus
// untreated-arm, so the observed quantile enters with opposite sign per arm.
struct EffectBound {
  double lower = -util::inf;
  double upper = util::inf;
};

inline EffectBound qte_bounds(const BoundCurve& c, double tau, double observed_quantile) {
  const QuantileBound q = quantile_bounds(c, tau);
  EffectBound e;
  if (c.arm == Arm::treated) {
    e.lower = observed_quantile - q.upper;
    e.upper = observed_quantile - q.lower;
  } else {
    e.lower = q.lower - observed_quantile;
    e.upper = q.upper - observed_quantile;
  }
  return e;
}

// Mean bounds from the envelopes, assuming the counterfactual outcome is
// supported on the evaluation range: E[Y] = y_max - integral of the CDF.
struct MeanBound {
  double lower = 0.0;
  double upper = 0.0;
};

inline MeanBound counterfactual_mean_bounds(const BoundCurve& c) {
  // the larger CDF integrates to the smaller mean
  MeanBound m;
  m.lower = c.y.back() - util::trapezoid(c.y, c.upper);
  m.upper = c.y.back() - util::trapezoid(c.y, c.lower);
  return m;
}

inline EffectBound ate_bounds(const BoundCurve& c, double observed_mean) {
  const MeanBound mb = counterfactual_mean_bounds(c);
  EffectBound e;
  if (c.arm == Arm::treated) {
    e.lower = observed_mean - mb.upper;
    e.upper = observed_mean - mb.lower;
  } else {
    e.lower = mb.lower - observed_mean;
    e.upper = mb.upper - observed_mean;
  }
  return e;
}

// Observed-arm quantile / mean helpers for effect reporting.
inline double observed_quantile(const data::EmpiricalModel& m, Arm arm, double tau) {
  const auto& mg = m.marginal[static_cast<std::size_t>(detail::observed_d(arm))];
  if (mg.empty()) throw DataError("empty observed stratum");
  for (std::size_t i = 0; i < m.y_grid.size(); ++i)
    if (mg[i] >= tau) return m.y_grid[i];
  return m.y_grid.back();
}

inline double observed_mean(const data::EmpiricalModel& m, Arm arm) {
  const auto& mg = m.marginal[static_cast<std::size_t>(detail::observed_d(arm))];
  if (mg.empty()) throw DataError("empty observed stratum");
  // mean of the CDF via the tail identity on the grid range
  double v = m.y_grid.back();
  if (m.kind == data::CdfKind::step) {
    // exact for a step CDF: sum of jump * location
    v = m.y_grid.front() * mg.front();
    for (std::size_t i = 1; i < mg.size(); ++i)
      v += m.y_grid[i] * (mg[i] - mg[i - 1]);
  } else {
    v -= util::trapezoid(m.y_grid, mg);
  }
  return v;
}

// Decides whether a single weight vector reproduces the observed-arm
// marginal exactly, by minimizing the worst absolute deviation over the
// grid. When the residual is below tol the counterfactual CDF is pinned
// down and returned as a shaped curve.
struct PointIdResult {
  double residual = util::inf;
  bool identified = false;
  std::vector<double> gamma;
  std::vector<double> y;
  std::vector<double> curve;
};

inline PointIdResult point_identify(const data::EmpiricalModel& m, Arm arm,
                                    const std::vector<double>& eval_grid,
                                    double tol = 1e-6,
                                    const lp::SolveOptions& opts = {}) {
  const std::size_t L = m.n_levels();
  const std::size_t G = m.grid_size();
  const int obs = detail::observed_d(arm);
  const int miss = 1 - obs;
  const auto& jb = m.joint[static_cast<std::size_t>(obs)];
  const auto& mg = m.marginal[static_cast<std::size_t>(obs)];
  if (mg.empty()) throw DataError("empty observed stratum");

  lp::LpProblem p(L + 1);
  for (std::size_t l = 0; l < L; ++l) p.signs[l] = lp::VarSign::free_var;
  p.objective[L] = 1.0;
  {
    std::vector<double> ones(L + 1, 1.0), props(L + 1, 0.0);
    ones[L] = 0.0;
    for (std::size_t l = 0; l < L; ++l) props[l] = detail::observed_prob(m, arm, l);
    p.add_eq(ones, 0.0);
    p.add_eq(props, 1.0);
  }
  std::vector<double> row(L + 1);
  for (std::size_t i = 0; i < G; ++i) {
    for (std::size_t l = 0; l < L; ++l) row[l] = jb[l][i];
    row[L] = 1.0;
    p.add_ge(row, mg[i]);
    for (std::size_t l = 0; l < L; ++l) row[l] = -jb[l][i];
    p.add_ge(row, -mg[i]);
  }

  const lp::LpSolution s = lp::solve(p, opts);
  PointIdResult out;
  if (s.status != lp::Status::optimal) return out;  // weight space empty
  out.residual = s.x[L];
  out.identified = out.residual <= tol;
  out.gamma.assign(s.x.begin(), s.x.begin() + static_cast<long>(L));
  out.y = eval_grid;
  out.curve.resize(eval_grid.size());
  for (std::size_t i = 0; i < eval_grid.size(); ++i) {
    double v = 0.0;
    for (std::size_t l = 0; l < L; ++l)
      v -= out.gamma[l] * m.joint_at(miss, l, eval_grid[i]);
    out.curve[i] = v;
  }
  out.curve = monotone_lower(std::move(out.curve));
  return out;
}

}  // namespace ivbounds::bounds
