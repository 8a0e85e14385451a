#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ivbounds/bounds.hpp"
#include "ivbounds/dataset.hpp"
#include "ivbounds/errors.hpp"
#include "ivbounds/lp.hpp"
#include "ivbounds/util.hpp"

namespace ivbounds::sieve {

// Bernstein density of index j in a degree-J system (only j >= 1 enters the
// sieve; j = 0 is kept out so every basis element vanishes at u = 0).
inline double bernstein(std::size_t j, std::size_t J, double u) {
  if (j > J) throw std::domain_error("bernstein: index exceeds degree");
  if (u < 0.0 || u > 1.0) return 0.0;
  if (u == 0.0) return j == 0 ? 1.0 : 0.0;
  if (u == 1.0) return j == J ? 1.0 : 0.0;
  const auto jd = static_cast<double>(j), Jd = static_cast<double>(J);
  const double lc =
      std::lgamma(Jd + 1.0) - std::lgamma(jd + 1.0) - std::lgamma(Jd - jd + 1.0);
  return std::exp(lc + jd * std::log(u) + (Jd - jd) * std::log1p(-u));
}

namespace detail {

// Upper binomial tails S_j(x) = P[Bin(J+1, x) >= j+1] for j = 1..J in one
// pass. The partial integral of each basis element is a tail difference.
inline std::vector<double> tail_vector(std::size_t J, double x) {
  std::vector<double> s(J, 0.0);
  if (x <= 0.0) return s;
  if (x >= 1.0) {
    std::fill(s.begin(), s.end(), 1.0);
    return s;
  }
  const std::size_t n = J + 1;
  const auto nd = static_cast<double>(n);
  const double lx = std::log(x), l1x = std::log1p(-x);
  std::vector<double> term(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const auto kd = static_cast<double>(k);
    const double lc =
        std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0);
    term[k] = std::exp(lc + kd * lx + (nd - kd) * l1x);
  }
  double tail = 0.0;
  std::vector<double> suffix(n + 2, 0.0);
  for (std::size_t k = n + 1; k-- > 0;) {
    tail += term[k];
    suffix[k] = tail;
  }
  for (std::size_t j = 1; j <= J; ++j) s[j - 1] = std::min(1.0, suffix[j + 1]);
  return s;
}

}  // namespace detail

// Integral of the j-th basis density over [a, b] within [0,1]:
// (S_j(b) - S_j(a)) / (J + 1), with S_j the upper binomial tail above.
inline double basis_partial_integral(std::size_t j, std::size_t J, double a,
                                     double b) {
  if (j == 0 || j > J)
    throw std::domain_error("basis_partial_integral: index outside 1..J");
  if (b < a) throw std::domain_error("basis_partial_integral: empty interval");
  const auto sa = detail::tail_vector(J, std::max(0.0, std::min(1.0, a)));
  const auto sb = detail::tail_vector(J, std::max(0.0, std::min(1.0, b)));
  return (sb[j - 1] - sa[j - 1]) / static_cast<double>(J + 1);
}

// Moments M_j = integral of b_j(u) G(u) du over [0,1] for a right-continuous
// step function G with value g[k] on [u_k, u_{k+1}) and zero before u_0.
// Exact: G is constant between knots, so each piece is a tail difference.
inline std::vector<double> moments_step(std::size_t J, const std::vector<double>& u,
                                        const std::vector<double>& g) {
  if (u.size() != g.size() || u.empty())
    throw std::invalid_argument("moments_step: knot/value size mismatch");
  std::vector<double> m(J, 0.0);
  std::vector<double> prev = detail::tail_vector(J, u[0]);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double hi = k + 1 < u.size() ? u[k + 1] : 1.0;
    std::vector<double> cur = detail::tail_vector(J, hi);
    for (std::size_t j = 0; j < J; ++j) m[j] += g[k] * (cur[j] - prev[j]);
    prev = std::move(cur);
  }
  for (std::size_t j = 0; j < J; ++j) m[j] /= static_cast<double>(J + 1);
  return m;
}

// Same moments for a smooth G via composite trapezoid on a uniform panel
// grid. Accuracy is O(panels^-2); callers monitor it by halving.
inline std::vector<double> moments_function(std::size_t J,
                                            const std::function<double(double)>& g,
                                            std::size_t panels) {
  if (panels < 2) throw std::invalid_argument("moments_function: too few panels");
  std::vector<double> m(J, 0.0);
  const double h = 1.0 / static_cast<double>(panels);
  for (std::size_t i = 0; i <= panels; ++i) {
    const double u = static_cast<double>(i) * h;
    const double wt = (i == 0 || i == panels) ? 0.5 : 1.0;
    const double gv = g(u);
    if (gv == 0.0) continue;
    for (std::size_t j = 1; j <= J; ++j)
      m[j - 1] += wt * gv * bernstein(j, J, u);
  }
  for (std::size_t j = 0; j < J; ++j) m[j] *= h;
  return m;
}

struct SieveSpec {
  std::size_t degree = 40;     // J
  bool mass_constraint = true; // pin total dual mass to one
  std::size_t panels = 4000;   // smooth-model quadrature panels
};

struct DualSolution {
  double value = std::numeric_limits<double>::quiet_NaN();
  bounds::PointStatus status = bounds::PointStatus::infeasible;
  std::vector<double> theta;
  double lambda1 = 0.0, lambda2 = 0.0;
};

namespace detail {

inline double to_unit(double y, double a, double b) {
  return std::max(0.0, std::min(1.0, (y - a) / (b - a)));
}

// Moments of a model column against every basis density, on the outcome
// range normalized to [0,1].
inline std::vector<double> column_moments(const data::EmpiricalModel& m,
                                          const std::vector<double>& col,
                                          const SieveSpec& spec) {
  const double a = m.y_grid.front(), b = m.y_grid.back();
  if (!(b > a)) throw DataError("degenerate outcome range");
  if (m.kind == data::CdfKind::step) {
    std::vector<double> u(m.y_grid.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = to_unit(m.y_grid[i], a, b);
    return moments_step(spec.degree, u, col);
  }
  const auto g = [&](double uu) {
    return util::linear_value(m.y_grid, col, a + uu * (b - a));
  };
  return moments_function(spec.degree, g, spec.panels);
}

}  // namespace detail

// Moments of the observed-arm probability objects against every basis
// density: the marginal vector and the per-level joint matrix that enter
// the dual LP. Step-function columns integrate exactly via binomial tails;
// grid-interpolated columns use composite trapezoid with `panels` panels.
struct BernsteinMoments {
  std::vector<double> b_marg;                // length J
  std::vector<std::vector<double>> B_joint;  // L rows, each length J
};

inline BernsteinMoments compute_moments(const data::EmpiricalModel& m, Arm arm,
                                        const SieveSpec& spec) {
  if (spec.degree == 0) throw ConfigError("sieve degree must be >= 1");
  const int obs = bounds::detail::observed_d(arm);
  const auto& mg = m.marginal[static_cast<std::size_t>(obs)];
  if (mg.empty()) throw DataError("empty observed stratum");
  BernsteinMoments out;
  out.b_marg = detail::column_moments(m, mg, spec);
  out.B_joint.reserve(m.n_levels());
  for (std::size_t l = 0; l < m.n_levels(); ++l)
    out.B_joint.push_back(detail::column_moments(
        m, m.joint[static_cast<std::size_t>(obs)][l], spec));
  return out;
}

// Certified dual value for the bound at ybar: the dual multiplier on the
// domination constraint is restricted to densities spanned by the Bernstein
// system, which keeps the value on the conservative side of the full LP
// optimum (below the upper bound, above the lower). The equality rows can
// admit no such density at practical degrees — the needed measure may
// concentrate where a fixed-degree density cannot — and that outcome is
// reported as an infeasible point, never an error.
inline DualSolution dual_sieve_bound(const data::EmpiricalModel& m, Arm arm,
                                     bounds::Side side, double ybar,
                                     const SieveSpec& spec,
                                     const BernsteinMoments& mom,
                                     const lp::SolveOptions& opts = {}) {
  const std::size_t L = m.n_levels();
  const std::size_t J = spec.degree;
  const int miss = 1 - bounds::detail::observed_d(arm);

  // vars: lambda1 (free), lambda2 (free), theta_1..theta_J (>= 0)
  lp::LpProblem p(2 + J);
  p.signs[0] = lp::VarSign::free_var;
  p.signs[1] = lp::VarSign::free_var;

  const std::vector<double>& bvec = mom.b_marg;
  std::vector<double> row(2 + J);
  for (std::size_t l = 0; l < L; ++l) {
    const std::vector<double>& Bl = mom.B_joint[l];
    row[0] = 1.0;
    row[1] = bounds::detail::observed_prob(m, arm, l);
    for (std::size_t j = 0; j < J; ++j) row[2 + j] = -Bl[j];
    p.add_eq(row, m.joint_at(miss, l, ybar));
  }
  if (spec.mass_constraint) {
    std::fill(row.begin(), row.end(), 1.0);
    row[0] = 0.0;
    row[1] = 0.0;
    p.add_eq(row, static_cast<double>(J + 1));
  }

  const double sgn = side == bounds::Side::upper ? -1.0 : 1.0;
  p.objective[1] = -sgn;
  for (std::size_t j = 0; j < J; ++j) p.objective[2 + j] = sgn * bvec[j];

  const lp::LpSolution s = lp::solve(p, opts);
  DualSolution out;
  switch (s.status) {
    case lp::Status::optimal:
      out.status = bounds::PointStatus::ok;
      out.value = side == bounds::Side::upper ? -s.value : s.value;
      out.lambda1 = s.x[0];
      out.lambda2 = s.x[1];
      out.theta.assign(s.x.begin() + 2, s.x.end());
      break;
    case lp::Status::infeasible:
      out.status = bounds::PointStatus::infeasible;
      break;
    case lp::Status::unbounded:
      out.status = bounds::PointStatus::unbounded;
      break;
  }
  return out;
}

// Single-point convenience; the moments do not depend on ybar, so curve
// evaluations should compute them once and use the overload above.
inline DualSolution dual_sieve_bound(const data::EmpiricalModel& m, Arm arm,
                                     bounds::Side side, double ybar,
                                     const SieveSpec& spec,
                                     const lp::SolveOptions& opts = {}) {
  return dual_sieve_bound(m, arm, side, ybar, spec,
                          compute_moments(m, arm, spec), opts);
}

}  // namespace ivbounds::sieve
