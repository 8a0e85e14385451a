#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ivbounds/errors.hpp"

namespace ivbounds::lp {

enum class Status { optimal, infeasible, unbounded };

enum class VarSign { nonneg, free_var };

// min c'x  s.t.  eq_rows * x = eq_rhs,  ge_rows * x >= ge_rhs,
// x_j >= 0 for nonneg vars, x_j unrestricted for free vars.
struct LpProblem {
  std::size_t n_vars = 0;
  std::vector<double> objective;
  std::vector<VarSign> signs;
  std::vector<std::vector<double>> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<std::vector<double>> ge_rows;
  std::vector<double> ge_rhs;

  LpProblem() = default;
  explicit LpProblem(std::size_t n)
      : n_vars(n), objective(n, 0.0), signs(n, VarSign::nonneg) {}

  std::size_t m_eq() const { return eq_rows.size(); }
  std::size_t m_ge() const { return ge_rows.size(); }

  void add_eq(std::vector<double> row, double rhs) {
    check_row(row, rhs);
    eq_rows.push_back(std::move(row));
    eq_rhs.push_back(rhs);
  }

  void add_ge(std::vector<double> row, double rhs) {
    check_row(row, rhs);
    ge_rows.push_back(std::move(row));
    ge_rhs.push_back(rhs);
  }

  // Structural validation; throws std::invalid_argument before any solve.
  void validate() const {
    if (objective.size() != n_vars || signs.size() != n_vars)
      throw std::invalid_argument("lp: objective/sign size != n_vars");
    for (double c : objective)
      if (!std::isfinite(c)) throw std::invalid_argument("lp: non-finite objective");
    if (eq_rows.size() != eq_rhs.size() || ge_rows.size() != ge_rhs.size())
      throw std::invalid_argument("lp: row/rhs count mismatch");
    for (const auto& r : eq_rows)
      if (r.size() != n_vars) throw std::invalid_argument("lp: eq row size != n_vars");
    for (const auto& r : ge_rows)
      if (r.size() != n_vars) throw std::invalid_argument("lp: ge row size != n_vars");
  }

 private:
  void check_row(const std::vector<double>& row, double rhs) const {
    if (row.size() != n_vars)
      throw std::invalid_argument("lp: row size != n_vars");
    for (double a : row)
      if (!std::isfinite(a)) throw std::invalid_argument("lp: non-finite coefficient");
    if (!std::isfinite(rhs)) throw std::invalid_argument("lp: non-finite rhs");
  }
};

struct LpSolution {
  Status status = Status::infeasible;
  std::vector<double> x;
  double value = std::numeric_limits<double>::quiet_NaN();
  // Multipliers for min c'x: c - A'y_eq - G'y_ge >= 0 componentwise for
  // nonneg vars (= 0 for free vars), y_ge >= 0, c'x = b'y_eq + h'y_ge.
  std::vector<double> eq_duals;
  std::vector<double> ge_duals;
  long iterations = 0;
  bool via_dual = false;
};

struct SolveOptions {
  double tol_pivot = 1e-10;   // pivot magnitude threshold
  double tol_feas = 1e-8;     // phase-1 acceptance threshold
  double scale_floor = 1e-7;  // smallest row magnitude worth equilibrating
  int bland_after = 50;       // degenerate pivots before Bland's rule
  long max_iterations = 0;    // 0 = automatic cap
  // -1: use the dual formulation automatically for tall problems,
  //  0: always solve the given form directly, 1: always go through the dual.
  int dual_path = -1;
  int depth = 0;  // internal recursion guard
};

namespace detail {

// Gaussian elimination with partial pivoting after row equilibration;
// returns false when the matrix is numerically singular. Used to re-solve
// the final basis system from the original data, which removes the drift a
// long tableau pivot chain accumulates.
inline bool gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b,
                        std::vector<double>& out) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : a[i]) s = std::max(s, std::fabs(v));
    if (s <= 0.0) return false;
    const double inv = 1.0 / s;
    for (auto& v : a[i]) v *= inv;
    b[i] *= inv;
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[piv][k])) piv = i;
    if (std::fabs(a[piv][k]) < 1e-12) return false;
    if (piv != k) {
      std::swap(a[piv], a[k]);
      std::swap(b[piv], b[k]);
    }
    const double inv = 1.0 / a[k][k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] * inv;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  out.assign(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * out[j];
    out[k] = s / a[k][k];
  }
  return true;
}

// Dense two-phase primal tableau simplex over the standard form obtained by
// splitting free variables and appending one surplus column per ge row.
// Every row also carries a blocked "probe" (artificial) column whose final
// reduced cost yields that row's multiplier.
class Simplex {
 public:
  Simplex(const LpProblem& p, const SolveOptions& opts) : p_(p), o_(opts) {
    n_eq_ = p.m_eq();
    n_ge_ = p.m_ge();
    m_ = n_eq_ + n_ge_;
    // Column layout: split structural | surplus | probes.
    col_pos_.assign(p.n_vars, -1);
    col_neg_.assign(p.n_vars, -1);
    std::size_t c = 0;
    for (std::size_t j = 0; j < p.n_vars; ++j) {
      col_pos_[j] = static_cast<int>(c++);
      col_var_.push_back(static_cast<int>(j));
      col_sgn_.push_back(1.0);
      if (p.signs[j] == VarSign::free_var) {
        col_neg_[j] = static_cast<int>(c++);
        col_var_.push_back(static_cast<int>(j));
        col_sgn_.push_back(-1.0);
      }
    }
    n_struct_ = c;
    surplus0_ = n_struct_;
    probe0_ = n_struct_ + n_ge_;
    ncols_ = probe0_ + m_;
    build();
  }

  LpSolution run() {
    LpSolution sol;
    // Phase 1: minimize the sum of basic probe values.
    phase_ = 1;
    set_phase1_costs();
    Status st = iterate();
    if (st != Status::optimal) throw SolverError("lp: phase 1 did not terminate cleanly");
    if (phase1_value() > o_.tol_feas) {
      sol.status = Status::infeasible;
      sol.value = std::numeric_limits<double>::infinity();
      sol.iterations = iters_;
      return sol;
    }
    drive_out_probes();
    // Columns retired by the phase-1 ray safeguard are legitimate again once
    // the phase-1 costs are gone; only probes stay locked out.
    for (std::size_t j = 0; j < probe0_; ++j) enterable_[j] = 1;
    // Phase 2 on the original objective.
    phase_ = 2;
    set_phase2_costs();
    st = iterate();
    sol.iterations = iters_;
    if (st == Status::unbounded) {
      sol.status = Status::unbounded;
      sol.value = -std::numeric_limits<double>::infinity();
      return sol;
    }
    extract(sol);
    return sol;
  }

 private:
  const LpProblem& p_;
  SolveOptions o_;
  std::size_t n_eq_ = 0, n_ge_ = 0, m_ = 0;
  std::size_t n_struct_ = 0, surplus0_ = 0, probe0_ = 0, ncols_ = 0;
  std::vector<int> col_pos_, col_neg_;
  std::vector<int> col_var_;     // structural column -> original variable
  std::vector<double> col_sgn_;  // +1 for the positive half, -1 for the split

  std::vector<std::vector<double>> row_;  // current rows, each ncols_ wide
  std::vector<double> rhs_;
  std::vector<int> basis_;     // basic column per current row
  std::vector<int> rid_;       // original row id per current row (0..m_-1)
  std::vector<char> flipped_;  // per original row id
  std::vector<char> alive_;    // per original row id
  std::vector<double> scale_;  // equilibration factor per original row id
  std::vector<double> red_;    // reduced costs
  std::vector<double> cost_;   // current phase costs
  std::vector<char> enterable_;
  int phase_ = 1;
  long iters_ = 0;
  int degenerate_ = 0;
  bool bland_ = false;

  void build() {
    row_.assign(m_, std::vector<double>(ncols_, 0.0));
    rhs_.assign(m_, 0.0);
    basis_.assign(m_, -1);
    rid_.resize(m_);
    flipped_.assign(m_, 0);
    alive_.assign(m_, 1);
    scale_.assign(m_, 1.0);
    enterable_.assign(ncols_, 1);
    for (std::size_t k = probe0_; k < ncols_; ++k) enterable_[k] = 0;

    for (std::size_t i = 0; i < m_; ++i) {
      rid_[i] = static_cast<int>(i);
      const bool is_eq = i < n_eq_;
      const auto& src = is_eq ? p_.eq_rows[i] : p_.ge_rows[i - n_eq_];
      double b = is_eq ? p_.eq_rhs[i] : p_.ge_rhs[i - n_eq_];
      auto& r = row_[i];
      for (std::size_t j = 0; j < p_.n_vars; ++j) {
        r[col_pos_[j]] = src[j];
        if (col_neg_[j] >= 0) r[col_neg_[j]] = -src[j];
      }
      // Equilibrate: scale the row to unit max coefficient so every pivot
      // and feasibility tolerance acts relative to the row's own magnitude.
      // Rows entirely below the floor stay as given; amplifying them would
      // promote data noise into binding constraints.
      double s = 0.0;
      for (std::size_t j = 0; j < n_struct_; ++j) s = std::max(s, std::fabs(r[j]));
      if (s >= o_.scale_floor && s != 1.0) {
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < n_struct_; ++j) r[j] *= inv;
        b *= inv;
        scale_[i] = s;
      }
      if (!is_eq) r[surplus0_ + (i - n_eq_)] = -1.0;
      if (b < 0) {
        for (auto& a : r) a = -a;
        b = -b;
        flipped_[i] = 1;
      }
      r[probe0_ + i] = 1.0;
      rhs_[i] = b;
      // A flipped ge row has surplus coefficient +1 and can start basic,
      // leaving its probe column as a never-basic dual readout.
      if (!is_eq && flipped_[i])
        basis_[i] = static_cast<int>(surplus0_ + (i - n_eq_));
      else
        basis_[i] = static_cast<int>(probe0_ + i);
    }
  }

  bool is_probe(int col) const { return col >= static_cast<int>(probe0_); }

  void set_phase1_costs() {
    cost_.assign(ncols_, 0.0);
    for (std::size_t i = 0; i < row_.size(); ++i)
      if (is_probe(basis_[i])) cost_[basis_[i]] = 1.0;
    rebuild_reduced_costs();
  }

  void set_phase2_costs() {
    cost_.assign(ncols_, 0.0);
    for (std::size_t j = 0; j < p_.n_vars; ++j) {
      cost_[col_pos_[j]] = p_.objective[j];
      if (col_neg_[j] >= 0) cost_[col_neg_[j]] = -p_.objective[j];
    }
    rebuild_reduced_costs();
  }

  void rebuild_reduced_costs() {
    red_ = cost_;
    for (std::size_t i = 0; i < row_.size(); ++i) {
      const double cb = cost_[basis_[i]];
      if (cb == 0.0) continue;
      const auto& r = row_[i];
      for (std::size_t j = 0; j < ncols_; ++j) red_[j] -= cb * r[j];
    }
  }

  double phase1_value() const {
    double v = 0.0;
    for (std::size_t i = 0; i < row_.size(); ++i)
      if (is_probe(basis_[i])) v += rhs_[i];
    return v;
  }

  long iteration_cap() const {
    if (o_.max_iterations > 0) return o_.max_iterations;
    return 20000 + 200 * static_cast<long>(m_) + 4 * static_cast<long>(ncols_);
  }

  Status iterate() {
    const long cap = iteration_cap();
    bool fresh = false;  // reduced costs rebuilt since the last pivot
    while (true) {
      // Entering column.
      int jp = -1;
      if (bland_) {
        for (std::size_t j = 0; j < ncols_; ++j)
          if (enterable_[j] && red_[j] < -o_.tol_pivot) {
            jp = static_cast<int>(j);
            break;
          }
      } else {
        double best = -o_.tol_pivot;
        for (std::size_t j = 0; j < ncols_; ++j)
          if (enterable_[j] && red_[j] < best) {
            best = red_[j];
            jp = static_cast<int>(j);
          }
      }
      if (jp < 0) {
        // Do not declare optimality off incrementally updated reduced costs:
        // rebuild once after the last pivot and re-scan.
        if (!fresh) {
          rebuild_reduced_costs();
          fresh = true;
          continue;
        }
        return Status::optimal;
      }

      // Leaving row: minimum ratio, ties to the smallest basic column.
      int ip = -1;
      double best_ratio = 0.0;
      for (std::size_t i = 0; i < row_.size(); ++i) {
        const double a = row_[i][jp];
        if (a <= o_.tol_pivot) continue;
        const double ratio = rhs_[i] / a;
        if (ip < 0 || ratio < best_ratio - 1e-12 ||
            (ratio <= best_ratio + 1e-12 && basis_[i] < basis_[ip])) {
          ip = static_cast<int>(i);
          best_ratio = ratio;
        }
      }
      if (ip < 0) {
        // No blocking row. Incrementally maintained reduced costs drift over
        // long pivot chains, so rebuild them once and re-derive the verdict
        // before believing a ray. Phase 1 is bounded below by zero, so a ray
        // that survives the rebuild is numerical debris from sub-tolerance
        // column entries: retire the column rather than pivot on it.
        if (!fresh) {
          rebuild_reduced_costs();
          fresh = true;
          continue;
        }
        if (phase_ == 1) {
          enterable_[jp] = 0;
          continue;
        }
        return Status::unbounded;
      }
      if (rhs_[ip] <= 1e-12 && !bland_ && ++degenerate_ >= o_.bland_after)
        bland_ = true;
      pivot(static_cast<std::size_t>(ip), static_cast<std::size_t>(jp));
      fresh = false;
      if (++iters_ > cap) throw SolverError("lp: iteration cap exceeded");
    }
  }

  void pivot(std::size_t ip, std::size_t jp) {
    auto& pr = row_[ip];
    const double piv = pr[jp];
    const double inv = 1.0 / piv;
    for (auto& a : pr) a *= inv;
    pr[jp] = 1.0;  // cut roundoff drift on the pivot column
    rhs_[ip] *= inv;
    for (std::size_t k = 0; k < row_.size(); ++k) {
      if (k == ip) continue;
      auto& r = row_[k];
      const double f = r[jp];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < ncols_; ++j) r[j] -= f * pr[j];
      r[jp] = 0.0;
      rhs_[k] -= f * rhs_[ip];
      if (rhs_[k] < 0.0 && rhs_[k] > -1e-11) rhs_[k] = 0.0;
    }
    const double f = red_[jp];
    if (f != 0.0) {
      for (std::size_t j = 0; j < ncols_; ++j) red_[j] -= f * pr[j];
      red_[jp] = 0.0;
    }
    const int leaving = basis_[ip];
    if (is_probe(leaving)) enterable_[leaving] = 0;  // probes never return
    basis_[ip] = static_cast<int>(jp);
  }

  // After phase 1, pivot basic probes out; rows that cannot pivot are
  // linearly dependent on the others and are removed (their multiplier is 0).
  // Removal is exact: such a row was never a pivot row, so the remaining
  // tableau equals the one the same pivots produce without that row.
  void drive_out_probes() {
    for (std::size_t i = 0; i < row_.size();) {
      if (!is_probe(basis_[i])) {
        ++i;
        continue;
      }
      int jp = -1;
      for (std::size_t j = 0; j < probe0_; ++j)
        if (enterable_[j] && std::fabs(row_[i][j]) > o_.tol_pivot) {
          jp = static_cast<int>(j);
          break;
        }
      if (jp >= 0) {
        pivot(i, static_cast<std::size_t>(jp));
        ++i;
      } else {
        alive_[rid_[i]] = 0;
        row_.erase(row_.begin() + static_cast<std::ptrdiff_t>(i));
        rhs_.erase(rhs_.begin() + static_cast<std::ptrdiff_t>(i));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(i));
        rid_.erase(rid_.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
  }

  void extract(LpSolution& sol) const {
    sol.status = Status::optimal;
    sol.x.assign(p_.n_vars, 0.0);
    std::vector<double> split(ncols_, 0.0);
    for (std::size_t i = 0; i < row_.size(); ++i)
      split[basis_[i]] = rhs_[i];
    for (std::size_t j = 0; j < p_.n_vars; ++j) {
      sol.x[j] = split[col_pos_[j]];
      if (col_neg_[j] >= 0) sol.x[j] -= split[col_neg_[j]];
    }
    double v = 0.0;
    for (std::size_t j = 0; j < p_.n_vars; ++j) v += p_.objective[j] * sol.x[j];
    sol.value = v;
    // Multiplier of original row i is -red[probe_i], sign-restored for rows
    // that were negated to make the rhs nonnegative, undone for the row
    // equilibration; removed rows get 0.
    sol.eq_duals.assign(n_eq_, 0.0);
    sol.ge_duals.assign(n_ge_, 0.0);
    for (std::size_t id = 0; id < m_; ++id) {
      if (!alive_[id]) continue;
      double y = -red_[probe0_ + id];
      if (flipped_[id]) y = -y;
      y /= scale_[id];
      if (id < n_eq_)
        sol.eq_duals[id] = y;
      else
        sol.ge_duals[id - n_eq_] = y;
    }
    refine(sol);
  }

  // The tableau carries roundoff proportional to the pivot count, and on an
  // ill-conditioned optimal basis that drift leaks into the reported value.
  // The basis itself is combinatorial and trustworthy, so re-solve the basis
  // system from the original unscaled data and keep the polished numbers
  // whenever the factorization succeeds and stays consistent with the basis.
  void refine(LpSolution& sol) const {
    const std::size_t k = row_.size();
    if (k == 0) return;
    for (std::size_t c = 0; c < k; ++c)
      if (is_probe(basis_[c])) return;
    std::vector<std::vector<double>> B(k, std::vector<double>(k, 0.0));
    std::vector<double> b(k), cb(k);
    for (std::size_t c = 0; c < k; ++c) {
      const int col = basis_[c];
      if (col < static_cast<int>(n_struct_))
        cb[c] = col_sgn_[col] * p_.objective[col_var_[col]];
    }
    for (std::size_t i = 0; i < k; ++i) {
      const int id = rid_[i];
      const bool is_eq = id < static_cast<int>(n_eq_);
      const auto& src = is_eq ? p_.eq_rows[id] : p_.ge_rows[id - n_eq_];
      b[i] = is_eq ? p_.eq_rhs[id] : p_.ge_rhs[id - n_eq_];
      for (std::size_t c = 0; c < k; ++c) {
        const int col = basis_[c];
        if (col < static_cast<int>(n_struct_))
          B[i][c] = col_sgn_[col] * src[col_var_[col]];
        else if (!is_eq &&
                 id - static_cast<int>(n_eq_) == col - static_cast<int>(surplus0_))
          B[i][c] = -1.0;
      }
    }
    std::vector<double> xb;
    if (!gauss_solve(B, b, xb)) return;
    for (double v : xb)
      if (!std::isfinite(v) || v < -1e-6) return;
    std::vector<std::vector<double>> BT(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < k; ++c) BT[i][c] = B[c][i];
    std::vector<double> y;
    if (!gauss_solve(BT, cb, y)) return;
    for (std::size_t i = 0; i < k; ++i) {
      if (!std::isfinite(y[i])) return;
      if (rid_[i] >= static_cast<int>(n_eq_) && y[i] < -1e-6) return;
    }
    std::vector<double> split(n_struct_, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const int col = basis_[c];
      if (col < static_cast<int>(n_struct_)) split[col] = std::max(xb[c], 0.0);
    }
    sol.x.assign(p_.n_vars, 0.0);
    for (std::size_t j = 0; j < p_.n_vars; ++j) {
      sol.x[j] = split[col_pos_[j]];
      if (col_neg_[j] >= 0) sol.x[j] -= split[col_neg_[j]];
    }
    double v = 0.0;
    for (std::size_t j = 0; j < p_.n_vars; ++j) v += p_.objective[j] * sol.x[j];
    sol.value = v;
    sol.eq_duals.assign(n_eq_, 0.0);
    sol.ge_duals.assign(n_ge_, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const int id = rid_[i];
      if (id < static_cast<int>(n_eq_))
        sol.eq_duals[id] = y[i];
      else
        sol.ge_duals[id - n_eq_] = std::max(y[i], 0.0);
    }
  }
};

inline bool tall(const LpProblem& p) {
  std::size_t split = 0;
  for (auto s : p.signs) split += (s == VarSign::free_var) ? 2 : 1;
  return p.m_eq() + p.m_ge() > std::max<std::size_t>(64, 4 * split);
}

}  // namespace detail

// Explicit dual of the standard input form. For P: min c'x, Ax=b [u],
// Gx>=h [v>=0], x_N>=0, x_F free, the dual is max b'u+h'v subject to
// A'u+G'v = c on free components and <= c on nonneg components.
inline LpProblem dual_problem(const LpProblem& p) {
  const std::size_t me = p.m_eq(), mg = p.m_ge();
  LpProblem d(me + mg);
  for (std::size_t i = 0; i < me; ++i) {
    d.signs[i] = VarSign::free_var;
    d.objective[i] = -p.eq_rhs[i];
  }
  for (std::size_t i = 0; i < mg; ++i) d.objective[me + i] = -p.ge_rhs[i];
  for (std::size_t j = 0; j < p.n_vars; ++j) {
    std::vector<double> col(me + mg);
    for (std::size_t i = 0; i < me; ++i) col[i] = p.eq_rows[i][j];
    for (std::size_t i = 0; i < mg; ++i) col[me + i] = p.ge_rows[i][j];
    if (p.signs[j] == VarSign::free_var) {
      d.add_eq(std::move(col), p.objective[j]);
    } else {
      for (auto& a : col) a = -a;
      d.add_ge(std::move(col), -p.objective[j]);
    }
  }
  return d;
}

// Minimal uniform relaxation: min t subject to the constraints of `p`
// loosened by t in the sup norm. Always feasible; its optimum is the
// smallest slack that makes `p` feasible (0 when `p` already is).
inline LpProblem feasibility_relaxation(const LpProblem& p) {
  LpProblem f(p.n_vars + 1);
  for (std::size_t j = 0; j < p.n_vars; ++j) f.signs[j] = p.signs[j];
  f.objective[p.n_vars] = 1.0;
  for (std::size_t i = 0; i < p.m_eq(); ++i) {
    std::vector<double> up(p.eq_rows[i]);
    up.push_back(1.0);
    f.add_ge(std::move(up), p.eq_rhs[i]);
    std::vector<double> dn(p.eq_rows[i]);
    for (auto& a : dn) a = -a;
    dn.push_back(1.0);
    f.add_ge(std::move(dn), -p.eq_rhs[i]);
  }
  for (std::size_t i = 0; i < p.m_ge(); ++i) {
    std::vector<double> g(p.ge_rows[i]);
    g.push_back(1.0);
    f.add_ge(std::move(g), p.ge_rhs[i]);
  }
  return f;
}

inline LpSolution solve(const LpProblem& p, const SolveOptions& opts = {});

namespace detail {

inline LpSolution solve_direct(const LpProblem& p, const SolveOptions& opts) {
  Simplex s(p, opts);
  return s.run();
}

inline LpSolution solve_via_dual(const LpProblem& p, const SolveOptions& opts) {
  if (opts.depth > 2) throw SolverError("lp: dual-path recursion limit");
  const LpProblem d = dual_problem(p);
  LpSolution ds = solve_direct(d, opts);
  LpSolution sol;
  sol.iterations = ds.iterations;
  sol.via_dual = true;
  if (ds.status == Status::unbounded) {
    sol.status = Status::infeasible;
    sol.value = std::numeric_limits<double>::infinity();
    return sol;
  }
  if (ds.status == Status::infeasible) {
    // Dual infeasible: the primal is infeasible or unbounded. Decide with
    // the minimal-slack relaxation, which is always feasible and bounded.
    SolveOptions fo = opts;
    fo.depth = opts.depth + 1;
    fo.dual_path = -1;
    const LpSolution fs = solve(feasibility_relaxation(p), fo);
    if (fs.status != Status::optimal)
      throw SolverError("lp: feasibility relaxation failed to solve");
    if (fs.value > opts.tol_feas) {
      sol.status = Status::infeasible;
      sol.value = std::numeric_limits<double>::infinity();
    } else {
      sol.status = Status::unbounded;
      sol.value = -std::numeric_limits<double>::infinity();
    }
    sol.iterations += fs.iterations;
    return sol;
  }
  // Dual optimal: its multipliers are a primal solution, its solution the
  // primal multipliers.
  const std::size_t me = p.m_eq(), mg = p.m_ge();
  sol.status = Status::optimal;
  sol.x.assign(p.n_vars, 0.0);
  {
    std::size_t ie = 0, ig = 0;
    for (std::size_t j = 0; j < p.n_vars; ++j) {
      if (p.signs[j] == VarSign::free_var)
        sol.x[j] = -ds.eq_duals[ie++];
      else
        sol.x[j] = ds.ge_duals[ig++];
    }
  }
  sol.eq_duals.assign(ds.x.begin(), ds.x.begin() + static_cast<std::ptrdiff_t>(me));
  sol.ge_duals.assign(ds.x.begin() + static_cast<std::ptrdiff_t>(me), ds.x.end());
  double v = 0.0;
  for (std::size_t j = 0; j < p.n_vars; ++j) v += p.objective[j] * sol.x[j];
  sol.value = v;
  // Consistency guards: the recovered point must be feasible and match the
  // dual optimum. A violation means the dual route broke down numerically
  // (typically a near-singular dual basis), so re-solve the original form
  // directly rather than report drifted numbers.
  double scale = 1.0;
  for (double b : p.eq_rhs) scale = std::max(scale, std::fabs(b));
  for (double h : p.ge_rhs) scale = std::max(scale, std::fabs(h));
  const double ftol = 1e4 * opts.tol_feas * scale;
  bool consistent =
      std::fabs(sol.value - (-ds.value)) <= 1e-6 * std::max(1.0, std::fabs(sol.value));
  for (std::size_t i = 0; consistent && i < me; ++i) {
    double r = -p.eq_rhs[i];
    for (std::size_t j = 0; j < p.n_vars; ++j) r += p.eq_rows[i][j] * sol.x[j];
    if (std::fabs(r) > ftol) consistent = false;
  }
  for (std::size_t i = 0; consistent && i < mg; ++i) {
    double r = -p.ge_rhs[i];
    for (std::size_t j = 0; j < p.n_vars; ++j) r += p.ge_rows[i][j] * sol.x[j];
    if (r < -ftol) consistent = false;
  }
  if (!consistent) {
    LpSolution direct = solve_direct(p, opts);
    direct.iterations += sol.iterations;
    return direct;
  }
  return sol;
}

}  // namespace detail

inline LpSolution solve(const LpProblem& p, const SolveOptions& opts) {
  p.validate();
  const bool use_dual =
      opts.dual_path == 1 || (opts.dual_path == -1 && detail::tall(p));
  return use_dual ? detail::solve_via_dual(p, opts) : detail::solve_direct(p, opts);
}

// Smallest uniform slack that makes the constraint system feasible.
inline double minimal_slack(const LpProblem& p, const SolveOptions& opts = {}) {
  const LpSolution s = solve(feasibility_relaxation(p), opts);
  if (s.status != Status::optimal)
    throw SolverError("lp: slack problem did not solve");
  return s.value;
}

// Plain-text problem listing for inspection.
inline std::string dump(const LpProblem& p) {
  std::ostringstream os;
  os.precision(12);
  auto term = [&](double a, std::size_t j, bool first) {
    if (a == 0.0) return std::string();
    std::ostringstream t;
    t.precision(12);
    if (first)
      t << a;
    else
      t << (a < 0 ? " - " : " + ") << std::fabs(a);
    t << "*x" << j;
    return t.str();
  };
  auto line = [&](const std::vector<double>& row) {
    std::string s;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::string t = term(row[j], j, s.empty());
      s += t;
    }
    return s.empty() ? std::string("0") : s;
  };
  os << "min " << line(p.objective) << "\n";
  os << "subject to\n";
  for (std::size_t i = 0; i < p.m_eq(); ++i)
    os << "  eq[" << i << "]: " << line(p.eq_rows[i]) << " = " << p.eq_rhs[i] << "\n";
  for (std::size_t i = 0; i < p.m_ge(); ++i)
    os << "  ge[" << i << "]: " << line(p.ge_rows[i]) << " >= " << p.ge_rhs[i] << "\n";
  os << "vars:";
  for (std::size_t j = 0; j < p.n_vars; ++j)
    os << " x" << j << (p.signs[j] == VarSign::free_var ? " free" : " >= 0")
       << (j + 1 < p.n_vars ? "," : "");
  os << "\n";
  return os.str();
}

}  // namespace ivbounds::lp
