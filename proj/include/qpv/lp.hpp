#pragma once

// Small dense linear programs:
//
//   maximize  c.x   s.t.  A_eq x = b_eq,  A_le x <= b_le,  x >= 0
//
// Two-phase tableau simplex (Dantzig pricing, Bland's rule once a run of
// degenerate pivots is detected). After termination the basic solution and
// the duals are recomputed from the original data with an LU solve, so the
// reported numbers do not carry the tableau's accumulated rounding.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "qpv/core.hpp"

namespace qpv::lp {

struct Problem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<std::vector<double>> le_rows;
  std::vector<double> le_rhs;
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Options {
  double pivot_tol = 1e-10;
  double cost_tol = 1e-12;
  double feas_tol = 1e-9;
  int max_iterations = 50000;
};

struct Solution {
  Status status = Status::iteration_limit;
  double value = 0.0;
  std::vector<double> x;
  std::vector<double> y_eq;  // duals; c <= A_eq^T y_eq + A_le^T y_le, y_le >= 0
  std::vector<double> y_le;
  double phase1_residual = 0.0;  // sum of artificials left after phase I
  int iterations = 0;
};

struct Certificate {
  double primal_residual = 0.0;  // worst violation of Ax=b, Ax<=b, x>=0
  double dual_residual = 0.0;    // worst violation of A^T y >= c, y_le >= 0
  double dual_value = 0.0;       // b.y
  double gap = 0.0;              // |b.y - c.x|
};

namespace detail {

class Tableau {
 public:
  Tableau(int rows, int cols) : m_(rows), n_(cols), t_((rows + 1) * (cols + 1), 0.0) {}

  double& operator()(int i, int j) { return t_[static_cast<std::size_t>(i * (n_ + 1) + j)]; }
  double operator()(int i, int j) const { return t_[static_cast<std::size_t>(i * (n_ + 1) + j)]; }
  double& rhs(int i) { return (*this)(i, n_); }
  double& cost(int j) { return (*this)(m_, j); }

  void pivot(int r, int e) {
    const double inv = 1.0 / (*this)(r, e);
    for (int j = 0; j <= n_; ++j) (*this)(r, j) *= inv;
    (*this)(r, e) = 1.0;
    for (int i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = (*this)(i, e);
      if (f == 0.0) continue;
      for (int j = 0; j <= n_; ++j) (*this)(i, j) -= f * (*this)(r, j);
      (*this)(i, e) = 0.0;
    }
  }

  int rows() const { return m_; }
  int cols() const { return n_; }

 private:
  int m_, n_;
  std::vector<double> t_;
};

}  // namespace detail

inline Solution solve(const Problem& p, const Options& opt = {}) {
  const int n = p.num_vars;
  const int meq = static_cast<int>(p.eq_rows.size());
  const int mle = static_cast<int>(p.le_rows.size());
  const int m = meq + mle;
  if (static_cast<int>(p.objective.size()) != n || static_cast<int>(p.eq_rhs.size()) != meq ||
      static_cast<int>(p.le_rhs.size()) != mle)
    throw invalid_input("lp: inconsistent problem dimensions");

  // Column layout: [structural n | slacks mle | artificials m]
  const int ns = n + mle;
  const int ncols = ns + m;
  detail::Tableau T(m, ncols);
  std::vector<int> basis(static_cast<std::size_t>(m));
  std::vector<char> allowed(static_cast<std::size_t>(ncols), 1);

  for (int i = 0; i < m; ++i) {
    const bool is_eq = i < meq;
    const auto& row = is_eq ? p.eq_rows[static_cast<std::size_t>(i)] : p.le_rows[static_cast<std::size_t>(i - meq)];
    double b = is_eq ? p.eq_rhs[static_cast<std::size_t>(i)] : p.le_rhs[static_cast<std::size_t>(i - meq)];
    if (static_cast<int>(row.size()) != n) throw invalid_input("lp: row length mismatch");
    const double s = b < 0 ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) T(i, j) = s * row[static_cast<std::size_t>(j)];
    if (!is_eq) T(i, n + (i - meq)) = s;
    T.rhs(i) = s * b;
    if (!is_eq && s > 0) {
      basis[static_cast<std::size_t>(i)] = n + (i - meq);
    } else {
      T(i, ns + i) = 1.0;
      basis[static_cast<std::size_t>(i)] = ns + i;
    }
  }
  for (int j = ns; j < ncols; ++j) {
    bool used = false;
    for (int b : basis) used |= (b == j);
    if (!used) allowed[static_cast<std::size_t>(j)] = 0;
  }

  Solution sol;
  std::vector<char> row_alive(static_cast<std::size_t>(m), 1);

  // Runs simplex iterations on the current cost row (reduced costs d_j; enter if d_j > tol).
  auto iterate = [&]() -> Status {
    int degenerate_run = 0;
    while (true) {
      if (sol.iterations++ > opt.max_iterations) return Status::iteration_limit;
      const bool bland = degenerate_run > 50;
      int e = -1;
      double best = opt.cost_tol;
      for (int j = 0; j < ncols; ++j) {
        if (!allowed[static_cast<std::size_t>(j)]) continue;
        const double d = T.cost(j);
        if (d > opt.cost_tol) {
          if (bland) {
            e = j;
            break;
          }
          if (d > best) {
            best = d;
            e = j;
          }
        }
      }
      if (e < 0) return Status::optimal;
      int r = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (!row_alive[static_cast<std::size_t>(i)]) continue;
        const double a = T(i, e);
        if (a > opt.pivot_tol) {
          const double ratio = std::max(T.rhs(i), 0.0) / a;
          if (ratio < best_ratio - 1e-14 ||
              (ratio <= best_ratio + 1e-14 && r >= 0 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(r)])) {
            best_ratio = ratio;
            r = i;
          }
        }
      }
      if (r < 0) return Status::unbounded;
      degenerate_run = best_ratio <= 1e-14 ? degenerate_run + 1 : 0;
      T.pivot(r, e);
      basis[static_cast<std::size_t>(r)] = e;
    }
  };

  // Phase I: maximize -sum(artificials).
  for (int j = 0; j <= ncols; ++j) T.cost(j) = 0.0;
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] >= ns) {
      for (int j = 0; j <= ncols; ++j) {
        if (j < ns || j == ncols) T.cost(j) += T(i, j);
      }
    }
  }
  Status st = iterate();
  if (st == Status::iteration_limit) {
    sol.status = st;
    return sol;
  }
  double resid = 0.0;
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] >= ns) resid += std::abs(T.rhs(i));
  }
  sol.phase1_residual = resid;
  double bscale = 1.0;
  for (double b : p.eq_rhs) bscale = std::max(bscale, std::abs(b));
  for (double b : p.le_rhs) bscale = std::max(bscale, std::abs(b));
  if (resid > opt.feas_tol * bscale) {
    sol.status = Status::infeasible;
    return sol;
  }
  // Drive remaining artificials out of the basis; rows that cannot be pivoted are redundant.
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] < ns) continue;
    int e = -1;
    double best = 1e-9;
    for (int j = 0; j < ns; ++j) {
      if (std::abs(T(i, j)) > best) {
        best = std::abs(T(i, j));
        e = j;
      }
    }
    if (e >= 0) {
      T.pivot(i, e);
      basis[static_cast<std::size_t>(i)] = e;
    } else {
      row_alive[static_cast<std::size_t>(i)] = 0;
    }
  }
  for (int j = ns; j < ncols; ++j) allowed[static_cast<std::size_t>(j)] = 0;

  // Phase II.
  auto c_of = [&](int j) { return j < n ? p.objective[static_cast<std::size_t>(j)] : 0.0; };
  for (int j = 0; j <= ncols; ++j) {
    double d = j < ncols ? c_of(j) : 0.0;
    for (int i = 0; i < m; ++i) {
      if (!row_alive[static_cast<std::size_t>(i)]) continue;
      d -= c_of(basis[static_cast<std::size_t>(i)]) * T(i, j);
    }
    T.cost(j) = j < ncols ? d : -d;
  }
  st = iterate();
  sol.status = st;
  if (st != Status::optimal) return sol;

  // Recompute the basic solution and duals from the original data.
  std::vector<int> rows;
  for (int i = 0; i < m; ++i)
    if (row_alive[static_cast<std::size_t>(i)]) rows.push_back(i);
  const int k = static_cast<int>(rows.size());
  auto orig = [&](int i, int j) -> double {
    if (i < meq) return j < n ? p.eq_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] : 0.0;
    if (j < n) return p.le_rows[static_cast<std::size_t>(i - meq)][static_cast<std::size_t>(j)];
    return j == n + (i - meq) ? 1.0 : 0.0;
  };
  Eigen::MatrixXd B(k, k);
  Eigen::VectorXd b(k), cb(k);
  for (int r = 0; r < k; ++r) {
    const int i = rows[static_cast<std::size_t>(r)];
    b(r) = i < meq ? p.eq_rhs[static_cast<std::size_t>(i)] : p.le_rhs[static_cast<std::size_t>(i - meq)];
    for (int c = 0; c < k; ++c) B(r, c) = orig(i, basis[static_cast<std::size_t>(rows[static_cast<std::size_t>(c)])]);
  }
  for (int c = 0; c < k; ++c) cb(c) = c_of(basis[static_cast<std::size_t>(rows[static_cast<std::size_t>(c)])]);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  Eigen::VectorXd xb = lu.solve(b);
  Eigen::VectorXd y = lu.transpose().solve(cb);

  sol.x.assign(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < k; ++c) {
    const int j = basis[static_cast<std::size_t>(rows[static_cast<std::size_t>(c)])];
    if (j < n) sol.x[static_cast<std::size_t>(j)] = std::max(0.0, xb(c));
  }
  sol.y_eq.assign(static_cast<std::size_t>(meq), 0.0);
  sol.y_le.assign(static_cast<std::size_t>(mle), 0.0);
  for (int r = 0; r < k; ++r) {
    const int i = rows[static_cast<std::size_t>(r)];
    if (i < meq)
      sol.y_eq[static_cast<std::size_t>(i)] = y(r);
    else
      sol.y_le[static_cast<std::size_t>(i - meq)] = y(r);
  }
  sol.value = 0.0;
  for (int j = 0; j < n; ++j) sol.value += p.objective[static_cast<std::size_t>(j)] * sol.x[static_cast<std::size_t>(j)];
  return sol;
}

inline Certificate certify(const Problem& p, const Solution& s) {
  Certificate c;
  const int n = p.num_vars;
  for (std::size_t i = 0; i < p.eq_rows.size(); ++i) {
    double ax = 0.0;
    for (int j = 0; j < n; ++j) ax += p.eq_rows[i][static_cast<std::size_t>(j)] * s.x[static_cast<std::size_t>(j)];
    c.primal_residual = std::max(c.primal_residual, std::abs(ax - p.eq_rhs[i]));
    c.dual_value += p.eq_rhs[i] * s.y_eq[i];
  }
  for (std::size_t i = 0; i < p.le_rows.size(); ++i) {
    double ax = 0.0;
    for (int j = 0; j < n; ++j) ax += p.le_rows[i][static_cast<std::size_t>(j)] * s.x[static_cast<std::size_t>(j)];
    c.primal_residual = std::max(c.primal_residual, ax - p.le_rhs[i]);
    c.dual_value += p.le_rhs[i] * s.y_le[i];
    c.dual_residual = std::max(c.dual_residual, -s.y_le[i]);
  }
  for (int j = 0; j < n; ++j) {
    c.primal_residual = std::max(c.primal_residual, -s.x[static_cast<std::size_t>(j)]);
    double aty = 0.0;
    for (std::size_t i = 0; i < p.eq_rows.size(); ++i) aty += p.eq_rows[i][static_cast<std::size_t>(j)] * s.y_eq[i];
    for (std::size_t i = 0; i < p.le_rows.size(); ++i) aty += p.le_rows[i][static_cast<std::size_t>(j)] * s.y_le[i];
    c.dual_residual = std::max(c.dual_residual, p.objective[static_cast<std::size_t>(j)] - aty);
  }
  c.gap = std::abs(c.dual_value - s.value);
  return c;
}

/// Upper bound on the LP optimum implied by the duals alone. For any feasible
/// x with sum(x) <= x_sum_bound: c.x <= b.y + dual_residual * x_sum_bound.
inline double dual_upper_bound(const Problem& p, const Solution& s, double x_sum_bound) {
  const auto c = certify(p, s);
  return c.dual_value + std::max(0.0, c.dual_residual) * x_sum_bound;
}

}  // namespace qpv::lp
