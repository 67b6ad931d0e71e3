#pragma once

// Maximum-likelihood fitting over a polytope and the mismatch regularization.

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>
#include <vector>

#include "qpv/core.hpp"
#include "qpv/polytopes.hpp"
#include "qpv/trialdata.hpp"

namespace qpv {

struct LogLikelihoodFit {
  std::vector<double> x;
  double objective = 0.0;   // sum_i w_i log x_i
  double gap_bound = 0.0;   // duality-gap bound m/t at termination
  int newton_steps = 0;
};

struct BarrierOptions {
  double t0 = 1.0;
  double mu = 10.0;
  double gap_tol = 1e-14;
  int max_newton_per_stage = 200;
};

/// Maximizes  sum_i w_i log x_i  over a PolytopeH whose reference point is
/// strictly interior, with w_i >= 0.
///
/// Log-barrier path following on the affine hull: x = x0 + N u with N an
/// orthonormal null-space basis of the equality rows, damped Newton steps
/// with a feasibility-preserving backtracking line search.
inline LogLikelihoodFit maximize_log_likelihood(const PolytopeH& poly, const std::vector<double>& w,
                                               const BarrierOptions& opt = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = poly.num_vars;
  if (static_cast<int>(w.size()) != n) throw invalid_input("weight vector has wrong dimension");
  for (double v : w)
    if (!(v >= 0.0) || !std::isfinite(v)) throw invalid_input("weights must be finite and nonnegative");

  const auto x0v = poly.reference_point();
  VectorXd x0 = Eigen::Map<const VectorXd>(x0v.data(), n);
  MatrixXd N;
  if (poly.eq_rows.empty()) {
    N = MatrixXd::Identity(n, n);
  } else {
    MatrixXd A(static_cast<Eigen::Index>(poly.eq_rows.size()), n);
    for (std::size_t i = 0; i < poly.eq_rows.size(); ++i)
      for (int j = 0; j < n; ++j) A(static_cast<Eigen::Index>(i), j) = poly.eq_rows[i][static_cast<std::size_t>(j)];
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-10 * sv(0)) ++rank;
    N = svd.matrixV().rightCols(n - rank);
  }
  const int mle = static_cast<int>(poly.le_rows.size());
  MatrixXd G(mle, n);
  VectorXd h(mle);
  for (int i = 0; i < mle; ++i) {
    for (int j = 0; j < n; ++j) G(i, j) = poly.le_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    h(i) = poly.le_rhs[static_cast<std::size_t>(i)];
  }
  if ((x0.array() <= 0).any() || (mle > 0 && ((h - G * x0).array() <= 0).any()))
    throw structural_error("reference point is not strictly interior");

  VectorXd wv = Eigen::Map<const VectorXd>(w.data(), n);
  const MatrixXd GN = G * N;
  const double m_ineq = n + mle;

  auto phi = [&](const VectorXd& x, double t, bool& ok) {
    ok = true;
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!(x(i) > 0)) {
        ok = false;
        return 0.0;
      }
      f += (t * wv(i) + 1.0) * std::log(x(i));
    }
    for (int i = 0; i < mle; ++i) {
      const double s = h(i) - G.row(i).dot(x);
      if (!(s > 0)) {
        ok = false;
        return 0.0;
      }
      f += std::log(s);
    }
    return f;
  };

  LogLikelihoodFit out;
  VectorXd x = x0;
  double t = opt.t0;
  while (true) {
    for (int it = 0; it < opt.max_newton_per_stage; ++it) {
      VectorXd gx(n);
      VectorXd hd(n);
      for (int i = 0; i < n; ++i) {
        gx(i) = (t * wv(i) + 1.0) / x(i);
        hd(i) = (t * wv(i) + 1.0) / (x(i) * x(i));
      }
      VectorXd s = h - G * x;
      VectorXd inv_s = s.cwiseInverse();
      VectorXd g = N.transpose() * gx - GN.transpose() * inv_s;
      MatrixXd H = N.transpose() * hd.asDiagonal() * N + GN.transpose() * inv_s.cwiseAbs2().asDiagonal() * GN;
      Eigen::LDLT<MatrixXd> ldlt(H);
      VectorXd du = ldlt.solve(g);
      const double dec2 = g.dot(du);
      ++out.newton_steps;
      if (dec2 < 1e-20 * std::max(1.0, t)) break;
      VectorXd dx = N * du;
      // Largest step keeping strict feasibility.
      double amax = 1.0;
      for (int i = 0; i < n; ++i)
        if (dx(i) < 0) amax = std::min(amax, -0.99 * x(i) / dx(i));
      VectorXd gdx = G * dx;
      for (int i = 0; i < mle; ++i)
        if (gdx(i) > 0) amax = std::min(amax, 0.99 * s(i) / gdx(i));
      bool ok = false;
      const double f0 = phi(x, t, ok);
      double a = amax;
      while (a > 1e-20) {
        VectorXd xn = x + a * dx;
        const double f1 = phi(xn, t, ok);
        if (ok && f1 >= f0 + 0.25 * a * dec2 - 1e-15 * std::abs(f0)) break;
        a *= 0.5;
      }
      if (a <= 1e-20) break;
      x += a * dx;
      if (dec2 < 1e-18 * std::max(1.0, t) && a == amax) break;
    }
    if (m_ineq / t < opt.gap_tol) break;
    t *= opt.mu;
  }
  out.gap_bound = m_ineq / t;
  out.x.assign(x.data(), x.data() + n);
  out.objective = 0.0;
  for (int i = 0; i < n; ++i)
    if (wv(i) > 0) out.objective += wv(i) * std::log(x(i));
  return out;
}

/// Maximum-likelihood estimate of σ̃ over the quantum set from the matched counts.
inline ConditionalDistribution2 ml_fit_quantum(const CountsTable& counts) {
  std::vector<double> w(16, 0.0);
  double total = 0.0;
  for (int z = 0; z < kNumSettings; ++z) {
    std::uint64_t row = 0;
    for (int c = 0; c < kNumMatched; ++c) row += counts.matched(z, c);
    if (row == 0) throw degenerate_input("settings pair has no matched counts");
    for (int c = 0; c < kNumMatched; ++c) {
      w[static_cast<std::size_t>(z * 4 + c)] = static_cast<double>(counts.matched(z, c));
      total += static_cast<double>(counts.matched(z, c));
    }
  }
  for (double& v : w) v /= total;
  auto fit = maximize_log_likelihood(quantum_set(), w);
  auto d = from_vector2(fit.x);
  for (int z = 0; z < kNumSettings; ++z) {
    const double s = d.row_sum(z);
    for (int c = 0; c < kNumMatched; ++c) d.at(z, c) = std::max(0.0, d.at(z, c)) / s;
  }
  return d;
}

/// Spreads mismatch mass d evenly over the four zqa != zqb cells of each row.
inline ConditionalDistribution3 regularize(const ConditionalDistribution2& sigma, double d) {
  if (!(d >= 0.0 && d < 1.0)) throw invalid_input("mismatch probability must lie in [0, 1)");
  ConditionalDistribution3 out;
  for (int z = 0; z < kNumSettings; ++z) {
    for (int o = 0; o < kNumOutcomes; ++o) {
      const auto oc = outcome_from_index(o);
      out.at(z, o) = oc.matched() ? (1.0 - d) * sigma.at(z, matched_index(oc.oqa, oc.zqa)) : d / 4.0;
    }
  }
  return out;
}

/// The zqa = zqb part of σ, renormalized per settings row.
inline ConditionalDistribution2 matched_part(const ConditionalDistribution3& s) {
  ConditionalDistribution2 out;
  for (int z = 0; z < kNumSettings; ++z) {
    double tot = 0.0;
    for (int c = 0; c < kNumMatched; ++c) {
      auto [oqa, oqp] = matched_from_index(c);
      out.at(z, c) = s.at(z, outcome_index(oqa, oqp, oqp));
      tot += out.at(z, c);
    }
    if (!(tot > 0)) throw degenerate_input("settings row has no matched mass");
    for (int c = 0; c < kNumMatched; ++c) out.at(z, c) /= tot;
  }
  return out;
}

/// Multinomial log-likelihood (natural log, per total count) of σ̃ under matched counts.
inline double log_likelihood(const ConditionalDistribution2& sigma, const CountsTable& counts) {
  double total = 0.0, ll = 0.0;
  for (int z = 0; z < kNumSettings; ++z)
    for (int c = 0; c < kNumMatched; ++c) {
      const double n = static_cast<double>(counts.matched(z, c));
      total += n;
      if (n > 0) ll += n * std::log(sigma.at(z, c));
    }
  return ll / total;
}

inline nlohmann::json calibration_report(const CountsTable& counts, const ConditionalDistribution2& sigma, double d) {
  nlohmann::json j;
  j["counts"] = counts.n;
  j["sigma_matched"] = sigma.p;
  j["chsh"] = chsh_values(sigma);
  j["mismatch_probability"] = d;
  return j;
}

}  // namespace qpv
