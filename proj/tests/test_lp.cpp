#include <gtest/gtest.h>

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "qpv/lp.hpp"

using namespace qpv;

namespace {

// Brute-force oracle: enumerate every basic solution of {A x <= b, x >= 0}
// in n variables (all n-subsets of the active constraints).
double vertex_enumeration_max(const std::vector<std::vector<double>>& A, const std::vector<double>& b,
                              const std::vector<double>& c) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(A.size());
  std::vector<std::vector<double>> rows = A;
  std::vector<double> rhs = b;
  for (int j = 0; j < n; ++j) {
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    r[static_cast<std::size_t>(j)] = -1.0;
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  const int total = m + n;
  double best = -INFINITY;
  std::vector<int> pick(static_cast<std::size_t>(n));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) M(i, j) = rows[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])][static_cast<std::size_t>(j)];
        r(i) = rhs[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (lu.rank() < n) return;
      const Eigen::VectorXd x = lu.solve(r);
      for (int i = 0; i < total; ++i) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * x(j);
        if (s > rhs[static_cast<std::size_t>(i)] + 1e-9) return;
      }
      double v = 0;
      for (int j = 0; j < n; ++j) v += c[static_cast<std::size_t>(j)] * x(j);
      best = std::max(best, v);
      return;
    }
    for (int i = start; i < total; ++i) {
      pick[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST(Lp, TextbookMaximum) {
  lp::Problem p;
  p.num_vars = 2;
  p.objective = {3, 5};
  p.le_rows = {{1, 0}, {0, 2}, {3, 2}};
  p.le_rhs = {4, 12, 18};
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, 36.0, 1e-12);
  EXPECT_NEAR(s.x[0], 2.0, 1e-12);
  EXPECT_NEAR(s.x[1], 6.0, 1e-12);
  const auto c = lp::certify(p, s);
  EXPECT_LT(c.gap, 1e-10);
  EXPECT_LT(c.dual_residual, 1e-12);
  EXPECT_LT(c.primal_residual, 1e-12);
}

TEST(Lp, EqualityConstraints) {
  // max x + 2y + 3z, x + y + z = 1, z <= 0.25
  lp::Problem p;
  p.num_vars = 3;
  p.objective = {1, 2, 3};
  p.eq_rows = {{1, 1, 1}};
  p.eq_rhs = {1};
  p.le_rows = {{0, 0, 1}};
  p.le_rhs = {0.25};
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, 0.75 * 2 + 0.25 * 3, 1e-12);
  EXPECT_LT(lp::certify(p, s).gap, 1e-10);
}

TEST(Lp, Infeasible) {
  lp::Problem p;
  p.num_vars = 2;
  p.objective = {1, 1};
  p.eq_rows = {{1, 1}};
  p.eq_rhs = {2};
  p.le_rows = {{1, 1}};
  p.le_rhs = {1};
  EXPECT_EQ(lp::solve(p).status, lp::Status::infeasible);
}

TEST(Lp, Unbounded) {
  lp::Problem p;
  p.num_vars = 2;
  p.objective = {1, 0};
  p.le_rows = {{-1, 1}};
  p.le_rhs = {1};
  EXPECT_EQ(lp::solve(p).status, lp::Status::unbounded);
}

TEST(Lp, NegativeRhsRows) {
  // x >= 1 written as -x <= -1; min x -> max -x = -1
  lp::Problem p;
  p.num_vars = 1;
  p.objective = {-1};
  p.le_rows = {{-1}};
  p.le_rhs = {-1};
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, -1.0, 1e-12);
}

TEST(Lp, BealeCyclingExampleTerminates) {
  // Classic example on which Dantzig's rule cycles without an anti-cycling rule.
  lp::Problem p;
  p.num_vars = 4;
  p.objective = {0.75, -150, 0.02, -6};
  p.le_rows = {{0.25, -60, -0.04, 9}, {0.5, -90, -0.02, 3}, {0, 0, 1, 0}};
  p.le_rhs = {0, 0, 1};
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, 0.05, 1e-10);
}

TEST(Lp, RedundantEqualities) {
  lp::Problem p;
  p.num_vars = 3;
  p.objective = {1, -1, 2};
  p.eq_rows = {{1, 1, 1}, {2, 2, 2}, {1, 0, -1}};
  p.eq_rhs = {1, 2, 0};
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, 1.5, 1e-12);  // x = z = 1/2
  EXPECT_LT(lp::certify(p, s).gap, 1e-10);
}

TEST(Lp, RandomProblemsMatchVertexEnumeration) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 3, m = 5;
    lp::Problem p;
    p.num_vars = n;
    for (int j = 0; j < n; ++j) p.objective.push_back(U(g));
    for (int i = 0; i < m; ++i) {
      std::vector<double> r;
      for (int j = 0; j < n; ++j) r.push_back(U(g));
      p.le_rows.push_back(r);
      p.le_rhs.push_back(0.2 + std::abs(U(g)));
    }
    p.le_rows.push_back(std::vector<double>(n, 1.0));  // keeps the problem bounded
    p.le_rhs.push_back(3.0);
    const auto s = lp::solve(p);
    ASSERT_EQ(s.status, lp::Status::optimal);
    const double oracle = vertex_enumeration_max(p.le_rows, p.le_rhs, p.objective);
    EXPECT_NEAR(s.value, oracle, 1e-9) << "trial " << trial;
    const auto c = lp::certify(p, s);
    EXPECT_LT(c.gap, 1e-9 * std::max(1.0, std::abs(s.value)));
    EXPECT_GE(lp::dual_upper_bound(p, s, 3.0), oracle - 1e-12);
  }
}
