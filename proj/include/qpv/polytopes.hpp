#pragma once

// Correlation polytopes in half-space form and LP primitives over them.
//
// Coordinates for a k-party binary scenario are conditional probabilities
// P(outs | ins) at index  outs + 2^k * ins, where outs/ins pack party j's bit
// at position j. For two parties this coincides with ConditionalDistribution2
// (z*4 + c); for the three-party polytope the parties are
// (oqa|mqa), (zqa|b), (zqb|b') so the index is  o + 8*(x + 2b + 4b').

#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpv/core.hpp"
#include "qpv/lp.hpp"

namespace qpv {

struct PolytopeH {
  int num_vars = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> eq_rows;  // a.x = b
  std::vector<double> eq_rhs;
  std::vector<std::vector<double>> le_rows;  // a.x <= b (in addition to x >= 0)
  std::vector<double> le_rhs;
  std::vector<std::string> le_names;

  int num_inequalities() const { return num_vars + static_cast<int>(le_rows.size()); }

  /// Largest violation of any constraint (equalities in absolute value).
  double max_violation(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != num_vars) throw invalid_input("point has wrong dimension");
    double worst = 0.0;
    for (std::size_t i = 0; i < eq_rows.size(); ++i) {
      double ax = 0.0;
      for (int j = 0; j < num_vars; ++j) ax += eq_rows[i][static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      worst = std::max(worst, std::abs(ax - eq_rhs[i]));
    }
    for (std::size_t i = 0; i < le_rows.size(); ++i) {
      double ax = 0.0;
      for (int j = 0; j < num_vars; ++j) ax += le_rows[i][static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      worst = std::max(worst, ax - le_rhs[i]);
    }
    for (double v : x) worst = std::max(worst, -v);
    return worst;
  }

  bool contains(const std::vector<double>& x, double tol = 1e-9) const { return max_violation(x) <= tol; }

  int equality_rank() const {
    if (eq_rows.empty()) return 0;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(eq_rows.size()), num_vars);
    for (std::size_t i = 0; i < eq_rows.size(); ++i)
      for (int j = 0; j < num_vars; ++j) A(static_cast<Eigen::Index>(i), j) = eq_rows[i][static_cast<std::size_t>(j)];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    return static_cast<int>(lu.rank());
  }

  /// The uniform conditional distribution (every block sums to one).
  std::vector<double> reference_point() const {
    const int outs_per_block = block_size;
    return std::vector<double>(static_cast<std::size_t>(num_vars), 1.0 / outs_per_block);
  }

  lp::Problem as_lp(const std::vector<double>& objective) const {
    if (static_cast<int>(objective.size()) != num_vars) throw invalid_input("objective has wrong dimension");
    return {num_vars, objective, eq_rows, eq_rhs, le_rows, le_rhs};
  }

  void dump_csv(std::ostream& os) const {
    os << "kind,name";
    for (const auto& n : names) os << ',' << n;
    os << ",rhs\n";
    auto row = [&](const char* kind, const std::string& name, const std::vector<double>& a, double b) {
      os << kind << ',' << name;
      for (double v : a) os << ',' << v;
      os << ',' << b << '\n';
    };
    for (std::size_t i = 0; i < eq_rows.size(); ++i) row("eq", "e" + std::to_string(i), eq_rows[i], eq_rhs[i]);
    for (std::size_t i = 0; i < le_rows.size(); ++i) row("le", le_names[i], le_rows[i], le_rhs[i]);
  }

  int block_size = 4;  // outcomes per input combination
};

namespace detail {

inline int bit(int v, int j) { return (v >> j) & 1; }

/// Normalization plus non-signaling equalities for a k-party binary scenario:
/// for every party, the joint marginal of the others is independent of that
/// party's input.
inline void add_ns_structure(PolytopeH& p, int parties) {
  const int outs = 1 << parties;
  const int ins = 1 << parties;
  p.num_vars = outs * ins;
  p.block_size = outs;
  auto idx = [&](int o, int i) { return o + outs * i; };
  for (int i = 0; i < ins; ++i) {
    std::vector<double> r(static_cast<std::size_t>(p.num_vars), 0.0);
    for (int o = 0; o < outs; ++o) r[static_cast<std::size_t>(idx(o, i))] = 1.0;
    p.eq_rows.push_back(r);
    p.eq_rhs.push_back(1.0);
  }
  for (int party = 0; party < parties; ++party) {
    const int m = 1 << party;
    for (int i = 0; i < ins; ++i) {
      if (i & m) continue;  // i ranges over others' inputs with own input 0
      for (int o = 0; o < outs; ++o) {
        if (o & m) continue;
        std::vector<double> r(static_cast<std::size_t>(p.num_vars), 0.0);
        for (int own = 0; own < 2; ++own) {
          const int oo = o | (own ? m : 0);
          r[static_cast<std::size_t>(idx(oo, i))] += 1.0;
          r[static_cast<std::size_t>(idx(oo, i | m))] -= 1.0;
        }
        p.eq_rows.push_back(r);
        p.eq_rhs.push_back(0.0);
      }
    }
  }
}

inline std::vector<std::string> ns_names(int parties) {
  const int outs = 1 << parties;
  std::vector<std::string> names;
  for (int i = 0; i < outs; ++i) {
    for (int o = 0; o < outs; ++o) {
      std::string s = "p(";
      for (int j = 0; j < parties; ++j) s += std::to_string(1 + bit(o, j));
      s += "|";
      for (int j = 0; j < parties; ++j) s += std::to_string(1 + bit(i, j));
      names.push_back(s + ")");
    }
  }
  return names;
}

/// Correlator E(x,y) = P(a=b) - P(a!=b) as coefficients over the 16 two-party variables.
inline std::array<double, 16> correlator(int z) {
  std::array<double, 16> r{};
  r[static_cast<std::size_t>(z * 4 + 0)] = 1.0;
  r[static_cast<std::size_t>(z * 4 + 3)] = 1.0;
  r[static_cast<std::size_t>(z * 4 + 1)] = -1.0;
  r[static_cast<std::size_t>(z * 4 + 2)] = -1.0;
  return r;
}

}  // namespace detail

/// Coefficients of the 8 CHSH expressions ±(E11 + E21 + E12 + E22 - 2 E_k),
/// in the order (k = 0..3, sign +), (k = 0..3, sign -).
inline std::array<std::array<double, 16>, 8> chsh_coefficients() {
  std::array<std::array<double, 16>, 8> out{};
  for (int s = 0; s < 2; ++s) {
    for (int k = 0; k < 4; ++k) {
      auto& row = out[static_cast<std::size_t>(s * 4 + k)];
      for (int z = 0; z < 4; ++z) {
        const double sign = (z == k ? -1.0 : 1.0) * (s == 0 ? 1.0 : -1.0);
        auto e = detail::correlator(z);
        for (int j = 0; j < 16; ++j) row[static_cast<std::size_t>(j)] += sign * e[static_cast<std::size_t>(j)];
      }
    }
  }
  return out;
}

inline std::array<double, 8> chsh_values(const ConditionalDistribution2& d) {
  std::array<double, 8> v{};
  const auto coef = chsh_coefficients();
  for (int k = 0; k < 8; ++k) {
    for (int j = 0; j < 16; ++j) v[static_cast<std::size_t>(k)] += coef[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] * d.p[static_cast<std::size_t>(j)];
  }
  return v;
}

inline double max_chsh(const ConditionalDistribution2& d) {
  auto v = chsh_values(d);
  return *std::max_element(v.begin(), v.end());
}

inline PolytopeH two_party_ns() {
  PolytopeH p;
  detail::add_ns_structure(p, 2);
  p.names = detail::ns_names(2);
  return p;
}

namespace detail {
inline PolytopeH chsh_bounded(double bound) {
  PolytopeH p = two_party_ns();
  const auto coef = chsh_coefficients();
  for (int k = 0; k < 8; ++k) {
    p.le_rows.emplace_back(coef[static_cast<std::size_t>(k)].begin(), coef[static_cast<std::size_t>(k)].end());
    p.le_rhs.push_back(bound);
    p.le_names.push_back(std::string("chsh") + (k < 4 ? "+" : "-") + std::to_string(k % 4));
  }
  return p;
}
}  // namespace detail

/// Two-party non-signaling set with all eight CHSH expressions <= 2*sqrt(2).
inline PolytopeH quantum_set() { return detail::chsh_bounded(2.0 * std::numbers::sqrt2); }

/// Two-party local-realistic polytope (non-signaling + CHSH <= 2, complete for
/// binary inputs and outputs).
inline PolytopeH local_set() { return detail::chsh_bounded(2.0); }

/// Three-party non-signaling polytope over μ(oqa, zqa, zqb | mqa, b, b').
inline PolytopeH ns3_polytope() {
  PolytopeH p;
  detail::add_ns_structure(p, 3);
  p.names = detail::ns_names(3);
  return p;
}

constexpr int ns3_index(int o, int x, int b, int bp) { return o + 8 * (x + 2 * b + 4 * bp); }

/// Deterministic two-party strategies: vertex k has oqa = fa(mqa), oqp = fb(mqp),
/// with fa = (1 + bit0(k), 1 + bit1(k)) and fb = (1 + bit2(k), 1 + bit3(k)).
struct LrStrategy {
  std::array<int, 2> fa;
  std::array<int, 2> fb;

  ConditionalDistribution2 distribution() const {
    ConditionalDistribution2 d;
    for (int z = 0; z < kNumSettings; ++z) {
      auto s = settings_from_index(z);
      d.at(z, matched_index(fa[static_cast<std::size_t>(s.mqa - 1)], fb[static_cast<std::size_t>(s.mqp - 1)])) = 1.0;
    }
    return d;
  }
};

using LrStrategySet = std::array<LrStrategy, 16>;

inline LrStrategySet lr_vertices() {
  LrStrategySet v{};
  for (int k = 0; k < 16; ++k) {
    v[static_cast<std::size_t>(k)] = {{1 + (k & 1), 1 + ((k >> 1) & 1)}, {1 + ((k >> 2) & 1), 1 + ((k >> 3) & 1)}};
  }
  return v;
}

inline std::vector<double> to_vector(const ConditionalDistribution2& d) { return {d.p.begin(), d.p.end()}; }

inline ConditionalDistribution2 from_vector2(const std::vector<double>& x) {
  if (x.size() != 16) throw invalid_input("expected 16 coordinates");
  ConditionalDistribution2 d;
  std::copy(x.begin(), x.end(), d.p.begin());
  return d;
}

struct LinearMax {
  double value = 0.0;
  std::vector<double> argmax;
  lp::Solution solution;
  lp::Certificate certificate;
};

/// Maximizes objective.x over the polytope; throws structural_error when the
/// LP is infeasible or unbounded.
inline LinearMax max_linear(const std::vector<double>& objective, const PolytopeH& poly) {
  auto prob = poly.as_lp(objective);
  auto sol = lp::solve(prob);
  if (sol.status == lp::Status::infeasible) throw structural_error("polytope is empty");
  if (sol.status == lp::Status::unbounded) throw structural_error("objective is unbounded over polytope");
  if (sol.status != lp::Status::optimal) throw structural_error("LP iteration limit reached");
  LinearMax out;
  out.value = sol.value;
  out.argmax = sol.x;
  out.certificate = lp::certify(prob, sol);
  out.solution = std::move(sol);
  return out;
}

struct Membership {
  bool inside = false;
  double residual = 0.0;             // phase-I residual of the convex-combination system
  std::array<double, 16> weights{};  // convex weights over lr_vertices() when inside
};

/// Whether `d` is a convex combination of the 16 deterministic strategies.
inline Membership lr_membership(const ConditionalDistribution2& d, double tol = 1e-9) {
  const auto verts = lr_vertices();
  lp::Problem p;
  p.num_vars = 16;
  p.objective.assign(16, 0.0);
  for (int j = 0; j < 16; ++j) {
    std::vector<double> row(16, 0.0);
    for (int k = 0; k < 16; ++k) row[static_cast<std::size_t>(k)] = verts[static_cast<std::size_t>(k)].distribution().p[static_cast<std::size_t>(j)];
    p.eq_rows.push_back(row);
    p.eq_rhs.push_back(d.p[static_cast<std::size_t>(j)]);
  }
  p.eq_rows.emplace_back(16, 1.0);
  p.eq_rhs.push_back(1.0);
  lp::Options opt;
  opt.feas_tol = tol;
  auto sol = lp::solve(p, opt);
  Membership m;
  m.residual = sol.phase1_residual;
  m.inside = sol.status == lp::Status::optimal;
  if (m.inside) std::copy(sol.x.begin(), sol.x.end(), m.weights.begin());
  return m;
}

/// Symmetrizes a three-party point under (zqa, b) <-> (zqb, b').
inline std::vector<double> symmetrize_ns3(const std::vector<double>& mu) {
  std::vector<double> s(64);
  for (int x = 0; x < 2; ++x)
    for (int b = 0; b < 2; ++b)
      for (int bp = 0; bp < 2; ++bp)
        for (int a = 0; a < 2; ++a)
          for (int z1 = 0; z1 < 2; ++z1)
            for (int z2 = 0; z2 < 2; ++z2) {
              const int o = a + 2 * z1 + 4 * z2, os = a + 2 * z2 + 4 * z1;
              s[static_cast<std::size_t>(ns3_index(o, x, b, bp))] =
                  0.5 * (mu[static_cast<std::size_t>(ns3_index(o, x, b, bp))] + mu[static_cast<std::size_t>(ns3_index(os, x, bp, b))]);
            }
  return s;
}

/// μ(oqa, zqa | mqa, b), read off at b' = b.
inline ConditionalDistribution2 ns3_marginal_12(const std::vector<double>& mu) {
  ConditionalDistribution2 d;
  for (int x = 0; x < 2; ++x)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        for (int z1 = 0; z1 < 2; ++z1) {
          double s = 0.0;
          for (int z2 = 0; z2 < 2; ++z2) s += mu[static_cast<std::size_t>(ns3_index(a + 2 * z1 + 4 * z2, x, b, b))];
          d.at(x + 2 * b, a + 2 * z1) = s;
        }
  return d;
}

/// Lifts a deterministic two-party strategy to the three-party scenario with
/// zqa = fb(b), zqb = fb(b').
inline std::vector<double> ns3_from_strategy(const LrStrategy& s) {
  std::vector<double> mu(64, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int b = 0; b < 2; ++b)
      for (int bp = 0; bp < 2; ++bp) {
        const int o = (s.fa[static_cast<std::size_t>(x)] - 1) + 2 * (s.fb[static_cast<std::size_t>(b)] - 1) +
                      4 * (s.fb[static_cast<std::size_t>(bp)] - 1);
        mu[static_cast<std::size_t>(ns3_index(o, x, b, bp))] = 1.0;
      }
  return mu;
}

}  // namespace qpv
