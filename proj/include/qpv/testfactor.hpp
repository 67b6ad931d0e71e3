#pragma once

// Trial-wise test factors.
//
// W_LR is the gain-optimal factor against the 16 deterministic strategies.
// Its dual is a likelihood projection: W_LR = σ̃ / ρ*, with ρ* maximizing
// Σ ν σ̃ log ρ over the local polytope. The robust factor keeps W_LR on the
// zqa = zqb cells and a constant λ on the mismatch cells; λ is the largest
// value for which the expectation stays <= 1 over the three-party
// non-signaling polytope (b = b' slices, weighted by ν).

#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "qpv/core.hpp"
#include "qpv/estimation.hpp"
#include "qpv/polytopes.hpp"

namespace qpv {

inline constexpr double kCertificationMargin = 1e-8;

/// W on the matched cells, flat [z*4 + c].
using MatchedFactor = std::array<double, kNumSettings * kNumMatched>;

struct TestFactor {
  std::array<double, kNumCells> w{};  // flat [z*8 + o]
  double mismatch_constant = 1.0;
  double certified_max = NAN;  // LP bound on max Exp(W) over the NS3 polytope
  std::string provenance;

  double at(int z, int o) const { return w[static_cast<std::size_t>(z * kNumOutcomes + o)]; }
  double operator()(int mqa, int oqa, int mqp, int zqa, int zqb) const {
    return at(settings_index(mqa, mqp), outcome_index(oqa, zqa, zqb));
  }
  double min_value() const { return *std::min_element(w.begin(), w.end()); }

  static TestFactor from_matched(const MatchedFactor& m, double mismatch) {
    TestFactor t;
    t.mismatch_constant = mismatch;
    for (int z = 0; z < kNumSettings; ++z)
      for (int o = 0; o < kNumOutcomes; ++o) {
        const auto oc = outcome_from_index(o);
        t.w[static_cast<std::size_t>(z * kNumOutcomes + o)] =
            oc.matched() ? m[static_cast<std::size_t>(z * 4 + matched_index(oc.oqa, oc.zqa))] : mismatch;
      }
    return t;
  }

  static TestFactor unity() { return from_matched(MatchedFactor{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, 1.0); }

  bool symmetric(double tol = 0.0) const {
    for (int z = 0; z < kNumSettings; ++z)
      for (int a = 1; a <= 2; ++a) {
        if (std::abs(at(z, outcome_index(a, 1, 2)) - at(z, outcome_index(a, 2, 1))) > tol) return false;
      }
    return true;
  }

  bool mismatch_constant_ok(double tol = 0.0) const {
    for (int z = 0; z < kNumSettings; ++z)
      for (int o = 0; o < kNumOutcomes; ++o)
        if (!outcome_from_index(o).matched() && std::abs(at(z, o) - mismatch_constant) > tol) return false;
    return true;
  }
};

inline nlohmann::json to_json(const TestFactor& t, const JointSettingsDistribution& nu) {
  nlohmann::json j;
  nlohmann::json cells = nlohmann::json::array();
  for (int z = 0; z < kNumSettings; ++z)
    for (int o = 0; o < kNumOutcomes; ++o) {
      auto s = settings_from_index(z);
      auto oc = outcome_from_index(o);
      cells.push_back({{"mqa", s.mqa}, {"oqa", oc.oqa}, {"mqp", s.mqp}, {"zqa", oc.zqa}, {"zqb", oc.zqb}, {"w", t.at(z, o)}});
    }
  j["cells"] = cells;
  j["mismatch_constant"] = t.mismatch_constant;
  j["certified_max"] = t.certified_max;
  j["certification_margin"] = std::isfinite(t.certified_max) ? 1.0 - t.certified_max : NAN;
  j["nu"] = nu.values();
  j["provenance"] = t.provenance;
  return j;
}

inline TestFactor test_factor_from_json(const nlohmann::json& j) {
  TestFactor t;
  t.mismatch_constant = j.at("mismatch_constant").get<double>();
  for (const auto& c : j.at("cells")) {
    const int z = settings_index(c.at("mqa").get<int>(), c.at("mqp").get<int>());
    const int o = outcome_index(c.at("oqa").get<int>(), c.at("zqa").get<int>(), c.at("zqb").get<int>());
    t.w[static_cast<std::size_t>(z * kNumOutcomes + o)] = c.at("w").get<double>();
  }
  if (j.contains("certified_max") && j["certified_max"].is_number()) t.certified_max = j["certified_max"].get<double>();
  if (j.contains("provenance")) t.provenance = j["provenance"].get<std::string>();
  for (double v : t.w)
    if (!(v >= 0.0)) throw invalid_input("test factor values must be nonnegative");
  return t;
}

// ---------------------------------------------------------------------------
// W_LR

/// Σ_z ν_z Σ_c μ(c|z) W(z,c) for every deterministic strategy; returns the max.
inline double lr_vertex_max(const MatchedFactor& w, const JointSettingsDistribution& nu) {
  double best = -INFINITY;
  for (const auto& v : lr_vertices()) {
    const auto d = v.distribution();
    double e = 0.0;
    for (int z = 0; z < kNumSettings; ++z)
      for (int c = 0; c < kNumMatched; ++c) e += nu.at(z) * d.at(z, c) * w[static_cast<std::size_t>(z * 4 + c)];
    best = std::max(best, e);
  }
  return best;
}

/// Gain Σ ν σ̃ ln W (natural log); -inf if W vanishes on the support.
inline double matched_gain(const MatchedFactor& w, const ConditionalDistribution2& s, const JointSettingsDistribution& nu) {
  double g = 0.0;
  for (int z = 0; z < kNumSettings; ++z)
    for (int c = 0; c < kNumMatched; ++c) {
      const double p = nu.at(z) * s.at(z, c);
      if (p > 0) g += p * std::log(w[static_cast<std::size_t>(z * 4 + c)]);
    }
  return g;
}

struct WlrResult {
  MatchedFactor w{};
  bool violating = false;
  double gain = 0.0;       // natural log per trial
  double lr_max = 1.0;     // max expectation over the 16 strategies
  double gap_bound = 0.0;  // optimality bound from the likelihood projection
};

inline double lambda_max(const MatchedFactor& w_lr, const JointSettingsDistribution& nu);

/// Gain-optimal factor against local realism for matched distribution σ̃.
inline WlrResult build_wlr(const ConditionalDistribution2& sigma, const JointSettingsDistribution& nu) {
  if (sigma.normalization_error() > 1e-9) throw invalid_input("σ̃ is not a conditional distribution");
  WlrResult r;
  r.w.fill(1.0);
  if (lr_membership(sigma).inside) return r;

  std::vector<double> wts(16);
  for (int z = 0; z < kNumSettings; ++z)
    for (int c = 0; c < kNumMatched; ++c) wts[static_cast<std::size_t>(z * 4 + c)] = nu.at(z) * sigma.at(z, c);
  const auto fit = maximize_log_likelihood(local_set(), wts);
  r.gap_bound = fit.gap_bound;
  std::vector<int> zero_cells;
  for (int i = 0; i < 16; ++i) {
    if (sigma.p[static_cast<std::size_t>(i)] > 0) {
      r.w[static_cast<std::size_t>(i)] = sigma.p[static_cast<std::size_t>(i)] / fit.x[static_cast<std::size_t>(i)];
    } else {
      r.w[static_cast<std::size_t>(i)] = 0.0;
      zero_cells.push_back(i);
    }
  }
  // The projection is only accurate to its stopping tolerance; rescale so the
  // strategy constraints hold exactly.
  double m = lr_vertex_max(r.w, nu);
  if (m > 1.0) {
    for (double& v : r.w) v /= m;
  }
  // Free cells (σ̃ = 0): prefer 1 when it keeps the factor valid and does not
  // lower the mismatch constant; otherwise 0.
  if (!zero_cells.empty()) {
    for (int i : zero_cells) {
      MatchedFactor trial = r.w;
      trial[static_cast<std::size_t>(i)] = 1.0;
      if (lr_vertex_max(trial, nu) <= 1.0 + 1e-12 && lambda_max(trial, nu) >= lambda_max(r.w, nu) - 1e-9) r.w = trial;
    }
  }
  r.lr_max = lr_vertex_max(r.w, nu);
  r.gain = matched_gain(r.w, sigma, nu);
  r.violating = r.gain > 0;
  if (!r.violating) {
    r.w.fill(1.0);
    r.gain = 0.0;
    r.lr_max = 1.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Three-party certification

/// Objective coefficients of Exp(W) over ns3_polytope() on the b = b' slices.
inline std::vector<double> ns3_expectation_objective(const TestFactor& t, const JointSettingsDistribution& nu) {
  std::vector<double> c(64, 0.0);
  for (int z = 0; z < kNumSettings; ++z) {
    const auto s = settings_from_index(z);
    for (int o = 0; o < kNumOutcomes; ++o)
      c[static_cast<std::size_t>(ns3_index(o, s.mqa - 1, s.mqp - 1, s.mqp - 1))] += nu.at(z) * t.at(z, o);
  }
  return c;
}

struct Ns3Certificate {
  double max_value = 0.0;    // primal LP optimum
  double upper_bound = 0.0;  // dual bound, valid for every NS3 point
  std::vector<double> argmax;
};

inline Ns3Certificate certify_ns3(const TestFactor& t, const JointSettingsDistribution& nu) {
  static const PolytopeH poly = ns3_polytope();
  const auto obj = ns3_expectation_objective(t, nu);
  auto res = max_linear(obj, poly);
  Ns3Certificate c;
  c.max_value = res.value;
  // Every NS3 point has sum(μ) = 8.
  c.upper_bound = std::max(res.value, lp::dual_upper_bound(poly.as_lp(obj), res.solution, 8.0));
  c.argmax = std::move(res.argmax);
  return c;
}

inline double ns3_max_expectation(const MatchedFactor& w_lr, double lambda, const JointSettingsDistribution& nu) {
  return certify_ns3(TestFactor::from_matched(w_lr, lambda), nu).upper_bound;
}

/// Largest mismatch constant keeping the three-party expectation <= 1, by
/// bisection on [0, 10] to 1e-9.
inline double lambda_max(const MatchedFactor& w_lr, const JointSettingsDistribution& nu) {
  constexpr double kTol = 1e-10;
  if (ns3_max_expectation(w_lr, 0.0, nu) > 1.0 + kCertificationMargin)
    throw certification_error("matched part of the factor already exceeds 1 over the non-signaling polytope");
  double lo = 0.0, hi = 10.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (ns3_max_expectation(w_lr, mid, nu) <= 1.0 + kTol)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

/// Robust factor: W_LR on matched cells, λ on mismatch cells; certified.
inline TestFactor assemble_robust(const MatchedFactor& w_lr, double lambda, const JointSettingsDistribution& nu) {
  if (!(lambda >= 0.0)) throw invalid_input("mismatch constant must be nonnegative");
  for (double v : w_lr)
    if (!(v >= 0.0)) throw invalid_input("factor values must be nonnegative");
  TestFactor t = TestFactor::from_matched(w_lr, lambda);
  const auto cert = certify_ns3(t, nu);
  if (cert.upper_bound > 1.0 + kCertificationMargin)
    throw certification_error("factor exceeds 1 over the non-signaling polytope: " + std::to_string(cert.upper_bound));
  t.certified_max = cert.upper_bound;
  return t;
}

/// Full pipeline from a fitted σ̃: W_LR, λ*, assembly.
inline TestFactor build_robust(const ConditionalDistribution2& sigma, const JointSettingsDistribution& nu) {
  const auto wlr = build_wlr(sigma, nu);
  const double lam = wlr.violating ? lambda_max(wlr.w, nu) : 1.0;
  return assemble_robust(wlr.w, lam, nu);
}

// ---------------------------------------------------------------------------
// Entanglement adjustments

/// Σ_z ν_z min_o W(z, o).
inline double wbar_min(const TestFactor& t, const JointSettingsDistribution& nu) {
  double s = 0.0;
  for (int z = 0; z < kNumSettings; ++z) {
    double m = INFINITY;
    for (int o = 0; o < kNumOutcomes; ++o) m = std::min(m, t.at(z, o));
    s += nu.at(z) * m;
  }
  return s;
}

inline TestFactor scale_for_fixed_entanglement(const TestFactor& t, double xi, const JointSettingsDistribution& nu) {
  if (!(xi >= 0.0)) throw invalid_input("robustness bound must be nonnegative");
  const double wm = wbar_min(t, nu);
  if (wm >= 1.0) throw invalid_input("factor with average minimum >= 1 cannot be rescaled usefully");
  const double wu = 1.0 + xi * (1.0 - wm);
  TestFactor out = t;
  for (double& v : out.w) v /= wu;
  out.mismatch_constant /= wu;
  if (std::isfinite(out.certified_max)) out.certified_max /= wu;
  return out;
}

/// Upper end of the admissible mixing range, 1/(1 - w_min) (inf when w_min >= 1).
inline double mix_upper_limit(const TestFactor& t) {
  const double wmin = t.min_value();
  return wmin >= 1.0 ? INFINITY : 1.0 / (1.0 - wmin);
}

inline TestFactor mix_with_unity(const TestFactor& t, double lambda) {
  const double hi = mix_upper_limit(t);
  if (!(lambda >= 0.0) || lambda > hi * (1.0 + 1e-12)) throw invalid_input("mixing parameter out of range");
  TestFactor out = t;
  for (double& v : out.w) v = std::max(0.0, lambda * v + (1.0 - lambda));
  out.mismatch_constant = std::max(0.0, lambda * t.mismatch_constant + (1.0 - lambda));
  if (std::isfinite(t.certified_max)) out.certified_max = lambda * t.certified_max + (1.0 - lambda);
  return out;
}

inline TestFactor entanglement_discounted(const TestFactor& t, double r_th, const JointSettingsDistribution& nu) {
  if (!(r_th >= 0.0)) throw invalid_input("threshold must be nonnegative");
  const double f = std::exp(-r_th * (1.0 - wbar_min(t, nu)));
  TestFactor out = t;
  for (double& v : out.w) v *= f;
  out.mismatch_constant *= f;
  if (std::isfinite(out.certified_max)) out.certified_max *= f;
  return out;
}

// ---------------------------------------------------------------------------
// Gain statistics

struct GainStats {
  double g = 0.0;  // mean of log2 W per trial
  double v = 0.0;  // variance of log2 W per trial
};

inline GainStats gain_variance(const TestFactor& t, const ConditionalDistribution3& sigma, const JointSettingsDistribution& nu) {
  GainStats s;
  std::array<double, kNumCells> p{}, l{};
  for (int i = 0; i < kNumCells; ++i) {
    p[static_cast<std::size_t>(i)] = nu.at(i / kNumOutcomes) * sigma.p[static_cast<std::size_t>(i)];
    if (p[static_cast<std::size_t>(i)] > 0) {
      if (!(t.w[static_cast<std::size_t>(i)] > 0)) throw invalid_input("test factor vanishes on a cell with positive probability");
      l[static_cast<std::size_t>(i)] = std::log2(t.w[static_cast<std::size_t>(i)]);
      s.g += p[static_cast<std::size_t>(i)] * l[static_cast<std::size_t>(i)];
    }
  }
  for (int i = 0; i < kNumCells; ++i) {
    const double d = l[static_cast<std::size_t>(i)] - s.g;
    if (p[static_cast<std::size_t>(i)] > 0) s.v += p[static_cast<std::size_t>(i)] * d * d;
  }
  return s;
}

}  // namespace qpv
