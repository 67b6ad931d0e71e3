#pragma once

// Trial-stream generation: an analytic honest-prover model, adversary
// behaviours, and seeded samplers.
//
// Honest model: with probability p_pair a photon pair in a|HH> + b|VV> is
// emitted; each station projects onto its analyzer angle and detects with
// efficiency η. Dark counts are independent per-detector Bernoulli events
// OR-ed with true clicks. Double pairs are neglected.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <boost/random/binomial_distribution.hpp>

#include "qpv/core.hpp"
#include "qpv/estimation.hpp"
#include "qpv/polytopes.hpp"
#include "qpv/protocol.hpp"
#include "qpv/rng.hpp"
#include "qpv/trialdata.hpp"

namespace qpv {

struct HonestProverModel {
  double a = 0.383;
  double b = 0.924;
  std::array<double, 2> theta_a_deg{-6.7, 29.26};  // by mqa
  std::array<double, 2> theta_p_deg{6.7, -29.26};  // by mqp
  double eta_a = 0.81;
  double eta_p = 0.81;
  double dark = 1e-7;  // per detector per trial
  double p_pair = 1.0 / 350.0;
  double d_sim = 2e-6;
  int click_label = 2;  // outcome label assigned to a click; the other label is no-click
  bool normalize_amplitudes = true;

  /// Amplitudes as used by the model (rescaled to unit norm when requested).
  std::pair<double, double> amplitudes() const {
    if (!normalize_amplitudes) return {a, b};
    const double r = std::hypot(a, b);
    return {a / r, b / r};
  }

  void validate() const {
    auto [aa, bb] = amplitudes();
    if (std::abs(aa * aa + bb * bb - 1.0) > 1e-12) throw invalid_input("state amplitudes must satisfy a^2 + b^2 = 1");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(eta_a) || !prob(eta_p) || !prob(dark) || !prob(p_pair)) throw invalid_input("probabilities must lie in [0, 1]");
    if (!(d_sim >= 0.0 && d_sim < 1.0)) throw invalid_input("mismatch probability must lie in [0, 1)");
    if (click_label != 1 && click_label != 2) throw invalid_input("click label must be 1 or 2");
  }
};

/// P(click_A, click_P) for one settings pair, indexed [click_A][click_P].
inline std::array<std::array<double, 2>, 2> click_probabilities(const HonestProverModel& m, int mqa, int mqp) {
  auto [a, b] = m.amplitudes();
  const double ta = m.theta_a_deg[static_cast<std::size_t>(mqa - 1)] * std::numbers::pi / 180.0;
  const double tp = m.theta_p_deg[static_cast<std::size_t>(mqp - 1)] * std::numbers::pi / 180.0;
  // Projections of a|HH> + b|VV> onto the analyzer states cosθ|H> + sinθ|V>.
  const double amp = a * std::cos(ta) * std::cos(tp) + b * std::sin(ta) * std::sin(tp);
  const double pa = a * a * std::cos(ta) * std::cos(ta) + b * b * std::sin(ta) * std::sin(ta);
  const double pp = a * a * std::cos(tp) * std::cos(tp) + b * b * std::sin(tp) * std::sin(tp);
  const double c11 = m.eta_a * m.eta_p * amp * amp;
  const double c10 = m.eta_a * pa - c11;
  const double c01 = m.eta_p * pp - c11;
  const double c00 = 1.0 - c11 - c10 - c01;
  // Pair-emitted channel with dark counts OR-ed in.
  const double d = m.dark;
  std::array<std::array<double, 2>, 2> pair{};
  const double pc[2][2] = {{c00, c01}, {c10, c11}};
  for (int ta_ = 0; ta_ < 2; ++ta_)
    for (int tp_ = 0; tp_ < 2; ++tp_) {
      const double qa1 = ta_ ? 1.0 : d, qp1 = tp_ ? 1.0 : d;
      for (int ca = 0; ca < 2; ++ca)
        for (int cp = 0; cp < 2; ++cp)
          pair[static_cast<std::size_t>(ca)][static_cast<std::size_t>(cp)] +=
              pc[ta_][tp_] * (ca ? qa1 : 1.0 - qa1) * (cp ? qp1 : 1.0 - qp1);
    }
  std::array<std::array<double, 2>, 2> out{};
  for (int ca = 0; ca < 2; ++ca)
    for (int cp = 0; cp < 2; ++cp) {
      const double dark_only = (ca ? d : 1.0 - d) * (cp ? d : 1.0 - d);
      out[static_cast<std::size_t>(ca)][static_cast<std::size_t>(cp)] =
          m.p_pair * pair[static_cast<std::size_t>(ca)][static_cast<std::size_t>(cp)] + (1.0 - m.p_pair) * dark_only;
    }
  return out;
}

/// Matched distribution σ̃(oqa, oqp | mqa, mqp) of the honest model.
inline ConditionalDistribution2 honest_matched(const HonestProverModel& m) {
  m.validate();
  ConditionalDistribution2 s;
  const int click = m.click_label - 1;
  for (int z = 0; z < kNumSettings; ++z) {
    const auto st = settings_from_index(z);
    const auto pc = click_probabilities(m, st.mqa, st.mqp);
    for (int ca = 0; ca < 2; ++ca)
      for (int cp = 0; cp < 2; ++cp) {
        const int oqa = 1 + (ca ? click : 1 - click);
        const int oqp = 1 + (cp ? click : 1 - click);
        s.at(z, matched_index(oqa, oqp)) = pc[static_cast<std::size_t>(ca)][static_cast<std::size_t>(cp)];
      }
  }
  return s;
}

inline ConditionalDistribution3 honest_distribution(const HonestProverModel& m) {
  return regularize(honest_matched(m), m.d_sim);
}

/// Per-trial robustness of entanglement of the emitted state: p_pair ((|a|+|b|)^2 - 1).
inline double source_robustness(const HonestProverModel& m) {
  auto [a, b] = m.amplitudes();
  const double s = std::abs(a) + std::abs(b);
  return m.p_pair * (s * s - 1.0);
}

// ---------------------------------------------------------------------------
// Adversaries

struct AdversaryModel {
  enum class Kind { lr_vertex, lr_mixture, ns3_point };
  Kind kind = Kind::lr_vertex;
  int vertex = 0;
  std::array<double, 16> weights{};
  std::vector<double> mu;  // 64 coordinates over ns3_polytope()

  static AdversaryModel lr(int index) {
    if (index < 0 || index >= 16) throw invalid_input("strategy index out of range");
    AdversaryModel a;
    a.kind = Kind::lr_vertex;
    a.vertex = index;
    a.mu = ns3_from_strategy(lr_vertices()[static_cast<std::size_t>(index)]);
    return a;
  }

  static AdversaryModel mixture(const std::array<double, 16>& w) {
    double s = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw invalid_input("mixture weights must be nonnegative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw invalid_input("mixture weights must sum to 1");
    AdversaryModel a;
    a.kind = Kind::lr_mixture;
    a.weights = w;
    a.mu.assign(64, 0.0);
    const auto verts = lr_vertices();
    for (int k = 0; k < 16; ++k) {
      const auto v = ns3_from_strategy(verts[static_cast<std::size_t>(k)]);
      for (int i = 0; i < 64; ++i) a.mu[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(i)];
    }
    return a;
  }

  static AdversaryModel ns3(std::vector<double> mu, double tol = 1e-9) {
    static const PolytopeH poly = ns3_polytope();
    if (mu.size() != 64) throw invalid_input("three-party point needs 64 coordinates");
    if (poly.max_violation(mu) > tol) throw invalid_input("point is not in the non-signaling polytope");
    AdversaryModel a;
    a.kind = Kind::ns3_point;
    a.mu = std::move(mu);
    return a;
  }
};

/// Behaviour on the b = b' = mqp slice.
inline ConditionalDistribution3 adversary_distribution(const AdversaryModel& m) {
  ConditionalDistribution3 s;
  for (int z = 0; z < kNumSettings; ++z) {
    const auto st = settings_from_index(z);
    for (int o = 0; o < kNumOutcomes; ++o)
      s.at(z, o) = std::max(0.0, m.mu[static_cast<std::size_t>(ns3_index(o, st.mqa - 1, st.mqp - 1, st.mqp - 1))]);
  }
  return s;
}

/// Two-party PR box P(a,b|x,y) = 1/2 [a xor b = x and y] tensored with a
/// uniform third party.
inline std::vector<double> pr_box_with_uniform_third() {
  std::vector<double> mu(64, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int b = 0; b < 2; ++b)
      for (int bp = 0; bp < 2; ++bp)
        for (int a = 0; a < 2; ++a)
          for (int z1 = 0; z1 < 2; ++z1)
            for (int z2 = 0; z2 < 2; ++z2)
              if ((a ^ z1) == (x & b)) mu[static_cast<std::size_t>(ns3_index(a + 2 * z1 + 4 * z2, x, b, bp))] = 0.25;
  return mu;
}

/// Two-party PR box as a matched distribution.
inline ConditionalDistribution2 pr_box() {
  ConditionalDistribution2 d;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          if ((a ^ b) == (x & y)) d.at(x + 2 * y, a + 2 * b) = 0.5;
  return d;
}

// ---------------------------------------------------------------------------
// Sampling

/// Joint cell distribution ν(z) σ(o|z), flat [z*8 + o].
inline std::array<double, kNumCells> joint_cells(const ConditionalDistribution3& s, const JointSettingsDistribution& nu) {
  std::array<double, kNumCells> p{};
  for (int i = 0; i < kNumCells; ++i) p[static_cast<std::size_t>(i)] = nu.at(i / kNumOutcomes) * std::max(0.0, s.p[static_cast<std::size_t>(i)]);
  double tot = 0.0;
  for (double v : p) tot += v;
  if (!(tot > 0)) throw invalid_input("distribution has no mass");
  for (double& v : p) v /= tot;
  return p;
}

/// Inverse-CDF sampler over the 32 cells.
class CellSampler {
 public:
  CellSampler(const ConditionalDistribution3& s, const JointSettingsDistribution& nu) {
    const auto p = joint_cells(s, nu);
    double c = 0.0;
    for (int i = 0; i < kNumCells; ++i) {
      c += p[static_cast<std::size_t>(i)];
      cdf_[static_cast<std::size_t>(i)] = c;
      if (p[static_cast<std::size_t>(i)] > 0) last_ = i;
    }
    for (auto& v : cdf_) v /= c;
  }

  int operator()(PhiloxEngine& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const int i = static_cast<int>(it - cdf_.begin());
    return std::min(i, last_);
  }

 private:
  std::array<double, kNumCells> cdf_{};
  int last_ = 0;
};

inline constexpr std::uint64_t kSampleChunk = 1u << 20;

/// i.i.d. trials; chunk k of kSampleChunk trials uses Philox stream k, so the
/// output is independent of the thread count.
inline std::vector<std::uint8_t> sample_trial_bytes(const ConditionalDistribution3& s, const JointSettingsDistribution& nu,
                                                    std::uint64_t count, std::uint64_t seed, unsigned threads = 1) {
  std::vector<std::uint8_t> out(count);
  const CellSampler sampler(s, nu);
  std::array<std::uint8_t, kNumCells> cell_to_byte{};
  for (int b = 0; b < 32; ++b) cell_to_byte[kByteToCell[static_cast<std::size_t>(b)]] = static_cast<std::uint8_t>(b);
  const std::uint64_t chunks = (count + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, threads, [&](std::size_t k) {
    PhiloxEngine rng(seed, k);
    const std::uint64_t lo = k * kSampleChunk, hi = std::min(count, lo + kSampleChunk);
    for (std::uint64_t i = lo; i < hi; ++i) out[i] = cell_to_byte[static_cast<std::size_t>(sampler(rng))];
  });
  return out;
}

inline std::vector<TrialRecord> sample_trials(const ConditionalDistribution3& s, const JointSettingsDistribution& nu,
                                              std::uint64_t count, std::uint64_t seed, unsigned threads = 1) {
  const auto bytes = sample_trial_bytes(s, nu, count, seed, threads);
  std::vector<TrialRecord> out;
  out.reserve(bytes.size());
  for (auto b : bytes) out.push_back(TrialRecord::decode(b));
  return out;
}

/// Counts of `count` i.i.d. trials, drawn exactly as a multinomial via
/// sequential conditional binomials. Same law as aggregating sample_trials,
/// but O(32) work per call.
inline CountsTable sample_counts(const ConditionalDistribution3& s, const JointSettingsDistribution& nu,
                                 std::uint64_t count, PhiloxEngine& rng) {
  const auto p = joint_cells(s, nu);
  CountsTable t;
  std::array<double, kNumCells + 1> tail{};
  for (int i = kNumCells - 1; i >= 0; --i) tail[static_cast<std::size_t>(i)] = tail[static_cast<std::size_t>(i + 1)] + p[static_cast<std::size_t>(i)];
  std::uint64_t left = count;
  for (int i = 0; i < kNumCells && left > 0; ++i) {
    const double pi = p[static_cast<std::size_t>(i)];
    if (pi <= 0) continue;
    const double q = std::min(1.0, pi / tail[static_cast<std::size_t>(i)]);
    std::uint64_t k;
    if (q >= 1.0) {
      k = left;
    } else {
      boost::random::binomial_distribution<std::int64_t, double> bin(static_cast<std::int64_t>(left), q);
      k = static_cast<std::uint64_t>(bin(rng));
    }
    t.n[static_cast<std::size_t>(i)] = k;
    left -= k;
  }
  return t;
}

/// File f of a simulated run; identical to simulate_files(...)[f].
inline TrialFile simulate_file(const ConditionalDistribution3& s, const JointSettingsDistribution& nu, std::size_t f,
                               std::uint64_t trials, std::uint64_t seed, bool detector_error = false,
                               unsigned threads = 1) {
  TrialFile out;
  out.payload = sample_trial_bytes(s, nu, trials, splitmix64(seed ^ splitmix64(f)), threads);
  out.detector_error = detector_error;
  return out;
}

inline std::vector<TrialFile> simulate_files(const ConditionalDistribution3& s, const JointSettingsDistribution& nu,
                                             std::size_t files, std::uint64_t trials_per_file, std::uint64_t seed,
                                             const std::vector<bool>& detector_error = {}, unsigned threads = 1) {
  std::vector<TrialFile> out(files);
  for (std::size_t f = 0; f < files; ++f) {
    out[f] = simulate_file(s, nu, f, trials_per_file, seed, f < detector_error.size() && detector_error[f], threads);
  }
  return out;
}

}  // namespace qpv
