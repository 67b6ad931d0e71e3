#pragma once

// Shared vocabulary: error types, index conventions for settings/outcomes,
// and the conditional-distribution value types used across modules.
//
// All binary labels are 1-based ({1,2}) as they appear in trial records.
// Flat tables use the following orderings:
//   settings  z = (mqa-1) + 2*(mqp-1)           -> (1,1),(2,1),(1,2),(2,2)
//   matched   c = (oqa-1) + 2*(oqp-1)           -> (1,1),(2,1),(1,2),(2,2)
//   outcome   o = (oqa-1) + 2*(zqa-1) + 4*(zqb-1)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qpv {

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold.
class invalid_input : public error {
 public:
  using error::error;
};

/// Input data does not carry enough information (e.g. an empty settings row).
class degenerate_input : public error {
 public:
  using error::error;
};

/// An LP or polytope was malformed (infeasible or unbounded where it cannot be).
class structural_error : public error {
 public:
  using error::error;
};

/// A test factor failed its soundness certificate.
class certification_error : public error {
 public:
  using error::error;
};

/// No finite parameter choice satisfies a planning request.
class infeasible_plan : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

inline constexpr int kNumSettings = 4;
inline constexpr int kNumMatched = 4;
inline constexpr int kNumOutcomes = 8;
inline constexpr int kNumCells = kNumSettings * kNumOutcomes;

inline constexpr double kLn2 = std::numbers::ln2;

constexpr int settings_index(int mqa, int mqp) { return (mqa - 1) + 2 * (mqp - 1); }
constexpr int matched_index(int oqa, int oqp) { return (oqa - 1) + 2 * (oqp - 1); }
constexpr int outcome_index(int oqa, int zqa, int zqb) {
  return (oqa - 1) + 2 * (zqa - 1) + 4 * (zqb - 1);
}

struct Settings {
  int mqa;
  int mqp;
};

struct Outcome {
  int oqa;
  int zqa;
  int zqb;
  constexpr bool matched() const { return zqa == zqb; }
};

constexpr Settings settings_from_index(int z) { return {1 + (z & 1), 1 + ((z >> 1) & 1)}; }
constexpr Outcome outcome_from_index(int o) {
  return {1 + (o & 1), 1 + ((o >> 1) & 1), 1 + ((o >> 2) & 1)};
}
/// (oqa, oqp) of a matched index.
constexpr std::array<int, 2> matched_from_index(int c) { return {1 + (c & 1), 1 + ((c >> 1) & 1)}; }

inline bool is_binary(int v) { return v == 1 || v == 2; }

/// ν(mqa, mqp): joint distribution of the verifier setting and the challenge
/// function value. Every entry must be strictly positive.
class JointSettingsDistribution {
 public:
  JointSettingsDistribution() : p_{0.25, 0.25, 0.25, 0.25} {}

  explicit JointSettingsDistribution(const std::array<double, kNumSettings>& p, double tol = 1e-12)
      : p_(p) {
    double sum = 0.0;
    for (double v : p_) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw invalid_input("settings distribution entries must be strictly positive");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw invalid_input("settings distribution must sum to 1");
    }
  }

  static JointSettingsDistribution uniform() { return {}; }

  double at(int z) const { return p_[static_cast<std::size_t>(z)]; }
  double operator()(int mqa, int mqp) const { return at(settings_index(mqa, mqp)); }
  const std::array<double, kNumSettings>& values() const { return p_; }

 private:
  std::array<double, kNumSettings> p_;
};

/// σ̃(oqa, oqp | mqa, mqp), four conditionals over four matched outcomes.
struct ConditionalDistribution2 {
  std::array<double, kNumSettings * kNumMatched> p{};

  double& at(int z, int c) { return p[static_cast<std::size_t>(z * kNumMatched + c)]; }
  double at(int z, int c) const { return p[static_cast<std::size_t>(z * kNumMatched + c)]; }
  double operator()(int oqa, int oqp, int mqa, int mqp) const {
    return at(settings_index(mqa, mqp), matched_index(oqa, oqp));
  }

  double row_sum(int z) const {
    double s = 0.0;
    for (int c = 0; c < kNumMatched; ++c) s += at(z, c);
    return s;
  }

  /// Largest deviation of any row sum from 1, or +inf if an entry is negative.
  double normalization_error() const {
    double worst = 0.0;
    for (int z = 0; z < kNumSettings; ++z) {
      for (int c = 0; c < kNumMatched; ++c) {
        if (at(z, c) < 0.0 || !std::isfinite(at(z, c))) return INFINITY;
      }
      worst = std::max(worst, std::abs(row_sum(z) - 1.0));
    }
    return worst;
  }

  static ConditionalDistribution2 uniform() {
    ConditionalDistribution2 d;
    d.p.fill(0.25);
    return d;
  }
};

/// σ(oqa, zqa, zqb | mqa, mqp), four conditionals over eight outcomes.
struct ConditionalDistribution3 {
  std::array<double, kNumCells> p{};

  double& at(int z, int o) { return p[static_cast<std::size_t>(z * kNumOutcomes + o)]; }
  double at(int z, int o) const { return p[static_cast<std::size_t>(z * kNumOutcomes + o)]; }
  double operator()(int oqa, int zqa, int zqb, int mqa, int mqp) const {
    return at(settings_index(mqa, mqp), outcome_index(oqa, zqa, zqb));
  }

  double row_sum(int z) const {
    double s = 0.0;
    for (int o = 0; o < kNumOutcomes; ++o) s += at(z, o);
    return s;
  }

  /// Probability of zqa != zqb given the settings row.
  double mismatch_mass(int z) const {
    double s = 0.0;
    for (int o = 0; o < kNumOutcomes; ++o) {
      if (!outcome_from_index(o).matched()) s += at(z, o);
    }
    return s;
  }

  double normalization_error() const {
    double worst = 0.0;
    for (int z = 0; z < kNumSettings; ++z) {
      for (int o = 0; o < kNumOutcomes; ++o) {
        if (at(z, o) < 0.0 || !std::isfinite(at(z, o))) return INFINITY;
      }
      worst = std::max(worst, std::abs(row_sum(z) - 1.0));
    }
    return worst;
  }
};

}  // namespace qpv
