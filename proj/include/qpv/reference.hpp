#pragma once

// Published calibration, test-factor and timing data, used as golden inputs
// by tests and as CLI defaults.
//
// Settings rows are ordered (mqa, mqp) = (1,1), (2,1), (1,2), (2,2); matched
// columns (oqa, oqp) in the same order.

#include <array>
#include <cstdint>

#include "qpv/core.hpp"
#include "qpv/trialdata.hpp"

namespace qpv::reference {

/// Matched counts n(oqa, oqp, oqp; mqa, mqp), five minutes of calibration data.
inline constexpr std::array<std::array<std::uint64_t, 4>, 4> kMatchedCounts{{
    {18764031, 2339, 2390, 4794},
    {18751159, 9481, 1647, 5474},
    {18752299, 1527, 6879, 5730},
    {18745211, 14655, 12333, 364},
}};

/// Aggregated mismatch (zqa != zqb) counts per settings row.
inline constexpr std::array<std::uint64_t, 4> kMismatchCounts{16, 29, 32, 35};

/// Maximum-likelihood σ̃ over the quantum set.
inline constexpr std::array<std::array<double, 4>, 4> kSigmaTilde{{
    {0.9994906521, 0.0001264110, 0.0001261772, 0.0002567597},
    {0.9991117479, 0.0005053152, 0.0000885493, 0.0002943876},
    {0.9992478451, 0.0000802128, 0.0003689843, 0.0003029579},
    {0.9985476132, 0.0007804446, 0.0006526840, 0.0000192581},
}};

/// Robust trial-wise test factor on matched cells and its mismatch constant.
inline constexpr std::array<std::array<double, 4>, 4> kTestFactor{{
    {1.0000133425, 0.8853069445, 0.8825655759, 1.0836976498},
    {1.0000098326, 0.9751727669, 0.8016191273, 1.0926205335},
    {1.0000079803, 0.7988759064, 0.9699591897, 1.0846655877},
    {0.9999688446, 1.0248059103, 1.0300176352, 0.7390162290},
}};
inline constexpr double kMismatchConstant = 0.9118409194;

inline constexpr double kMismatchProbability = 2e-6;
inline constexpr double kGain = 3.79135e-6;      // log2 units per trial
inline constexpr double kVariance = 1.13029e-5;  // log2 units per trial
inline constexpr double kTrialRate = 250000.0;   // trials per second
inline constexpr double kDeltaLog2 = 64.0;
inline constexpr double kEpsilon = 0.97725;
inline constexpr double kRth = 8e-6;

/// Counts table with mismatches assigned to (zqa, zqb) = (1, 2), oqa = 1.
/// Which mismatch cell receives the aggregate does not affect anything that
/// consumes only matched cells.
inline CountsTable calibration_counts() {
  CountsTable t;
  for (int z = 0; z < 4; ++z) {
    for (int c = 0; c < 4; ++c) {
      auto [oqa, oqp] = matched_from_index(c);
      t.at(z, outcome_index(oqa, oqp, oqp)) = kMatchedCounts[static_cast<std::size_t>(z)][static_cast<std::size_t>(c)];
    }
    t.at(z, outcome_index(1, 1, 2)) = kMismatchCounts[static_cast<std::size_t>(z)];
  }
  return t;
}

inline ConditionalDistribution2 sigma_tilde() {
  ConditionalDistribution2 d;
  for (int z = 0; z < 4; ++z)
    for (int c = 0; c < 4; ++c) d.at(z, c) = kSigmaTilde[static_cast<std::size_t>(z)][static_cast<std::size_t>(c)];
  return d;
}

/// Timing of one trial (ns) and its 1σ uncertainties.
struct Timing {
  double s_a = 1291.0, s_a_sd = 0.5;
  double s_b = 1429.1, s_b_sd = 0.6;
  double r_a = 2340.3, r_a_sd = 0.5;
  double r_b = 2207.7, r_b_sd = 0.6;
  double d_m = 195.1, d_m_sd = 0.3;
  double prover_from_b_m = 92.8;
};

/// Region extents (m): R_A, R_B, M1, M2 as published.
inline constexpr std::array<double, 4> kRegionExtents{157.3, 116.7, 274.8, 273.1};

/// Advantage ratios: 1D ideal, 1D comparable, 2D comparable, 3D comparable, with 1σ.
inline constexpr std::array<double, 4> kAdvantage{2.47, 4.48, 4.02, 4.53};
inline constexpr std::array<double, 4> kAdvantageSd{0.02, 0.02, 0.03, 0.05};

}  // namespace qpv::reference
