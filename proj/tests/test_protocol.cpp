#include <gtest/gtest.h>

#include <random>

#include "qpv/protocol.hpp"
#include "qpv/reference.hpp"
#include "qpv/simulator.hpp"

using namespace qpv;

namespace {

TestFactor published_factor() {
  MatchedFactor m{};
  for (int z = 0; z < 4; ++z)
    for (int c = 0; c < 4; ++c) m[static_cast<std::size_t>(z * 4 + c)] = reference::kTestFactor[static_cast<std::size_t>(z)][static_cast<std::size_t>(c)];
  return TestFactor::from_matched(m, reference::kMismatchConstant);
}

ConditionalDistribution3 reference_sigma() { return regularize(reference::sigma_tilde(), reference::kMismatchProbability); }

MemoryArchive flags_only(std::size_t n, const std::vector<std::size_t>& errors = {}) {
  std::vector<TrialFile> files(n);
  for (auto i : errors) files.at(i).detector_error = true;
  return MemoryArchive(std::move(files));
}

ProtocolParams basic(std::uint64_t n, double delta_log2 = 64) {
  ProtocolParams p;
  p.n = n;
  p.delta_log2 = delta_log2;
  return p;
}

}  // namespace

TEST(RunInstance, UnityFactorNeverPasses) {
  const auto recs = sample_trials(reference_sigma(), {}, 10000, 1);
  const auto r = run_instance(recs, TestFactor::unity(), basic(10000));
  EXPECT_EQ(r.sum_log_w, 0.0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.trials_real, 10000u);
}

TEST(RunInstance, EmptyStreamIsAllPadding) {
  const auto r = run_instance({}, published_factor(), basic(10));
  EXPECT_EQ(r.trials_padded, 10u);
  EXPECT_EQ(r.trials_real, 0u);
  EXPECT_EQ(r.sum_log_w, 0.0);
  EXPECT_FALSE(r.pass);
}

TEST(RunInstance, SumMatchesDirectProductAndTruncates) {
  const auto w = published_factor();
  const auto recs = sample_trials(reference_sigma(), {}, 5000, 2);
  const auto r = run_instance(recs, w, basic(4000));
  double direct = 0;
  for (std::size_t i = 0; i < 4000; ++i) direct += std::log(w.w[static_cast<std::size_t>(recs[i].cell())]);
  EXPECT_NEAR(r.sum_log_w, direct, 1e-12);
  EXPECT_EQ(r.trials_real, 4000u);
  EXPECT_EQ(r.trials_padded, 0u);
  EXPECT_DOUBLE_EQ(r.log2_p, r.sum_log_w / std::log(2.0));
  EXPECT_NEAR(r.threshold, 64 * std::log(2.0), 1e-12);
}

TEST(RunInstance, PaddingNeutral) {
  const auto w = published_factor();
  const auto recs = sample_trials(reference_sigma(), {}, 3000, 3);
  const auto a = run_instance(recs, w, basic(3000));
  for (std::uint64_t n : {3001u, 5000u, 1000000u}) {
    const auto b = run_instance(recs, w, basic(n));
    EXPECT_EQ(a.sum_log_w, b.sum_log_w);
    EXPECT_EQ(b.trials_real + b.trials_padded, n);
  }
}

TEST(RunInstance, CountsPathMatchesStreaming) {
  const auto w = published_factor();
  const auto recs = sample_trials(reference_sigma(), {}, 200000, 4);
  const auto a = run_instance(recs, w, basic(200000));
  const auto b = run_instance_counts(aggregate_counts(recs), w, basic(200000));
  EXPECT_NEAR(a.sum_log_w, b.sum_log_w, 1e-9 * std::max(1.0, std::abs(a.sum_log_w)));
}

TEST(RunInstance, ZeroFactorOnObservedCellAborts) {
  auto w = TestFactor::unity();
  w.w[0] = 0.0;
  const std::vector<TrialRecord> v{TrialRecord::from_cell(0, 0)};
  EXPECT_THROW(run_instance(v, w, basic(5)), invalid_input);
}

TEST(Params, Validation) {
  ProtocolParams p;
  EXPECT_NO_THROW(p.validate());
  p.n = 0;
  EXPECT_THROW(p.validate(), invalid_input);
  p = {};
  p.r_th = 1e-6;
  EXPECT_THROW(p.validate(), invalid_input);
  p.mode = Mode::entanglement;
  EXPECT_NO_THROW(p.validate());
  p.epsilon = 1e-30;
  EXPECT_THROW(p.validate(), invalid_input);
  EXPECT_EQ(mode_from_string("entanglement"), Mode::entanglement);
  EXPECT_THROW(mode_from_string("x"), invalid_input);
}

TEST(KahanSum, RecoversSmallIncrements) {
  KahanSum k;
  double naive = 1.0;
  k.add(1.0);
  for (int i = 0; i < 1000000; ++i) {
    k.add(1e-17);
    naive += 1e-17;
  }
  EXPECT_EQ(naive, 1.0);
  EXPECT_NEAR(k.value(), 1.0 + 1e-11, 1e-15);
}

TEST(RLowerBound, Cases) {
  const double L = 64 * std::log(2.0);
  EXPECT_NEAR(r_lower_bound(L, 1000, 0.9, 64), 0.0, 1e-18);
  const std::uint64_t n = 60000000;
  EXPECT_NEAR(r_lower_bound(L + n * 0.1 * 8e-6, n, 0.9, 64), 8e-6, 1e-18);
  EXPECT_NEAR(r_lower_bound(50, n, 0.9, 64), (50 - L) / 6e6, 1e-18);
  EXPECT_THROW(r_lower_bound(50, n, 1.0, 64), invalid_input);
}

TEST(RLowerBound, InverseOfEntanglementThreshold) {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 1000; ++t) {
    ProtocolParams p;
    p.mode = Mode::entanglement;
    p.n = 1 + static_cast<std::uint64_t>(U(g) * 1e8);
    p.r_th = U(g) * 1e-4;
    p.delta_log2 = 1 + U(g) * 100;
    const double wbar = U(g) * 0.99;
    const double thr = pass_threshold(p, wbar);
    EXPECT_NEAR(r_lower_bound(thr, p.n, wbar, p.delta_log2), p.r_th, 1e-12 * std::max(1.0, p.r_th));
    // pass <=> r_lb >= r_th away from the boundary
    const double sum = thr + (U(g) - 0.5) * thr;
    const auto r = finish_instance(sum, p.n, p, wbar);
    if (std::abs(sum - thr) > 1e-9 * thr) {
      EXPECT_EQ(r.pass, r.r_lb >= p.r_th);
    }
  }
}

TEST(PSucc, Cases) {
  EXPECT_NEAR(p_succ(64 / 1e-5, 1e-5, 1e-4, 64), 0.5, 1e-12);
  EXPECT_GE(p_succ(3e7, reference::kGain, reference::kVariance, 64), 0.97725);
  EXPECT_NEAR(p_succ(1e15, reference::kGain, reference::kVariance, 64), 1.0, 1e-12);
  EXPECT_THROW(p_succ(0.5, 1e-5, 1e-4, 64), invalid_input);
}

TEST(RequiredTrials, PublishedOperatingPoint) {
  const auto n = required_trials(reference::kGain, reference::kVariance, 64, 0.97725);
  // independent: positive root of g x^2 - 2 sqrt(v) x - 64 = 0 with x = sqrt(n)
  const double g = reference::kGain, v = reference::kVariance;
  const double x = (2 * std::sqrt(v) + std::sqrt(4 * v + 4 * g * 64)) / (2 * g);
  EXPECT_NEAR(static_cast<double>(n), x * x, 1.0);
  EXPECT_NEAR(static_cast<double>(n), 2.59e7, 0.01e7);
  auto ok = [&](double m) { return m * g - 2 * std::sqrt(m * v) >= 64; };
  EXPECT_TRUE(ok(static_cast<double>(n)));
  EXPECT_FALSE(ok(static_cast<double>(n - 1)));
  // ε = 0.97725 is read as exactly two sigma, Φ(2) = 0.9772498...
  EXPECT_GE(p_succ(static_cast<double>(n), g, v, 64), normal_cdf(2.0) - 1e-12);
}

TEST(RequiredTrials, Limits) {
  const double g = reference::kGain;
  EXPECT_EQ(required_trials(g, reference::kVariance, 64, 0.5), static_cast<std::uint64_t>(std::ceil(64 / g)));
  EXPECT_EQ(required_trials(g, 1e-30, 64, 0.97725), static_cast<std::uint64_t>(std::ceil(64 / g)));
  EXPECT_THROW(required_trials(0.0, 1e-5, 64, 0.97725), infeasible_plan);
  EXPECT_EQ(z_for_epsilon(0.97725), 2.0);
  EXPECT_NEAR(z_for_epsilon(0.84134), 1.0, 1e-4);
}

TEST(PlanEntanglement, PublishedThreshold) {
  const auto s = reference_sigma();
  const auto nu = JointSettingsDistribution::uniform();
  const auto w = published_factor();
  const auto plan = plan_entanglement(s, nu, w, 8e-6, 64, 0.97725);
  EXPECT_LE(plan.n, 60000000u);
  EXPECT_GT(plan.n, required_trials(reference::kGain, reference::kVariance, 64, 0.97725));
  // λ-grid oracle computed from scratch
  double best = INFINITY;
  const double hi = 1 / (1 - w.min_value());
  for (int i = 1; i < 4000; ++i) {
    const double lam = hi * i / 4000;
    double g = 0, g2 = 0, wbar = 0;
    for (int z = 0; z < 4; ++z) {
      double mn = INFINITY;
      for (int o = 0; o < 8; ++o) {
        const double wp = lam * w.at(z, o) + 1 - lam;
        mn = std::min(mn, wp);
        const double p = 0.25 * s.at(z, o);
        if (p > 0) {
          g += p * std::log2(wp);
          g2 += p * std::log2(wp) * std::log2(wp);
        }
      }
      wbar += 0.25 * mn;
    }
    const double v = g2 - g * g, a = g - 8e-6 * (1 - wbar) / std::log(2.0);
    if (a <= 0) continue;
    const double x = (2 * std::sqrt(v) + std::sqrt(4 * v + 4 * a * 64)) / (2 * a);
    best = std::min(best, x * x);
  }
  EXPECT_LE(static_cast<double>(plan.n), best + 1);
  EXPECT_GE(static_cast<double>(plan.n), best * (1 - 1e-3));
  // W'' is W' times the discount
  const double f = std::exp(-8e-6 * (1 - plan.wbar));
  for (int i = 0; i < kNumCells; ++i) EXPECT_NEAR(plan.w_double_prime.w[static_cast<std::size_t>(i)], f * plan.w_prime.w[static_cast<std::size_t>(i)], 1e-15);
}

TEST(PlanEntanglement, MonotoneInThreshold) {
  const auto s = reference_sigma();
  const auto nu = JointSettingsDistribution::uniform();
  const auto w = published_factor();
  std::uint64_t prev = 0;
  for (double r : {0.0, 2e-6, 4e-6, 8e-6, 12e-6}) {
    const auto plan = plan_entanglement(s, nu, w, r, 64, 0.97725);
    EXPECT_GE(plan.n, prev) << r;
    prev = plan.n;
  }
  EXPECT_THROW(plan_entanglement(s, nu, w, 1.0, 64, 0.97725), infeasible_plan);
}

TEST(Tradeoff, BasicCurveMatchesFormula) {
  GainStats st{reference::kGain, reference::kVariance};
  const std::vector<double> eps{0.97725}, t{60, 120};
  const auto pts = basic_tradeoff(st, eps, t, 250000);
  ASSERT_EQ(pts.size(), 2u);
  const double n = 120 * 250000.0;
  EXPECT_NEAR(pts[1].value, n * st.g - 2 * std::sqrt(n * st.v), 1e-9);
  EXPECT_GT(pts[1].value, 64);  // two minutes suffice
}

TEST(Segment, TwelveFilesGiveOneInstance) {
  const auto ar = flags_only(12);
  const auto plans = segment(ar, Mode::basic);
  ASSERT_EQ(plans.size(), 1u);
  EXPECT_EQ(plans[0].files, (std::vector<std::size_t>{10, 11}));
  EXPECT_EQ(plans[0].calibration.size(), 10u);
  EXPECT_EQ(plans[0].calibration.front(), 0u);
}

TEST(Segment, PublishedInstanceCounts) {
  EXPECT_EQ(segment(flags_only(474), Mode::basic).size(), 232u);
  // four-file instances over 410 files; the short last one still counts
  EXPECT_EQ(segment(flags_only(420), Mode::entanglement).size(), 103u);
  EXPECT_EQ(segment(flags_only(420), Mode::entanglement).back().files.size(), 2u);
}

TEST(Segment, DetectorErrorFiles) {
  // errors at 3 and 11: calibration needs file 10; file 11 is consumed but never calibrates
  const auto ar = flags_only(16, {3, 11});
  const auto plans = segment(ar, Mode::basic);
  ASSERT_EQ(plans.size(), 3u);
  EXPECT_EQ(plans[0].files, (std::vector<std::size_t>{11, 12}));
  EXPECT_EQ(plans[0].calibration, (std::vector<std::size_t>{0, 1, 2, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(plans[1].files, (std::vector<std::size_t>{13, 14}));
  EXPECT_EQ(plans[1].calibration, (std::vector<std::size_t>{1, 2, 4, 5, 6, 7, 8, 9, 10, 12}));
  EXPECT_EQ(plans[2].files, (std::vector<std::size_t>{15}));
  EXPECT_THROW(segment(flags_only(9), Mode::basic), degenerate_input);
  EXPECT_THROW(segment(flags_only(12, {0, 1, 2}), Mode::basic), degenerate_input);
}

TEST(SegmentAndAnalyze, DeterministicAcrossRunsAndThreads) {
  HonestProverModel m;
  const auto s = honest_distribution(m);
  std::vector<bool> err(14, false);
  err[12] = true;
  const MemoryArchive ar(simulate_files(s, {}, 14, 200000, 5, err));
  ProtocolParams p = basic(300000, 8);
  AnalysisOptions o1, o4;
  o1.threads = 1;
  o4.threads = 4;
  const auto a = segment_and_analyze(ar, p, o1);
  const auto b = segment_and_analyze(ar, p, o4);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sum_log_w, b[i].sum_log_w);
    EXPECT_EQ(a[i].pass, b[i].pass);
    EXPECT_EQ(a[i].trials_real + a[i].trials_padded, p.n);
  }
  EXPECT_EQ(a[0].trials_real, 300000u);  // truncated
  EXPECT_EQ(a[1].trials_real, 300000u);
  EXPECT_EQ(a[1].instance_files, (std::vector<std::size_t>{12, 13}));
}

TEST(CalibrateFactor, ReferenceCountsGivePublishedFactor) {
  ProtocolParams p;
  AnalysisOptions o;
  const auto f = calibrate_factor(reference::calibration_counts(), p, o);
  const auto w = published_factor();
  for (int i = 0; i < kNumCells; ++i) EXPECT_NEAR(f.w.w[static_cast<std::size_t>(i)], w.w[static_cast<std::size_t>(i)], 1e-4 * w.w[static_cast<std::size_t>(i)]);
  p.mode = Mode::entanglement;
  p.r_th = 8e-6;
  const auto fe = calibrate_factor(reference::calibration_counts(), p, o);
  EXPECT_GT(fe.lambda_mix, 0.0);
  EXPECT_NE(fe.lambda_mix, 1.0);
}

TEST(InstanceJson, Fields) {
  const auto r = run_instance({}, TestFactor::unity(), basic(10));
  const auto j = to_json(r);
  EXPECT_TRUE(j.at("r_lb").is_null());
  EXPECT_EQ(j.at("trials_padded").get<std::uint64_t>(), 10u);
}
