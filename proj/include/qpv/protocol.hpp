#pragma once

// Protocol execution and parameter determination.
//
// An instance multiplies trial-wise test factors; with S = Σ ln w the
// p-value bound is exp(-S). Planning uses the normal approximation for
// Σ log2 w with per-trial mean g and variance v.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "qpv/core.hpp"
#include "qpv/estimation.hpp"
#include "qpv/testfactor.hpp"
#include "qpv/trialdata.hpp"

namespace qpv {

enum class Mode { basic, entanglement };

inline std::string to_string(Mode m) { return m == Mode::basic ? "basic" : "entanglement"; }
inline Mode mode_from_string(const std::string& s) {
  if (s == "basic") return Mode::basic;
  if (s == "entanglement") return Mode::entanglement;
  throw invalid_input("unknown mode: " + s);
}

struct ProtocolParams {
  double delta_log2 = 64.0;  // δ = 2^-delta_log2
  double epsilon = 0.97725;
  std::uint64_t n = 30000000;
  Mode mode = Mode::basic;
  double r_th = 0.0;
  double trial_rate = 250000.0;

  double ln_inv_delta() const { return delta_log2 * kLn2; }

  void validate() const {
    if (!(delta_log2 > 0.0) || !std::isfinite(delta_log2)) throw invalid_input("need 0 < δ < 1");
    const double delta = std::exp2(-delta_log2);
    if (!(epsilon > delta && epsilon <= 1.0)) throw invalid_input("need δ < ε <= 1");
    if (n < 1) throw invalid_input("need n >= 1");
    if (!(r_th >= 0.0)) throw invalid_input("need r_th >= 0");
    if (mode == Mode::basic && r_th != 0.0) throw invalid_input("r_th is only used in entanglement mode");
    if (!(trial_rate > 0.0)) throw invalid_input("trial rate must be positive");
  }
};

struct InstanceResult {
  double sum_log_w = 0.0;
  double log2_p = 0.0;  // -log2(p) = sum_log_w / ln 2
  double threshold = 0.0;
  bool pass = false;
  double r_lb = NAN;
  double wbar_min = NAN;
  double lambda_mix = 1.0;
  std::uint64_t trials_real = 0;
  std::uint64_t trials_padded = 0;
  std::vector<std::size_t> calibration_files;
  std::vector<std::size_t> instance_files;
};

/// Neumaier-compensated sum.
class KahanSum {
 public:
  void add(double x) {
    const double t = s_ + x;
    if (std::abs(s_) >= std::abs(x))
      c_ += (s_ - t) + x;
    else
      c_ += (x - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

/// Pass threshold on Σ ln w: ln(1/δ), plus n r_th (1 - w̄'_min) in entanglement mode.
inline double pass_threshold(const ProtocolParams& p, double wbar) {
  double t = p.ln_inv_delta();
  if (p.mode == Mode::entanglement) t += static_cast<double>(p.n) * p.r_th * (1.0 - wbar);
  return t;
}

inline double r_lower_bound(double sum_log_w, std::uint64_t n, double wbar, double delta_log2) {
  if (!(wbar < 1.0)) throw invalid_input("w̄'_min must be below 1");
  if (n == 0) throw invalid_input("n must be positive");
  return (sum_log_w - delta_log2 * kLn2) / (static_cast<double>(n) * (1.0 - wbar));
}

/// Streaming accumulator: truncates beyond n, pads up to n with ln 1 = 0.
class InstanceAccumulator {
 public:
  InstanceAccumulator(const TestFactor& w, std::uint64_t n) : n_(n) {
    for (int i = 0; i < kNumCells; ++i) {
      const double v = w.w[static_cast<std::size_t>(i)];
      logw_[static_cast<std::size_t>(i)] = v > 0 ? std::log(v) : -INFINITY;
    }
  }

  /// Returns false once n trials have been consumed (the record is discarded).
  bool add(const TrialRecord& r) {
    if (used_ >= n_) return false;
    const double l = logw_[static_cast<std::size_t>(r.cell())];
    if (!std::isfinite(l)) throw invalid_input("test factor is zero on an observed cell");
    sum_.add(l);
    ++used_;
    return true;
  }

  /// Adds min(count, remaining) trials of one cell at once.
  std::uint64_t add_cell(int cell, std::uint64_t count) {
    const std::uint64_t k = std::min(count, n_ - used_);
    if (k == 0) return 0;
    const double l = logw_[static_cast<std::size_t>(cell)];
    if (!std::isfinite(l)) throw invalid_input("test factor is zero on an observed cell");
    sum_.add(static_cast<double>(k) * l);
    used_ += k;
    return k;
  }

  std::uint64_t used() const { return used_; }
  std::uint64_t padded() const { return n_ - used_; }
  double sum() const { return sum_.value(); }

 private:
  std::array<double, kNumCells> logw_{};
  std::uint64_t n_;
  std::uint64_t used_ = 0;
  KahanSum sum_;
};

inline InstanceResult finish_instance(double sum, std::uint64_t used, const ProtocolParams& p, double wbar) {
  InstanceResult r;
  r.sum_log_w = sum;
  r.log2_p = sum / kLn2;
  r.trials_real = used;
  r.trials_padded = p.n - used;
  r.wbar_min = wbar;
  r.threshold = pass_threshold(p, wbar);
  r.pass = sum >= r.threshold;
  if (p.mode == Mode::entanglement && wbar < 1.0) r.r_lb = r_lower_bound(sum, p.n, wbar, p.delta_log2);
  return r;
}

/// Runs one instance on a trial sequence with factor W (W' in entanglement mode).
inline InstanceResult run_instance(std::span<const TrialRecord> trials, const TestFactor& w, const ProtocolParams& p,
                                   const JointSettingsDistribution& nu = {}) {
  p.validate();
  InstanceAccumulator acc(w, p.n);
  for (const auto& t : trials) {
    if (!acc.add(t)) break;
  }
  return finish_instance(acc.sum(), acc.used(), p, wbar_min(w, nu));
}

/// Same as run_instance for trials already reduced to counts. The caller is
/// responsible for truncation order (counts must cover at most n trials to
/// match the streaming result exactly).
inline InstanceResult run_instance_counts(const CountsTable& counts, const TestFactor& w, const ProtocolParams& p,
                                          const JointSettingsDistribution& nu = {}) {
  p.validate();
  InstanceAccumulator acc(w, p.n);
  for (int c = 0; c < kNumCells; ++c) acc.add_cell(c, counts.n[static_cast<std::size_t>(c)]);
  return finish_instance(acc.sum(), acc.used(), p, wbar_min(w, nu));
}

// ---------------------------------------------------------------------------
// Parameter determination

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// z with Φ(z) = ε; exactly 2 for the two-sigma level 0.97725.
inline double z_for_epsilon(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw invalid_input("ε must lie in (0, 1)");
  if (std::abs(eps - 0.97725) < 1e-12) return 2.0;
  return boost::math::quantile(boost::math::normal_distribution<double>(), eps);
}

/// Φ((n g - log2(1/δ)) / sqrt(n v)), with g, v in log2 units.
inline double p_succ(double n, double g, double v, double delta_log2) {
  if (!(n >= 1.0)) throw invalid_input("n must be >= 1");
  if (!(v > 0.0)) throw invalid_input("variance must be positive");
  return normal_cdf((n * g - delta_log2) / std::sqrt(n * v));
}

namespace detail {
/// Smallest real n >= 0 with n a - z sqrt(n v) >= L (a > 0).
inline double continuous_trials(double a, double v, double L, double z) {
  const double s = (z * std::sqrt(v) + std::sqrt(z * z * v + 4.0 * a * L)) / (2.0 * a);
  return s * s;
}
}  // namespace detail

/// Smallest n with n g - z_ε sqrt(n v) >= log2(1/δ).
inline std::uint64_t required_trials(double g, double v, double delta_log2, double eps) {
  if (!(g > 0.0)) throw infeasible_plan("non-positive gain: no finite number of trials suffices");
  if (!(v >= 0.0)) throw invalid_input("variance must be nonnegative");
  if (!(delta_log2 >= 0.0)) throw invalid_input("need δ <= 1");
  if (delta_log2 == 0.0) return 0;
  const double z = z_for_epsilon(eps);
  auto ok = [&](double n) { return n * g - z * std::sqrt(n * v) >= delta_log2; };
  double n = std::ceil(detail::continuous_trials(g, v, delta_log2, z));
  while (n > 1 && ok(n - 1)) n -= 1;
  while (!ok(n)) n += 1;
  return static_cast<std::uint64_t>(n);
}

struct EntanglementPlan {
  double lambda_mix = 1.0;
  TestFactor w_prime;         // λ W + 1 - λ
  TestFactor w_double_prime;  // W' exp(-r_th (1 - w̄'_min))
  std::uint64_t n = 0;
  GainStats stats;            // of W'
  double wbar = 1.0;          // w̄'_min
};

namespace detail {
struct MixEval {
  double n = INFINITY;  // continuous required trials
  GainStats st;
  double wbar = 1.0;
};

inline MixEval eval_mix(const TestFactor& base, double lambda, const ConditionalDistribution3& sigma,
                        const JointSettingsDistribution& nu, double r_th, double L, double z) {
  MixEval e;
  const auto wp = mix_with_unity(base, lambda);
  try {
    e.st = gain_variance(wp, sigma, nu);
  } catch (const invalid_input&) {
    return e;
  }
  e.wbar = wbar_min(wp, nu);
  const double a = e.st.g - r_th * (1.0 - e.wbar) / kLn2;
  if (a > 0) e.n = continuous_trials(a, e.st.v, L, z);
  return e;
}
}  // namespace detail

/// Chooses the mixing parameter λ minimizing the number of trials needed to
/// pass the entanglement-mode threshold with probability ε.
inline EntanglementPlan plan_entanglement(const ConditionalDistribution3& sigma, const JointSettingsDistribution& nu,
                                          const TestFactor& base, double r_th, double delta_log2, double eps) {
  if (!(r_th >= 0.0)) throw invalid_input("r_th must be nonnegative");
  const double z = z_for_epsilon(eps);
  const double hi = std::min(mix_upper_limit(base), 1e3);
  auto f = [&](double lam) { return detail::eval_mix(base, lam, sigma, nu, r_th, delta_log2, z).n; };

  constexpr int kGrid = 400;
  double best_lam = NAN, best_n = INFINITY;
  int best_i = -1;
  for (int i = 1; i < kGrid; ++i) {
    const double lam = hi * i / kGrid;
    const double n = f(lam);
    if (n < best_n) {
      best_n = n;
      best_lam = lam;
      best_i = i;
    }
  }
  if (!std::isfinite(best_n)) throw infeasible_plan("threshold exceeds the achievable rate for every mixing parameter");
  // Golden-section refinement inside the neighbouring grid cells.
  double a = hi * (best_i - 1) / kGrid, b = hi * (best_i + 1) / kGrid;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 100 && b - a > 1e-12 * hi; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  const double lam_ref = fc < fd ? c : d;
  if (std::min(fc, fd) < best_n) best_lam = lam_ref;

  EntanglementPlan plan;
  plan.lambda_mix = best_lam;
  plan.w_prime = mix_with_unity(base, best_lam);
  const auto e = detail::eval_mix(base, best_lam, sigma, nu, r_th, delta_log2, z);
  plan.stats = e.st;
  plan.wbar = e.wbar;
  plan.w_double_prime = entanglement_discounted(plan.w_prime, r_th, nu);
  const double gain = e.st.g - r_th * (1.0 - e.wbar) / kLn2;
  plan.n = delta_log2 == 0.0 && r_th == 0.0 ? 0 : required_trials(gain, e.st.v, delta_log2, eps);
  return plan;
}

struct TradeoffPoint {
  double epsilon;
  double runtime_s;
  double n;
  double value;  // achievable log2(1/δ) (basic) or r_th (entanglement)
};

/// Achievable log2(1/δ) = n g - z sqrt(n v) at each runtime.
inline std::vector<TradeoffPoint> basic_tradeoff(const GainStats& st, std::span<const double> eps_list,
                                                 std::span<const double> runtimes_s, double rate) {
  std::vector<TradeoffPoint> out;
  for (double eps : eps_list) {
    const double z = z_for_epsilon(eps);
    for (double t : runtimes_s) {
      const double n = t * rate;
      out.push_back({eps, t, n, n * st.g - z * std::sqrt(n * st.v)});
    }
  }
  return out;
}

/// Achievable r_th at each runtime for fixed δ, maximized over the mixing parameter.
inline std::vector<TradeoffPoint> entanglement_tradeoff(const ConditionalDistribution3& sigma,
                                                        const JointSettingsDistribution& nu, const TestFactor& base,
                                                        double delta_log2, std::span<const double> eps_list,
                                                        std::span<const double> runtimes_s, double rate) {
  std::vector<TradeoffPoint> out;
  const double hi = std::min(mix_upper_limit(base), 1e3);
  constexpr int kGrid = 400;
  std::vector<detail::MixEval> evals;
  for (int i = 1; i < kGrid; ++i) evals.push_back(detail::eval_mix(base, hi * i / kGrid, sigma, nu, 0.0, 1.0, 0.0));
  for (double eps : eps_list) {
    const double z = z_for_epsilon(eps);
    for (double t : runtimes_s) {
      const double n = t * rate;
      double best = -INFINITY;
      for (const auto& e : evals) {
        if (!std::isfinite(e.st.g) || e.wbar >= 1.0) continue;
        const double r = kLn2 * (e.st.g - (delta_log2 + z * std::sqrt(n * e.st.v)) / n) / (1.0 - e.wbar);
        best = std::max(best, r);
      }
      out.push_back({eps, t, n, best});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Archives and segmentation

/// Ordered sequence of one-minute trial files.
class TrialArchive {
 public:
  virtual ~TrialArchive() = default;
  virtual std::size_t size() const = 0;
  virtual bool detector_error(std::size_t i) const = 0;
  virtual std::string id(std::size_t i) const = 0;
  /// Counts over the first `limit` trials of file i, and the number of trials counted.
  virtual std::pair<CountsTable, std::uint64_t> counts(std::size_t i, std::uint64_t limit) const = 0;
};

class MemoryArchive : public TrialArchive {
 public:
  MemoryArchive() = default;
  explicit MemoryArchive(std::vector<TrialFile> files) : files_(std::move(files)) {}
  void push_back(TrialFile f) { files_.push_back(std::move(f)); }
  std::size_t size() const override { return files_.size(); }
  bool detector_error(std::size_t i) const override { return files_.at(i).detector_error; }
  std::string id(std::size_t i) const override { return "file" + std::to_string(i); }
  std::pair<CountsTable, std::uint64_t> counts(std::size_t i, std::uint64_t limit) const override {
    const auto& f = files_.at(i);
    const std::uint64_t m = std::min<std::uint64_t>(limit, f.size());
    return {aggregate_counts(f, m), m};
  }
  const TrialFile& file(std::size_t i) const { return files_.at(i); }

 private:
  std::vector<TrialFile> files_;
};

/// Files are read lazily; only headers are kept in memory.
class DirectoryArchive : public TrialArchive {
 public:
  explicit DirectoryArchive(const std::filesystem::path& dir, const std::string& ext = ".qpvt") {
    if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir.string());
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ext) paths_.push_back(e.path());
    }
    std::sort(paths_.begin(), paths_.end());
    for (const auto& p : paths_) {
      std::ifstream is(p, std::ios::binary);
      unsigned char hdr[TrialFile::kHeaderSize];
      is.read(reinterpret_cast<char*>(hdr), TrialFile::kHeaderSize);
      if (is.gcount() != static_cast<std::streamsize>(TrialFile::kHeaderSize) ||
          std::string(reinterpret_cast<char*>(hdr), 4) != "QPVT")
        throw io_error("bad trial file: " + p.string());
      flags_.push_back((hdr[5] & 1) != 0);
    }
  }
  std::size_t size() const override { return paths_.size(); }
  bool detector_error(std::size_t i) const override { return flags_.at(i); }
  std::string id(std::size_t i) const override { return paths_.at(i).filename().string(); }
  std::pair<CountsTable, std::uint64_t> counts(std::size_t i, std::uint64_t limit) const override {
    const auto f = read_trial_file(paths_.at(i).string());
    const std::uint64_t m = std::min<std::uint64_t>(limit, f.size());
    return {aggregate_counts(f, m), m};
  }
  const std::filesystem::path& path(std::size_t i) const { return paths_.at(i); }

 private:
  std::vector<std::filesystem::path> paths_;
  std::vector<bool> flags_;
};

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must be
/// written to per-index slots so output order is independent of scheduling.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct AnalysisOptions {
  JointSettingsDistribution nu{};
  double mismatch_probability = 2e-6;
  std::size_t calibration_files = 10;
  std::size_t files_basic = 2;
  std::size_t files_entanglement = 4;
  unsigned threads = 0;
};

struct InstancePlan {
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> files;
};

/// Instance layout: start after the first `calibration_files` error-free files;
/// each instance takes the next k files irrespective of error flags (the last
/// one may be short) and calibrates on the most recent error-free files before it.
inline std::vector<InstancePlan> segment(const TrialArchive& ar, Mode mode, const AnalysisOptions& opt = {}) {
  const std::size_t k = mode == Mode::basic ? opt.files_basic : opt.files_entanglement;
  std::size_t seen = 0, start = ar.size();
  for (std::size_t i = 0; i < ar.size(); ++i) {
    if (!ar.detector_error(i) && ++seen == opt.calibration_files) {
      start = i + 1;
      break;
    }
  }
  if (seen < opt.calibration_files) throw degenerate_input("not enough error-free files to calibrate");
  std::vector<InstancePlan> plans;
  for (std::size_t s = start; s < ar.size(); s += k) {
    InstancePlan p;
    for (std::size_t i = s; i < std::min(ar.size(), s + k); ++i) p.files.push_back(i);
    for (std::size_t i = s; i-- > 0 && p.calibration.size() < opt.calibration_files;) {
      if (!ar.detector_error(i)) p.calibration.push_back(i);
    }
    std::reverse(p.calibration.begin(), p.calibration.end());
    plans.push_back(std::move(p));
  }
  return plans;
}

struct InstanceFactor {
  TestFactor w;  // factor evaluated on the trials (W, or W' in entanglement mode)
  double lambda_mix = 1.0;
};

/// Calibration -> fit -> robust factor (-> mixing plan in entanglement mode).
inline InstanceFactor calibrate_factor(const CountsTable& cal, const ProtocolParams& p, const AnalysisOptions& opt) {
  const auto sigma = ml_fit_quantum(cal);
  InstanceFactor f;
  f.w = build_robust(sigma, opt.nu);
  if (p.mode == Mode::entanglement) {
    try {
      auto plan = plan_entanglement(regularize(sigma, opt.mismatch_probability), opt.nu, f.w, p.r_th, p.delta_log2,
                                    p.epsilon);
      f.lambda_mix = plan.lambda_mix;
      f.w = plan.w_prime;
    } catch (const infeasible_plan&) {
      f.lambda_mix = 1.0;
    }
  }
  return f;
}

inline std::vector<InstanceResult> segment_and_analyze(const TrialArchive& ar, const ProtocolParams& p,
                                                       const AnalysisOptions& opt = {}) {
  p.validate();
  const auto plans = segment(ar, p.mode, opt);
  std::vector<InstanceResult> out(plans.size());
  parallel_for(plans.size(), opt.threads, [&](std::size_t k) {
    const auto& plan = plans[k];
    CountsTable cal;
    for (auto i : plan.calibration) cal += ar.counts(i, UINT64_MAX).first;
    const auto f = calibrate_factor(cal, p, opt);
    InstanceAccumulator acc(f.w, p.n);
    for (auto i : plan.files) {
      const std::uint64_t remaining = p.n - acc.used();
      if (remaining == 0) break;
      auto [c, m] = ar.counts(i, remaining);
      for (int cell = 0; cell < kNumCells; ++cell) acc.add_cell(cell, c.n[static_cast<std::size_t>(cell)]);
    }
    auto r = finish_instance(acc.sum(), acc.used(), p, wbar_min(f.w, opt.nu));
    r.lambda_mix = f.lambda_mix;
    r.calibration_files = plan.calibration;
    r.instance_files = plan.files;
    out[k] = std::move(r);
  });
  return out;
}

inline nlohmann::json to_json(const InstanceResult& r) {
  return {{"sum_log_w", r.sum_log_w},
          {"log2_p", r.log2_p},
          {"threshold", r.threshold},
          {"pass", r.pass},
          {"r_lb", std::isfinite(r.r_lb) ? nlohmann::json(r.r_lb) : nlohmann::json(nullptr)},
          {"wbar_min", r.wbar_min},
          {"lambda_mix", r.lambda_mix},
          {"trials_real", r.trials_real},
          {"trials_padded", r.trials_padded},
          {"calibration_files", r.calibration_files},
          {"instance_files", r.instance_files}};
}

inline nlohmann::json to_json(const ProtocolParams& p) {
  return {{"delta_log2", p.delta_log2}, {"epsilon", p.epsilon}, {"n", p.n},
          {"mode", to_string(p.mode)},  {"r_th", p.r_th},       {"trial_rate", p.trial_rate}};
}

}  // namespace qpv
