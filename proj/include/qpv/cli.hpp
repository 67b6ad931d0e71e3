#pragma once

// Command implementations behind the `qpv` executable. Each command takes a
// resolved RunConfig, writes its outputs under cfg.out and returns an exit code.
//
// Config files are JSON. Sections "protocol", "model", "adversary" and
// "geometry" may be inlined objects or paths to JSON files (relative to the
// referencing file). Physical quantities carry their unit in the key.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpv/core.hpp"
#include "qpv/estimation.hpp"
#include "qpv/geometry.hpp"
#include "qpv/protocol.hpp"
#include "qpv/reference.hpp"
#include "qpv/simulator.hpp"
#include "qpv/testfactor.hpp"
#include "qpv/trialdata.hpp"

#ifndef QPV_VERSION
#define QPV_VERSION "0.0.0"
#endif

namespace qpv::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitProtocolFail = 2;
inline constexpr int kExitInfeasible = 3;

inline std::string version() { return QPV_VERSION; }

// ---------------------------------------------------------------------------
// JSON helpers

inline json load_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw io_error("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw invalid_input("bad JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw io_error("cannot write " + p.string());
  os << std::setw(2) << j << '\n';
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw io_error("cannot write " + p.string());
  os << std::setprecision(10);
  return os;
}

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw invalid_input(section + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw invalid_input(section + ": unknown key '" + it.key() + "'");
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Section parsers

inline ProtocolParams protocol_from_json(const json& j) {
  detail::check_keys(j, {"mode", "delta_log2", "epsilon", "n_trials", "r_th", "trial_rate_hz"}, "protocol");
  ProtocolParams p;
  if (j.contains("mode")) p.mode = mode_from_string(j.at("mode").get<std::string>());
  detail::get_opt(j, "delta_log2", p.delta_log2);
  detail::get_opt(j, "epsilon", p.epsilon);
  if (j.contains("n_trials")) p.n = static_cast<std::uint64_t>(j.at("n_trials").get<double>());
  detail::get_opt(j, "r_th", p.r_th);
  detail::get_opt(j, "trial_rate_hz", p.trial_rate);
  return p;
}

inline json protocol_to_json(const ProtocolParams& p) {
  return {{"mode", to_string(p.mode)}, {"delta_log2", p.delta_log2}, {"epsilon", p.epsilon},
          {"n_trials", p.n},           {"r_th", p.r_th},             {"trial_rate_hz", p.trial_rate}};
}

inline HonestProverModel honest_from_json(const json& j) {
  detail::check_keys(j,
                     {"kind", "amplitude_a", "amplitude_b", "normalize_amplitudes", "theta_a_deg", "theta_p_deg",
                      "efficiency_a", "efficiency_p", "dark_count_per_trial", "pair_probability",
                      "mismatch_probability", "click_label"},
                     "model");
  HonestProverModel m;
  detail::get_opt(j, "amplitude_a", m.a);
  detail::get_opt(j, "amplitude_b", m.b);
  detail::get_opt(j, "normalize_amplitudes", m.normalize_amplitudes);
  detail::get_opt(j, "theta_a_deg", m.theta_a_deg);
  detail::get_opt(j, "theta_p_deg", m.theta_p_deg);
  detail::get_opt(j, "efficiency_a", m.eta_a);
  detail::get_opt(j, "efficiency_p", m.eta_p);
  detail::get_opt(j, "dark_count_per_trial", m.dark);
  detail::get_opt(j, "pair_probability", m.p_pair);
  detail::get_opt(j, "mismatch_probability", m.d_sim);
  detail::get_opt(j, "click_label", m.click_label);
  m.validate();
  return m;
}

inline json honest_to_json(const HonestProverModel& m) {
  return {{"kind", "honest"},
          {"amplitude_a", m.a},
          {"amplitude_b", m.b},
          {"normalize_amplitudes", m.normalize_amplitudes},
          {"theta_a_deg", m.theta_a_deg},
          {"theta_p_deg", m.theta_p_deg},
          {"efficiency_a", m.eta_a},
          {"efficiency_p", m.eta_p},
          {"dark_count_per_trial", m.dark},
          {"pair_probability", m.p_pair},
          {"mismatch_probability", m.d_sim},
          {"click_label", m.click_label}};
}

/// {"kind": "lr_vertex", "vertex": k} | {"kind": "lr_mixture", "weights": [16]} |
/// {"kind": "ns3_point", "point": [64]} | {"kind": "pr_box"}
inline AdversaryModel adversary_from_json(const json& j) {
  detail::check_keys(j, {"kind", "vertex", "weights", "point"}, "adversary");
  const auto kind = j.value("kind", std::string("lr_vertex"));
  if (kind == "lr_vertex") return AdversaryModel::lr(j.value("vertex", 0));
  if (kind == "lr_mixture") return AdversaryModel::mixture(j.at("weights").get<std::array<double, 16>>());
  if (kind == "ns3_point") return AdversaryModel::ns3(j.at("point").get<std::vector<double>>());
  if (kind == "pr_box") return AdversaryModel::ns3(pr_box_with_uniform_third());
  throw invalid_input("adversary: unknown kind '" + kind + "'");
}

inline TimingGeometry geometry_from_json(const json& j) {
  detail::check_keys(j,
                     {"s_vap_ns", "s_vap_sd_ns", "s_vb_ns", "s_vb_sd_ns", "r_vap_ns", "r_vap_sd_ns", "r_vb_ns",
                      "r_vb_sd_ns", "d_sep_m", "d_sep_sd_m"},
                     "geometry");
  TimingGeometry t;
  detail::get_opt(j, "s_vap_ns", t.s_a_ns);
  detail::get_opt(j, "s_vap_sd_ns", t.s_a_sd);
  detail::get_opt(j, "s_vb_ns", t.s_b_ns);
  detail::get_opt(j, "s_vb_sd_ns", t.s_b_sd);
  detail::get_opt(j, "r_vap_ns", t.r_a_ns);
  detail::get_opt(j, "r_vap_sd_ns", t.r_a_sd);
  detail::get_opt(j, "r_vb_ns", t.r_b_ns);
  detail::get_opt(j, "r_vb_sd_ns", t.r_b_sd);
  detail::get_opt(j, "d_sep_m", t.d_m);
  detail::get_opt(j, "d_sep_sd_m", t.d_sd);
  t.validate();
  return t;
}

inline json geometry_to_json(const TimingGeometry& t) {
  return {{"s_vap_ns", t.s_a_ns}, {"s_vap_sd_ns", t.s_a_sd}, {"s_vb_ns", t.s_b_ns}, {"s_vb_sd_ns", t.s_b_sd},
          {"r_vap_ns", t.r_a_ns}, {"r_vap_sd_ns", t.r_a_sd}, {"r_vb_ns", t.r_b_ns}, {"r_vb_sd_ns", t.r_b_sd},
          {"d_sep_m", t.d_m},     {"d_sep_sd_m", t.d_sd}};
}

// ---------------------------------------------------------------------------
// Run configuration

struct SimulateOptions {
  std::uint64_t duration_min = 12;  // one file per minute
  std::uint64_t trials_per_file = 15000000;
  std::vector<std::size_t> detector_error_files;
};

struct GeometryOptions {
  std::size_t outer = 100000;
  std::size_t inner = 1000000;
  std::vector<int> dims{1, 2, 3};
  std::size_t histogram_bins = 50;
};

struct PlanOptions {
  double runtime_max_s = 600.0;
  double runtime_step_s = 5.0;
  std::vector<double> epsilons{0.84134, 0.97725, 0.99865};
};

struct RunConfig {
  std::string subcommand;
  fs::path in;   // trial-file directory (simulate: unused)
  fs::path out = ".";
  ProtocolParams protocol;
  std::optional<HonestProverModel> honest;
  std::optional<AdversaryModel> adversary;
  json adversary_json;
  TimingGeometry geometry;
  AnalysisOptions analysis;
  SimulateOptions simulate;
  GeometryOptions geo;
  PlanOptions plan;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool reference_calibration = false;  // use the published calibration counts

  json to_json() const {
    json j;
    j["subcommand"] = subcommand;
    j["in"] = in.string();
    j["out"] = out.string();
    j["seed"] = seed;
    j["threads"] = threads;
    j["protocol"] = protocol_to_json(protocol);
    if (honest) j["model"] = honest_to_json(*honest);
    if (adversary) j["adversary"] = adversary_json;
    j["geometry"] = geometry_to_json(geometry);
    j["analysis"] = {{"mismatch_probability", analysis.mismatch_probability},
                     {"calibration_files", analysis.calibration_files},
                     {"files_basic", analysis.files_basic},
                     {"files_entanglement", analysis.files_entanglement}};
    j["simulate"] = {{"duration_min", simulate.duration_min},
                     {"trials_per_file", simulate.trials_per_file},
                     {"detector_error_files", simulate.detector_error_files}};
    j["mc"] = {{"outer", geo.outer}, {"inner", geo.inner}, {"dims", geo.dims}, {"histogram_bins", geo.histogram_bins}};
    j["plan"] = {{"runtime_max_s", plan.runtime_max_s},
                 {"runtime_step_s", plan.runtime_step_s},
                 {"epsilons", plan.epsilons}};
    j["reference_calibration"] = reference_calibration;
    return j;
  }
};

namespace detail {
inline json resolve_section(const json& v, const fs::path& base) {
  if (v.is_string()) {
    const fs::path p = base / v.get<std::string>();
    return load_json(p);
  }
  return v;
}
}  // namespace detail

/// Applies a config document on top of `cfg`. Relative paths resolve against `base`.
inline void apply_config(RunConfig& cfg, const json& j, const fs::path& base) {
  using detail::check_keys;
  using detail::get_opt;
  check_keys(j,
                     {"protocol", "model", "adversary", "geometry", "analysis", "simulate", "mc", "plan", "seed",
                      "threads", "in", "out", "reference_calibration", "comment"},
                     "config");
  if (j.contains("protocol")) cfg.protocol = protocol_from_json(detail::resolve_section(j.at("protocol"), base));
  if (j.contains("model")) {
    const auto m = detail::resolve_section(j.at("model"), base);
    const auto kind = m.value("kind", std::string("honest"));
    if (kind == "honest") {
      cfg.honest = honest_from_json(m);
    } else {
      json a = m;
      cfg.adversary = adversary_from_json(a);
      cfg.adversary_json = a;
    }
  }
  if (j.contains("adversary")) {
    cfg.adversary_json = detail::resolve_section(j.at("adversary"), base);
    cfg.adversary = adversary_from_json(cfg.adversary_json);
  }
  if (j.contains("geometry")) cfg.geometry = geometry_from_json(detail::resolve_section(j.at("geometry"), base));
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    check_keys(a, {"mismatch_probability", "calibration_files", "files_basic", "files_entanglement"}, "analysis");
    get_opt(a, "mismatch_probability", cfg.analysis.mismatch_probability);
    get_opt(a, "calibration_files", cfg.analysis.calibration_files);
    get_opt(a, "files_basic", cfg.analysis.files_basic);
    get_opt(a, "files_entanglement", cfg.analysis.files_entanglement);
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    check_keys(s, {"duration_min", "trials_per_file", "detector_error_files"}, "simulate");
    get_opt(s, "duration_min", cfg.simulate.duration_min);
    if (s.contains("trials_per_file"))
      cfg.simulate.trials_per_file = static_cast<std::uint64_t>(s.at("trials_per_file").get<double>());
    get_opt(s, "detector_error_files", cfg.simulate.detector_error_files);
  }
  if (j.contains("mc")) {
    const auto& m = j.at("mc");
    check_keys(m, {"outer", "inner", "dims", "histogram_bins"}, "mc");
    if (m.contains("outer")) cfg.geo.outer = static_cast<std::size_t>(m.at("outer").get<double>());
    if (m.contains("inner")) cfg.geo.inner = static_cast<std::size_t>(m.at("inner").get<double>());
    get_opt(m, "dims", cfg.geo.dims);
    get_opt(m, "histogram_bins", cfg.geo.histogram_bins);
  }
  if (j.contains("plan")) {
    const auto& p = j.at("plan");
    check_keys(p, {"runtime_max_s", "runtime_step_s", "epsilons"}, "plan");
    get_opt(p, "runtime_max_s", cfg.plan.runtime_max_s);
    get_opt(p, "runtime_step_s", cfg.plan.runtime_step_s);
    get_opt(p, "epsilons", cfg.plan.epsilons);
  }
  get_opt(j, "seed", cfg.seed);
  get_opt(j, "threads", cfg.threads);
  get_opt(j, "reference_calibration", cfg.reference_calibration);
  if (j.contains("in")) cfg.in = base / j.at("in").get<std::string>();
  if (j.contains("out")) cfg.out = base / j.at("out").get<std::string>();
}

inline void load_config_file(RunConfig& cfg, const fs::path& p) {
  apply_config(cfg, load_json(p), p.parent_path().empty() ? fs::path(".") : p.parent_path());
}

inline unsigned resolve_threads(unsigned t) {
  return t ? t : std::max(1u, std::thread::hardware_concurrency());
}

/// Tool/version stamp plus the resolved config, embedded in every report.
inline json provenance(const RunConfig& cfg) {
  return {{"tool", {{"name", "qpv"}, {"version", version()}}}, {"config", cfg.to_json()}};
}

// ---------------------------------------------------------------------------
// Shared steps

struct Calibration {
  CountsTable counts;
  std::vector<std::string> files;
};

/// Reference counts, or the first `calibration_files` error-free files of cfg.in.
inline Calibration load_calibration(const RunConfig& cfg) {
  Calibration c;
  if (cfg.reference_calibration || cfg.in.empty()) {
    c.counts = reference::calibration_counts();
    c.files = {"reference"};
    return c;
  }
  const DirectoryArchive ar(cfg.in);
  for (std::size_t i = 0; i < ar.size() && c.files.size() < cfg.analysis.calibration_files; ++i) {
    if (ar.detector_error(i)) continue;
    c.counts += ar.counts(i, UINT64_MAX).first;
    c.files.push_back(ar.id(i));
  }
  if (c.files.size() < cfg.analysis.calibration_files) throw degenerate_input("not enough error-free files to calibrate");
  return c;
}

inline void write_histogram_csv(std::ostream& os, const std::string& label, const Histogram& h) {
  for (std::size_t i = 0; i < h.frequency.size(); ++i)
    os << label << ',' << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.frequency[i] << '\n';
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const RunConfig& cfg) {
  if (cfg.honest && cfg.adversary) throw invalid_input("give either an honest model or an adversary, not both");
  ConditionalDistribution3 sigma;
  if (cfg.adversary)
    sigma = adversary_distribution(*cfg.adversary);
  else
    sigma = honest_distribution(cfg.honest.value_or(HonestProverModel{}));
  const JointSettingsDistribution nu = cfg.analysis.nu;
  fs::create_directories(cfg.out);
  const std::set<std::size_t> errs(cfg.simulate.detector_error_files.begin(), cfg.simulate.detector_error_files.end());
  json files = json::array();
  const unsigned th = resolve_threads(cfg.threads);
  for (std::size_t f = 0; f < cfg.simulate.duration_min; ++f) {
    const auto tf = simulate_file(sigma, nu, f, cfg.simulate.trials_per_file, cfg.seed, errs.count(f) > 0, th);
    char name[32];
    std::snprintf(name, sizeof name, "trials_%05zu.qpvt", f);
    write_trial_file(tf, (cfg.out / name).string());
    files.push_back({{"file", name}, {"trials", tf.size()}, {"detector_error", tf.detector_error}});
  }
  json rep = provenance(cfg);
  rep["files"] = files;
  write_json(cfg.out / "simulate_report.json", rep);
  return kExitOk;
}

inline int cmd_fit(const RunConfig& cfg) {
  const auto cal = load_calibration(cfg);
  const auto sigma = ml_fit_quantum(cal.counts);
  fs::create_directories(cfg.out);
  json rep = provenance(cfg);
  rep["calibration_files"] = cal.files;
  rep["calibration"] = calibration_report(cal.counts, sigma, cfg.analysis.mismatch_probability);
  write_json(cfg.out / "calibration.json", rep);
  return kExitOk;
}

inline int cmd_build_tf(const RunConfig& cfg) {
  const auto cal = load_calibration(cfg);
  const auto sigma = ml_fit_quantum(cal.counts);
  const auto& nu = cfg.analysis.nu;
  const auto w = build_robust(sigma, nu);
  const auto st = gain_variance(w, regularize(sigma, cfg.analysis.mismatch_probability), nu);
  fs::create_directories(cfg.out);
  json rep = provenance(cfg);
  rep["calibration_files"] = cal.files;
  rep["test_factor"] = to_json(w, nu);
  rep["gain_log2"] = st.g;
  rep["variance_log2"] = st.v;
  write_json(cfg.out / "test_factor.json", rep);
  return kExitOk;
}

inline int cmd_plan(const RunConfig& cfg) {
  const auto& p = cfg.protocol;
  if (!(p.delta_log2 >= 0.0)) throw invalid_input("delta_log2 must be >= 0");
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw invalid_input("epsilon must lie in (0, 1)");
  const auto cal = load_calibration(cfg);
  const auto sigma = ml_fit_quantum(cal.counts);
  const auto& nu = cfg.analysis.nu;
  const auto sigma3 = regularize(sigma, cfg.analysis.mismatch_probability);
  const auto w = build_robust(sigma, nu);
  const auto st = gain_variance(w, sigma3, nu);

  fs::create_directories(cfg.out);
  json rep = provenance(cfg);
  rep["calibration_files"] = cal.files;
  rep["gain_log2"] = st.g;
  rep["variance_log2"] = st.v;

  std::vector<double> runtimes;
  for (double t = cfg.plan.runtime_step_s; t <= cfg.plan.runtime_max_s + 1e-9; t += cfg.plan.runtime_step_s)
    runtimes.push_back(t);
  {
    auto os = open_out(cfg.out / "tradeoff_basic.csv");
    os << "epsilon,runtime_seconds,trials,log2_delta\n";
    for (const auto& tp : basic_tradeoff(st, cfg.plan.epsilons, runtimes, p.trial_rate))
      os << tp.epsilon << ',' << tp.runtime_s << ',' << tp.n << ',' << tp.value << '\n';
  }
  {
    auto os = open_out(cfg.out / "tradeoff_entanglement.csv");
    os << "epsilon,runtime_seconds,trials,r_th\n";
    for (const auto& tp : entanglement_tradeoff(sigma3, nu, w, p.delta_log2, cfg.plan.epsilons, runtimes, p.trial_rate))
      os << tp.epsilon << ',' << tp.runtime_s << ',' << tp.n << ',' << tp.value << '\n';
  }

  int code = kExitOk;
  try {
    if (p.mode == Mode::basic) {
      if (!(st.g > 0.0)) throw infeasible_plan("test factor has non-positive expected gain");
      const auto n = required_trials(st.g, st.v, p.delta_log2, p.epsilon);
      rep["plan"] = {{"mode", "basic"},
                     {"n_trials", n},
                     {"runtime_s", static_cast<double>(n) / p.trial_rate},
                     {"p_succ", n > 0 ? p_succ(static_cast<double>(n), st.g, st.v, p.delta_log2) : 1.0}};
    } else {
      const auto plan = plan_entanglement(sigma3, nu, w, p.r_th, p.delta_log2, p.epsilon);
      rep["plan"] = {{"mode", "entanglement"},
                     {"n_trials", plan.n},
                     {"runtime_s", static_cast<double>(plan.n) / p.trial_rate},
                     {"lambda_mix", plan.lambda_mix},
                     {"wbar_min", plan.wbar},
                     {"gain_log2", plan.stats.g},
                     {"variance_log2", plan.stats.v},
                     {"test_factor", to_json(plan.w_prime, nu)}};
    }
  } catch (const infeasible_plan& e) {
    rep["plan"] = {{"infeasible", true}, {"reason", e.what()}};
    code = kExitInfeasible;
  }
  write_json(cfg.out / "plan.json", rep);
  return code;
}

inline int cmd_analyze(const RunConfig& cfg) {
  if (cfg.in.empty()) throw invalid_input("analyze needs an input directory");
  auto p = cfg.protocol;
  p.validate();
  AnalysisOptions opt = cfg.analysis;
  opt.threads = resolve_threads(cfg.threads);
  const DirectoryArchive ar(cfg.in);
  const auto results = segment_and_analyze(ar, p, opt);

  fs::create_directories(cfg.out);
  json rep = provenance(cfg);
  json inst = json::array();
  std::size_t passed = 0;
  std::vector<double> log2p, rlb;
  auto csv = open_out(cfg.out / "instances.csv");
  csv << "instance,log2_p,threshold_log2,pass,r_lb,lambda_mix,trials_real,trials_padded,first_file,calibration_first,"
         "calibration_last\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    auto j = to_json(r);
    json ids = json::array();
    for (auto i : r.instance_files) ids.push_back(ar.id(i));
    j["instance_file_ids"] = ids;
    json cids = json::array();
    for (auto i : r.calibration_files) cids.push_back(ar.id(i));
    j["calibration_file_ids"] = cids;
    inst.push_back(j);
    passed += r.pass;
    log2p.push_back(r.log2_p);
    if (std::isfinite(r.r_lb)) rlb.push_back(r.r_lb);
    csv << k << ',' << r.log2_p << ',' << r.threshold / kLn2 << ',' << (r.pass ? 1 : 0) << ',' << r.r_lb << ','
        << r.lambda_mix << ',' << r.trials_real << ',' << r.trials_padded << ','
        << ar.id(r.instance_files.front()) << ',' << ar.id(r.calibration_files.front()) << ','
        << ar.id(r.calibration_files.back()) << '\n';
  }
  rep["instances"] = inst;
  rep["summary"] = {{"instances", results.size()}, {"passed", passed}, {"failed", results.size() - passed}};
  write_json(cfg.out / "report.json", rep);
  auto hs = open_out(cfg.out / "histograms.csv");
  hs << "quantity,bin_lo,bin_hi,frequency\n";
  write_histogram_csv(hs, "log2_p", histogram(log2p, 30));
  write_histogram_csv(hs, "r_lb", histogram(rlb, 30));
  return passed == results.size() ? kExitOk : kExitProtocolFail;
}

inline int cmd_geometry(const RunConfig& cfg) {
  const auto& tg = cfg.geometry;
  const auto s = region_spec(tg);
  fs::create_directories(cfg.out);
  json rep = provenance(cfg);
  rep["region"] = {{"R_A_m", s.r_a}, {"R_B_m", s.r_b}, {"M1_m", s.m1}, {"M2_m", s.m2}, {"d_sep_m", s.d}};

  json sizes = json::array();
  auto sc = open_out(cfg.out / "sizes.csv");
  sc << "dim,region,exact,mc,mc_stderr\n";
  bool degenerate = false;
  for (int dim : cfg.geo.dims) {
    if (dim < 1 || dim > 3) throw invalid_input("dimension must be 1, 2 or 3");
    const auto q = region_size(RegionKind::quantum, s, dim, cfg.geo.inner, cfg.seed);
    const auto c = region_size(RegionKind::classical, s, dim, cfg.geo.inner, cfg.seed);
    const double qe = region_size_exact(RegionKind::quantum, s, dim);
    const double ce = region_size_exact(RegionKind::classical, s, dim);
    const double ideal = dim == 1 ? s.d : 0.0;
    degenerate = degenerate || !(qe > 0);
    sizes.push_back({{"dim", dim},
                     {"quantum", {{"exact", qe}, {"mc", q.value}, {"mc_stderr", q.stderr_}}},
                     {"classical_comparable", {{"exact", ce}, {"mc", c.value}, {"mc_stderr", c.stderr_}}},
                     {"classical_ideal", ideal}});
    sc << dim << ",quantum," << qe << ',' << q.value << ',' << q.stderr_ << '\n';
    sc << dim << ",classical_comparable," << ce << ',' << c.value << ',' << c.stderr_ << '\n';
    sc << dim << ",classical_ideal," << ideal << ',' << ideal << ",0\n";
  }
  rep["sizes"] = sizes;
  rep["degenerate"] = degenerate;

  std::vector<AdvantageSpec> specs;
  for (int dim : cfg.geo.dims) {
    specs.push_back({dim, Comparator::ideal});
    specs.push_back({dim, Comparator::comparable});
  }
  int code = kExitOk;
  try {
    const auto res = quantum_advantage(tg, specs, cfg.geo.outer, cfg.geo.inner, cfg.seed, resolve_threads(cfg.threads));
    json adv = json::array();
    auto hs = open_out(cfg.out / "advantage_histograms.csv");
    hs << "comparison,bin_lo,bin_hi,frequency\n";
    for (const auto& r : res) {
      const std::string label = std::to_string(r.spec.dim) + "d_" +
                                (r.spec.comparator == Comparator::ideal ? "ideal" : "comparable");
      adv.push_back({{"comparison", label},
                     {"dim", r.spec.dim},
                     {"comparator", r.spec.comparator == Comparator::ideal ? "ideal" : "comparable"},
                     {"mean", r.mean},
                     {"sd", r.sd},
                     {"nominal", r.nominal},
                     {"samples", r.samples},
                     {"empty_samples", r.empty}});
      write_histogram_csv(hs, label, histogram(r.ratios, cfg.geo.histogram_bins));
    }
    rep["advantage"] = adv;
  } catch (const degenerate_input& e) {
    // The quantum region collapses (e.g. ideal timings): the ratio diverges.
    rep["advantage"] = {{"degenerate", true}, {"diagnostic", e.what()}};
    rep["degenerate"] = true;
    code = kExitError;
  }
  write_json(cfg.out / "geometry.json", rep);
  return code;
}

inline int run(const RunConfig& cfg) {
  if (cfg.subcommand == "simulate") return cmd_simulate(cfg);
  if (cfg.subcommand == "fit") return cmd_fit(cfg);
  if (cfg.subcommand == "build-tf") return cmd_build_tf(cfg);
  if (cfg.subcommand == "plan") return cmd_plan(cfg);
  if (cfg.subcommand == "analyze") return cmd_analyze(cfg);
  if (cfg.subcommand == "geometry") return cmd_geometry(cfg);
  throw invalid_input("unknown subcommand: " + cfg.subcommand);
}

}  // namespace qpv::cli
