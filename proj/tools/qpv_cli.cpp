// qpv: simulate, fit, build-tf, plan, analyze, geometry.

#include <iostream>

#include <CLI11.hpp>

#include "qpv/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string in, out;
  std::string mode;
  double delta_log2 = -1, epsilon = -1, rth = -1, n_trials = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
  // simulate
  long long minutes = -1;
  double trials_per_file = -1;
  std::vector<std::size_t> error_files;
  int lr_vertex = -1;
  // geometry
  double outer = -1, inner = -1;
  std::vector<int> dims;
  bool reference = false;
};

void add_common(CLI::App* sc, Overrides& o) {
  sc->add_option("-c,--config", o.config, "JSON run config");
  sc->add_option("--out", o.out, "output directory");
  sc->add_option("--seed", o.seed, "RNG seed")->each([&](const std::string&) { o.seed_set = true; });
  sc->add_option("--threads", o.threads, "worker cap (0 = all cores)");
}

void add_protocol(CLI::App* sc, Overrides& o) {
  sc->add_option("--mode", o.mode, "basic|entanglement")->check(CLI::IsMember({"basic", "entanglement"}));
  sc->add_option("--delta-log2", o.delta_log2, "soundness error 2^-x");
  sc->add_option("--epsilon", o.epsilon, "completeness target");
  sc->add_option("--rth", o.rth, "entanglement threshold r_th (per trial)");
  sc->add_option("--n-trials", o.n_trials, "trials per instance");
}

void add_input(CLI::App* sc, Overrides& o) {
  sc->add_option("--in", o.in, "directory of .qpvt trial files");
  sc->add_flag("--reference", o.reference, "calibrate on the published calibration counts");
}

qpv::cli::RunConfig resolve(const std::string& sub, const Overrides& o) {
  qpv::cli::RunConfig cfg;
  cfg.subcommand = sub;
  if (!o.config.empty()) qpv::cli::load_config_file(cfg, o.config);
  if (!o.in.empty()) cfg.in = o.in;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.mode.empty()) cfg.protocol.mode = qpv::mode_from_string(o.mode);
  if (o.delta_log2 >= 0) cfg.protocol.delta_log2 = o.delta_log2;
  if (o.epsilon >= 0) cfg.protocol.epsilon = o.epsilon;
  if (o.rth >= 0) cfg.protocol.r_th = o.rth;
  if (o.n_trials >= 0) cfg.protocol.n = static_cast<std::uint64_t>(o.n_trials);
  if (cfg.protocol.mode == qpv::Mode::basic && o.mode == "basic") cfg.protocol.r_th = 0.0;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.threads) cfg.threads = o.threads;
  if (o.minutes >= 0) cfg.simulate.duration_min = static_cast<std::uint64_t>(o.minutes);
  if (o.trials_per_file >= 0) cfg.simulate.trials_per_file = static_cast<std::uint64_t>(o.trials_per_file);
  if (!o.error_files.empty()) cfg.simulate.detector_error_files = o.error_files;
  if (o.lr_vertex >= 0) {
    cfg.adversary_json = {{"kind", "lr_vertex"}, {"vertex", o.lr_vertex}};
    cfg.adversary = qpv::AdversaryModel::lr(o.lr_vertex);
    cfg.honest.reset();
  }
  if (o.outer >= 0) cfg.geo.outer = static_cast<std::size_t>(o.outer);
  if (o.inner >= 0) cfg.geo.inner = static_cast<std::size_t>(o.inner);
  if (!o.dims.empty()) cfg.geo.dims = o.dims;
  if (o.reference) cfg.reference_calibration = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-independent quantum position verification toolkit"};
  app.set_version_flag("--version", qpv::cli::version());
  app.require_subcommand(1);

  Overrides o;
  auto* sim = app.add_subcommand("simulate", "write simulated one-minute trial files");
  add_common(sim, o);
  sim->add_option("--minutes", o.minutes, "number of one-minute files");
  sim->add_option("--trials-per-file", o.trials_per_file, "trials per file");
  sim->add_option("--error-files", o.error_files, "indices of files flagged with detector errors");
  sim->add_option("--lr-vertex", o.lr_vertex, "simulate a local deterministic adversary (0-15)")
      ->check(CLI::Range(0, 15));

  auto* fit = app.add_subcommand("fit", "maximum-likelihood calibration fit");
  add_common(fit, o);
  add_input(fit, o);

  auto* btf = app.add_subcommand("build-tf", "construct the robust test factor");
  add_common(btf, o);
  add_input(btf, o);

  auto* plan = app.add_subcommand("plan", "required trials and trade-off curves");
  add_common(plan, o);
  add_input(plan, o);
  add_protocol(plan, o);

  auto* ana = app.add_subcommand("analyze", "segment trial files into instances and evaluate them");
  add_common(ana, o);
  add_protocol(ana, o);
  ana->add_option("--in", o.in, "directory of .qpvt trial files")->required();

  auto* geo = app.add_subcommand("geometry", "target region sizes and quantum advantage");
  add_common(geo, o);
  geo->add_option("--outer", o.outer, "outer Monte Carlo samples");
  geo->add_option("--inner", o.inner, "inner Monte Carlo samples");
  geo->add_option("--dim", o.dims, "dimensions to report (1, 2, 3)")->check(CLI::Range(1, 3));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(sub, o);
    const int code = qpv::cli::run(cfg);
    if (code == qpv::cli::kExitProtocolFail) std::cerr << "qpv: at least one instance failed\n";
    if (code == qpv::cli::kExitInfeasible) std::cerr << "qpv: infeasible plan\n";
    if (code == qpv::cli::kExitError) std::cerr << "qpv: degenerate result, see report\n";
    return code;
  } catch (const qpv::infeasible_plan& e) {
    std::cerr << "qpv: infeasible plan: " << e.what() << '\n';
    return qpv::cli::kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "qpv: error: " << e.what() << '\n';
    return qpv::cli::kExitError;
  }
}
