// Drives the qpv binary end to end. QPV_CLI_PATH and QPV_CONFIG_DIR come from CMake.
#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kCli = QPV_CLI_PATH;
const fs::path kConfigs = QPV_CONFIG_DIR;

fs::path scratch_root() { return fs::temp_directory_path() / ("qpv_cli_test_" + std::to_string(::getpid())); }

// simulated files run to a few hundred MB
struct Cleanup : ::testing::Environment {
  void TearDown() override { fs::remove_all(scratch_root()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new Cleanup);

fs::path scratch(const std::string& name) {
  const auto d = scratch_root() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::string& args) {
  const std::string cmd = kCli.string() + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string cfg(const std::string& name) { return (kConfigs / name).string(); }

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Cli, VersionAndUsage) {
  EXPECT_EQ(run("--version"), 0);
  EXPECT_NE(run(""), 0);
  EXPECT_NE(run("nonsense"), 0);
}

TEST(Cli, SimulateIsDeterministic) {
  const auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
  const std::string base = "simulate -c " + cfg("simulate_honest.json") + " --minutes 2 --trials-per-file 200000 ";
  ASSERT_EQ(run(base + "--out " + a.string()), 0);
  ASSERT_EQ(run(base + "--threads 3 --out " + b.string()), 0);
  ASSERT_EQ(run(base + "--seed 99 --out " + c.string()), 0);
  for (const char* f : {"trials_00000.qpvt", "trials_00001.qpvt"}) {
    EXPECT_EQ(fs::file_size(a / f), 200000u + 14u);
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_NE(slurp(a / f), slurp(c / f)) << f;
  }
}

TEST(Cli, SimulateZeroMinutesWritesNoFiles) {
  const auto d = scratch("sim_zero");
  ASSERT_EQ(run("simulate --minutes 0 --out " + d.string()), 0);
  std::size_t trials = 0;
  for (const auto& e : fs::directory_iterator(d)) trials += e.path().extension() == ".qpvt";
  EXPECT_EQ(trials, 0u);
  EXPECT_TRUE(read_json(d / "simulate_report.json").at("files").empty());
}

TEST(Cli, PlanReferenceCalibration) {
  const auto d = scratch("plan_basic");
  ASSERT_EQ(run("plan -c " + cfg("plan_reference.json") + " --out " + d.string()), 0);
  const auto j = read_json(d / "plan.json");
  const double rt = j.at("plan").at("runtime_s").get<double>();
  EXPECT_GT(rt, 0.0);
  EXPECT_LE(rt, 120.0);
  EXPECT_TRUE(fs::exists(d / "tradeoff_basic.csv"));
  EXPECT_TRUE(fs::exists(d / "tradeoff_entanglement.csv"));

  const auto e = scratch("plan_ent");
  ASSERT_EQ(run("plan --reference -c " + cfg("analyze_entanglement.json") + " --out " + e.string()), 0);
  const auto je = read_json(e / "plan.json");
  EXPECT_LE(je.at("plan").at("runtime_s").get<double>(), 240.0);
  EXPECT_GT(je.at("plan").at("lambda_mix").get<double>(), 0.0);
}

TEST(Cli, PlanEdgeCases) {
  const auto d = scratch("plan_edge");
  ASSERT_EQ(run("plan --reference --mode basic --delta-log2 0 --out " + d.string()), 0);
  EXPECT_EQ(read_json(d / "plan.json").at("plan").at("n_trials").get<std::uint64_t>(), 0u);
  // r_th above what the calibrated source supports
  EXPECT_EQ(run("plan --reference --mode entanglement --rth 1 --out " + d.string()), 3);
  EXPECT_TRUE(read_json(d / "plan.json").at("plan").at("infeasible").get<bool>());
  EXPECT_EQ(run("plan --reference --epsilon 1.5 --out " + d.string()), 1);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  const auto d = scratch("bad_cfg");
  std::ofstream(d / "bad.json") << R"({"protocol": {"mode": "basic", "delta_log2": 64, "typo": 1}})";
  EXPECT_EQ(run("plan --reference -c " + (d / "bad.json").string() + " --out " + d.string()), 1);
  std::ofstream(d / "bad2.json") << R"({"sedd": 3})";
  EXPECT_EQ(run("simulate -c " + (d / "bad2.json").string() + " --minutes 0 --out " + d.string()), 1);
}

TEST(Cli, AnalyzeHonestBasicPasses) {
  const auto s = scratch("honest_files"), r = scratch("honest_report");
  ASSERT_EQ(run("simulate -c " + cfg("simulate_honest.json") + " --out " + s.string()), 0);
  ASSERT_EQ(run("analyze -c " + cfg("analyze_basic.json") + " --in " + s.string() + " --out " + r.string()), 0);
  const auto j = read_json(r / "report.json");
  EXPECT_EQ(j.at("summary").at("instances").get<int>(), 1);
  EXPECT_EQ(j.at("summary").at("passed").get<int>(), 1);
  const auto& inst = j.at("instances").at(0);
  EXPECT_EQ(inst.at("calibration_file_ids").size(), 10u);
  EXPECT_EQ(inst.at("instance_file_ids").at(0).get<std::string>(), "trials_00010.qpvt");
  EXPECT_TRUE(fs::exists(r / "instances.csv"));
  EXPECT_TRUE(fs::exists(r / "histograms.csv"));
}

TEST(Cli, AnalyzeLocalAdversaryFails) {
  const auto s = scratch("lr_files"), r = scratch("lr_report");
  ASSERT_EQ(run("simulate -c " + cfg("simulate_adversary.json") + " --out " + s.string()), 0);
  EXPECT_EQ(run("analyze -c " + cfg("analyze_basic.json") + " --in " + s.string() + " --out " + r.string()), 2);
  const auto j = read_json(r / "report.json");
  EXPECT_EQ(j.at("summary").at("passed").get<int>(), 0);
}

TEST(Cli, AnalyzeRejectsMissingInput) {
  const auto r = scratch("missing");
  EXPECT_EQ(run("analyze -c " + cfg("analyze_basic.json") + " --in " + (r / "nope").string() + " --out " + r.string()),
            1);
}

TEST(Cli, FitAndBuildTestFactor) {
  const auto d = scratch("fit");
  ASSERT_EQ(run("fit --reference --out " + d.string()), 0);
  EXPECT_EQ(read_json(d / "calibration.json").at("calibration").at("sigma_matched").size(), 16u);
  ASSERT_EQ(run("build-tf --reference --out " + d.string()), 0);
  const auto j = read_json(d / "test_factor.json");
  EXPECT_GT(j.at("gain_log2").get<double>(), 0.0);
}

TEST(Cli, GeometryIdealTimingIsDegenerate) {
  const auto d = scratch("geo_ideal");
  EXPECT_EQ(run("geometry -c " + cfg("ideal_timing.json") + " --out " + d.string()), 1);
  const auto j = read_json(d / "geometry.json");
  EXPECT_TRUE(j.at("degenerate").get<bool>());
  EXPECT_TRUE(j.at("advantage").at("degenerate").get<bool>());
}

TEST(Cli, GeometrySmallRun) {
  const auto d = scratch("geo");
  ASSERT_EQ(run("geometry -c " + cfg("geometry.json") + " --outer 200 --inner 20000 --dim 1 --dim 3 --out " +
                d.string()),
            0);
  const auto j = read_json(d / "geometry.json");
  EXPECT_NEAR(j.at("region").at("R_A_m").get<double>(), 157.3, 0.3);
  ASSERT_EQ(j.at("advantage").size(), 4u);
  EXPECT_NEAR(j.at("advantage").at(0).at("mean").get<double>(), 2.47, 0.1);
  EXPECT_TRUE(fs::exists(d / "advantage_histograms.csv"));
  EXPECT_TRUE(fs::exists(d / "sizes.csv"));
}
