#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "qpv/reference.hpp"
#include "qpv/simulator.hpp"
#include "qpv/trialdata.hpp"

using namespace qpv;

namespace {

std::vector<TrialRecord> random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<TrialRecord> out(n);
  for (auto& r : out) {
    const auto bits = g();
    r = {static_cast<std::uint8_t>(1 + (bits & 1)), static_cast<std::uint8_t>(1 + ((bits >> 1) & 1)),
         static_cast<std::uint8_t>(1 + ((bits >> 2) & 1)), static_cast<std::uint8_t>(1 + ((bits >> 3) & 1)),
         static_cast<std::uint8_t>(1 + ((bits >> 4) & 1))};
  }
  return out;
}

bool same(const TrialRecord& a, const TrialRecord& b) {
  return a.mqa == b.mqa && a.oqa == b.oqa && a.mqp == b.mqp && a.zqa == b.zqa && a.zqb == b.zqb;
}

}  // namespace

TEST(TrialRecord, AllLowEncodesToZero) {
  const TrialRecord r{1, 1, 1, 1, 1};
  EXPECT_EQ(r.encode(), 0);
  std::stringstream ss;
  const std::vector<TrialRecord> v{r};
  write_trials(v, false, ss);
  const auto f = read_trial_file(ss);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.payload[0], 0);
}

TEST(TrialRecord, BitLayout) {
  // bit0 mqa, bit1 oqa, bit2 mqp, bit3 zqa, bit4 zqb
  EXPECT_EQ((TrialRecord{2, 1, 1, 1, 1}.encode()), 0x01);
  EXPECT_EQ((TrialRecord{1, 2, 1, 1, 1}.encode()), 0x02);
  EXPECT_EQ((TrialRecord{1, 1, 2, 1, 1}.encode()), 0x04);
  EXPECT_EQ((TrialRecord{1, 1, 1, 2, 1}.encode()), 0x08);
  EXPECT_EQ((TrialRecord{1, 1, 1, 1, 2}.encode()), 0x10);
  for (int b = 0; b < 32; ++b) EXPECT_EQ(TrialRecord::decode(static_cast<std::uint8_t>(b)).encode(), b);
  // a byte with unused high bits set can only come from a damaged file
  EXPECT_THROW(TrialRecord::decode(0x20), io_error);
}

TEST(TrialRecord, CellMatchesIndexHelpers) {
  for (int b = 0; b < 32; ++b) {
    const auto r = TrialRecord::decode(static_cast<std::uint8_t>(b));
    EXPECT_EQ(r.cell(), settings_index(r.mqa, r.mqp) * kNumOutcomes + outcome_index(r.oqa, r.zqa, r.zqb));
    EXPECT_EQ(kByteToCell[static_cast<std::size_t>(b)], r.cell());
    EXPECT_TRUE(same(TrialRecord::from_cell(r.cell() / kNumOutcomes, r.cell() % kNumOutcomes), r));
  }
}

TEST(TrialFile, EmptyFileRoundTrips) {
  std::stringstream ss;
  write_trials({}, false, ss);
  const auto f = read_trial_file(ss);
  EXPECT_EQ(f.size(), 0u);
  EXPECT_FALSE(f.detector_error);
}

TEST(TrialFile, MillionRecordsRoundTrip) {
  const auto recs = random_records(1000000, 42);
  for (bool flag : {false, true}) {
    std::stringstream ss;
    write_trials(recs, flag, ss);
    EXPECT_EQ(ss.str().size(), TrialFile::kHeaderSize + recs.size());
    const auto f = read_trial_file(ss);
    EXPECT_EQ(f.detector_error, flag);
    const auto back = f.records();
    ASSERT_EQ(back.size(), recs.size());
    EXPECT_TRUE(std::equal(back.begin(), back.end(), recs.begin(), same));
  }
}

TEST(TrialFile, PathRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "qpv_test_trialdata";
  std::filesystem::create_directories(dir);
  const auto recs = random_records(1000, 3);
  const auto f = TrialFile::from_records(recs, true);
  write_trial_file(f, (dir / "a.qpvt").string());
  const auto g = read_trial_file((dir / "a.qpvt").string());
  EXPECT_EQ(g.payload, f.payload);
  EXPECT_TRUE(g.detector_error);
  std::filesystem::remove_all(dir);
}

TEST(TrialFile, RejectsCorruptInput) {
  const auto recs = random_records(10, 1);
  std::stringstream ss;
  write_trials(recs, false, ss);
  const std::string good = ss.str();

  auto read = [](std::string s) {
    std::stringstream is(s);
    return read_trial_file(is);
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(read(bad_magic), io_error);
  std::string bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(read(bad_version), io_error);
  EXPECT_THROW(read(good.substr(0, good.size() - 1)), io_error);
  std::string high_bits = good;
  high_bits.back() = static_cast<char>(0x80);
  EXPECT_THROW(read(high_bits), std::exception);
  EXPECT_THROW(read(good.substr(0, 7)), io_error);
}

TEST(TrialFile, FromRecordsRejectsInvalidField) {
  std::vector<TrialRecord> v{{1, 3, 1, 1, 1}};
  EXPECT_THROW(TrialFile::from_records(v, false), invalid_input);
}

TEST(TrialFile, CsvExport) {
  const std::vector<TrialRecord> v{{1, 2, 1, 2, 2}, {2, 1, 2, 1, 1}};
  std::ostringstream os;
  export_csv(TrialFile::from_records(v, false), os);
  EXPECT_EQ(os.str(), "mqa,oqa,mqp,zqa,zqb\n1,2,1,2,2\n2,1,2,1,1\n");
}

TEST(Counts, EmptyIsZero) {
  const auto c = aggregate_counts(std::span<const TrialRecord>{});
  EXPECT_EQ(c.total(), 0u);
  for (auto v : c.n) EXPECT_EQ(v, 0u);
}

TEST(Counts, OnePerCell) {
  std::vector<TrialRecord> v;
  for (int cell = 0; cell < kNumCells; ++cell) v.push_back(TrialRecord::from_cell(cell / kNumOutcomes, cell % kNumOutcomes));
  const auto c = aggregate_counts(v);
  for (auto x : c.n) EXPECT_EQ(x, 1u);
  EXPECT_EQ(c.total(), 32u);
  for (int z = 0; z < 4; ++z) EXPECT_EQ(c.settings_total(z), 8u);
}

TEST(Counts, PermutationInvariantAndLimit) {
  auto v = random_records(5000, 9);
  const auto a = aggregate_counts(v);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(1));
  const auto b = aggregate_counts(v);
  EXPECT_EQ(a.n, b.n);
  const auto f = TrialFile::from_records(v, false);
  EXPECT_EQ(aggregate_counts(f).n, b.n);
  const auto head = aggregate_counts(f, 100);
  EXPECT_EQ(head.total(), 100u);
  EXPECT_EQ(head.n, aggregate_counts(std::span<const TrialRecord>(v.data(), 100)).n);
}

TEST(MatchFrequencies, UniformIsQuarter) {
  CountsTable c;
  for (int z = 0; z < 4; ++z)
    for (int a = 1; a <= 2; ++a)
      for (int b = 1; b <= 2; ++b) c.at(z, outcome_index(a, b, b)) = 100;
  const auto f = match_frequencies(c);
  for (double p : f.p) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(MatchFrequencies, ReferenceCellAndRowSums) {
  const auto c = reference::calibration_counts();
  const auto f = match_frequencies(c);
  EXPECT_NEAR(f.at(0, 0), 18764031.0 / (18764031.0 + 2339 + 2390 + 4794), 1e-15);
  for (int z = 0; z < 4; ++z) EXPECT_NEAR(f.row_sum(z), 1.0, 1e-12);
}

TEST(MatchFrequencies, PointMassAndDegenerate) {
  CountsTable c;
  c.at(2, outcome_index(2, 1, 1)) = 1;
  for (int z = 0; z < 4; ++z)
    if (z != 2) c.at(z, outcome_index(1, 1, 1)) = 5;
  const auto f = match_frequencies(c);
  EXPECT_EQ(f.at(2, matched_index(2, 1)), 1.0);
  EXPECT_EQ(f.at(2, matched_index(1, 1)), 0.0);
  CountsTable empty_row;
  empty_row.at(0, 0) = 1;
  EXPECT_THROW(match_frequencies(empty_row), degenerate_input);
}

TEST(Counts, ResampledReferenceWithinFiveSigma) {
  // Multinomial draws at the reference proportions stay within 5σ per cell.
  const auto ref = reference::calibration_counts();
  const double total = static_cast<double>(ref.total());
  std::array<double, kNumCells> p{};
  for (int i = 0; i < kNumCells; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(ref.n[static_cast<std::size_t>(i)]) / total;
  ConditionalDistribution3 s3;
  std::array<double, 4> zs{};
  for (int z = 0; z < 4; ++z) zs[static_cast<std::size_t>(z)] = static_cast<double>(ref.settings_total(z)) / total;
  const JointSettingsDistribution nu(zs, 1e-9);
  for (int z = 0; z < 4; ++z)
    for (int o = 0; o < 8; ++o) s3.p[static_cast<std::size_t>(z * 8 + o)] = p[static_cast<std::size_t>(z * 8 + o)] / zs[static_cast<std::size_t>(z)];
  const std::uint64_t n = 2000000;
  const auto recs = sample_trials(s3, nu, n, 77, 1);
  const auto c = aggregate_counts(recs);
  for (int i = 0; i < kNumCells; ++i) {
    const double pi = p[static_cast<std::size_t>(i)];
    const double mean = pi * static_cast<double>(n), sd = std::sqrt(static_cast<double>(n) * pi * (1 - pi));
    EXPECT_LE(std::abs(static_cast<double>(c.n[static_cast<std::size_t>(i)]) - mean), 5 * sd + 1e-9) << "cell " << i;
  }
}
