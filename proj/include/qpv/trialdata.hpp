#pragma once

// Trial records, counts tables and the binary trial file format.
//
// File layout (all multi-byte integers little-endian):
//   "QPVT" | version u8 (0x01) | flags u8 (bit0 = detector_error) | count u64 | payload
// Payload: one byte per trial, bits 0..4 = mqa-1, oqa-1, mqp-1, zqa-1, zqb-1.

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qpv/core.hpp"

namespace qpv {

struct TrialRecord {
  std::uint8_t mqa = 1;
  std::uint8_t oqa = 1;
  std::uint8_t mqp = 1;
  std::uint8_t zqa = 1;
  std::uint8_t zqb = 1;

  bool valid() const {
    return is_binary(mqa) && is_binary(oqa) && is_binary(mqp) && is_binary(zqa) && is_binary(zqb);
  }

  int settings() const { return settings_index(mqa, mqp); }
  int outcome() const { return outcome_index(oqa, zqa, zqb); }
  /// Flat cell index z*8 + o, as used by CountsTable and TestFactor.
  int cell() const { return settings() * kNumOutcomes + outcome(); }

  std::uint8_t encode() const {
    return static_cast<std::uint8_t>((mqa - 1) | (oqa - 1) << 1 | (mqp - 1) << 2 | (zqa - 1) << 3 |
                                     (zqb - 1) << 4);
  }

  static TrialRecord decode(std::uint8_t byte) {
    if (byte & 0xE0) throw io_error("trial byte has nonzero high bits");
    return {static_cast<std::uint8_t>(1 + (byte & 1)), static_cast<std::uint8_t>(1 + ((byte >> 1) & 1)),
            static_cast<std::uint8_t>(1 + ((byte >> 2) & 1)), static_cast<std::uint8_t>(1 + ((byte >> 3) & 1)),
            static_cast<std::uint8_t>(1 + ((byte >> 4) & 1))};
  }

  static TrialRecord from_cell(int z, int o) {
    auto s = settings_from_index(z);
    auto out = outcome_from_index(o);
    return {static_cast<std::uint8_t>(s.mqa), static_cast<std::uint8_t>(out.oqa), static_cast<std::uint8_t>(s.mqp),
            static_cast<std::uint8_t>(out.zqa), static_cast<std::uint8_t>(out.zqb)};
  }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Packed payload byte -> cell index. Trial bytes are not in cell order, so
/// hot loops go through this table.
inline constexpr std::array<std::uint8_t, 32> kByteToCell = [] {
  std::array<std::uint8_t, 32> t{};
  for (int b = 0; b < 32; ++b) {
    int mqa = 1 + (b & 1), oqa = 1 + ((b >> 1) & 1), mqp = 1 + ((b >> 2) & 1);
    int zqa = 1 + ((b >> 3) & 1), zqb = 1 + ((b >> 4) & 1);
    t[static_cast<std::size_t>(b)] =
        static_cast<std::uint8_t>(settings_index(mqa, mqp) * kNumOutcomes + outcome_index(oqa, zqa, zqb));
  }
  return t;
}();

/// n(oqa, zqa, zqb; mqa, mqp), flat [z*8 + o].
struct CountsTable {
  std::array<std::uint64_t, kNumCells> n{};

  std::uint64_t& at(int z, int o) { return n[static_cast<std::size_t>(z * kNumOutcomes + o)]; }
  std::uint64_t at(int z, int o) const { return n[static_cast<std::size_t>(z * kNumOutcomes + o)]; }
  std::uint64_t operator()(int oqa, int zqa, int zqb, int mqa, int mqp) const {
    return at(settings_index(mqa, mqp), outcome_index(oqa, zqa, zqb));
  }

  std::uint64_t settings_total(int z) const {
    std::uint64_t s = 0;
    for (int o = 0; o < kNumOutcomes; ++o) s += at(z, o);
    return s;
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : n) s += v;
    return s;
  }

  /// Count of (zqa = zqb, oqa, oqp = zqa) in a settings row.
  std::uint64_t matched(int z, int c) const {
    auto [oqa, oqp] = matched_from_index(c);
    return at(z, outcome_index(oqa, oqp, oqp));
  }

  CountsTable& operator+=(const CountsTable& o) {
    for (std::size_t i = 0; i < n.size(); ++i) n[i] += o.n[i];
    return *this;
  }
  friend CountsTable operator+(CountsTable a, const CountsTable& b) { return a += b; }
  friend bool operator==(const CountsTable&, const CountsTable&) = default;
};

struct TrialFile {
  static constexpr std::array<char, 4> kMagic{'Q', 'P', 'V', 'T'};
  static constexpr std::uint8_t kVersion = 0x01;
  static constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 8;
  static constexpr double kNominalSeconds = 60.0;

  bool detector_error = false;
  std::vector<std::uint8_t> payload;  // packed trial bytes

  std::size_t size() const { return payload.size(); }
  TrialRecord record(std::size_t i) const { return TrialRecord::decode(payload[i]); }

  std::vector<TrialRecord> records() const {
    std::vector<TrialRecord> out;
    out.reserve(payload.size());
    for (auto b : payload) out.push_back(TrialRecord::decode(b));
    return out;
  }

  static TrialFile from_records(std::span<const TrialRecord> records, bool detector_error) {
    TrialFile f;
    f.detector_error = detector_error;
    f.payload.reserve(records.size());
    for (const auto& r : records) {
      if (!r.valid()) throw invalid_input("trial record field outside {1,2}");
      f.payload.push_back(r.encode());
    }
    return f;
  }
};

namespace detail {

inline void put_u64le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint64_t get_u64le(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void write_trial_file(const TrialFile& f, std::ostream& os) {
  os.write(TrialFile::kMagic.data(), 4);
  const char ver = static_cast<char>(TrialFile::kVersion);
  const char flags = static_cast<char>(f.detector_error ? 1 : 0);
  os.write(&ver, 1);
  os.write(&flags, 1);
  detail::put_u64le(os, f.payload.size());
  os.write(reinterpret_cast<const char*>(f.payload.data()), static_cast<std::streamsize>(f.payload.size()));
  if (!os) throw io_error("failed writing trial file");
}

/// Encodes and writes `records`; returns the file that was written.
inline TrialFile write_trials(std::span<const TrialRecord> records, bool detector_error, std::ostream& os) {
  auto f = TrialFile::from_records(records, detector_error);
  write_trial_file(f, os);
  return f;
}

inline void write_trial_file(const TrialFile& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open for writing: " + path);
  write_trial_file(f, os);
  os.flush();
  if (!os) throw io_error("failed writing: " + path);
}

inline TrialFile read_trial_file(std::istream& is) {
  unsigned char hdr[TrialFile::kHeaderSize];
  is.read(reinterpret_cast<char*>(hdr), TrialFile::kHeaderSize);
  if (is.gcount() != static_cast<std::streamsize>(TrialFile::kHeaderSize)) throw io_error("truncated trial header");
  for (int i = 0; i < 4; ++i) {
    if (hdr[i] != static_cast<unsigned char>(TrialFile::kMagic[static_cast<std::size_t>(i)]))
      throw io_error("bad trial file magic");
  }
  if (hdr[4] != TrialFile::kVersion) throw io_error("unsupported trial file version");
  if (hdr[5] & 0xFE) throw io_error("unknown trial file flags");
  TrialFile f;
  f.detector_error = (hdr[5] & 1) != 0;
  const std::uint64_t count = detail::get_u64le(hdr + 6);
  f.payload.resize(count);
  is.read(reinterpret_cast<char*>(f.payload.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::uint64_t>(is.gcount()) != count) throw io_error("truncated trial payload");
  for (auto b : f.payload) {
    if (b & 0xE0) throw io_error("trial byte has nonzero high bits");
  }
  return f;
}

inline TrialFile read_trial_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  return read_trial_file(is);
}

inline void export_csv(const TrialFile& f, std::ostream& os) {
  os << "mqa,oqa,mqp,zqa,zqb\n";
  for (auto b : f.payload) {
    auto r = TrialRecord::decode(b);
    os << int(r.mqa) << ',' << int(r.oqa) << ',' << int(r.mqp) << ',' << int(r.zqa) << ',' << int(r.zqb) << '\n';
  }
}

inline CountsTable aggregate_counts(std::span<const TrialRecord> records) {
  CountsTable t;
  for (const auto& r : records) {
    if (!r.valid()) throw invalid_input("trial record field outside {1,2}");
    ++t.n[static_cast<std::size_t>(r.cell())];
  }
  return t;
}

inline CountsTable aggregate_counts(const TrialFile& f, std::size_t limit = SIZE_MAX) {
  CountsTable t;
  const std::size_t m = std::min(limit, f.payload.size());
  for (std::size_t i = 0; i < m; ++i) ++t.n[kByteToCell[f.payload[i]]];
  return t;
}

/// Empirical f̃(oqa, oqp | mqa, mqp) from the zqa = zqb cells.
inline ConditionalDistribution2 match_frequencies(const CountsTable& counts) {
  ConditionalDistribution2 f;
  for (int z = 0; z < kNumSettings; ++z) {
    std::uint64_t tot = 0;
    for (int c = 0; c < kNumMatched; ++c) tot += counts.matched(z, c);
    if (tot == 0) throw degenerate_input("settings pair has no matched counts");
    for (int c = 0; c < kNumMatched; ++c) {
      f.at(z, c) = static_cast<double>(counts.matched(z, c)) / static_cast<double>(tot);
    }
  }
  return f;
}

}  // namespace qpv
