#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bohm/app/config.hpp"
#include "bohm/equilibrium.hpp"
#include "bohm/error.hpp"
#include "bohm/io.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm::app {

namespace fs = std::filesystem;

inline constexpr const char* kManifest = "MANIFEST.sha256";
inline constexpr const char* kReports = "reports.csv";
inline constexpr const char* kSummary = "summary.txt";
inline constexpr const char* kReportsHeader = "scenario,test,statistic,threshold,passed,delta,M,seed";

/// Everything a scenario produces, before anything touches the disk.
struct ScenarioOutcome {
  std::vector<TestReport> tests;
  std::map<std::string, std::string> files;  // relative path -> contents
  std::optional<WaveFunction> final_state;
  std::vector<std::pair<std::string, std::string>> state;  // resolved parameters
  std::vector<std::string> notes;

  [[nodiscard]] bool passed() const {
    return !tests.empty() && std::all_of(tests.begin(), tests.end(), [](const TestReport& t) { return t.passed; });
  }
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) == 1, Errc::io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot write " + p.string());
  os << bytes;
  require(static_cast<bool>(os), Errc::io, "write failed for " + p.string());
}

inline std::string reports_csv(const ScenarioConfig& c, const std::vector<TestReport>& tests) {
  std::string out = std::string(kReportsHeader) + "\n";
  for (const auto& t : tests) {
    out += c.scenario + "," + t.name + "," + io::format_real(t.statistic) + "," + io::format_real(t.threshold) + "," +
           (t.passed ? "true" : "false") + "," + io::format_real(t.delta) + "," + std::to_string(t.sample_size) +
           "," + std::to_string(c.seed) + "\n";
  }
  return out;
}

inline std::string summary_text(const ScenarioConfig& c, const ScenarioOutcome& o) {
  std::ostringstream s;
  s << "scenario: " << c.scenario << "\n";
  s << "seed: " << c.seed << "\n";
  s << "ensemble: " << c.ensemble << "\n";
  for (const auto& t : o.tests) {
    s << (t.passed ? "PASS " : "FAIL ") << t.name << "  statistic=" << io::format_real(t.statistic)
      << "  threshold=" << io::format_real(t.threshold) << "  M=" << t.sample_size << "\n";
  }
  for (const auto& n : o.notes) s << "note: " << n << "\n";
  s << "result: " << (o.passed() ? "PASS" : "FAIL") << "\n";
  return s.str();
}

/// Paths of every regular file below dir, relative and sorted.
inline std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string manifest_for(const fs::path& dir) {
  std::string out;
  for (const auto& rel : listing(dir)) {
    if (rel == kManifest) continue;
    out += sha256_hex(read_file(dir / rel)) + "  " + rel + "\n";
  }
  return out;
}

/// Writes the run directory. A directory left by an earlier run (it holds a
/// manifest) is replaced; any other non-empty directory is refused.
inline void write_outputs(const fs::path& dir, const ScenarioConfig& c, const ScenarioOutcome& o) {
  if (fs::exists(dir)) {
    require(fs::is_directory(dir), Errc::config, "output path " + dir.string() + " is not a directory");
    if (fs::exists(dir / kManifest))
      fs::remove_all(dir);
    else
      require(fs::is_empty(dir), Errc::config, "output directory " + dir.string() + " is not empty");
  }
  fs::create_directories(dir);
  write_file(dir / "config_resolved.yaml", resolved_yaml(c, o.state));
  write_file(dir / kReports, reports_csv(c, o.tests));
  write_file(dir / kSummary, summary_text(c, o));
  for (const auto& [rel, bytes] : o.files) write_file(dir / rel, bytes);
  if (o.final_state) {
    std::ostringstream bin(std::ios::binary);
    io::write_snapshot(bin, *o.final_state);
    write_file(dir / "final_state.bsim", bin.str());
  }
  write_file(dir / kManifest, manifest_for(dir));
}

struct VerifyResult {
  int code = 2;
  std::string message;
};

/// Re-checks a run directory without recomputing anything: every file hashed
/// in the manifest and nothing else present, reports parse, and the summary
/// verdict agrees with the reports. 0 all tests passed, 1 some failed,
/// 2 missing or corrupt.
inline VerifyResult verify_outputs(const fs::path& dir) {
  if (!fs::is_directory(dir)) return {2, dir.string() + " is not a directory"};
  if (fs::is_empty(dir)) return {2, dir.string() + " is empty"};
  if (!fs::exists(dir / kManifest)) return {2, "no " + std::string(kManifest)};
  try {
    std::istringstream man(read_file(dir / kManifest));
    std::map<std::string, std::string> listed;
    std::string line;
    while (std::getline(man, line)) {
      if (line.empty()) continue;
      if (line.size() < 67 || line.substr(64, 2) != "  ") return {2, "malformed manifest line: " + line};
      listed[line.substr(66)] = line.substr(0, 64);
    }
    const auto present = listing(dir);
    for (const auto& rel : present) {
      if (rel == kManifest) continue;
      if (!listed.count(rel)) return {2, "file not in manifest: " + rel};
    }
    for (const auto& [rel, hash] : listed) {
      if (!fs::exists(dir / rel)) return {2, "missing file: " + rel};
      if (sha256_hex(read_file(dir / rel)) != hash) return {2, "hash mismatch: " + rel};
    }
    if (!listed.count(kReports) || !listed.count(kSummary)) return {2, "reports or summary missing from manifest"};

    std::istringstream rep(read_file(dir / kReports));
    if (!std::getline(rep, line) || line != kReportsHeader) return {2, "reports.csv has an unexpected header"};
    std::size_t rows = 0, failed = 0;
    while (std::getline(rep, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cols.push_back(cell);
      if (cols.size() != 8 || (cols[4] != "true" && cols[4] != "false")) return {2, "malformed report row: " + line};
      ++rows;
      failed += cols[4] == "false";
    }
    if (rows == 0) return {2, "reports.csv lists no tests"};
    const bool pass = failed == 0;
    const std::string summary = read_file(dir / kSummary);
    const std::string verdict = std::string("result: ") + (pass ? "PASS" : "FAIL") + "\n";
    if (summary.size() < verdict.size() || summary.compare(summary.size() - verdict.size(), verdict.size(), verdict) != 0)
      return {2, "summary verdict disagrees with reports.csv"};
    if (pass) return {0, std::to_string(rows) + " tests passed"};
    return {1, std::to_string(failed) + " of " + std::to_string(rows) + " tests failed"};
  } catch (const std::exception& e) {
    return {2, e.what()};
  }
}

}  // namespace bohm::app
