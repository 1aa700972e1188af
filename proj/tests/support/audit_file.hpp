#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sflda/solver.hpp"

// Per-process certificate tallies, written next to the build so that one
// acceptance check can aggregate every solve of the test run.
struct AuditTally {
  std::uint64_t converged = 0, nonconverged = 0, failed_monotone = 0, failed_kkt = 0, failed_normalization = 0;
  AuditTally& operator+=(const AuditTally& o) {
    converged += o.converged;
    nonconverged += o.nonconverged;
    failed_monotone += o.failed_monotone;
    failed_kkt += o.failed_kkt;
    failed_normalization += o.failed_normalization;
    return *this;
  }
};

inline AuditTally tally_from_counts(const sflda::SolveAudit::Counts& c) {
  return {c.converged, c.nonconverged, c.failed_monotone, c.failed_kkt, c.failed_normalization};
}

inline std::filesystem::path audit_path(const std::string& name) {
  return std::filesystem::path(SFLDA_AUDIT_DIR) / (name + ".audit");
}

inline void write_audit(const std::string& name, const AuditTally& t) {
  std::error_code ec;
  std::filesystem::create_directories(SFLDA_AUDIT_DIR, ec);
  std::ofstream out(audit_path(name));
  out << t.converged << ' ' << t.nonconverged << ' ' << t.failed_monotone << ' ' << t.failed_kkt << ' '
      << t.failed_normalization << '\n';
}

inline std::optional<AuditTally> read_audit(const std::string& name) {
  std::ifstream in(audit_path(name));
  AuditTally t;
  if (!(in >> t.converged >> t.nonconverged >> t.failed_monotone >> t.failed_kkt >> t.failed_normalization)) return std::nullopt;
  return t;
}

inline std::vector<std::string> expected_audit_sources() {
  std::vector<std::string> names;
  for (const char* u : {"core_data", "scatter", "shrinkage", "solver", "theory", "clustering", "pipeline", "simulate", "cli"})
    names.push_back(std::string("test_") + u);
  for (int c : {1, 2, 3, 4, 5, 7, 8, 9}) names.push_back("acceptance_" + std::to_string(c));
  return names;
}
