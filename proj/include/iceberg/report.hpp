#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace iceberg {

inline constexpr std::array<double, 5> kReportedPercentiles = {50.0, 95.0, 99.0, 99.9, 99.99};

// Nearest-rank percentile of an ascending-sorted sample: the value at rank
// ceil(p/100 * n). Zero for an empty sample.
std::uint64_t nearest_rank(const std::vector<std::uint64_t>& sorted, double pct);

struct LatencySummary {
  std::uint64_t samples = 0;
  std::array<std::uint64_t, 5> percentiles{};  // ns, in kReportedPercentiles order
  std::uint64_t max = 0;
  bool operator==(const LatencySummary&) const = default;
};

// Sorts in place.
LatencySummary summarize_latencies(std::vector<std::uint64_t>& ns);

struct ThroughputRow {
  unsigned threads = 0;
  double insert = 0, positive = 0, negative = 0, remove = 0;  // ops per second
  bool operator==(const ThroughputRow&) const = default;
};

struct SpacePoint {
  double fill = 0;
  double insert_ops_per_sec = 0;
  std::uint64_t footprint_bytes = 0;
  std::uint64_t data_bytes = 0;
  double efficiency = 0;
  bool operator==(const SpacePoint&) const = default;
};

struct BenchReport {
  std::string kind;
  std::uint64_t target_slots = 0;
  std::uint64_t seed = 0;
  std::vector<ThroughputRow> rows;
  std::map<std::string, LatencySummary> latency;  // by op class
  std::array<double, 3> level_fractions{};
  double space_efficiency = 0;
  std::vector<SpacePoint> space;
  std::map<std::string, double> metrics;
  std::vector<std::string> checks_failed;

  bool ok() const { return checks_failed.empty(); }
  bool operator==(const BenchReport&) const = default;
};

enum class ReportFormat { kCsv, kJson };

std::string emit_report(const BenchReport& report, ReportFormat format);
BenchReport parse_report_json(const std::string& text);

}  // namespace iceberg
