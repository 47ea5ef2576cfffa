#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "iceberg/report.hpp"
#include "oracles.hpp"

using namespace iceberg;

namespace {

int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Percentiles, MatchSortOracle) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 2u, 7u, 100u, 1001u, 12345u}) {
    std::vector<std::uint64_t> v(n);
    for (auto& x : v) x = rng() % 100000;
    auto sorted = v;
    const auto summary = summarize_latencies(sorted);
    EXPECT_EQ(summary.samples, n);
    for (std::size_t i = 0; i < kReportedPercentiles.size(); ++i) {
      EXPECT_EQ(summary.percentiles[i], oracle::percentile_by_sort(v, kReportedPercentiles[i]));
    }
    EXPECT_EQ(summary.max, *std::max_element(v.begin(), v.end()));
  }
}

TEST(Percentiles, SmallExamples) {
  std::vector<std::uint64_t> v{15, 20, 35, 40, 50};
  EXPECT_EQ(nearest_rank(v, 50), 35u);
  EXPECT_EQ(nearest_rank(v, 30), 20u);
  EXPECT_EQ(nearest_rank(v, 100), 50u);
  EXPECT_EQ(nearest_rank({}, 50), 0u);
}

TEST(Emit, EmptyReportIsHeaderOnlyCsv) {
  BenchReport r;
  EXPECT_EQ(emit_report(r, ReportFormat::kCsv), "threads,insert,positive,negative,remove\n");
}

TEST(Emit, CsvRowPerThreadConfig) {
  BenchReport r;
  r.kind = "micro";
  for (unsigned t : {1u, 2u, 4u}) r.rows.push_back({t, 1.5 * t, 2.0, 3.0, 4.0});
  const auto csv = emit_report(r, ReportFormat::kCsv);
  EXPECT_EQ(line_count(csv), 4);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
}

TEST(Emit, SpaceSweepCsv) {
  BenchReport r;
  r.kind = "space-sweep";
  r.space.push_back({0.05, 1e6, 1000, 50, 0.05});
  const auto csv = emit_report(r, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fill,insert,footprint_bytes,data_bytes,efficiency");
  EXPECT_EQ(line_count(csv), 2);
}

TEST(Emit, JsonRoundTrip) {
  BenchReport r;
  r.kind = "ycsb-a";
  r.target_slots = 1 << 16;
  r.seed = 9;
  r.rows.push_back({4, 1e6, 2e6, 3e6, 4e6});
  r.latency["insert"] = {100, {1, 2, 3, 4, 5}, 99};
  r.level_fractions = {0.9, 0.1, 0.0};
  r.space_efficiency = 0.88;
  r.space.push_back({0.5, 1.0, 2, 3, 0.25});
  r.metrics["doublings_in_run"] = 2;
  r.checks_failed.push_back("x");
  const auto text = emit_report(r, ReportFormat::kJson);
  EXPECT_EQ(parse_report_json(text), r);
  EXPECT_EQ(emit_report(parse_report_json(text), ReportFormat::kJson), text);
}
