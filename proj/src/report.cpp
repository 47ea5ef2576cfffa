#include "iceberg/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace iceberg {

using nlohmann::json;

std::uint64_t nearest_rank(const std::vector<std::uint64_t>& sorted, double pct) {
  if (sorted.empty()) return 0;
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LatencySummary summarize_latencies(std::vector<std::uint64_t>& ns) {
  std::sort(ns.begin(), ns.end());
  LatencySummary s;
  s.samples = ns.size();
  for (std::size_t i = 0; i < kReportedPercentiles.size(); ++i) s.percentiles[i] = nearest_rank(ns, kReportedPercentiles[i]);
  s.max = ns.empty() ? 0 : ns.back();
  return s;
}

void to_json(json& j, const LatencySummary& s) {
  j = json{{"samples", s.samples}, {"p50", s.percentiles[0]}, {"p95", s.percentiles[1]}, {"p99", s.percentiles[2]},
           {"p99.9", s.percentiles[3]}, {"p99.99", s.percentiles[4]}, {"max", s.max}};
}

void from_json(const json& j, LatencySummary& s) {
  j.at("samples").get_to(s.samples);
  j.at("p50").get_to(s.percentiles[0]);
  j.at("p95").get_to(s.percentiles[1]);
  j.at("p99").get_to(s.percentiles[2]);
  j.at("p99.9").get_to(s.percentiles[3]);
  j.at("p99.99").get_to(s.percentiles[4]);
  j.at("max").get_to(s.max);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ThroughputRow, threads, insert, positive, negative, remove)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SpacePoint, fill, insert_ops_per_sec, footprint_bytes, data_bytes, efficiency)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BenchReport, kind, target_slots, seed, rows, latency, level_fractions,
                                   space_efficiency, space, metrics, checks_failed)

namespace {

std::string csv(const BenchReport& r) {
  std::ostringstream os;
  os.precision(12);
  if (r.kind == "space-sweep") {
    os << "fill,insert,footprint_bytes,data_bytes,efficiency\n";
    for (const auto& p : r.space) {
      os << p.fill << ',' << p.insert_ops_per_sec << ',' << p.footprint_bytes << ',' << p.data_bytes << ','
         << p.efficiency << '\n';
    }
    return os.str();
  }
  os << "threads,insert,positive,negative,remove\n";
  for (const auto& row : r.rows) {
    os << row.threads << ',' << row.insert << ',' << row.positive << ',' << row.negative << ',' << row.remove << '\n';
  }
  return os.str();
}

}  // namespace

std::string emit_report(const BenchReport& report, ReportFormat format) {
  if (format == ReportFormat::kCsv) return csv(report);
  return json(report).dump(2) + "\n";
}

BenchReport parse_report_json(const std::string& text) { return json::parse(text).get<BenchReport>(); }

}  // namespace iceberg
