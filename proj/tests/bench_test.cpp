#include <gtest/gtest.h>

#include "iceberg/bench.hpp"
#include "iceberg/table.hpp"

using namespace iceberg;

namespace {

WorkloadSpec spec(const std::string& kind, std::uint64_t slots = 1 << 16) {
  WorkloadSpec w;
  w.kind = kind;
  w.target_slots = slots;
  w.threads = {1};
  return w;
}

}  // namespace

TEST(Bench, SlotsToBlocks) {
  EXPECT_EQ(log_blocks_for_slots(1 << 16), 10u);
  EXPECT_EQ(log_blocks_for_slots(1 << 20), 14u);
  EXPECT_EQ(log_blocks_for_slots(1), 1u);
}

TEST(Bench, MicroStructure) {
  const auto r = run_micro(spec("micro"));
  EXPECT_TRUE(r.ok()) << r.checks_failed.front();
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].threads, 1u);
  EXPECT_GT(r.rows[0].insert, 0);
  EXPECT_GT(r.rows[0].positive, 0);
  EXPECT_GT(r.rows[0].negative, 0);
  EXPECT_GT(r.rows[0].remove, 0);
  EXPECT_NEAR(r.level_fractions[0] + r.level_fractions[1] + r.level_fractions[2], 1.0, 1e-9);
  for (const char* op : {"insert", "positive", "negative", "remove"}) {
    const auto& l = r.latency.at(op);
    EXPECT_GT(l.samples, 0u);
    for (std::size_t i = 1; i < l.percentiles.size(); ++i) EXPECT_LE(l.percentiles[i - 1], l.percentiles[i]);
    EXPECT_LE(l.percentiles.back(), l.max);
  }
  EXPECT_GT(r.metrics.at("negative_absent_fraction"), 0.9999);
  // Roughly occupied-slots / 254 per negative query at about 0.92 level-1 fill.
  EXPECT_NEAR(r.metrics.at("level1_data_probes_per_negative"), 0.92 * 64 / 254, 0.05);
}

TEST(Bench, MicroOneRowPerThreadCount) {
  auto w = spec("micro", 1 << 13);
  w.threads = {1, 2};
  const auto r = run_micro(w);
  EXPECT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].threads, 2u);
}

TEST(Bench, YcsbCDoesNotWrite) {
  const auto r = run_ycsb(spec("ycsb-c", 1 << 12));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.metrics.at("run_words_stored"), 0.0);
  EXPECT_FALSE(r.latency.count("insert"));
}

TEST(Bench, YcsbALoadDoublesAndRunDoubles) {
  const auto r = run_ycsb(spec("ycsb-a", 1 << 13));
  EXPECT_TRUE(r.ok()) << (r.checks_failed.empty() ? "" : r.checks_failed.front());
  EXPECT_GE(r.metrics.at("generation_after_load"), 2.0);
  EXPECT_GE(r.metrics.at("doublings_in_run"), 1.0);
  EXPECT_EQ(r.metrics.at("run_ops"), 2.0 * r.metrics.at("loaded_keys"));
  // A blocking doubling shows up in the insert tail.
  EXPECT_GE(r.metrics.at("insert_max_over_p999"), 10.0);
}

TEST(Bench, YcsbBShape) {
  const auto r = run_ycsb(spec("ycsb-b", 1 << 10));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.metrics.at("run_ops"), 20.0 * r.metrics.at("loaded_keys"));
}

TEST(Bench, UnknownYcsbRejected) {
  EXPECT_THROW(run_ycsb(spec("ycsb-z")), std::invalid_argument);
}

TEST(Bench, SpaceSweep) {
  const auto r = run_space_sweep(spec("space-sweep"));
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.space.size(), 19u);
  EXPECT_NEAR(r.space.front().fill, 0.05, 1e-12);
  EXPECT_NEAR(r.space.back().fill, 0.95, 1e-12);
  EXPECT_GE(r.space_efficiency, 0.85);
  EXPECT_LT(r.space.front().efficiency, 0.06);
  for (std::size_t i = 1; i < r.space.size(); ++i) {
    EXPECT_GE(r.space[i].footprint_bytes, r.space[i - 1].footprint_bytes);
  }
}

TEST(Bench, DistributionDeterministicPerSeed) {
  const auto a = run_dist(spec("dist"));
  const auto b = run_dist(spec("dist"));
  EXPECT_EQ(a.level_fractions, b.level_fractions);
  EXPECT_NEAR(a.level_fractions[0], 0.912, 0.02);
  EXPECT_NEAR(a.level_fractions[1], 0.087, 0.02);
}

TEST(Bench, YcsbShapedDistribution) {
  const auto r = run_dist(spec("dist-ycsb"));
  EXPECT_EQ(r.level_fractions[2], 0.0);
  EXPECT_NEAR(r.level_fractions[1], 0.04, 0.02);
}

TEST(Bench, ReportedLevelsMatchScan) {
  TableConfig c;
  c.log_initial_blocks = 8;
  c.auto_resize = false;
  Table t(c);
  for (Key k = 1; t.load_factor() < 0.95; ++k) t.insert(k * 0x9E3779B97F4A7C15ULL, 1);
  LevelDistribution scan;
  t.for_each([&](Key, Value, const Location& loc) {
    if (loc.level == Level::kOne) ++scan.level1;
    if (loc.level == Level::kTwo) ++scan.level2;
    if (loc.level == Level::kThree) ++scan.level3;
  });
  const auto d = t.level_distribution();
  EXPECT_EQ(d.level1, scan.level1);
  EXPECT_EQ(d.level2, scan.level2);
  EXPECT_EQ(d.level3, scan.level3);
}
