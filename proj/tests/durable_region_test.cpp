#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <unistd.h>

#include "iceberg/durable_region.hpp"
#include "iceberg/store.hpp"
#include "iceberg/table.hpp"

using namespace iceberg;

namespace {

DurableRegion small_region() {
  auto r = DurableRegion::shadow("test", 1 << 16);
  r.resize(256);
  return r;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("iceberg-test-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(DurableRegion, StoreThenLoad) {
  auto r = small_region();
  r.store_word(8, 42);
  r.store_pair(16, 1, 2);
  EXPECT_EQ(r.load_word(8), 42u);
  EXPECT_EQ(r.load_pair(16), std::make_pair(std::uint64_t{1}, std::uint64_t{2}));
}

TEST(DurableRegion, UnflushedStoreLostOnDropAll) {
  auto r = small_region();
  r.store_word(0, 7);
  r.flush_fence(0, 8);
  r.store_word(0, 9);
  const auto c = r.crash(Tearing::kDropAll, 1);
  EXPECT_EQ(c.load_word(0), 7u);
}

TEST(DurableRegion, FlushedStoreSurvives) {
  auto r = small_region();
  r.store_word(64, 5);
  r.flush_fence(64, 8);
  EXPECT_EQ(r.dirty_line_count(), 0u);
  const auto c = r.crash(Tearing::kDropAll, 1);
  EXPECT_EQ(c.load_word(64), 5u);
}

TEST(DurableRegion, CleanCrashIsIdentity) {
  auto r = small_region();
  for (std::size_t i = 0; i < 256; i += 8) r.store_word(i, i * 3);
  r.flush_fence(0, 256);
  const auto c = r.crash(Tearing::kWordSubset, 99);
  for (std::size_t i = 0; i < 256; i += 8) EXPECT_EQ(c.load_word(i), i * 3);
}

TEST(DurableRegion, FlushOfCleanLineChangesNothing) {
  auto r = small_region();
  r.flush_fence(0, 64);
  EXPECT_EQ(r.dirty_line_count(), 0u);
  EXPECT_EQ(r.load_word(0), 0u);
}

TEST(DurableRegion, FlushCoversOnlyItsLines) {
  auto r = small_region();
  r.store_word(0, 1);
  r.store_word(128, 2);
  r.flush_fence(0, 8);
  EXPECT_EQ(r.dirty_words(), std::vector<std::size_t>{128});
  const auto c = r.crash(Tearing::kDropAll, 0);
  EXPECT_EQ(c.load_word(0), 1u);
  EXPECT_EQ(c.load_word(128), 0u);
}

// A 16-byte store tears into its two words: all four combinations occur.
TEST(DurableRegion, PairTearsIntoFourStates) {
  auto r = small_region();
  r.store_pair(32, 10, 20);
  r.flush_fence(32, 16);
  r.store_pair(32, 11, 21);
  ASSERT_EQ(r.dirty_words(), (std::vector<std::size_t>{32, 40}));
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  for (int mask = 0; mask < 4; ++mask) {
    const auto c = r.crash_with([mask](std::size_t off) { return off == 32 ? (mask & 1) : (mask & 2); });
    seen.insert(c.load_pair(32));
  }
  const std::set<std::pair<std::uint64_t, std::uint64_t>> want{{10, 20}, {11, 20}, {10, 21}, {11, 21}};
  EXPECT_EQ(seen, want);
}

TEST(DurableRegion, WordSubsetOnlyMixesLoggedWords) {
  auto r = small_region();
  r.store_word(0, 1);
  r.store_word(8, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = r.crash(Tearing::kWordSubset, seed);
    EXPECT_TRUE(c.load_word(0) == 0 || c.load_word(0) == 1);
    EXPECT_TRUE(c.load_word(8) == 0 || c.load_word(8) == 2);
    EXPECT_EQ(c.load_word(16), 0u);
  }
}

TEST(DurableRegion, StatsCountStoresAndFlushes) {
  auto r = small_region();
  r.reset_stats();
  r.store_pair(0, 1, 2);
  r.flush_fence(0, 16);
  const auto s = r.stats();
  EXPECT_EQ(s.stores, 1u);
  EXPECT_EQ(s.words_stored, 2u);
  EXPECT_EQ(s.flushes, 1u);
  EXPECT_EQ(s.lines_flushed, 1u);
}

TEST(DurableRegion, InjectedFlushFailure) {
  auto r = small_region();
  r.fail_flushes_after(1);
  r.store_word(0, 1);
  EXPECT_NO_THROW(r.flush_fence(0, 8));
  r.store_word(0, 2);
  EXPECT_THROW(r.flush_fence(0, 8), RegionError);
  r.fail_flushes_after(-1);
  EXPECT_NO_THROW(r.flush_fence(0, 8));
}

TEST(DurableRegion, MisalignedStoreRejected) {
  auto r = small_region();
  EXPECT_THROW(r.store_word(4, 1), RegionError);
  EXPECT_THROW(r.store_pair(8, 1, 2), RegionError);
  EXPECT_THROW(r.store_word(256, 1), RegionError);
}

TEST(DurableRegion, ResizeExposesZeros) {
  auto r = small_region();
  r.store_word(200, 9);
  r.flush_fence(200, 8);
  r.resize(128);
  r.resize(512);
  EXPECT_EQ(r.load_word(200), 0u);
  EXPECT_EQ(r.load_word(504), 0u);
}

TEST(DurableRegion, FileBackendPersistsAcrossReopen) {
  const auto dir = scratch_dir("region");
  std::filesystem::create_directories(dir);
  {
    auto r = DurableRegion::file(dir / "r.ice", 1 << 20, true);
    r.resize(4096);
    r.store_pair(1024, 77, 88);
    r.flush_fence(1024, 16);
    r.sync();
    EXPECT_EQ(r.backend(), Backend::kFile);
  }
  {
    auto r = DurableRegion::file(dir / "r.ice", 1 << 20, false);
    EXPECT_EQ(r.size(), 4096u);
    EXPECT_EQ(r.load_pair(1024), std::make_pair(std::uint64_t{77}, std::uint64_t{88}));
    EXPECT_THROW((void)r.crash(Tearing::kDropAll, 0), std::logic_error);
  }
  std::filesystem::remove_all(dir);
}

TEST(Store, LayoutIsPureFunctionOfMeta) {
  GlobalMeta meta;
  meta.initial_block_count = 16;
  meta.generation = 2;
  meta.arena_capacity = 2048;
  const auto layout = region_layout(meta);
  EXPECT_EQ(layout[0].length, kMetaBytes);
  EXPECT_EQ(layout[1].length, 64u * 64 * 16);
  EXPECT_EQ(layout[2].length, 64u * 8 * 16);
  EXPECT_EQ(layout[3].length, 64u * 8);
  EXPECT_EQ(layout[4].length, 2048u * 32);
  for (const auto& s : layout) EXPECT_EQ(s.length % 64, 0u);
}

TEST(Store, MetaRoundTripAndBadMagic) {
  auto s = Store::create({});
  GlobalMeta meta;
  meta.initial_block_count = 4;
  meta.arena_capacity = kMinArenaNodes;
  meta.hash_seed = 123;
  s.apply_layout(meta);
  s.write_meta(meta);
  EXPECT_EQ(s.read_meta(), meta);
  const auto crashed = s.crash(Tearing::kWordSubset, 5);
  EXPECT_EQ(crashed.read_meta(), meta);

  s.write_meta_word(0, 0x1234);
  EXPECT_THROW((void)s.read_meta(), FormatError);
}

TEST(Store, TruncatedMetaIsFormatError) {
  auto s = Store::create({});
  EXPECT_THROW((void)s.read_meta(), FormatError);
}

TEST(Store, ShortRegionRefusedByRecovery) {
  TableConfig cfg;
  Table t(cfg);
  t.insert(1, 1);
  Store s = std::move(t.store());
  s.region(RegionId::kLevel2).resize(128);
  EXPECT_THROW((void)Table::recover(std::move(s), cfg), FormatError);
}
