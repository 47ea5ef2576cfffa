#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include "iceberg/table.hpp"

using namespace iceberg;

namespace {

std::map<Key, Value> snapshot(const Table& t) {
  std::map<Key, Value> out;
  t.for_each([&out](Key k, Value v, const Location&) { out[k] = v; });
  return out;
}

void fill_to(Table& t, double load, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  while (t.load_factor() < load) {
    const Key k = rng();
    if (k != kInvalid) t.insert(k, k >> 1);
  }
}

TableConfig manual(unsigned log_blocks) {
  TableConfig c;
  c.log_initial_blocks = log_blocks;
  c.auto_resize = false;
  return c;
}

}  // namespace

TEST(Resize, BelowThresholdNoGrow) {
  Table t(manual(4));
  fill_to(t, 0.5, 1);
  EXPECT_FALSE(t.maybe_grow());
  EXPECT_EQ(t.generation(), 0u);
  EXPECT_EQ(t.block_count(), 16u);
}

TEST(Resize, GrowMarksOldBlocksUnmoved) {
  Table t(manual(4));
  fill_to(t, 0.6, 2);
  t.grow();
  const auto st = t.resize_status();
  EXPECT_EQ(st.block_count, 32u);
  EXPECT_EQ(st.old_block_count, 16u);
  EXPECT_EQ(st.generation, 1u);
  for (auto u : st.unmoved) EXPECT_EQ(u, 16);
  EXPECT_TRUE(t.migrating());
}

TEST(Resize, LoadFactorHalves) {
  Table t(manual(5));
  fill_to(t, 0.8, 3);
  const double before = t.load_factor();
  t.grow();
  EXPECT_DOUBLE_EQ(t.load_factor(), before / 2);
}

TEST(Resize, KeySetPreserved) {
  Table t(manual(6));
  fill_to(t, 0.9, 4);
  const auto before = snapshot(t);
  t.grow();
  for (const auto& [k, v] : before) ASSERT_EQ(t.get(k), v);
  t.finish_migration();
  EXPECT_FALSE(t.migrating());
  EXPECT_EQ(snapshot(t), before);
  EXPECT_TRUE(t.check_invariants().ok());
}

TEST(Resize, AboutHalfThePairsMove) {
  Table t(manual(9));
  fill_to(t, 0.8, 5);
  const auto n = t.size();
  const auto before = t.resize_status().pairs_moved;
  t.grow();
  t.finish_migration();
  const double moved = static_cast<double>(t.resize_status().pairs_moved - before) / static_cast<double>(n);
  EXPECT_NEAR(moved, 0.5, 0.05);
}

TEST(Resize, BlocksThatStayMoveNothing) {
  Table t(manual(4));
  // h0 mod 32 == h0 mod 16 and both level-2 candidates unchanged as well.
  std::vector<Key> ks;
  for (Key k = 1; ks.size() < 200; ++k) {
    const auto h = hash_key(k, t.config().hash_seed);
    if (h.h0 % 32 < 16 && h.h1 % 32 < 16 && h.h2 % 32 < 16) {
      t.insert(k, k);
      ks.push_back(k);
    }
  }
  const auto before = t.resize_status().pairs_moved;
  t.grow();
  t.finish_migration();
  EXPECT_EQ(t.resize_status().pairs_moved, before);
  for (Key k : ks) EXPECT_EQ(t.get(k), k);
}

TEST(Resize, FootprintAtMostDoubles) {
  Table t(manual(8));
  fill_to(t, 0.85, 6);
  const auto before = t.store().footprint();
  t.grow();
  EXPECT_LE(t.store().footprint(), 2 * before);
  t.finish_migration();
  EXPECT_LE(t.store().footprint(), 2 * before);
}

TEST(Resize, RacingThreadsDoubleOnce) {
  for (int round = 0; round < 5; ++round) {
    TableConfig c;
    c.log_initial_blocks = 4;
    Table t(c);
    // Just under the threshold.
    std::mt19937_64 rng(100 + round);
    const auto target = static_cast<std::uint64_t>(0.85 * static_cast<double>(t.capacity())) - 8;
    while (t.size() < target) t.insert(rng() >> 1, 1);
    ASSERT_EQ(t.generation(), 0u);
    std::atomic<bool> go{false};
    std::vector<std::thread> ts;
    for (int i = 0; i < 4; ++i) {
      ts.emplace_back([&, i] {
        while (!go.load()) std::this_thread::yield();
        for (Key k = 0; k < 10; ++k) t.insert((Key{1} << 62) + i * 100 + k, 2);
      });
    }
    go = true;
    for (auto& th : ts) th.join();
    EXPECT_EQ(t.generation(), 1u);
    EXPECT_EQ(t.resize_status().grows, 1u);
    EXPECT_EQ(t.size(), target + 40);
  }
}

TEST(Resize, ConcurrentQueriesNeverMissDuringMigration) {
  TableConfig c;
  c.log_initial_blocks = 6;
  Table t(c);
  std::vector<Key> present;
  std::mt19937_64 rng(9);
  while (t.load_factor() < 0.8) {
    const Key k = rng() >> 1;
    if (t.insert(k, k) == InsertResult::kInserted) present.push_back(k);
  }
  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> misses{0};
  std::thread reader([&] {
    std::mt19937_64 r(1);
    while (!stop.load()) {
      const Key k = present[r() % present.size()];
      if (t.get(k) != k) misses.fetch_add(1);
    }
  });
  std::thread writer([&] {
    std::mt19937_64 r(2);
    for (int g = 0; g < 3; ++g) {
      for (int i = 0; i < 20000; ++i) t.insert((Key{1} << 63) | (r() >> 2), 1);
    }
    stop = true;
  });
  writer.join();
  reader.join();
  EXPECT_EQ(misses.load(), 0u);
  EXPECT_GE(t.generation(), 2u);
}

TEST(Resize, ShrinkPreservesKeys) {
  Table t(manual(4));
  fill_to(t, 0.3, 7);
  t.grow();
  t.finish_migration();
  const auto before = snapshot(t);
  ASSERT_TRUE(t.shrink());
  EXPECT_EQ(t.block_count(), 16u);
  EXPECT_EQ(snapshot(t), before);
  EXPECT_TRUE(t.check_invariants().ok());
}

TEST(Resize, ShrinkOfEmptyUpperHalfTruncates) {
  Table t(manual(4));
  t.grow();
  t.finish_migration();
  const auto bytes = t.store().footprint();
  ASSERT_TRUE(t.shrink());
  EXPECT_LT(t.store().footprint(), bytes);
  EXPECT_EQ(t.size(), 0u);
}

TEST(Resize, ShrinkDuringMigrationDrainsFirst) {
  Table t(manual(5));
  fill_to(t, 0.3, 8);
  const auto before = snapshot(t);
  t.grow();
  ASSERT_TRUE(t.migrating());
  ASSERT_TRUE(t.shrink());
  EXPECT_EQ(snapshot(t), before);
}

TEST(Resize, ShrinkRefusedAtInitialSize) {
  Table t(manual(4));
  EXPECT_FALSE(t.shrink());
  EXPECT_EQ(t.block_count(), 16u);
}

TEST(Resize, ShrinkRefusedWhenHalfWouldBeTooFull) {
  Table t(manual(4));
  t.grow();
  t.finish_migration();
  fill_to(t, 0.45, 10);
  const auto before = snapshot(t);
  const auto m = t.block_count();
  EXPECT_FALSE(t.shrink());
  EXPECT_EQ(t.block_count(), m);
  EXPECT_EQ(snapshot(t), before);
}

TEST(Resize, ShrinkThenGrowRoundTrip) {
  Table t(manual(4));
  fill_to(t, 0.2, 11);
  t.grow();
  t.finish_migration();
  const auto before = snapshot(t);
  ASSERT_TRUE(t.shrink());
  t.grow();
  t.finish_migration();
  EXPECT_EQ(t.block_count(), 32u);
  EXPECT_EQ(snapshot(t), before);
  EXPECT_TRUE(t.check_invariants().ok());
}

TEST(Resize, GrowWhileMigratingDrainsFirst) {
  Table t(manual(4));
  fill_to(t, 0.8, 12);
  const auto before = snapshot(t);
  t.grow();
  t.grow();
  EXPECT_EQ(t.block_count(), 64u);
  EXPECT_EQ(t.resize_status().old_block_count, 32u);
  t.finish_migration();
  EXPECT_EQ(snapshot(t), before);
  EXPECT_TRUE(t.check_invariants().ok());
}
