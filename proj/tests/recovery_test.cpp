#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>
#include <unistd.h>

#include "iceberg/table.hpp"

using namespace iceberg;

namespace {

std::map<Key, Value> snapshot(const Table& t) {
  std::map<Key, Value> out;
  t.for_each([&out](Key k, Value v, const Location&) { out[k] = v; });
  return out;
}

TableConfig small(unsigned log_blocks, bool auto_resize = false) {
  TableConfig c;
  c.log_initial_blocks = log_blocks;
  c.auto_resize = auto_resize;
  c.store.max_log_blocks = 16;
  return c;
}

std::unique_ptr<Table> reopen(Table& t, Tearing tearing = Tearing::kDropAll, std::uint64_t seed = 0) {
  return Table::recover(t.store().crash(tearing, seed), t.config());
}

// Captures the dirty words left by the first store into `target`.
class FirstStoreTrap : public RegionObserver {
 public:
  FirstStoreTrap(Store& store, RegionId target) : store_(store), target_(target) {}
  void after_store(const DurableRegion& r, std::size_t, std::size_t) override {
    if (!armed_ || &r != &store_.region(target_)) return;
    armed_ = false;
    dirty = store_.dirty_words();
    for (std::size_t mask = 0; mask < (std::size_t{1} << dirty.size()); ++mask) {
      outcomes.push_back(store_.crash_with([&](const DirtyWord& w) {
        for (std::size_t i = 0; i < dirty.size(); ++i) {
          if (dirty[i].region == w.region && dirty[i].offset == w.offset) return ((mask >> i) & 1) != 0;
        }
        return false;
      }));
    }
  }
  void after_flush(const DurableRegion&, std::size_t, std::size_t) override {}

  std::vector<DirtyWord> dirty;
  std::vector<Store> outcomes;

 private:
  Store& store_;
  RegionId target_;
  bool armed_ = true;
};

}  // namespace

TEST(Recovery, CleanCloseRoundTrip) {
  Table t(small(6));
  std::mt19937_64 rng(1);
  while (t.load_factor() < 0.9) t.insert(rng() >> 1, rng() >> 1);
  t.insert(kInvalid, 17);
  const auto before = snapshot(t);
  auto r = reopen(t);
  EXPECT_EQ(snapshot(*r), before);
  EXPECT_EQ(r->size(), t.size());
  EXPECT_EQ(r->get(kInvalid), 17u);
  EXPECT_EQ(r->level_distribution().level2, t.level_distribution().level2);
  EXPECT_TRUE(r->check_invariants().ok());
  EXPECT_EQ(r->recovery_stats().slots_scanned, 64u * 72);
}

TEST(Recovery, Level3ChainsAndFreeList) {
  Table t(small(1));
  std::vector<Key> ks;
  for (Key k = 1; ks.size() < 400; ++k) {
    t.insert(k, k);
    ks.push_back(k);
  }
  for (std::size_t i = 0; i < ks.size(); i += 3) t.remove(ks[i]);
  const auto before = snapshot(t);
  auto r = reopen(t);
  EXPECT_EQ(snapshot(*r), before);
  EXPECT_EQ(r->arena_in_use(), t.arena_in_use());
  EXPECT_TRUE(r->check_invariants().ok());
  // The rebuilt free list hands out nodes without clobbering live ones.
  for (Key k = 10000; k < 10200; ++k) r->insert(k, k);
  for (const auto& [k, v] : before) ASSERT_EQ(r->get(k), v);
}

TEST(Recovery, Idempotent) {
  Table t(small(5));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) t.insert(rng() >> 1, i);
  auto a = reopen(t);
  auto b = reopen(*a);
  EXPECT_EQ(snapshot(*a), snapshot(*b));
  EXPECT_EQ(b->recovery_stats().misplaced_replaced, 0u);
  EXPECT_EQ(b->recovery_stats().torn_slots_cleared, 0u);
}

TEST(Recovery, MidMigrationImageIsRepaired) {
  Table t(small(5));
  std::mt19937_64 rng(3);
  while (t.load_factor() < 0.8) t.insert(rng() >> 1, 5);
  const auto before = snapshot(t);
  t.grow();
  // Move a handful of blocks only.
  for (int i = 0; i < 50; ++i) t.insert((Key{1} << 62) + i, 6);
  ASSERT_TRUE(t.migrating());
  auto r = reopen(t);
  EXPECT_FALSE(r->migrating());
  EXPECT_EQ(r->block_count(), 64u);
  for (const auto& [k, v] : before) ASSERT_EQ(r->get(k), v);
  EXPECT_TRUE(r->check_invariants().ok());
  EXPECT_GT(r->recovery_stats().misplaced_replaced, 0u);
}

// Every persisted subset of a torn level-1 slot store recovers to absent or
// fully present.
TEST(Recovery, TornSlotStoreEnumeration) {
  for (RegionId target : {RegionId::kLevel1, RegionId::kLevel2}) {
    Table t(small(1));
    std::vector<Key> ks;
    for (Key k = 1; ks.size() < 30; ++k) {
      t.insert(k, k + 1);
      ks.push_back(k);
    }
    // Fill block 0 of level 1 so the next key there lands in level 2.
    if (target == RegionId::kLevel2) {
      for (Key k = 100; t.level_distribution().level2 == 0; ++k) t.insert(k, k + 1);
    }
    Key probe = 1u << 20;
    FirstStoreTrap trap(t.store(), target);
    t.store().set_observer(&trap);
    for (;; ++probe) {
      t.insert(probe, 4242);
      if (!trap.outcomes.empty()) break;
    }
    t.store().set_observer(nullptr);
    ASSERT_EQ(trap.dirty.size(), 2u);
    for (auto& s : trap.outcomes) {
      auto r = Table::recover(std::move(s), t.config());
      const auto v = r->get(probe);
      EXPECT_TRUE(!v || *v == 4242);
      EXPECT_TRUE(r->check_invariants().ok());
      for (Key k : ks) ASSERT_EQ(r->get(k), k + 1);
    }
  }
}

TEST(Recovery, TornDeleteEnumeration) {
  Table t(small(2));
  for (Key k = 1; k < 100; ++k) t.insert(k, k);
  FirstStoreTrap trap(t.store(), RegionId::kLevel1);
  t.store().set_observer(&trap);
  t.remove(50);
  t.store().set_observer(nullptr);
  ASSERT_FALSE(trap.outcomes.empty());
  for (auto& s : trap.outcomes) {
    auto r = Table::recover(std::move(s), t.config());
    const auto v = r->get(50);
    EXPECT_TRUE(!v || *v == 50);
    EXPECT_TRUE(r->check_invariants().ok());
  }
}

TEST(Recovery, WordSubsetCrashesOfQuiescentTable) {
  Table t(small(4));
  for (Key k = 1; k < 600; ++k) t.insert(k, k * 7);
  const auto before = snapshot(t);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = reopen(t, Tearing::kWordSubset, seed);
    EXPECT_EQ(snapshot(*r), before);
  }
}

TEST(Recovery, CorruptMetaIsFormatError) {
  Table t(small(2));
  t.insert(1, 1);
  Store s = t.store().crash(Tearing::kDropAll, 0);
  s.write_meta_word(0, 0);
  EXPECT_THROW((void)Table::recover(std::move(s), t.config()), FormatError);
}

TEST(Recovery, FileBackendReopen) {
  const auto dir = std::filesystem::temp_directory_path() / ("iceberg-recovery-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  TableConfig c = small(4, true);
  c.store.backend = Backend::kFile;
  c.store.directory = dir;
  std::map<Key, Value> before;
  {
    Table t(c);
    for (Key k = 1; k < 5000; ++k) t.insert(k * 11, k);
    t.insert(kInvalid, 3);
    t.remove(22);
    before = snapshot(t);
    t.store().sync();
  }
  auto r = Table::recover(Store::open(c.store), c);
  EXPECT_EQ(snapshot(*r), before);
  EXPECT_TRUE(r->check_invariants().ok());
  EXPECT_GT(r->generation(), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Recovery, ScanCostLinearInSlots) {
  // Best of a few runs per size; the 8x larger table should take 4x-16x
  // as long.
  auto best_seconds = [](unsigned log_blocks) {
    Table t(small(log_blocks));
    std::mt19937_64 rng(log_blocks);
    while (t.load_factor() < 0.9) t.insert(rng() >> 1, 1);
    double best = 1e9;
    for (int i = 0; i < 5; ++i) best = std::min(best, reopen(t)->recovery_stats().seconds);
    return best;
  };
  const double small_s = best_seconds(9);
  const double large_s = best_seconds(12);
  const double ratio = large_s / small_s;
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 24.0);
}
