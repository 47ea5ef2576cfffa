#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <thread>

#include "iceberg/table.hpp"

using namespace iceberg;

namespace {

TableConfig fixed(unsigned log_blocks) {
  TableConfig c;
  c.log_initial_blocks = log_blocks;
  c.auto_resize = false;
  return c;
}

// Keys whose hashes satisfy `pred`, scanning upward from `start`.
template <typename Pred>
std::vector<Key> keys_where(const Table& t, std::size_t n, Pred pred, Key start = 1) {
  std::vector<Key> out;
  for (Key k = start; out.size() < n; ++k) {
    if (pred(hash_key(k, t.config().hash_seed))) out.push_back(k);
  }
  return out;
}

struct Counts {
  std::uint64_t stores = 0, words = 0, flushes = 0;
};

Counts region_counts(const Table& t, RegionId id) {
  const auto s = t.store().region(id).stats();
  return {s.stores, s.words_stored, s.flushes};
}

}  // namespace

TEST(Table, NewTableShape) {
  Table t(fixed(4));
  EXPECT_EQ(t.block_count(), 16u);
  EXPECT_EQ(t.capacity(), 1152u);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.load_factor(), 0.0);
  EXPECT_FALSE(t.get(12345).has_value());
  const auto d = t.level_distribution();
  EXPECT_EQ(d.total(), 0u);
  EXPECT_EQ(d.fraction1(), 0.0);
  EXPECT_EQ(d.fraction2(), 0.0);
  EXPECT_EQ(d.fraction3(), 0.0);
}

TEST(Table, InsertThenUpdateInPlace) {
  Table t(fixed(4));
  EXPECT_EQ(t.insert(1, 2), InsertResult::kInserted);
  EXPECT_EQ(t.get(1), 2u);
  const auto loc = t.locate(1);
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->level, Level::kOne);
  EXPECT_EQ(loc->block, hash_key(1, t.config().hash_seed).h0 % 16);
  EXPECT_EQ(loc->slot, 0u);
  EXPECT_EQ(t.insert(1, 3), InsertResult::kUpdated);
  EXPECT_EQ(t.get(1), 3u);
  EXPECT_EQ(t.locate(1), loc);
  EXPECT_EQ(t.size(), 1u);
}

TEST(Table, RemoveSemantics) {
  Table t(fixed(4));
  t.insert(9, 1);
  EXPECT_TRUE(t.remove(9));
  EXPECT_FALSE(t.get(9));
  EXPECT_EQ(t.size(), 0u);
  EXPECT_FALSE(t.remove(9));
  EXPECT_EQ(t.size(), 0u);
  t.insert(9, 2);
  EXPECT_EQ(t.get(9), 2u);
}

TEST(Table, FirstEmptySlotByIndex) {
  Table t(fixed(4));
  const auto ks = keys_where(t, 3, [](const HashTriple& h) { return h.h0 % 16 == 5; });
  for (Key k : ks) t.insert(k, k);
  EXPECT_EQ(t.locate(ks[1])->slot, 1u);
  t.remove(ks[0]);
  const auto k4 = keys_where(t, 1, [](const HashTriple& h) { return h.h0 % 16 == 5; }, ks.back() + 1);
  t.insert(k4[0], 0);
  EXPECT_EQ(t.locate(k4[0])->slot, 0u);
}

TEST(Table, LoadFactorArithmetic) {
  Table t(fixed(4));
  for (Key k = 1; k <= 576; ++k) t.insert(k, k);
  EXPECT_DOUBLE_EQ(t.load_factor(), 0.5);
}

TEST(Table, AllTenInLevelOne) {
  Table t(fixed(4));
  for (Key k = 1; k <= 10; ++k) t.insert(k, k);
  const auto d = t.level_distribution();
  EXPECT_EQ(d.fraction1(), 1.0);
  EXPECT_EQ(d.fraction2(), 0.0);
  EXPECT_EQ(d.fraction3(), 0.0);
}

// Fills level-1 block `b` and returns the keys used.
std::vector<Key> fill_level1_block(Table& t, std::uint64_t b, Key start) {
  const std::uint64_t m = t.block_count();
  auto ks = keys_where(t, 64, [&](const HashTriple& h) { return h.h0 % m == b; }, start);
  for (Key k : ks) t.insert(k, 1);
  return ks;
}

TEST(Table, Level2EmptierBlockAndTies) {
  Table t(fixed(4));
  const std::uint64_t m = 16;
  // A probe key with distinct level-2 candidates, whose level-1 block we fill.
  const Key probe = keys_where(t, 1, [&](const HashTriple& h) {
    return h.h1 % m != h.h2 % m && h.h0 % m != h.h1 % m && h.h0 % m != h.h2 % m;
  }, 1u << 30)[0];
  const auto ph = hash_key(probe, t.config().hash_seed);
  const std::uint64_t b0 = ph.h0 % m, p = ph.h1 % m, s = ph.h2 % m;
  fill_level1_block(t, b0, 1);

  // Put `n` keys into level-2 block `target` by overflowing their level-1 blocks.
  Key next = 1u << 20;
  auto load_level2 = [&](std::uint64_t target, int n) {
    int placed = 0;
    while (placed < n) {
      const Key k = keys_where(t, 1, [&](const HashTriple& h) {
        return h.h0 % m == b0 && h.h1 % m == target && h.h2 % m == target;
      }, next)[0];
      next = k + 1;
      t.insert(k, 2);
      ASSERT_EQ(t.locate(k)->level, Level::kTwo);
      ASSERT_EQ(t.locate(k)->block, target);
      ++placed;
    }
  };
  load_level2(p, 5);  // primary: 3 empty
  load_level2(s, 3);  // secondary: 5 empty
  t.insert(probe, 7);
  EXPECT_EQ(t.locate(probe)->level, Level::kTwo);
  EXPECT_EQ(t.locate(probe)->block, s);
  t.remove(probe);

  load_level2(s, 3);  // both at 2 empty
  load_level2(p, 1);
  t.insert(probe, 7);
  EXPECT_EQ(t.locate(probe)->block, p);
  t.remove(probe);

  load_level2(p, 2);
  load_level2(s, 2);  // both full
  t.insert(probe, 7);
  EXPECT_EQ(t.locate(probe)->level, Level::kThree);
  EXPECT_EQ(t.locate(probe)->block, b0);
  EXPECT_EQ(t.get(probe), 7u);
  EXPECT_TRUE(t.check_invariants().ok());
}

TEST(Table, Level3PrependsAndUnlinks) {
  Table t(fixed(1));
  const std::uint64_t m = 2;
  // Overflow everything in block 0: level 1 and both level-2 blocks.
  std::vector<Key> all;
  for (Key k = 1; all.size() < 64 + 16 + 40; ++k) {
    if (hash_key(k, t.config().hash_seed).h0 % m == 0) {
      t.insert(k, k);
      all.push_back(k);
    }
  }
  std::vector<Key> l3;
  for (Key k : all) {
    if (t.locate(k)->level == Level::kThree) l3.push_back(k);
  }
  ASSERT_GE(l3.size(), 2u);
  EXPECT_GT(t.locate(l3.back())->slot, t.locate(l3.front())->slot);
  for (Key k : all) EXPECT_EQ(t.get(k), k);
  EXPECT_TRUE(t.remove(l3[l3.size() / 2]));
  for (Key k : l3) {
    if (k != l3[l3.size() / 2]) EXPECT_EQ(t.get(k), k);
  }
  const auto used = t.arena_in_use();
  t.insert(l3[l3.size() / 2], 5);
  EXPECT_EQ(t.arena_in_use(), used + 1);
  EXPECT_TRUE(t.check_invariants().ok());
}

TEST(Table, NegativeQueryWithoutCollisionsReadsNoData) {
  Table t(fixed(4));
  for (Key k = 1; k <= 300; ++k) t.insert(k, k);
  // Find an absent key whose fingerprints collide nowhere it probes.
  for (Key k = Key{1} << 40;; ++k) {
    const auto h = hash_key(k, t.config().hash_seed);
    if (h.h1 % 16 == h.h2 % 16) continue;
    ProbeStats st;
    if (!t.get(k, st) && st.level1_data_probes == 0 && st.level2_data_probes == 0) {
      EXPECT_EQ(st.metadata_probes, 4u);
      EXPECT_EQ(st.level3_nodes, 0u);
      break;
    }
  }
}

TEST(Table, InvalidKeyUsesSideSlot) {
  Table t(fixed(4));
  EXPECT_FALSE(t.get(kInvalid));
  EXPECT_EQ(t.insert(kInvalid, 5), InsertResult::kInserted);
  EXPECT_EQ(t.get(kInvalid), 5u);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.insert(kInvalid, 6), InsertResult::kUpdated);
  EXPECT_EQ(t.get(kInvalid), 6u);
  EXPECT_TRUE(t.remove(kInvalid));
  EXPECT_FALSE(t.remove(kInvalid));
  EXPECT_EQ(t.size(), 0u);
}

TEST(Table, InvalidValueRejected) {
  Table t(fixed(4));
  EXPECT_THROW(t.insert(3, kInvalid), std::invalid_argument);
  EXPECT_FALSE(t.get(3));
}

TEST(Table, ArenaExhaustionWithoutResizeThrows) {
  Table t(fixed(1));
  EXPECT_THROW(
      {
        for (Key k = 1; k < 100000; ++k) t.insert(k, k);
      },
      TableFullError);
  EXPECT_TRUE(t.check_invariants().ok());
}

// One 16-byte store and one flush in the data region; nothing else durable.
TEST(Table, SingleSlotWriteFootprint) {
  Table t(fixed(4));
  for (Key k = 1; k <= 900; ++k) t.insert(k, k);
  int level1 = 0, level2 = 0;
  for (Key k = 1000; level1 < 50 || level2 < 50; ++k) {
    t.store().reset_stats();
    t.insert(k, k);
    const auto loc = t.locate(k);
    const RegionId home = loc->level == Level::kOne ? RegionId::kLevel1 : RegionId::kLevel2;
    if (loc->level == Level::kThree) {
      t.remove(k);
      continue;
    }
    const auto c = region_counts(t, home);
    ASSERT_EQ(c.stores, 1u);
    ASSERT_EQ(c.words, 2u);
    ASSERT_EQ(c.flushes, 1u);
    const auto total = t.store().stats();
    ASSERT_EQ(total.stores, 1u);
    ASSERT_EQ(total.flushes, 1u);
    (loc->level == Level::kOne ? level1 : level2)++;
    t.remove(k);
  }
}

TEST(Table, DeleteWritesOneSlot) {
  Table t(fixed(4));
  for (Key k = 1; k <= 100; ++k) t.insert(k, k);
  t.store().reset_stats();
  t.remove(50);
  const auto s = t.store().stats();
  EXPECT_EQ(s.stores, 1u);
  EXPECT_EQ(s.flushes, 1u);
  EXPECT_EQ(s.lines_flushed, 1u);
}

TEST(Table, StabilityAbsentResize) {
  Table t(fixed(8));
  std::mt19937_64 rng(4);
  std::map<Key, Location> where;
  std::vector<Key> live;
  for (int step = 0; step < 40000; ++step) {
    const int r = static_cast<int>(rng() % 4);
    if (r < 2 || live.empty()) {
      const Key k = rng() >> 4;
      if (t.insert(k, 1) == InsertResult::kInserted) {
        where[k] = *t.locate(k);
        live.push_back(k);
      }
    } else if (r == 2) {
      const std::size_t i = rng() % live.size();
      ASSERT_EQ(t.locate(live[i]), where[live[i]]);
      t.insert(live[i], 2);
      ASSERT_EQ(t.locate(live[i]), where[live[i]]);
    } else {
      const std::size_t i = rng() % live.size();
      ASSERT_EQ(t.locate(live[i]), where[live[i]]);
      t.remove(live[i]);
      where.erase(live[i]);
      live[i] = live.back();
      live.pop_back();
    }
    if (t.load_factor() > 0.9) {
      while (live.size() > 100) {
        t.remove(live.back());
        where.erase(live.back());
        live.pop_back();
      }
    }
  }
}

TEST(Table, AssociativityAndCoherence) {
  Table t(fixed(6));
  std::mt19937_64 rng(8);
  std::map<Key, Value> model;
  while (t.load_factor() < 0.93) {
    const Key k = rng();
    if (k == kInvalid) continue;
    t.insert(k, k ^ 1);
    model[k] = k ^ 1;
  }
  const auto inv = t.check_invariants();
  EXPECT_TRUE(inv.ok()) << (inv.problems.empty() ? "" : inv.problems.front());
  EXPECT_EQ(inv.keys, model.size());
  const std::uint64_t m = t.block_count();
  std::size_t seen = 0;
  t.for_each([&](Key k, Value v, const Location& loc) {
    ++seen;
    EXPECT_EQ(model.at(k), v);
    const auto h = hash_key(k, t.config().hash_seed);
    switch (loc.level) {
      case Level::kOne:
      case Level::kThree:
        EXPECT_EQ(loc.block, h.h0 % m);
        break;
      case Level::kTwo:
        EXPECT_TRUE(loc.block == h.h1 % m || loc.block == h.h2 % m);
        break;
    }
  });
  EXPECT_EQ(seen, model.size());
}

TEST(Table, MonotoneEmptiness) {
  Table t(fixed(3));
  std::vector<Key> ks;
  for (Key k = 1; ks.size() < 600; ++k) {
    t.insert(k, k);
    ks.push_back(k);
  }
  for (Key k : ks) ASSERT_TRUE(t.remove(k));
  EXPECT_EQ(t.size(), 0u);
  EXPECT_TRUE(t.check_invariants().ok());
  const auto& s = t.store();
  const auto& l1 = s.region(RegionId::kLevel1);
  for (std::size_t off = 0; off < l1.size(); off += 16) ASSERT_EQ(l1.load_word(off), kInvalid);
  const auto& l2 = s.region(RegionId::kLevel2);
  for (std::size_t off = 0; off < l2.size(); off += 16) ASSERT_EQ(l2.load_word(off), kInvalid);
  const auto& heads = s.region(RegionId::kHeads);
  for (std::uint64_t b = 0; b < t.block_count(); ++b) ASSERT_EQ(heads.load_word(b * 8), kNullNode);
  for (Key k : ks) ASSERT_FALSE(t.get(k));
}

TEST(Table, ConcurrentSameBucketLevel3Inserts) {
  Table t(fixed(1));
  // Fill block 0 up to level 3.
  std::vector<Key> pre;
  for (Key k = 1; pre.size() < 64 + 16; ++k) {
    if (hash_key(k, t.config().hash_seed).h0 % 2 == 0) {
      t.insert(k, k);
      pre.push_back(k);
    }
  }
  std::vector<Key> a, b;
  for (Key k = 1u << 20; a.size() + b.size() < 400; ++k) {
    if (hash_key(k, t.config().hash_seed).h0 % 2 == 0) (a.size() < 200 ? a : b).push_back(k);
  }
  std::thread ta([&] { for (Key k : a) t.insert(k, 1); });
  std::thread tb([&] { for (Key k : b) t.insert(k, 2); });
  ta.join();
  tb.join();
  for (Key k : a) EXPECT_EQ(t.get(k), 1u);
  for (Key k : b) EXPECT_EQ(t.get(k), 2u);
  EXPECT_EQ(t.size(), pre.size() + 400);
  EXPECT_TRUE(t.check_invariants().ok());
}
