// Rebuilds volatile state from the durable image after a crash or a clean
// close. Only the blocks below the persisted size are scanned; anything past
// them belongs to an unfinished grow and is truncated away.

#include <chrono>
#include <unordered_set>

#include "iceberg/table.hpp"

namespace iceberg {

std::unique_ptr<Table> Table::recover(Store store, const TableConfig& config) {
  const GlobalMeta meta = store.read_meta();
  for (const auto& sub : region_layout(meta)) {
    if (store.region(sub.id).size() < sub.length) throw FormatError("region shorter than its recorded layout");
  }
  return std::unique_ptr<Table>(new Table(config, std::move(store), meta, RecoverTag{}));
}

void Table::rebuild_from_durable() {
  const auto start = std::chrono::steady_clock::now();
  RecoveryStats st;
  const std::uint64_t m = m_.load(std::memory_order_relaxed);
  std::unordered_set<Key> seen;
  seen.reserve(static_cast<std::size_t>(m) * 64);
  std::int64_t count = 0;

  struct Misplaced {
    Key key;
    Value value;
    Location loc;
  };
  std::vector<Misplaced> misplaced;

  auto clear_pair = [](DurableRegion* r, std::size_t off) {
    r->store_pair(off, kInvalid, kInvalid);
    r->flush_fence(off, kSlotBytes);
  };

  for (std::uint64_t b = 0; b < m; ++b) {
    for (std::size_t s = 0; s < kLevel1Slots; ++s) {
      ++st.slots_scanned;
      const std::size_t off = l1_offset(b, s);
      const auto [k, v] = l1_->load_pair(off);
      if (k == kInvalid && v == kInvalid) continue;
      if (k == kInvalid || v == kInvalid) {
        clear_pair(l1_, off);
        ++st.torn_slots_cleared;
        continue;
      }
      const HashTriple h = hash_key(k, config_.hash_seed);
      if (h.h0 % m != b) {
        meta1_[b].set(s, h.fp0);  // held until the pair is re-placed
        misplaced.push_back({k, v, {Level::kOne, b, s}});
        continue;
      }
      if (!seen.insert(k).second) {
        clear_pair(l1_, off);
        ++st.duplicates_removed;
        continue;
      }
      meta1_[b].set(s, h.fp0);
      ++count;
    }
  }

  for (std::uint64_t b = 0; b < m; ++b) {
    for (std::size_t s = 0; s < kLevel2Slots; ++s) {
      ++st.slots_scanned;
      const std::size_t off = l2_offset(b, s);
      const auto [k, v] = l2_->load_pair(off);
      if (k == kInvalid && v == kInvalid) continue;
      if (k == kInvalid || v == kInvalid) {
        clear_pair(l2_, off);
        ++st.torn_slots_cleared;
        continue;
      }
      const HashTriple h = hash_key(k, config_.hash_seed);
      const bool as1 = h.h1 % m == b;
      const bool as2 = h.h2 % m == b;
      if (!as1 && !as2) {
        meta2_[b].set(s, h.fp1);
        misplaced.push_back({k, v, {Level::kTwo, b, s}});
        continue;
      }
      if (!seen.insert(k).second) {
        clear_pair(l2_, off);
        ++st.duplicates_removed;
        continue;
      }
      meta2_[b].set(s, as1 ? h.fp1 : h.fp2);
      ++count;
    }
  }

  std::vector<std::uint8_t> reachable(arena_capacity_, 0);
  for (std::uint64_t b = 0; b < m; ++b) {
    std::uint64_t prev = kNullNode;
    auto link_past = [&](std::uint64_t next) {
      if (prev == kNullNode) {
        heads_->store_word(head_offset(b), next);
        heads_->flush_fence(head_offset(b), kHeadBytes);
      } else {
        arena_->store_word(node_offset(prev) + 16, next);
        arena_->flush_fence(node_offset(prev) + 16, 8);
      }
    };
    for (std::uint64_t n = heads_->load_word(head_offset(b)); n != kNullNode;) {
      if (n >= arena_capacity_ || reachable[n]) {
        link_past(kNullNode);  // dangling or cyclic link: cut the chain here
        break;
      }
      ++st.nodes_scanned;
      const auto [k, v] = arena_->load_pair(node_offset(n));
      const std::uint64_t next = arena_->load_word(node_offset(n) + 16);
      bool drop = false;
      if (k == kInvalid || v == kInvalid) {
        drop = true;
        ++st.torn_slots_cleared;
      } else if (hash_key(k, config_.hash_seed).h0 % m != b) {
        misplaced.push_back({k, v, {Level::kThree, b, n}});
      } else if (!seen.insert(k).second) {
        drop = true;
        ++st.duplicates_removed;
      } else {
        ++count;
      }
      if (drop) {
        link_past(next);
      } else {
        reachable[n] = 1;
        prev = n;
      }
      n = next;
    }
  }

  free_nodes_.clear();
  for (std::uint64_t n = arena_capacity_; n-- > 0;) {
    if (!reachable[n]) free_nodes_.push_back(n);
  }
  arena_next_ = arena_capacity_;

  // Pairs left behind by an interrupted move go through the normal placement
  // under the current size; the stale copy is erased after the new one is
  // durable.
  for (const auto& mp : misplaced) {
    if (!seen.insert(mp.key).second) {
      ++st.duplicates_removed;
    } else {
      const HashTriple h = hash_key(mp.key, config_.hash_seed);
      if (place(mp.key, mp.value, h, m, true, nullptr) == Placed::kNeedSpace) {
        throw TableFullError("no room to re-place a pair during recovery");
      }
      ++st.misplaced_replaced;
      ++count;
    }
    if (mp.loc.level == Level::kThree) {
      unlink_level3(mp.key, mp.loc.block);
    } else {
      erase_at(mp.loc);
    }
  }

  const auto [present, value] = meta_region_->load_pair(kSideSlotOffset);
  if (present == 1 && value != kInvalid) {
    ++count;
  } else if (present != 0 || value != kInvalid) {
    meta_region_->store_pair(kSideSlotOffset, 0, kInvalid);
    meta_region_->flush_fence(kSideSlotOffset, kSlotBytes);
  }

  count_.reset();
  count_.add(count);
  rebuild_approx_count();
  st.pairs_recovered = static_cast<std::uint64_t>(count);
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  recovery_stats_ = st;
}

}  // namespace iceberg
