// In-place doubling with lazy per-block migration, and offline halving.

#include <algorithm>
#include <bit>

#include "iceberg/table.hpp"

namespace iceberg {

namespace {

constexpr std::uint64_t kMetaGeneration = 2;
constexpr std::uint64_t kMetaArenaCapacity = 3;

}  // namespace

bool Table::maybe_grow() {
  ReadGuard guard(global_);
  if (load_factor() < config_.resize_threshold) return false;
  return grow_from_reader(guard, false);
}

void Table::grow() {
  std::lock_guard<DistributedRWLock> lock(global_);
  grow_locked(false);
}

bool Table::shrink() {
  std::lock_guard<DistributedRWLock> lock(global_);
  return shrink_locked();
}

void Table::finish_migration() {
  ReadGuard guard(global_);
  for (int level = 0; level < 3; ++level) {
    for (std::uint64_t b = 0; b < old_m_ && unmoved_[level].load(std::memory_order_acquire) > 0; ++b) {
      ensure_moved(level, b);
    }
  }
}

ResizeStatus Table::resize_status() const {
  ResizeStatus st;
  st.generation = generation_;
  st.block_count = block_count();
  st.old_block_count = old_m_;
  for (int i = 0; i < 3; ++i) st.unmoved[i] = unmoved_[i].load(std::memory_order_acquire);
  st.blocks_moved = static_cast<std::uint64_t>(blocks_moved_.sum());
  st.pairs_moved = static_cast<std::uint64_t>(pairs_moved_.sum());
  st.grows = grows_;
  st.shrinks = shrinks_;
  return st;
}

bool Table::grow_from_reader(ReadGuard& guard, bool force) {
  const std::uint64_t seen = m_.load(std::memory_order_acquire);
  guard.release();
  bool grew = false;
  global_.lock();
  try {
    // Whoever got the write lock first may already have doubled.
    if (m_.load(std::memory_order_relaxed) == seen) {
      if (force) {
        grow_locked(true);
        grew = true;
      } else if (load_factor() >= config_.resize_threshold) {
        grow_locked(false);
        grew = true;
      }
    }
  } catch (...) {
    global_.unlock();
    guard.acquire();
    throw;
  }
  global_.unlock();
  guard.acquire();
  return grew;
}

void Table::drain_locked() {
  for (int level = 0; level < 3; ++level) {
    for (std::uint64_t b = 0; b < old_m_ && unmoved_[level].load(std::memory_order_acquire) > 0; ++b) {
      ensure_moved(level, b);
    }
  }
}

void Table::grow_locked(bool arena_exhausted) {
  drain_locked();
  const std::uint64_t old = m_.load(std::memory_order_relaxed);
  const std::uint64_t next = old * 2;
  if (next > (std::uint64_t{1} << store_.max_log_blocks())) {
    throw TableFullError("table reached its reserved maximum size");
  }
  const std::uint64_t arena_limit = arena_->reserved() / kNodeBytes;
  std::uint64_t cap = std::max(arena_capacity_for(next), arena_capacity_);
  if (arena_exhausted || arena_exhausted_.load(std::memory_order_relaxed)) cap = std::max(cap, arena_capacity_ * 2);
  cap = std::min(cap, arena_limit);

  GlobalMeta meta;
  meta.initial_block_count = initial_blocks_;
  meta.generation = generation_ + 1;
  meta.arena_capacity = cap;
  meta.hash_seed = config_.hash_seed;
  const auto layout = region_layout(meta);

  // New space is initialised and written back before the size is persisted.
  l1_->resize(next * kLevel1BlockBytes);
  l1_->fill(old * kLevel1BlockBytes, old * kLevel1BlockBytes, kInvalid);
  l1_->flush_fence(old * kLevel1BlockBytes, old * kLevel1BlockBytes);
  l2_->resize(next * kLevel2BlockBytes);
  l2_->fill(old * kLevel2BlockBytes, old * kLevel2BlockBytes, kInvalid);
  l2_->flush_fence(old * kLevel2BlockBytes, old * kLevel2BlockBytes);
  const std::size_t old_heads = heads_->size();
  const std::size_t new_heads = layout[static_cast<std::size_t>(RegionId::kHeads)].length;
  if (new_heads > old_heads) {
    heads_->resize(new_heads);
    heads_->fill(old_heads, new_heads - old_heads, kNullNode);
    heads_->flush_fence(old_heads, new_heads - old_heads);
  }
  if (cap * kNodeBytes > arena_->size()) arena_->resize(cap * kNodeBytes);
  store_.write_meta_word(kMetaArenaCapacity, cap);
  store_.write_meta_word(kMetaGeneration, generation_ + 1);

  meta1_.resize(next);
  meta2_.resize(next);
  l3_locks_.resize(next);
  for (int level = 0; level < 3; ++level) {
    moved_[level] = std::make_unique<std::atomic<std::uint8_t>[]>(old);
    unmoved_[level].store(static_cast<std::int64_t>(old), std::memory_order_relaxed);
  }
  {
    std::lock_guard<std::mutex> lock(arena_mu_);
    arena_capacity_ = cap;
  }
  arena_exhausted_.store(false, std::memory_order_relaxed);
  old_m_ = old;
  ++generation_;
  ++grows_;
  m_.store(next, std::memory_order_release);
  unmoved_total_.store(static_cast<std::int64_t>(3 * old), std::memory_order_release);
  rebuild_approx_count();
}

void Table::ensure_key_moved(const HashTriple& h) {
  const std::uint64_t om = old_m_;
  if (unmoved_[0].load(std::memory_order_acquire) > 0) ensure_moved(0, h.h0 % om);
  if (unmoved_[1].load(std::memory_order_acquire) > 0) {
    ensure_moved(1, h.h1 % om);
    ensure_moved(1, h.h2 % om);
  }
  if (unmoved_[2].load(std::memory_order_acquire) > 0) ensure_moved(2, h.h0 % om);
}

void Table::ensure_moved(int level, std::uint64_t old_block) {
  auto& flag = moved_[level][old_block];
  std::uint8_t state = flag.load(std::memory_order_acquire);
  if (state == static_cast<std::uint8_t>(MoveState::kMoved)) return;
  if (state == static_cast<std::uint8_t>(MoveState::kUnmoved) &&
      flag.compare_exchange_strong(state, static_cast<std::uint8_t>(MoveState::kInFlight),
                                   std::memory_order_acq_rel)) {
    switch (level) {
      case 0: move_level1(old_block); break;
      case 1: move_level2(old_block); break;
      default: move_level3(old_block); break;
    }
    flag.store(static_cast<std::uint8_t>(MoveState::kMoved), std::memory_order_release);
    unmoved_[level].fetch_sub(1, std::memory_order_acq_rel);
    unmoved_total_.fetch_sub(1, std::memory_order_acq_rel);
    blocks_moved_.add(1);
    return;
  }
  Backoff backoff;
  while (flag.load(std::memory_order_acquire) != static_cast<std::uint8_t>(MoveState::kMoved)) backoff.pause();
}

void Table::relocate_from_level1(Key key, Value value, const HashTriple& h) {
  const std::uint64_t om = old_m_;
  if (unmoved_[1].load(std::memory_order_acquire) > 0) {
    ensure_moved(1, h.h1 % om);
    ensure_moved(1, h.h2 % om);
  }
  if (unmoved_[2].load(std::memory_order_acquire) > 0) ensure_moved(2, h.h0 % om);
  if (place(key, value, h, m_.load(std::memory_order_relaxed), false, nullptr) == Placed::kNeedSpace) {
    throw TableFullError("no room to relocate a key during migration");
  }
}

void Table::relocate_from_level2(Key key, Value value, const HashTriple& h) {
  if (unmoved_[2].load(std::memory_order_acquire) > 0) ensure_moved(2, h.h0 % old_m_);
  if (place_level3(key, value, h.h0 % m_.load(std::memory_order_relaxed), nullptr) == Placed::kNeedSpace) {
    throw TableFullError("no room to relocate a key during migration");
  }
}

// Each block splits into itself and its twin at +old_m. A pair is written at
// its new home and flushed before the old copy is erased.

void Table::move_level1(std::uint64_t block) {
  const std::uint64_t m = m_.load(std::memory_order_relaxed);
  const std::uint64_t twin = block + old_m_;
  lock_block(block);
  lock_block(twin);
  auto& src = meta1_[block];
  auto& dst = meta1_[twin];
  SlotMask occupied = ~empty_mask(src);
  try {
    while (occupied) {
      const auto s = static_cast<std::size_t>(std::countr_zero(occupied));
      occupied &= occupied - 1;
      const auto [k, v] = l1_->load_pair(l1_offset(block, s));
      if (k == kInvalid || v == kInvalid) continue;
      const HashTriple h = hash_key(k, config_.hash_seed);
      if (h.h0 % m == block) continue;
      const SlotMask empties = empty_mask(dst);
      if (empties) {
        const std::size_t d = select_nth(empties, 0);
        l1_->store_pair(l1_offset(twin, d), k, v);
        l1_->flush_fence(l1_offset(twin, d), kSlotBytes);
        dst.set(d, h.fp0);
      } else {
        relocate_from_level1(k, v, h);
      }
      erase_at({Level::kOne, block, s});
      pairs_moved_.add(1);
    }
  } catch (...) {
    unlock_block(twin);
    unlock_block(block);
    throw;
  }
  unlock_block(twin);
  unlock_block(block);
}

void Table::move_level2(std::uint64_t block) {
  const std::uint64_t m = m_.load(std::memory_order_relaxed);
  const std::uint64_t twin = block + old_m_;
  SlotMask occupied = ~empty_mask(meta2_[block]) & SlotMask{0xFF};
  while (occupied) {
    const auto s = static_cast<std::size_t>(std::countr_zero(occupied));
    occupied &= occupied - 1;
    const auto [k, v] = l2_->load_pair(l2_offset(block, s));
    if (k == kInvalid || v == kInvalid) continue;
    const HashTriple h = hash_key(k, config_.hash_seed);
    // The pair follows the candidate it was stored under, keeping its
    // fingerprint valid for that candidate.
    const bool first = h.h1 % old_m_ == block && meta2_[block].byte(s) == h.fp1;
    const std::uint64_t dest = (first ? h.h1 : h.h2) % m;
    if (dest == block) continue;
    const Fingerprint fp = first ? h.fp1 : h.fp2;
    bool placed = false;
    SlotMask empties = empty_mask(meta2_[twin]) & SlotMask{0xFF};
    while (empties && !placed) {
      const auto d = static_cast<std::size_t>(std::countr_zero(empties));
      empties &= empties - 1;
      if (meta2_[twin].try_claim(d, fp)) {
        l2_->store_pair(l2_offset(twin, d), k, v);
        l2_->flush_fence(l2_offset(twin, d), kSlotBytes);
        placed = true;
      }
    }
    if (!placed) relocate_from_level2(k, v, h);
    erase_at({Level::kTwo, block, s});
    pairs_moved_.add(1);
  }
}

void Table::move_level3(std::uint64_t bucket) {
  const std::uint64_t m = m_.load(std::memory_order_relaxed);
  const std::uint64_t twin = bucket + old_m_;
  std::vector<std::uint64_t> freed;
  {
    std::lock_guard<ByteLock> lock_lo(l3_locks_[bucket]);
    std::lock_guard<ByteLock> lock_hi(l3_locks_[twin]);
    std::uint64_t prev = kNullNode;
    for (std::uint64_t n = heads_->load_word(head_offset(bucket)); n != kNullNode;) {
      const std::uint64_t next = arena_->load_word(node_offset(n) + 16);
      const auto [k, v] = arena_->load_pair(node_offset(n));
      if (hash_key(k, config_.hash_seed).h0 % m == bucket) {
        prev = n;
        n = next;
        continue;
      }
      const auto copy = alloc_node(true);
      if (!copy) throw TableFullError("level-3 arena exhausted during migration");
      const std::size_t off = node_offset(*copy);
      arena_->store_pair(off, k, v);
      arena_->store_word(off + 16, heads_->load_word(head_offset(twin)));
      arena_->flush_fence(off, kNodeBytes);
      heads_->store_word(head_offset(twin), *copy);
      heads_->flush_fence(head_offset(twin), kHeadBytes);
      if (prev == kNullNode) {
        heads_->store_word(head_offset(bucket), next);
        heads_->flush_fence(head_offset(bucket), kHeadBytes);
      } else {
        arena_->store_word(node_offset(prev) + 16, next);
        arena_->flush_fence(node_offset(prev) + 16, 8);
      }
      freed.push_back(n);
      pairs_moved_.add(1);
      n = next;
    }
  }
  for (std::uint64_t n : freed) free_node(n);
}

bool Table::shrink_locked() {
  drain_locked();
  const std::uint64_t m = m_.load(std::memory_order_relaxed);
  if (m < 2 * initial_blocks_) return false;
  const std::uint64_t half = m / 2;
  const double half_capacity = static_cast<double>(half * (kLevel1Slots + kLevel2Slots));
  if (static_cast<double>(size()) >= config_.resize_threshold * half_capacity) return false;

  struct Pending {
    Key key;
    Value value;
    Location loc;
  };
  std::vector<Pending> upper;
  for (std::uint64_t b = half; b < m; ++b) {
    for (std::size_t s = 0; s < kLevel1Slots; ++s) {
      const auto [k, v] = l1_->load_pair(l1_offset(b, s));
      if (k != kInvalid && v != kInvalid) upper.push_back({k, v, {Level::kOne, b, s}});
    }
    for (std::size_t s = 0; s < kLevel2Slots; ++s) {
      const auto [k, v] = l2_->load_pair(l2_offset(b, s));
      if (k != kInvalid && v != kInvalid) upper.push_back({k, v, {Level::kTwo, b, s}});
    }
    for (std::uint64_t n = heads_->load_word(head_offset(b)); n != kNullNode;
         n = arena_->load_word(node_offset(n) + 16)) {
      const auto [k, v] = arena_->load_pair(node_offset(n));
      upper.push_back({k, v, {Level::kThree, b, n}});
    }
  }

  // Dry run of the placement rule against free-slot counts of the lower half.
  std::vector<std::uint8_t> free1(half), free2(half);
  for (std::uint64_t b = 0; b < half; ++b) {
    free1[b] = static_cast<std::uint8_t>(std::popcount(empty_mask(meta1_[b])));
    free2[b] = static_cast<std::uint8_t>(std::popcount(empty_mask(meta2_[b]) & SlotMask{0xFF}));
  }
  std::uint64_t level3_needed = 0;
  for (const auto& p : upper) {
    const HashTriple h = hash_key(p.key, config_.hash_seed);
    const std::uint64_t b0 = h.h0 % half;
    if (free1[b0] > 0) {
      --free1[b0];
      continue;
    }
    const std::uint64_t b1 = h.h1 % half, b2 = h.h2 % half;
    const std::uint64_t pick = free2[b2] > free2[b1] ? b2 : b1;
    if (free2[pick] > 0) {
      --free2[pick];
    } else {
      ++level3_needed;
    }
  }
  {
    std::lock_guard<std::mutex> lock(arena_mu_);
    const std::uint64_t available = free_nodes_.size() + (arena_capacity_ - arena_next_);
    if (level3_needed + kMoveReserve > available) return false;
  }

  for (const auto& p : upper) {
    const HashTriple h = hash_key(p.key, config_.hash_seed);
    if (place(p.key, p.value, h, half, true, nullptr) == Placed::kNeedSpace) {
      throw TableFullError("shrink ran out of level-3 nodes");
    }
    if (p.loc.level == Level::kThree) {
      unlink_level3(p.key, p.loc.block);
    } else {
      erase_at(p.loc);
    }
  }

  store_.write_meta_word(kMetaGeneration, generation_ - 1);
  GlobalMeta meta;
  meta.initial_block_count = initial_blocks_;
  meta.generation = generation_ - 1;
  meta.arena_capacity = arena_capacity_;
  meta.hash_seed = config_.hash_seed;
  store_.apply_layout(meta);

  meta1_.resize(half);
  meta2_.resize(half);
  l3_locks_.resize(half);
  for (auto& flags : moved_) flags.reset();
  old_m_ = half;
  --generation_;
  ++shrinks_;
  m_.store(half, std::memory_order_release);
  rebuild_approx_count();
  return true;
}

}  // namespace iceberg
