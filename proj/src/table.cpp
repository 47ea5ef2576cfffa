#include "iceberg/table.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "iceberg/hash.hpp"

namespace iceberg {

std::string to_string(const Location& loc) {
  std::ostringstream os;
  os << "L" << static_cast<int>(loc.level) << "[" << loc.block << "]." << loc.slot;
  return os.str();
}

HashTriple hash_key(Key key, std::uint64_t seed) {
  const auto [a, b] = murmur3_128(key, seed);
  HashTriple h;
  h.h0 = a;
  h.h1 = b;
  h.h2 = fmix64(a ^ rotl64(b, 29) ^ 0xC2B2AE3D27D4EB4FULL);
  h.fp0 = derive_fingerprint(h.h0);
  h.fp1 = derive_fingerprint(h.h1);
  h.fp2 = derive_fingerprint(h.h2);
  return h;
}

namespace {

constexpr SlotMask kAll8 = 0xFF;

void validate(const TableConfig& config, unsigned max_log_blocks) {
  if (config.log_initial_blocks < 1) throw std::invalid_argument("log_initial_blocks must be at least 1");
  if (config.log_initial_blocks > max_log_blocks) {
    throw std::invalid_argument("log_initial_blocks exceeds the store reservation");
  }
  if (!(config.resize_threshold > 0.0 && config.resize_threshold <= 1.0)) {
    throw std::invalid_argument("resize_threshold must lie in (0, 1]");
  }
}

}  // namespace

Table::Table(const TableConfig& config) : Table(config, Store::create(config.store)) {}

Table::Table(const TableConfig& config, Store store) : config_(config), store_(std::move(store)) {
  validate(config_, store_.max_log_blocks());
  GlobalMeta meta;
  meta.initial_block_count = std::uint64_t{1} << config_.log_initial_blocks;
  meta.generation = 0;
  meta.arena_capacity = arena_capacity_for(meta.initial_block_count);
  meta.hash_seed = config_.hash_seed;
  store_.apply_layout(meta);
  initial_blocks_ = meta.initial_block_count;
  generation_ = 0;
  arena_capacity_ = meta.arena_capacity;
  init_volatile(meta.block_count());
  format_fresh();
  store_.write_meta(meta);
}

Table::Table(const TableConfig& config, Store store, const GlobalMeta& meta, RecoverTag)
    : config_(config), store_(std::move(store)) {
  config_.hash_seed = meta.hash_seed;
  config_.log_initial_blocks = static_cast<unsigned>(std::countr_zero(meta.initial_block_count));
  store_.apply_layout(meta);
  initial_blocks_ = meta.initial_block_count;
  generation_ = meta.generation;
  arena_capacity_ = meta.arena_capacity;
  init_volatile(meta.block_count());
  rebuild_from_durable();
}

Table::~Table() = default;

void Table::init_volatile(std::uint64_t blocks) {
  l1_ = &store_.region(RegionId::kLevel1);
  l2_ = &store_.region(RegionId::kLevel2);
  heads_ = &store_.region(RegionId::kHeads);
  arena_ = &store_.region(RegionId::kArena);
  meta_region_ = &store_.region(RegionId::kMeta);

  const std::size_t max_blocks = std::size_t{1} << store_.max_log_blocks();
  meta1_ = ReservedArray<MetadataBlock1>(max_blocks);
  meta2_ = ReservedArray<MetadataBlock2>(max_blocks);
  l3_locks_ = ReservedArray<ByteLock>(max_blocks);
  meta1_.resize(blocks);
  meta2_.resize(blocks);
  l3_locks_.resize(blocks);
  m_.store(blocks, std::memory_order_release);
  old_m_ = blocks;

  free_nodes_.clear();
  arena_next_ = 0;
  count_.reset();
  approx_count_.store(0);
  count_batch_ = std::clamp<std::int64_t>(static_cast<std::int64_t>(capacity() / 4096), 1, 64);
}

void Table::format_fresh() {
  l1_->fill(0, l1_->size(), kInvalid);
  l1_->flush_fence(0, l1_->size());
  l2_->fill(0, l2_->size(), kInvalid);
  l2_->flush_fence(0, l2_->size());
  heads_->fill(0, heads_->size(), kNullNode);
  heads_->flush_fence(0, heads_->size());
  meta_region_->store_pair(kSideSlotOffset, 0, kInvalid);
  meta_region_->flush_fence(kSideSlotOffset, kSlotBytes);
}

// ---------------------------------------------------------------------------
// Lookup

std::optional<Value> Table::probe_level1(Key key, const HashTriple& h, std::uint64_t block, std::size_t* slot,
                                         ProbeStats* stats) const {
  SlotMask mask = match_mask(meta1_[block], h.fp0);
  if (stats) ++stats->metadata_probes;
  while (mask) {
    const auto s = static_cast<std::size_t>(std::countr_zero(mask));
    mask &= mask - 1;
    if (stats) ++stats->level1_data_probes;
    const auto [k, v] = l1_->load_pair(l1_offset(block, s));
    if (k == key && v != kInvalid) {
      if (slot) *slot = s;
      return v;
    }
  }
  return std::nullopt;
}

std::optional<Value> Table::probe_level2(Key key, std::uint64_t block, Fingerprint fp, std::size_t* slot,
                                         ProbeStats* stats) const {
  SlotMask mask = match_mask(meta2_[block], fp);
  if (stats) ++stats->metadata_probes;
  while (mask) {
    const auto s = static_cast<std::size_t>(std::countr_zero(mask));
    mask &= mask - 1;
    if (stats) ++stats->level2_data_probes;
    const auto [k, v] = l2_->load_pair(l2_offset(block, s));
    if (k == key && v != kInvalid) {
      if (slot) *slot = s;
      return v;
    }
  }
  return std::nullopt;
}

std::optional<Value> Table::probe_level3(Key key, std::uint64_t bucket, std::uint64_t* node,
                                         ProbeStats* stats) const {
  if (stats) ++stats->metadata_probes;
  if (heads_->load_word(head_offset(bucket)) == kNullNode) return std::nullopt;
  std::lock_guard<ByteLock> lock(l3_locks_[bucket]);
  for (std::uint64_t n = heads_->load_word(head_offset(bucket)); n != kNullNode;) {
    if (stats) ++stats->level3_nodes;
    const auto [k, v] = arena_->load_pair(node_offset(n));
    if (k == key && v != kInvalid) {
      if (node) *node = n;
      return v;
    }
    n = arena_->load_word(node_offset(n) + 16);
  }
  return std::nullopt;
}

std::optional<std::pair<Value, Location>> Table::probe(Key key, const HashTriple& h, std::uint64_t m,
                                                       std::uint64_t old_m, ProbeStats* stats) const {
  const bool both = old_m != m;
  std::size_t slot = 0;

  const std::uint64_t a0 = h.h0 % old_m, b0 = h.h0 % m;
  if (both) {
    if (auto v = probe_level1(key, h, a0, &slot, stats)) return {{*v, {Level::kOne, a0, slot}}};
  }
  if (!both || b0 != a0) {
    if (auto v = probe_level1(key, h, b0, &slot, stats)) return {{*v, {Level::kOne, b0, slot}}};
  }

  struct Cand {
    std::uint64_t block;
    Fingerprint fp;
  };
  std::array<Cand, 4> cands{};
  std::size_t n = 0;
  auto add = [&](std::uint64_t block, Fingerprint fp) {
    for (std::size_t i = 0; i < n; ++i) {
      if (cands[i].block == block && cands[i].fp == fp) return;
    }
    cands[n++] = {block, fp};
  };
  if (both) {
    add(h.h1 % old_m, h.fp1);
    add(h.h2 % old_m, h.fp2);
  }
  add(h.h1 % m, h.fp1);
  add(h.h2 % m, h.fp2);
  for (std::size_t i = 0; i < n; ++i) {
    if (auto v = probe_level2(key, cands[i].block, cands[i].fp, &slot, stats)) {
      return {{*v, {Level::kTwo, cands[i].block, slot}}};
    }
  }

  std::uint64_t node = 0;
  if (both) {
    if (auto v = probe_level3(key, a0, &node, stats)) return {{*v, {Level::kThree, a0, node}}};
  }
  if (!both || b0 != a0) {
    if (auto v = probe_level3(key, b0, &node, stats)) return {{*v, {Level::kThree, b0, node}}};
  }
  return std::nullopt;
}

std::optional<Value> Table::get(Key key) const {
  if (key == kInvalid) return side_get();
  const HashTriple h = hash_key(key, config_.hash_seed);
  ReadGuard guard(global_);
  const std::uint64_t m = m_.load(std::memory_order_acquire);
  const std::uint64_t old_m = migrating() ? old_m_ : m;
  if (auto r = probe(key, h, m, old_m, nullptr)) return r->first;
  return std::nullopt;
}

std::optional<Value> Table::get(Key key, ProbeStats& stats) const {
  if (key == kInvalid) return side_get();
  const HashTriple h = hash_key(key, config_.hash_seed);
  ReadGuard guard(global_);
  const std::uint64_t m = m_.load(std::memory_order_acquire);
  const std::uint64_t old_m = migrating() ? old_m_ : m;
  if (auto r = probe(key, h, m, old_m, &stats)) return r->first;
  return std::nullopt;
}

std::optional<Location> Table::locate(Key key) const {
  if (key == kInvalid) return std::nullopt;
  const HashTriple h = hash_key(key, config_.hash_seed);
  ReadGuard guard(global_);
  const std::uint64_t m = m_.load(std::memory_order_acquire);
  const std::uint64_t old_m = migrating() ? old_m_ : m;
  if (auto r = probe(key, h, m, old_m, nullptr)) return r->second;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Mutation

void Table::lock_block(std::uint64_t block) {
  Backoff backoff;
  auto& md = meta1_[block];
  for (;;) {
    if (!md.locked() && md.try_lock()) return;
    backoff.pause();
  }
}

std::optional<Location> Table::place_level2(Key key, Value value, const HashTriple& h, std::uint64_t m) {
  const std::uint64_t b1 = h.h1 % m, b2 = h.h2 % m;
  const SlotMask e1 = empty_mask(meta2_[b1]) & kAll8;
  const SlotMask e2 = empty_mask(meta2_[b2]) & kAll8;
  std::uint64_t block = b1;
  Fingerprint fp = h.fp1;
  SlotMask empties = e1;
  if (std::popcount(e2) > std::popcount(e1)) {
    block = b2;
    fp = h.fp2;
    empties = e2;
  }
  while (empties) {
    const auto s = static_cast<std::size_t>(std::countr_zero(empties));
    empties &= empties - 1;
    if (meta2_[block].try_claim(s, fp)) {
      l2_->store_pair(l2_offset(block, s), key, value);
      l2_->flush_fence(l2_offset(block, s), kSlotBytes);
      return Location{Level::kTwo, block, s};
    }
  }
  return std::nullopt;
}

Table::Placed Table::place_level3(Key key, Value value, std::uint64_t bucket, std::uint64_t* node) {
  const auto n = alloc_node(false);
  if (!n) return Placed::kNeedSpace;
  std::lock_guard<ByteLock> lock(l3_locks_[bucket]);
  const std::size_t off = node_offset(*n);
  arena_->store_pair(off, key, value);
  arena_->store_word(off + 16, heads_->load_word(head_offset(bucket)));
  arena_->flush_fence(off, kNodeBytes);
  heads_->store_word(head_offset(bucket), *n);
  heads_->flush_fence(head_offset(bucket), kHeadBytes);
  if (node) *node = *n;
  return Placed::kDone;
}

Table::Placed Table::place(Key key, Value value, const HashTriple& h, std::uint64_t m, bool try_level1,
                           Location* where) {
  if (try_level1) {
    const std::uint64_t b = h.h0 % m;
    auto& md = meta1_[b];
    const SlotMask empties = empty_mask(md);
    if (empties) {
      const std::size_t s = select_nth(empties, 0);
      l1_->store_pair(l1_offset(b, s), key, value);
      l1_->flush_fence(l1_offset(b, s), kSlotBytes);
      md.set(s, h.fp0);
      if (where) *where = {Level::kOne, b, s};
      return Placed::kDone;
    }
  }
  if (auto loc = place_level2(key, value, h, m)) {
    if (where) *where = *loc;
    return Placed::kDone;
  }
  std::uint64_t node = 0;
  if (place_level3(key, value, h.h0 % m, &node) == Placed::kNeedSpace) return Placed::kNeedSpace;
  if (where) *where = {Level::kThree, h.h0 % m, node};
  return Placed::kDone;
}

void Table::write_at(const Location& loc, Key key, Value value) {
  switch (loc.level) {
    case Level::kOne:
      l1_->store_pair(l1_offset(loc.block, loc.slot), key, value);
      l1_->flush_fence(l1_offset(loc.block, loc.slot), kSlotBytes);
      break;
    case Level::kTwo:
      l2_->store_pair(l2_offset(loc.block, loc.slot), key, value);
      l2_->flush_fence(l2_offset(loc.block, loc.slot), kSlotBytes);
      break;
    case Level::kThree: {
      std::lock_guard<ByteLock> lock(l3_locks_[loc.block]);
      arena_->store_pair(node_offset(loc.slot), key, value);
      arena_->flush_fence(node_offset(loc.slot), kSlotBytes);
      break;
    }
  }
}

void Table::erase_at(const Location& loc) {
  switch (loc.level) {
    case Level::kOne:
      l1_->store_pair(l1_offset(loc.block, loc.slot), kInvalid, kInvalid);
      l1_->flush_fence(l1_offset(loc.block, loc.slot), kSlotBytes);
      meta1_[loc.block].clear(loc.slot);
      break;
    case Level::kTwo:
      l2_->store_pair(l2_offset(loc.block, loc.slot), kInvalid, kInvalid);
      l2_->flush_fence(l2_offset(loc.block, loc.slot), kSlotBytes);
      meta2_[loc.block].clear(loc.slot);
      break;
    case Level::kThree:
      unlink_level3(arena_->load_word(node_offset(loc.slot)), loc.block);
      break;
  }
}

bool Table::unlink_level3(Key key, std::uint64_t bucket) {
  std::uint64_t found = kNullNode;
  {
    std::lock_guard<ByteLock> lock(l3_locks_[bucket]);
    std::uint64_t prev = kNullNode;
    for (std::uint64_t n = heads_->load_word(head_offset(bucket)); n != kNullNode;) {
      const std::uint64_t next = arena_->load_word(node_offset(n) + 16);
      if (arena_->load_word(node_offset(n)) == key) {
        if (prev == kNullNode) {
          heads_->store_word(head_offset(bucket), next);
          heads_->flush_fence(head_offset(bucket), kHeadBytes);
        } else {
          arena_->store_word(node_offset(prev) + 16, next);
          arena_->flush_fence(node_offset(prev) + 16, 8);
        }
        found = n;
        break;
      }
      prev = n;
      n = next;
    }
  }
  if (found == kNullNode) return false;
  free_node(found);
  return true;
}

InsertResult Table::insert(Key key, Value value) {
  if (value == kInvalid) throw std::invalid_argument("value equals the INVALID sentinel");
  if (key == kInvalid) return side_insert(value);
  const HashTriple h = hash_key(key, config_.hash_seed);
  ReadGuard guard(global_);
  for (;;) {
    if (config_.auto_resize && over_threshold()) grow_from_reader(guard, false);
    if (migrating()) ensure_key_moved(h);
    const std::uint64_t m = m_.load(std::memory_order_acquire);
    const std::uint64_t b = h.h0 % m;
    lock_block(b);
    Placed placed = Placed::kDone;
    try {
      if (auto found = probe(key, h, m, m, nullptr)) {
        write_at(found->second, key, value);
        unlock_block(b);
        return InsertResult::kUpdated;
      }
      placed = place(key, value, h, m, true, nullptr);
    } catch (...) {
      unlock_block(b);
      throw;
    }
    unlock_block(b);
    if (placed == Placed::kDone) {
      adjust_count(1);
      return InsertResult::kInserted;
    }
    if (!config_.auto_resize) throw TableFullError("level-3 arena exhausted");
    grow_from_reader(guard, true);
  }
}

bool Table::remove(Key key) {
  if (key == kInvalid) return side_remove();
  const HashTriple h = hash_key(key, config_.hash_seed);
  ReadGuard guard(global_);
  if (migrating()) ensure_key_moved(h);
  const std::uint64_t m = m_.load(std::memory_order_acquire);
  const std::uint64_t b = h.h0 % m;
  lock_block(b);
  bool removed = false;
  try {
    if (auto found = probe(key, h, m, m, nullptr)) {
      if (found->second.level == Level::kThree) {
        removed = unlink_level3(key, found->second.block);
      } else {
        erase_at(found->second);
        removed = true;
      }
    }
  } catch (...) {
    unlock_block(b);
    throw;
  }
  unlock_block(b);
  if (removed) adjust_count(-1);
  return removed;
}

// ---------------------------------------------------------------------------
// INVALID key

InsertResult Table::side_insert(Value value) {
  ReadGuard guard(global_);
  std::lock_guard<ByteLock> lock(side_lock_);
  const auto [present, old] = meta_region_->load_pair(kSideSlotOffset);
  const bool was = present == 1 && old != kInvalid;
  meta_region_->store_pair(kSideSlotOffset, 1, value);
  meta_region_->flush_fence(kSideSlotOffset, kSlotBytes);
  if (was) return InsertResult::kUpdated;
  adjust_count(1);
  return InsertResult::kInserted;
}

std::optional<Value> Table::side_get() const {
  const auto [present, value] = meta_region_->load_pair(kSideSlotOffset);
  if (present == 1 && value != kInvalid) return value;
  return std::nullopt;
}

bool Table::side_remove() {
  ReadGuard guard(global_);
  std::lock_guard<ByteLock> lock(side_lock_);
  const auto [present, value] = meta_region_->load_pair(kSideSlotOffset);
  if (present != 1 || value == kInvalid) return false;
  meta_region_->store_pair(kSideSlotOffset, 0, kInvalid);
  meta_region_->flush_fence(kSideSlotOffset, kSlotBytes);
  adjust_count(-1);
  return true;
}

// ---------------------------------------------------------------------------
// Arena

std::optional<std::uint64_t> Table::alloc_node(bool for_move) {
  std::lock_guard<std::mutex> lock(arena_mu_);
  const std::uint64_t available = free_nodes_.size() + (arena_capacity_ - arena_next_);
  // Moves copy a node before freeing the original, so keep a few back.
  if (available == 0 || (!for_move && available <= kMoveReserve)) {
    arena_exhausted_.store(true, std::memory_order_relaxed);
    return std::nullopt;
  }
  if (!free_nodes_.empty()) {
    const std::uint64_t n = free_nodes_.back();
    free_nodes_.pop_back();
    return n;
  }
  return arena_next_++;
}

void Table::free_node(std::uint64_t node) {
  std::lock_guard<std::mutex> lock(arena_mu_);
  free_nodes_.push_back(node);
}

std::uint64_t Table::arena_in_use() const {
  std::lock_guard<std::mutex> lock(arena_mu_);
  return arena_next_ - free_nodes_.size();
}

// ---------------------------------------------------------------------------
// Counting

void Table::adjust_count(std::int64_t delta) {
  const std::int64_t before = count_.add(delta);
  const std::int64_t after = before + delta;
  const std::int64_t batch = count_batch_;
  auto floor_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  const std::int64_t q0 = floor_div(before, batch), q1 = floor_div(after, batch);
  if (q0 != q1) approx_count_.fetch_add((q1 - q0) * batch, std::memory_order_relaxed);
}

void Table::rebuild_approx_count() {
  count_batch_ = std::clamp<std::int64_t>(static_cast<std::int64_t>(capacity() / 4096), 1, 64);
  std::int64_t approx = 0;
  for (std::size_t i = 0; i < kShards; ++i) {
    const std::int64_t v = count_.shard_value(i);
    approx += (v >= 0 ? v / count_batch_ : -((-v + count_batch_ - 1) / count_batch_)) * count_batch_;
  }
  approx_count_.store(approx, std::memory_order_relaxed);
}

bool Table::over_threshold() const {
  return static_cast<double>(approx_count_.load(std::memory_order_relaxed)) >=
         config_.resize_threshold * static_cast<double>(capacity());
}

std::uint64_t Table::size() const {
  const std::int64_t s = count_.sum();
  return s > 0 ? static_cast<std::uint64_t>(s) : 0;
}

double Table::load_factor() const { return static_cast<double>(size()) / static_cast<double>(capacity()); }

LevelDistribution Table::level_distribution() const {
  LevelDistribution d;
  const std::uint64_t m = block_count();
  for (std::uint64_t b = 0; b < m; ++b) {
    d.level1 += occupancy(meta1_[b]);
    d.level2 += occupancy(meta2_[b]);
    for (std::uint64_t n = heads_->load_word(head_offset(b)); n != kNullNode;
         n = arena_->load_word(node_offset(n) + 16)) {
      ++d.level3;
    }
  }
  return d;
}

std::size_t Table::volatile_bytes() const {
  std::size_t bytes = meta1_.bytes() + meta2_.bytes() + l3_locks_.bytes();
  for (int lvl = 0; lvl < 3; ++lvl) {
    if (moved_[lvl]) bytes += old_m_;
  }
  return bytes;
}

// ---------------------------------------------------------------------------
// Diagnostics

void Table::for_each(const std::function<void(Key, Value, const Location&)>& fn) const {
  const std::uint64_t m = block_count();
  for (std::uint64_t b = 0; b < m; ++b) {
    for (std::size_t s = 0; s < kLevel1Slots; ++s) {
      const auto [k, v] = l1_->load_pair(l1_offset(b, s));
      if (k != kInvalid && v != kInvalid) fn(k, v, {Level::kOne, b, s});
    }
  }
  for (std::uint64_t b = 0; b < m; ++b) {
    for (std::size_t s = 0; s < kLevel2Slots; ++s) {
      const auto [k, v] = l2_->load_pair(l2_offset(b, s));
      if (k != kInvalid && v != kInvalid) fn(k, v, {Level::kTwo, b, s});
    }
  }
  for (std::uint64_t b = 0; b < m; ++b) {
    for (std::uint64_t n = heads_->load_word(head_offset(b)); n != kNullNode;
         n = arena_->load_word(node_offset(n) + 16)) {
      const auto [k, v] = arena_->load_pair(node_offset(n));
      fn(k, v, {Level::kThree, b, n});
    }
  }
  // The INVALID key is reported at a block index no real block has.
  if (auto v = side_get()) fn(kInvalid, *v, {Level::kOne, kInvalid, 0});
}

InvariantReport Table::check_invariants() const {
  InvariantReport rep;
  auto problem = [&rep](const std::string& what, const Location& loc) {
    if (rep.problems.size() < 64) rep.problems.push_back(what + " at " + to_string(loc));
  };
  const std::uint64_t m = block_count();
  const bool migr = migrating();
  const std::uint64_t om = migr ? old_m_ : m;
  std::unordered_set<Key> keys;
  keys.reserve(size() + 16);

  for (std::uint64_t b = 0; b < m; ++b) {
    const auto& md = meta1_[b];
    if (md.locked()) problem("level-1 lock left held", {Level::kOne, b, 0});
    for (std::size_t s = 0; s < kLevel1Slots; ++s) {
      const Location loc{Level::kOne, b, s};
      const std::uint8_t byte = s == 0 ? (md.byte(0) & kNarrowMask) : md.byte(s);
      const auto [k, v] = l1_->load_pair(l1_offset(b, s));
      const bool free = k == kInvalid || v == kInvalid;
      if (free && !(k == kInvalid && v == kInvalid)) problem("half-written slot", loc);
      if (free != (byte == kEmptyFingerprint)) {
        problem("metadata disagrees with slot occupancy", loc);
        continue;
      }
      if (free) continue;
      const HashTriple h = hash_key(k, config_.hash_seed);
      if (byte != derive_fingerprint(h.h0, s == 0)) problem("wrong fingerprint", loc);
      if (h.h0 % m != b && !(migr && h.h0 % om == b)) problem("key outside its level-1 block", loc);
      if (!keys.insert(k).second) problem("duplicate key", loc);
    }
  }
  for (std::uint64_t b = 0; b < m; ++b) {
    const auto& md = meta2_[b];
    for (std::size_t s = 0; s < kLevel2Slots; ++s) {
      const Location loc{Level::kTwo, b, s};
      const std::uint8_t byte = md.byte(s);
      const auto [k, v] = l2_->load_pair(l2_offset(b, s));
      const bool free = k == kInvalid || v == kInvalid;
      if (free && !(k == kInvalid && v == kInvalid)) problem("half-written slot", loc);
      if (free != (byte == kEmptyFingerprint)) {
        problem("metadata disagrees with slot occupancy", loc);
        continue;
      }
      if (free) continue;
      const HashTriple h = hash_key(k, config_.hash_seed);
      const bool as1 = h.h1 % m == b || (migr && h.h1 % om == b);
      const bool as2 = h.h2 % m == b || (migr && h.h2 % om == b);
      if (!as1 && !as2) problem("key outside its level-2 blocks", loc);
      if (!(as1 && byte == h.fp1) && !(as2 && byte == h.fp2)) problem("wrong fingerprint", loc);
      if (!keys.insert(k).second) problem("duplicate key", loc);
    }
  }
  std::vector<std::uint8_t> seen_node(arena_capacity_, 0);
  for (std::uint64_t b = 0; b < m; ++b) {
    if (l3_locks_[b].is_locked()) problem("bucket lock left held", {Level::kThree, b, 0});
    for (std::uint64_t n = heads_->load_word(head_offset(b)); n != kNullNode;
         n = arena_->load_word(node_offset(n) + 16)) {
      const Location loc{Level::kThree, b, n};
      if (n >= arena_capacity_ || seen_node[n]) {
        problem("broken level-3 chain", loc);
        break;
      }
      seen_node[n] = 1;
      const auto [k, v] = arena_->load_pair(node_offset(n));
      if (k == kInvalid || v == kInvalid) {
        problem("invalid pair in level-3 node", loc);
        continue;
      }
      const HashTriple h = hash_key(k, config_.hash_seed);
      if (h.h0 % m != b && !(migr && h.h0 % om == b)) problem("key outside its level-3 bucket", loc);
      if (!keys.insert(k).second) problem("duplicate key", loc);
    }
  }
  rep.keys = keys.size() + (side_get() ? 1 : 0);
  if (rep.keys != size()) {
    rep.problems.push_back("count " + std::to_string(size()) + " but scan found " + std::to_string(rep.keys));
  }
  return rep;
}

}  // namespace iceberg
