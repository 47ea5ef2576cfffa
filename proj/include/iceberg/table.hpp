#pragma once

// Three-level stable hash map.
//
// Level 1 ("front yard"): m blocks of 64 slots, one hashed choice h0.
// Level 2: m blocks of 8 slots, two hashed choices h1/h2, emptier wins.
// Level 3: m chained buckets indexed by h0, nodes allocated from an arena.
//
// A present key lives in one of four places: level-1 block h0 mod m, level-2
// block h1 mod m or h2 mod m, or level-3 bucket h0 mod m. It never moves
// between insert and delete unless the table is resized.
//
// Slot data lives in durable regions (see store.hpp); fingerprints, locks
// and counters are volatile and rebuilt by recovery.

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "iceberg/metadata.hpp"
#include "iceberg/reserved_memory.hpp"
#include "iceberg/store.hpp"
#include "iceberg/sync.hpp"

namespace iceberg {

using Key = std::uint64_t;
using Value = std::uint64_t;

struct TableConfig {
  unsigned log_initial_blocks = 4;  // m = 2^log_initial_blocks
  double resize_threshold = 0.85;   // grow when load factor reaches this
  bool auto_resize = true;
  std::uint64_t hash_seed = 0x9E3779B97F4A7C15ULL;
  StoreOptions store;
};

enum class InsertResult { kInserted, kUpdated };

enum class Level : std::uint8_t { kOne = 1, kTwo = 2, kThree = 3 };

// Where a key resides; for level 3, `slot` is the arena node index.
struct Location {
  Level level = Level::kOne;
  std::uint64_t block = 0;
  std::uint64_t slot = 0;
  bool operator==(const Location&) const = default;
};

std::string to_string(const Location& loc);

struct HashTriple {
  std::uint64_t h0 = 0, h1 = 0, h2 = 0;
  Fingerprint fp0 = 1, fp1 = 1, fp2 = 1;
};

HashTriple hash_key(Key key, std::uint64_t seed);

struct LevelDistribution {
  std::uint64_t level1 = 0, level2 = 0, level3 = 0;
  std::uint64_t total() const { return level1 + level2 + level3; }
  double fraction1() const { return total() ? double(level1) / double(total()) : 0.0; }
  double fraction2() const { return total() ? double(level2) / double(total()) : 0.0; }
  double fraction3() const { return total() ? double(level3) / double(total()) : 0.0; }
};

// Per-query probe counts, for checking the metadata filter.
struct ProbeStats {
  std::uint64_t metadata_probes = 0;  // fingerprint blocks and level-3 heads looked at
  std::uint64_t level1_data_probes = 0;
  std::uint64_t level2_data_probes = 0;
  std::uint64_t level3_nodes = 0;
};

enum class MoveState : std::uint8_t { kUnmoved = 0, kInFlight = 1, kMoved = 2 };

struct ResizeStatus {
  std::uint64_t generation = 0;
  std::uint64_t block_count = 0;
  std::uint64_t old_block_count = 0;
  std::array<std::int64_t, 3> unmoved{};  // per level
  std::uint64_t blocks_moved = 0;         // lifetime
  std::uint64_t pairs_moved = 0;          // lifetime
  std::uint64_t grows = 0;
  std::uint64_t shrinks = 0;
};

struct RecoveryStats {
  std::uint64_t slots_scanned = 0;
  std::uint64_t nodes_scanned = 0;
  std::uint64_t pairs_recovered = 0;
  std::uint64_t torn_slots_cleared = 0;
  std::uint64_t duplicates_removed = 0;
  std::uint64_t misplaced_replaced = 0;
  double seconds = 0.0;
};

struct InvariantReport {
  std::vector<std::string> problems;
  std::uint64_t keys = 0;
  bool ok() const { return problems.empty(); }
};

struct TableFullError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Table {
 public:
  // New table over a fresh store built from config.store.
  explicit Table(const TableConfig& config);
  // New table over the given empty store.
  Table(const TableConfig& config, Store store);
  ~Table();

  Table(const Table&) = delete;
  Table& operator=(const Table&) = delete;

  // Rebuilds a table from the durable image in `store`. Geometry and hash
  // seed come from the stored global metadata; thresholds from `config`.
  static std::unique_ptr<Table> recover(Store store, const TableConfig& config);

  // Values equal to the INVALID sentinel are rejected (std::invalid_argument).
  InsertResult insert(Key key, Value value);
  std::optional<Value> get(Key key) const;
  std::optional<Value> get(Key key, ProbeStats& stats) const;
  bool contains(Key key) const { return get(key).has_value(); }
  bool remove(Key key);
  // Lock-free lookup that also reports where the key sits.
  std::optional<Location> locate(Key key) const;

  std::uint64_t size() const;
  std::uint64_t block_count() const { return m_.load(std::memory_order_acquire); }
  std::uint64_t capacity() const { return block_count() * (kLevel1Slots + kLevel2Slots); }
  double load_factor() const;
  LevelDistribution level_distribution() const;

  // Resizing. maybe_grow doubles when the load factor is at or above the
  // threshold; grow doubles unconditionally; shrink halves when the result
  // stays below the threshold and returns false otherwise.
  bool maybe_grow();
  void grow();
  bool shrink();
  // Moves every block still pending from the last doubling.
  void finish_migration();
  bool migrating() const { return unmoved_total_.load(std::memory_order_acquire) > 0; }
  ResizeStatus resize_status() const;

  // Quiescent diagnostics.
  void for_each(const std::function<void(Key, Value, const Location&)>& fn) const;
  InvariantReport check_invariants() const;

  Store& store() { return store_; }
  const Store& store() const { return store_; }
  const TableConfig& config() const { return config_; }
  std::uint64_t generation() const { return generation_; }
  const RecoveryStats& recovery_stats() const { return recovery_stats_; }
  std::size_t volatile_bytes() const;
  std::uint64_t arena_capacity() const { return arena_capacity_; }
  std::uint64_t arena_in_use() const;

 private:
  struct RecoverTag {};
  Table(const TableConfig& config, Store store, const GlobalMeta& meta, RecoverTag);

  class ReadGuard;
  enum class Placed { kDone, kNeedSpace };

  void init_volatile(std::uint64_t blocks);
  void format_fresh();

  // Offsets into the durable regions.
  static std::size_t l1_offset(std::uint64_t block, std::size_t slot) {
    return block * kLevel1BlockBytes + slot * kSlotBytes;
  }
  static std::size_t l2_offset(std::uint64_t block, std::size_t slot) {
    return block * kLevel2BlockBytes + slot * kSlotBytes;
  }
  static std::size_t head_offset(std::uint64_t bucket) { return bucket * kHeadBytes; }
  static std::size_t node_offset(std::uint64_t node) { return node * kNodeBytes; }

  // Lookup; `old_m` != m adds the pre-doubling locations, probed first.
  std::optional<std::pair<Value, Location>> probe(Key key, const HashTriple& h, std::uint64_t m,
                                                  std::uint64_t old_m, ProbeStats* stats) const;
  std::optional<Value> probe_level1(Key key, const HashTriple& h, std::uint64_t block, std::size_t* slot,
                                    ProbeStats* stats) const;
  std::optional<Value> probe_level2(Key key, std::uint64_t block, Fingerprint fp, std::size_t* slot,
                                    ProbeStats* stats) const;
  std::optional<Value> probe_level3(Key key, std::uint64_t bucket, std::uint64_t* node, ProbeStats* stats) const;

  // Under the level-1 lock of h0 mod m, migration settled for this key.
  Placed place(Key key, Value value, const HashTriple& h, std::uint64_t m, bool try_level1, Location* where);
  std::optional<Location> place_level2(Key key, Value value, const HashTriple& h, std::uint64_t m);
  Placed place_level3(Key key, Value value, std::uint64_t bucket, std::uint64_t* node);
  void erase_at(const Location& loc);
  void write_at(const Location& loc, Key key, Value value);
  bool unlink_level3(Key key, std::uint64_t bucket);

  void lock_block(std::uint64_t block);
  void unlock_block(std::uint64_t block) { meta1_[block].unlock(); }

  // Arena.
  static constexpr std::uint64_t kMoveReserve = 64;
  std::optional<std::uint64_t> alloc_node(bool for_move);
  void free_node(std::uint64_t node);

  // Counting.
  void adjust_count(std::int64_t delta);
  void rebuild_approx_count();
  bool over_threshold() const;

  // Resize internals (resize.cpp).
  bool grow_from_reader(ReadGuard& guard, bool force);
  void grow_locked(bool arena_exhausted);
  bool shrink_locked();
  void ensure_key_moved(const HashTriple& h);
  void ensure_moved(int level, std::uint64_t old_block);
  void move_level1(std::uint64_t block);
  void move_level2(std::uint64_t block);
  void move_level3(std::uint64_t bucket);
  void drain_locked();
  void relocate_from_level1(Key key, Value value, const HashTriple& h);
  void relocate_from_level2(Key key, Value value, const HashTriple& h);

  // INVALID-key side slot (meta region, line 1).
  InsertResult side_insert(Value value);
  std::optional<Value> side_get() const;
  bool side_remove();

  // Recovery (recovery.cpp).
  void rebuild_from_durable();

  TableConfig config_;
  Store store_;
  DurableRegion* l1_ = nullptr;
  DurableRegion* l2_ = nullptr;
  DurableRegion* heads_ = nullptr;
  DurableRegion* arena_ = nullptr;
  DurableRegion* meta_region_ = nullptr;

  std::uint64_t initial_blocks_ = 0;
  std::atomic<std::uint64_t> m_{0};
  std::uint64_t old_m_ = 0;
  std::uint64_t generation_ = 0;

  ReservedArray<MetadataBlock1> meta1_;
  ReservedArray<MetadataBlock2> meta2_;
  mutable ReservedArray<ByteLock> l3_locks_;

  mutable DistributedRWLock global_;
  ShardedCounter count_;
  std::atomic<std::int64_t> approx_count_{0};
  std::int64_t count_batch_ = 1;

  std::array<std::unique_ptr<std::atomic<std::uint8_t>[]>, 3> moved_;
  std::array<std::atomic<std::int64_t>, 3> unmoved_{};
  std::atomic<std::int64_t> unmoved_total_{0};
  ShardedCounter blocks_moved_;
  ShardedCounter pairs_moved_;
  std::uint64_t grows_ = 0;
  std::uint64_t shrinks_ = 0;

  mutable std::mutex arena_mu_;
  std::vector<std::uint64_t> free_nodes_;
  std::uint64_t arena_next_ = 0;
  std::uint64_t arena_capacity_ = 0;
  std::atomic<bool> arena_exhausted_{false};

  ByteLock side_lock_;
  RecoveryStats recovery_stats_;
};

// Holds the global lock in read mode; can drop it to let a grow through.
class Table::ReadGuard {
 public:
  explicit ReadGuard(DistributedRWLock& lock) : lock_(lock) { lock_.lock_shared(); }
  ~ReadGuard() {
    if (held_) lock_.unlock_shared();
  }
  ReadGuard(const ReadGuard&) = delete;
  ReadGuard& operator=(const ReadGuard&) = delete;

  void release() {
    lock_.unlock_shared();
    held_ = false;
  }
  void acquire() {
    lock_.lock_shared();
    held_ = true;
  }

 private:
  DistributedRWLock& lock_;
  bool held_ = true;
};

}  // namespace iceberg
