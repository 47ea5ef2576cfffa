#pragma once

// Durable layout of a table: one region per sub-structure, mirroring a set
// of sparse files. Every length is a pure function of GlobalMeta.
//
//   meta          128 B   line 0: GlobalMeta words, line 1: INVALID-key side slot
//   level1        m * 64 slots * 16 B
//   level2        m *  8 slots * 16 B
//   level3_heads  m * 8 B (node index, kNullNode when empty), line-rounded
//   level3_arena  arena_capacity * 32 B nodes {key, value, next, unused}
//
// All integers are little-endian 64-bit words.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "iceberg/durable_region.hpp"

namespace iceberg {

inline constexpr std::uint64_t kInvalid = ~std::uint64_t{0};
inline constexpr std::uint64_t kNullNode = ~std::uint64_t{0};

inline constexpr std::size_t kSlotBytes = 16;
inline constexpr std::size_t kLevel1BlockBytes = 64 * kSlotBytes;
inline constexpr std::size_t kLevel2BlockBytes = 8 * kSlotBytes;
inline constexpr std::size_t kHeadBytes = 8;
inline constexpr std::size_t kNodeBytes = 32;
inline constexpr std::size_t kMetaBytes = 128;
inline constexpr std::size_t kSideSlotOffset = 64;
inline constexpr std::uint64_t kMinArenaNodes = 1024;

// "ICEBERG" in the low seven bytes, format version in the top byte.
inline constexpr std::uint64_t kFormatVersion = 1;
inline constexpr std::uint64_t kMagic = 0x0047524542454349ULL | (kFormatVersion << 56);

enum class RegionId : std::size_t { kMeta = 0, kLevel1, kLevel2, kHeads, kArena };
inline constexpr std::size_t kRegionCount = 5;

std::string_view region_name(RegionId id);

struct GlobalMeta {
  std::uint64_t magic = kMagic;
  std::uint64_t initial_block_count = 0;
  std::uint64_t generation = 0;  // net doublings since creation
  std::uint64_t arena_capacity = 0;
  std::uint64_t hash_seed = 0;

  std::uint64_t block_count() const { return initial_block_count << generation; }
  bool operator==(const GlobalMeta&) const = default;
};

// Arena nodes provisioned for a table of m blocks.
inline std::uint64_t arena_capacity_for(std::uint64_t blocks) {
  return blocks / 8 > kMinArenaNodes ? blocks / 8 : kMinArenaNodes;
}

struct SubRegion {
  RegionId id;
  std::size_t length;
};

// Region lengths implied by a GlobalMeta.
std::array<SubRegion, kRegionCount> region_layout(const GlobalMeta& meta);

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StoreOptions {
  Backend backend = Backend::kShadow;
  std::filesystem::path directory;  // file backend only
  unsigned max_log_blocks = 22;     // address-space reservation
};

struct DirtyWord {
  RegionId region;
  std::size_t offset;
};

class Store {
 public:
  Store() = default;

  // Fresh, zero-length regions.
  static Store create(const StoreOptions& options);
  // Existing files (file backend).
  static Store open(const StoreOptions& options);

  DurableRegion& region(RegionId id) { return regions_[static_cast<std::size_t>(id)]; }
  const DurableRegion& region(RegionId id) const { return regions_[static_cast<std::size_t>(id)]; }
  Backend backend() const { return backend_; }
  unsigned max_log_blocks() const { return max_log_blocks_; }

  // Resizes every region to the layout of `meta`.
  void apply_layout(const GlobalMeta& meta);

  GlobalMeta read_meta() const;  // FormatError on bad magic or short region
  // Persists the words of `meta`; callers order multi-word updates.
  void write_meta_word(std::size_t index, std::uint64_t value);
  void write_meta(const GlobalMeta& meta);

  std::vector<DirtyWord> dirty_words() const;
  Store crash_with(const std::function<bool(const DirtyWord&)>& persist) const;
  Store crash(Tearing tearing, std::uint64_t seed) const;

  void set_observer(RegionObserver* observer);
  RegionStats stats() const;
  void reset_stats();
  // Bytes of durable space in use (sum of region lengths).
  std::size_t footprint() const;
  void sync();

 private:
  std::array<DurableRegion, kRegionCount> regions_;
  Backend backend_ = Backend::kShadow;
  unsigned max_log_blocks_ = 0;
};

}  // namespace iceberg
