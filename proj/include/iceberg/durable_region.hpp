#pragma once

// Emulated persistent memory.
//
// A DurableRegion is a byte array with 64-byte-line durability. Stores land
// in the live image; a line reaches the durable image only when a
// flush_fence covering it returns. The hardware guarantees atomicity for
// aligned 8-byte stores only, so a crash may persist any subset of the
// 8-byte words written to a line since its last writeback.
//
// Two backends exist. The shadow backend keeps live and durable images in
// memory and supports crash injection. The file backend maps a sparse file;
// flush_fence issues cache-line writebacks and crash() is unavailable.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace iceberg {

enum class Backend { kShadow, kFile };
enum class Tearing { kDropAll, kWordSubset };

struct RegionStats {
  std::uint64_t stores = 0;         // store_word / store_pair calls (fill counts per word)
  std::uint64_t words_stored = 0;   // 8-byte words written
  std::uint64_t flushes = 0;        // flush_fence calls
  std::uint64_t lines_flushed = 0;  // lines covered by those calls
};

class DurableRegion;

// Crash-point hook: called after every store and every flush_fence returns.
class RegionObserver {
 public:
  virtual ~RegionObserver() = default;
  virtual void after_store(const DurableRegion& region, std::size_t offset, std::size_t len) = 0;
  virtual void after_flush(const DurableRegion& region, std::size_t offset, std::size_t len) = 0;
};

class DurableRegion {
 public:
  static constexpr std::size_t kLineSize = 64;
  static constexpr std::size_t kWordSize = 8;

  DurableRegion();
  ~DurableRegion();
  DurableRegion(DurableRegion&&) noexcept;
  DurableRegion& operator=(DurableRegion&&) noexcept;

  static DurableRegion shadow(std::string name, std::size_t reserve_bytes);
  // Opens (or creates, when `create`) a sparse backing file. An existing
  // file's length becomes the initial size.
  static DurableRegion file(const std::filesystem::path& path, std::size_t reserve_bytes, bool create);

  explicit operator bool() const { return impl_ != nullptr; }

  Backend backend() const;
  const std::string& name() const;
  std::size_t size() const;
  std::size_t reserved() const;

  // Extends or truncates. Extended bytes read as zero in both images (a
  // fresh stretch of sparse file). Not thread-safe against other accesses.
  void resize(std::size_t bytes);

  // Offsets must be 8-aligned (16-aligned for pairs); bad stores throw RegionError.
  void store_word(std::size_t offset, std::uint64_t word);
  void store_pair(std::size_t offset, std::uint64_t first, std::uint64_t second);
  // Bulk 8-byte stores of the same word over [offset, offset+len).
  void fill(std::size_t offset, std::size_t len, std::uint64_t word);

  std::uint64_t load_word(std::size_t offset) const;
  std::pair<std::uint64_t, std::uint64_t> load_pair(std::size_t offset) const;

  // Writes back every line overlapping [offset, offset+len) and fences.
  void flush_fence(std::size_t offset, std::size_t len);

  // Shadow-only crash model. dirty_words() lists, in ascending offset order,
  // the words stored since their line was last written back.
  std::size_t dirty_line_count() const;
  std::vector<std::size_t> dirty_words() const;
  // Returns the post-crash region: both images equal the durable image plus
  // exactly those dirty words for which `persist(word_offset)` is true.
  DurableRegion crash_with(const std::function<bool(std::size_t)>& persist) const;
  DurableRegion crash(Tearing tearing, std::uint64_t seed) const;

  // File backend: msync the mapping. No-op for shadow.
  void sync();

  // Test hook: after `n` more successful flush_fence calls, every further
  // call throws RegionError. Negative disables.
  void fail_flushes_after(std::int64_t n);

  RegionStats stats() const;
  void reset_stats();
  void set_observer(RegionObserver* observer);

  // Raw views, for recovery scans and tests.
  const std::byte* live_data() const;
  const std::byte* durable_data() const;

 private:
  struct Impl;
  struct ShadowImpl;
  struct FileImpl;
  explicit DurableRegion(std::unique_ptr<Impl> impl);
  void check_access(std::size_t offset, std::size_t len, std::size_t align) const;
  std::unique_ptr<Impl> impl_;
};

// Thrown by the simulated-IO test hook and by invalid region accesses.
struct RegionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace iceberg
