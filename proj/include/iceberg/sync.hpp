#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <thread>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace iceberg {

inline constexpr std::size_t kCacheLine = 64;
inline constexpr std::size_t kShards = 64;

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  _mm_pause();
#endif
}

// Backoff for spin loops: pause for a while, then start yielding so that
// oversubscribed hosts make progress.
class Backoff {
 public:
  void pause() {
    if (++spins_ < 64) {
      cpu_relax();
    } else {
      std::this_thread::yield();
    }
  }

 private:
  unsigned spins_ = 0;
};

// Stable per-thread index in [0, kShards), assigned round robin.
std::size_t thread_shard();

// Counter split across cache lines; add() touches only the caller's shard.
class ShardedCounter {
 public:
  // Returns the caller's shard value before the add.
  std::int64_t add(std::int64_t delta) {
    return shards_[thread_shard()].value.fetch_add(delta, std::memory_order_relaxed);
  }
  std::int64_t sum() const {
    std::int64_t s = 0;
    for (const auto& sh : shards_) s += sh.value.load(std::memory_order_relaxed);
    return s;
  }
  std::int64_t shard_value(std::size_t i) const { return shards_[i].value.load(std::memory_order_relaxed); }
  void reset() {
    for (auto& sh : shards_) sh.value.store(0, std::memory_order_relaxed);
  }

 private:
  struct alignas(kCacheLine) Shard {
    std::atomic<std::int64_t> value{0};
  };
  std::array<Shard, kShards> shards_{};
};

// Readers-writer lock with one reader count per shard, so read acquisition
// only dirties a line owned (mostly) by the calling thread.
class DistributedRWLock {
 public:
  void lock_shared() {
    auto& slot = readers_[thread_shard()].count;
    Backoff backoff;
    for (;;) {
      slot.fetch_add(1, std::memory_order_seq_cst);
      if (!writer_.load(std::memory_order_seq_cst)) return;
      slot.fetch_sub(1, std::memory_order_release);
      while (writer_.load(std::memory_order_acquire)) backoff.pause();
    }
  }

  void unlock_shared() { readers_[thread_shard()].count.fetch_sub(1, std::memory_order_release); }

  void lock() {
    Backoff backoff;
    bool expected = false;
    while (!writer_.compare_exchange_weak(expected, true, std::memory_order_seq_cst)) {
      expected = false;
      backoff.pause();
    }
    for (auto& r : readers_) {
      Backoff wait;
      while (r.count.load(std::memory_order_seq_cst) != 0) wait.pause();
    }
  }

  void unlock() { writer_.store(false, std::memory_order_release); }

 private:
  struct alignas(kCacheLine) ReaderSlot {
    std::atomic<std::int32_t> count{0};
  };
  std::array<ReaderSlot, kShards> readers_{};
  alignas(kCacheLine) std::atomic<bool> writer_{false};
};

// One-byte test-and-set lock (level-3 buckets, side slot).
class ByteLock {
 public:
  void lock() {
    Backoff backoff;
    while (flag_.exchange(1, std::memory_order_acquire) != 0) {
      while (flag_.load(std::memory_order_relaxed) != 0) backoff.pause();
    }
  }
  void unlock() { flag_.store(0, std::memory_order_release); }
  bool is_locked() const { return flag_.load(std::memory_order_relaxed) != 0; }

 private:
  std::atomic<std::uint8_t> flag_{0};
};
static_assert(sizeof(ByteLock) == 1);

}  // namespace iceberg
