#pragma once

// Per-block fingerprint metadata. Every block keeps one fingerprint byte per
// slot so a probe reads a single metadata line before touching slot data.
//
// Storage is a run of 64-bit atomic words; byte i of the block is byte
// (i % 8) of word (i / 8), least significant first. Byte-level updates are
// done with word-wide RMW operations so neighbouring slots can be claimed
// concurrently.

#include <array>
#include <atomic>
#include <bit>
#include <cassert>
#include <cstddef>
#include <cstdint>

namespace iceberg {

using Fingerprint = std::uint8_t;

inline constexpr Fingerprint kEmptyFingerprint = 0x00;
// Level-1 blocks steal bit 7 of byte 0 as the block lock.
inline constexpr std::uint8_t kLockBit = 0x80;
inline constexpr std::uint8_t kNarrowMask = 0x7F;

inline constexpr std::size_t kLevel1Slots = 64;
inline constexpr std::size_t kLevel2Slots = 8;

// Top 8 bits of the hash, never EMPTY. With `slot0_narrow` the 7-bit variant
// used for the lock-sharing slot 0 of a level-1 block.
constexpr Fingerprint derive_fingerprint(std::uint64_t hash, bool slot0_narrow = false);

// The 7-bit fingerprint a key stores in (and is compared against at) level-1
// slot 0: the low 7 bits of its 8-bit fingerprint, with 0 remapped to 1.
constexpr Fingerprint narrow_fingerprint(Fingerprint fp) {
  const Fingerprint n = fp & kNarrowMask;
  return n == 0 ? Fingerprint{1} : n;
}

constexpr Fingerprint derive_fingerprint(std::uint64_t hash, bool slot0_narrow) {
  Fingerprint fp = static_cast<Fingerprint>(hash >> 56);
  if (fp == kEmptyFingerprint) fp = 1;
  return slot0_narrow ? narrow_fingerprint(fp) : fp;
}

// Bit i set <=> slot i selected. Bits past the block's slot count are zero.
using SlotMask = std::uint64_t;

// Position of the (i+1)-th set bit of `mask`, counting from bit 0.
inline unsigned select_nth(SlotMask mask, unsigned i) {
  assert(i < static_cast<unsigned>(std::popcount(mask)));
  for (; i > 0; --i) mask &= mask - 1;
  return static_cast<unsigned>(std::countr_zero(mask));
}

template <std::size_t Slots>
class MetadataBlock {
  static_assert(Slots % 8 == 0, "metadata blocks are whole 64-bit words");

 public:
  static constexpr std::size_t kSlots = Slots;
  static constexpr std::size_t kWords = Slots / 8;
  // Level-1 geometry carries the lock bit.
  static constexpr bool kHasLock = Slots == kLevel1Slots;

  using Snapshot = std::array<std::uint64_t, kWords>;

  std::uint8_t byte(std::size_t slot) const {
    return static_cast<std::uint8_t>(words_[slot / 8].load(std::memory_order_acquire) >> shift(slot));
  }

  Snapshot snapshot() const {
    Snapshot s;
    for (std::size_t w = 0; w < kWords; ++w) s[w] = words_[w].load(std::memory_order_acquire);
    return s;
  }

  // Sets an EMPTY byte to fp with a plain RMW; the caller owns the slot
  // (holds the block lock). Slot 0 of a locked block keeps its lock bit.
  void set(std::size_t slot, Fingerprint fp) {
    const std::uint8_t stored = (kHasLock && slot == 0) ? narrow_fingerprint(fp) : fp;
    words_[slot / 8].fetch_or(std::uint64_t{stored} << shift(slot), std::memory_order_release);
  }

  // Atomically claims an EMPTY slot for fp. Fails if the slot is taken.
  bool try_claim(std::size_t slot, Fingerprint fp) {
    const std::uint8_t stored = (kHasLock && slot == 0) ? narrow_fingerprint(fp) : fp;
    const std::uint64_t byte_mask = std::uint64_t{value_mask(slot)} << shift(slot);
    auto& word = words_[slot / 8];
    std::uint64_t cur = word.load(std::memory_order_relaxed);
    while ((cur & byte_mask) == 0) {
      if (word.compare_exchange_weak(cur, cur | (std::uint64_t{stored} << shift(slot)),
                                     std::memory_order_acq_rel, std::memory_order_relaxed)) {
        return true;
      }
    }
    return false;
  }

  void clear(std::size_t slot) {
    const std::uint64_t byte_mask = std::uint64_t{value_mask(slot)} << shift(slot);
    words_[slot / 8].fetch_and(~byte_mask, std::memory_order_release);
  }

  // Block lock (level 1 only): spin on fetch-or of the stolen bit.
  bool try_lock() {
    static_assert(kHasLock);
    return (words_[0].fetch_or(kLockBit, std::memory_order_acquire) & kLockBit) == 0;
  }
  void unlock() {
    static_assert(kHasLock);
    words_[0].fetch_and(~std::uint64_t{kLockBit}, std::memory_order_release);
  }
  bool locked() const {
    static_assert(kHasLock);
    return (words_[0].load(std::memory_order_relaxed) & kLockBit) != 0;
  }

  void reset() {
    for (auto& w : words_) w.store(0, std::memory_order_relaxed);
  }

 private:
  static constexpr unsigned shift(std::size_t slot) { return static_cast<unsigned>(slot % 8) * 8; }
  static constexpr std::uint8_t value_mask(std::size_t slot) {
    return (kHasLock && slot == 0) ? kNarrowMask : std::uint8_t{0xFF};
  }

  std::array<std::atomic<std::uint64_t>, kWords> words_{};
};

using MetadataBlock1 = MetadataBlock<kLevel1Slots>;
using MetadataBlock2 = MetadataBlock<kLevel2Slots>;

static_assert(sizeof(MetadataBlock1) == 64, "level-1 metadata must fill exactly one cache line");
static_assert(sizeof(MetadataBlock2) == 8);

// Mask computations over a snapshot. The accelerated path uses byte-compare
// vectors where available; the scalar loop is the reference semantics.
namespace detail {
SlotMask match_words(const std::uint64_t* words, std::size_t n_words, std::uint8_t value);
SlotMask match_words_scalar(const std::uint64_t* words, std::size_t n_words, std::uint8_t value);
}  // namespace detail

template <std::size_t Slots>
SlotMask match_mask(const typename MetadataBlock<Slots>::Snapshot& snap, Fingerprint fp) {
  assert(fp != kEmptyFingerprint);
  SlotMask m = detail::match_words(snap.data(), snap.size(), fp);
  if constexpr (MetadataBlock<Slots>::kHasLock) {
    const bool slot0 = (static_cast<std::uint8_t>(snap[0]) & kNarrowMask) == narrow_fingerprint(fp);
    m = (m & ~SlotMask{1}) | SlotMask{slot0};
  }
  return m;
}

template <std::size_t Slots>
SlotMask empty_mask(const typename MetadataBlock<Slots>::Snapshot& snap) {
  SlotMask m = detail::match_words(snap.data(), snap.size(), kEmptyFingerprint);
  if constexpr (MetadataBlock<Slots>::kHasLock) {
    const bool slot0 = (static_cast<std::uint8_t>(snap[0]) & kNarrowMask) == 0;
    m = (m & ~SlotMask{1}) | SlotMask{slot0};
  }
  return m;
}

template <std::size_t Slots>
SlotMask match_mask(const MetadataBlock<Slots>& block, Fingerprint fp) {
  return match_mask<Slots>(block.snapshot(), fp);
}

template <std::size_t Slots>
SlotMask empty_mask(const MetadataBlock<Slots>& block) {
  return empty_mask<Slots>(block.snapshot());
}

template <std::size_t Slots>
unsigned occupancy(const MetadataBlock<Slots>& block) {
  return static_cast<unsigned>(Slots) - static_cast<unsigned>(std::popcount(empty_mask(block)));
}

}  // namespace iceberg
