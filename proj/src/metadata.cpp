#include "iceberg/metadata.hpp"

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace iceberg::detail {

SlotMask match_words_scalar(const std::uint64_t* words, std::size_t n_words, std::uint8_t value) {
  SlotMask mask = 0;
  for (std::size_t i = 0; i < n_words * 8; ++i) {
    const auto b = static_cast<std::uint8_t>(words[i / 8] >> ((i % 8) * 8));
    if (b == value) mask |= SlotMask{1} << i;
  }
  return mask;
}

#if defined(__SSE2__) && __BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__

SlotMask match_words(const std::uint64_t* words, std::size_t n_words, std::uint8_t value) {
  const __m128i needle = _mm_set1_epi8(static_cast<char>(value));
  if (n_words == 1) {
    const __m128i v = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(words));
    return static_cast<SlotMask>(_mm_movemask_epi8(_mm_cmpeq_epi8(v, needle))) & 0xFF;
  }
  SlotMask mask = 0;
  for (std::size_t w = 0; w + 1 < n_words; w += 2) {
    const __m128i v = _mm_loadu_si128(reinterpret_cast<const __m128i*>(words + w));
    const auto bits = static_cast<std::uint32_t>(_mm_movemask_epi8(_mm_cmpeq_epi8(v, needle)));
    mask |= SlotMask{bits} << (w * 8);
  }
  return mask;
}

#else

// SWAR fallback: exact zero-byte detection per word.
SlotMask match_words(const std::uint64_t* words, std::size_t n_words, std::uint8_t value) {
  constexpr std::uint64_t kLow7 = 0x7F7F7F7F7F7F7F7FULL;
  const std::uint64_t pattern = 0x0101010101010101ULL * value;
  SlotMask mask = 0;
  for (std::size_t w = 0; w < n_words; ++w) {
    const std::uint64_t x = words[w] ^ pattern;
    const std::uint64_t hi = ~(((x & kLow7) + kLow7) | x | kLow7);
    for (unsigned b = 0; b < 8; ++b) {
      if (hi & (0x80ULL << (8 * b))) mask |= SlotMask{1} << (w * 8 + b);
    }
  }
  return mask;
}

#endif

}  // namespace iceberg::detail
