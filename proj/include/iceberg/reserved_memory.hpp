#pragma once

#include <cstddef>
#include <cstdint>

namespace iceberg {

// A reserved span of virtual address space whose prefix is committed on
// demand. The base address never changes, so pointers into the committed
// prefix stay valid across growth. Freshly committed bytes read as zero.
class ReservedMemory {
 public:
  ReservedMemory() = default;
  explicit ReservedMemory(std::size_t reserve_bytes);
  ~ReservedMemory();

  ReservedMemory(ReservedMemory&& other) noexcept;
  ReservedMemory& operator=(ReservedMemory&& other) noexcept;
  ReservedMemory(const ReservedMemory&) = delete;
  ReservedMemory& operator=(const ReservedMemory&) = delete;

  // Grows or shrinks the committed prefix. Shrinking returns the pages to
  // the OS; regrowing them later yields zeros again.
  void resize(std::size_t bytes);

  std::byte* data() { return base_; }
  const std::byte* data() const { return base_; }
  std::size_t size() const { return size_; }
  std::size_t committed() const { return committed_; }
  std::size_t reserved() const { return reserved_; }

  static std::size_t page_size();

 private:
  void release();

  std::byte* base_ = nullptr;
  std::size_t reserved_ = 0;
  std::size_t committed_ = 0;  // page-rounded
  std::size_t size_ = 0;
};

// Fixed-capacity array of trivially-constructible T living in a
// ReservedMemory. Elements past size() are not accessible.
template <typename T>
class ReservedArray {
 public:
  ReservedArray() = default;
  explicit ReservedArray(std::size_t max_elements) : mem_(max_elements * sizeof(T)) {}

  void resize(std::size_t n) { mem_.resize(n * sizeof(T)); }
  std::size_t size() const { return mem_.size() / sizeof(T); }
  std::size_t bytes() const { return mem_.size(); }

  T* data() { return reinterpret_cast<T*>(mem_.data()); }
  const T* data() const { return reinterpret_cast<const T*>(mem_.data()); }
  T& operator[](std::size_t i) { return data()[i]; }
  const T& operator[](std::size_t i) const { return data()[i]; }

 private:
  ReservedMemory mem_;
};

}  // namespace iceberg
