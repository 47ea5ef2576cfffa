#include "iceberg/reserved_memory.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>

namespace iceberg {
namespace {

std::size_t round_up(std::size_t n, std::size_t to) { return (n + to - 1) / to * to; }

}  // namespace

std::size_t ReservedMemory::page_size() {
  static const std::size_t ps = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
  return ps;
}

ReservedMemory::ReservedMemory(std::size_t reserve_bytes)
    : reserved_(round_up(reserve_bytes == 0 ? 1 : reserve_bytes, page_size())) {
  void* p = ::mmap(nullptr, reserved_, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (p == MAP_FAILED) {
    throw std::system_error(errno, std::generic_category(),
                            "reserve " + std::to_string(reserved_) + " bytes");
  }
  base_ = static_cast<std::byte*>(p);
}

ReservedMemory::~ReservedMemory() { release(); }

ReservedMemory::ReservedMemory(ReservedMemory&& other) noexcept
    : base_(std::exchange(other.base_, nullptr)),
      reserved_(std::exchange(other.reserved_, 0)),
      committed_(std::exchange(other.committed_, 0)),
      size_(std::exchange(other.size_, 0)) {}

ReservedMemory& ReservedMemory::operator=(ReservedMemory&& other) noexcept {
  if (this != &other) {
    release();
    base_ = std::exchange(other.base_, nullptr);
    reserved_ = std::exchange(other.reserved_, 0);
    committed_ = std::exchange(other.committed_, 0);
    size_ = std::exchange(other.size_, 0);
  }
  return *this;
}

void ReservedMemory::release() {
  if (base_ != nullptr) ::munmap(base_, reserved_);
  base_ = nullptr;
}

void ReservedMemory::resize(std::size_t bytes) {
  if (bytes > reserved_) {
    throw std::length_error("ReservedMemory: " + std::to_string(bytes) +
                            " bytes exceeds reservation of " + std::to_string(reserved_));
  }
  const std::size_t want = round_up(bytes, page_size());
  if (want > committed_) {
    if (::mprotect(base_ + committed_, want - committed_, PROT_READ | PROT_WRITE) != 0) {
      throw std::system_error(errno, std::generic_category(), "commit");
    }
  } else if (want < committed_) {
    ::madvise(base_ + want, committed_ - want, MADV_DONTNEED);
    ::mprotect(base_ + want, committed_ - want, PROT_NONE);
  }
  // Bytes between the logical end and the page end must read as zero after
  // a shrink/regrow cycle, same as fresh pages.
  if (bytes < size_ && want > bytes) {
    std::memset(base_ + bytes, 0, std::min(size_, want) - bytes);
  }
  committed_ = want;
  size_ = bytes;
}

}  // namespace iceberg
