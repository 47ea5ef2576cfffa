#include "iceberg/durable_region.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cassert>
#include <cerrno>
#include <cstring>
#include <random>
#include <system_error>

#include "iceberg/reserved_memory.hpp"
#include "iceberg/sync.hpp"

#if defined(__x86_64__)
#include <immintrin.h>
#else
#error "16-byte atomic slot access is implemented for x86-64 only"
#endif

namespace iceberg {
namespace {

constexpr std::size_t kLockStripes = 1024;

std::size_t round_up(std::size_t n, std::size_t to) { return (n + to - 1) / to * to; }

// Aligned 16-byte SSE loads/stores are single-copy atomic on processors
// that support AVX.
inline void atomic_store_16(std::byte* p, std::uint64_t lo, std::uint64_t hi) {
  const __m128i v = _mm_set_epi64x(static_cast<long long>(hi), static_cast<long long>(lo));
  std::atomic_signal_fence(std::memory_order_release);
  _mm_store_si128(reinterpret_cast<__m128i*>(p), v);
  std::atomic_signal_fence(std::memory_order_seq_cst);
}

inline std::pair<std::uint64_t, std::uint64_t> atomic_load_16(const std::byte* p) {
  std::atomic_signal_fence(std::memory_order_seq_cst);
  const __m128i v = _mm_load_si128(reinterpret_cast<const __m128i*>(p));
  std::atomic_signal_fence(std::memory_order_acquire);
  return {static_cast<std::uint64_t>(_mm_cvtsi128_si64(v)),
          static_cast<std::uint64_t>(_mm_cvtsi128_si64(_mm_unpackhi_epi64(v, v)))};
}

inline std::atomic_ref<std::uint64_t> word_ref(std::byte* p) {
  return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(p));
}
inline std::uint64_t load_word_at(const std::byte* p) {
  return std::atomic_ref<std::uint64_t>(*const_cast<std::uint64_t*>(reinterpret_cast<const std::uint64_t*>(p)))
      .load(std::memory_order_acquire);
}

}  // namespace

struct DurableRegion::Impl {
  std::string name;
  RegionObserver* observer = nullptr;
  ShardedCounter stores, words, flushes, lines;
  std::atomic<std::int64_t> flush_budget{-1};

  virtual ~Impl() = default;
  virtual Backend backend() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t reserved() const = 0;
  virtual void resize(std::size_t bytes) = 0;
  virtual std::byte* live() = 0;
  virtual const std::byte* durable() const = 0;
  // Records that words [first_word, first_word + n) of a line were stored.
  virtual void mark(std::size_t offset, std::size_t len) = 0;
  virtual void writeback(std::size_t first_line, std::size_t last_line) = 0;
  virtual void sync() {}
};

struct DurableRegion::ShadowImpl final : DurableRegion::Impl {
  ReservedMemory live_mem, durable_mem;
  ReservedArray<std::atomic<std::uint8_t>> dirty;  // one word bitmap per line
  std::array<ByteLock, kLockStripes> stripes{};
  std::size_t size_ = 0;

  explicit ShadowImpl(std::size_t reserve)
      : live_mem(reserve), durable_mem(reserve), dirty(round_up(reserve, kLineSize) / kLineSize) {}

  Backend backend() const override { return Backend::kShadow; }
  std::size_t size() const override { return size_; }
  std::size_t reserved() const override { return live_mem.reserved(); }
  std::byte* live() override { return live_mem.data(); }
  const std::byte* durable() const override { return durable_mem.data(); }

  void resize(std::size_t bytes) override {
    live_mem.resize(bytes);
    durable_mem.resize(bytes);
    const std::size_t lines = round_up(bytes, kLineSize) / kLineSize;
    const std::size_t old_lines = round_up(size_, kLineSize) / kLineSize;
    dirty.resize(lines);
    for (std::size_t l = std::min(lines, old_lines); l < lines; ++l) dirty[l].store(0, std::memory_order_relaxed);
    size_ = bytes;
  }

  void mark(std::size_t offset, std::size_t len) override {
    for (std::size_t w = offset / kWordSize; w < (offset + len) / kWordSize; ++w) {
      const std::size_t line = w / (kLineSize / kWordSize);
      dirty[line].fetch_or(static_cast<std::uint8_t>(1u << (w % 8)), std::memory_order_release);
    }
  }

  void writeback(std::size_t first_line, std::size_t last_line) override {
    for (std::size_t l = first_line; l <= last_line; ++l) {
      auto& stripe = stripes[l % kLockStripes];
      stripe.lock();
      dirty[l].exchange(0, std::memory_order_acq_rel);
      const std::size_t base = l * kLineSize;
      const std::size_t end = std::min(base + kLineSize, size_);
      for (std::size_t off = base; off < end; off += kWordSize) {
        word_ref(durable_mem.data() + off).store(load_word_at(live_mem.data() + off), std::memory_order_relaxed);
      }
      stripe.unlock();
    }
  }
};

struct DurableRegion::FileImpl final : DurableRegion::Impl {
  std::filesystem::path path;
  int fd = -1;
  std::byte* base = nullptr;
  std::size_t reserve = 0;
  std::size_t mapped = 0;  // page-rounded
  std::size_t size_ = 0;

  FileImpl(const std::filesystem::path& p, std::size_t reserve_bytes, bool create) : path(p) {
    reserve = round_up(std::max<std::size_t>(reserve_bytes, 1), ReservedMemory::page_size());
    fd = ::open(p.c_str(), O_RDWR | (create ? O_CREAT | O_TRUNC : 0), 0644);
    if (fd < 0) throw std::system_error(errno, std::generic_category(), "open " + p.string());
    void* r = ::mmap(nullptr, reserve, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (r == MAP_FAILED) {
      ::close(fd);
      throw std::system_error(errno, std::generic_category(), "reserve mapping");
    }
    base = static_cast<std::byte*>(r);
    struct stat st{};
    ::fstat(fd, &st);
    if (!create && st.st_size > 0) resize(static_cast<std::size_t>(st.st_size));
  }

  ~FileImpl() override {
    if (base != nullptr) {
      if (mapped > 0) ::msync(base, mapped, MS_SYNC);
      ::munmap(base, reserve);
    }
    if (fd >= 0) ::close(fd);
  }

  Backend backend() const override { return Backend::kFile; }
  std::size_t size() const override { return size_; }
  std::size_t reserved() const override { return reserve; }
  std::byte* live() override { return base; }
  const std::byte* durable() const override { return base; }

  void resize(std::size_t bytes) override {
    if (bytes > reserve) throw RegionError(path.string() + ": resize beyond reservation");
    const std::size_t want = round_up(bytes, ReservedMemory::page_size());
    if (want > mapped) {
      if (::ftruncate(fd, static_cast<off_t>(want)) != 0) {
        throw std::system_error(errno, std::generic_category(), "ftruncate " + path.string());
      }
      void* p = ::mmap(base + mapped, want - mapped, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_FIXED, fd,
                       static_cast<off_t>(mapped));
      if (p == MAP_FAILED) throw std::system_error(errno, std::generic_category(), "mmap " + path.string());
    } else if (want < mapped) {
      ::msync(base + want, mapped - want, MS_SYNC);
      ::mmap(base + want, mapped - want, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE | MAP_FIXED, -1, 0);
      if (::ftruncate(fd, static_cast<off_t>(want)) != 0) {
        throw std::system_error(errno, std::generic_category(), "ftruncate " + path.string());
      }
    }
    mapped = want;
    size_ = bytes;
  }

  void mark(std::size_t, std::size_t) override {}

  void writeback(std::size_t first_line, std::size_t last_line) override {
    for (std::size_t l = first_line; l <= last_line; ++l) {
      _mm_clflush(base + l * kLineSize);
    }
    _mm_sfence();
  }

  void sync() override {
    if (mapped > 0) ::msync(base, mapped, MS_SYNC);
  }
};

DurableRegion::DurableRegion() = default;
DurableRegion::~DurableRegion() = default;
DurableRegion::DurableRegion(DurableRegion&&) noexcept = default;
DurableRegion& DurableRegion::operator=(DurableRegion&&) noexcept = default;
DurableRegion::DurableRegion(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

DurableRegion DurableRegion::shadow(std::string name, std::size_t reserve_bytes) {
  auto impl = std::make_unique<ShadowImpl>(reserve_bytes);
  impl->name = std::move(name);
  return DurableRegion(std::move(impl));
}

DurableRegion DurableRegion::file(const std::filesystem::path& path, std::size_t reserve_bytes, bool create) {
  auto impl = std::make_unique<FileImpl>(path, reserve_bytes, create);
  impl->name = path.filename().string();
  return DurableRegion(std::move(impl));
}

Backend DurableRegion::backend() const { return impl_->backend(); }
const std::string& DurableRegion::name() const { return impl_->name; }
std::size_t DurableRegion::size() const { return impl_->size(); }
std::size_t DurableRegion::reserved() const { return impl_->reserved(); }
void DurableRegion::resize(std::size_t bytes) { impl_->resize(bytes); }
const std::byte* DurableRegion::live_data() const { return impl_->live(); }
const std::byte* DurableRegion::durable_data() const { return impl_->durable(); }
void DurableRegion::set_observer(RegionObserver* observer) { impl_->observer = observer; }
void DurableRegion::sync() { impl_->sync(); }
void DurableRegion::fail_flushes_after(std::int64_t n) { impl_->flush_budget.store(n); }

void DurableRegion::check_access(std::size_t offset, std::size_t len, std::size_t align) const {
  if (offset % align != 0 || len % kWordSize != 0 || offset + len > size()) {
    throw RegionError(name() + ": bad store at offset " + std::to_string(offset));
  }
}

void DurableRegion::store_word(std::size_t offset, std::uint64_t word) {
  check_access(offset, kWordSize, kWordSize);
  word_ref(impl_->live() + offset).store(word, std::memory_order_release);
  impl_->mark(offset, kWordSize);
  impl_->stores.add(1);
  impl_->words.add(1);
  if (impl_->observer != nullptr) impl_->observer->after_store(*this, offset, kWordSize);
}

void DurableRegion::store_pair(std::size_t offset, std::uint64_t first, std::uint64_t second) {
  check_access(offset, 16, 16);
  atomic_store_16(impl_->live() + offset, first, second);
  impl_->mark(offset, 16);
  impl_->stores.add(1);
  impl_->words.add(2);
  if (impl_->observer != nullptr) impl_->observer->after_store(*this, offset, 16);
}

void DurableRegion::fill(std::size_t offset, std::size_t len, std::uint64_t word) {
  check_access(offset, len, kWordSize);
  auto* p = reinterpret_cast<std::uint64_t*>(impl_->live() + offset);
  std::fill(p, p + len / kWordSize, word);
  impl_->mark(offset, len);
  impl_->stores.add(static_cast<std::int64_t>(len / kWordSize));
  impl_->words.add(static_cast<std::int64_t>(len / kWordSize));
  if (impl_->observer != nullptr) impl_->observer->after_store(*this, offset, len);
}

std::uint64_t DurableRegion::load_word(std::size_t offset) const {
  assert(offset % kWordSize == 0 && offset + kWordSize <= size());
  return load_word_at(impl_->live() + offset);
}

std::pair<std::uint64_t, std::uint64_t> DurableRegion::load_pair(std::size_t offset) const {
  assert(offset % 16 == 0 && offset + 16 <= size());
  return atomic_load_16(impl_->live() + offset);
}

void DurableRegion::flush_fence(std::size_t offset, std::size_t len) {
  if (len == 0) return;
  if (impl_->flush_budget.load(std::memory_order_relaxed) >= 0 &&
      impl_->flush_budget.fetch_sub(1, std::memory_order_relaxed) <= 0) {
    impl_->flush_budget.store(0);
    throw RegionError(name() + ": simulated writeback failure");
  }
  const std::size_t first = offset / kLineSize;
  const std::size_t last = (offset + len - 1) / kLineSize;
  impl_->writeback(first, last);
  impl_->flushes.add(1);
  impl_->lines.add(static_cast<std::int64_t>(last - first + 1));
  if (impl_->observer != nullptr) impl_->observer->after_flush(*this, offset, len);
}

std::size_t DurableRegion::dirty_line_count() const {
  if (backend() != Backend::kShadow) return 0;
  const auto& s = static_cast<const ShadowImpl&>(*impl_);
  std::size_t n = 0;
  for (std::size_t l = 0; l < s.dirty.size(); ++l) n += s.dirty[l].load(std::memory_order_relaxed) != 0;
  return n;
}

std::vector<std::size_t> DurableRegion::dirty_words() const {
  std::vector<std::size_t> out;
  if (backend() != Backend::kShadow) return out;
  const auto& s = static_cast<const ShadowImpl&>(*impl_);
  for (std::size_t l = 0; l < s.dirty.size(); ++l) {
    const std::uint8_t bits = s.dirty[l].load(std::memory_order_relaxed);
    for (unsigned w = 0; w < 8; ++w) {
      if (bits & (1u << w)) out.push_back(l * kLineSize + w * kWordSize);
    }
  }
  return out;
}

DurableRegion DurableRegion::crash_with(const std::function<bool(std::size_t)>& persist) const {
  if (backend() != Backend::kShadow) throw std::logic_error("crash injection needs the shadow backend");
  const auto& src = static_cast<const ShadowImpl&>(*impl_);
  auto impl = std::make_unique<ShadowImpl>(src.live_mem.reserved());
  impl->name = src.name;
  impl->resize(src.size_);
  std::memcpy(impl->durable_mem.data(), src.durable_mem.data(), src.size_);
  for (std::size_t off : dirty_words()) {
    if (persist(off)) {
      std::memcpy(impl->durable_mem.data() + off, src.live_mem.data() + off, kWordSize);
    }
  }
  std::memcpy(impl->live_mem.data(), impl->durable_mem.data(), src.size_);
  return DurableRegion(std::move(impl));
}

DurableRegion DurableRegion::crash(Tearing tearing, std::uint64_t seed) const {
  if (tearing == Tearing::kDropAll) {
    return crash_with([](std::size_t) { return false; });
  }
  std::mt19937_64 rng(seed);
  return crash_with([&rng](std::size_t) { return (rng() & 1) != 0; });
}

RegionStats DurableRegion::stats() const {
  return RegionStats{static_cast<std::uint64_t>(impl_->stores.sum()), static_cast<std::uint64_t>(impl_->words.sum()),
                     static_cast<std::uint64_t>(impl_->flushes.sum()), static_cast<std::uint64_t>(impl_->lines.sum())};
}

void DurableRegion::reset_stats() {
  impl_->stores.reset();
  impl_->words.reset();
  impl_->flushes.reset();
  impl_->lines.reset();
}

}  // namespace iceberg
