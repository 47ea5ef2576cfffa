#include "iceberg/store.hpp"

#include <random>
#include <string>

namespace iceberg {
namespace {

constexpr std::size_t round_line(std::size_t n) {
  return (n + DurableRegion::kLineSize - 1) / DurableRegion::kLineSize * DurableRegion::kLineSize;
}

std::size_t reservation(RegionId id, unsigned max_log_blocks) {
  const std::size_t max_blocks = std::size_t{1} << max_log_blocks;
  switch (id) {
    case RegionId::kMeta: return kMetaBytes;
    case RegionId::kLevel1: return max_blocks * kLevel1BlockBytes;
    case RegionId::kLevel2: return max_blocks * kLevel2BlockBytes;
    case RegionId::kHeads: return round_line(max_blocks * kHeadBytes);
    case RegionId::kArena: return arena_capacity_for(max_blocks) * kNodeBytes;
  }
  return 0;
}

}  // namespace

std::string_view region_name(RegionId id) {
  switch (id) {
    case RegionId::kMeta: return "meta";
    case RegionId::kLevel1: return "level1";
    case RegionId::kLevel2: return "level2";
    case RegionId::kHeads: return "level3_heads";
    case RegionId::kArena: return "level3_arena";
  }
  return "?";
}

std::array<SubRegion, kRegionCount> region_layout(const GlobalMeta& meta) {
  const std::size_t m = meta.block_count();
  return {{
      {RegionId::kMeta, kMetaBytes},
      {RegionId::kLevel1, m * kLevel1BlockBytes},
      {RegionId::kLevel2, m * kLevel2BlockBytes},
      {RegionId::kHeads, round_line(m * kHeadBytes)},
      {RegionId::kArena, meta.arena_capacity * kNodeBytes},
  }};
}

Store Store::create(const StoreOptions& options) {
  Store s;
  s.backend_ = options.backend;
  s.max_log_blocks_ = options.max_log_blocks;
  if (options.backend == Backend::kFile) std::filesystem::create_directories(options.directory);
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto id = static_cast<RegionId>(i);
    const std::size_t reserve = reservation(id, options.max_log_blocks);
    if (options.backend == Backend::kShadow) {
      s.regions_[i] = DurableRegion::shadow(std::string(region_name(id)), reserve);
    } else {
      s.regions_[i] = DurableRegion::file(options.directory / (std::string(region_name(id)) + ".ice"), reserve, true);
    }
  }
  return s;
}

Store Store::open(const StoreOptions& options) {
  if (options.backend != Backend::kFile) throw std::invalid_argument("Store::open needs the file backend");
  Store s;
  s.backend_ = options.backend;
  s.max_log_blocks_ = options.max_log_blocks;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto id = static_cast<RegionId>(i);
    const auto path = options.directory / (std::string(region_name(id)) + ".ice");
    if (!std::filesystem::exists(path)) throw FormatError("missing region file " + path.string());
    s.regions_[i] = DurableRegion::file(path, reservation(id, options.max_log_blocks), false);
  }
  return s;
}

void Store::apply_layout(const GlobalMeta& meta) {
  for (const auto& sub : region_layout(meta)) {
    auto& r = region(sub.id);
    if (r.size() != sub.length) r.resize(sub.length);
  }
}

GlobalMeta Store::read_meta() const {
  const auto& r = region(RegionId::kMeta);
  if (r.size() < kMetaBytes) throw FormatError("global metadata region is truncated");
  GlobalMeta meta;
  meta.magic = r.load_word(0);
  meta.initial_block_count = r.load_word(8);
  meta.generation = r.load_word(16);
  meta.arena_capacity = r.load_word(24);
  meta.hash_seed = r.load_word(32);
  if (meta.magic != kMagic) throw FormatError("bad magic in global metadata");
  if (meta.initial_block_count == 0 || meta.generation >= 48 || meta.arena_capacity == 0) {
    throw FormatError("corrupt global metadata");
  }
  if (max_log_blocks_ != 0 && meta.block_count() > (std::uint64_t{1} << max_log_blocks_)) {
    throw FormatError("table is larger than the configured reservation");
  }
  return meta;
}

void Store::write_meta_word(std::size_t index, std::uint64_t value) {
  auto& r = region(RegionId::kMeta);
  r.store_word(index * 8, value);
  r.flush_fence(index * 8, 8);
}

void Store::write_meta(const GlobalMeta& meta) {
  auto& r = region(RegionId::kMeta);
  if (r.size() < kMetaBytes) r.resize(kMetaBytes);
  // Magic goes last so a crash mid-creation leaves an unrecognisable store.
  r.store_word(8, meta.initial_block_count);
  r.store_word(16, meta.generation);
  r.store_word(24, meta.arena_capacity);
  r.store_word(32, meta.hash_seed);
  r.flush_fence(0, 64);
  r.store_word(0, meta.magic);
  r.flush_fence(0, 8);
}

std::vector<DirtyWord> Store::dirty_words() const {
  std::vector<DirtyWord> out;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    for (std::size_t off : regions_[i].dirty_words()) out.push_back({static_cast<RegionId>(i), off});
  }
  return out;
}

Store Store::crash_with(const std::function<bool(const DirtyWord&)>& persist) const {
  Store s;
  s.backend_ = backend_;
  s.max_log_blocks_ = max_log_blocks_;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto id = static_cast<RegionId>(i);
    s.regions_[i] = regions_[i].crash_with([&](std::size_t off) { return persist(DirtyWord{id, off}); });
  }
  return s;
}

Store Store::crash(Tearing tearing, std::uint64_t seed) const {
  if (tearing == Tearing::kDropAll) return crash_with([](const DirtyWord&) { return false; });
  std::mt19937_64 rng(seed);
  return crash_with([&rng](const DirtyWord&) { return (rng() & 1) != 0; });
}

void Store::set_observer(RegionObserver* observer) {
  for (auto& r : regions_) r.set_observer(observer);
}

RegionStats Store::stats() const {
  RegionStats total;
  for (const auto& r : regions_) {
    const auto s = r.stats();
    total.stores += s.stores;
    total.words_stored += s.words_stored;
    total.flushes += s.flushes;
    total.lines_flushed += s.lines_flushed;
  }
  return total;
}

void Store::reset_stats() {
  for (auto& r : regions_) r.reset_stats();
}

std::size_t Store::footprint() const {
  std::size_t total = 0;
  for (const auto& r : regions_) total += r.size();
  return total;
}

void Store::sync() {
  for (auto& r : regions_) r.sync();
}

}  // namespace iceberg
