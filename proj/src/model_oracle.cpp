#include "iceberg/model_oracle.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "iceberg/hash.hpp"

namespace iceberg {

ZipfGenerator::ZipfGenerator(std::uint64_t n, double s) : cdf_(std::max<std::uint64_t>(n, 1)) {
  double sum = 0.0;
  for (std::uint64_t i = 0; i < cdf_.size(); ++i) {
    sum += 1.0 / std::pow(static_cast<double>(i + 1), s);
    cdf_[i] = sum;
  }
  for (auto& c : cdf_) c /= sum;
}

std::uint64_t ZipfGenerator::operator()(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<std::uint64_t>(static_cast<std::uint64_t>(it - cdf_.begin()), cdf_.size() - 1);
}

Key trace_key(std::uint64_t index, std::uint64_t seed) { return fmix64(index ^ (seed * 0x9E3779B97F4A7C15ULL)); }

std::vector<Op> make_trace(const TraceSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::optional<ZipfGenerator> zipf;
  if (spec.skew == Skew::kZipf) zipf.emplace(spec.key_space, spec.zipf_s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Op> ops;
  ops.reserve(spec.ops);
  for (std::size_t i = 0; i < spec.ops; ++i) {
    const double maint = unit(rng);
    if (maint < spec.grow_rate) {
      ops.push_back({OpKind::kGrow, 0, 0});
      continue;
    }
    if (maint < spec.grow_rate + spec.shrink_rate) {
      ops.push_back({OpKind::kShrink, 0, 0});
      continue;
    }
    if (maint < spec.grow_rate + spec.shrink_rate + spec.recover_rate) {
      ops.push_back({OpKind::kRecover, 0, 0});
      continue;
    }
    const std::uint64_t idx = zipf ? (*zipf)(rng) : rng() % spec.key_space;
    const Key key = (idx == 0 && spec.include_invalid_key) ? kInvalid : trace_key(idx, spec.seed);
    const double r = unit(rng);
    if (r < spec.insert_fraction) {
      ops.push_back({OpKind::kInsert, key, rng() >> 1});
    } else if (r < spec.insert_fraction + spec.remove_fraction) {
      ops.push_back({OpKind::kRemove, key, 0});
    } else {
      ops.push_back({OpKind::kGet, key, 0});
    }
  }
  return ops;
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::map<Key, Value> snapshot(const Table& t) {
  std::map<Key, Value> out;
  t.for_each([&out](Key k, Value v, const Location&) { out[k] = v; });
  return out;
}

std::unique_ptr<Table> reopen(std::unique_ptr<Table> t, const TableConfig& config) {
  Store store = std::move(t->store());
  t.reset();
  if (store.backend() == Backend::kShadow) store = store.crash(Tearing::kDropAll, 0);
  return Table::recover(std::move(store), config);
}

}  // namespace

Verdict differential_test(const std::vector<Op>& trace, const TableConfig& config) {
  Verdict verdict;
  auto table = std::make_unique<Table>(config);
  std::unordered_map<Key, Value> ref;
  auto fail = [&](std::size_t i, const std::string& what) {
    verdict.pass = false;
    verdict.first_divergence = i;
    verdict.detail = "op " + std::to_string(i) + ": " + what;
  };

  for (std::size_t i = 0; i < trace.size() && verdict.pass; ++i) {
    const Op& op = trace[i];
    try {
      switch (op.kind) {
        case OpKind::kInsert: {
          const bool had = ref.count(op.key) != 0;
          const auto r = table->insert(op.key, op.value);
          ref[op.key] = op.value;
          if ((r == InsertResult::kUpdated) != had) fail(i, "insert " + hex(op.key) + " reported the wrong outcome");
          break;
        }
        case OpKind::kRemove: {
          const bool want = ref.erase(op.key) != 0;
          if (table->remove(op.key) != want) fail(i, "remove " + hex(op.key) + " returned " + (want ? "false" : "true"));
          break;
        }
        case OpKind::kGet: {
          const auto got = table->get(op.key);
          const auto it = ref.find(op.key);
          const std::optional<Value> want = it == ref.end() ? std::nullopt : std::optional<Value>(it->second);
          if (got != want) fail(i, "get " + hex(op.key) + " disagrees with the reference");
          break;
        }
        case OpKind::kGrow:
          table->grow();
          ++verdict.grows;
          break;
        case OpKind::kShrink:
          if (table->shrink()) ++verdict.shrinks;
          break;
        case OpKind::kRecover:
          table = reopen(std::move(table), config);
          ++verdict.recoveries;
          break;
      }
    } catch (const std::exception& e) {
      fail(i, std::string("exception: ") + e.what());
    }
    if (verdict.pass && table->size() != ref.size()) {
      fail(i, "size " + std::to_string(table->size()) + " vs reference " + std::to_string(ref.size()));
    }
    ++verdict.ops_run;
  }

  verdict.grows = std::max<std::uint64_t>(verdict.grows, table->resize_status().grows);
  if (verdict.pass) {
    table->finish_migration();
    const auto content = snapshot(*table);
    const std::map<Key, Value> expected(ref.begin(), ref.end());
    if (content != expected) fail(trace.size(), "final content differs from the reference");
    const auto inv = table->check_invariants();
    if (verdict.pass && !inv.ok()) fail(trace.size(), "invariant: " + inv.problems.front());
  }
  verdict.final_size = table->size();
  return verdict;
}

// ---------------------------------------------------------------------------

StressVerdict concurrent_stress(const StressSpec& spec) {
  StressVerdict verdict;
  TableConfig config;
  config.log_initial_blocks = spec.log_initial_blocks;
  config.hash_seed = spec.seed * 31 + 7;
  config.store.max_log_blocks = 20;
  Table table(config);

  std::mutex fail_mu;
  auto fail = [&](const std::string& what) {
    std::lock_guard<std::mutex> lock(fail_mu);
    verdict.pass = false;
    if (verdict.failures.size() < 16) verdict.failures.push_back(what);
  };

  const unsigned n = std::max(spec.threads, 1u);
  const std::uint64_t ops = spec.per_thread_ops;
  constexpr unsigned kSeqBits = 40;
  const std::uint64_t shared = std::max<std::uint64_t>(spec.shared_keys, 2);
  const std::uint64_t insert_only = shared / 2;  // keys [0, insert_only) are never removed
  auto shared_key = [&](std::uint64_t i) { return trace_key(i + 1, spec.seed); };

  // Shared mode bookkeeping: the key written at each op index, per thread.
  std::vector<std::vector<Key>> written(n, std::vector<Key>(spec.disjoint_keys ? 0 : ops, kInvalid));
  std::vector<std::vector<std::pair<Key, Value>>> observed(n);
  std::vector<std::unordered_map<Key, Value>> models(n);

  std::atomic<bool> done{false};
  std::mutex wd_mu;
  std::condition_variable wd_cv;
  std::thread watchdog([&] {
    std::unique_lock<std::mutex> lock(wd_mu);
    const auto limit = std::chrono::duration<double>(spec.watchdog_seconds);
    if (!wd_cv.wait_for(lock, limit, [&] { return done.load(); })) {
      if (spec.on_timeout) {
        spec.on_timeout();
      } else {
        std::fprintf(stderr, "concurrent_stress: watchdog expired after %.0f s\n", spec.watchdog_seconds);
        std::_Exit(3);
      }
    }
  });

  const auto start = std::chrono::steady_clock::now();
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < n; ++t) {
    workers.emplace_back([&, t] {
      std::mt19937_64 rng(spec.seed * 1000003 + t);
      try {
        if (spec.disjoint_keys) {
          auto& model = models[t];
          for (std::uint64_t i = 0; i < ops; ++i) {
            const Key key = trace_key(1 + t * spec.keys_per_thread + rng() % spec.keys_per_thread, spec.seed);
            const unsigned r = static_cast<unsigned>(rng() % 100);
            if (r < 45) {
              const Value v = rng() >> 1;
              const bool had = model.count(key) != 0;
              model[key] = v;
              if ((table.insert(key, v) == InsertResult::kUpdated) != had) fail("insert outcome mismatch");
            } else if (r < 70) {
              if (table.remove(key) != (model.erase(key) != 0)) fail("remove outcome mismatch");
            } else {
              const auto got = table.get(key);
              const auto it = model.find(key);
              if (got.has_value() != (it != model.end()) || (got && *got != it->second)) fail("get mismatch");
            }
            if (t == 0 && i % 25000 == 24999) table.shrink();
          }
        } else {
          if (t == 0) {
            for (std::uint64_t k = 0; k < insert_only; ++k) table.insert(shared_key(k), Value{1} << 62);
          }
          for (std::uint64_t i = 0; i < ops; ++i) {
            const std::uint64_t ki = rng() % shared;
            const Key key = shared_key(ki);
            const unsigned r = static_cast<unsigned>(rng() % 100);
            if (r < 40 || (ki < insert_only && r < 70)) {
              const Value v = (std::uint64_t{t} << kSeqBits) | i;
              written[t][i] = key;
              table.insert(key, v);
            } else if (r < 70) {
              table.remove(key);
            } else if (auto got = table.get(key)) {
              observed[t].emplace_back(key, *got);
            }
          }
        }
      } catch (const std::exception& e) {
        fail(std::string("exception: ") + e.what());
      }
    });
  }
  for (auto& w : workers) w.join();
  verdict.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  {
    std::lock_guard<std::mutex> lock(wd_mu);
    done = true;
  }
  wd_cv.notify_all();
  watchdog.join();

  verdict.ops = ops * n;
  table.finish_migration();
  const auto content = snapshot(table);

  if (spec.disjoint_keys) {
    std::map<Key, Value> expected;
    for (const auto& m : models) expected.insert(m.begin(), m.end());
    if (content != expected) fail("final content differs from the per-thread models");
  } else {
    auto valid = [&](Key key, Value v) {
      if (v == (Value{1} << 62)) return true;  // initial insert-only value
      const std::uint64_t t = v >> kSeqBits, i = v & ((std::uint64_t{1} << kSeqBits) - 1);
      return t < n && i < ops && written[t][i] == key;
    };
    for (const auto& [k, v] : content) {
      if (!valid(k, v)) fail("key " + hex(k) + " holds a value nobody wrote");
    }
    for (unsigned t = 0; t < n; ++t) {
      for (const auto& [k, v] : observed[t]) {
        if (!valid(k, v)) fail("get returned a value nobody wrote");
      }
    }
    for (std::uint64_t k = 0; k < insert_only; ++k) {
      if (!content.count(shared_key(k))) fail("insert-only key " + hex(shared_key(k)) + " was lost");
    }
  }
  if (content.size() != table.size()) fail("count disagrees with a full scan");
  const auto inv = table.check_invariants();
  for (const auto& p : inv.problems) fail("invariant: " + p);
  verdict.final_size = table.size();
  verdict.generation = table.generation();
  return verdict;
}

// ---------------------------------------------------------------------------

namespace {

class CrashPointObserver : public RegionObserver {
 public:
  explicit CrashPointObserver(std::function<void()> fn) : fn_(std::move(fn)) {}
  void after_store(const DurableRegion&, std::size_t, std::size_t) override { fn_(); }
  void after_flush(const DurableRegion&, std::size_t, std::size_t) override { fn_(); }

 private:
  std::function<void()> fn_;
};

}  // namespace

CrashSweepResult crash_sweep(const CrashSweepSpec& spec) {
  CrashSweepResult result;
  const auto start = std::chrono::steady_clock::now();
  TableConfig config = spec.config;
  config.store.backend = Backend::kShadow;
  const auto trace = make_trace(spec.trace);
  auto table = std::make_unique<Table>(config);

  std::map<Key, Value> before, after;
  std::size_t op_index = 0;
  std::mt19937_64 rng(spec.trace.seed ^ 0x5bd1e995);

  auto note = [&](const std::string& what) {
    ++result.failures;
    if (result.examples.size() < 8) result.examples.push_back("op " + std::to_string(op_index) + ": " + what);
  };
  auto check = [&](Store crashed) {
    ++result.outcomes;
    try {
      auto rec = Table::recover(std::move(crashed), config);
      const auto content = snapshot(*rec);
      if (content != before && content != after) note("recovered content matches neither side of the op");
      const auto inv = rec->check_invariants();
      if (!inv.ok()) note("invariant: " + inv.problems.front());
    } catch (const std::exception& e) {
      note(std::string("recovery threw: ") + e.what());
    }
  };

  std::uint64_t seen_points = 0;
  CrashPointObserver observer([&] {
    if (seen_points++ % std::max<std::uint64_t>(spec.stride, 1) != 0) return;
    if (spec.max_points && result.crash_points >= spec.max_points) return;
    ++result.crash_points;
    const Store& live = table->store();
    if (spec.drop_all) check(live.crash_with([](const DirtyWord&) { return false; }));
    if (!spec.word_subsets) return;
    const auto dirty = live.dirty_words();
    if (dirty.empty()) return;
    auto index_of = [&dirty](const DirtyWord& w) {
      const auto it = std::lower_bound(dirty.begin(), dirty.end(), w, [](const DirtyWord& a, const DirtyWord& b) {
        return a.region != b.region ? a.region < b.region : a.offset < b.offset;
      });
      return static_cast<std::size_t>(it - dirty.begin());
    };
    if (dirty.size() <= spec.exhaustive_limit) {
      for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << dirty.size()); ++mask) {
        check(live.crash_with([&](const DirtyWord& w) { return ((mask >> index_of(w)) & 1) != 0; }));
      }
    } else {
      for (std::size_t s = 0; s < spec.sampled_subsets; ++s) {
        check(live.crash(Tearing::kWordSubset, rng()));
      }
      check(live.crash_with([](const DirtyWord&) { return true; }));
    }
  });
  table->store().set_observer(&observer);

  for (; op_index < trace.size(); ++op_index) {
    const Op& op = trace[op_index];
    after = before;
    switch (op.kind) {
      case OpKind::kInsert: after[op.key] = op.value; break;
      case OpKind::kRemove: after.erase(op.key); break;
      default: break;
    }
    try {
      switch (op.kind) {
        case OpKind::kInsert: table->insert(op.key, op.value); break;
        case OpKind::kRemove: table->remove(op.key); break;
        case OpKind::kGet: table->get(op.key); break;
        case OpKind::kGrow: table->grow(); break;
        case OpKind::kShrink: table->shrink(); break;
        case OpKind::kRecover:
          table->store().set_observer(nullptr);
          table = reopen(std::move(table), config);
          table->store().set_observer(&observer);
          break;
      }
    } catch (const std::exception& e) {
      note(std::string("operation threw: ") + e.what());
      break;
    }
    before = after;
    ++result.ops;
  }
  table->store().set_observer(nullptr);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace iceberg
