#pragma once

// Reference-model testing: replayable operation traces, a differential
// runner against std::unordered_map, concurrent stress with per-key oracles,
// and an exhaustive crash-point sweep over the shadow backend.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iceberg/table.hpp"

namespace iceberg {

// Zipf(s) over [0, n), drawn by inverting a precomputed CDF.
class ZipfGenerator {
 public:
  ZipfGenerator(std::uint64_t n, double s);
  std::uint64_t operator()(std::mt19937_64& rng) const;
  std::uint64_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

enum class OpKind : std::uint8_t { kInsert, kRemove, kGet, kGrow, kShrink, kRecover };

struct Op {
  OpKind kind = OpKind::kGet;
  Key key = 0;
  Value value = 0;
};

enum class Skew { kUniform, kZipf };

struct TraceSpec {
  std::uint64_t seed = 1;
  std::size_t ops = 1000;
  std::uint64_t key_space = 1000;
  Skew skew = Skew::kUniform;
  double zipf_s = 0.99;
  double insert_fraction = 0.5;
  double remove_fraction = 0.25;  // the rest are gets
  // Per-op probability of each maintenance op (grow, shrink, recover).
  double grow_rate = 0.0;
  double shrink_rate = 0.0;
  double recover_rate = 0.0;
  // Key index 0 maps to the INVALID sentinel.
  bool include_invalid_key = true;
};

// Key index -> 64-bit key (a bijection, so distinct indices never collide).
Key trace_key(std::uint64_t index, std::uint64_t seed);

std::vector<Op> make_trace(const TraceSpec& spec);

struct Verdict {
  bool pass = true;
  std::size_t ops_run = 0;
  std::size_t first_divergence = 0;  // op index, valid when !pass
  std::string detail;
  std::uint64_t grows = 0;
  std::uint64_t shrinks = 0;
  std::uint64_t recoveries = 0;
  std::uint64_t final_size = 0;
};

// Replays `trace` against a reference map and a fresh table. Recover ops
// crash the shadow store (nothing is dirty between ops) and rebuild.
Verdict differential_test(const std::vector<Op>& trace, const TableConfig& config);

struct StressSpec {
  unsigned threads = 8;
  std::uint64_t per_thread_ops = 100000;
  bool disjoint_keys = true;
  std::uint64_t keys_per_thread = 2000;  // disjoint mode
  std::uint64_t shared_keys = 100;       // shared mode
  std::uint64_t seed = 1;
  unsigned log_initial_blocks = 2;
  double watchdog_seconds = 60.0;
  // Called from the watchdog thread on timeout; defaults to aborting the process.
  std::function<void()> on_timeout;
};

struct StressVerdict {
  bool pass = true;
  std::vector<std::string> failures;
  std::uint64_t ops = 0;
  std::uint64_t final_size = 0;
  std::uint64_t generation = 0;
  double seconds = 0.0;
};

StressVerdict concurrent_stress(const StressSpec& spec);

struct CrashSweepSpec {
  TraceSpec trace;
  TableConfig config;
  bool drop_all = true;
  bool word_subsets = true;
  // Word-subset mode enumerates every subset when at most this many words are
  // dirty, else tries `sampled_subsets` random ones plus all-persisted.
  std::size_t exhaustive_limit = 6;
  std::size_t sampled_subsets = 8;
  // Examine every `stride`-th crash point (1 = all).
  std::uint64_t stride = 1;
  // Stop examining after this many crash points (0 = no limit).
  std::uint64_t max_points = 0;
};

struct CrashSweepResult {
  std::uint64_t crash_points = 0;
  std::uint64_t outcomes = 0;  // recoveries checked
  std::uint64_t failures = 0;
  std::uint64_t ops = 0;
  std::vector<std::string> examples;  // first few failures
  double seconds = 0.0;
  bool pass() const { return failures == 0; }
};

// Replays the trace on a shadow-backed table; after every store and every
// flush it crashes a copy, recovers it, and checks that the content equals
// the state before or after the in-flight op and that invariants hold.
CrashSweepResult crash_sweep(const CrashSweepSpec& spec);

}  // namespace iceberg
