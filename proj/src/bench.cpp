#include "iceberg/bench.hpp"

#include <algorithm>
#include <barrier>
#include <bit>
#include <chrono>
#include <functional>
#include <random>
#include <thread>

#include "iceberg/hash.hpp"
#include "iceberg/model_oracle.hpp"
#include "iceberg/table.hpp"

namespace iceberg {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ns_between(Clock::time_point a, Clock::time_point b) {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

// Runs fn(tid) on `threads` workers released together; returns wall seconds
// from release to the last join.
double run_parallel(unsigned threads, const std::function<void(unsigned)>& fn) {
  std::barrier sync(static_cast<std::ptrdiff_t>(threads) + 1);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      sync.arrive_and_wait();
      fn(t);
    });
  }
  sync.arrive_and_wait();
  const auto start = Clock::now();
  for (auto& th : pool) th.join();
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Key> random_keys(std::uint64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Key> keys(n);
  for (auto& k : keys) {
    do {
      k = rng();
    } while (k == kInvalid);
  }
  return keys;
}

// Per-thread latency buffer: keeps every `stride`-th sample but the exact max.
struct LatencyBuffer {
  std::vector<std::uint64_t> samples;
  std::uint64_t stride = 1;
  std::uint64_t seen = 0;
  std::uint64_t max = 0;

  void reserve(std::uint64_t ops, std::uint64_t cap) {
    stride = std::max<std::uint64_t>(1, (ops + cap - 1) / cap);
    samples.reserve(ops / stride + 1);
  }
  void add(std::uint64_t ns) {
    max = std::max(max, ns);
    if (seen++ % stride == 0) samples.push_back(ns);
  }
};

LatencySummary merge(std::vector<LatencyBuffer>& bufs) {
  std::vector<std::uint64_t> all;
  std::uint64_t max = 0;
  for (auto& b : bufs) {
    all.insert(all.end(), b.samples.begin(), b.samples.end());
    max = std::max(max, b.max);
  }
  LatencySummary s = summarize_latencies(all);
  s.max = std::max(s.max, max);
  return s;
}

TableConfig table_config(const WorkloadSpec& spec, bool auto_resize, unsigned headroom) {
  TableConfig c;
  c.log_initial_blocks = log_blocks_for_slots(spec.target_slots);
  c.auto_resize = auto_resize;
  c.hash_seed = spec.seed * 0x2545F4914F6CDD1DULL + 1;
  c.store = spec.store;
  c.store.max_log_blocks = std::max(c.store.max_log_blocks, c.log_initial_blocks + headroom);
  return c;
}

void set_levels(BenchReport& r, const Table& t) {
  const auto d = t.level_distribution();
  r.level_fractions = {d.fraction1(), d.fraction2(), d.fraction3()};
  r.metrics["level3_keys"] = static_cast<double>(d.level3);
}

void check_levels(BenchReport& r) {
  const double sum = r.level_fractions[0] + r.level_fractions[1] + r.level_fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) r.checks_failed.push_back("level fractions do not sum to 1");
}

double footprint_of(const Table& t) { return static_cast<double>(t.store().footprint() + t.volatile_bytes()); }

constexpr std::uint64_t kLatencyCap = std::uint64_t{1} << 22;

}  // namespace

unsigned log_blocks_for_slots(std::uint64_t slots) {
  const std::uint64_t blocks = std::max<std::uint64_t>(slots / kLevel1Slots, 2);
  return static_cast<unsigned>(std::bit_width(blocks) - 1);
}

BenchReport run_micro(const WorkloadSpec& spec) {
  BenchReport report;
  report.kind = "micro";
  report.target_slots = spec.target_slots;
  report.seed = spec.seed;

  for (std::size_t cfg = 0; cfg < spec.threads.size(); ++cfg) {
    const unsigned threads = std::max(spec.threads[cfg], 1u);
    Table table(table_config(spec, false, 0));
    const auto n = static_cast<std::uint64_t>(spec.fill * static_cast<double>(table.capacity()));
    const auto keys = random_keys(n, spec.seed);
    const auto absent = random_keys(n, spec.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    const std::uint64_t keep = std::min<std::uint64_t>(n, table.capacity() / 2);
    auto slice = [&](unsigned t, std::uint64_t total) {
      return std::pair<std::uint64_t, std::uint64_t>{total * t / threads, total * (t + 1) / threads};
    };

    std::array<std::vector<LatencyBuffer>, 4> lat;
    for (auto& l : lat) l.resize(threads);
    std::vector<std::uint64_t> hits(threads, 0), misses(threads, 0);

    ThroughputRow row;
    row.threads = threads;
    const double t_ins = run_parallel(threads, [&](unsigned t) {
      auto [lo, hi] = slice(t, n);
      lat[0][t].reserve(hi - lo, kLatencyCap / threads);
      for (std::uint64_t i = lo; i < hi; ++i) {
        const auto a = Clock::now();
        table.insert(keys[i], i);
        lat[0][t].add(ns_between(a, Clock::now()));
      }
    });
    if (cfg == 0) set_levels(report, table);
    const double t_pos = run_parallel(threads, [&](unsigned t) {
      auto [lo, hi] = slice(t, n);
      lat[1][t].reserve(hi - lo, kLatencyCap / threads);
      for (std::uint64_t i = lo; i < hi; ++i) {
        const auto a = Clock::now();
        const bool found = table.get(keys[i]).has_value();
        lat[1][t].add(ns_between(a, Clock::now()));
        if (!found) ++misses[t];
      }
    });
    const double t_neg = run_parallel(threads, [&](unsigned t) {
      auto [lo, hi] = slice(t, n);
      lat[2][t].reserve(hi - lo, kLatencyCap / threads);
      for (std::uint64_t i = lo; i < hi; ++i) {
        const auto a = Clock::now();
        const bool found = table.get(absent[i]).has_value();
        lat[2][t].add(ns_between(a, Clock::now()));
        if (found) ++hits[t];
      }
    });
    double probe_rate = 0.0;
    if (cfg == 0) {
      ProbeStats ps;
      const std::uint64_t sample = std::min<std::uint64_t>(n, 100000);
      for (std::uint64_t i = 0; i < sample; ++i) table.get(absent[i], ps);
      probe_rate = sample ? static_cast<double>(ps.level1_data_probes) / static_cast<double>(sample) : 0.0;
    }
    const std::uint64_t to_remove = n - keep;
    const double t_rem = run_parallel(threads, [&](unsigned t) {
      auto [lo, hi] = slice(t, to_remove);
      lat[3][t].reserve(hi - lo, kLatencyCap / threads);
      for (std::uint64_t i = lo; i < hi; ++i) {
        const auto a = Clock::now();
        table.remove(keys[i]);
        lat[3][t].add(ns_between(a, Clock::now()));
      }
    });
    row.insert = static_cast<double>(n) / t_ins;
    row.positive = static_cast<double>(n) / t_pos;
    row.negative = static_cast<double>(n) / t_neg;
    row.remove = static_cast<double>(to_remove) / t_rem;
    report.rows.push_back(row);

    const char* names[4] = {"insert", "positive", "negative", "remove"};
    for (int i = 0; i < 4; ++i) report.latency[names[i]] = merge(lat[i]);

    std::uint64_t miss = 0, hit = 0;
    for (unsigned t = 0; t < threads; ++t) {
      miss += misses[t];
      hit += hits[t];
    }
    if (miss) report.checks_failed.push_back("positive queries missed inserted keys");
    if (cfg == 0) {
      report.metrics["negative_absent_fraction"] = n ? 1.0 - static_cast<double>(hit) / static_cast<double>(n) : 1.0;
      report.metrics["level1_data_probes_per_negative"] = probe_rate;
      report.metrics["keys"] = static_cast<double>(n);
    }
    if (row.insert <= 0 || row.positive <= 0 || row.negative <= 0 || row.remove <= 0) {
      report.checks_failed.push_back("non-positive throughput");
    }
  }
  if (report.rows.size() > 1) {
    report.metrics["insert_scaling"] = report.rows.back().insert / report.rows.front().insert;
  }
  check_levels(report);
  return report;
}

BenchReport run_ycsb(const WorkloadSpec& spec) {
  BenchReport report;
  report.kind = spec.kind;
  report.target_slots = spec.target_slots;
  report.seed = spec.seed;
  double write_fraction = 0.5, ops_factor = 2.0;
  if (spec.kind == "ycsb-b") {
    write_fraction = 0.05;
    ops_factor = 20.0;
  } else if (spec.kind == "ycsb-c") {
    write_fraction = 0.0;
    ops_factor = 1.0;
  } else if (spec.kind != "ycsb-a") {
    throw std::invalid_argument("unknown ycsb workload " + spec.kind);
  }
  const unsigned threads = std::max(spec.threads.empty() ? 1u : spec.threads.back(), 1u);
  Table table(table_config(spec, true, 6));

  const std::uint64_t loaded = 4 * spec.target_slots;
  const auto run_ops = static_cast<std::uint64_t>(ops_factor * static_cast<double>(loaded));
  auto key_of = [&](std::uint64_t i) { return trace_key(i + 1, spec.seed); };

  std::vector<LatencyBuffer> load_lat(threads);
  const double t_load = run_parallel(threads, [&](unsigned t) {
    const std::uint64_t lo = loaded * t / threads, hi = loaded * (t + 1) / threads;
    load_lat[t].reserve(hi - lo, kLatencyCap / threads);
    for (std::uint64_t i = lo; i < hi; ++i) {
      const auto a = Clock::now();
      table.insert(key_of(i), i);
      load_lat[t].add(ns_between(a, Clock::now()));
    }
  });
  report.latency["load"] = merge(load_lat);
  table.finish_migration();
  set_levels(report, table);
  const std::uint64_t gen_load = table.generation();

  // Read targets: a Zipf-ranked sample of loaded keys, scrambled over the key set.
  const std::uint64_t pool = std::min<std::uint64_t>(run_ops, std::uint64_t{1} << 22);
  std::vector<std::uint64_t> read_idx(pool);
  {
    ZipfGenerator zipf(loaded, spec.zipf_s);
    std::mt19937_64 rng(spec.seed + 17);
    for (auto& r : read_idx) r = fmix64(zipf(rng) + 1) % loaded;
  }

  std::vector<LatencyBuffer> read_lat(threads), write_lat(threads);
  std::vector<std::uint64_t> misses(threads, 0);
  const auto before = table.store().stats();
  const double t_run = run_parallel(threads, [&](unsigned t) {
    const std::uint64_t lo = run_ops * t / threads, hi = run_ops * (t + 1) / threads;
    std::mt19937_64 rng(spec.seed * 7919 + t);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    read_lat[t].reserve(hi - lo, kLatencyCap / threads);
    write_lat[t].reserve(static_cast<std::uint64_t>(static_cast<double>(hi - lo) * write_fraction) + 1,
                         kLatencyCap / threads);
    std::uint64_t next_insert = loaded + lo;
    for (std::uint64_t i = lo; i < hi; ++i) {
      if (write_fraction > 0 && unit(rng) < write_fraction) {
        const Key k = key_of(next_insert++);
        const auto a = Clock::now();
        table.insert(k, i);
        write_lat[t].add(ns_between(a, Clock::now()));
      } else {
        const Key k = key_of(read_idx[(i * 2654435761ULL) % pool]);
        const auto a = Clock::now();
        const bool found = table.get(k).has_value();
        read_lat[t].add(ns_between(a, Clock::now()));
        if (!found) ++misses[t];
      }
    }
  });
  const auto after = table.store().stats();
  report.latency["read"] = merge(read_lat);
  if (write_fraction > 0) report.latency["insert"] = merge(write_lat);

  ThroughputRow row;
  row.threads = threads;
  row.insert = static_cast<double>(loaded) / t_load;
  row.positive = static_cast<double>(run_ops) / t_run;
  report.rows.push_back(row);

  std::uint64_t miss = 0;
  for (auto m : misses) miss += m;
  const double run_words = static_cast<double>(after.words_stored - before.words_stored);
  report.metrics["loaded_keys"] = static_cast<double>(loaded);
  report.metrics["run_ops"] = static_cast<double>(run_ops);
  report.metrics["run_ops_per_sec"] = static_cast<double>(run_ops) / t_run;
  report.metrics["run_words_stored"] = run_words;
  report.metrics["generation_after_load"] = static_cast<double>(gen_load);
  report.metrics["doublings_in_run"] = static_cast<double>(table.generation() - gen_load);
  report.metrics["final_load_factor"] = table.load_factor();
  report.metrics["latency_stride"] = static_cast<double>(read_lat.front().stride);
  if (report.latency.count("insert") && report.latency["insert"].percentiles[3] > 0) {
    report.metrics["insert_max_over_p999"] =
        static_cast<double>(report.latency["insert"].max) / static_cast<double>(report.latency["insert"].percentiles[3]);
  }
  if (miss) report.checks_failed.push_back("reads missed loaded keys");
  if (spec.kind == "ycsb-c" && run_words != 0) report.checks_failed.push_back("read-only run phase wrote to the store");
  if (spec.kind == "ycsb-a" && table.generation() == gen_load) {
    report.checks_failed.push_back("run phase did not double the table");
  }
  check_levels(report);
  return report;
}

BenchReport run_space_sweep(const WorkloadSpec& spec) {
  BenchReport report;
  report.kind = "space-sweep";
  report.target_slots = spec.target_slots;
  report.seed = spec.seed;
  Table table(table_config(spec, false, 0));
  const auto keys = random_keys(static_cast<std::uint64_t>(0.95 * static_cast<double>(table.capacity())) + 1, spec.seed);
  std::uint64_t inserted = 0;
  for (int step = 1; step <= 19; ++step) {
    const double fill = 0.05 * step;
    const auto target = static_cast<std::uint64_t>(fill * static_cast<double>(table.capacity()));
    const std::uint64_t first = inserted;
    const auto a = Clock::now();
    for (; inserted < target; ++inserted) table.insert(keys[inserted], inserted);
    const double secs = std::chrono::duration<double>(Clock::now() - a).count();
    SpacePoint p;
    p.fill = fill;
    p.insert_ops_per_sec = secs > 0 ? static_cast<double>(inserted - first) / secs : 0.0;
    p.data_bytes = table.size() * 16;
    p.footprint_bytes = static_cast<std::uint64_t>(footprint_of(table));
    p.efficiency = static_cast<double>(p.data_bytes) / static_cast<double>(p.footprint_bytes);
    report.space.push_back(p);
  }
  report.space_efficiency = report.space.back().efficiency;
  set_levels(report, table);
  for (std::size_t i = 1; i < report.space.size(); ++i) {
    if (report.space[i].footprint_bytes < report.space[i - 1].footprint_bytes) {
      report.checks_failed.push_back("footprint decreased during the sweep");
      break;
    }
  }
  check_levels(report);
  return report;
}

BenchReport run_dist(const WorkloadSpec& spec) {
  BenchReport report;
  report.kind = spec.kind;
  report.target_slots = spec.target_slots;
  report.seed = spec.seed;
  const bool ycsb_shape = spec.kind == "dist-ycsb";
  Table table(table_config(spec, ycsb_shape, ycsb_shape ? 6 : 0));
  const std::uint64_t n = ycsb_shape ? 4 * spec.target_slots
                                     : static_cast<std::uint64_t>(spec.fill * static_cast<double>(table.capacity()));
  std::mt19937_64 rng(spec.seed);
  for (std::uint64_t i = 0; i < n; ++i) {
    Key k;
    do {
      k = rng();
    } while (k == kInvalid);
    table.insert(k, i);
  }
  table.finish_migration();
  set_levels(report, table);
  report.metrics["keys"] = static_cast<double>(table.size());
  report.metrics["load_factor"] = table.load_factor();
  report.metrics["blocks"] = static_cast<double>(table.block_count());
  check_levels(report);
  return report;
}

double insert_throughput(std::uint64_t target_slots, unsigned threads, double fill, std::uint64_t seed) {
  WorkloadSpec spec;
  spec.target_slots = target_slots;
  spec.seed = seed;
  Table table(table_config(spec, false, 0));
  const auto n = static_cast<std::uint64_t>(fill * static_cast<double>(table.capacity()));
  const auto keys = random_keys(n, seed);
  const double secs = run_parallel(threads, [&](unsigned t) {
    const std::uint64_t lo = n * t / threads, hi = n * (t + 1) / threads;
    for (std::uint64_t i = lo; i < hi; ++i) table.insert(keys[i], i);
  });
  return static_cast<double>(n) / secs;
}

}  // namespace iceberg
