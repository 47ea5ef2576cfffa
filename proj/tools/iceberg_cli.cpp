// iceberg: benchmark, simulation and checking front end.
//
//   iceberg micro --slots 1048576 --threads 1,2,4,8 --format csv
//   iceberg ycsb --workload a --threads 4
//   iceberg sim --workload p2c --bins 65536 --h 0.9 --steps 10000000 --seeds 10
//   iceberg fuzz --ops 100000 --crash-points 5000
//   iceberg recover-check --backend file --dir /tmp/ice
//
// Any option may also come from a key=value file given with --config.
// Exit status: 0 all checks passed, 1 a check failed, 2 usage or I/O error.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "iceberg/bench.hpp"
#include "iceberg/model_oracle.hpp"
#include "iceberg/table.hpp"
#include "iceberg/theory_sim.hpp"

using namespace iceberg;

namespace {

struct Options {
  std::uint64_t slots = 1 << 20;
  std::vector<unsigned> threads{1, 2, 4, 8, 16};
  std::uint64_t seed = 1;
  double fill = 0.95;
  std::string workload;
  std::string format = "json";
  std::string out = "-";
  std::string backend = "shadow";
  std::string dir;
  std::uint64_t crash_points = 0;

  // fuzz
  std::uint64_t ops = 100000;
  std::uint64_t keys = 10000;

  // sim
  std::uint64_t bins = 1 << 14;
  double h = 60.0;
  double j = 0.0;
  std::uint64_t capacity = 0;
  std::uint64_t steps = 0;
  std::uint64_t seeds = 1;
  std::uint64_t initial_bins = 1 << 10;
  std::uint64_t insertions = 1 << 20;
};

StoreOptions store_options(const Options& o) {
  StoreOptions s;
  if (o.backend == "file") {
    s.backend = Backend::kFile;
    s.directory = o.dir.empty() ? std::filesystem::temp_directory_path() / ("iceberg-" + std::to_string(::getpid()))
                                : std::filesystem::path(o.dir);
  }
  return s;
}

WorkloadSpec workload_spec(const Options& o, std::string kind) {
  WorkloadSpec w;
  w.kind = std::move(kind);
  w.target_slots = o.slots;
  w.fill = o.fill;
  w.threads = o.threads;
  w.seed = o.seed;
  w.store = store_options(o);
  return w;
}

BenchReport run_sim(const Options& o) {
  BenchReport r;
  const std::string mode = o.workload.empty() ? "frontyard" : o.workload;
  r.kind = "sim-" + mode;
  r.seed = o.seed;
  std::string csv = sim_csv_header() + "\n";
  std::uint64_t worst = 0;
  double backyard_sum = 0;
  for (std::uint64_t s = 0; s < o.seeds; ++s) {
    SimConfig cfg;
    cfg.bins = o.bins;
    cfg.h = o.h;
    cfg.j = o.j;
    cfg.capacity = o.capacity;
    cfg.churn_steps = o.steps;
    cfg.seed = o.seed + s;
    cfg.initial_bins = o.initial_bins;
    cfg.insertions = o.insertions;
    SimStats st;
    if (mode == "frontyard") {
      st = simulate_frontyard(cfg);
    } else if (mode == "p2c") {
      st = simulate_p2c(cfg);
    } else if (mode == "one-choice") {
      st = simulate_one_choice(cfg);
    } else if (mode == "split") {
      st = simulate_split(cfg);
      if (!st.conserved) r.checks_failed.push_back("a split lost or created balls");
    } else {
      throw CLI::ValidationError("--workload", "sim modes: frontyard, p2c, one-choice, split");
    }
    csv += sim_csv_row(mode, cfg, st) + "\n";
    worst = std::max(worst, st.max_bin_load);
    backyard_sum += st.backyard_fraction;
  }
  r.metrics["max_bin_load"] = static_cast<double>(worst);
  r.metrics["mean_backyard_fraction"] = o.seeds ? backyard_sum / static_cast<double>(o.seeds) : 0.0;
  r.metrics["seeds"] = static_cast<double>(o.seeds);
  if (o.format == "csv") {
    // Simulation rows have their own columns.
    r.kind = csv;
  }
  return r;
}

BenchReport run_fuzz(const Options& o) {
  BenchReport r;
  r.kind = "fuzz";
  r.seed = o.seed;
  TraceSpec trace;
  trace.seed = o.seed;
  trace.ops = o.ops;
  trace.key_space = o.keys;
  trace.grow_rate = 2e-5;
  trace.shrink_rate = 2e-5;
  trace.recover_rate = 1e-5;
  TableConfig config;
  config.log_initial_blocks = 2;
  config.hash_seed = o.seed;
  config.store = store_options(o);
  config.store.max_log_blocks = 20;
  const Verdict v = differential_test(make_trace(trace), config);
  r.metrics["differential_ops"] = static_cast<double>(v.ops_run);
  r.metrics["grows"] = static_cast<double>(v.grows);
  r.metrics["shrinks"] = static_cast<double>(v.shrinks);
  r.metrics["recoveries"] = static_cast<double>(v.recoveries);
  if (!v.pass) r.checks_failed.push_back("differential: " + v.detail);

  CrashSweepSpec sweep;
  sweep.trace.seed = o.seed;
  sweep.trace.ops = std::min<std::uint64_t>(o.ops, 1000);
  sweep.trace.key_space = 300;
  sweep.trace.grow_rate = 0.004;
  sweep.trace.shrink_rate = 0.004;
  sweep.config.log_initial_blocks = 1;
  sweep.config.hash_seed = o.seed;
  sweep.config.store.max_log_blocks = 10;
  sweep.max_points = o.crash_points;
  const CrashSweepResult c = crash_sweep(sweep);
  r.metrics["crash_points"] = static_cast<double>(c.crash_points);
  r.metrics["crash_outcomes"] = static_cast<double>(c.outcomes);
  r.metrics["crash_failures"] = static_cast<double>(c.failures);
  for (const auto& e : c.examples) r.checks_failed.push_back("crash: " + e);
  return r;
}

BenchReport run_recover_check(const Options& o) {
  BenchReport r;
  r.kind = "recover-check";
  r.seed = o.seed;
  TableConfig config;
  config.log_initial_blocks = log_blocks_for_slots(o.slots);
  config.hash_seed = o.seed;
  config.store = store_options(o);
  config.store.max_log_blocks = std::max(config.store.max_log_blocks, config.log_initial_blocks + 4);
  const bool file = config.store.backend == Backend::kFile;

  // An existing store in --dir is recovered and checked as found.
  if (file && std::filesystem::exists(config.store.directory / "meta.ice")) {
    auto t = Table::recover(Store::open(config.store), config);
    const auto inv = t->check_invariants();
    for (const auto& p : inv.problems) r.checks_failed.push_back(p);
    r.metrics["keys"] = static_cast<double>(t->size());
    r.metrics["slots_per_sec"] = static_cast<double>(t->recovery_stats().slots_scanned) / t->recovery_stats().seconds;
    return r;
  }

  std::map<Key, Value> expected;
  Store store;
  {
    Table t(config);
    std::mt19937_64 rng(o.seed);
    const auto n = static_cast<std::uint64_t>(o.fill * static_cast<double>(t.capacity()));
    for (std::uint64_t i = 0; i < n; ++i) {
      const Key k = rng() >> 1;
      t.insert(k, i);
      expected[k] = i;
    }
    t.store().sync();
    store = std::move(t.store());
  }
  if (file) {
    store = Store();
    store = Store::open(config.store);
  } else {
    store = store.crash(Tearing::kWordSubset, o.seed);
  }
  auto t = Table::recover(std::move(store), config);
  std::map<Key, Value> got;
  t->for_each([&got](Key k, Value v, const Location&) { got[k] = v; });
  if (got != expected) r.checks_failed.push_back("recovered content differs from what was written");
  const auto inv = t->check_invariants();
  for (const auto& p : inv.problems) r.checks_failed.push_back(p);
  const auto& st = t->recovery_stats();
  r.metrics["keys"] = static_cast<double>(got.size());
  r.metrics["slots_scanned"] = static_cast<double>(st.slots_scanned);
  r.metrics["recovery_seconds"] = st.seconds;
  r.metrics["slots_per_sec"] = st.seconds > 0 ? static_cast<double>(st.slots_scanned) / st.seconds : 0.0;
  return r;
}

std::string normalise_ycsb(const std::string& w) {
  if (w.empty()) return "ycsb-a";
  if (w.rfind("ycsb-", 0) == 0) return w;
  return "ycsb-" + w;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iceberg hash table benchmarks and checks"};
  app.set_help_flag("--help", "print help");
  app.set_config("--config", "", "key=value option file");
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--slots", o.slots, "level-1 slots of the initial table")->capture_default_str();
  app.add_option("--threads", o.threads, "thread counts, comma separated")->delimiter(',')->capture_default_str();
  app.add_option("--seed", o.seed)->capture_default_str();
  app.add_option("--fill", o.fill, "target fill fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--workload", o.workload, "ycsb: a|b|c; dist: micro|ycsb; sim: frontyard|p2c|one-choice|split");
  app.add_option("--format", o.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--out", o.out, "output file, - for stdout")->capture_default_str();
  app.add_option("--backend", o.backend)->check(CLI::IsMember({"shadow", "file"}))->capture_default_str();
  app.add_option("--dir", o.dir, "directory for the file backend");
  app.add_option("--crash-points", o.crash_points, "fuzz: crash points to examine, 0 for all")->capture_default_str();
  app.add_option("--ops", o.ops, "fuzz: differential trace length")->capture_default_str();
  app.add_option("--keys", o.keys, "fuzz: key space")->capture_default_str();
  app.add_option("--bins", o.bins, "sim: bin count")->capture_default_str();
  app.add_option("--h", o.h, "sim: average balls per bin")->capture_default_str();
  app.add_option("--j", o.j, "sim: capacity slack")->capture_default_str();
  app.add_option("--capacity", o.capacity, "sim: explicit bin capacity");
  app.add_option("--steps", o.steps, "sim: churn steps")->capture_default_str();
  app.add_option("--seeds", o.seeds, "sim: number of seeds")->capture_default_str();
  app.add_option("--initial-bins", o.initial_bins, "sim split: starting bins")->capture_default_str();
  app.add_option("--insertions", o.insertions, "sim split: balls inserted")->capture_default_str();

  auto* micro = app.add_subcommand("micro", "insert / positive / negative / remove throughput");
  auto* ycsb = app.add_subcommand("ycsb", "YCSB-style load and run phases");
  auto* space = app.add_subcommand("space", "space efficiency sweep in 5% steps");
  auto* dist = app.add_subcommand("dist", "key distribution across levels");
  auto* sim = app.add_subcommand("sim", "balls-and-bins simulations");
  auto* fuzz = app.add_subcommand("fuzz", "differential trace and crash-point sweep");
  auto* recover = app.add_subcommand("recover-check", "write, close, recover and compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  BenchReport report;
  try {
    if (micro->parsed()) {
      report = run_micro(workload_spec(o, "micro"));
    } else if (ycsb->parsed()) {
      report = run_ycsb(workload_spec(o, normalise_ycsb(o.workload)));
    } else if (space->parsed()) {
      report = run_space_sweep(workload_spec(o, "space-sweep"));
    } else if (dist->parsed()) {
      report = run_dist(workload_spec(o, o.workload == "ycsb" ? "dist-ycsb" : "dist"));
    } else if (sim->parsed()) {
      report = run_sim(o);
    } else if (fuzz->parsed()) {
      report = run_fuzz(o);
    } else if (recover->parsed()) {
      report = run_recover_check(o);
    }
  } catch (const CLI::Error& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  std::string text;
  if (sim->parsed() && o.format == "csv") {
    text = report.kind;
  } else {
    text = emit_report(report, o.format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson);
  }
  if (o.out == "-") {
    std::cout << text;
  } else {
    std::ofstream(o.out) << text;
  }
  for (const auto& c : report.checks_failed) std::cerr << "check failed: " << c << "\n";
  return report.ok() ? 0 : 1;
}
