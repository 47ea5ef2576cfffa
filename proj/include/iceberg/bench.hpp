#pragma once

// Desk-scale benchmark drivers. Key generation happens before timing starts.

#include <cstdint>
#include <string>
#include <vector>

#include "iceberg/report.hpp"
#include "iceberg/store.hpp"

namespace iceberg {

struct WorkloadSpec {
  std::string kind = "micro";  // micro | ycsb-a | ycsb-b | ycsb-c | space-sweep | dist | dist-ycsb
  std::uint64_t target_slots = 1 << 20;  // level-1 slots of the initial table
  double fill = 0.95;
  std::vector<unsigned> threads{1};
  std::uint64_t seed = 1;
  double zipf_s = 0.99;
  StoreOptions store;
};

// log2 of the level-1 block count for `slots` level-1 slots (at least 1).
unsigned log_blocks_for_slots(std::uint64_t slots);

BenchReport run_micro(const WorkloadSpec& spec);
BenchReport run_ycsb(const WorkloadSpec& spec);
BenchReport run_space_sweep(const WorkloadSpec& spec);
BenchReport run_dist(const WorkloadSpec& spec);

// Aggregate insert throughput (ops/s) of `threads` workers filling a fresh
// table to `fill` of its capacity.
double insert_throughput(std::uint64_t target_slots, unsigned threads, double fill, std::uint64_t seed);

}  // namespace iceberg
