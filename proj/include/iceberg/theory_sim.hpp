#pragma once

// Balls-and-bins simulators behind the level sizing: single-choice bins with
// an overflow "backyard", two-choice bins, and two-choice bins that double
// by splitting as the ball count grows.

#include <cstdint>
#include <string>
#include <vector>

namespace iceberg {

struct SimConfig {
  std::uint64_t bins = 1 << 14;
  double h = 60.0;  // average balls per bin at full occupancy
  double j = 0.0;   // slack: capacity = ceil(h + j*sqrt(h+1) + 1) unless set
  std::uint64_t capacity = 0;
  std::uint64_t balls = 0;  // 0: round(h * bins)
  std::uint64_t churn_steps = 0;
  std::uint64_t seed = 1;
  // Split mode: starting bin count and total insertions.
  std::uint64_t initial_bins = 1 << 10;
  std::uint64_t insertions = 1 << 20;
};

struct SimStats {
  std::uint64_t seed = 0;
  std::uint64_t bins = 0;
  std::uint64_t capacity = 0;
  std::uint64_t balls = 0;           // present at the end of the fill phase
  std::uint64_t backyard_fill = 0;   // after the fill phase
  std::uint64_t backyard_max = 0;    // over the whole history
  double backyard_fraction = 0.0;    // backyard_fill / balls
  std::uint64_t max_bin_load = 0;    // over the whole history
  std::uint64_t splits = 0;
  bool conserved = true;             // ball count preserved by every split
  std::vector<std::uint64_t> histogram;  // bins by final load
};

std::uint64_t frontyard_capacity(const SimConfig& cfg);

// Fixed-capacity single-choice bins; overflow goes to the backyard and a
// deleted ball frees whichever place it occupied.
SimStats simulate_frontyard(const SimConfig& cfg);
// Unbounded bins, single choice.
SimStats simulate_one_choice(const SimConfig& cfg);
// Unbounded bins, two choices, emptier wins, ties to the first.
SimStats simulate_p2c(const SimConfig& cfg);
// Two choices from cfg.initial_bins; doubles when balls exceed bins/4.
SimStats simulate_split(const SimConfig& cfg);

std::string sim_csv_header();
std::string sim_csv_row(const std::string& mode, const SimConfig& cfg, const SimStats& st);

}  // namespace iceberg
