#include "iceberg/theory_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>


namespace iceberg {

namespace {

constexpr std::uint32_t kBackyard = ~std::uint32_t{0};

std::uint64_t fill_balls(const SimConfig& cfg) {
  return cfg.balls ? cfg.balls : static_cast<std::uint64_t>(std::llround(cfg.h * static_cast<double>(cfg.bins)));
}

std::vector<std::uint64_t> histogram_of(const std::vector<std::uint32_t>& load) {
  std::vector<std::uint64_t> hist;
  for (auto l : load) {
    if (l >= hist.size()) hist.resize(l + 1, 0);
    ++hist[l];
  }
  return hist;
}

// Present balls as a swap-remove array of their residences.
struct Residents {
  std::vector<std::uint32_t> where;
  std::uint32_t take_random(std::mt19937_64& rng) {
    const std::size_t i = rng() % where.size();
    const std::uint32_t w = where[i];
    where[i] = where.back();
    where.pop_back();
    return w;
  }
};

template <typename Place>
SimStats run_unbounded(const SimConfig& cfg, Place place) {
  SimStats st;
  st.seed = cfg.seed;
  st.bins = cfg.bins;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::uint32_t> load(cfg.bins, 0);
  Residents res;
  const std::uint64_t n = fill_balls(cfg);
  res.where.reserve(n);
  auto insert = [&] {
    const std::uint32_t b = place(rng, load);
    st.max_bin_load = std::max<std::uint64_t>(st.max_bin_load, ++load[b]);
    res.where.push_back(b);
  };
  for (std::uint64_t i = 0; i < n; ++i) insert();
  st.balls = n;
  for (std::uint64_t s = 0; s < cfg.churn_steps && !res.where.empty(); ++s) {
    --load[res.take_random(rng)];
    insert();
  }
  st.histogram = histogram_of(load);
  return st;
}

}  // namespace

std::uint64_t frontyard_capacity(const SimConfig& cfg) {
  if (cfg.capacity) return cfg.capacity;
  return static_cast<std::uint64_t>(std::ceil(cfg.h + cfg.j * std::sqrt(cfg.h + 1.0) + 1.0));
}

SimStats simulate_frontyard(const SimConfig& cfg) {
  SimStats st;
  st.seed = cfg.seed;
  st.bins = cfg.bins;
  st.capacity = frontyard_capacity(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::uint32_t> load(cfg.bins, 0);
  Residents res;
  std::uint64_t backyard = 0;
  const std::uint64_t n = fill_balls(cfg);
  res.where.reserve(n);

  auto insert = [&] {
    const auto b = static_cast<std::uint32_t>(rng() % cfg.bins);
    if (load[b] < st.capacity) {
      st.max_bin_load = std::max<std::uint64_t>(st.max_bin_load, ++load[b]);
      res.where.push_back(b);
    } else {
      ++backyard;
      res.where.push_back(kBackyard);
      st.backyard_max = std::max(st.backyard_max, backyard);
    }
  };
  for (std::uint64_t i = 0; i < n; ++i) insert();
  st.balls = n;
  st.backyard_fill = backyard;
  st.backyard_fraction = n ? static_cast<double>(backyard) / static_cast<double>(n) : 0.0;

  // Churn: delete a random present ball, insert a fresh one.
  for (std::uint64_t s = 0; s < cfg.churn_steps && !res.where.empty(); ++s) {
    const std::uint32_t w = res.take_random(rng);
    if (w == kBackyard) {
      --backyard;
    } else {
      --load[w];
    }
    insert();
  }
  st.histogram = histogram_of(load);
  return st;
}

SimStats simulate_one_choice(const SimConfig& cfg) {
  return run_unbounded(cfg, [&cfg](std::mt19937_64& rng, const std::vector<std::uint32_t>&) {
    return static_cast<std::uint32_t>(rng() % cfg.bins);
  });
}

SimStats simulate_p2c(const SimConfig& cfg) {
  return run_unbounded(cfg, [&cfg](std::mt19937_64& rng, const std::vector<std::uint32_t>& load) {
    const auto a = static_cast<std::uint32_t>(rng() % cfg.bins);
    const auto b = static_cast<std::uint32_t>(rng() % cfg.bins);
    return load[b] < load[a] ? b : a;
  });
}

SimStats simulate_split(const SimConfig& cfg) {
  SimStats st;
  st.seed = cfg.seed;
  std::uint64_t m = cfg.initial_bins;
  std::vector<std::uint32_t> load(m, 0);
  // Each ball keeps its two hashes and which of them it was placed by.
  struct Ball {
    std::uint64_t h1, h2;
    bool second;
  };
  std::vector<Ball> balls;
  balls.reserve(cfg.insertions);
  std::mt19937_64 rng(cfg.seed);

  for (std::uint64_t i = 0; i < cfg.insertions; ++i) {
    if (balls.size() + 1 > m / 4) {
      // Bin b splits into b and b+m; every ball follows its hash bit.
      const std::uint64_t next = m * 2;
      std::vector<std::uint32_t> fresh(next, 0);
      for (const auto& ball : balls) ++fresh[(ball.second ? ball.h2 : ball.h1) % next];
      std::uint64_t total = 0;
      for (auto l : fresh) {
        total += l;
        st.max_bin_load = std::max<std::uint64_t>(st.max_bin_load, l);
      }
      if (total != balls.size()) st.conserved = false;
      load.swap(fresh);
      m = next;
      ++st.splits;
    }
    Ball ball{rng(), rng(), false};
    const std::uint64_t a = ball.h1 % m, b = ball.h2 % m;
    ball.second = load[b] < load[a];
    const std::uint64_t dest = ball.second ? b : a;
    st.max_bin_load = std::max<std::uint64_t>(st.max_bin_load, ++load[dest]);
    balls.push_back(ball);
  }
  st.bins = m;
  st.balls = balls.size();
  st.histogram = histogram_of(load);
  return st;
}

std::string sim_csv_header() {
  return "mode,seed,bins,h,j,capacity,balls,churn_steps,backyard_fill,backyard_max,backyard_fraction,"
         "max_bin_load,splits,conserved";
}

std::string sim_csv_row(const std::string& mode, const SimConfig& cfg, const SimStats& st) {
  std::ostringstream os;
  os.precision(10);
  os << mode << ',' << st.seed << ',' << st.bins << ',' << cfg.h << ',' << cfg.j << ',' << st.capacity << ','
     << st.balls << ',' << cfg.churn_steps << ',' << st.backyard_fill << ',' << st.backyard_max << ','
     << st.backyard_fraction << ',' << st.max_bin_load << ',' << st.splits << ',' << (st.conserved ? 1 : 0);
  return os.str();
}

}  // namespace iceberg
