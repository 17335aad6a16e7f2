#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loopsched/chunking.hpp"

namespace loopsched {

// Warm-up multiplier g(ell) = 1 + c exp(-lambda (ell - 1)) applied to task
// durations of the ell-th execution of a loop. c = 0 disables the effect.
struct LocalityModel {
  double c = 0.0;
  double lambda = 1.0;

  double factor(std::int64_t ell) const;
  void validate() const;
};

// Input of the virtual-time simulator: per-task durations plus the machine
// parameters the scheduler cares about.
struct SyntheticWorkload {
  std::vector<double> durations;  // T_i [s], one per task
  int p = 1;                      // workers
  double h = 0.0;                 // per-dequeue overhead [s]
  LocalityModel locality;
  std::int64_t repeats = 1;  // L, executions of the loop per run

  std::int64_t n() const { return static_cast<std::int64_t>(durations.size()); }
  LoopShape shape() const { return {n(), p}; }
  double total_work() const;
  void validate() const;
};

// Declarative generator spec, loadable from JSON:
//   {"kind": "lognormal", "params": {"mu": 1e-4, "sigma": 3e-4},
//    "N": 4096, "P": 8, "h": 1e-5, "L": 20,
//    "locality": {"c": 2.0, "lambda": 0.3}, "seed": 1}
struct WorkloadSpec {
  std::string kind = "homogeneous";  // homogeneous | gaussian | lognormal | powerlaw
  double mu = 1.0;                   // mean task time (homogeneous/gaussian/lognormal)
  double sigma = 0.0;                // task time std (gaussian/lognormal)
  double exponent = 2.5;             // powerlaw tail exponent (> 1)
  double scale = 1.0;                // powerlaw minimum duration
  std::int64_t n = 1;
  int p = 1;
  double h = 0.0;
  LocalityModel locality;
  std::int64_t repeats = 1;
  std::uint64_t seed = 0;

  static WorkloadSpec from_json_file(const std::string& path);
  static WorkloadSpec from_json_text(const std::string& text);
};

SyntheticWorkload generate_workload(const WorkloadSpec& spec);

// Virtual makespan of one loop execution: chunks are dispensed in order, each
// to the worker with the smallest finish time (lowest index wins ties); the
// worker pays h, then g(ell) * sum of the chunk's task durations. Task indices
// are assigned contiguously in chunk order.
double simulate_makespan(const SyntheticWorkload& workload, std::span<const std::int64_t> chunks,
                         std::int64_t ell);

// Sum of makespans over ell = 1..L for the chunk sequence of `policy`, plus
// optional Gaussian noise of std `noise_sigma` (seeded, reproducible).
double simulate_total_time(const SyntheticWorkload& workload, const ChunkPolicy& policy,
                           double noise_sigma = 0.0, std::uint64_t noise_seed = 0);
double simulate_total_time_fss(const SyntheticWorkload& workload, double theta,
                               double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

// Per-execution makespans for ell = 1..L (the BO objective observes these).
std::vector<double> simulate_executions_fss(const SyntheticWorkload& workload, double theta);

// Exhaustive noise-free search over a theta grid; ties break toward smaller theta.
struct BruteForceResult {
  double theta = 0.0;
  double total = 0.0;
};
BruteForceResult brute_force_best_theta(const SyntheticWorkload& workload,
                                        std::span<const double> theta_grid);

}  // namespace loopsched
