#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "loopsched/dataset.hpp"
#include "loopsched/simulator.hpp"

namespace loopsched {

inline constexpr const char* kTunerVersion = "loopsched 0.1.0";

// CLI-level overrides applied on top of the dataset's stored config.
struct TunerOptions {
  std::optional<bool> locality;
  std::optional<int> n_init;
  std::optional<int> n_iters;
  std::optional<std::uint64_t> seed;
  std::optional<int> hp_samples;
  std::optional<int> mes_samples;

  BOConfig apply(BOConfig base) const;
};

// Runs one BO step over the on-disk dataset (a missing file counts as an
// empty dataset named after the file stem), writes <loop_id>.next.json next
// to it and prints a one-line summary. The dataset itself is never modified.
NextParamFile suggest(const std::string& dataset_file, const TunerOptions& options,
                      std::ostream& out);

// x values evenly spaced over the reparameterized domain, mapped to theta.
std::vector<double> theta_grid(int n);

struct TuneSimReport {
  BOResult bo;
  double tuned_total = 0.0;    // noise-free re-evaluation of the incumbent
  double optimal_theta = 0.0;  // best of the theta grid and the incumbent
  double optimal_total = 0.0;
  double regret_percent = 0.0;
  std::string trace_csv;  // header: t,x,theta,total_s
};

// Fully simulated closed-loop tuning: BO against the virtual-time simulator,
// then a 256-point brute-force grid as the reference optimum.
TuneSimReport tune_sim(const WorkloadSpec& spec, const TunerOptions& options,
                       double noise_sigma = 0.0);

// Prints incumbent, iteration count, per-iteration totals and the posterior-
// mean argmin; csv mode emits "iter,x,theta,total_s,best_s" rows instead.
void report(const std::string& dataset_file, bool csv, std::ostream& out);

}  // namespace loopsched
