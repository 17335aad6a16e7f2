#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopsched/error.hpp"

namespace loopsched {

// Mean execution times per (scheduler, workload) cell, with the raw samples
// retained when several cost rows land in the same cell. Missing cells stay
// missing; they never count as zero.
class CostMatrix {
 public:
  void add_sample(const std::string& scheduler, const std::string& workload, double cost);

  static CostMatrix from_csv_text(const std::string& text);
  static CostMatrix from_csv_file(const std::string& path);
  static CostMatrix from_json_text(const std::string& text);
  static CostMatrix from_file(const std::string& path);  // dispatch on extension

  const std::vector<std::string>& schedulers() const { return schedulers_; }
  const std::vector<std::string>& workloads() const { return workloads_; }

  std::optional<double> cost(const std::string& scheduler, const std::string& workload) const;
  std::span<const double> samples(const std::string& scheduler, const std::string& workload) const;

 private:
  std::optional<std::size_t> scheduler_index(const std::string& s) const;
  std::optional<std::size_t> workload_index(const std::string& w) const;

  std::vector<std::string> schedulers_;
  std::vector<std::string> workloads_;
  std::vector<std::vector<std::vector<double>>> samples_;  // [workload][scheduler]
};

// R(S, w) = (C(S,w) - min_S C) / min_S C * 100; missing cells propagate as
// nullopt rather than zero.
std::optional<double> regret_cell(const CostMatrix& matrix, const std::string& scheduler,
                                  const std::string& workload);

// R(S) = max_w R(S, w) over the workloads where S has data.
double minimax_regret(const CostMatrix& matrix, const std::string& scheduler);

// p-th percentile of R(S, w), linear interpolation between order statistics.
double percentile_regret(const CostMatrix& matrix, const std::string& scheduler, double p);

// Percentile bootstrap confidence interval of the sample mean.
std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level = 0.95,
                                       int resamples = 10000, std::uint64_t seed = 0);

// Workloads as rows, schedulers as columns, R(S) and R90(S) as footer rows;
// the best cell of each row is flagged.
std::string render_regret_table_markdown(const CostMatrix& matrix);
std::string render_regret_table_csv(const CostMatrix& matrix);

}  // namespace loopsched
