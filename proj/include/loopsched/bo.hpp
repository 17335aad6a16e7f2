#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "loopsched/gp.hpp"

namespace loopsched {

// Domain of the tuned parameter: x in (0,1) maps to theta = 2^(19x - 10),
// i.e. theta in (2^-10, 2^9) on a logarithmic scale.
inline constexpr double kDomainEps = 1e-6;

double reparam(double x);          // theta(x) = 2^(19x - 10); throws outside (0,1)
double inverse_reparam(double theta);  // x(theta); throws outside (2^-10, 2^9)

// First n points of the base-2 radical-inverse (van der Corput) sequence,
// skipping the zero element: 0.5, 0.25, 0.75, 0.125, ...
std::vector<double> sobol_init(int n);

enum class SurrogateMode { Plain, LocalityAware };

struct BOConfig {
  int n_init = 4;
  int n_iters = 20;
  SurrogateMode surrogate = SurrogateMode::Plain;
  int subsample_k = 0;  // 0 = auto: max(1, round(L/4))
  int mes_samples = 10;
  int hp_samples = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// One evaluated parameter: the per-execution times of the L loop executions
// observed while scheduling with theta = reparam(x).
struct Observation {
  double x = 0.0;
  double theta = 0.0;
  std::vector<std::pair<std::int64_t, double>> per_execution;  // (ell, tau)
  double total = 0.0;

  static Observation from_executions(double x, std::span<const double> taus);
};

// Surrogate over the BO dataset for a single hyperparameter draw. Plain mode
// regresses totals on x; locality-aware mode regresses per-execution times on
// (x, ell), trained on every k-th execution index.
class Surrogate {
 public:
  Surrogate(std::span<const Observation> observations, const BOConfig& config,
            const Hyperparams& hp);

  // Predictive distribution of T_total at x. The locality-aware model sums
  // predictions over all ell = 1..L regardless of training subsampling.
  std::pair<double, double> predict_total(double x) const;

  SurrogateMode mode() const { return mode_; }
  bool fell_back_to_plain() const { return fell_back_; }
  std::int64_t repeats() const { return repeats_; }
  const FittedGP& gp() const { return gp_; }

  static TrainingSet make_training_set(std::span<const Observation> observations,
                                       const BOConfig& config, SurrogateMode* effective_mode,
                                       std::int64_t* repeats_out);

 private:
  // The sum kernel splits the total-prediction algebra into an x part and a
  // precomputable ell part; see the constructor.
  SurrogateMode mode_;
  bool fell_back_ = false;
  std::int64_t repeats_ = 1;
  FittedGP gp_;
  Eigen::VectorXd exp_sum_;        // E_i = sum_ell k_exp(ell, ell_i)
  Eigen::VectorXd solved_exp_sum_; // (K + sigma^2 I)^-1 E
  double exp_quad_sum_ = 0.0;      // sum_ell k_exp(ell,.)^T (K + sigma^2 I)^-1 k_exp(ell,.)
  double prior_var_sum_ = 0.0;     // sum_ell k((x,ell),(x,ell)), x-independent
};

// Max-value entropy search utility for one point, computed on the negated
// (maximized) objective from the predictive (mean, variance) of T_total and a
// set of sampled maxima y*.
double mes_utility(double mean, double variance, std::span<const double> max_value_samples);

// Gumbel-approximation samples of the maximum of the negated objective over a
// 512-point grid of the surrogate.
std::vector<double> sample_max_values(const Surrogate& surrogate, int n_samples,
                                      std::uint64_t seed);

double mes_acquisition(const Surrogate& surrogate, double x, int max_value_samples,
                       std::uint64_t seed);

// Hyperparameter-marginalized MES: fits one surrogate per posterior draw of
// phi and averages their utilities. Precomputes everything that does not
// depend on x so the inner optimizer can evaluate it cheaply.
class MarginalizedAcquisition {
 public:
  MarginalizedAcquisition(std::span<const Observation> observations, const BOConfig& config);

  double operator()(double x) const;
  const std::vector<Surrogate>& surrogates() const { return surrogates_; }
  const std::vector<std::vector<double>>& max_values() const { return max_values_; }

 private:
  std::vector<Surrogate> surrogates_;
  std::vector<std::vector<double>> max_values_;
};

// Global maximization of a 1-D function on [eps, 1-eps] with the DIRECT
// rectangle-division scheme; returns the best evaluated point.
struct DirectResult {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};
DirectResult direct_maximize(const std::function<double(double)>& objective,
                             double x_tolerance = 1e-3, int max_evaluations = 600);

// One BO proposal. Returns the |observations|-th Sobol point during warm-up,
// otherwise the maximizer of the marginalized acquisition. Pure.
double bo_step(std::span<const Observation> observations, const BOConfig& config);

struct BOTraceEntry {
  int t = 0;
  double x = 0.0;
  double theta = 0.0;
  double total = 0.0;
};

struct BOResult {
  double best_x = 0.0;
  double best_theta = 0.0;
  double best_total = 0.0;
  std::vector<BOTraceEntry> trace;
};

// Objective: evaluates x and returns the per-execution times tau_1..tau_L.
using Objective = std::function<std::vector<double>(double x)>;

// Raised when the objective fails mid-run; carries what was evaluated so far.
struct ObjectiveError : Error {
  ObjectiveError(const std::string& what, std::vector<BOTraceEntry> partial)
      : Error(what), partial_trace(std::move(partial)) {}
  std::vector<BOTraceEntry> partial_trace;
};

// n_init Sobol evaluations followed by n_iters acquisition steps; the
// incumbent is the minimum observed total.
BOResult bo_run_closed_loop(const Objective& objective, const BOConfig& config);

}  // namespace loopsched
