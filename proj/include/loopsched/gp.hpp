#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "loopsched/error.hpp"

namespace loopsched {

enum class KernelKind {
  Matern,          // Matern 5/2 over x
  MaternPlusExp,   // Matern 5/2 over x plus exponentially decreasing kernel over ell
};

// phi = [mean_mu, sigma_eps, sigma, rho^2, alpha, beta]. mean_mu lives in
// standardized target units; the rest are positive.
struct Hyperparams {
  double mean_mu = 0.0;
  double noise_sigma = 0.1;    // sigma_eps; 0 allowed (jitter-only interpolation)
  double matern_sigma2 = 1.0;  // signal variance sigma^2
  double matern_rho2 = 1.0;    // lengthscale parameter rho^2
  double exp_alpha = 1.0;
  double exp_beta = 1.0;

  void validate(KernelKind kind) const;
};

// Training input: scalar x for the plain model, (x, ell) for the
// locality-aware one. ell is ignored by the plain Matern kernel.
struct GpPoint {
  double x = 0.0;
  double ell = 0.0;

  bool operator==(const GpPoint&) const = default;
};

struct TrainingSet {
  std::vector<GpPoint> inputs;
  std::vector<double> targets;  // raw observations [s]

  std::size_t size() const { return inputs.size(); }
  void validate() const;
};

// k(a,b) = sigma^2 (1 + sqrt(5) r + 5/3 r^2) exp(-sqrt(5) r),  r = |a - b| / rho^2.
// The lengthscale enters as rho^2 dividing the plain distance.
double matern52(double a, double b, double sigma2, double rho2);

// k(l, l') = beta^alpha / (l + l' + beta)^alpha
double exp_decay_kernel(double l1, double l2, double alpha, double beta);

double sum_kernel(const GpPoint& p1, const GpPoint& p2, const Hyperparams& hp);

double kernel_value(KernelKind kind, const GpPoint& a, const GpPoint& b, const Hyperparams& hp);

// Exact GP posterior with a cached Cholesky factorization of (K + sigma_eps^2 I).
// Targets are standardized internally and centered by mean_mu; predictions are
// reported back in raw units.
class FittedGP {
 public:
  // (mean, variance) of the latent function at the query point, raw units.
  std::pair<double, double> predict(const GpPoint& query) const;

  KernelKind kernel() const { return kind_; }
  const Hyperparams& hyperparams() const { return hp_; }
  std::size_t train_size() const { return inputs_.size(); }
  double target_mean() const { return y_mean_; }
  double target_std() const { return y_std_; }
  const std::vector<GpPoint>& inputs() const { return inputs_; }
  const Eigen::VectorXd& weights() const { return alpha_; }

  // (K + sigma_eps^2 I)^-1 rhs against the cached factorization
  Eigen::VectorXd solve_system(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }

 private:
  friend FittedGP gp_fit(const TrainingSet&, const Hyperparams&, KernelKind);
  friend double log_marginal_likelihood(const TrainingSet&, const Hyperparams&, KernelKind);

  KernelKind kind_ = KernelKind::Matern;
  Hyperparams hp_;
  std::vector<GpPoint> inputs_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;   // (K + sigma_eps^2 I)^-1 (z - mean_mu)
  double log_det_ = 0.0;
  double quad_form_ = 0.0;  // r^T A^-1 r, cached for the marginal likelihood
};

FittedGP gp_fit(const TrainingSet& train, const Hyperparams& hp, KernelKind kind);

// log p(D | phi) of the standardized, mean_mu-centered targets.
double log_marginal_likelihood(const TrainingSet& train, const Hyperparams& hp, KernelKind kind);

// Posterior samples of phi via adaptive random-walk Metropolis in log space.
// Priors: N(0,1) on mean_mu, log-normal(0,1) on sigma_eps, sigma, rho^2,
// alpha, beta. 500 burn-in iterations, chain thinned to n_samples draws.
std::vector<Hyperparams> sample_hyperparams(const TrainingSet& train, KernelKind kind,
                                            int n_samples, std::uint64_t seed);

}  // namespace loopsched
