#include "loopsched/gp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace loopsched {

namespace {

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

Eigen::MatrixXd gram_matrix(KernelKind kind, const std::vector<GpPoint>& pts,
                            const Hyperparams& hp) {
  const auto t = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd k(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i; j < t; ++j) {
      double v = kernel_value(kind, pts[static_cast<std::size_t>(i)],
                              pts[static_cast<std::size_t>(j)], hp);
      k(i, j) = v;
      k(j, i) = v;
    }
  return k;
}

struct Standardized {
  Eigen::VectorXd residual;  // (y - mean)/std - mean_mu
  double mean = 0.0;
  double std = 1.0;
};

Standardized standardize(const std::vector<double>& targets, double mean_mu) {
  const auto t = static_cast<Eigen::Index>(targets.size());
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(), t);
  double mean = y.mean();
  double var = (y.array() - mean).square().sum() / static_cast<double>(t);
  double std = std::sqrt(var);
  if (!(std > 1e-12)) std = 1.0;
  Standardized s;
  s.mean = mean;
  s.std = std;
  s.residual = ((y.array() - mean) / std - mean_mu).matrix();
  return s;
}

// Factorizes K + sigma_eps^2 I, escalating the relative jitter from 1e-8 to
// 1e-4 before giving up.
struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

Factorization factorize(const Eigen::MatrixXd& k, double noise_sigma) {
  const auto t = k.rows();
  double scale = std::max(k.trace() / static_cast<double>(t), 1e-300);
  Factorization f;
  for (double rel = 1e-8; rel <= 1e-4 * 1.0000001; rel *= 10.0) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise_sigma * noise_sigma + rel * scale;
    f.llt.compute(a);
    if (f.llt.info() == Eigen::Success) {
      f.log_det = 2.0 * f.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      return f;
    }
  }
  throw NumericalError("gp_fit: Gram matrix not positive definite after jitter escalation");
}

}  // namespace

void Hyperparams::validate(KernelKind kind) const {
  if (!std::isfinite(mean_mu)) throw InvalidParameterError("hyperparams: mean_mu must be finite");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw InvalidParameterError("hyperparams: sigma_eps must be >= 0");
  if (!positive_finite(matern_sigma2)) throw InvalidParameterError("hyperparams: sigma^2 must be > 0");
  if (!positive_finite(matern_rho2)) throw InvalidParameterError("hyperparams: rho^2 must be > 0");
  if (kind == KernelKind::MaternPlusExp) {
    if (!positive_finite(exp_alpha)) throw InvalidParameterError("hyperparams: alpha must be > 0");
    if (!positive_finite(exp_beta)) throw InvalidParameterError("hyperparams: beta must be > 0");
  }
}

void TrainingSet::validate() const {
  if (inputs.empty()) throw InvalidParameterError("training set: needs at least one point");
  if (inputs.size() != targets.size())
    throw InvalidParameterError("training set: inputs and targets differ in length");
  for (double y : targets)
    if (!std::isfinite(y)) throw InvalidParameterError("training set: non-finite target");
}

double matern52(double a, double b, double sigma2, double rho2) {
  double r = std::abs(a - b) / rho2;
  double s = std::sqrt(5.0) * r;
  return sigma2 * (1.0 + s + (5.0 / 3.0) * r * r) * std::exp(-s);
}

double exp_decay_kernel(double l1, double l2, double alpha, double beta) {
  return std::exp(alpha * (std::log(beta) - std::log(l1 + l2 + beta)));
}

double sum_kernel(const GpPoint& p1, const GpPoint& p2, const Hyperparams& hp) {
  return matern52(p1.x, p2.x, hp.matern_sigma2, hp.matern_rho2) +
         exp_decay_kernel(p1.ell, p2.ell, hp.exp_alpha, hp.exp_beta);
}

double kernel_value(KernelKind kind, const GpPoint& a, const GpPoint& b, const Hyperparams& hp) {
  if (kind == KernelKind::Matern) return matern52(a.x, b.x, hp.matern_sigma2, hp.matern_rho2);
  return sum_kernel(a, b, hp);
}

FittedGP gp_fit(const TrainingSet& train, const Hyperparams& hp, KernelKind kind) {
  train.validate();
  hp.validate(kind);

  if (hp.noise_sigma == 0.0) {
    // A noise-free GP with repeated inputs is singular no matter the jitter.
    for (std::size_t i = 0; i < train.inputs.size(); ++i)
      for (std::size_t j = i + 1; j < train.inputs.size(); ++j)
        if (train.inputs[i] == train.inputs[j])
          throw NumericalError("gp_fit: duplicate inputs with zero observation noise");
  }

  FittedGP gp;
  gp.kind_ = kind;
  gp.hp_ = hp;
  gp.inputs_ = train.inputs;

  auto z = standardize(train.targets, hp.mean_mu);
  gp.y_mean_ = z.mean;
  gp.y_std_ = z.std;

  Eigen::MatrixXd k = gram_matrix(kind, train.inputs, hp);
  auto f = factorize(k, hp.noise_sigma);
  gp.alpha_ = f.llt.solve(z.residual);
  gp.log_det_ = f.log_det;
  gp.quad_form_ = z.residual.dot(gp.alpha_);
  gp.llt_ = std::move(f.llt);
  return gp;
}

std::pair<double, double> FittedGP::predict(const GpPoint& query) const {
  const auto t = static_cast<Eigen::Index>(inputs_.size());
  Eigen::VectorXd kq(t);
  for (Eigen::Index i = 0; i < t; ++i)
    kq(i) = kernel_value(kind_, query, inputs_[static_cast<std::size_t>(i)], hp_);

  double mean_z = hp_.mean_mu + kq.dot(alpha_);
  double var_z = kernel_value(kind_, query, query, hp_) - kq.dot(llt_.solve(kq));
  var_z = std::max(var_z, 0.0);
  return {mean_z * y_std_ + y_mean_, var_z * y_std_ * y_std_};
}

double log_marginal_likelihood(const TrainingSet& train, const Hyperparams& hp, KernelKind kind) {
  auto gp = gp_fit(train, hp, kind);
  const auto t = static_cast<double>(train.size());
  return -0.5 * gp.quad_form_ - 0.5 * gp.log_det_ - 0.5 * t * std::log(2.0 * M_PI);
}

namespace {

constexpr int kBurnIn = 500;
constexpr int kThin = 10;

int hyper_dim(KernelKind kind) { return kind == KernelKind::MaternPlusExp ? 6 : 4; }

Hyperparams unpack(const Eigen::VectorXd& lambda, KernelKind kind) {
  Hyperparams hp;
  hp.mean_mu = lambda(0);
  hp.noise_sigma = std::exp(lambda(1));
  double sigma = std::exp(lambda(2));
  hp.matern_sigma2 = sigma * sigma;
  hp.matern_rho2 = std::exp(lambda(3));
  if (kind == KernelKind::MaternPlusExp) {
    hp.exp_alpha = std::exp(lambda(4));
    hp.exp_beta = std::exp(lambda(5));
  }
  return hp;
}

}  // namespace

std::vector<Hyperparams> sample_hyperparams(const TrainingSet& train, KernelKind kind,
                                            int n_samples, std::uint64_t seed) {
  train.validate();
  if (n_samples < 1) throw InvalidParameterError("sample_hyperparams: n_samples must be >= 1");

  const int dim = hyper_dim(kind);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Log posterior up to a constant: likelihood plus standard normal priors on
  // the sampled coordinates (log-normal on the positive hyperparameters).
  auto log_post = [&](const Eigen::VectorXd& lambda) -> double {
    double value = -0.5 * lambda.squaredNorm();
    try {
      value += log_marginal_likelihood(train, unpack(lambda, kind), kind);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
    return std::isfinite(value) ? value : -std::numeric_limits<double>::infinity();
  };

  Eigen::VectorXd state = Eigen::VectorXd::Zero(dim);  // prior median
  double current = log_post(state);
  double log_step = std::log(0.3);

  const int total = kBurnIn + n_samples * kThin;
  std::vector<Hyperparams> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));

  for (int it = 0; it < total; ++it) {
    Eigen::VectorXd proposal(dim);
    double step = std::exp(log_step);
    for (int d = 0; d < dim; ++d) proposal(d) = state(d) + step * normal(rng);
    double cand = log_post(proposal);
    bool accept = std::log(unit(rng)) < cand - current;
    if (accept) {
      state = proposal;
      current = cand;
    }
    if (it < kBurnIn) {
      // Robbins-Monro drift toward ~30% acceptance
      double gain = 1.0 / std::pow(1.0 + it, 0.6);
      log_step += gain * ((accept ? 1.0 : 0.0) - 0.3);
    } else if ((it - kBurnIn) % kThin == kThin - 1) {
      samples.push_back(unpack(state, kind));
    }
  }
  return samples;
}

}  // namespace loopsched
