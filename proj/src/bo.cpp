#include "loopsched/bo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace loopsched {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

double log_normal_cdf(double z) {
  if (z > -8.0) return std::log(0.5 * std::erfc(-z / kSqrt2));
  // Mills-ratio asymptotic; erfc underflows around here
  return -0.5 * z * z - std::log(-z) - 0.5 * std::log(2.0 * M_PI);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double reparam(double x) {
  if (!(x > 0.0) || !(x < 1.0))
    throw InvalidParameterError("reparam: x must lie in the open interval (0,1)");
  return std::exp2(19.0 * x - 10.0);
}

double inverse_reparam(double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw InvalidParameterError("inverse_reparam: theta must be positive and finite");
  double x = (std::log2(theta) + 10.0) / 19.0;
  if (!(x > 0.0) || !(x < 1.0))
    throw InvalidParameterError("inverse_reparam: theta outside the tunable range (2^-10, 2^9)");
  return x;
}

std::vector<double> sobol_init(int n) {
  if (n < 1) throw InvalidParameterError("sobol_init: n must be >= 1");
  std::vector<double> points;
  points.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    double value = 0.0;
    double base = 0.5;
    for (unsigned bits = static_cast<unsigned>(i); bits != 0; bits >>= 1, base *= 0.5)
      if (bits & 1u) value += base;
    points.push_back(std::clamp(value, kDomainEps, 1.0 - kDomainEps));
  }
  return points;
}

void BOConfig::validate() const {
  if (n_init < 1) throw InvalidParameterError("bo config: n_init must be >= 1");
  if (n_iters < 0) throw InvalidParameterError("bo config: n_iters must be >= 0");
  if (subsample_k < 0) throw InvalidParameterError("bo config: subsample_k must be >= 0");
  if (mes_samples < 1) throw InvalidParameterError("bo config: mes_samples must be >= 1");
  if (hp_samples < 1) throw InvalidParameterError("bo config: hp_samples must be >= 1");
}

Observation Observation::from_executions(double x, std::span<const double> taus) {
  Observation obs;
  obs.x = x;
  obs.theta = reparam(x);
  obs.total = 0.0;
  obs.per_execution.reserve(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    obs.per_execution.emplace_back(static_cast<std::int64_t>(i) + 1, taus[i]);
    obs.total += taus[i];
  }
  return obs;
}

TrainingSet Surrogate::make_training_set(std::span<const Observation> observations,
                                         const BOConfig& config, SurrogateMode* effective_mode,
                                         std::int64_t* repeats_out) {
  if (observations.empty()) throw InvalidParameterError("surrogate: needs at least one observation");

  std::int64_t repeats = 1;
  for (const auto& obs : observations)
    for (const auto& [ell, tau] : obs.per_execution) repeats = std::max(repeats, ell);
  if (repeats_out) *repeats_out = repeats;

  SurrogateMode mode = config.surrogate;
  if (mode == SurrogateMode::LocalityAware && repeats == 1) mode = SurrogateMode::Plain;
  if (effective_mode) *effective_mode = mode;

  TrainingSet train;
  if (mode == SurrogateMode::Plain) {
    for (const auto& obs : observations) {
      train.inputs.push_back({obs.x, 0.0});
      train.targets.push_back(obs.total);
    }
    return train;
  }

  std::int64_t k = config.subsample_k > 0
                       ? config.subsample_k
                       : std::max<std::int64_t>(1, std::llround(static_cast<double>(repeats) / 4.0));
  for (const auto& obs : observations)
    for (const auto& [ell, tau] : obs.per_execution)
      if ((ell - 1) % k == 0) {
        train.inputs.push_back({obs.x, static_cast<double>(ell)});
        train.targets.push_back(tau);
      }
  return train;
}

Surrogate::Surrogate(std::span<const Observation> observations, const BOConfig& config,
                     const Hyperparams& hp)
    : mode_(config.surrogate) {
  SurrogateMode effective = mode_;
  auto train = make_training_set(observations, config, &effective, &repeats_);
  fell_back_ = mode_ == SurrogateMode::LocalityAware && effective == SurrogateMode::Plain;
  mode_ = effective;
  gp_ = gp_fit(train, hp,
               mode_ == SurrogateMode::Plain ? KernelKind::Matern : KernelKind::MaternPlusExp);
  if (mode_ == SurrogateMode::Plain) return;

  // Sum-kernel algebra: k((x,l),(x_i,l_i)) = m(x,x_i) + e(l,l_i), so the
  // ell-dependent pieces of the summed prediction do not depend on x and are
  // cached here. Per query only one solve against m(x, .) remains.
  const auto& pts = gp_.inputs();
  const auto t = static_cast<Eigen::Index>(pts.size());
  exp_sum_ = Eigen::VectorXd::Zero(t);
  exp_quad_sum_ = 0.0;
  prior_var_sum_ = 0.0;
  const auto& h = gp_.hyperparams();
  for (std::int64_t ell = 1; ell <= repeats_; ++ell) {
    Eigen::VectorXd e(t);
    for (Eigen::Index i = 0; i < t; ++i)
      e(i) = exp_decay_kernel(static_cast<double>(ell), pts[static_cast<std::size_t>(i)].ell,
                              h.exp_alpha, h.exp_beta);
    exp_sum_ += e;
    exp_quad_sum_ += e.dot(gp_.solve_system(e));
    prior_var_sum_ += h.matern_sigma2 + exp_decay_kernel(static_cast<double>(ell),
                                                         static_cast<double>(ell), h.exp_alpha,
                                                         h.exp_beta);
  }
  solved_exp_sum_ = gp_.solve_system(exp_sum_);
}

std::pair<double, double> Surrogate::predict_total(double x) const {
  if (mode_ == SurrogateMode::Plain) return gp_.predict({x, 0.0});

  const auto& pts = gp_.inputs();
  const auto& h = gp_.hyperparams();
  const auto t = static_cast<Eigen::Index>(pts.size());
  const double repeats = static_cast<double>(repeats_);

  Eigen::VectorXd m(t);
  for (Eigen::Index i = 0; i < t; ++i)
    m(i) = matern52(x, pts[static_cast<std::size_t>(i)].x, h.matern_sigma2, h.matern_rho2);

  // sum_ell k_q = L m + E; quadratic form expands into three cached pieces
  double mean_z = repeats * h.mean_mu + (repeats * m + exp_sum_).dot(gp_.weights());
  Eigen::VectorXd solved_m = gp_.solve_system(m);
  double quad = repeats * m.dot(solved_m) + 2.0 * m.dot(solved_exp_sum_) + exp_quad_sum_;
  double var_z = std::max(prior_var_sum_ - quad, 0.0);

  double std_y = gp_.target_std();
  return {mean_z * std_y + repeats * gp_.target_mean(), var_z * std_y * std_y};
}

double mes_utility(double mean, double variance, std::span<const double> max_value_samples) {
  if (max_value_samples.empty()) throw InvalidParameterError("mes_utility: no max-value samples");
  double sd = std::sqrt(std::max(variance, 0.0));
  if (sd < 1e-12) return 0.0;
  double neg_mean = -mean;
  double acc = 0.0;
  for (double y_star : max_value_samples) {
    double gamma = (y_star - neg_mean) / sd;
    double log_cdf = log_normal_cdf(gamma);
    // gamma phi(gamma) / (2 Phi(gamma)) - log Phi(gamma)
    double ratio = gamma * std::exp(-0.5 * gamma * gamma - 0.5 * std::log(2.0 * M_PI) - log_cdf);
    acc += std::max(0.5 * ratio - log_cdf, 0.0);
  }
  return acc / static_cast<double>(max_value_samples.size());
}

std::vector<double> sample_max_values(const Surrogate& surrogate, int n_samples,
                                      std::uint64_t seed) {
  if (n_samples < 1) throw InvalidParameterError("sample_max_values: n_samples must be >= 1");
  constexpr int kGrid = 512;
  std::vector<double> neg_mean(kGrid), sd(kGrid);
  double best = -std::numeric_limits<double>::infinity();
  double max_sd = 0.0;
  for (int g = 0; g < kGrid; ++g) {
    double x = kDomainEps + (1.0 - 2.0 * kDomainEps) * (g + 0.5) / kGrid;
    auto [m, v] = surrogate.predict_total(x);
    neg_mean[g] = -m;
    sd[g] = std::sqrt(std::max(v, 0.0));
    best = std::max(best, neg_mean[g]);
    max_sd = std::max(max_sd, sd[g]);
  }
  if (max_sd < 1e-12) return std::vector<double>(static_cast<std::size_t>(n_samples), best);

  // P(max <= y) = prod_g Phi((y - mu_g) / sd_g)
  auto log_cdf_max = [&](double y) {
    double acc = 0.0;
    for (int g = 0; g < kGrid; ++g) acc += log_normal_cdf((y - neg_mean[g]) / std::max(sd[g], 1e-12));
    return acc;
  };

  double lo = best;
  while (log_cdf_max(lo) > std::log(0.25)) lo -= max_sd;
  double hi = best;
  while (log_cdf_max(hi) < std::log(0.75)) hi += max_sd;

  auto quantile = [&](double p) {
    double a = lo, b = hi;
    for (int i = 0; i < 80; ++i) {
      double mid = 0.5 * (a + b);
      (log_cdf_max(mid) < std::log(p) ? a : b) = mid;
    }
    return 0.5 * (a + b);
  };

  // Gumbel fit through the quartiles: y_p = a - b ln(-ln p)
  double q25 = quantile(0.25), q50 = quantile(0.5), q75 = quantile(0.75);
  double b_g = (q75 - q25) / (std::log(std::log(4.0)) - std::log(std::log(4.0 / 3.0)));
  double a_g = q50 + b_g * std::log(std::log(2.0));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);
  std::vector<double> samples(static_cast<std::size_t>(n_samples));
  for (auto& s : samples) s = a_g - b_g * std::log(-std::log(unit(rng)));
  return samples;
}

double mes_acquisition(const Surrogate& surrogate, double x, int max_value_samples,
                       std::uint64_t seed) {
  auto stars = sample_max_values(surrogate, max_value_samples, seed);
  auto [mean, var] = surrogate.predict_total(x);
  return mes_utility(mean, var, stars);
}

MarginalizedAcquisition::MarginalizedAcquisition(std::span<const Observation> observations,
                                                 const BOConfig& config) {
  config.validate();
  SurrogateMode effective = config.surrogate;
  auto train = Surrogate::make_training_set(observations, config, &effective, nullptr);
  auto kind = effective == SurrogateMode::Plain ? KernelKind::Matern : KernelKind::MaternPlusExp;

  std::uint64_t base = mix_seed(config.seed, observations.size());
  auto draws = sample_hyperparams(train, kind, config.hp_samples, base);
  surrogates_.reserve(draws.size());
  max_values_.reserve(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    surrogates_.emplace_back(observations, config, draws[i]);
    max_values_.push_back(
        sample_max_values(surrogates_.back(), config.mes_samples, mix_seed(base, i)));
  }
}

double MarginalizedAcquisition::operator()(double x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < surrogates_.size(); ++i) {
    auto [mean, var] = surrogates_[i].predict_total(x);
    acc += mes_utility(mean, var, max_values_[i]);
  }
  return acc / static_cast<double>(surrogates_.size());
}

DirectResult direct_maximize(const std::function<double(double)>& objective, double x_tolerance,
                             int max_evaluations) {
  struct Interval {
    double center;
    double half;
    double value;
  };

  DirectResult best;
  int evals = 0;
  auto evaluate = [&](double x) {
    double v = objective(x);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "direct_maximize: objective not finite at x = " << x;
      throw NumericalError(msg.str());
    }
    ++evals;
    if (evals == 1 || v > best.value) best = {x, v, 0};
    return v;
  };

  double lo = kDomainEps, hi = 1.0 - kDomainEps;
  std::vector<Interval> intervals{{0.5 * (lo + hi), 0.5 * (hi - lo), evaluate(0.5 * (lo + hi))}};

  while (evals < max_evaluations) {
    // Best interval per distinct half-width. Halves arise as half0 / 3^depth,
    // so exact double comparison groups depths correctly.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      bool replaced = false;
      for (auto& c : candidates)
        if (intervals[c].half == intervals[i].half) {
          if (intervals[i].value > intervals[c].value) c = i;
          replaced = true;
          break;
        }
      if (!replaced) candidates.push_back(i);
    }

    // Interval j is potentially optimal if some K >= 0 makes v_j + K h_j
    // dominate every other candidate.
    std::vector<std::size_t> chosen;
    for (std::size_t j : candidates) {
      double k_lo = 0.0, k_hi = std::numeric_limits<double>::infinity();
      bool feasible = true;
      for (std::size_t i : candidates) {
        if (i == j) continue;
        double dh = intervals[j].half - intervals[i].half;
        double dv = intervals[i].value - intervals[j].value;
        if (dh > 0.0) k_lo = std::max(k_lo, dv / dh);
        else if (dh < 0.0) k_hi = std::min(k_hi, dv / dh);
        else if (dv > 0.0) feasible = false;
      }
      if (feasible && k_lo <= k_hi) chosen.push_back(j);
    }

    bool any_division = false;
    std::vector<Interval> created;
    for (std::size_t idx : chosen) {
      Interval& node = intervals[idx];
      if (node.half <= x_tolerance / 2.0) continue;
      if (evals + 2 > max_evaluations) break;
      double third = 2.0 * node.half / 3.0;
      created.push_back({node.center - third, node.half / 3.0, evaluate(node.center - third)});
      created.push_back({node.center + third, node.half / 3.0, evaluate(node.center + third)});
      node.half /= 3.0;
      any_division = true;
    }
    if (!any_division) break;
    intervals.insert(intervals.end(), created.begin(), created.end());
  }

  best.evaluations = evals;
  return best;
}

double bo_step(std::span<const Observation> observations, const BOConfig& config) {
  config.validate();
  auto t = static_cast<int>(observations.size());
  if (t < config.n_init) return sobol_init(t + 1).back();
  MarginalizedAcquisition acquisition(observations, config);
  return direct_maximize(acquisition).x;
}

BOResult bo_run_closed_loop(const Objective& objective, const BOConfig& config) {
  config.validate();
  std::vector<Observation> observations;
  BOResult result;
  const int budget = config.n_init + config.n_iters;
  for (int t = 0; t < budget; ++t) {
    double x = bo_step(observations, config);
    std::vector<double> taus;
    try {
      taus = objective(x);
    } catch (const std::exception& e) {
      throw ObjectiveError("objective failed at t=" + std::to_string(t) + ": " + e.what(),
                           result.trace);
    }
    auto obs = Observation::from_executions(x, taus);
    result.trace.push_back({t, x, obs.theta, obs.total});
    observations.push_back(std::move(obs));
  }
  auto best = std::min_element(result.trace.begin(), result.trace.end(),
                               [](const auto& a, const auto& b) { return a.total < b.total; });
  result.best_x = best->x;
  result.best_theta = best->theta;
  result.best_total = best->total;
  return result;
}

}  // namespace loopsched
