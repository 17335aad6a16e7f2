#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "loopsched/bo.hpp"
#include "loopsched/simulator.hpp"

using namespace loopsched;

namespace {

// Monte-Carlo estimate of the entropy reduction H[N(mu,sd^2)] - H[N truncated
// above at y_star], the quantity the closed-form MES term computes.
double mc_entropy_reduction(double mu, double sd, double y_star, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(mu, sd);
  double gamma = (y_star - mu) / sd;
  double log_z = std::log(0.5 * std::erfc(-gamma / std::sqrt(2.0)));
  double acc = 0.0;
  int kept = 0;
  while (kept < 100000) {
    double y = gauss(rng);
    if (y > y_star) continue;
    double z = (y - mu) / sd;
    double log_pdf = -0.5 * z * z - 0.5 * std::log(2.0 * M_PI) - std::log(sd) - log_z;
    acc += -log_pdf;
    ++kept;
  }
  double h_trunc = acc / kept;
  double h_gauss = 0.5 * std::log(2.0 * M_PI * M_E * sd * sd);
  return h_gauss - h_trunc;
}

std::vector<Observation> make_observations(std::span<const double> xs,
                                           const std::function<std::vector<double>(double)>& f) {
  std::vector<Observation> obs;
  for (double x : xs) {
    auto taus = f(x);
    obs.push_back(Observation::from_executions(x, taus));
  }
  return obs;
}

}  // namespace

TEST_CASE("reparam maps the unit interval onto (2^-10, 2^9)") {
  CHECK(reparam(10.0 / 19.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(reparam(0.5) == doctest::Approx(0.7071067811865476).epsilon(1e-12));
  CHECK(reparam(1e-9) == doctest::Approx(std::exp2(-10.0)).epsilon(1e-6));
  CHECK(reparam(1.0 - 1e-9) == doctest::Approx(512.0).epsilon(1e-6));
  CHECK_THROWS_AS(reparam(0.0), InvalidParameterError);
  CHECK_THROWS_AS(reparam(1.0), InvalidParameterError);

  for (double x : {0.01, 0.3, 0.77, 0.99})
    CHECK(inverse_reparam(reparam(x)) == doctest::Approx(x).epsilon(1e-12));
  CHECK_THROWS_AS(inverse_reparam(600.0), InvalidParameterError);
}

TEST_CASE("sobol prefix") {
  CHECK(sobol_init(1) == std::vector<double>{0.5});
  CHECK(sobol_init(4) == std::vector<double>{0.5, 0.25, 0.75, 0.125});
  auto pts = sobol_init(64);
  std::vector<double> sorted = pts;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());  // distinct
  for (double p : pts) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("surrogate training sets") {
  BOConfig config;
  auto flat = [](double) { return std::vector<double>{1.0}; };

  SUBCASE("plain: one row per observation") {
    auto obs = make_observations(std::vector<double>{0.2, 0.4, 0.6}, flat);
    SurrogateMode mode;
    auto train = Surrogate::make_training_set(obs, config, &mode, nullptr);
    CHECK(train.size() == 3);
    CHECK(mode == SurrogateMode::Plain);
  }

  SUBCASE("locality with L=1 falls back to plain") {
    config.surrogate = SurrogateMode::LocalityAware;
    auto obs = make_observations(std::vector<double>{0.2, 0.4}, flat);
    Surrogate s(obs, config, Hyperparams{});
    CHECK(s.fell_back_to_plain());
    CHECK(s.mode() == SurrogateMode::Plain);
  }

  SUBCASE("locality with L=16 keeps ell in {1,5,9,13}") {
    config.surrogate = SurrogateMode::LocalityAware;
    auto sixteen = [](double x) { return std::vector<double>(16, x); };
    auto obs = make_observations(std::vector<double>{0.2, 0.4}, sixteen);
    SurrogateMode mode;
    std::int64_t repeats = 0;
    auto train = Surrogate::make_training_set(obs, config, &mode, &repeats);
    CHECK(mode == SurrogateMode::LocalityAware);
    CHECK(repeats == 16);
    CHECK(train.size() == 8);  // 4 rows per observation
    for (const auto& p : train.inputs)
      CHECK((p.ell == 1 || p.ell == 5 || p.ell == 9 || p.ell == 13));
  }
}

TEST_CASE("cached sum-kernel prediction equals the per-execution loop") {
  BOConfig config;
  config.surrogate = SurrogateMode::LocalityAware;
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto gen = [&](double x) {
    std::vector<double> taus;
    for (int ell = 1; ell <= 10; ++ell)
      taus.push_back(1.0 + x + 1.5 * std::exp(-0.3 * (ell - 1)) + 0.02 * u(rng));
    return taus;
  };
  auto obs = make_observations(sobol_init(5), gen);
  Hyperparams hp;
  hp.matern_rho2 = 0.4;
  hp.exp_alpha = 1.3;
  hp.exp_beta = 2.0;
  Surrogate s(obs, config, hp);
  for (int q = 0; q < 20; ++q) {
    double x = u(rng);
    auto [mean, var] = s.predict_total(x);
    double naive_mean = 0.0, naive_var = 0.0;
    for (std::int64_t ell = 1; ell <= s.repeats(); ++ell) {
      auto [m, v] = s.gp().predict({x, static_cast<double>(ell)});
      naive_mean += m;
      naive_var += v;
    }
    CHECK(mean == doctest::Approx(naive_mean).epsilon(1e-9));
    CHECK(var == doctest::Approx(naive_var).epsilon(1e-9));
  }
}

TEST_CASE("predict_total sums over all executions") {
  BOConfig config;
  config.surrogate = SurrogateMode::LocalityAware;
  auto gen = [](double x) {
    std::vector<double> taus;
    for (int ell = 1; ell <= 8; ++ell) taus.push_back(1.0 + x + 2.0 * std::exp(-0.4 * (ell - 1)));
    return taus;
  };
  auto obs = make_observations(std::vector<double>{0.2, 0.5, 0.8}, gen);
  Surrogate s(obs, config, Hyperparams{});
  auto [mean, var] = s.predict_total(0.5);
  CHECK(var >= 0.0);
  // the training x = 0.5 total is observed; prediction should sit nearby
  double truth = 0.0;
  for (double tau : gen(0.5)) truth += tau;
  CHECK(mean == doctest::Approx(truth).epsilon(0.05));
}

TEST_CASE("locality-aware model predicts totals better under a decaying effect") {
  // additive locality: tau(x, ell) = f(x) + 2 exp(-0.4 (ell-1)) + noise
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    auto f = [](double x) { return 2.0 + std::pow(x - 0.4, 2.0) * 4.0; };
    auto gen = [&](double x) {
      std::vector<double> taus;
      for (int ell = 1; ell <= 12; ++ell)
        taus.push_back(f(x) + 2.0 * std::exp(-0.4 * (ell - 1)) + noise(rng));
      return taus;
    };
    std::vector<double> xs = sobol_init(6);
    auto obs = make_observations(xs, gen);

    BOConfig plain_config;
    BOConfig locality_config;
    locality_config.surrogate = SurrogateMode::LocalityAware;

    double rmse_plain = 0.0, rmse_locality = 0.0;
    for (double xq : {0.15, 0.45, 0.9}) {
      double truth = 0.0;
      for (int ell = 1; ell <= 12; ++ell) truth += f(xq) + 2.0 * std::exp(-0.4 * (ell - 1));
      auto fit_and_eval = [&](const BOConfig& c) {
        auto train = Surrogate::make_training_set(obs, c, nullptr, nullptr);
        auto kind = c.surrogate == SurrogateMode::Plain ? KernelKind::Matern
                                                        : KernelKind::MaternPlusExp;
        auto draws = sample_hyperparams(train, kind, 3, seed);
        double best = 0.0, best_lml = -1e300;
        for (const auto& hp : draws) {
          double lml = log_marginal_likelihood(train, hp, kind);
          if (lml > best_lml) {
            best_lml = lml;
            best = Surrogate(obs, c, hp).predict_total(xq).first;
          }
        }
        return best;
      };
      rmse_plain += std::pow(fit_and_eval(plain_config) - truth, 2.0);
      rmse_locality += std::pow(fit_and_eval(locality_config) - truth, 2.0);
    }
    if (rmse_locality <= rmse_plain) ++wins;
  }
  CHECK(wins >= 11);  // majority of 20 seeds
}

TEST_CASE("mes utility basics") {
  double stars[] = {1.0, 2.0};
  CHECK(mes_utility(5.0, 0.0, stars) == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    double stars2[] = {u(rng), u(rng), u(rng)};
    CHECK(mes_utility(u(rng), 0.1 + std::abs(u(rng)), stars2) >= 0.0);
  }
}

TEST_CASE("mes utility matches a Monte-Carlo entropy-reduction oracle") {
  // negated objective has mean 1.3 and sd 0.7; gamma spans [-0.8, 1.9]
  double mean_total = -1.3;
  double variance = 0.49;
  int idx = 0;
  for (double gamma : {-0.8, -0.2, 0.4, 1.1, 1.9}) {
    double y_star = 1.3 + 0.7 * gamma;
    double stars[] = {y_star};
    double closed = mes_utility(mean_total, variance, stars);
    double mc = mc_entropy_reduction(1.3, 0.7, y_star, 42 + idx++);
    CHECK(closed == doctest::Approx(mc).epsilon(0.10));
  }
}

TEST_CASE("zero-variance surrogate yields zero acquisition") {
  // single-point dataset with noise-free GP: variance vanishes only at the
  // training site, so instead drive the utility check directly
  double stars[] = {0.5};
  CHECK(mes_utility(-0.5, 1e-30, stars) == 0.0);
}

TEST_CASE("marginalized acquisition") {
  auto gen = [](double x) { return std::vector<double>{2.0 + std::pow(x - 0.45, 2.0)}; };
  auto obs = make_observations(sobol_init(5), gen);
  BOConfig config;
  config.hp_samples = 4;
  config.seed = 9;

  MarginalizedAcquisition acq(obs, config);

  SUBCASE("deterministic under a fixed seed") {
    MarginalizedAcquisition again(obs, config);
    for (double x : {0.1, 0.33, 0.62, 0.9}) CHECK(acq(x) == again(x));
  }

  SUBCASE("mean lies within the per-sample envelope") {
    for (double x : {0.15, 0.5, 0.85}) {
      double lo = 1e300, hi = -1e300;
      const auto& surrogates = acq.surrogates();
      const auto& stars = acq.max_values();
      for (std::size_t i = 0; i < surrogates.size(); ++i) {
        auto [m, v] = surrogates[i].predict_total(x);
        double u = mes_utility(m, v, stars[i]);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
      }
      double mean = acq(x);
      CHECK(mean >= lo - 1e-12);
      CHECK(mean <= hi + 1e-12);
    }
  }

  SUBCASE("hp_samples = 1 reduces to single-phi MES") {
    BOConfig single = config;
    single.hp_samples = 1;
    MarginalizedAcquisition one(obs, single);
    REQUIRE(one.surrogates().size() == 1);
    for (double x : {0.2, 0.7}) {
      auto [m, v] = one.surrogates()[0].predict_total(x);
      CHECK(one(x) == mes_utility(m, v, one.max_values()[0]));
    }
  }
}

TEST_CASE("direct: quadratic with known maximizer") {
  auto r = direct_maximize([](double x) { return -(x - 0.3) * (x - 0.3); });
  CHECK(r.x == doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("direct: constant objective stays in the domain") {
  auto r = direct_maximize([](double) { return 1.25; });
  CHECK(r.x > 0.0);
  CHECK(r.x < 1.0);
  CHECK(r.value == 1.25);
}

TEST_CASE("direct: multimodal function with global maximum at 0.713") {
  auto f = [](double x) {
    return std::exp(-200.0 * std::pow(x - 0.713, 2.0)) +
           0.85 * std::exp(-400.0 * std::pow(x - 0.25, 2.0)) +
           0.6 * std::exp(-400.0 * std::pow(x - 0.5, 2.0));
  };
  // dense-grid oracle pins the true maximizer
  double best_x = 0.0, best_v = -1e300;
  for (int i = 0; i < 1000000; ++i) {
    double x = (i + 0.5) / 1000000.0;
    double v = f(x);
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }
  REQUIRE(best_x == doctest::Approx(0.713).epsilon(1e-3));

  auto r = direct_maximize(f);
  CHECK(r.x == doctest::Approx(best_x).epsilon(1e-3));

  // 1024-point deterministic grid must not beat DIRECT by more than 1e-6
  double grid_max = -1e300;
  for (int i = 0; i < 1024; ++i)
    grid_max = std::max(grid_max, f(1e-6 + (1.0 - 2e-6) * (i + 0.5) / 1024.0));
  CHECK(grid_max - r.value <= 1e-6);
}

TEST_CASE("direct: non-finite objective is reported with the offending x") {
  auto bad = [](double x) { return x > 0.4 ? std::numeric_limits<double>::quiet_NaN() : x; };
  CHECK_THROWS_AS(direct_maximize(bad), NumericalError);
}

TEST_CASE("bo_step warm-up follows the sobol prefix regardless of seed") {
  auto gen = [](double x) { return std::vector<double>{1.0 + x}; };
  for (std::uint64_t seed : {0ULL, 17ULL, 91ULL}) {
    BOConfig config;
    config.seed = seed;
    std::vector<Observation> obs;
    auto prefix = sobol_init(config.n_init);
    for (int t = 0; t < config.n_init; ++t) {
      double x = bo_step(obs, config);
      CHECK(x == prefix[static_cast<std::size_t>(t)]);
      obs.push_back(Observation::from_executions(x, gen(x)));
    }
  }
}

TEST_CASE("bo_step proposes inside the domain once warmed up") {
  auto gen = [](double x) { return std::vector<double>{2.0 + 5.0 * std::pow(x - 0.6, 2.0)}; };
  BOConfig config;
  config.hp_samples = 3;
  config.mes_samples = 5;
  config.seed = 4;
  auto obs = make_observations(sobol_init(4), gen);
  double x = bo_step(obs, config);
  CHECK(x > 0.0);
  CHECK(x < 1.0);
}

TEST_CASE("closed loop: trace shape and incumbent") {
  auto objective = [](double x) { return std::vector<double>{1.0 + std::pow(x - 0.3, 2.0)}; };

  SUBCASE("n_iters = 0 returns the best sobol point") {
    BOConfig config;
    config.n_init = 4;
    config.n_iters = 0;
    auto result = bo_run_closed_loop(objective, config);
    CHECK(result.trace.size() == 4);
    auto prefix = sobol_init(4);
    double best = 1e300, best_x = 0.0;
    for (double x : prefix) {
      double v = 1.0 + std::pow(x - 0.3, 2.0);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    CHECK(result.best_x == best_x);
    CHECK(result.best_total == doctest::Approx(best));
  }

  SUBCASE("trace length is n_init + n_iters") {
    BOConfig config;
    config.n_init = 3;
    config.n_iters = 2;
    config.hp_samples = 2;
    config.mes_samples = 4;
    auto result = bo_run_closed_loop(objective, config);
    CHECK(result.trace.size() == 5);
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
      CHECK(result.trace[i].t == static_cast<int>(i));
      CHECK(result.trace[i].theta == doctest::Approx(reparam(result.trace[i].x)));
    }
  }
}

TEST_CASE("a failing objective aborts with the partial trace") {
  int calls = 0;
  Objective flaky = [&](double x) -> std::vector<double> {
    if (++calls == 3) throw std::runtime_error("evaluation crashed");
    return {1.0 + x};
  };
  BOConfig config;
  config.n_init = 4;
  config.n_iters = 0;
  try {
    bo_run_closed_loop(flaky, config);
    FAIL("expected ObjectiveError");
  } catch (const ObjectiveError& e) {
    CHECK(e.partial_trace.size() == 2);
    CHECK(std::string(e.what()).find("evaluation crashed") != std::string::npos);
  }
}

TEST_CASE("closed loop converges on a smooth objective") {
  // noiseless convex objective over x: incumbent within 0.05 of the dense-grid
  // optimum after 4 + 10 evaluations on at least 18 of 20 seeds
  auto value = [](double x) { return 3.0 + 10.0 * std::pow(x - 0.62, 2.0); };
  auto objective = [&](double x) { return std::vector<double>{value(x)}; };

  double grid_best = 1e300, grid_best_x = 0.0;
  for (int i = 0; i < 4096; ++i) {
    double x = 1e-6 + (1.0 - 2e-6) * (i + 0.5) / 4096.0;
    if (value(x) < grid_best) {
      grid_best = value(x);
      grid_best_x = x;
    }
  }

  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    BOConfig config;
    config.n_init = 4;
    config.n_iters = 10;
    config.hp_samples = 4;
    config.mes_samples = 8;
    config.seed = seed;
    auto result = bo_run_closed_loop(objective, config);
    if (std::abs(result.best_x - grid_best_x) <= 0.05) ++hits;
  }
  CHECK(hits >= 18);
}
