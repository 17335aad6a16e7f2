#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <random>

#include "loopsched/simulator.hpp"

using namespace loopsched;

namespace {

SyntheticWorkload random_workload(std::mt19937_64& rng, std::int64_t max_n = 256) {
  SyntheticWorkload w;
  std::int64_t n = 1 + static_cast<std::int64_t>(rng() % max_n);
  std::uniform_real_distribution<double> dur(0.0, 2.0);
  w.durations.resize(static_cast<std::size_t>(n));
  for (auto& t : w.durations) t = dur(rng);
  w.p = 1 + static_cast<int>(rng() % 8);
  w.h = 0.01 * static_cast<double>(rng() % 10);
  w.locality = {0.5 * static_cast<double>(rng() % 4), 0.3};
  w.repeats = 1 + static_cast<std::int64_t>(rng() % 4);
  return w;
}

std::vector<std::int64_t> random_chunks(std::mt19937_64& rng, std::int64_t n) {
  std::vector<std::int64_t> chunks;
  while (n > 0) {
    std::int64_t k = 1 + static_cast<std::int64_t>(rng() % 16);
    k = std::min(k, n);
    chunks.push_back(k);
    n -= k;
  }
  return chunks;
}

}  // namespace

TEST_CASE("perfectly balanced homogeneous loop") {
  SyntheticWorkload w;
  w.durations.assign(12, 0.5);
  w.p = 4;
  w.h = 0.0;
  w.locality = {1.0, 0.5};
  w.repeats = 3;
  auto chunks = static_chunk_sequence(w.shape());
  for (std::int64_t ell = 1; ell <= w.repeats; ++ell) {
    double expected = 3 * 0.5 * w.locality.factor(ell);
    CHECK(simulate_makespan(w, chunks, ell) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("overhead/imbalance tradeoff in miniature") {
  SyntheticWorkload w;
  w.durations = {1.0, 1.0};
  w.p = 1;
  w.h = 0.1;
  std::vector<std::int64_t> two{1, 1}, one{2};
  CHECK(simulate_makespan(w, two, 1) == doctest::Approx(2.2));
  CHECK(simulate_makespan(w, one, 1) == doctest::Approx(2.1));
}

TEST_CASE("single chunk pays h once") {
  std::mt19937_64 rng(5);
  for (int c = 0; c < 20; ++c) {
    auto w = random_workload(rng);
    std::vector<std::int64_t> all{w.n()};
    double expected = w.h + w.locality.factor(1) * w.total_work();
    CHECK(simulate_makespan(w, all, 1) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("chunk sum mismatch is rejected") {
  SyntheticWorkload w;
  w.durations.assign(8, 1.0);
  std::vector<std::int64_t> bad{3, 3};
  CHECK_THROWS_AS(simulate_makespan(w, bad, 1), InvalidParameterError);
  CHECK_THROWS_AS(simulate_makespan(w, std::vector<std::int64_t>{8}, 2), InvalidParameterError);
}

TEST_CASE("work conservation and lower bounds") {
  std::mt19937_64 rng(17);
  for (int c = 0; c < 200; ++c) {
    auto w = random_workload(rng);
    auto chunks = random_chunks(rng, w.n());
    std::int64_t ell = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(w.repeats));
    double g = w.locality.factor(ell);
    double makespan = simulate_makespan(w, chunks, ell);

    double busy = static_cast<double>(chunks.size()) * w.h + g * w.total_work();
    CHECK(makespan <= busy + 1e-9);
    CHECK(makespan >= busy / w.p - 1e-9);
    double max_task = *std::max_element(w.durations.begin(), w.durations.end());
    if (w.h > 0) CHECK(makespan >= g * max_task + w.h - 1e-9);
  }
}

TEST_CASE("makespan is non-decreasing in h") {
  std::mt19937_64 rng(23);
  for (int c = 0; c < 50; ++c) {
    auto w = random_workload(rng);
    auto chunks = random_chunks(rng, w.n());
    double prev = -1.0;
    for (double h : {0.0, 0.05, 0.2, 1.0}) {
      w.h = h;
      double m = simulate_makespan(w, chunks, 1);
      CHECK(m >= prev);
      prev = m;
    }
  }
}

TEST_CASE("determinism") {
  std::mt19937_64 rng(31);
  auto w = random_workload(rng);
  auto chunks = random_chunks(rng, w.n());
  double a = simulate_makespan(w, chunks, 1);
  double b = simulate_makespan(w, chunks, 1);
  CHECK(a == b);

  double t1 = simulate_total_time_fss(w, 0.7, 0.1, 99);
  double t2 = simulate_total_time_fss(w, 0.7, 0.1, 99);
  CHECK(t1 == t2);
}

TEST_CASE("total time trivials") {
  std::mt19937_64 rng(37);
  auto w = random_workload(rng);
  auto policy = ChunkPolicy::fac2(w.shape());

  SUBCASE("L = 1 reduces to one makespan") {
    w.repeats = 1;
    CHECK(simulate_total_time(w, policy) ==
          doctest::Approx(simulate_makespan(w, chunk_sequence(policy), 1)));
  }
  SUBCASE("no locality means L identical makespans") {
    w.locality.c = 0.0;
    w.repeats = 5;
    CHECK(simulate_total_time(w, policy) ==
          doctest::Approx(5.0 * simulate_makespan(w, chunk_sequence(policy), 1)).epsilon(1e-12));
  }
}

TEST_CASE("brute force: single point grid and reproducibility") {
  std::mt19937_64 rng(3);
  auto w = random_workload(rng);
  double grid1[] = {0.25};
  auto r = brute_force_best_theta(w, grid1);
  CHECK(r.theta == 0.25);
  CHECK(r.total == simulate_total_time_fss(w, 0.25));
  CHECK_THROWS_AS(brute_force_best_theta(w, std::span<const double>{}), InvalidParameterError);
}

TEST_CASE("brute force: huge overhead favors the fewest dispenses") {
  // N=16 homogeneous tasks, P=2. Dispense counts by hand:
  //   theta=0: x_0=1, K=8 -> 2 chunks
  //   theta=1: batches 6,6 / 1,1 / 1,1 -> 6 chunks
  //   theta=8: b_0=2, x_0=9.657 -> K=1 everywhere -> 16 chunks
  SyntheticWorkload w;
  w.durations.assign(16, 1.0);
  w.p = 2;
  w.h = 10.0;
  CHECK(fss_chunk_sequence(w.shape(), 0.0).size() == 2);
  CHECK(fss_chunk_sequence(w.shape(), 1.0).size() == 6);
  CHECK(fss_chunk_sequence(w.shape(), 8.0).size() == 16);
  double grid[] = {0.0, 1.0, 8.0};
  auto r = brute_force_best_theta(w, grid);
  CHECK(r.theta == 0.0);
}

TEST_CASE("brute force: ties break toward smaller theta") {
  // h = 0 and one worker: every schedule has the same makespan
  SyntheticWorkload w;
  w.durations.assign(10, 1.0);
  w.p = 1;
  w.h = 0.0;
  double grid[] = {2.0, 1.0, 0.5};
  CHECK(brute_force_best_theta(w, grid).theta == 0.5);
}

TEST_CASE("workload generation") {
  WorkloadSpec spec;
  spec.kind = "lognormal";
  spec.mu = 1e-3;
  spec.sigma = 2e-3;
  spec.n = 4000;
  spec.p = 8;
  spec.h = 1e-5;
  spec.repeats = 4;
  spec.seed = 42;
  auto w = generate_workload(spec);
  CHECK(w.n() == 4000);
  double mean = w.total_work() / 4000.0;
  CHECK(mean == doctest::Approx(1e-3).epsilon(0.15));

  auto w2 = generate_workload(spec);
  CHECK(w.durations == w2.durations);  // seeded

  spec.kind = "powerlaw";
  spec.exponent = 3.0;
  spec.scale = 1e-4;
  auto w3 = generate_workload(spec);
  CHECK(*std::min_element(w3.durations.begin(), w3.durations.end()) >= 1e-4);

  spec.kind = "nope";
  CHECK_THROWS_AS(generate_workload(spec), ValidationError);
}

TEST_CASE("workload spec json parsing") {
  auto spec = WorkloadSpec::from_json_text(R"({
    "kind": "gaussian", "params": {"mu": 0.5, "sigma": 0.1},
    "N": 128, "P": 4, "h": 0.01, "L": 6,
    "locality": {"c": 1.5, "lambda": 0.25}, "seed": 7
  })");
  CHECK(spec.kind == "gaussian");
  CHECK(spec.mu == 0.5);
  CHECK(spec.n == 128);
  CHECK(spec.locality.c == 1.5);
  CHECK(spec.repeats == 6);
  CHECK_THROWS_AS(WorkloadSpec::from_json_text("{"), ValidationError);
  CHECK_THROWS_AS(WorkloadSpec::from_json_text(R"({"kind":"gaussian"})"), ValidationError);
}
