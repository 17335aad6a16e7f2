#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "loopsched/tuner.hpp"

using namespace loopsched;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("loopsched-tuner-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

WorkloadSpec small_workload() {
  WorkloadSpec spec;
  spec.kind = "lognormal";
  spec.mu = 1e-3;
  spec.sigma = 1.5e-3;
  spec.n = 512;
  spec.p = 4;
  spec.h = 2e-4;
  spec.repeats = 1;
  spec.seed = 11;
  return spec;
}

LoopDatasetFile seeded_dataset(const std::string& loop_id, int iterations) {
  LoopDatasetFile file;
  file.loop_id = loop_id;
  auto xs = sobol_init(iterations);
  for (int i = 0; i < iterations; ++i) {
    DatasetIteration it;
    it.run_uuid = "seed-run-" + std::to_string(i);
    it.x = xs[static_cast<std::size_t>(i)];
    it.theta = reparam(it.x);
    it.measurements = {{1, 1.0 + std::pow(it.x - 0.4, 2.0)}};
    it.total_s = it.measurements[0].tau_s;
    file.iterations.push_back(std::move(it));
  }
  return file;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("suggest on an empty dataset proposes the first sobol point") {
  TempDir dir;
  auto data = (dir.path / "myloop.json").string();
  std::ostringstream out;
  auto next = suggest(data, {}, out);
  CHECK(next.x_next == 0.5);
  CHECK(next.theta_next == doctest::Approx(reparam(0.5)));
  CHECK(next.loop_id == "myloop");
  CHECK(next.source_iteration_count == 0);
  CHECK(out.str().find("x_next=0.5") != std::string::npos);
  CHECK(fs::exists(dir.path / "myloop.next.json"));
  CHECK(!fs::exists(data));  // suggest never creates or mutates the dataset
  CHECK(!fs::exists(data + ".lock"));
}

TEST_CASE("suggest is deterministic under a fixed seed") {
  TempDir dir;
  auto data = (dir.path / "det.json").string();
  save_dataset(data, seeded_dataset("det", 5));
  auto before = slurp(data);

  TunerOptions opts;
  opts.seed = 42;
  std::ostringstream out1, out2;
  suggest(data, opts, out1);
  auto first = slurp(dir.path / "det.next.json");
  suggest(data, opts, out2);
  auto second = slurp(dir.path / "det.next.json");
  CHECK(first == second);
  CHECK(out1.str() == out2.str());
  CHECK(slurp(data) == before);

  auto next = load_next_param((dir.path / "det.next.json").string());
  CHECK(next.source_iteration_count == 5);
  CHECK(next.x_next > 0.0);
  CHECK(next.x_next < 1.0);
}

TEST_CASE("suggest refuses a corrupted dataset and leaves it untouched") {
  TempDir dir;
  auto data = (dir.path / "bad.json").string();
  {
    std::ofstream out(data);
    out << "{ not json";
  }
  auto before = slurp(data);
  std::ostringstream out;
  CHECK_THROWS_AS(suggest(data, {}, out), ValidationError);
  CHECK(slurp(data) == before);
  CHECK(!fs::exists(dir.path / "bad.next.json"));
  CHECK(!fs::exists(data + ".lock"));  // lock released on failure
}

TEST_CASE("concurrent tuners fail fast on the lock file") {
  TempDir dir;
  auto data = (dir.path / "locked.json").string();
  save_dataset(data, seeded_dataset("locked", 2));
  {
    std::ofstream lock(data + ".lock");
    lock << "held";
  }
  std::ostringstream out;
  CHECK_THROWS_AS(suggest(data, {}, out), IoError);
  fs::remove(data + ".lock");
  CHECK_NOTHROW(suggest(data, {}, out));
}

TEST_CASE("tune-sim with no BO iterations reports the warm-up only") {
  TunerOptions opts;
  opts.n_iters = 0;
  auto result = tune_sim(small_workload(), opts);
  CHECK(result.bo.trace.size() == 4);
  std::istringstream csv(result.trace_csv);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "t,x,theta,total_s");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("tune-sim is byte-deterministic under a fixed seed") {
  TunerOptions opts;
  opts.n_iters = 3;
  opts.seed = 7;
  opts.hp_samples = 3;
  opts.mes_samples = 4;
  auto a = tune_sim(small_workload(), opts, 1e-4);
  auto b = tune_sim(small_workload(), opts, 1e-4);
  CHECK(a.trace_csv == b.trace_csv);
  CHECK(a.regret_percent == b.regret_percent);
}

TEST_CASE("tune-sim regret is non-negative and consistent") {
  TunerOptions opts;
  opts.n_iters = 4;
  opts.seed = 3;
  opts.hp_samples = 3;
  opts.mes_samples = 4;
  auto result = tune_sim(small_workload(), opts);
  CHECK(result.regret_percent >= 0.0);
  CHECK(result.optimal_total <= result.tuned_total);
  CHECK(result.regret_percent ==
        doctest::Approx((result.tuned_total - result.optimal_total) / result.optimal_total *
                        100.0));
}

TEST_CASE("theta grid spans the reparameterized domain") {
  auto grid = theta_grid(256);
  CHECK(grid.size() == 256);
  CHECK(grid.front() == doctest::Approx(std::exp2(-10.0)).epsilon(1e-4));
  CHECK(grid.back() == doctest::Approx(512.0).epsilon(1e-4));
  CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("report modes") {
  TempDir dir;

  SUBCASE("empty dataset") {
    auto data = (dir.path / "empty.json").string();
    LoopDatasetFile file;
    file.loop_id = "empty";
    save_dataset(data, file);
    std::ostringstream out;
    report(data, false, out);
    CHECK(out.str().find("no observations") != std::string::npos);
  }

  SUBCASE("csv header and running best") {
    auto data = (dir.path / "csv.json").string();
    save_dataset(data, seeded_dataset("csv", 4));
    std::ostringstream out;
    report(data, true, out);
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "iter,x,theta,total_s,best_s");
    int rows = 0;
    double prev_best = 1e300;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      auto last_comma = line.rfind(',');
      double best = std::stod(line.substr(last_comma + 1));
      CHECK(best <= prev_best + 1e-12);
      prev_best = best;
      ++rows;
    }
    CHECK(rows == 4);
  }

  SUBCASE("single-iteration incumbent is that iteration") {
    auto data = (dir.path / "one.json").string();
    save_dataset(data, seeded_dataset("one", 1));
    std::ostringstream out;
    report(data, false, out);
    CHECK(out.str().find("incumbent: t=0") != std::string::npos);
    CHECK(out.str().find("posterior-mean argmin") != std::string::npos);
  }
}
