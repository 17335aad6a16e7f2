#include "loopsched/tuner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <random>
#include <sstream>

namespace loopsched {

namespace {

namespace fs = std::filesystem;

// Advisory lock: concurrent tuner invocations on one dataset are unsupported.
class FileLock {
 public:
  explicit FileLock(std::string path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw IoError("dataset is locked by another tuner (remove " + path_ +
                    " if that tuner crashed)");
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fmt(double v) { return detail::format_double(v); }

}  // namespace

BOConfig TunerOptions::apply(BOConfig base) const {
  if (locality) base.surrogate = *locality ? SurrogateMode::LocalityAware : SurrogateMode::Plain;
  if (n_init) base.n_init = *n_init;
  if (n_iters) base.n_iters = *n_iters;
  if (seed) base.seed = *seed;
  if (hp_samples) base.hp_samples = *hp_samples;
  if (mes_samples) base.mes_samples = *mes_samples;
  base.validate();
  return base;
}

NextParamFile suggest(const std::string& dataset_file, const TunerOptions& options,
                      std::ostream& out) {
  FileLock lock(dataset_file + ".lock");

  LoopDatasetFile dataset;
  if (fs::exists(dataset_file)) {
    dataset = load_dataset(dataset_file);
  } else {
    dataset.loop_id = fs::path(dataset_file).stem().string();
    if (dataset.loop_id.empty())
      throw ValidationError("cannot derive a loop id from path: " + dataset_file);
  }

  BOConfig config = options.apply(dataset.config);
  auto observations = dataset.observations();
  double x_next = bo_step(observations, config);

  NextParamFile next;
  next.loop_id = dataset.loop_id;
  next.x_next = x_next;
  next.theta_next = reparam(x_next);
  next.produced_by = kTunerVersion;
  next.source_iteration_count = static_cast<std::int64_t>(observations.size());

  fs::path dir = fs::path(dataset_file).parent_path();
  if (dir.empty()) dir = ".";
  save_next_param(next_param_path(dir.string(), dataset.loop_id), next);

  out << "t=" << observations.size() << " x_next=" << fmt(next.x_next)
      << " theta_next=" << fmt(next.theta_next);
  if (!observations.empty()) {
    double incumbent = observations[0].total;
    for (const auto& o : observations) incumbent = std::min(incumbent, o.total);
    out << " incumbent_s=" << fmt(incumbent);
  } else {
    out << " incumbent_s=none";
  }
  out << "\n";
  return next;
}

std::vector<double> theta_grid(int n) {
  if (n < 2) throw InvalidParameterError("theta_grid: n must be >= 2");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = kDomainEps + (1.0 - 2.0 * kDomainEps) * static_cast<double>(i) / (n - 1);
    grid.push_back(reparam(x));
  }
  return grid;
}

TuneSimReport tune_sim(const WorkloadSpec& spec, const TunerOptions& options,
                       double noise_sigma) {
  auto workload = generate_workload(spec);
  BOConfig config = options.apply(BOConfig{});

  // Per-execution noise is proportional to that execution's duration (longer
  // runs wobble more), normalized so the std of the summed total is
  // noise_sigma.
  int eval_counter = 0;
  Objective objective = [&](double x) {
    auto taus = simulate_executions_fss(workload, reparam(x));
    if (noise_sigma > 0.0) {
      double norm = 0.0;
      for (double tau : taus) norm += tau * tau;
      norm = std::sqrt(norm);
      std::mt19937_64 rng(mix(config.seed, static_cast<std::uint64_t>(eval_counter)));
      std::normal_distribution<double> unit(0.0, 1.0);
      for (auto& tau : taus) tau += unit(rng) * noise_sigma * tau / norm;
    }
    ++eval_counter;
    return taus;
  };

  TuneSimReport result;
  result.bo = bo_run_closed_loop(objective, config);

  auto grid = theta_grid(256);
  auto best = brute_force_best_theta(workload, grid);
  result.tuned_total = simulate_total_time_fss(workload, result.bo.best_theta);
  if (result.tuned_total < best.total) best = {result.bo.best_theta, result.tuned_total};
  result.optimal_theta = best.theta;
  result.optimal_total = best.total;
  result.regret_percent = (result.tuned_total - best.total) / best.total * 100.0;

  std::ostringstream csv;
  csv << "t,x,theta,total_s\n";
  for (const auto& entry : result.bo.trace)
    csv << entry.t << "," << fmt(entry.x) << "," << fmt(entry.theta) << ","
        << fmt(entry.total) << "\n";
  result.trace_csv = csv.str();
  return result;
}

void report(const std::string& dataset_file, bool csv, std::ostream& out) {
  auto dataset = load_dataset(dataset_file);
  const auto& iterations = dataset.iterations;

  if (csv) {
    out << "iter,x,theta,total_s,best_s\n";
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < iterations.size(); ++i) {
      best = std::min(best, iterations[i].total_s);
      out << i << "," << fmt(iterations[i].x) << "," << fmt(iterations[i].theta) << ","
          << fmt(iterations[i].total_s) << "," << fmt(best) << "\n";
    }
    return;
  }

  if (iterations.empty()) {
    out << "dataset " << dataset.loop_id << ": no observations\n";
    return;
  }

  std::size_t best_idx = 0;
  for (std::size_t i = 1; i < iterations.size(); ++i)
    if (iterations[i].total_s < iterations[best_idx].total_s) best_idx = i;

  out << "loop " << dataset.loop_id << ": " << iterations.size() << " iterations\n";
  out << "incumbent: t=" << best_idx << " x=" << fmt(iterations[best_idx].x)
      << " theta=" << fmt(iterations[best_idx].theta)
      << " total_s=" << fmt(iterations[best_idx].total_s) << "\n";
  for (std::size_t i = 0; i < iterations.size(); ++i)
    out << "  t=" << i << " x=" << fmt(iterations[i].x)
        << " theta=" << fmt(iterations[i].theta) << " total_s=" << fmt(iterations[i].total_s)
        << "\n";

  // posterior-mean argmin over a 512-point grid, hyperparameters marginalized
  auto observations = dataset.observations();
  SurrogateMode effective = dataset.config.surrogate;
  auto train = Surrogate::make_training_set(observations, dataset.config, &effective, nullptr);
  auto kind =
      effective == SurrogateMode::Plain ? KernelKind::Matern : KernelKind::MaternPlusExp;
  auto draws = sample_hyperparams(train, kind, dataset.config.hp_samples,
                                  mix(dataset.config.seed, observations.size()));
  std::vector<Surrogate> surrogates;
  surrogates.reserve(draws.size());
  for (const auto& hp : draws) surrogates.emplace_back(observations, dataset.config, hp);

  double best_x = 0.5, best_mean = std::numeric_limits<double>::infinity();
  for (int g = 0; g < 512; ++g) {
    double x = kDomainEps + (1.0 - 2.0 * kDomainEps) * (g + 0.5) / 512.0;
    double mean = 0.0;
    for (const auto& s : surrogates) mean += s.predict_total(x).first;
    mean /= static_cast<double>(surrogates.size());
    if (mean < best_mean) {
      best_mean = mean;
      best_x = x;
    }
  }
  out << "posterior-mean argmin: x=" << fmt(best_x) << " theta=" << fmt(reparam(best_x))
      << " predicted_total_s=" << fmt(best_mean) << "\n";
}

}  // namespace loopsched
