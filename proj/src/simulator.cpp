#include "loopsched/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace loopsched {

double LocalityModel::factor(std::int64_t ell) const {
  return 1.0 + c * std::exp(-lambda * static_cast<double>(ell - 1));
}

void LocalityModel::validate() const {
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidParameterError("locality: c must be >= 0");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw InvalidParameterError("locality: lambda must be > 0");
}

double SyntheticWorkload::total_work() const {
  return std::accumulate(durations.begin(), durations.end(), 0.0);
}

void SyntheticWorkload::validate() const {
  if (durations.empty()) throw InvalidParameterError("workload: needs at least one task");
  if (p < 1) throw InvalidParameterError("workload: worker count must be >= 1");
  if (!(h >= 0.0) || !std::isfinite(h)) throw InvalidParameterError("workload: h must be >= 0");
  if (repeats < 1) throw InvalidParameterError("workload: L must be >= 1");
  locality.validate();
  for (double t : durations)
    if (!(t >= 0.0) || !std::isfinite(t))
      throw InvalidParameterError("workload: task durations must be finite and >= 0");
}

WorkloadSpec WorkloadSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("workload spec: ") + e.what());
  }
  WorkloadSpec spec;
  try {
    spec.kind = j.at("kind").get<std::string>();
    spec.n = j.at("N").get<std::int64_t>();
    spec.p = j.at("P").get<int>();
    spec.h = j.value("h", 0.0);
    spec.repeats = j.value("L", std::int64_t{1});
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("locality")) {
      spec.locality.c = j["locality"].value("c", 0.0);
      spec.locality.lambda = j["locality"].value("lambda", 1.0);
    }
    auto params = j.value("params", nlohmann::json::object());
    spec.mu = params.value("mu", spec.mu);
    spec.sigma = params.value("sigma", spec.sigma);
    spec.exponent = params.value("exponent", spec.exponent);
    spec.scale = params.value("scale", spec.scale);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("workload spec: ") + e.what());
  }
  return spec;
}

WorkloadSpec WorkloadSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workload spec: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

SyntheticWorkload generate_workload(const WorkloadSpec& spec) {
  if (spec.n < 1) throw InvalidParameterError("workload spec: N must be >= 1");
  SyntheticWorkload w;
  w.p = spec.p;
  w.h = spec.h;
  w.locality = spec.locality;
  w.repeats = spec.repeats;
  w.durations.resize(static_cast<std::size_t>(spec.n));

  std::mt19937_64 rng(spec.seed);
  if (spec.kind == "homogeneous") {
    if (!(spec.mu > 0.0)) throw InvalidParameterError("homogeneous: mu must be > 0");
    std::fill(w.durations.begin(), w.durations.end(), spec.mu);
  } else if (spec.kind == "gaussian") {
    if (!(spec.mu > 0.0) || !(spec.sigma >= 0.0))
      throw InvalidParameterError("gaussian: need mu > 0, sigma >= 0");
    std::normal_distribution<double> dist(spec.mu, spec.sigma);
    for (auto& t : w.durations) t = std::max(dist(rng), 0.0);
  } else if (spec.kind == "lognormal") {
    // mu/sigma are the target mean and std of the task time itself
    if (!(spec.mu > 0.0) || !(spec.sigma > 0.0))
      throw InvalidParameterError("lognormal: need mu > 0, sigma > 0");
    double cv2 = (spec.sigma / spec.mu) * (spec.sigma / spec.mu);
    double s2 = std::log1p(cv2);
    std::lognormal_distribution<double> dist(std::log(spec.mu) - 0.5 * s2, std::sqrt(s2));
    for (auto& t : w.durations) t = dist(rng);
  } else if (spec.kind == "powerlaw") {
    if (!(spec.exponent > 1.0) || !(spec.scale > 0.0))
      throw InvalidParameterError("powerlaw: need exponent > 1, scale > 0");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& t : w.durations) {
      double u = 1.0 - unit(rng);  // (0, 1]
      t = spec.scale * std::pow(u, -1.0 / (spec.exponent - 1.0));
    }
  } else {
    throw ValidationError("workload spec: unknown kind '" + spec.kind + "'");
  }
  w.validate();
  return w;
}

double simulate_makespan(const SyntheticWorkload& workload, std::span<const std::int64_t> chunks,
                         std::int64_t ell) {
  workload.validate();
  if (ell < 1 || ell > workload.repeats)
    throw InvalidParameterError("simulate_makespan: ell out of [1, L]");
  std::int64_t assigned = std::accumulate(chunks.begin(), chunks.end(), std::int64_t{0});
  if (assigned != workload.n())
    throw InvalidParameterError("simulate_makespan: chunk sequence does not cover the loop");

  double g = workload.locality.factor(ell);
  std::vector<double> finish(static_cast<std::size_t>(workload.p), 0.0);
  std::size_t index = 0;
  for (std::int64_t chunk : chunks) {
    auto worker = static_cast<std::size_t>(
        std::min_element(finish.begin(), finish.end()) - finish.begin());
    double work = 0.0;
    for (std::int64_t i = 0; i < chunk; ++i) work += workload.durations[index++];
    finish[worker] += workload.h + g * work;
  }
  return *std::max_element(finish.begin(), finish.end());
}

namespace {

double noise_draw(double noise_sigma, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> dist(0.0, noise_sigma);
  return dist(rng);
}

}  // namespace

double simulate_total_time(const SyntheticWorkload& workload, const ChunkPolicy& policy,
                           double noise_sigma, std::uint64_t noise_seed) {
  auto chunks = chunk_sequence(policy);
  double total = 0.0;
  for (std::int64_t ell = 1; ell <= workload.repeats; ++ell)
    total += simulate_makespan(workload, chunks, ell);
  if (noise_sigma > 0.0) total += noise_draw(noise_sigma, noise_seed);
  return total;
}

double simulate_total_time_fss(const SyntheticWorkload& workload, double theta, double noise_sigma,
                               std::uint64_t noise_seed) {
  return simulate_total_time(workload, ChunkPolicy::fss(workload.shape(), theta), noise_sigma,
                             noise_seed);
}

std::vector<double> simulate_executions_fss(const SyntheticWorkload& workload, double theta) {
  auto chunks = fss_chunk_sequence(workload.shape(), theta);
  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(workload.repeats));
  for (std::int64_t ell = 1; ell <= workload.repeats; ++ell)
    taus.push_back(simulate_makespan(workload, chunks, ell));
  return taus;
}

BruteForceResult brute_force_best_theta(const SyntheticWorkload& workload,
                                        std::span<const double> theta_grid) {
  if (theta_grid.empty()) throw InvalidParameterError("brute_force_best_theta: empty grid");
  BruteForceResult best{theta_grid[0], simulate_total_time_fss(workload, theta_grid[0])};
  for (double theta : theta_grid.subspan(1)) {
    double total = simulate_total_time_fss(workload, theta);
    if (total < best.total || (total == best.total && theta < best.theta))
      best = {theta, total};
  }
  return best;
}

}  // namespace loopsched
