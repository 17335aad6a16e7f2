#include "loopsched/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <thread>

#include "loopsched/bo.hpp"
#include "loopsched/dataset.hpp"

namespace loopsched {

namespace {

std::string make_run_uuid() {
  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx",
                static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

MeasurementLog::MeasurementLog() : run_uuid_(make_run_uuid()) {}

MeasurementLog& MeasurementLog::instance() {
  static MeasurementLog log;
  return log;
}

std::int64_t MeasurementLog::next_ell(const std::string& loop_id) {
  std::scoped_lock lock(mutex_);
  return ++ell_[loop_id];
}

void MeasurementLog::record(const LoopMeasurement& m, std::int64_t n) {
  std::scoped_lock lock(mutex_);
  entries_.push_back(m);
  n_by_loop_[m.loop_id] = n;
}

std::vector<LoopMeasurement> MeasurementLog::snapshot() const {
  std::scoped_lock lock(mutex_);
  return entries_;
}

std::string MeasurementLog::run_uuid() const {
  std::scoped_lock lock(mutex_);
  return run_uuid_;
}

void MeasurementLog::reset() {
  std::scoped_lock lock(mutex_);
  entries_.clear();
  ell_.clear();
  n_by_loop_.clear();
  run_uuid_ = make_run_uuid();
}

std::size_t MeasurementLog::flush(const std::string& dir) {
  std::vector<LoopMeasurement> entries;
  std::unordered_map<std::string, std::int64_t> n_by_loop;
  std::string uuid;
  {
    std::scoped_lock lock(mutex_);
    entries = entries_;
    n_by_loop = n_by_loop_;
    uuid = run_uuid_;
  }

  // tunable runs only: x must be a valid unit-interval parameter
  std::map<std::string, std::vector<const LoopMeasurement*>> by_loop;
  for (const auto& m : entries)
    if (std::isfinite(m.x) && m.x > 0.0 && m.x < 1.0) by_loop[m.loop_id].push_back(&m);

  std::size_t written = 0;
  for (auto& [loop_id, ms] : by_loop) {
    std::string path = dataset_path(dir, loop_id);
    LoopDatasetFile file;
    if (std::filesystem::exists(path)) {
      file = load_dataset(path);
    } else {
      file.loop_id = loop_id;
      file.n = n_by_loop[loop_id];
    }
    bool already_flushed = std::any_of(file.iterations.begin(), file.iterations.end(),
                                       [&](const auto& it) { return it.run_uuid == uuid; });
    if (already_flushed) continue;

    // one iteration record per distinct parameter value
    std::map<double, DatasetIteration> groups;
    for (const auto* m : ms) {
      auto& it = groups[m->x];
      it.run_uuid = uuid;
      it.x = m->x;
      it.theta = reparam(m->x);
      it.measurements.push_back({m->ell, m->tau_s});
    }
    for (auto& [x, it] : groups) {
      std::sort(it.measurements.begin(), it.measurements.end(),
                [](const auto& a, const auto& b) { return a.ell < b.ell; });
      // re-index ell within the iteration record so each starts at 1
      for (std::size_t i = 0; i < it.measurements.size(); ++i)
        it.measurements[i].ell = static_cast<std::int64_t>(i) + 1;
      it.total_s = 0.0;
      for (const auto& m : it.measurements) it.total_s += m.tau_s;
      written += it.measurements.size();
      file.iterations.push_back(std::move(it));
    }
    save_dataset(path, file);
  }
  return written;
}

PolicySpec resolve_policy_from_env() {
  const char* env = std::getenv("LOOPSCHED_SCHEDULE");
  if (env == nullptr || *env == '\0') return PolicySpec{};  // fac2 default
  return PolicySpec::parse(env);
}

int resolve_workers_from_env() {
  const char* env = std::getenv("LOOPSCHED_THREADS");
  if (env == nullptr || *env == '\0') {
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }
  char* end = nullptr;
  long value = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || value < 1)
    throw ConfigError("LOOPSCHED_THREADS must be a positive integer, got '" + std::string(env) +
                      "'");
  return static_cast<int>(value);
}

std::string data_dir_from_env() {
  const char* env = std::getenv("LOOPSCHED_DATA_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::size_t flush_measurements() { return flush_measurements(data_dir_from_env()); }

std::size_t flush_measurements(const std::string& dir) {
  return MeasurementLog::instance().flush(dir);
}

namespace detail {

void validate_loop_id(const std::string& loop_id) {
  if (loop_id.empty()) throw InvalidParameterError("loop id must be non-empty");
  if (loop_id.find('/') != std::string::npos)
    throw InvalidParameterError("loop id must not contain '/': " + loop_id);
}

std::pair<PolicySpec, double> resolve_for_loop(const PolicySpec& spec, const std::string& loop_id,
                                               const std::string& data_dir) {
  double nan = std::numeric_limits<double>::quiet_NaN();
  if (spec.kind == PolicyKind::Fss) {
    // derive x when theta falls inside the tunable range
    double x = nan;
    if (spec.fss_theta > std::exp2(-10.0) && spec.fss_theta < std::exp2(9.0))
      x = inverse_reparam(spec.fss_theta);
    return {spec, x};
  }
  if (spec.kind != PolicyKind::BoFss) return {spec, nan};

  PolicySpec resolved = spec;
  double x = 0.5;  // first Sobol point until the tuner has produced a parameter
  std::string path = next_param_path(data_dir, loop_id);
  if (std::filesystem::exists(path)) {
    auto next = load_next_param(path);
    if (next.loop_id != loop_id)
      throw ValidationError("next-param file " + path + " names loop '" + next.loop_id + "'");
    x = next.x_next;
  }
  resolved.fss_theta = reparam(x);
  return {resolved, x};
}

}  // namespace detail

}  // namespace loopsched
