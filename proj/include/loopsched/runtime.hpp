#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "loopsched/chunking.hpp"

namespace loopsched {

// One timed execution of a loop. theta/x are the FSS parameters in effect;
// they are NaN when the active schedule is not FSS-parameterized, in which
// case the execution is not part of any tuning dataset.
struct LoopMeasurement {
  std::string loop_id;
  std::int64_t ell = 0;  // 1-based execution index within this process run
  double tau_s = 0.0;    // wall-clock loop time, entry to post-barrier
  double theta = 0.0;
  double x = 0.0;
};

// Serializes a ChunkPolicy behind a mutex and hands out contiguous index
// ranges in dispatch order.
class ChunkDispenser {
 public:
  explicit ChunkDispenser(ChunkPolicy policy) : policy_(std::move(policy)) {}

  struct Range {
    std::int64_t begin = 0;
    std::int64_t end = 0;
    bool empty() const { return begin >= end; }
  };

  Range next() {
    std::scoped_lock lock(mutex_);
    std::int64_t k = policy_.next();
    if (k == 0) return {};
    Range r{cursor_, cursor_ + k};
    cursor_ += k;
    log_.push_back(k);
    return r;
  }

  // Dispensed chunk sizes in dispatch order.
  const std::vector<std::int64_t>& log() const { return log_; }

 private:
  std::mutex mutex_;
  ChunkPolicy policy_;
  std::int64_t cursor_ = 0;
  std::vector<std::int64_t> log_;
};

// Process-wide measurement buffer. ell counters are per loop_id; the run UUID
// guards flush idempotence. reset() starts a new logical run.
class MeasurementLog {
 public:
  static MeasurementLog& instance();

  std::int64_t next_ell(const std::string& loop_id);
  void record(const LoopMeasurement& m, std::int64_t n);
  std::vector<LoopMeasurement> snapshot() const;
  std::string run_uuid() const;
  void reset();

  // Appends this run's tunable measurements to <dir>/<loop_id>.json, one
  // iteration record per (loop, x). A second flush in the same run is a no-op.
  std::size_t flush(const std::string& dir);

 private:
  MeasurementLog();
  mutable std::mutex mutex_;
  std::string run_uuid_;
  std::unordered_map<std::string, std::int64_t> ell_;
  std::unordered_map<std::string, std::int64_t> n_by_loop_;
  std::vector<LoopMeasurement> entries_;
};

// LOOPSCHED_SCHEDULE via the policy grammar; unset or empty selects fac2.
PolicySpec resolve_policy_from_env();

// LOOPSCHED_THREADS, defaulting to the hardware concurrency.
int resolve_workers_from_env();

// LOOPSCHED_DATA_DIR, defaulting to ".".
std::string data_dir_from_env();

std::size_t flush_measurements();
std::size_t flush_measurements(const std::string& dir);

namespace detail {

// Materializes bo_fss by loading the tuned x for this loop (first Sobol point
// when no parameter file exists yet). Returns the spec plus the x in effect
// (NaN when the schedule is not FSS-parameterized).
std::pair<PolicySpec, double> resolve_for_loop(const PolicySpec& spec, const std::string& loop_id,
                                               const std::string& data_dir);

void validate_loop_id(const std::string& loop_id);

}  // namespace detail

// Runs body(i) for every i in [0, n) on `workers` threads, self-scheduling
// chunks from the policy. Returns the wall time of this execution and
// increments the loop's execution index. A body exception aborts the loop,
// surfaces to the caller and records nothing.
template <typename Body>
LoopMeasurement parallel_for(const std::string& loop_id, std::int64_t n, Body&& body,
                             const PolicySpec& spec, int workers = 0,
                             std::vector<std::int64_t>* chunk_log = nullptr) {
  detail::validate_loop_id(loop_id);
  if (n < 1) throw InvalidParameterError("parallel_for: empty range");
  int p = workers > 0 ? workers : resolve_workers_from_env();
  auto [resolved, x_in_effect] = detail::resolve_for_loop(spec, loop_id, data_dir_from_env());

  ChunkDispenser dispenser(ChunkPolicy::from_spec(resolved, {n, p}));
  std::exception_ptr error;
  std::once_flag error_once;
  std::atomic<bool> abort{false};

  auto start = std::chrono::steady_clock::now();
#pragma omp parallel num_threads(p) default(shared)
  {
    while (!abort.load(std::memory_order_relaxed)) {
      auto range = dispenser.next();
      if (range.empty()) break;
      try {
        for (std::int64_t i = range.begin; i < range.end; ++i) body(i);
      } catch (...) {
        std::call_once(error_once, [&] { error = std::current_exception(); });
        abort.store(true, std::memory_order_relaxed);
        break;
      }
    }
  }
  auto stop = std::chrono::steady_clock::now();
  if (chunk_log) *chunk_log = dispenser.log();
  if (error) std::rethrow_exception(error);

  LoopMeasurement m;
  m.loop_id = loop_id;
  m.tau_s = std::max(std::chrono::duration<double>(stop - start).count(), 1e-9);
  m.ell = MeasurementLog::instance().next_ell(loop_id);
  m.theta = resolved.kind == PolicyKind::Fss || resolved.kind == PolicyKind::BoFss
                ? resolved.fss_theta
                : std::numeric_limits<double>::quiet_NaN();
  m.x = x_in_effect;
  MeasurementLog::instance().record(m, n);
  return m;
}

// Policy and worker count from the environment.
template <typename Body>
LoopMeasurement parallel_for(const std::string& loop_id, std::int64_t n, Body&& body) {
  return parallel_for(loop_id, n, std::forward<Body>(body), resolve_policy_from_env());
}

// Single-threaded reference executor: identical dispense protocol, chunks
// executed in dispatch order on the calling thread. Used by tests and the
// benchmark; does not touch the measurement log.
template <typename Body>
double serial_for(std::int64_t n, Body&& body, const PolicySpec& spec, int policy_workers,
                  std::vector<std::int64_t>* chunk_log = nullptr) {
  if (n < 1) throw InvalidParameterError("serial_for: empty range");
  PolicySpec resolved = spec;
  if (resolved.kind == PolicyKind::BoFss)
    throw InvalidParameterError("serial_for: bo_fss needs a loop id; use parallel_for");
  ChunkDispenser dispenser(ChunkPolicy::from_spec(resolved, {n, policy_workers}));
  auto start = std::chrono::steady_clock::now();
  for (auto range = dispenser.next(); !range.empty(); range = dispenser.next())
    for (std::int64_t i = range.begin; i < range.end; ++i) body(i);
  auto stop = std::chrono::steady_clock::now();
  if (chunk_log) *chunk_log = dispenser.log();
  return std::chrono::duration<double>(stop - start).count();
}

}  // namespace loopsched
