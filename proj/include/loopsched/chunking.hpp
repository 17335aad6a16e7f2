#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopsched/error.hpp"

namespace loopsched {

// Loop geometry: N tasks shared by P workers.
struct LoopShape {
  std::int64_t n = 0;
  int p = 0;

  void validate() const {
    if (n < 1) throw InvalidParameterError("LoopShape: task count must be >= 1");
    if (p < 1) throw InvalidParameterError("LoopShape: worker count must be >= 1");
  }
};

// Per-task timing statistics used by the analytic policies.
struct TaskStats {
  double mu = 0.0;     // mean task time [s]
  double sigma = 0.0;  // task time std [s]
  double h = 0.0;      // per-dequeue scheduling overhead [s]

  void validate() const;
};

enum class PolicyKind {
  Static,
  SelfScheduling,
  Css,
  Guided,
  Fss,
  Fac2,
  Tss,
  Taper,
  BoFss,  // runtime-level: FSS with the tuned parameter loaded per loop
};

// Parsed form of the policy selection grammar:
//   static | ss | css:<K> | guided | fss:<theta> | fac2 | trap1 | taper3
//          | tss:<Kf>,<Kl> | taper:<valpha>,<Kmin> | bo_fss
struct PolicySpec {
  PolicyKind kind = PolicyKind::Fac2;
  double fss_theta = 0.0;
  std::int64_t css_chunk = 1;
  bool tss_trap1 = false;  // K_f = N/(2P), K_l = 1 derived from the shape
  double tss_kf = 1.0;
  double tss_kl = 1.0;
  double taper_valpha = 3.0;
  std::int64_t taper_kmin = 1;

  static PolicySpec parse(const std::string& text);
  std::string format() const;
};

// Stateful chunk-size generator for one loop execution. Dispenses the exact
// chunk sequence of the selected scheduling algorithm; pure state machine,
// no clock or thread access.
class ChunkPolicy {
 public:
  static ChunkPolicy static_partition(LoopShape shape);
  static ChunkPolicy self_scheduling(LoopShape shape);
  static ChunkPolicy css(LoopShape shape, std::int64_t chunk);
  static ChunkPolicy css(LoopShape shape, const TaskStats& stats);
  static ChunkPolicy guided(LoopShape shape);
  static ChunkPolicy fss(LoopShape shape, double theta);
  static ChunkPolicy fac2(LoopShape shape);
  static ChunkPolicy tss(LoopShape shape, double k_first, double k_last);
  static ChunkPolicy trap1(LoopShape shape);
  static ChunkPolicy taper(LoopShape shape, double v_alpha, std::int64_t k_min);
  static ChunkPolicy taper3(LoopShape shape);

  // Materializes a spec against a concrete shape. BoFss requires the tuned
  // theta to have been resolved into fss_theta beforehand.
  static ChunkPolicy from_spec(const PolicySpec& spec, LoopShape shape);

  // Size of the next chunk, or 0 once the loop is exhausted.
  std::int64_t next();

  std::int64_t remaining() const { return remaining_; }
  PolicyKind kind() const { return kind_; }

 private:
  ChunkPolicy(PolicyKind kind, LoopShape shape) : kind_(kind), shape_(shape), remaining_(shape.n) {}

  std::int64_t next_batch_size();

  PolicyKind kind_;
  LoopShape shape_;
  std::int64_t remaining_ = 0;

  // FSS / FAC2 batch state
  double fss_theta = 0.0;
  std::int64_t batch_index_ = 0;
  std::int64_t batch_chunk_ = 0;   // chunk size of the current batch
  int batch_dispensed_ = 0;        // chunks handed out from the current batch

  // CSS
  std::int64_t css_chunk_ = 1;

  // TSS
  double tss_k_ = 0.0;
  double tss_delta_ = 0.0;
  double tss_kl_ = 1.0;

  // TAPER
  double taper_valpha_ = 0.0;
  std::int64_t taper_kmin_ = 1;

  // STATIC precomputed split
  std::vector<std::int64_t> static_chunks_;
  std::size_t static_pos_ = 0;
};

// Drains a copy of the policy into the full dispensed sequence.
std::vector<std::int64_t> chunk_sequence(ChunkPolicy policy);

// Pure per-algorithm sequence builders.
std::vector<std::int64_t> fss_chunk_sequence(LoopShape shape, double theta);
std::vector<std::int64_t> fac2_chunk_sequence(LoopShape shape);
std::vector<std::int64_t> guided_chunk_sequence(LoopShape shape);
std::vector<std::int64_t> static_chunk_sequence(LoopShape shape);
std::vector<std::int64_t> ss_chunk_sequence(LoopShape shape);
std::vector<std::int64_t> tss_chunk_sequence(LoopShape shape, double k_first, double k_last);
std::vector<std::int64_t> taper_chunk_sequence(LoopShape shape, const TaskStats& stats, double alpha,
                                               std::int64_t k_min);

// Constant CSS chunk size, clamped to [1, N].
std::int64_t css_chunk_size(LoopShape shape, const TaskStats& stats);

}  // namespace loopsched
