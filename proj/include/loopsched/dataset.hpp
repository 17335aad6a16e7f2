#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopsched/bo.hpp"

namespace loopsched {

// On-disk BO dataset of one loop, format version 1. Serialization is
// canonical: sorted keys, doubles printed with 17 significant digits, so
// save -> load -> save is byte-identical.
struct DatasetMeasurement {
  std::int64_t ell = 0;
  double tau_s = 0.0;
};

struct DatasetIteration {
  std::string run_uuid;
  double x = 0.0;
  double theta = 0.0;
  std::vector<DatasetMeasurement> measurements;
  double total_s = 0.0;
};

struct LoopDatasetFile {
  int version = 1;
  std::string loop_id;
  std::optional<std::int64_t> n;  // task count when known
  BOConfig config;
  std::vector<DatasetIteration> iterations;

  void validate() const;
  std::vector<Observation> observations() const;
};

// Handoff file consumed by the runtime's bo_fss schedule.
struct NextParamFile {
  std::string loop_id;
  double x_next = 0.5;
  double theta_next = 0.0;
  std::string produced_by;
  std::int64_t source_iteration_count = 0;

  void validate() const;
};

std::string dataset_to_json(const LoopDatasetFile& file);
LoopDatasetFile dataset_from_json(const std::string& text);
LoopDatasetFile load_dataset(const std::string& path);
void save_dataset(const std::string& path, const LoopDatasetFile& file);

std::string next_param_to_json(const NextParamFile& file);
NextParamFile next_param_from_json(const std::string& text);
NextParamFile load_next_param(const std::string& path);
void save_next_param(const std::string& path, const NextParamFile& file);

// Standard path of the handoff file next to the dataset directory.
std::string next_param_path(const std::string& data_dir, const std::string& loop_id);
std::string dataset_path(const std::string& data_dir, const std::string& loop_id);

namespace detail {

// Writes content to a temporary file in the target directory, then renames it
// over the destination. abort_before_rename simulates a crash between the two
// steps (fault-injection hook for tests); the destination is never touched.
void atomic_write_file(const std::string& path, const std::string& content,
                       bool abort_before_rename = false);

std::string format_double(double value);

}  // namespace detail

}  // namespace loopsched
