#include "loopsched/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

namespace loopsched {

namespace detail {

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void atomic_write_file(const std::string& path, const std::string& content,
                       bool abort_before_rename) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";

  static std::atomic<std::uint64_t> counter{0};
  fs::path temp = dir / (target.filename().string() + ".tmp." +
                         std::to_string(counter.fetch_add(1)) + "." +
                         std::to_string(::getpid()));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open temporary file for writing: " + temp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(temp, ec);
      throw IoError("write failed: " + temp.string());
    }
  }
  if (abort_before_rename) return;  // crash point: temp exists, target untouched
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    std::error_code ec2;
    fs::remove(temp, ec2);
    throw IoError("rename to " + path + " failed: " + ec.message());
  }
}

}  // namespace detail

namespace {

const char* surrogate_name(SurrogateMode mode) {
  return mode == SurrogateMode::Plain ? "plain" : "locality_aware";
}

SurrogateMode surrogate_from_name(const std::string& name) {
  if (name == "plain") return SurrogateMode::Plain;
  if (name == "locality_aware") return SurrogateMode::LocalityAware;
  throw ValidationError("dataset: field 'config.surrogate' must be 'plain' or 'locality_aware'");
}

void append_json_string(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

const nlohmann::json& require_field(const nlohmann::json& j, const char* field,
                                    const char* where) {
  auto it = j.find(field);
  if (it == j.end())
    throw ValidationError(std::string(where) + ": missing field '" + field + "'");
  return *it;
}

nlohmann::json parse_json(const std::string& text, const char* where) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string(where) + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void LoopDatasetFile::validate() const {
  if (version != 1)
    throw UnsupportedVersionError("dataset: unsupported version " + std::to_string(version));
  if (loop_id.empty()) throw ValidationError("dataset: field 'loop_id' must be non-empty");
  if (n && *n < 1) throw ValidationError("dataset: field 'n' must be >= 1 when present");
  try {
    config.validate();
  } catch (const Error& e) {
    throw ValidationError(std::string("dataset: field 'config' invalid: ") + e.what());
  }
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const auto& it = iterations[i];
    auto where = "dataset: iterations[" + std::to_string(i) + "]";
    if (it.run_uuid.empty()) throw ValidationError(where + ": field 'run_uuid' must be non-empty");
    if (!(it.x > 0.0) || !(it.x < 1.0))
      throw ValidationError(where + ": field 'x' must lie in (0,1)");
    if (std::abs(it.theta - reparam(it.x)) > 1e-9)
      throw ValidationError(where + ": field 'theta' is not reparam(x)");
    if (it.measurements.empty())
      throw ValidationError(where + ": field 'measurements' must be non-empty");
    double sum = 0.0;
    std::int64_t prev_ell = 0;
    for (const auto& m : it.measurements) {
      if (m.ell <= prev_ell)
        throw ValidationError(where + ": field 'measurements' must have strictly increasing ell");
      prev_ell = m.ell;
      if (!(m.tau_s > 0.0) || !std::isfinite(m.tau_s))
        throw ValidationError(where + ": field 'tau_s' must be positive and finite");
      sum += m.tau_s;
    }
    if (std::abs(sum - it.total_s) > 1e-9)
      throw ValidationError(where + ": field 'total_s' does not equal the sum of tau_s");
  }
}

std::vector<Observation> LoopDatasetFile::observations() const {
  std::vector<Observation> obs;
  obs.reserve(iterations.size());
  for (const auto& it : iterations) {
    Observation o;
    o.x = it.x;
    o.theta = it.theta;
    o.total = it.total_s;
    for (const auto& m : it.measurements) o.per_execution.emplace_back(m.ell, m.tau_s);
    obs.push_back(std::move(o));
  }
  return obs;
}

void NextParamFile::validate() const {
  if (loop_id.empty()) throw ValidationError("next-param: field 'loop_id' must be non-empty");
  if (!(x_next > 0.0) || !(x_next < 1.0))
    throw ValidationError("next-param: field 'x_next' must lie in (0,1)");
  if (std::abs(theta_next - reparam(x_next)) > 1e-9)
    throw ValidationError("next-param: field 'theta_next' is not reparam(x_next)");
  if (source_iteration_count < 0)
    throw ValidationError("next-param: field 'source_iteration_count' must be >= 0");
}

std::string dataset_to_json(const LoopDatasetFile& file) {
  file.validate();
  using detail::format_double;
  std::string out;
  out += "{\n  \"config\": {";
  out += "\n    \"hp_samples\": " + std::to_string(file.config.hp_samples);
  out += ",\n    \"mes_samples\": " + std::to_string(file.config.mes_samples);
  out += ",\n    \"n_init\": " + std::to_string(file.config.n_init);
  out += ",\n    \"n_iters\": " + std::to_string(file.config.n_iters);
  out += ",\n    \"seed\": " + std::to_string(file.config.seed);
  out += ",\n    \"subsample_k\": " + std::to_string(file.config.subsample_k);
  out += ",\n    \"surrogate\": \"" + std::string(surrogate_name(file.config.surrogate)) + "\"";
  out += "\n  },\n  \"iterations\": [";
  for (std::size_t i = 0; i < file.iterations.size(); ++i) {
    const auto& it = file.iterations[i];
    out += i == 0 ? "\n" : ",\n";
    out += "    {\n      \"measurements\": [";
    for (std::size_t m = 0; m < it.measurements.size(); ++m) {
      out += m == 0 ? "\n" : ",\n";
      out += "        {\"ell\": " + std::to_string(it.measurements[m].ell) +
             ", \"tau_s\": " + format_double(it.measurements[m].tau_s) + "}";
    }
    out += "\n      ],\n      \"run_uuid\": ";
    append_json_string(out, it.run_uuid);
    out += ",\n      \"theta\": " + format_double(it.theta);
    out += ",\n      \"total_s\": " + format_double(it.total_s);
    out += ",\n      \"x\": " + format_double(it.x);
    out += "\n    }";
  }
  out += file.iterations.empty() ? "],\n" : "\n  ],\n";
  out += "  \"loop_id\": ";
  append_json_string(out, file.loop_id);
  out += ",\n  \"n\": ";
  out += file.n ? std::to_string(*file.n) : "null";
  out += ",\n  \"version\": " + std::to_string(file.version);
  out += "\n}\n";
  return out;
}

LoopDatasetFile dataset_from_json(const std::string& text) {
  auto j = parse_json(text, "dataset");
  if (!j.is_object()) throw ValidationError("dataset: top level must be an object");
  LoopDatasetFile file;
  try {
    file.version = require_field(j, "version", "dataset").get<int>();
    if (file.version != 1)
      throw UnsupportedVersionError("dataset: unsupported version " +
                                    std::to_string(file.version));
    file.loop_id = require_field(j, "loop_id", "dataset").get<std::string>();
    const auto& n = require_field(j, "n", "dataset");
    if (!n.is_null()) file.n = n.get<std::int64_t>();
    const auto& config = require_field(j, "config", "dataset");
    file.config.n_init = require_field(config, "n_init", "dataset.config").get<int>();
    file.config.n_iters = require_field(config, "n_iters", "dataset.config").get<int>();
    file.config.surrogate = surrogate_from_name(
        require_field(config, "surrogate", "dataset.config").get<std::string>());
    file.config.subsample_k = require_field(config, "subsample_k", "dataset.config").get<int>();
    file.config.mes_samples = require_field(config, "mes_samples", "dataset.config").get<int>();
    file.config.hp_samples = require_field(config, "hp_samples", "dataset.config").get<int>();
    file.config.seed = require_field(config, "seed", "dataset.config").get<std::uint64_t>();
    for (const auto& item : require_field(j, "iterations", "dataset")) {
      DatasetIteration it;
      it.run_uuid = require_field(item, "run_uuid", "dataset.iteration").get<std::string>();
      it.x = require_field(item, "x", "dataset.iteration").get<double>();
      it.theta = require_field(item, "theta", "dataset.iteration").get<double>();
      it.total_s = require_field(item, "total_s", "dataset.iteration").get<double>();
      for (const auto& m : require_field(item, "measurements", "dataset.iteration")) {
        DatasetMeasurement dm;
        dm.ell = require_field(m, "ell", "dataset.measurement").get<std::int64_t>();
        dm.tau_s = require_field(m, "tau_s", "dataset.measurement").get<double>();
        it.measurements.push_back(dm);
      }
      file.iterations.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset: ") + e.what());
  }
  file.validate();
  return file;
}

LoopDatasetFile load_dataset(const std::string& path) {
  return dataset_from_json(read_file(path));
}

void save_dataset(const std::string& path, const LoopDatasetFile& file) {
  detail::atomic_write_file(path, dataset_to_json(file));
}

std::string next_param_to_json(const NextParamFile& file) {
  file.validate();
  std::string out = "{\n  \"loop_id\": ";
  append_json_string(out, file.loop_id);
  out += ",\n  \"produced_by\": ";
  append_json_string(out, file.produced_by);
  out += ",\n  \"source_iteration_count\": " + std::to_string(file.source_iteration_count);
  out += ",\n  \"theta_next\": " + detail::format_double(file.theta_next);
  out += ",\n  \"x_next\": " + detail::format_double(file.x_next);
  out += "\n}\n";
  return out;
}

NextParamFile next_param_from_json(const std::string& text) {
  auto j = parse_json(text, "next-param");
  NextParamFile file;
  try {
    file.loop_id = require_field(j, "loop_id", "next-param").get<std::string>();
    file.x_next = require_field(j, "x_next", "next-param").get<double>();
    file.theta_next = require_field(j, "theta_next", "next-param").get<double>();
    file.produced_by = require_field(j, "produced_by", "next-param").get<std::string>();
    file.source_iteration_count =
        require_field(j, "source_iteration_count", "next-param").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("next-param: ") + e.what());
  }
  file.validate();
  return file;
}

NextParamFile load_next_param(const std::string& path) {
  return next_param_from_json(read_file(path));
}

void save_next_param(const std::string& path, const NextParamFile& file) {
  detail::atomic_write_file(path, next_param_to_json(file));
}

std::string dataset_path(const std::string& data_dir, const std::string& loop_id) {
  return data_dir + "/" + loop_id + ".json";
}

std::string next_param_path(const std::string& data_dir, const std::string& loop_id) {
  return data_dir + "/" + loop_id + ".next.json";
}

}  // namespace loopsched
