#include "loopsched/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace loopsched {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void CostMatrix::add_sample(const std::string& scheduler, const std::string& workload,
                            double cost) {
  if (!(cost > 0.0) || !std::isfinite(cost))
    throw ValidationError("cost matrix: costs must be positive, got " + std::to_string(cost) +
                          " for (" + scheduler + ", " + workload + ")");
  auto s = scheduler_index(scheduler);
  if (!s) {
    schedulers_.push_back(scheduler);
    for (auto& row : samples_) row.emplace_back();
    s = schedulers_.size() - 1;
  }
  auto w = workload_index(workload);
  if (!w) {
    workloads_.push_back(workload);
    samples_.emplace_back(schedulers_.size());
    w = workloads_.size() - 1;
  }
  samples_[*w][*s].push_back(cost);
}

std::optional<std::size_t> CostMatrix::scheduler_index(const std::string& s) const {
  auto it = std::find(schedulers_.begin(), schedulers_.end(), s);
  if (it == schedulers_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - schedulers_.begin());
}

std::optional<std::size_t> CostMatrix::workload_index(const std::string& w) const {
  auto it = std::find(workloads_.begin(), workloads_.end(), w);
  if (it == workloads_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - workloads_.begin());
}

CostMatrix CostMatrix::from_csv_text(const std::string& text) {
  CostMatrix matrix;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("scheduler", 0) == 0) continue;  // header
    auto c1 = line.find(',');
    auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      throw ValidationError("cost csv line " + std::to_string(line_no) +
                            ": expected scheduler,workload,cost");
    std::string scheduler = trim(line.substr(0, c1));
    std::string workload = trim(line.substr(c1 + 1, c2 - c1 - 1));
    std::string cost_text = trim(line.substr(c2 + 1));
    char* end = nullptr;
    double cost = std::strtod(cost_text.c_str(), &end);
    if (end == cost_text.c_str() || *end != '\0')
      throw ValidationError("cost csv line " + std::to_string(line_no) + ": bad cost '" +
                            cost_text + "'");
    matrix.add_sample(scheduler, workload, cost);
  }
  return matrix;
}

CostMatrix CostMatrix::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_csv_text(buf.str());
}

CostMatrix CostMatrix::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("cost json: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("cost json: expected an array of rows");
  CostMatrix matrix;
  for (const auto& row : j) {
    try {
      matrix.add_sample(row.at("scheduler").get<std::string>(),
                        row.at("workload").get<std::string>(), row.at("cost").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("cost json row: ") + e.what());
    }
  }
  return matrix;
}

CostMatrix CostMatrix::from_file(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
  }
  return from_csv_file(path);
}

std::optional<double> CostMatrix::cost(const std::string& scheduler,
                                       const std::string& workload) const {
  auto s = scheduler_index(scheduler);
  auto w = workload_index(workload);
  if (!s || !w || samples_[*w][*s].empty()) return std::nullopt;
  const auto& cell = samples_[*w][*s];
  return std::accumulate(cell.begin(), cell.end(), 0.0) / static_cast<double>(cell.size());
}

std::span<const double> CostMatrix::samples(const std::string& scheduler,
                                            const std::string& workload) const {
  auto s = scheduler_index(scheduler);
  auto w = workload_index(workload);
  if (!s || !w) return {};
  return samples_[*w][*s];
}

std::optional<double> regret_cell(const CostMatrix& matrix, const std::string& scheduler,
                                  const std::string& workload) {
  auto own = matrix.cost(scheduler, workload);
  if (!own) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : matrix.schedulers())
    if (auto c = matrix.cost(s, workload)) best = std::min(best, *c);
  return (*own - best) / best * 100.0;
}

namespace {

std::vector<double> regret_row(const CostMatrix& matrix, const std::string& scheduler) {
  std::vector<double> regrets;
  for (const auto& w : matrix.workloads())
    if (auto r = regret_cell(matrix, scheduler, w)) regrets.push_back(*r);
  if (regrets.empty())
    throw ValidationError("no cost data for scheduler '" + scheduler + "'");
  return regrets;
}

double interpolated_percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  if (p <= 0.0) return values.front();
  if (p >= 100.0) return values.back();
  double rank = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  auto lo = static_cast<std::size_t>(rank);
  double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

double minimax_regret(const CostMatrix& matrix, const std::string& scheduler) {
  auto regrets = regret_row(matrix, scheduler);
  return *std::max_element(regrets.begin(), regrets.end());
}

double percentile_regret(const CostMatrix& matrix, const std::string& scheduler, double p) {
  if (p < 0.0 || p > 100.0)
    throw InvalidParameterError("percentile_regret: p must lie in [0, 100]");
  return interpolated_percentile(regret_row(matrix, scheduler), p);
}

std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level,
                                       int resamples, std::uint64_t seed) {
  if (samples.size() < 2) throw InvalidParameterError("bootstrap_ci: needs at least 2 samples");
  if (!(level > 0.0) || !(level < 1.0))
    throw InvalidParameterError("bootstrap_ci: level must lie in (0,1)");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) acc += samples[pick(rng)];
    m = acc / static_cast<double>(samples.size());
  }
  double alpha = (1.0 - level) / 2.0;
  return {interpolated_percentile(means, alpha * 100.0),
          interpolated_percentile(means, (1.0 - alpha) * 100.0)};
}

namespace {

struct RenderedTable {
  // per workload row: regret per scheduler (or missing), best flag
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::size_t> best_of_row;
  std::vector<double> minimax, r90;
};

RenderedTable compute_table(const CostMatrix& matrix) {
  RenderedTable t;
  for (const auto& w : matrix.workloads()) {
    std::vector<std::optional<double>> row;
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < matrix.schedulers().size(); ++s) {
      auto r = regret_cell(matrix, matrix.schedulers()[s], w);
      row.push_back(r);
      if (r && *r < best_value) {
        best_value = *r;
        best = s;
      }
    }
    t.cells.push_back(std::move(row));
    t.best_of_row.push_back(best);
  }
  for (const auto& s : matrix.schedulers()) {
    t.minimax.push_back(minimax_regret(matrix, s));
    t.r90.push_back(percentile_regret(matrix, s, 90.0));
  }
  return t;
}

}  // namespace

std::string render_regret_table_markdown(const CostMatrix& matrix) {
  auto t = compute_table(matrix);
  std::ostringstream out;
  out << "| workload |";
  for (const auto& s : matrix.schedulers()) out << " " << s << " |";
  out << "\n|---|";
  for (std::size_t s = 0; s < matrix.schedulers().size(); ++s) out << "---|";
  out << "\n";
  for (std::size_t w = 0; w < matrix.workloads().size(); ++w) {
    out << "| " << matrix.workloads()[w] << " |";
    for (std::size_t s = 0; s < matrix.schedulers().size(); ++s) {
      const auto& cell = t.cells[w][s];
      if (!cell) out << " n/a |";
      else if (s == t.best_of_row[w]) out << " **" << fmt2(*cell) << "** |";
      else out << " " << fmt2(*cell) << " |";
    }
    out << "\n";
  }
  out << "| R(S) |";
  for (double v : t.minimax) out << " " << fmt2(v) << " |";
  out << "\n| R90(S) |";
  for (double v : t.r90) out << " " << fmt2(v) << " |";
  out << "\n";
  return out.str();
}

std::string render_regret_table_csv(const CostMatrix& matrix) {
  auto t = compute_table(matrix);
  std::ostringstream out;
  out << "workload";
  for (const auto& s : matrix.schedulers()) out << "," << s;
  out << "\n";
  for (std::size_t w = 0; w < matrix.workloads().size(); ++w) {
    out << matrix.workloads()[w];
    for (std::size_t s = 0; s < matrix.schedulers().size(); ++s) {
      out << ",";
      if (t.cells[w][s]) out << fmt2(*t.cells[w][s]);
    }
    out << "\n";
  }
  out << "R(S)";
  for (double v : t.minimax) out << "," << fmt2(v);
  out << "\nR90(S)";
  for (double v : t.r90) out << "," << fmt2(v);
  out << "\n";
  return out.str();
}

}  // namespace loopsched
