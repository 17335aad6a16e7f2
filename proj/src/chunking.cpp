#include "loopsched/chunking.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdlib>
#include <sstream>

namespace loopsched {

namespace {

constexpr const char* kGrammarHelp =
    "expected one of: static | ss | css:<K> | guided | fss:<theta> | fac2 | trap1 | "
    "taper3 | tss:<Kf>,<Kl> | taper:<valpha>,<Kmin> | bo_fss";

std::int64_t clamp_chunk(std::int64_t k, std::int64_t remaining) {
  return std::clamp<std::int64_t>(k, 1, remaining);
}

double parse_real(const std::string& text, const char* what) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(std::string("bad ") + what + " '" + text + "'; " + kGrammarHelp);
  return value;
}

std::int64_t parse_int(const std::string& text, const char* what) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(std::string("bad ") + what + " '" + text + "'; " + kGrammarHelp);
  return value;
}

}  // namespace

void TaskStats::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidParameterError("TaskStats: mu must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw InvalidParameterError("TaskStats: sigma must be non-negative");
  if (!(h >= 0.0) || !std::isfinite(h)) throw InvalidParameterError("TaskStats: h must be non-negative");
}

PolicySpec PolicySpec::parse(const std::string& text) {
  PolicySpec spec;
  auto colon = text.find(':');
  std::string head = text.substr(0, colon);
  std::string tail = colon == std::string::npos ? std::string() : text.substr(colon + 1);

  auto split_pair = [&](const char* what) -> std::pair<std::string, std::string> {
    auto comma = tail.find(',');
    if (comma == std::string::npos)
      throw ConfigError(std::string(what) + " needs two comma-separated values; " + kGrammarHelp);
    return {tail.substr(0, comma), tail.substr(comma + 1)};
  };

  if (head == "static" && tail.empty()) {
    spec.kind = PolicyKind::Static;
  } else if (head == "ss" && tail.empty()) {
    spec.kind = PolicyKind::SelfScheduling;
  } else if (head == "guided" && tail.empty()) {
    spec.kind = PolicyKind::Guided;
  } else if (head == "fac2" && tail.empty()) {
    spec.kind = PolicyKind::Fac2;
  } else if (head == "bo_fss" && tail.empty()) {
    spec.kind = PolicyKind::BoFss;
  } else if (head == "css") {
    spec.kind = PolicyKind::Css;
    spec.css_chunk = parse_int(tail, "css chunk size");
    if (spec.css_chunk < 1) throw ConfigError("css chunk size must be >= 1");
  } else if (head == "fss") {
    spec.kind = PolicyKind::Fss;
    spec.fss_theta = parse_real(tail, "fss theta");
    if (!std::isfinite(spec.fss_theta) || spec.fss_theta < 0.0)
      throw ConfigError("fss theta must be finite and non-negative");
  } else if (head == "trap1" && tail.empty()) {
    spec.kind = PolicyKind::Tss;
    spec.tss_trap1 = true;
  } else if (head == "tss") {
    spec.kind = PolicyKind::Tss;
    auto [a, b] = split_pair("tss");
    spec.tss_kf = parse_real(a, "tss Kf");
    spec.tss_kl = parse_real(b, "tss Kl");
  } else if (head == "taper3" && tail.empty()) {
    spec.kind = PolicyKind::Taper;
    spec.taper_valpha = 3.0;
    spec.taper_kmin = 1;
  } else if (head == "taper") {
    spec.kind = PolicyKind::Taper;
    auto [a, b] = split_pair("taper");
    spec.taper_valpha = parse_real(a, "taper valpha");
    spec.taper_kmin = parse_int(b, "taper Kmin");
    if (spec.taper_valpha < 0.0) throw ConfigError("taper valpha must be >= 0");
    if (spec.taper_kmin < 1) throw ConfigError("taper Kmin must be >= 1");
  } else {
    throw ConfigError("unrecognized schedule '" + text + "'; " + kGrammarHelp);
  }
  return spec;
}

std::string PolicySpec::format() const {
  std::ostringstream out;
  switch (kind) {
    case PolicyKind::Static: return "static";
    case PolicyKind::SelfScheduling: return "ss";
    case PolicyKind::Guided: return "guided";
    case PolicyKind::Fac2: return "fac2";
    case PolicyKind::BoFss: return "bo_fss";
    case PolicyKind::Css: out << "css:" << css_chunk; break;
    case PolicyKind::Fss: out << "fss:" << fss_theta; break;
    case PolicyKind::Tss:
      if (tss_trap1) return "trap1";
      out << "tss:" << tss_kf << "," << tss_kl;
      break;
    case PolicyKind::Taper: out << "taper:" << taper_valpha << "," << taper_kmin; break;
  }
  return out.str();
}

ChunkPolicy ChunkPolicy::static_partition(LoopShape shape) {
  shape.validate();
  ChunkPolicy p(PolicyKind::Static, shape);
  std::int64_t base = shape.n / shape.p;
  std::int64_t rem = shape.n % shape.p;
  for (std::int64_t i = 0; i < shape.p; ++i) {
    std::int64_t k = base + (i < rem ? 1 : 0);
    if (k > 0) p.static_chunks_.push_back(k);
  }
  return p;
}

ChunkPolicy ChunkPolicy::self_scheduling(LoopShape shape) {
  shape.validate();
  return ChunkPolicy(PolicyKind::SelfScheduling, shape);
}

ChunkPolicy ChunkPolicy::css(LoopShape shape, std::int64_t chunk) {
  shape.validate();
  if (chunk < 1) throw InvalidParameterError("css: chunk size must be >= 1");
  ChunkPolicy p(PolicyKind::Css, shape);
  p.css_chunk_ = chunk;
  return p;
}

ChunkPolicy ChunkPolicy::css(LoopShape shape, const TaskStats& stats) {
  return css(shape, css_chunk_size(shape, stats));
}

ChunkPolicy ChunkPolicy::guided(LoopShape shape) {
  shape.validate();
  return ChunkPolicy(PolicyKind::Guided, shape);
}

ChunkPolicy ChunkPolicy::fss(LoopShape shape, double theta) {
  shape.validate();
  if (!std::isfinite(theta) || theta < 0.0)
    throw InvalidParameterError("fss: theta must be finite and non-negative");
  ChunkPolicy p(PolicyKind::Fss, shape);
  p.fss_theta = theta;
  return p;
}

ChunkPolicy ChunkPolicy::fac2(LoopShape shape) {
  shape.validate();
  return ChunkPolicy(PolicyKind::Fac2, shape);
}

ChunkPolicy ChunkPolicy::tss(LoopShape shape, double k_first, double k_last) {
  shape.validate();
  if (!std::isfinite(k_first) || !std::isfinite(k_last) || k_last < 1.0 || k_first < k_last)
    throw InvalidParameterError("tss: need K_f >= K_l >= 1");
  ChunkPolicy p(PolicyKind::Tss, shape);
  p.tss_k_ = k_first;
  p.tss_kl_ = k_last;
  p.tss_delta_ = shape.n > 1 ? (k_first - k_last) / static_cast<double>(shape.n - 1) : 0.0;
  return p;
}

ChunkPolicy ChunkPolicy::trap1(LoopShape shape) {
  shape.validate();
  // K_f = N/(2P) can drop below K_l = 1 on tiny loops; clamp to keep the pair valid.
  double kf = std::max(static_cast<double>(shape.n) / (2.0 * shape.p), 1.0);
  return tss(shape, kf, 1.0);
}

ChunkPolicy ChunkPolicy::taper(LoopShape shape, double v_alpha, std::int64_t k_min) {
  shape.validate();
  if (!std::isfinite(v_alpha) || v_alpha < 0.0) throw InvalidParameterError("taper: v_alpha must be >= 0");
  if (k_min < 1) throw InvalidParameterError("taper: K_min must be >= 1");
  ChunkPolicy p(PolicyKind::Taper, shape);
  p.taper_valpha_ = v_alpha;
  p.taper_kmin_ = k_min;
  return p;
}

ChunkPolicy ChunkPolicy::taper3(LoopShape shape) { return taper(shape, 3.0, 1); }

ChunkPolicy ChunkPolicy::from_spec(const PolicySpec& spec, LoopShape shape) {
  switch (spec.kind) {
    case PolicyKind::Static: return static_partition(shape);
    case PolicyKind::SelfScheduling: return self_scheduling(shape);
    case PolicyKind::Css: return css(shape, spec.css_chunk);
    case PolicyKind::Guided: return guided(shape);
    case PolicyKind::Fss: return fss(shape, spec.fss_theta);
    case PolicyKind::BoFss: return fss(shape, spec.fss_theta);
    case PolicyKind::Fac2: return fac2(shape);
    case PolicyKind::Tss:
      return spec.tss_trap1 ? trap1(shape) : tss(shape, spec.tss_kf, spec.tss_kl);
    case PolicyKind::Taper: return taper(shape, spec.taper_valpha, spec.taper_kmin);
  }
  throw InvalidParameterError("from_spec: unknown policy kind");
}

std::int64_t ChunkPolicy::next_batch_size() {
  // FSS batch rule: b_i = P theta / (2 sqrt(R_i)), x_0 = 1 + b^2 + b sqrt(b^2+4),
  // x_i = 2 + b^2 + b sqrt(b^2+4) for i >= 1, K_i = R_i / (x_i P).
  // FAC2 is the fixed-point heuristic x_i = 2.
  double r = static_cast<double>(remaining_);
  double x = 2.0;
  if (kind_ == PolicyKind::Fss) {
    double b = shape_.p * fss_theta / (2.0 * std::sqrt(r));
    x = (batch_index_ == 0 ? 1.0 : 2.0) + b * b + b * std::sqrt(b * b + 4.0);
  }
  double k = r / (x * shape_.p);
  return clamp_chunk(static_cast<std::int64_t>(std::ceil(k)), remaining_);
}

std::int64_t ChunkPolicy::next() {
  if (remaining_ <= 0) return 0;
  std::int64_t dispensed = 0;
  switch (kind_) {
    case PolicyKind::Static:
      dispensed = static_chunks_[static_pos_++];
      break;
    case PolicyKind::SelfScheduling:
      dispensed = 1;
      break;
    case PolicyKind::Css:
      dispensed = std::min(css_chunk_, remaining_);
      break;
    case PolicyKind::Guided:
      dispensed = clamp_chunk(
          static_cast<std::int64_t>(std::ceil(static_cast<double>(remaining_) / shape_.p)), remaining_);
      break;
    case PolicyKind::Fss:
    case PolicyKind::Fac2:
      if (batch_dispensed_ == 0) batch_chunk_ = next_batch_size();
      dispensed = std::min(batch_chunk_, remaining_);
      if (++batch_dispensed_ == shape_.p) {
        batch_dispensed_ = 0;
        ++batch_index_;
      }
      break;
    case PolicyKind::Tss:
      dispensed = clamp_chunk(std::llround(tss_k_), remaining_);
      tss_k_ = std::max(tss_k_ - tss_delta_, tss_kl_);
      break;
    case PolicyKind::Taper: {
      double x = static_cast<double>(remaining_) / shape_.p + static_cast<double>(taper_kmin_) / 2.0;
      double v = taper_valpha_;
      double k = std::floor(x + v * v / 2.0 - v * std::sqrt(2.0 * x + v * v / 4.0));
      dispensed = clamp_chunk(std::max<std::int64_t>(static_cast<std::int64_t>(k), taper_kmin_), remaining_);
      break;
    }
    case PolicyKind::BoFss:
      throw InvalidParameterError("bo_fss must be resolved to a concrete theta before dispensing");
  }
  remaining_ -= dispensed;
  return dispensed;
}

std::vector<std::int64_t> chunk_sequence(ChunkPolicy policy) {
  std::vector<std::int64_t> out;
  while (std::int64_t k = policy.next()) out.push_back(k);
  return out;
}

std::vector<std::int64_t> fss_chunk_sequence(LoopShape shape, double theta) {
  return chunk_sequence(ChunkPolicy::fss(shape, theta));
}

std::vector<std::int64_t> fac2_chunk_sequence(LoopShape shape) {
  return chunk_sequence(ChunkPolicy::fac2(shape));
}

std::vector<std::int64_t> guided_chunk_sequence(LoopShape shape) {
  return chunk_sequence(ChunkPolicy::guided(shape));
}

std::vector<std::int64_t> static_chunk_sequence(LoopShape shape) {
  return chunk_sequence(ChunkPolicy::static_partition(shape));
}

std::vector<std::int64_t> ss_chunk_sequence(LoopShape shape) {
  return chunk_sequence(ChunkPolicy::self_scheduling(shape));
}

std::vector<std::int64_t> tss_chunk_sequence(LoopShape shape, double k_first, double k_last) {
  return chunk_sequence(ChunkPolicy::tss(shape, k_first, k_last));
}

std::vector<std::int64_t> taper_chunk_sequence(LoopShape shape, const TaskStats& stats, double alpha,
                                               std::int64_t k_min) {
  stats.validate();
  if (!std::isfinite(alpha) || alpha < 0.0) throw InvalidParameterError("taper: alpha must be >= 0");
  return chunk_sequence(ChunkPolicy::taper(shape, alpha * stats.sigma / stats.mu, k_min));
}

std::int64_t css_chunk_size(LoopShape shape, const TaskStats& stats) {
  shape.validate();
  stats.validate();
  if (stats.sigma == 0.0)
    throw DegenerateInputError("css: undefined for sigma = 0; fall back to static");
  if (shape.p < 2) throw DegenerateInputError("css: undefined for P = 1; fall back to static");
  if (stats.h <= 0.0) throw DegenerateInputError("css: undefined for h = 0; fall back to static");
  // K = ((h/sigma) * sqrt(2) N / (P sqrt(ln P)))^(2/3)
  double num = std::sqrt(2.0) * static_cast<double>(shape.n);
  double den = static_cast<double>(shape.p) * std::sqrt(std::log(static_cast<double>(shape.p)));
  double k = std::pow((stats.h / stats.sigma) * num / den, 2.0 / 3.0);
  return clamp_chunk(std::llround(k), shape.n);
}

}  // namespace loopsched
