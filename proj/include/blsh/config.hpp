#pragma once

// Run configuration shared by every CLI subcommand, with a flat key=value
// text form. Keys are the long flag names without the leading dashes; list
// values are comma-separated; '#' starts a comment line.

#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blsh/error.hpp"
#include "blsh/hashers.hpp"
#include "blsh/matrixio.hpp"

namespace blsh {

struct RunConfig {
  std::string command;
  std::string dataset;
  std::string format = "auto";   // auto | idx | csv | blsh
  int64_t dw = 0;                 // 0: taken from the dataset (idx) or required (csv, blsh)
  int64_t dv = 0;
  std::vector<uint32_t> k{400};
  std::vector<uint32_t> k_single;  // eval-pr: bit counts for the single family (default: k)
  std::vector<uint32_t> m{1};
  std::string method = "bilinear";  // single | bilinear | angle | both
  uint64_t seed = 1;
  double tol = 1e-6;
  int64_t mc_samples = 10000;
  int64_t cov_samples = 100000;
  std::string out = ".";
  unsigned threads = 0;             // 0: all hardware threads
  uint64_t memory_cap_mb = 4096;
  double bandwidth = 1.0;
  std::string scale = "auto";       // auto | none | threshold | frobenius
  double frobenius_target = 0.8;
  uint32_t limit = 0;               // use only the first N items (0: all)
  uint32_t queries = 50;
  uint32_t kth = 50;
  uint32_t max_neighbors = 5000;
  uint32_t repetitions = 5;
  std::string sweep = "rank";       // rank | radius
  uint32_t pairs = 50;
  uint32_t identical_pairs = 0;
  uint32_t corr_pairs = 200;
  uint32_t bench_items = 200;
};

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(ErrorKind::usage, "config: bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return value;
}

inline std::vector<uint32_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<uint32_t> out;
  while (!text.empty()) {
    const size_t comma = text.find(',');
    out.push_back(parse_number<uint32_t>(key, text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline std::string join(const std::vector<uint32_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Applies one key=value assignment. Unknown keys are a usage error.
inline void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_list;
  using detail::parse_number;
  const std::string v(detail::trim(value));
  if (key == "command") c.command = v;
  else if (key == "dataset") c.dataset = v;
  else if (key == "format") c.format = v;
  else if (key == "dw") c.dw = parse_number<int64_t>(key, v);
  else if (key == "dv") c.dv = parse_number<int64_t>(key, v);
  else if (key == "k") c.k = parse_list(key, v);
  else if (key == "k-single") c.k_single = parse_list(key, v);
  else if (key == "m") c.m = parse_list(key, v);
  else if (key == "method") c.method = v;
  else if (key == "seed") c.seed = parse_number<uint64_t>(key, v);
  else if (key == "tol") c.tol = parse_number<double>(key, v);
  else if (key == "mc-samples") c.mc_samples = parse_number<int64_t>(key, v);
  else if (key == "cov-samples") c.cov_samples = parse_number<int64_t>(key, v);
  else if (key == "out") c.out = v;
  else if (key == "threads") c.threads = parse_number<unsigned>(key, v);
  else if (key == "memory-cap-mb") c.memory_cap_mb = parse_number<uint64_t>(key, v);
  else if (key == "bandwidth") c.bandwidth = parse_number<double>(key, v);
  else if (key == "scale") c.scale = v;
  else if (key == "frobenius-target") c.frobenius_target = parse_number<double>(key, v);
  else if (key == "limit") c.limit = parse_number<uint32_t>(key, v);
  else if (key == "queries") c.queries = parse_number<uint32_t>(key, v);
  else if (key == "kth") c.kth = parse_number<uint32_t>(key, v);
  else if (key == "max-neighbors") c.max_neighbors = parse_number<uint32_t>(key, v);
  else if (key == "repetitions") c.repetitions = parse_number<uint32_t>(key, v);
  else if (key == "sweep") c.sweep = v;
  else if (key == "pairs") c.pairs = parse_number<uint32_t>(key, v);
  else if (key == "identical-pairs") c.identical_pairs = parse_number<uint32_t>(key, v);
  else if (key == "corr-pairs") c.corr_pairs = parse_number<uint32_t>(key, v);
  else if (key == "bench-items") c.bench_items = parse_number<uint32_t>(key, v);
  else fail(ErrorKind::usage, "config: unknown key '" + std::string(key) + "'");
}

inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  size_t line_no = 0;
  while (!text.empty()) {
    const size_t nl = text.find('\n');
    const std::string_view line = detail::trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::usage, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  const auto bytes = detail::read_all(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::move(base));
}

inline std::string config_to_text(const RunConfig& c) {
  using detail::format_double;
  using detail::join;
  std::ostringstream os;
  os << "command=" << c.command << '\n'
     << "dataset=" << c.dataset << '\n'
     << "format=" << c.format << '\n'
     << "dw=" << c.dw << '\n'
     << "dv=" << c.dv << '\n'
     << "k=" << join(c.k) << '\n'
     << "k-single=" << join(c.k_single) << '\n'
     << "m=" << join(c.m) << '\n'
     << "method=" << c.method << '\n'
     << "seed=" << c.seed << '\n'
     << "tol=" << format_double(c.tol) << '\n'
     << "mc-samples=" << c.mc_samples << '\n'
     << "cov-samples=" << c.cov_samples << '\n'
     << "out=" << c.out << '\n'
     << "threads=" << c.threads << '\n'
     << "memory-cap-mb=" << c.memory_cap_mb << '\n'
     << "bandwidth=" << format_double(c.bandwidth) << '\n'
     << "scale=" << c.scale << '\n'
     << "frobenius-target=" << format_double(c.frobenius_target) << '\n'
     << "limit=" << c.limit << '\n'
     << "queries=" << c.queries << '\n'
     << "kth=" << c.kth << '\n'
     << "max-neighbors=" << c.max_neighbors << '\n'
     << "repetitions=" << c.repetitions << '\n'
     << "sweep=" << c.sweep << '\n'
     << "pairs=" << c.pairs << '\n'
     << "identical-pairs=" << c.identical_pairs << '\n'
     << "corr-pairs=" << c.corr_pairs << '\n'
     << "bench-items=" << c.bench_items << '\n';
  return os.str();
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return config_to_text(a) == config_to_text(b); }

/// Checks cross-field constraints that a single flag cannot express.
inline void validate(const RunConfig& c) {
  auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (v == a) return true;
    return false;
  };
  if (!one_of(c.format, {"auto", "idx", "csv", "blsh"})) fail(ErrorKind::usage, "unknown --format '" + c.format + "'");
  if (!one_of(c.method, {"single", "bilinear", "angle", "both"})) {
    fail(ErrorKind::usage, "unknown --method '" + c.method + "'");
  }
  if (!one_of(c.scale, {"auto", "none", "threshold", "frobenius"})) {
    fail(ErrorKind::usage, "unknown --scale '" + c.scale + "'");
  }
  if (!one_of(c.sweep, {"rank", "radius"})) fail(ErrorKind::usage, "unknown --sweep '" + c.sweep + "'");
  if (c.dw < 0 || c.dv < 0) fail(ErrorKind::usage, "--dw and --dv must be positive");
  if (c.k.empty()) fail(ErrorKind::usage, "--k needs at least one value");
  if (c.m.empty()) fail(ErrorKind::usage, "--m needs at least one value");
  for (uint32_t v : c.k)
    if (v == 0) fail(ErrorKind::usage, "--k values must be >= 1");
  for (uint32_t v : c.m)
    if (v == 0) fail(ErrorKind::usage, "--m values must be >= 1");
  if (!(c.tol > 0)) fail(ErrorKind::usage, "--tol must be positive");
  if (!(c.bandwidth > 0)) fail(ErrorKind::usage, "--bandwidth must be positive");
  if (!(c.frobenius_target > 0)) fail(ErrorKind::usage, "--frobenius-target must be positive");
  if (c.repetitions == 0) fail(ErrorKind::usage, "--repetitions must be >= 1");
  if (c.method == "bilinear" || c.method == "both") {
    for (uint32_t v : c.k) {
      bool exact = false;
      const uint32_t r = isqrt_exact(v, exact);
      if (!exact) {
        fail(ErrorKind::usage, "bilinear codes need a perfect-square k; " + std::to_string(v) +
                                   " is not (nearest: " + std::to_string(r * r) + " or " +
                                   std::to_string((r + 1) * (r + 1)) + ")");
      }
    }
  }
}

}  // namespace blsh
