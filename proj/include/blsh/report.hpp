#pragma once

// CSV writers. Every file starts with a "# blsh-<kind> v<N>" schema line
// followed by a header row; columns are only ever appended within a version.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>

#include "blsh/eval.hpp"

namespace blsh {

inline constexpr std::string_view kPrSchema = "# blsh-pr v1";
inline constexpr std::string_view kAuprSchema = "# blsh-aupr v1";
inline constexpr std::string_view kBenchSchema = "# blsh-bench v1";
inline constexpr std::string_view kCorrelationSchema = "# blsh-correlation v1";
inline constexpr std::string_view kVerifySchema = "# blsh-verify v1";
inline constexpr std::string_view kGtSchema = "# blsh-gt v1";

/// Shortest round-trip decimal form; locale independent.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_pr_header(std::ostream& os) {
  os << kPrSchema << '\n' << "method,k,m,seed,cutoff,precision,recall\n";
}

/// One row per cutoff. `seed` is the numeric seed for a single run, or
/// "mean" / "std" for aggregated rows.
inline void write_pr_rows(std::ostream& os, std::string_view method, uint32_t k, uint32_t m, std::string_view seed,
                          const PrCurve& curve) {
  const bool std_rows = seed == "std";
  for (const auto& p : curve.points) {
    os << method << ',' << k << ',' << m << ',' << seed << ',' << fmt(p.cutoff) << ','
       << fmt(std_rows ? p.precision_std : p.precision) << ',' << fmt(std_rows ? p.recall_std : p.recall) << '\n';
  }
}

inline void write_aupr_header(std::ostream& os) {
  os << kAuprSchema << '\n' << "method,k,m,repetitions,aupr_mean,aupr_std,queries_used,queries_skipped\n";
}

inline void write_aupr_row(std::ostream& os, std::string_view method, uint32_t k, uint32_t m, size_t reps,
                           const AreaSummary& a, const PrCurve& any) {
  os << method << ',' << k << ',' << m << ',' << reps << ',' << fmt(a.mean) << ',' << fmt(a.std) << ','
     << any.queries_used << ',' << any.queries_skipped << '\n';
}

inline void write_bench_header(std::ostream& os) {
  os << kBenchSchema << '\n'
     << "method,k,m,d_w,d_v,encode_time_per_item,hasher_bytes,peak_extra_bytes,memory_source\n";
}

inline void write_bench_row(std::ostream& os, const BenchRecord& r, int64_t d_w, int64_t d_v) {
  os << to_string(r.method) << ',' << r.k << ',' << r.m << ',' << d_w << ',' << d_v << ','
     << fmt(r.encode_time_per_item) << ',' << r.hasher_bytes << ',' << r.peak_extra_bytes << ','
     << r.memory_source << '\n';
}

inline void write_correlation_header(std::ostream& os) {
  os << kCorrelationSchema << '\n' << "group,m,k,mean_abs_corr,stderr\n";
}

inline void write_correlation_rows(std::ostream& os, uint32_t m, uint32_t k, const CorrelationSummary& s) {
  for (const auto& g : s.groups) {
    os << to_string(g.group) << ',' << m << ',' << k << ',' << fmt(g.mean_abs_corr) << ',' << fmt(g.std_err)
       << '\n';
  }
}

struct VerifyRow {
  uint32_t pair = 0;
  uint32_t item_x = 0, item_y = 0;
  HammingBoundReport hamming;
  CovarianceBoundReport cov;
  bool kernel_lower_ok = true;
  bool kernel_upper_ok = true;  // vacuously true when assumptions fail
  bool hamming_lower_ok = true;  // vacuously true when assumptions fail
  bool hamming_upper_ok = true;
  bool hamming_mc_ok = true;
  bool cov_ok = true;

  bool all_ok() const {
    return kernel_lower_ok && kernel_upper_ok && hamming_lower_ok && hamming_upper_ok && hamming_mc_ok && cov_ok;
  }
};

inline void write_verify_header(std::ostream& os) {
  os << kVerifySchema << '\n'
     << "pair,item_x,item_y,kappa_g,kappa_b,g1,series,g2,hamming_mc,hamming_mc_stderr,cov_lower,cov_mc,"
        "cov_mc_stderr,cov_upper,frob_ok,spectral_ok,kernel_lower_ok,kernel_upper_ok,hamming_lower_ok,"
        "hamming_upper_ok,hamming_mc_ok,cov_ok\n";
}

inline void write_verify_row(std::ostream& os, const VerifyRow& r) {
  const auto& h = r.hamming;
  const McEstimate hm = h.mc_estimate.value_or(McEstimate{});
  const McEstimate cm = r.cov.mc_estimate.value_or(McEstimate{});
  os << r.pair << ',' << r.item_x << ',' << r.item_y << ',' << fmt(h.kappa_g_val) << ',' << fmt(h.kappa_b_val) << ','
     << fmt(h.g1_lower) << ',' << fmt(h.series_value) << ',' << fmt(h.g2_upper) << ',' << fmt(hm.mean) << ','
     << fmt(hm.std_err) << ',' << fmt(r.cov.lower) << ',' << fmt(cm.mean) << ',' << fmt(cm.std_err) << ','
     << fmt(r.cov.upper) << ',' << h.assumptions.frob_ok << ',' << h.assumptions.spectral_ok << ','
     << r.kernel_lower_ok << ',' << r.kernel_upper_ok << ',' << r.hamming_lower_ok << ',' << r.hamming_upper_ok
     << ',' << r.hamming_mc_ok << ',' << r.cov_ok << '\n';
}

}  // namespace blsh
