#pragma once

// Expected-Hamming and bit-covariance results for bilinear LSH-SIK, each
// with a Monte-Carlo counterpart.
//
// Single bit, fixed (X, Y):
//   P[h(X) != h(Y)] = (8/pi^2) sum_{m>=1} (1 - kappa_b(m (X - Y))) / (4m^2 - 1)
// bracketed by g1_bilinear(kappa_g) <= P <= g2(kappa_g).
//
// Two bits sharing the left projection w:
//   cov = (64/pi^4) sum_{m,n} c_m c_n [kappa_b(sqrt(m^2+n^2) D) - kappa_b(m D) kappa_b(n D)]
// with c_m = 1 / (4m^2 - 1), and the kappa_g-only envelope
//   +-(64/pi^4) [S(0.79)^2 - S(1)^2],   S(e) = sum_m kappa_g^(e m^2) c_m.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "blsh/error.hpp"
#include "blsh/hashers.hpp"
#include "blsh/kernels.hpp"
#include "blsh/matrixio.hpp"
#include "blsh/randsrc.hpp"
#include "blsh/rff.hpp"

namespace blsh {

inline constexpr double kFourOverPiSq = 4.0 / (std::numbers::pi * std::numbers::pi);
inline constexpr double kEightOverPiSq = 2.0 * kFourOverPiSq;
inline constexpr double kSixtyFourOverPi4 = kEightOverPiSq * kEightOverPiSq;

namespace detail {
inline void require_unit_interval(double z, const char* fn) {
  if (!(z >= 0.0 && z <= 1.0)) fail(ErrorKind::usage, std::string(fn) + ": argument must lie in [0, 1]");
}
// sum_{m=a}^{b} 1 / (4m^2 - 1), telescoping
inline double harmonic_tail(int64_t a, int64_t b) {
  if (b < a) return 0.0;
  return 0.5 * (1.0 / static_cast<double>(2 * a - 1) - 1.0 / static_cast<double>(2 * b + 1));
}
}  // namespace detail

/// Lower bound for the single-projection family.
inline double g1_single(double z) {
  detail::require_unit_interval(z, "g1_single");
  return kFourOverPiSq * (1.0 - z);
}

/// Lower bound for the bilinear family.
inline double g1_bilinear(double z) {
  detail::require_unit_interval(z, "g1_bilinear");
  return kFourOverPiSq * (1.0 - std::pow(z, kSandwichExponent));
}

/// Upper bound, shared by both families.
inline double g2(double z) {
  detail::require_unit_interval(z, "g2");
  return std::min(0.5 * std::sqrt(1.0 - z), kFourOverPiSq * (1.0 - 2.0 / 3.0 * z));
}

struct SeriesResult {
  double value = 0.0;
  int64_t terms_used = 0;
  double tail_bound = 0.0;
};

/// Expected single-bit disagreement. Stops at the first M whose analytic tail
/// bound (8/pi^2) / (4M + 2) is below tol; every dropped term has
/// 1 - kappa_b in [0, 1], so the bound covers the true tail.
inline SeriesResult expected_hamming_series(const DeltaSpectrum& spec, double tol = 1e-6) {
  if (!(tol > 0.0)) fail(ErrorKind::usage, "expected_hamming_series: tol must be positive");
  int64_t terms = 1;
  while (kEightOverPiSq / static_cast<double>(4 * terms + 2) >= tol) ++terms;

  double sum = 0.0;
  for (int64_t m = 1; m <= terms; ++m) {
    const double kb = kappa_b(spec, static_cast<double>(m));
    if (kb < 0x1p-60) {
      // kappa_b is non-increasing in m: the remaining numerators are 1 to
      // double precision, so the rest of the partial sum is telescoping.
      sum += detail::harmonic_tail(m, terms);
      break;
    }
    sum += (1.0 - kb) / static_cast<double>(4 * m * m - 1);
  }
  return {kEightOverPiSq * sum, terms, kEightOverPiSq / static_cast<double>(4 * terms + 2)};
}

/// Empirical single-bit disagreement over n independent one-bit bilinear
/// hashers (fresh w, v, b, t per bit).
inline McEstimate disagreement_mc(const FeatureMatrix& x, const FeatureMatrix& y, int64_t n,
                                  const RandomStream& rs, unsigned threads = 1) {
  require_same_shape(x, y);
  if (n < 2) fail(ErrorKind::usage, "disagreement_mc: need at least 2 samples");
  return run_blocks(n, rs, threads, [&](RandomStream& sub, int64_t count, RunningStats& acc) {
           for (int64_t i = 0; i < count; ++i) {
             const BilinearHasher h = build_bilinear(sub, x.rows(), x.cols(), 1, 1);
             acc.add(encode_bilinear(h, x) == encode_bilinear(h, y) ? 0.0 : 1.0);
           }
         })
      .estimate();
}

struct HammingBoundReport {
  double kappa_g_val = 0.0;
  double kappa_b_val = 0.0;
  double series_value = 0.0;
  double g1_lower = 0.0;
  double g2_upper = 0.0;
  std::optional<McEstimate> mc_estimate;
  int64_t series_terms_used = 0;
  double series_tail_bound = 0.0;
  AssumptionCheck assumptions;

  /// g1 <= series <= g2 with `slack` plus the truncation tail.
  bool lower_holds(double slack = 1e-10) const {
    return g1_lower <= series_value + series_tail_bound + slack;
  }
  bool upper_holds(double slack = 1e-10) const { return series_value <= g2_upper + slack; }
};

inline HammingBoundReport hamming_bound_report(const FeatureMatrix& x, const FeatureMatrix& y,
                                               double tol = 1e-6, std::optional<int64_t> mc_n = {},
                                               std::optional<RandomStream> rs = {}, unsigned threads = 1) {
  const DeltaSpectrum spec = delta_spectrum(x, y);
  HammingBoundReport r;
  r.kappa_g_val = kappa_g_from_sq(spec.frobenius_sq);
  r.kappa_b_val = kappa_b(spec);
  const SeriesResult s = expected_hamming_series(spec, tol);
  r.series_value = s.value;
  r.series_terms_used = s.terms_used;
  r.series_tail_bound = s.tail_bound;
  r.g1_lower = g1_bilinear(r.kappa_g_val);
  r.g2_upper = g2(r.kappa_g_val);
  r.assumptions = check_assumptions(x, y, spec);
  if (mc_n) {
    if (!rs) fail(ErrorKind::usage, "hamming_bound_report: Monte-Carlo check needs a random stream");
    r.mc_estimate = disagreement_mc(x, y, *mc_n, *rs, threads);
  }
  return r;
}

struct CovarianceBoundReport {
  double upper = 0.0;
  double lower = 0.0;
  std::optional<McEstimate> mc_estimate;
  int64_t terms_used = 0;

  bool envelope_holds(double radius = 4.0) const {
    if (!mc_estimate) return true;
    return mc_estimate->mean >= lower - radius * mc_estimate->std_err &&
           mc_estimate->mean <= upper + radius * mc_estimate->std_err;
  }
};

namespace detail {

/// sum_{m>=1} z^(e m^2) / (4m^2 - 1). Stops once the remaining tail, which is
/// at most z^(e (M+1)^2) / (4M + 2), is below tol * (partial + tol).
inline double power_series(double z, double e, double tol, int64_t& terms) {
  if (z >= 1.0) {  // every power is 1; the telescoping sum is exactly 1/2
    terms = 1;
    return 0.5;
  }
  if (z <= 0.0) {
    terms = 1;
    return 0.0;
  }
  const double log_z = std::log(z);
  double sum = 0.0;
  for (int64_t m = 1;; ++m) {
    sum += std::exp(e * static_cast<double>(m * m) * log_z) / static_cast<double>(4 * m * m - 1);
    const double next = std::exp(e * static_cast<double>((m + 1) * (m + 1)) * log_z);
    if (next / static_cast<double>(4 * m + 2) < tol * (sum + tol) || m >= 100000) {
      terms = m;
      return sum;
    }
  }
}

}  // namespace detail

/// Envelope on the covariance of two bits sharing w, as a function of kappa_g.
inline CovarianceBoundReport covariance_bounds_from_kappa(double kg, double tol = 1e-10) {
  detail::require_unit_interval(kg, "covariance_bounds");
  if (!(tol > 0.0)) fail(ErrorKind::usage, "covariance_bounds: tol must be positive");
  int64_t t_loose = 0, t_tight = 0;
  const double s_loose = detail::power_series(kg, kSandwichExponent, tol, t_loose);
  const double s_tight = detail::power_series(kg, 1.0, tol, t_tight);
  CovarianceBoundReport r;
  r.upper = kSixtyFourOverPi4 * (s_loose * s_loose - s_tight * s_tight);
  r.lower = kSixtyFourOverPi4 * (s_tight * s_tight - s_loose * s_loose);
  r.terms_used = std::max(t_loose, t_tight);
  return r;
}

inline CovarianceBoundReport covariance_bounds(const FeatureMatrix& x, const FeatureMatrix& y,
                                               double tol = 1e-10) {
  return covariance_bounds_from_kappa(kappa_g(x, y), tol);
}

/// The exact shared-w covariance as a double series in kappa_b, truncated at
/// `terms` in each index. Converges absolutely (c_m c_n ~ 1/(16 m^2 n^2)).
inline double covariance_series(const DeltaSpectrum& spec, int terms = 200) {
  std::vector<double> kb(static_cast<size_t>(terms) + 1);
  for (int m = 1; m <= terms; ++m) kb[static_cast<size_t>(m)] = kappa_b(spec, m);
  double sum = 0.0;
  for (int m = 1; m <= terms; ++m) {
    const double cm = 1.0 / (4.0 * m * m - 1.0);
    for (int n = 1; n <= terms; ++n) {
      const double cn = 1.0 / (4.0 * n * n - 1.0);
      const double joint = kappa_b(spec, std::sqrt(static_cast<double>(m * m + n * n)));
      sum += cm * cn * (joint - kb[static_cast<size_t>(m)] * kb[static_cast<size_t>(n)]);
    }
  }
  return kSixtyFourOverPi4 * sum;
}

enum class BitSharing { shared_w, disjoint };

/// Covariance of the disagreement indicators of two bits, estimated from
/// n_pairs independent draws of (w, v1, v2, b1, b2, t1, t2). With
/// BitSharing::disjoint the second bit gets its own w.
///
/// The estimate is the sample covariance; its standard error comes from the
/// delta method (influence function (I1 - p1)(I2 - p2) - cov).
inline McEstimate covariance_mc(const FeatureMatrix& x, const FeatureMatrix& y, int64_t n_pairs,
                                const RandomStream& rs, BitSharing sharing = BitSharing::shared_w,
                                unsigned threads = 1) {
  require_same_shape(x, y);
  if (n_pairs < 100) fail(ErrorKind::usage, "covariance_mc: need at least 100 pairs");
  const Eigen::Index dw = x.rows(), dv = x.cols();
  const auto blocks = static_cast<size_t>((n_pairs + kMcBlock - 1) / kMcBlock);
  std::vector<std::array<int64_t, 4>> counts(blocks, {0, 0, 0, 0});  // index = 2*I1 + I2
  parallel_for(blocks, threads, [&](size_t blk) {
    RandomStream sub = rs.substream(blk);
    const int64_t count = std::min(kMcBlock, n_pairs - static_cast<int64_t>(blk) * kMcBlock);
    for (int64_t i = 0; i < count; ++i) {
      const Eigen::VectorXd w1 = gaussian_vector(sub, dw);
      const Eigen::VectorXd w2 = sharing == BitSharing::shared_w ? w1 : gaussian_vector(sub, dw);
      const Eigen::VectorXd v1 = gaussian_vector(sub, dv);
      const Eigen::VectorXd v2 = gaussian_vector(sub, dv);
      const Eigen::VectorXd bt = uniform_vector(sub, 2, 0.0, 2.0 * std::numbers::pi);
      const Eigen::VectorXd tt = uniform_vector(sub, 2, -1.0, 1.0);
      const Eigen::RowVectorXd wx1 = w1.transpose() * x.mat(), wy1 = w1.transpose() * y.mat();
      const Eigen::RowVectorXd wx2 = w2.transpose() * x.mat(), wy2 = w2.transpose() * y.mat();
      const bool d1 = quantize(wx1.dot(v1), bt[0], tt[0]) != quantize(wy1.dot(v1), bt[0], tt[0]);
      const bool d2 = quantize(wx2.dot(v2), bt[1], tt[1]) != quantize(wy2.dot(v2), bt[1], tt[1]);
      ++counts[blk][2 * d1 + d2];
    }
  });
  std::array<int64_t, 4> total{0, 0, 0, 0};
  for (const auto& c : counts)
    for (int j = 0; j < 4; ++j) total[j] += c[j];

  const auto n = static_cast<double>(n_pairs);
  const double p1 = static_cast<double>(total[2] + total[3]) / n;
  const double p2 = static_cast<double>(total[1] + total[3]) / n;
  double cov_mle = 0.0;
  for (int j = 0; j < 4; ++j) cov_mle += static_cast<double>(total[j]) / n * ((j >> 1) - p1) * ((j & 1) - p2);
  double var_psi = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double psi = ((j >> 1) - p1) * ((j & 1) - p2) - cov_mle;
    var_psi += static_cast<double>(total[j]) / n * psi * psi;
  }
  return {cov_mle * n / (n - 1.0), std::sqrt(var_psi / n), n_pairs};
}

/// P_t{sgn(u + t) != sgn(v + t)} for t ~ Unif[-1, 1].
inline double quantizer_collision_prob(double u, double v) {
  if (!(u >= -1.0 && u <= 1.0 && v >= -1.0 && v <= 1.0)) {
    fail(ErrorKind::usage, "quantizer_collision_prob: arguments must lie in [-1, 1]");
  }
  return std::abs(u - v) / 2.0;
}

}  // namespace blsh
