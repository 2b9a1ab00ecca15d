#pragma once

// Random Fourier features and Monte-Carlo kernel estimators.
//
//   linear:   phi(x) = sqrt(2) cos(w^T vec(X) + b),   w ~ N(0, I_d)
//   bilinear: phi(X) = sqrt(2) cos(w^T X v + b),      w ~ N(0, I_dw), v ~ N(0, I_dv)
//
// with b ~ Unif[0, 2pi). E[phi(X) phi(Y)] is kappa_g for the linear map and
// kappa_b for the bilinear one.
//
// Estimators split their samples into fixed-size blocks; block i draws from
// rs.substream(i) and block statistics are merged in block order, so the
// result does not depend on the thread count.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "blsh/error.hpp"
#include "blsh/matrixio.hpp"
#include "blsh/parallel.hpp"
#include "blsh/randsrc.hpp"

namespace blsh {

enum class RffKind { linear, bilinear };

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;  // sample standard deviation / sqrt(n)
  int64_t n_samples = 0;

  /// |mean - expected| <= radius * std_err
  bool agrees_with(double expected, double radius = 4.0) const {
    return std::abs(mean - expected) <= radius * std_err;
  }
};

/// Welford accumulator with an order-deterministic merge.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  void merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n_ + o.n_);
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / total;
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / total;
    n_ += o.n_;
  }

  int64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

  McEstimate estimate() const {
    return {mean_, n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0, n_};
  }

 private:
  int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline constexpr int64_t kMcBlock = 1024;

/// Runs `n` samples in blocks of kMcBlock. fn(RandomStream&, count, RunningStats&)
/// draws `count` samples into the accumulator.
template <class Fn>
RunningStats run_blocks(int64_t n, const RandomStream& rs, unsigned threads, Fn&& fn) {
  const auto blocks = static_cast<size_t>((n + kMcBlock - 1) / kMcBlock);
  std::vector<RunningStats> partial(blocks);
  parallel_for(blocks, threads, [&](size_t b) {
    RandomStream sub = rs.substream(b);
    const int64_t begin = static_cast<int64_t>(b) * kMcBlock;
    fn(sub, std::min(kMcBlock, n - begin), partial[b]);
  });
  RunningStats total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

struct RffSample {
  RffKind kind = RffKind::bilinear;
  Eigen::VectorXd w;
  Eigen::VectorXd v;  // empty for linear
  double b = 0.0;
};

inline RffSample draw_rff_sample(RandomStream& rs, RffKind kind, Eigen::Index d_w, Eigen::Index d_v) {
  RffSample s;
  s.kind = kind;
  if (kind == RffKind::linear) {
    s.w = gaussian_vector(rs, d_w * d_v);
  } else {
    s.w = gaussian_vector(rs, d_w);
    s.v = gaussian_vector(rs, d_v);
  }
  s.b = uniform_vector(rs, 1, 0.0, 2.0 * std::numbers::pi)[0];
  return s;
}

/// sqrt(2) cos(projection + b), in [-sqrt(2), sqrt(2)].
inline double rff_eval(const RffSample& s, const FeatureMatrix& x) {
  double proj = 0.0;
  if (s.kind == RffKind::linear) {
    if (s.w.size() != x.size()) fail(ErrorKind::shape, "rff_eval: w length does not match vec(X)");
    proj = s.w.dot(x.vec());
  } else {
    if (s.w.size() != x.rows() || s.v.size() != x.cols()) {
      fail(ErrorKind::shape, "rff_eval: (w, v) lengths do not match X");
    }
    proj = s.w.dot(x.mat() * s.v);
  }
  return std::numbers::sqrt2 * std::cos(proj + s.b);
}

/// Sample mean of phi_i(X) phi_i(Y) over n independent features.
inline McEstimate estimate_kernel_mc(const FeatureMatrix& x, const FeatureMatrix& y, RffKind kind,
                                     int64_t n, const RandomStream& rs, unsigned threads = 1) {
  require_same_shape(x, y);
  if (n < 100) fail(ErrorKind::usage, "estimate_kernel_mc: need at least 100 samples");
  const Eigen::Index dw = x.rows(), dv = x.cols();
  return run_blocks(n, rs, threads, [&](RandomStream& sub, int64_t count, RunningStats& acc) {
           for (int64_t i = 0; i < count; ++i) {
             const RffSample s = draw_rff_sample(sub, kind, dw, dv);
             acc.add(rff_eval(s, x) * rff_eval(s, y));
           }
         })
      .estimate();
}

/// Sample mean of cos(m w^T D v1) cos(n w^T D v2), D = X - Y, with w shared
/// and v1, v2 independent. Its expectation is kappa_b at scale sqrt(m^2 + n^2).
inline McEstimate estimate_cross_term_mc(const FeatureMatrix& x, const FeatureMatrix& y, int m, int n,
                                         int64_t samples, const RandomStream& rs,
                                         unsigned threads = 1) {
  require_same_shape(x, y);
  if (m < 1 || n < 1) fail(ErrorKind::usage, "estimate_cross_term_mc: m and n must be >= 1");
  if (samples < 100) fail(ErrorKind::usage, "estimate_cross_term_mc: need at least 100 samples");
  const Eigen::MatrixXd d = x.mat() - y.mat();
  return run_blocks(samples, rs, threads, [&](RandomStream& sub, int64_t count, RunningStats& acc) {
           for (int64_t i = 0; i < count; ++i) {
             const Eigen::VectorXd w = gaussian_vector(sub, d.rows());
             const Eigen::VectorXd v1 = gaussian_vector(sub, d.cols());
             const Eigen::VectorXd v2 = gaussian_vector(sub, d.cols());
             const Eigen::VectorXd u = d.transpose() * w;
             acc.add(std::cos(m * u.dot(v1)) * std::cos(n * u.dot(v2)));
           }
         })
      .estimate();
}

}  // namespace blsh
