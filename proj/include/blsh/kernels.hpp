#pragma once

// Closed forms of the Gaussian kernel and the bilinear kernel.
//
// The bilinear kernel of a displacement D = X - Y is
//     kappa_b(s D) = prod_j (1 + s^2 lambda_j)^(-1/2),
// where lambda_j are the eigenvalues of D D^T. It is the exact expectation of
// the product of two bilinear random Fourier features, and it is bracketed by
//     kappa_g <= kappa_b <= kappa_g^0.79
// whenever both items have Frobenius norm <= 0.8 and the leading eigenvalue
// is at most 0.28 times the sum of the others. The left inequality needs no
// assumption (1 + x <= e^x).

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "blsh/error.hpp"
#include "blsh/matrixio.hpp"

namespace blsh {

inline constexpr double kFrobeniusLimit = 0.8;
inline constexpr double kSpectralRatio = 0.28;
inline constexpr double kSandwichExponent = 0.79;

struct DeltaSpectrum {
  std::vector<double> eigenvalues;  // descending, nonnegative
  double frobenius_sq = 0.0;        // ||X - Y||_F^2

  double leading() const { return eigenvalues.empty() ? 0.0 : eigenvalues.front(); }
  double trace() const { return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0); }
};

/// Spectrum of an arbitrary displacement matrix D.
///
/// Uses whichever of D D^T and D^T D is smaller; both have the same nonzero
/// eigenvalues. Tiny negative round-off eigenvalues (above -1e-10 * lambda_1)
/// are clamped to zero.
inline DeltaSpectrum displacement_spectrum(const Eigen::MatrixXd& d) {
  const Eigen::MatrixXd gram = d.rows() <= d.cols() ? Eigen::MatrixXd(d * d.transpose())
                                                    : Eigen::MatrixXd(d.transpose() * d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "symmetric eigen-solver did not converge");

  DeltaSpectrum out;
  out.frobenius_sq = d.squaredNorm();
  const auto& ev = solver.eigenvalues();  // ascending
  out.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::reverse(out.eigenvalues.begin(), out.eigenvalues.end());
  const double floor = -1e-10 * std::max(out.eigenvalues.front(), 0.0);
  for (double& l : out.eigenvalues) {
    if (l < 0.0) {
      if (l < floor) fail(ErrorKind::numeric, "Gram matrix has a significantly negative eigenvalue");
      l = 0.0;
    }
  }
  return out;
}

inline DeltaSpectrum delta_spectrum(const FeatureMatrix& x, const FeatureMatrix& y) {
  require_same_shape(x, y);
  return displacement_spectrum(x.mat() - y.mat());
}

/// exp(-s^2 ||vec(X - Y)||^2 / 2), given the squared distance.
inline double kappa_g_from_sq(double dist_sq, double scale = 1.0) {
  return std::exp(-0.5 * scale * scale * dist_sq);
}

/// Gaussian kernel of unit bandwidth at displacement m (X - Y).
/// Equals kappa_g(X, Y)^(m^2).
inline double kappa_g(const FeatureMatrix& x, const FeatureMatrix& y, int m = 1) {
  require_same_shape(x, y);
  if (m < 1) fail(ErrorKind::usage, "kappa_g: m must be a positive integer");
  return kappa_g_from_sq((x.mat() - y.mat()).squaredNorm(), m);
}

/// Bilinear kernel at displacement scale * (X - Y), evaluated in the log domain.
inline double kappa_b(const DeltaSpectrum& spec, double scale = 1.0) {
  const double s2 = scale * scale;
  double log_sum = 0.0;
  for (double l : spec.eigenvalues) log_sum += std::log1p(s2 * l);
  return std::exp(-0.5 * log_sum);
}

struct AssumptionCheck {
  bool frob_ok = false;
  bool spectral_ok = false;

  bool both() const { return frob_ok && spectral_ok; }
};

/// lambda_1 <= 0.28 * sum_{i >= 2} lambda_i. The all-zero spectrum passes.
inline bool spectral_condition(const DeltaSpectrum& spec) {
  if (spec.eigenvalues.empty()) return true;
  const double rest = spec.trace() - spec.leading();
  return spec.leading() <= kSpectralRatio * rest;
}

inline AssumptionCheck check_assumptions(const FeatureMatrix& x, const FeatureMatrix& y,
                                         const DeltaSpectrum& spec) {
  require_same_shape(x, y);
  // A dataset rescaled to exactly 0.8 may land one ulp above it.
  constexpr double limit = kFrobeniusLimit * (1.0 + 1e-12);
  return {x.frobenius() <= limit && y.frobenius() <= limit, spectral_condition(spec)};
}

inline AssumptionCheck check_assumptions(const FeatureMatrix& x, const FeatureMatrix& y) {
  return check_assumptions(x, y, delta_spectrum(x, y));
}

}  // namespace blsh
