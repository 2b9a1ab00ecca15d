#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "blsh/kernels.hpp"
#include "test_util.hpp"

using namespace blsh;
using blsh::testing::uniform_matrix;

namespace {

double determinant_oracle(const FeatureMatrix& x, const FeatureMatrix& y, double scale = 1.0) {
  const Eigen::MatrixXd d = (x.mat() - y.mat()) * scale;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d.rows(), d.rows()) + d * d.transpose();
  return 1.0 / std::sqrt(a.determinant());
}

}  // namespace

TEST(DeltaSpectrum, IdenticalInputsGiveZeroSpectrum) {
  RandomStream rs(1, 1);
  const FeatureMatrix x = uniform_matrix(rs, 4, 6);
  const DeltaSpectrum s = delta_spectrum(x, x);
  for (double l : s.eigenvalues) EXPECT_EQ(l, 0.0);
  EXPECT_EQ(s.frobenius_sq, 0.0);
  EXPECT_EQ(kappa_b(s), 1.0);
}

TEST(DeltaSpectrum, RankOneSingleRow) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 5);
  d.row(2) << 1, -2, 0, 2, 0;  // norm 3
  const DeltaSpectrum s = delta_spectrum(FeatureMatrix(d), FeatureMatrix(4, 5));
  ASSERT_EQ(s.eigenvalues.size(), 4u);
  EXPECT_NEAR(s.eigenvalues[0], 9.0, 1e-12);
  for (size_t i = 1; i < 4; ++i) EXPECT_NEAR(s.eigenvalues[i], 0.0, 1e-12);
}

TEST(DeltaSpectrum, TraceIdentityAndOrdering) {
  RandomStream rs(2, 2);
  for (int t = 0; t < 20; ++t) {
    const FeatureMatrix x = uniform_matrix(rs, 5, 7), y = uniform_matrix(rs, 5, 7);
    const DeltaSpectrum s = delta_spectrum(x, y);
    EXPECT_TRUE(std::is_sorted(s.eigenvalues.rbegin(), s.eigenvalues.rend()));
    const double dist_sq = (x.vec() - y.vec()).squaredNorm();
    EXPECT_NEAR(s.trace(), dist_sq, 1e-8 * dist_sq);
    EXPECT_NEAR(s.frobenius_sq, dist_sq, 1e-12 * dist_sq);
    for (double l : s.eigenvalues) EXPECT_GE(l, 0.0);
  }
}

TEST(DeltaSpectrum, UsesSmallerGramForTallInputs) {
  RandomStream rs(3, 3);
  const FeatureMatrix x = uniform_matrix(rs, 9, 3), y = uniform_matrix(rs, 9, 3);
  const DeltaSpectrum s = delta_spectrum(x, y);
  EXPECT_EQ(s.eigenvalues.size(), 3u);
  EXPECT_NEAR(kappa_b(s), determinant_oracle(x, y), 1e-12);
}

TEST(DeltaSpectrum, ShapeMismatch) {
  try {
    delta_spectrum(FeatureMatrix(2, 3), FeatureMatrix(3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(KappaG, Examples) {
  RandomStream rs(4, 4);
  const FeatureMatrix x = uniform_matrix(rs, 3, 3);
  EXPECT_EQ(kappa_g(x, x), 1.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d(0, 0) = 1.0;
  d(2, 1) = 1.0;  // squared distance 2
  const FeatureMatrix y(x.mat() + d);
  EXPECT_NEAR(kappa_g(x, y), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(kappa_g(x, y), 0.367879, 1e-6);
  EXPECT_NEAR(kappa_g(x, y, 2), std::pow(kappa_g(x, y), 4), 1e-15);
  EXPECT_NEAR(kappa_g(x, y, 3), std::pow(kappa_g(x, y), 9), 1e-15);
}

TEST(KappaB, ClosedFormExamples) {
  DeltaSpectrum zero{{0.0, 0.0, 0.0}, 0.0};
  EXPECT_EQ(kappa_b(zero), 1.0);
  DeltaSpectrum half{{0.5}, 0.5};
  EXPECT_NEAR(kappa_b(half), 1.0 / std::sqrt(1.5), 1e-15);
  EXPECT_NEAR(kappa_b(half), 0.816497, 1e-6);
  EXPECT_NEAR(kappa_b(half, 2.0), 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(KappaB, MatchesDeterminantOracle) {
  RandomStream rs(5, 5);
  for (int t = 0; t < 50; ++t) {
    const FeatureMatrix x = uniform_matrix(rs, 4, 4), y = uniform_matrix(rs, 4, 4);
    const DeltaSpectrum s = delta_spectrum(x, y);
    for (double scale : {1.0, std::sqrt(2.0), 3.0}) {
      const double oracle = determinant_oracle(x, y, scale);
      EXPECT_NEAR(kappa_b(s, scale), oracle, 1e-10 * oracle);
    }
  }
}

TEST(KappaB, NoUnderflowForLargeSpectra) {
  DeltaSpectrum big;
  big.eigenvalues.assign(4000, 1e3);
  big.frobenius_sq = 4e6;
  const double kb = kappa_b(big);
  EXPECT_EQ(kb, 0.0);  // true value exp(-13816), below the smallest double
  EXPECT_FALSE(std::isnan(kb));
  DeltaSpectrum mid;
  mid.eigenvalues.assign(600, 1.0);
  EXPECT_NEAR(std::log(kappa_b(mid)), -300 * std::log(2.0), 1e-9);
}

TEST(KappaB, PropertiesOverRandomInputs) {
  RandomStream rs(6, 6);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index r = 2 + t % 7, c = 2 + (t * 3) % 9;
    const FeatureMatrix x(gaussian_matrix(rs, r, c) * 0.3), y(gaussian_matrix(rs, r, c) * 0.3);
    const DeltaSpectrum s = delta_spectrum(x, y);
    const double kb = kappa_b(s);
    EXPECT_GE(kb, 0.0);
    EXPECT_LE(kb, 1.0);
    for (int m = 1; m < 6; ++m) EXPECT_LE(kappa_b(s, m + 1), kappa_b(s, m));  // non-increasing in scale
    EXPECT_LE(kappa_g(x, y), kb);                                            // unconditional lower half
    EXPECT_NEAR(kappa_b(delta_spectrum(y, x)), kb, 1e-14);                   // symmetry
  }
}

TEST(KappaB, SandwichWhenAssumptionsHold) {
  RandomStream rs(7, 7);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const FeatureMatrix x = blsh::testing::uniform_matrix_with_norm(rs, 20, 20, 0.8);
    const FeatureMatrix y = blsh::testing::uniform_matrix_with_norm(rs, 20, 20, 0.8);
    const DeltaSpectrum s = delta_spectrum(x, y);
    if (!check_assumptions(x, y, s).both()) continue;
    ++checked;
    const double kg = kappa_g(x, y), kb = kappa_b(s);
    EXPECT_LE(kg, kb + 1e-12);
    EXPECT_LE(kb, std::pow(kg, kSandwichExponent) + 1e-12);
  }
  EXPECT_GT(checked, 50);
}

TEST(CheckAssumptions, Examples) {
  const FeatureMatrix zero(3, 3);
  const AssumptionCheck z = check_assumptions(zero, zero);
  EXPECT_TRUE(z.frob_ok);
  EXPECT_TRUE(z.spectral_ok);

  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(3, 3);
  big(0, 0) = 0.9;
  EXPECT_FALSE(check_assumptions(FeatureMatrix(big), zero).frob_ok);

  Eigen::MatrixXd r1 = Eigen::MatrixXd::Zero(3, 3);
  r1.row(1) << 0.1, 0.2, 0.1;
  const AssumptionCheck rank_one = check_assumptions(FeatureMatrix(r1), zero);
  EXPECT_TRUE(rank_one.frob_ok);
  EXPECT_FALSE(rank_one.spectral_ok);
}

TEST(CheckAssumptions, FlatSpectrumPasses) {
  // Delta = c I has lambda_1 = c <= 0.28 (n - 1) c once n >= 5.
  const FeatureMatrix x(Eigen::MatrixXd::Identity(6, 6) * 0.1);
  EXPECT_TRUE(check_assumptions(x, FeatureMatrix(6, 6)).both());
  const FeatureMatrix small(Eigen::MatrixXd::Identity(4, 4) * 0.1);
  EXPECT_FALSE(check_assumptions(small, FeatureMatrix(4, 4)).spectral_ok);
}
