#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "blsh/bounds.hpp"
#include "blsh/hashers.hpp"
#include "test_util.hpp"

using namespace blsh;
using blsh::testing::TempDir;

namespace {

BinaryCode random_code(RandomStream& rs, uint32_t k) {
  BinaryCode c(k);
  for (uint32_t i = 0; i < k; ++i) c.set(i, rs.below(2));
  return c;
}

/// Full m^2 k-bit code formed pair by pair from explicit (w_r, v_c) columns.
std::vector<bool> explicit_full_code(const BilinearHasher& h, const FeatureMatrix& x) {
  const auto s = static_cast<uint32_t>(h.side());
  std::vector<bool> bits(s * s);
  for (uint32_t c = 0; c < s; ++c)
    for (uint32_t r = 0; r < s; ++r) {
      double proj = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) proj += h.W(i, r) * x.mat()(i, j) * h.V(j, c);
      const uint32_t idx = c * s + r;  // column-stacked vec(W^T X V)
      bits[idx] = std::cos(proj + h.b[idx]) + h.t[idx] >= 0.0;
    }
  return bits;
}

}  // namespace

TEST(BinaryCode, PackingAndPadding) {
  BinaryCode c(70);
  EXPECT_EQ(c.words().size(), 2u);
  c.set(69, true);
  c.set(0, true);
  EXPECT_TRUE(c.get(69));
  EXPECT_FALSE(c.get(68));
  c.set(69, false);
  EXPECT_FALSE(c.get(69));
  EXPECT_THROW(BinaryCode(3, {0xFFu}), Error);  // padding bits set
  EXPECT_THROW(BinaryCode(65, {0u}), Error);    // wrong word count
}

TEST(Hamming, Examples) {
  RandomStream rs(1, 1);
  const BinaryCode a = random_code(rs, 100);
  EXPECT_EQ(hamming(a, a), 0u);
  BinaryCode x(8), y(8);
  for (uint32_t i = 0; i < 8; ++i) x.set(i, i % 2), y.set(i, !(i % 2));
  EXPECT_EQ(hamming(x, y), 8u);
  for (int t = 0; t < 50; ++t) {
    const BinaryCode p = random_code(rs, 1 + t * 13), q = random_code(rs, 1 + t * 13);
    uint32_t naive = 0;
    for (uint32_t i = 0; i < p.size(); ++i) naive += p.get(i) != q.get(i);
    EXPECT_EQ(hamming(p, q), naive);
    EXPECT_EQ(hamming(q, p), naive);
  }
  EXPECT_THROW(hamming(BinaryCode(8), BinaryCode(9)), Error);
}

TEST(CodeTable, StoresAndCompares) {
  RandomStream rs(2, 2);
  CodeTable t(77, 5);
  std::vector<BinaryCode> codes;
  for (size_t i = 0; i < 5; ++i) {
    codes.push_back(random_code(rs, 77));
    t.set(i, codes.back());
  }
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(t.code(i), codes[i]);
    EXPECT_EQ(t.distance(i, codes[0]), hamming(codes[i], codes[0]));
  }
  CodeTable u;
  for (const auto& c : codes) u.push_back(c);
  EXPECT_EQ(t, u);
  EXPECT_THROW(t.set(0, BinaryCode(76)), Error);
}

TEST(BuildSingle, ShapesAndDeterminism) {
  RandomStream a(3, 3), b(3, 3);
  const SingleHasher h = build_single(a, 12, 7);
  EXPECT_EQ(h.W.rows(), 12);
  EXPECT_EQ(h.W.cols(), 7);
  EXPECT_EQ(h.b.size(), 7);
  EXPECT_EQ(h.t.size(), 7);
  const SingleHasher g = build_single(b, 12, 7);
  EXPECT_EQ(h.W, g.W);
  EXPECT_EQ(h.b, g.b);
  EXPECT_EQ(h.t, g.t);
  for (Eigen::Index j = 0; j < 7; ++j) {
    EXPECT_GE(h.b[j], 0.0);
    EXPECT_LT(h.b[j], 2 * std::numbers::pi);
    EXPECT_GE(h.t[j], -1.0);
    EXPECT_LT(h.t[j], 1.0);
  }
  RandomStream c(3, 4);
  const SingleHasher angle = build_single(c, 12, 7, SingleVariant::angle);
  EXPECT_EQ(angle.b.size(), 0);
}

TEST(EncodeSingle, ScalarHandOracle) {
  SingleHasher h;
  h.variant = SingleVariant::sik;
  h.W = Eigen::MatrixXd::Constant(1, 1, 2.0);
  h.b = Eigen::VectorXd::Constant(1, 0.5);
  h.t = Eigen::VectorXd::Constant(1, -0.3);
  Eigen::MatrixXd xm(1, 1);
  for (double xv : {-2.0, -0.4, 0.0, 0.3, 1.0, 2.5}) {
    xm(0, 0) = xv;
    const bool expected = std::cos(2.0 * xv + 0.5) - 0.3 >= 0.0;
    EXPECT_EQ(encode_single(h, FeatureMatrix(xm)).get(0), expected) << xv;
  }
}

TEST(EncodeSingle, AngleVariantAndTies) {
  RandomStream rs(4, 4);
  const SingleHasher h = build_single(rs, 6, 10, SingleVariant::angle);
  const FeatureMatrix w0 = FeatureMatrix::from_vec(h.W.col(0), 2, 3);
  EXPECT_TRUE(encode_single(h, w0).get(0));
  const BinaryCode zero = encode_single(h, FeatureMatrix(2, 3));  // every projection is 0, so sgn(0) = +1
  for (uint32_t i = 0; i < 10; ++i) EXPECT_TRUE(zero.get(i));
  EXPECT_THROW(encode_single(h, FeatureMatrix(3, 3)), Error);
}

TEST(EncodeSingle, AngleCollisionAtRightAngle) {
  RandomStream rs(5, 5);
  const SingleHasher h = build_single(rs, 2, 10000, SingleVariant::angle);
  Eigen::MatrixXd x(1, 2), y(1, 2);
  x << 1, 0;
  y << 0, 1;
  const BinaryCode cx = encode_single(h, FeatureMatrix(x)), cy = encode_single(h, FeatureMatrix(y));
  const double agree = 1.0 - hamming(cx, cy) / 10000.0;
  EXPECT_NEAR(agree, 0.5, 4 * std::sqrt(0.25 / 10000));
}

TEST(BuildBilinear, ShapesAndSubset) {
  RandomStream rs(6, 6);
  const BilinearHasher h1 = build_bilinear(rs, 5, 7, 9, 1);
  EXPECT_EQ(h1.W.rows(), 5);
  EXPECT_EQ(h1.W.cols(), 3);
  EXPECT_EQ(h1.V.rows(), 7);
  EXPECT_EQ(h1.V.cols(), 3);
  EXPECT_EQ(h1.b.size(), 9);
  EXPECT_EQ(h1.t.size(), 9);
  for (uint32_t i = 0; i < 9; ++i) EXPECT_EQ(h1.subset[i], i);

  const BilinearHasher h3 = build_bilinear(rs, 5, 7, 16, 3);
  EXPECT_EQ(h3.W.cols(), 12);
  EXPECT_EQ(h3.b.size(), 144);
  EXPECT_EQ(h3.subset.size(), 16u);
  EXPECT_EQ(std::set<uint32_t>(h3.subset.begin(), h3.subset.end()).size(), 16u);
  EXPECT_LT(h3.subset.back(), 144u);
  EXPECT_EQ(h3.bits(), 16u);
  EXPECT_EQ(h3.full_bits(), 144u);
}

TEST(BuildBilinear, Determinism) {
  RandomStream a(7, 7), b(7, 7);
  const BilinearHasher x = build_bilinear(a, 4, 4, 25, 2), y = build_bilinear(b, 4, 4, 25, 2);
  EXPECT_EQ(x.W, y.W);
  EXPECT_EQ(x.V, y.V);
  EXPECT_EQ(x.b, y.b);
  EXPECT_EQ(x.t, y.t);
  EXPECT_EQ(x.subset, y.subset);
}

TEST(BuildBilinear, NonSquareKSuggestsNeighbors) {
  RandomStream rs(8, 8);
  try {
    build_bilinear(rs, 4, 4, 1000, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
    EXPECT_NE(std::string(e.what()).find("961 or 1024"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_bilinear(rs, 4, 4, 16, 0), Error);
}

TEST(BilinearHasher, ColumnMapMatchesIndexArithmetic) {
  RandomStream rs(9, 9);
  const BilinearHasher h = build_bilinear(rs, 3, 3, 16, 3);
  const uint32_t s = 12;
  for (uint32_t i = 0; i < h.k; ++i) {
    const uint32_t j = h.subset[i];
    EXPECT_EQ(h.w_column(i), j % s);
    EXPECT_EQ(h.v_column(i), j / s);
    EXPECT_EQ(h.v_column(i) * s + h.w_column(i), j);
  }
  // m = 1: bits i and i' share a w-column iff i = i' mod sqrt(k).
  const BilinearHasher g = build_bilinear(rs, 3, 3, 16, 1);
  for (uint32_t a = 0; a < 16; ++a)
    for (uint32_t b = 0; b < 16; ++b) {
      EXPECT_EQ(g.w_column(a) == g.w_column(b), a % 4 == b % 4);
      EXPECT_EQ(g.v_column(a) == g.v_column(b), a / 4 == b / 4);
    }
}

TEST(EncodeBilinear, ZeroInputUsesOnlyPhaseAndThreshold) {
  RandomStream rs(10, 10);
  const BilinearHasher h = build_bilinear(rs, 4, 5, 36, 2);
  const BinaryCode c = encode_bilinear(h, FeatureMatrix(4, 5));
  for (uint32_t i = 0; i < h.k; ++i) {
    const uint32_t j = h.subset[i];
    EXPECT_EQ(c.get(i), std::cos(h.b[j]) + h.t[j] >= 0.0);
  }
}

TEST(EncodeBilinear, MatchesExplicitOuterProductOracle) {
  RandomStream rs(11, 11);
  for (uint32_t m : {1u, 2u, 3u}) {
    const BilinearHasher h = build_bilinear(rs, 2, 2, 4, m);
    for (int t = 0; t < 20; ++t) {
      const FeatureMatrix x(gaussian_matrix(rs, 2, 2));
      const std::vector<bool> full = explicit_full_code(h, x);
      const BinaryCode c = encode_bilinear(h, x);
      for (uint32_t i = 0; i < h.k; ++i) EXPECT_EQ(c.get(i), full[h.subset[i]]);
    }
  }
  // Matrix-product form with a non-square item
  const BilinearHasher g = build_bilinear(rs, 3, 5, 9, 1);
  const FeatureMatrix x(gaussian_matrix(rs, 3, 5));
  const Eigen::MatrixXd p = g.W.transpose() * x.mat() * g.V;
  const Eigen::Map<const Eigen::VectorXd> vec_p(p.data(), p.size());
  const BinaryCode c = encode_bilinear(g, x);
  for (uint32_t j = 0; j < 9; ++j) EXPECT_EQ(c.get(j), std::cos(vec_p[j] + g.b[j]) + g.t[j] >= 0.0);
  EXPECT_THROW(encode_bilinear(g, FeatureMatrix(5, 3)), Error);
}

TEST(EncodeBilinear, DisagreementMatchesSeries) {
  RandomStream rs(12, 12);
  const FeatureMatrix x = blsh::testing::uniform_matrix_with_norm(rs, 6, 6, 0.8);
  const FeatureMatrix y = blsh::testing::uniform_matrix_with_norm(rs, 6, 6, 0.8);
  const double p = expected_hamming_series(delta_spectrum(x, y)).value;
  int diff = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const BilinearHasher h = build_bilinear(rs, 6, 6, 1, 1);
    diff += encode_bilinear(h, x) != encode_bilinear(h, y);
  }
  EXPECT_NEAR(diff / double(n), p, 4 * std::sqrt(p * (1 - p) / n));
}

TEST(EncodeAll, ParallelMatchesSerial) {
  RandomStream rs(13, 13);
  Dataset ds;
  for (int i = 0; i < 40; ++i) ds.push_back(FeatureMatrix(gaussian_matrix(rs, 4, 4)));
  const Hasher h = build_bilinear(rs, 4, 4, 25, 2);
  EXPECT_EQ(encode_all(h, ds, 1), encode_all(h, ds, 3));
}

TEST(ParameterBytes, ExactFormulas) {
  EXPECT_EQ(single_parameter_bytes(784, 400), 8u * 784 * 400);
  EXPECT_EQ(bilinear_parameter_bytes(28, 28, 400, 1), 8u * (20 * 56 + 2 * 400));
  EXPECT_EQ(bilinear_parameter_bytes(28, 28, 400, 5), 8u * (100 * 56 + 2 * 25 * 400));
  RandomStream rs(14, 14);
  const BilinearHasher h = build_bilinear(rs, 6, 5, 16, 2);
  const uint64_t fields = h.W.size() + h.V.size() + h.b.size() + h.t.size();
  EXPECT_EQ(bilinear_parameter_bytes(6, 5, 16, 2), 8 * fields);
  const double ratio = double(bilinear_parameter_bytes(250, 256, 40000, 1)) / double(single_parameter_bytes(64000, 40000));
  EXPECT_LT(ratio, 0.01);
}

TEST(Serialization, HasherAndCodesRoundTrip) {
  TempDir dir("ser");
  RandomStream rs(15, 15);
  const Hasher hb = build_bilinear(rs, 4, 6, 25, 3);
  const Hasher hs = build_single(rs, 24, 13, SingleVariant::sik);
  const Hasher ha = build_single(rs, 24, 13, SingleVariant::angle);
  Dataset ds;
  for (int i = 0; i < 10; ++i) ds.push_back(FeatureMatrix(gaussian_matrix(rs, 4, 6)));
  for (const Hasher* h : {&hb, &hs, &ha}) {
    save_hasher(dir.file("h.bin"), *h);
    const Hasher back = load_hasher(dir.file("h.bin"));
    EXPECT_EQ(back.index(), h->index());
    const CodeTable codes = encode_all(*h, ds);
    EXPECT_EQ(encode_all(back, ds), codes);
    EXPECT_EQ(hasher_to_bytes(back), hasher_to_bytes(*h));
    save_codes(dir.file("c.bin"), codes);
    EXPECT_EQ(load_codes(dir.file("c.bin")), codes);
  }
  blsh::testing::write_string(dir.file("bad.bin"), "BLSHX");
  EXPECT_THROW(load_hasher(dir.file("bad.bin")), Error);
  EXPECT_THROW(load_codes(dir.file("bad.bin")), Error);
}
