#pragma once

// Hash families and packed binary codes.
//
//   angle     bit = [w^T vec(X) >= 0]
//   single    bit = [cos(w^T vec(X) + b) + t >= 0]          W is d x k
//   bilinear  bit = [cos(w_r^T X v_c + b_j) + t_j >= 0]     W is d_w x s, V is d_v x s
//
// For the bilinear family s = m * sqrt(k). The full code has s^2 = m^2 k bits,
// laid out as vec(W^T X V) with column stacking, so full index j pairs
// w-column r = j % s with v-column c = j / s. A fixed random subset I of k
// indices is kept. sgn(0) counts as +1 everywhere.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "blsh/error.hpp"
#include "blsh/matrixio.hpp"
#include "blsh/parallel.hpp"
#include "blsh/randsrc.hpp"

namespace blsh {

class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(uint32_t k) : k_(k), words_((k + 63) / 64, 0) {}
  BinaryCode(uint32_t k, std::vector<uint64_t> words) : k_(k), words_(std::move(words)) {
    if (words_.size() != (k + 63) / 64) fail(ErrorKind::shape, "BinaryCode: word count does not match k");
    if (k % 64 && (words_.back() >> (k % 64))) fail(ErrorKind::io, "BinaryCode: padding bits must be zero");
  }

  uint32_t size() const noexcept { return k_; }
  std::span<const uint64_t> words() const noexcept { return words_; }

  bool get(uint32_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(uint32_t i, bool bit) {
    const uint64_t mask = uint64_t{1} << (i % 64);
    words_[i / 64] = bit ? (words_[i / 64] | mask) : (words_[i / 64] & ~mask);
  }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  uint32_t k_ = 0;
  std::vector<uint64_t> words_;
};

inline uint32_t hamming_words(std::span<const uint64_t> a, std::span<const uint64_t> b) {
  uint32_t d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += static_cast<uint32_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

/// Number of differing bits. Padding is always zero, so no mask is needed.
inline uint32_t hamming(const BinaryCode& a, const BinaryCode& b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::shape, "hamming: code lengths differ (" + std::to_string(a.size()) + " vs " +
                               std::to_string(b.size()) + ")");
  }
  return hamming_words(a.words(), b.words());
}

/// Contiguous table of equal-length codes, indexed by item id.
class CodeTable {
 public:
  CodeTable() = default;
  CodeTable(uint32_t k, size_t count) : k_(k), wpc_((k + 63) / 64), data_(count * wpc_, 0) {}

  uint32_t bits() const noexcept { return k_; }
  size_t size() const noexcept { return wpc_ ? data_.size() / wpc_ : 0; }
  size_t words_per_code() const noexcept { return wpc_; }
  std::span<const uint64_t> raw() const noexcept { return data_; }

  std::span<const uint64_t> words(size_t id) const { return {data_.data() + id * wpc_, wpc_}; }

  BinaryCode code(size_t id) const {
    auto w = words(id);
    return {k_, std::vector<uint64_t>(w.begin(), w.end())};
  }

  void set(size_t id, const BinaryCode& c) {
    if (c.size() != k_) fail(ErrorKind::shape, "CodeTable: code length mismatch");
    std::copy(c.words().begin(), c.words().end(), data_.begin() + static_cast<std::ptrdiff_t>(id * wpc_));
  }

  void push_back(const BinaryCode& c) {
    if (wpc_ == 0 && data_.empty()) {
      k_ = c.size();
      wpc_ = (k_ + 63) / 64;
    }
    data_.resize(data_.size() + wpc_);
    set(size() - 1, c);
  }

  uint32_t distance(size_t id, const BinaryCode& q) const {
    if (q.size() != k_) fail(ErrorKind::shape, "CodeTable: query code length mismatch");
    return hamming_words(words(id), q.words());
  }

  friend bool operator==(const CodeTable&, const CodeTable&) = default;

 private:
  uint32_t k_ = 0;
  size_t wpc_ = 0;
  std::vector<uint64_t> data_;
};

enum class SingleVariant { sik, angle };

struct SingleHasher {
  SingleVariant variant = SingleVariant::sik;
  Eigen::MatrixXd W;  // d x k, column j is w_j
  Eigen::VectorXd b;  // k phases in [0, 2pi); empty for angle
  Eigen::VectorXd t;  // k thresholds in [-1, 1); empty for angle

  Eigen::Index dim() const { return W.rows(); }
  uint32_t bits() const { return static_cast<uint32_t>(W.cols()); }
};

struct BilinearHasher {
  Eigen::MatrixXd W;           // d_w x side
  Eigen::MatrixXd V;           // d_v x side
  Eigen::VectorXd b;           // side^2 phases
  Eigen::VectorXd t;           // side^2 thresholds
  uint32_t m = 1;              // oversampling factor
  uint32_t k = 0;              // bits kept
  std::vector<uint32_t> subset;  // sorted, |subset| = k, entries < side^2

  Eigen::Index side() const { return W.cols(); }
  uint32_t full_bits() const { return static_cast<uint32_t>(side() * side()); }
  uint32_t bits() const { return k; }

  /// Projection columns behind kept bit i.
  uint32_t w_column(uint32_t i) const { return subset[i] % static_cast<uint32_t>(side()); }
  uint32_t v_column(uint32_t i) const { return subset[i] / static_cast<uint32_t>(side()); }
};

using Hasher = std::variant<SingleHasher, BilinearHasher>;

inline SingleHasher build_single(RandomStream& rs, Eigen::Index d, Eigen::Index k,
                                 SingleVariant variant = SingleVariant::sik) {
  if (d < 1 || k < 1) fail(ErrorKind::usage, "build_single: d and k must be >= 1");
  SingleHasher h;
  h.variant = variant;
  h.W = gaussian_matrix(rs, d, k);
  if (variant == SingleVariant::sik) {
    h.b = uniform_vector(rs, k, 0.0, 2.0 * std::numbers::pi);
    h.t = uniform_vector(rs, k, -1.0, 1.0);
  }
  return h;
}

inline bool quantize(double proj, double b, double t) { return std::cos(proj + b) + t >= 0.0; }

inline BinaryCode encode_projection(const SingleHasher& h, const Eigen::VectorXd& proj) {
  BinaryCode code(h.bits());
  for (uint32_t j = 0; j < h.bits(); ++j) {
    code.set(j, h.variant == SingleVariant::angle ? proj[j] >= 0.0 : quantize(proj[j], h.b[j], h.t[j]));
  }
  return code;
}

inline BinaryCode encode_single(const SingleHasher& h, const FeatureMatrix& x) {
  if (x.size() != h.dim()) {
    fail(ErrorKind::shape, "encode_single: item has " + std::to_string(x.size()) +
                               " entries, hasher expects " + std::to_string(h.dim()));
  }
  return encode_projection(h, h.W.transpose() * x.vec());
}

inline uint32_t isqrt_exact(uint32_t k, bool& exact) {
  auto r = static_cast<uint32_t>(std::llround(std::sqrt(static_cast<double>(k))));
  while (uint64_t{r} * r > k) --r;
  while (uint64_t{r + 1} * (r + 1) <= k) ++r;
  exact = uint64_t{r} * r == k;
  return r;
}

inline BilinearHasher build_bilinear(RandomStream& rs, Eigen::Index d_w, Eigen::Index d_v, uint32_t k,
                                     uint32_t m = 1) {
  if (d_w < 1 || d_v < 1) fail(ErrorKind::usage, "build_bilinear: d_w and d_v must be >= 1");
  if (m < 1) fail(ErrorKind::usage, "build_bilinear: m must be >= 1");
  if (k < 1) fail(ErrorKind::usage, "build_bilinear: k must be >= 1");
  bool exact = false;
  const uint32_t root = isqrt_exact(k, exact);
  if (!exact) {
    fail(ErrorKind::usage, "bilinear codes need a perfect-square k; " + std::to_string(k) +
                               " is not (nearest: " + std::to_string(root * root) + " or " +
                               std::to_string((root + 1) * (root + 1)) + ")");
  }
  BilinearHasher h;
  h.m = m;
  h.k = k;
  const Eigen::Index side = Eigen::Index{m} * root;
  h.W = gaussian_matrix(rs, d_w, side);
  h.V = gaussian_matrix(rs, d_v, side);
  h.b = uniform_vector(rs, side * side, 0.0, 2.0 * std::numbers::pi);
  h.t = uniform_vector(rs, side * side, -1.0, 1.0);
  h.subset = sample_subset(rs, static_cast<uint64_t>(side * side), k);
  return h;
}

/// Only the kept entries of W^T X V are formed: XV once, then one length-d_w
/// dot product per kept bit.
inline BinaryCode encode_bilinear(const BilinearHasher& h, const FeatureMatrix& x) {
  if (x.rows() != h.W.rows() || x.cols() != h.V.rows()) {
    fail(ErrorKind::shape, "encode_bilinear: item is " + std::to_string(x.rows()) + "x" +
                               std::to_string(x.cols()) + ", hasher expects " +
                               std::to_string(h.W.rows()) + "x" + std::to_string(h.V.rows()));
  }
  const Eigen::MatrixXd xv = x.mat() * h.V;
  BinaryCode code(h.k);
  for (uint32_t i = 0; i < h.k; ++i) {
    const uint32_t j = h.subset[i];
    const double proj = h.W.col(h.w_column(i)).dot(xv.col(h.v_column(i)));
    code.set(i, quantize(proj, h.b[j], h.t[j]));
  }
  return code;
}

inline uint32_t hasher_bits(const Hasher& h) {
  return std::visit([](const auto& v) { return v.bits(); }, h);
}

inline BinaryCode encode(const Hasher& h, const FeatureMatrix& x) {
  return std::visit(
      [&](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, SingleHasher>) return encode_single(v, x);
        else return encode_bilinear(v, x);
      },
      h);
}

/// Encodes every item; parallel over items, output order = item order.
inline CodeTable encode_all(const Hasher& h, const Dataset& ds, unsigned threads = 1) {
  CodeTable table(hasher_bits(h), ds.size());
  parallel_for(ds.size(), threads, [&](size_t i) { table.set(i, encode(h, ds.items[i])); });
  return table;
}

// Parameter storage (8-byte reals): W for the single family; W, V, b, t for
// the bilinear family.
inline uint64_t single_parameter_bytes(uint64_t d, uint64_t k) { return 8 * d * k; }

inline uint64_t bilinear_parameter_bytes(uint64_t d_w, uint64_t d_v, uint64_t k, uint64_t m) {
  bool exact = false;
  const uint64_t side = m * isqrt_exact(static_cast<uint32_t>(k), exact);
  if (!exact) fail(ErrorKind::usage, "bilinear_parameter_bytes: k must be a perfect square");
  return 8 * (side * (d_w + d_v) + 2 * m * m * k);
}

// ---------------------------------------------------------------------------
// Serialization. All integers and floats are little-endian.
//
//   hasher: "BLSHH" u8 version=1 u8 kind
//     kind 0/1 (single sik/angle): u32 d, u32 k, W (d*k, column-major), [b (k), t (k) for sik]
//     kind 2 (bilinear): u32 d_w, u32 d_v, u32 k, u32 m,
//                        W (d_w*side), V (d_v*side), b (side^2), t (side^2), I (k x u32)
//   codes:  "BLSHC" u32 count, u32 k, count * ceil(k/64) u64 words
// ---------------------------------------------------------------------------

namespace detail {

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) {
      fail(ErrorKind::io, path_ + ": truncated at byte offset " + std::to_string(bytes_.size()));
    }
  }
  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::string_view(reinterpret_cast<const char*>(bytes_.data() + pos_), magic.size()) != magic) {
      fail(ErrorKind::io, path_ + ": bad magic at byte offset " + std::to_string(pos_));
    }
    pos_ += magic.size();
  }
  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint32_t u32() {
    need(4);
    const uint32_t v = le32(bytes_.data() + pos_);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    const uint64_t v = le64(bytes_.data() + pos_);
    pos_ += 8;
    return v;
  }
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<size_t>(rows * cols) * 8);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(u64());
    return m;
  }
  Eigen::VectorXd vector(Eigen::Index n) { return matrix(n, 1); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string path_;
  size_t pos_ = 0;
};

inline void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

}  // namespace detail

inline std::string hasher_to_bytes(const Hasher& hasher) {
  std::string out = "BLSHH";
  out.push_back(1);
  if (const auto* h = std::get_if<SingleHasher>(&hasher)) {
    out.push_back(h->variant == SingleVariant::sik ? 0 : 1);
    detail::put_le32(out, static_cast<uint32_t>(h->dim()));
    detail::put_le32(out, h->bits());
    detail::put_matrix(out, h->W);
    if (h->variant == SingleVariant::sik) {
      detail::put_matrix(out, h->b);
      detail::put_matrix(out, h->t);
    }
  } else {
    const auto& b = std::get<BilinearHasher>(hasher);
    out.push_back(2);
    detail::put_le32(out, static_cast<uint32_t>(b.W.rows()));
    detail::put_le32(out, static_cast<uint32_t>(b.V.rows()));
    detail::put_le32(out, b.k);
    detail::put_le32(out, b.m);
    detail::put_matrix(out, b.W);
    detail::put_matrix(out, b.V);
    detail::put_matrix(out, b.b);
    detail::put_matrix(out, b.t);
    for (uint32_t idx : b.subset) detail::put_le32(out, idx);
  }
  return out;
}

inline Hasher hasher_from_bytes(const std::vector<unsigned char>& bytes, const std::string& path = "<memory>") {
  detail::ByteReader in(bytes, path);
  in.expect_magic("BLSHH");
  if (const uint8_t version = in.u8(); version != 1) {
    fail(ErrorKind::io, path + ": unsupported hasher version " + std::to_string(version));
  }
  const uint8_t kind = in.u8();
  if (kind == 0 || kind == 1) {
    SingleHasher h;
    h.variant = kind == 0 ? SingleVariant::sik : SingleVariant::angle;
    const uint32_t d = in.u32(), k = in.u32();
    h.W = in.matrix(d, k);
    if (h.variant == SingleVariant::sik) {
      h.b = in.vector(k);
      h.t = in.vector(k);
    }
    return h;
  }
  if (kind != 2) fail(ErrorKind::io, path + ": unknown hasher kind " + std::to_string(kind));
  BilinearHasher h;
  const uint32_t d_w = in.u32(), d_v = in.u32();
  h.k = in.u32();
  h.m = in.u32();
  bool exact = false;
  const Eigen::Index side = Eigen::Index{h.m} * isqrt_exact(h.k, exact);
  if (!exact || h.m == 0) fail(ErrorKind::io, path + ": corrupt bilinear header");
  h.W = in.matrix(d_w, side);
  h.V = in.matrix(d_v, side);
  h.b = in.vector(side * side);
  h.t = in.vector(side * side);
  h.subset.resize(h.k);
  for (auto& idx : h.subset) {
    idx = in.u32();
    if (idx >= side * side) fail(ErrorKind::io, path + ": subset index out of range");
  }
  return h;
}

inline void save_hasher(const std::string& path, const Hasher& h) { detail::write_file(path, hasher_to_bytes(h)); }

inline Hasher load_hasher(const std::string& path) { return hasher_from_bytes(detail::read_all(path), path); }

inline std::string codes_to_bytes(const CodeTable& table) {
  std::string out = "BLSHC";
  detail::put_le32(out, static_cast<uint32_t>(table.size()));
  detail::put_le32(out, table.bits());
  for (uint64_t w : table.raw()) detail::put_le64(out, w);
  return out;
}

inline CodeTable codes_from_bytes(const std::vector<unsigned char>& bytes, const std::string& path = "<memory>") {
  detail::ByteReader in(bytes, path);
  in.expect_magic("BLSHC");
  const uint32_t count = in.u32(), k = in.u32();
  CodeTable table(k, count);
  const size_t wpc = table.words_per_code();
  for (uint32_t i = 0; i < count; ++i) {
    std::vector<uint64_t> words(wpc);
    for (auto& w : words) w = in.u64();
    table.set(i, BinaryCode(k, std::move(words)));
  }
  return table;
}

inline void save_codes(const std::string& path, const CodeTable& t) { detail::write_file(path, codes_to_bytes(t)); }

inline CodeTable load_codes(const std::string& path) { return codes_from_bytes(detail::read_all(path), path); }

}  // namespace blsh
