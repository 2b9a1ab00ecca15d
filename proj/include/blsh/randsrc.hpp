#pragma once

// Counter-based random streams.
//
// Every random quantity is drawn from a RandomStream addressed by
// (seed, stream_id). The generator is Philox4x32-10: the 64-bit seed is the
// key and (stream_id, block counter) form the 128-bit counter, so any stream
// can be created independently of any other and parallel workers reproduce
// the serial output exactly.
//
// Stream id layout used across the library (see README):
//   hashers       build_* take a caller-provided stream
//   MC verifiers  block b of an estimator uses rs.substream(b)
//   eval          repetition r builds its hasher from (seed + r, kHasher)

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_set>
#include <vector>

#include "blsh/error.hpp"

namespace blsh {

namespace stream_ids {
inline constexpr uint64_t kQueries = 0x51;
inline constexpr uint64_t kHasher = 0x1000;
inline constexpr uint64_t kVerify = 0x2000;
inline constexpr uint64_t kCorrelation = 0x3000;
inline constexpr uint64_t kBench = 0x4000;
inline constexpr uint64_t kSynthetic = 0x5000;
}  // namespace stream_ids

/// One Philox4x32-10 block: 4 output words from a 128-bit counter and 64-bit key.
inline std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
  constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = uint64_t{kM0} * ctr[0];
    const uint64_t p1 = uint64_t{kM1} * ctr[2];
    ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<uint32_t>(p1),
           static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

class RandomStream {
 public:
  using result_type = uint64_t;

  RandomStream(uint64_t seed, uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

  uint64_t seed() const noexcept { return seed_; }
  uint64_t stream_id() const noexcept { return stream_id_; }

  /// A child stream whose id is a hash of (stream_id, index).
  RandomStream substream(uint64_t index) const {
    return {seed_, mix(stream_id_ ^ mix(index + 0x9E3779B97F4A7C15ull))};
  }

  static constexpr uint64_t min() { return 0; }
  static constexpr uint64_t max() { return ~uint64_t{0}; }

  uint64_t operator()() { return next_u64(); }

  uint64_t next_u64() {
    if (avail_ == 0) refill();
    return buffer_[2 - avail_--];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n), unbiased (Lemire's multiply-and-reject).
  uint64_t below(uint64_t n) {
    unsigned __int128 prod = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<uint64_t>(prod);
    if (low < n) {
      const uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        prod = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<uint64_t>(prod);
      }
    }
    return static_cast<uint64_t>(prod >> 64);
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  void refill() {
    const auto out = philox4x32_10(
        {static_cast<uint32_t>(counter_), static_cast<uint32_t>(counter_ >> 32),
         static_cast<uint32_t>(stream_id_), static_cast<uint32_t>(stream_id_ >> 32)},
        {static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)});
    ++counter_;
    buffer_[0] = uint64_t{out[0]} | (uint64_t{out[1]} << 32);
    buffer_[1] = uint64_t{out[2]} | (uint64_t{out[3]} << 32);
    avail_ = 2;
  }

  uint64_t seed_;
  uint64_t stream_id_;
  uint64_t counter_ = 0;
  std::array<uint64_t, 2> buffer_{};
  int avail_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. N(0,1) entries, filled column by column.
inline Eigen::MatrixXd gaussian_matrix(RandomStream& rs, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) fail(ErrorKind::usage, "gaussian_matrix: rows and cols must be >= 1");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rs.normal();
  return m;
}

inline Eigen::VectorXd gaussian_vector(RandomStream& rs, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rs.normal();
  return v;
}

/// i.i.d. Unif[lo, hi).
inline Eigen::VectorXd uniform_vector(RandomStream& rs, Eigen::Index n, double lo, double hi) {
  if (!(lo < hi)) fail(ErrorKind::usage, "uniform_vector: require lo < hi");
  if (n < 0) fail(ErrorKind::usage, "uniform_vector: negative length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x = lo + (hi - lo) * rs.uniform01();
    v[i] = x < hi ? x : std::nextafter(hi, lo);  // guard the open end against rounding
  }
  return v;
}

/// k distinct indices drawn uniformly without replacement from [0, universe),
/// returned sorted (Floyd's algorithm).
inline std::vector<uint32_t> sample_subset(RandomStream& rs, uint64_t universe, uint64_t k) {
  if (k < 1 || k > universe) {
    fail(ErrorKind::usage, "sample_subset: need 1 <= k <= universe (k=" + std::to_string(k) +
                               ", universe=" + std::to_string(universe) + ")");
  }
  if (universe > UINT32_MAX) fail(ErrorKind::usage, "sample_subset: universe exceeds 32-bit index range");
  std::vector<uint32_t> out;
  out.reserve(k);
  if (k == universe) {
    for (uint64_t i = 0; i < universe; ++i) out.push_back(static_cast<uint32_t>(i));
    return out;
  }
  std::unordered_set<uint64_t> chosen;
  chosen.reserve(k * 2);
  for (uint64_t j = universe - k; j < universe; ++j) {
    const uint64_t t = rs.below(j + 1);
    const uint64_t pick = chosen.insert(t).second ? t : j;
    if (pick == j) chosen.insert(j);
    out.push_back(static_cast<uint32_t>(pick));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace blsh
