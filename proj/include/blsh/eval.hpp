#pragma once

// Retrieval evaluation: ground truth by linear scan, Hamming ranking,
// precision-recall curves, empirical bit correlation and encode benchmarks.

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#if __has_include(<malloc.h>)
#include <malloc.h>
#if defined(__GLIBC__) && (__GLIBC__ > 2 || (__GLIBC__ == 2 && __GLIBC_MINOR__ >= 33))
#define BLSH_HAVE_MALLINFO2 1
#endif
#endif

#include "blsh/bounds.hpp"
#include "blsh/error.hpp"
#include "blsh/hashers.hpp"
#include "blsh/kernels.hpp"
#include "blsh/matrixio.hpp"
#include "blsh/parallel.hpp"
#include "blsh/randsrc.hpp"

namespace blsh {

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct GroundTruth {
  std::vector<uint32_t> query_ids;                  // retained queries, ascending
  std::vector<std::vector<uint32_t>> neighbor_sets;  // parallel to query_ids, ascending ids
  std::vector<uint32_t> excluded_queries;           // more than max_neighbors neighbors
  double threshold = 1.0;                           // after rescaling
  double raw_threshold = 0.0;                       // mean kth-NN distance before rescaling
  double scale_factor = 1.0;                        // applied to the dataset
};

/// Items as columns of a d x N matrix (column i = vec(item i)).
inline Eigen::MatrixXd stack_columns(const Dataset& ds) {
  Eigen::MatrixXd out(ds.rows() * ds.cols(), static_cast<Eigen::Index>(ds.size()));
  for (size_t i = 0; i < ds.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = ds.items[i].vec();
  return out;
}

/// Queries are sampled from the database. The threshold is the mean over
/// queries of the distance to the kth nearest other item; the dataset is
/// scaled by 1/threshold so the threshold becomes 1, and an item is a
/// neighbor when its distance is strictly below 1. Queries with more than
/// max_neighbors neighbors are dropped.
///
/// Degenerate case: if the threshold is 0 (duplicated items) the data is left
/// unscaled and neighbors are the items at distance 0.
inline std::pair<GroundTruth, Dataset> build_ground_truth(const Dataset& ds, uint32_t n_queries, uint32_t kth,
                                                          uint32_t max_neighbors, RandomStream& rs,
                                                          unsigned threads = 1) {
  if (n_queries < 1) fail(ErrorKind::usage, "build_ground_truth: need at least one query");
  if (kth < 1) fail(ErrorKind::usage, "build_ground_truth: kth must be >= 1");
  if (ds.size() < size_t{kth} + 1) {
    fail(ErrorKind::usage, "build_ground_truth: dataset has " + std::to_string(ds.size()) +
                               " items, need at least kth+1 = " + std::to_string(kth + 1));
  }
  if (n_queries > ds.size()) fail(ErrorKind::usage, "build_ground_truth: more queries than items");

  const std::vector<uint32_t> queries = sample_subset(rs, ds.size(), n_queries);
  const Eigen::MatrixXd data = stack_columns(ds);

  std::vector<Eigen::VectorXd> dist_sq(queries.size());
  std::vector<double> kth_dist(queries.size());
  parallel_for(queries.size(), threads, [&](size_t qi) {
    const uint32_t q = queries[qi];
    dist_sq[qi] = (data.colwise() - data.col(q)).colwise().squaredNorm().transpose();
    std::vector<double> others;
    others.reserve(ds.size() - 1);
    for (Eigen::Index i = 0; i < dist_sq[qi].size(); ++i)
      if (i != q) others.push_back(dist_sq[qi][i]);
    std::nth_element(others.begin(), others.begin() + (kth - 1), others.end());
    kth_dist[qi] = std::sqrt(others[kth - 1]);
  });

  GroundTruth gt;
  gt.raw_threshold = std::accumulate(kth_dist.begin(), kth_dist.end(), 0.0) / static_cast<double>(queries.size());
  const bool degenerate = gt.raw_threshold == 0.0;
  gt.scale_factor = degenerate ? 1.0 : 1.0 / gt.raw_threshold;
  gt.threshold = degenerate ? 0.0 : 1.0;
  Dataset scaled = degenerate ? ds : scale(ds, gt.scale_factor);

  const double f2 = gt.scale_factor * gt.scale_factor;
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    std::vector<uint32_t> nbrs;
    for (Eigen::Index i = 0; i < dist_sq[qi].size(); ++i) {
      if (i == queries[qi]) continue;
      const double d2 = dist_sq[qi][i] * f2;
      if (degenerate ? d2 == 0.0 : d2 < 1.0) nbrs.push_back(static_cast<uint32_t>(i));
    }
    if (nbrs.size() > max_neighbors) {
      gt.excluded_queries.push_back(queries[qi]);
    } else {
      gt.query_ids.push_back(queries[qi]);
      gt.neighbor_sets.push_back(std::move(nbrs));
    }
  }
  return {std::move(gt), std::move(scaled)};
}

// ---------------------------------------------------------------------------
// Ranking and precision-recall
// ---------------------------------------------------------------------------

/// Hamming distances from q to every code, by id.
inline std::vector<uint32_t> hamming_distances(const CodeTable& codes, const BinaryCode& q) {
  if (q.size() != codes.bits()) {
    fail(ErrorKind::shape, "code length mismatch: table has " + std::to_string(codes.bits()) +
                               " bits, query has " + std::to_string(q.size()));
  }
  std::vector<uint32_t> d(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) d[i] = hamming_words(codes.words(i), q.words());
  return d;
}

/// Ids by ascending Hamming distance, ties by ascending id (counting sort).
inline std::vector<uint32_t> hamming_rank(const CodeTable& codes, const BinaryCode& q) {
  const auto dist = hamming_distances(codes, q);
  std::vector<uint32_t> start(codes.bits() + 2, 0);
  for (uint32_t d : dist) ++start[d + 1];
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<uint32_t> order(dist.size());
  for (uint32_t i = 0; i < dist.size(); ++i) order[start[dist[i]]++] = i;
  return order;
}

enum class PrSweep { rank, radius };

struct PrPoint {
  double cutoff = 0.0;  // items retrieved (rank) or Hamming radius (radius)
  double recall = 0.0;
  double precision = 1.0;
  double recall_std = 0.0;
  double precision_std = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  bool mean_over_queries = true;
  bool has_band = false;      // *_std fields filled from repetitions
  size_t queries_used = 0;
  size_t queries_skipped = 0;  // empty ground-truth sets
};

/// 0 followed by ~`count` geometrically spaced rank cutoffs in [1, n].
inline std::vector<uint32_t> default_rank_cutoffs(uint32_t n, int count = 60) {
  std::vector<uint32_t> out{0};
  for (int i = 0; i < count; ++i) {
    const double x = std::pow(static_cast<double>(n), static_cast<double>(i) / (count - 1));
    const auto c = static_cast<uint32_t>(std::llround(x));
    if (c >= 1 && c <= n && c != out.back()) out.push_back(c);
  }
  if (out.back() != n) out.push_back(n);
  return out;
}

/// Mean precision/recall over the retained queries. `query_codes[i]` is the
/// code of gt.query_ids[i]; each query's own id is never retrieved. A cutoff
/// that retrieves nothing has precision 1 and recall 0. Queries with an
/// empty ground-truth set are skipped and counted in queries_skipped.
inline PrCurve pr_curve(const GroundTruth& gt, const CodeTable& codes, const CodeTable& query_codes,
                        PrSweep sweep = PrSweep::rank, std::vector<uint32_t> cutoffs = {}) {
  if (query_codes.size() != gt.query_ids.size()) {
    fail(ErrorKind::shape, "pr_curve: one query code per retained query is required");
  }
  if (query_codes.bits() != codes.bits()) fail(ErrorKind::shape, "pr_curve: code length mismatch");
  const auto n_candidates = static_cast<uint32_t>(codes.size() - 1);
  if (cutoffs.empty()) {
    if (sweep == PrSweep::rank) {
      cutoffs = default_rank_cutoffs(n_candidates);
    } else {
      cutoffs.resize(codes.bits() + 1);
      std::iota(cutoffs.begin(), cutoffs.end(), 0u);
    }
  }

  PrCurve curve;
  curve.points.resize(cutoffs.size());
  for (size_t c = 0; c < cutoffs.size(); ++c) {
    curve.points[c].cutoff = cutoffs[c];
    curve.points[c].precision = 0.0;
  }
  std::vector<char> is_gt(codes.size(), 0);
  for (size_t qi = 0; qi < gt.query_ids.size(); ++qi) {
    const auto& nbrs = gt.neighbor_sets[qi];
    if (nbrs.empty()) {
      ++curve.queries_skipped;
      continue;
    }
    ++curve.queries_used;
    const uint32_t self = gt.query_ids[qi];
    for (uint32_t id : nbrs) is_gt[id] = 1;
    const double n_gt = static_cast<double>(nbrs.size());
    const BinaryCode q = query_codes.code(qi);

    if (sweep == PrSweep::rank) {
      const auto order = hamming_rank(codes, q);
      size_t pos = 0, retrieved = 0, hits = 0;
      for (size_t c = 0; c < cutoffs.size(); ++c) {
        const size_t target = std::min<size_t>(cutoffs[c], n_candidates);
        while (retrieved < target) {
          const uint32_t id = order[pos++];
          if (id == self) continue;
          ++retrieved;
          hits += is_gt[id];
        }
        curve.points[c].recall += static_cast<double>(hits) / n_gt;
        curve.points[c].precision += retrieved ? static_cast<double>(hits) / static_cast<double>(retrieved) : 1.0;
      }
    } else {
      const auto dist = hamming_distances(codes, q);
      std::vector<uint32_t> all_at(codes.bits() + 1, 0), gt_at(codes.bits() + 1, 0);
      for (size_t i = 0; i < dist.size(); ++i) {
        if (i == self) continue;
        ++all_at[dist[i]];
        gt_at[dist[i]] += is_gt[i];
      }
      size_t retrieved = 0, hits = 0;
      uint32_t r = 0;
      for (size_t c = 0; c < cutoffs.size(); ++c) {
        for (; r <= std::min(cutoffs[c], codes.bits()); ++r) {
          retrieved += all_at[r];
          hits += gt_at[r];
        }
        curve.points[c].recall += static_cast<double>(hits) / n_gt;
        curve.points[c].precision += retrieved ? static_cast<double>(hits) / static_cast<double>(retrieved) : 1.0;
      }
    }
    for (uint32_t id : nbrs) is_gt[id] = 0;
  }
  if (curve.queries_used == 0) fail(ErrorKind::io, "pr_curve: no query has a non-empty ground-truth set");
  const auto nq = static_cast<double>(curve.queries_used);
  for (auto& p : curve.points) {
    p.recall /= nq;
    p.precision /= nq;
  }
  return curve;
}

/// Point-wise mean and sample standard deviation over repetitions with
/// identical cutoffs.
inline PrCurve aggregate_curves(const std::vector<PrCurve>& runs) {
  if (runs.empty()) fail(ErrorKind::usage, "aggregate_curves: no runs");
  PrCurve out = runs.front();
  out.has_band = runs.size() > 1;
  const auto n = static_cast<double>(runs.size());
  for (size_t c = 0; c < out.points.size(); ++c) {
    double sr = 0, sp = 0;
    for (const auto& r : runs) {
      if (r.points.size() != out.points.size()) fail(ErrorKind::shape, "aggregate_curves: cutoff grids differ");
      sr += r.points[c].recall;
      sp += r.points[c].precision;
    }
    const double mr = sr / n, mp = sp / n;
    double vr = 0, vp = 0;
    for (const auto& r : runs) {
      vr += (r.points[c].recall - mr) * (r.points[c].recall - mr);
      vp += (r.points[c].precision - mp) * (r.points[c].precision - mp);
    }
    out.points[c].recall = mr;
    out.points[c].precision = mp;
    out.points[c].recall_std = runs.size() > 1 ? std::sqrt(vr / (n - 1)) : 0.0;
    out.points[c].precision_std = runs.size() > 1 ? std::sqrt(vp / (n - 1)) : 0.0;
  }
  return out;
}

/// Trapezoidal area under precision as a function of recall. A curve whose
/// first point has positive recall is extended flat to recall 0.
inline double area_under_pr(const PrCurve& curve) {
  if (curve.points.empty()) return 0.0;
  double area = curve.points.front().recall * curve.points.front().precision;
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.recall - a.recall) * 0.5 * (a.precision + b.precision);
  }
  return area;
}

struct AreaSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over repetitions
};

inline AreaSummary area_summary(const std::vector<PrCurve>& runs) {
  AreaSummary s;
  for (const auto& r : runs) s.mean += area_under_pr(r);
  s.mean /= static_cast<double>(runs.size());
  if (runs.size() > 1) {
    for (const auto& r : runs) s.std += std::pow(area_under_pr(r) - s.mean, 2);
    s.std = std::sqrt(s.std / static_cast<double>(runs.size() - 1));
  }
  return s;
}

/// sqrt((a^2 + b^2) / 2): the pooled standard deviation of two equal-size groups.
inline double pooled_std(const AreaSummary& a, const AreaSummary& b) {
  return std::sqrt(0.5 * (a.std * a.std + b.std * b.std));
}

// ---------------------------------------------------------------------------
// Bit correlation
// ---------------------------------------------------------------------------

enum class BitGroup { shared_w, shared_v, disjoint, all };

inline const char* to_string(BitGroup g) {
  switch (g) {
    case BitGroup::shared_w: return "shared_w";
    case BitGroup::shared_v: return "shared_v";
    case BitGroup::disjoint: return "disjoint";
    case BitGroup::all: return "all";
  }
  return "?";
}

struct GroupCorrelation {
  BitGroup group = BitGroup::all;
  double mean_abs_corr = 0.0;  // |mean over data pairs of the correlation|
  double std_err = 0.0;
  double pair_fraction = 0.0;  // share of ordered bit pairs in this group
};

struct CorrelationSummary {
  std::vector<GroupCorrelation> groups;  // shared_w, shared_v, disjoint, all
  size_t data_pairs = 0;

  const GroupCorrelation& operator[](BitGroup g) const { return groups[static_cast<size_t>(g)]; }
};

namespace detail {

struct BitLayout {
  std::vector<uint32_t> w_col, v_col;  // per kept bit; empty for single hashers
  uint32_t n_w = 0, n_v = 0;
};

inline BitLayout layout_of(const Hasher& h) {
  BitLayout out;
  if (const auto* b = std::get_if<BilinearHasher>(&h)) {
    out.n_w = out.n_v = static_cast<uint32_t>(b->side());
    for (uint32_t i = 0; i < b->k; ++i) {
      out.w_col.push_back(b->w_column(i));
      out.v_col.push_back(b->v_column(i));
    }
  }
  return out;
}

}  // namespace detail

/// Correlation between the disagreement indicators D_i = [h_i(X) != h_i(Y)]
/// of two bits, grouped by whether the bits share a w-column, a v-column or
/// neither. For each sampled data pair (X, Y):
///   disjoint:  (mean_{disjoint} D_i D_j - p^2) / (p (1 - p))
///   shared_*:  (mean_{shared_*} D_i D_j - mean_{disjoint} D_i D_j) / (p (1 - p))
///   all:       the pair-count weighted average over groups
/// where p is the exact single-bit disagreement probability. Disjoint bits
/// are independent, so their correlation is zero in expectation; the all
/// group falls as m grows because fewer kept bits share a column.
/// Values are averaged over data pairs; pairs with p(1-p) < 1e-9 are skipped.
inline CorrelationSummary bit_correlation_matrix(const Hasher& h, const Dataset& ds, size_t sample_pairs,
                                                 RandomStream& rs) {
  if (ds.size() < 2) fail(ErrorKind::usage, "bit_correlation_matrix: need at least two items");
  const detail::BitLayout lay = detail::layout_of(h);
  const uint32_t k = hasher_bits(h);
  const double kk = static_cast<double>(k) * (k - 1.0);

  std::vector<uint32_t> per_w(lay.n_w, 0), per_v(lay.n_v, 0);
  for (uint32_t i = 0; i < lay.w_col.size(); ++i) {
    ++per_w[lay.w_col[i]];
    ++per_v[lay.v_col[i]];
  }
  double n_w = 0, n_v = 0;
  for (uint32_t c : per_w) n_w += double(c) * (c - 1.0);
  for (uint32_t c : per_v) n_v += double(c) * (c - 1.0);
  const double n_d = kk - n_w - n_v;

  RunningStats st_w, st_v, st_d, st_all;
  std::vector<double> cw(lay.n_w), cv(lay.n_v);
  size_t used = 0;
  for (size_t s = 0; s < sample_pairs; ++s) {
    const auto a = static_cast<size_t>(rs.below(ds.size()));
    auto b = static_cast<size_t>(rs.below(ds.size() - 1));
    if (b >= a) ++b;
    const auto& x = ds.items[a];
    const auto& y = ds.items[b];
    const double p = expected_hamming_series(delta_spectrum(x, y), 1e-6).value;
    const double denom = p * (1.0 - p);
    if (denom < 1e-9) continue;
    ++used;

    const BinaryCode cx = encode(h, x), cy = encode(h, y);
    std::fill(cw.begin(), cw.end(), 0.0);
    std::fill(cv.begin(), cv.end(), 0.0);
    double total = 0;
    for (uint32_t i = 0; i < k; ++i) {
      if (cx.get(i) == cy.get(i)) continue;
      ++total;
      if (!lay.w_col.empty()) {
        ++cw[lay.w_col[i]];
        ++cv[lay.v_col[i]];
      }
    }
    double s_w = 0, s_v = 0;
    for (double c : cw) s_w += c * (c - 1.0);
    for (double c : cv) s_v += c * (c - 1.0);
    const double s_d = total * (total - 1.0) - s_w - s_v;
    const double e_d = n_d > 0 ? s_d / n_d : p * p;
    const double corr_d = (e_d - p * p) / denom;
    const double corr_w = n_w > 0 ? (s_w / n_w - e_d) / denom : 0.0;
    const double corr_v = n_v > 0 ? (s_v / n_v - e_d) / denom : 0.0;
    st_d.add(corr_d);
    st_w.add(corr_w);
    st_v.add(corr_v);
    st_all.add(kk > 0 ? (n_w * corr_w + n_v * corr_v) / kk : 0.0);
  }
  if (used == 0) fail(ErrorKind::numeric, "bit_correlation_matrix: every sampled pair was degenerate");

  auto make = [&](BitGroup g, const RunningStats& st, double frac) {
    const McEstimate e = st.estimate();
    return GroupCorrelation{g, std::abs(e.mean), e.std_err, frac};
  };
  CorrelationSummary out;
  out.data_pairs = used;
  const double denom_pairs = kk > 0 ? kk : 1.0;
  out.groups = {make(BitGroup::shared_w, st_w, n_w / denom_pairs), make(BitGroup::shared_v, st_v, n_v / denom_pairs),
                make(BitGroup::disjoint, st_d, n_d / denom_pairs), make(BitGroup::all, st_all, 1.0)};
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

enum class Method { single, bilinear };

inline const char* to_string(Method m) { return m == Method::single ? "single" : "bilinear"; }

struct BenchRecord {
  Method method = Method::bilinear;
  uint32_t k = 0;
  uint32_t m = 1;
  double encode_time_per_item = 0.0;  // seconds, median over timed runs
  uint64_t hasher_bytes = 0;          // analytic parameter bytes
  uint64_t peak_extra_bytes = 0;      // heap growth while building and encoding
  std::string memory_source;          // "mallinfo2" or "parameter-count"
};

struct BenchOptions {
  uint64_t memory_cap_bytes = uint64_t{4} << 30;
  int timed_runs = 5;
};

namespace detail {
inline uint64_t heap_in_use() {
#ifdef BLSH_HAVE_MALLINFO2
  const auto mi = ::mallinfo2();
  return static_cast<uint64_t>(mi.uordblks) + static_cast<uint64_t>(mi.hblkhd);
#else
  return 0;
#endif
}
}  // namespace detail

/// Single-threaded encode timing: one warm-up pass, then the median of
/// `timed_runs` passes over n_items random Gaussian items.
inline BenchRecord bench(Method method, Eigen::Index d_w, Eigen::Index d_v, uint32_t k, uint32_t m, size_t n_items,
                         RandomStream& rs, const BenchOptions& opt = {}) {
  if (n_items < 1) fail(ErrorKind::usage, "bench: n_items must be >= 1");
  if (opt.timed_runs < 1) fail(ErrorKind::usage, "bench: need at least one timed run");
  BenchRecord rec;
  rec.method = method;
  rec.k = k;
  rec.m = method == Method::single ? 1 : m;
  const auto d = static_cast<uint64_t>(d_w * d_v);
  rec.hasher_bytes = method == Method::single ? single_parameter_bytes(d, k) : bilinear_parameter_bytes(d_w, d_v, k, m);
  if (method == Method::single && rec.hasher_bytes > opt.memory_cap_bytes) {
    fail(ErrorKind::numeric, "single projection needs " + std::to_string(rec.hasher_bytes >> 20) +
                                 " MiB of parameters, above the memory cap of " +
                                 std::to_string(opt.memory_cap_bytes >> 20) + " MiB");
  }

  RandomStream data_rs = rs.substream(1);
  Dataset items;
  for (size_t i = 0; i < n_items; ++i) items.push_back(FeatureMatrix(gaussian_matrix(data_rs, d_w, d_v)));

  const uint64_t heap_before = detail::heap_in_use();
  RandomStream hasher_rs = rs.substream(2);
  const Hasher h = method == Method::single ? Hasher(build_single(hasher_rs, static_cast<Eigen::Index>(d), k))
                                            : Hasher(build_bilinear(hasher_rs, d_w, d_v, k, m));
  uint64_t heap_peak = detail::heap_in_use();

  volatile uint64_t sink = 0;
  auto pass = [&] {
    for (const auto& x : items.items) {
      const BinaryCode c = encode(h, x);
      sink = sink + c.words()[0];
      heap_peak = std::max(heap_peak, detail::heap_in_use());
    }
  };
  pass();
  std::vector<double> secs;
  for (int r = 0; r < opt.timed_runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    pass();
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(secs.begin(), secs.begin() + static_cast<std::ptrdiff_t>(secs.size() / 2), secs.end());
  rec.encode_time_per_item = secs[secs.size() / 2] / static_cast<double>(n_items);

#ifdef BLSH_HAVE_MALLINFO2
  rec.memory_source = "mallinfo2";
  rec.peak_extra_bytes = heap_peak > heap_before ? heap_peak - heap_before : 0;
#else
  rec.memory_source = "parameter-count";
  rec.peak_extra_bytes = rec.hasher_bytes;
#endif
  return rec;
}

}  // namespace blsh
