#pragma once

// Matrix-shaped data items and the file formats they are read from.
//
// A FeatureMatrix is stored column-major, so its storage order *is* the
// column-stacking vectorization vec(X). Every file format in this header is
// row-major on disk (one matrix row after another), which is the natural
// order for CSV lines and for image rasters.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blsh/error.hpp"

namespace blsh {

class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(Eigen::Index rows, Eigen::Index cols)
      : m_(Eigen::MatrixXd::Zero(rows, cols)) {
    if (rows <= 0 || cols <= 0) fail(ErrorKind::shape, "matrix dimensions must be positive");
  }

  explicit FeatureMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() <= 0 || m_.cols() <= 0) fail(ErrorKind::shape, "matrix dimensions must be positive");
    if (!m_.allFinite()) fail(ErrorKind::numeric, "matrix has non-finite entries");
  }

  /// Builds a matrix from row-major values (the on-disk order).
  static FeatureMatrix from_row_major(std::span<const double> values, Eigen::Index rows,
                                      Eigen::Index cols) {
    if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
      fail(ErrorKind::shape, "expected " + std::to_string(rows * cols) + " values, got " +
                                 std::to_string(values.size()));
    }
    FeatureMatrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) out.m_(r, c) = values[r * cols + c];
    if (!out.m_.allFinite()) fail(ErrorKind::numeric, "matrix has non-finite entries");
    return out;
  }

  /// Reshapes a column-stacked vector back into a rows x cols matrix.
  static FeatureMatrix from_vec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) fail(ErrorKind::shape, "vector length does not match shape");
    return FeatureMatrix(Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols));
  }

  Eigen::Index rows() const noexcept { return m_.rows(); }
  Eigen::Index cols() const noexcept { return m_.cols(); }
  Eigen::Index size() const noexcept { return m_.size(); }

  const Eigen::MatrixXd& mat() const noexcept { return m_; }
  Eigen::MatrixXd& mat() noexcept { return m_; }

  /// vec(X): column-stacked view over the same storage.
  Eigen::Map<const Eigen::VectorXd> vec() const noexcept { return {m_.data(), m_.size()}; }

  double frobenius() const { return m_.norm(); }

  std::vector<double> row_major() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(m_.size()));
    for (Eigen::Index r = 0; r < m_.rows(); ++r)
      for (Eigen::Index c = 0; c < m_.cols(); ++c) out.push_back(m_(r, c));
    return out;
  }

  bool same_shape(const FeatureMatrix& o) const noexcept {
    return rows() == o.rows() && cols() == o.cols();
  }

 private:
  Eigen::MatrixXd m_;
};

inline void require_same_shape(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::shape, "shape mismatch: " + std::to_string(a.rows()) + "x" +
                               std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
  }
}

struct Dataset {
  std::vector<FeatureMatrix> items;
  double scale_applied = 0.0;  // 0 means the values are as loaded

  size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
  Eigen::Index rows() const { return items.empty() ? 0 : items.front().rows(); }
  Eigen::Index cols() const { return items.empty() ? 0 : items.front().cols(); }

  void push_back(FeatureMatrix m) {
    if (!items.empty()) require_same_shape(items.front(), m);
    items.push_back(std::move(m));
  }
};

namespace detail {

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline uint32_t be32(const unsigned char* p) {
  return (uint32_t{p[0]} << 24) | (uint32_t{p[1]} << 16) | (uint32_t{p[2]} << 8) | uint32_t{p[3]};
}

inline uint32_t le32(const unsigned char* p) {
  return uint32_t{p[0]} | (uint32_t{p[1]} << 8) | (uint32_t{p[2]} << 16) | (uint32_t{p[3]} << 24);
}

inline uint64_t le64(const unsigned char* p) {
  return uint64_t{le32(p)} | (uint64_t{le32(p + 4)} << 32);
}

inline void put_le32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_le64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_le64(out, std::bit_cast<uint64_t>(v)); }

inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(le64(p)); }

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "short write to " + path);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Reads an IDX image tensor (magic 0x00000803, big-endian dimensions).
/// Pixels are kept in [0, 255]; scaling is a separate, explicit step.
inline Dataset load_idx(const std::string& path) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() < 16) {
    fail(ErrorKind::io, path + ": truncated IDX header at byte offset " + std::to_string(bytes.size()));
  }
  const uint32_t magic = detail::be32(bytes.data());
  if (magic != 0x00000803u) {
    std::ostringstream os;
    os << path << ": bad IDX magic 0x" << std::hex << magic << " at byte offset 0";
    fail(ErrorKind::io, os.str());
  }
  const uint64_t count = detail::be32(bytes.data() + 4);
  const uint64_t rows = detail::be32(bytes.data() + 8);
  const uint64_t cols = detail::be32(bytes.data() + 12);
  if (rows == 0 || cols == 0) fail(ErrorKind::io, path + ": zero image dimension at byte offset 8");
  const uint64_t need = 16 + count * rows * cols;
  if (bytes.size() < need) {
    const uint64_t item = (bytes.size() - 16) / (rows * cols);
    fail(ErrorKind::io, path + ": truncated payload at byte offset " + std::to_string(bytes.size()) +
                            " (image " + std::to_string(item) + " of " + std::to_string(count) +
                            ", expected " + std::to_string(need) + " bytes)");
  }

  Dataset ds;
  ds.items.reserve(count);
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  const unsigned char* p = bytes.data() + 16;
  for (uint64_t n = 0; n < count; ++n) {
    FeatureMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m.mat()(i, j) = static_cast<double>(*p++);
    ds.items.push_back(std::move(m));
  }
  return ds;
}

inline constexpr char kBlshMagic[4] = {'B', 'L', 'S', 'H'};

/// Writes the raw binary dataset format: "BLSH", u32 count, u32 d_w, u32 d_v,
/// then row-major little-endian float64 values.
inline void save_blsh(const std::string& path, const Dataset& ds) {
  std::string out(kBlshMagic, 4);
  detail::put_le32(out, static_cast<uint32_t>(ds.size()));
  detail::put_le32(out, static_cast<uint32_t>(ds.rows()));
  detail::put_le32(out, static_cast<uint32_t>(ds.cols()));
  for (const auto& item : ds.items)
    for (double v : item.row_major()) detail::put_f64(out, v);
  detail::write_file(path, out);
}

namespace detail {

inline Dataset parse_blsh(const std::vector<unsigned char>& bytes, const std::string& path,
                          Eigen::Index d_w, Eigen::Index d_v) {
  if (bytes.size() < 16) fail(ErrorKind::io, path + ": truncated BLSH header");
  const uint64_t count = le32(bytes.data() + 4);
  const uint64_t rows = le32(bytes.data() + 8);
  const uint64_t cols = le32(bytes.data() + 12);
  if (static_cast<Eigen::Index>(rows * cols) != d_w * d_v) {
    fail(ErrorKind::shape, path + ": record length " + std::to_string(rows * cols) +
                               " does not match " + std::to_string(d_w) + "x" + std::to_string(d_v));
  }
  const uint64_t per = rows * cols;
  if (bytes.size() < 16 + count * per * 8) {
    fail(ErrorKind::io, path + ": truncated payload at byte offset " + std::to_string(bytes.size()));
  }
  Dataset ds;
  ds.items.reserve(count);
  std::vector<double> rec(per);
  const unsigned char* p = bytes.data() + 16;
  for (uint64_t n = 0; n < count; ++n) {
    for (uint64_t i = 0; i < per; ++i, p += 8) {
      rec[i] = get_f64(p);
      if (!std::isfinite(rec[i])) {
        fail(ErrorKind::numeric, path + ": non-finite value in record " + std::to_string(n) +
                                     " at index " + std::to_string(i));
      }
    }
    ds.items.push_back(FeatureMatrix::from_row_major(rec, d_w, d_v));
  }
  return ds;
}

inline Dataset parse_csv(const std::string& text, const std::string& path, Eigen::Index d_w,
                         Eigen::Index d_v) {
  Dataset ds;
  std::vector<double> rec;
  size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    rec.clear();
    while (true) {
      const size_t comma = sv.find(',');
      const std::string_view field = trim(sv.substr(0, comma));
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        fail(ErrorKind::io, path + ":" + std::to_string(line_no) + ": cannot parse '" +
                                std::string(field) + "'");
      }
      if (!std::isfinite(v)) {
        fail(ErrorKind::numeric, path + ":" + std::to_string(line_no) +
                                     ": non-finite value at index " + std::to_string(rec.size()));
      }
      rec.push_back(v);
      if (comma == std::string_view::npos) break;
      sv.remove_prefix(comma + 1);
    }
    if (static_cast<Eigen::Index>(rec.size()) != d_w * d_v) {
      fail(ErrorKind::shape, path + ":" + std::to_string(line_no) + ": record has " +
                                 std::to_string(rec.size()) + " values, expected " +
                                 std::to_string(d_w * d_v));
    }
    ds.items.push_back(FeatureMatrix::from_row_major(rec, d_w, d_v));
  }
  return ds;
}

}  // namespace detail

/// Reads CSV (one row-major item per line) or the BLSH binary format,
/// detected by the leading magic bytes.
inline Dataset load_matrix_file(const std::string& path, Eigen::Index d_w, Eigen::Index d_v) {
  if (d_w <= 0 || d_v <= 0) fail(ErrorKind::usage, "d_w and d_v must be positive");
  const auto bytes = detail::read_all(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kBlshMagic, 4) == 0) {
    return detail::parse_blsh(bytes, path, d_w, d_v);
  }
  return detail::parse_csv(std::string(bytes.begin(), bytes.end()), path, d_w, d_v);
}

/// Multiplies every entry of every item by `factor`.
inline Dataset scale(const Dataset& ds, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) fail(ErrorKind::numeric, "scale factor must be positive and finite");
  Dataset out;
  out.items.reserve(ds.size());
  for (const auto& item : ds.items) out.items.emplace_back(item.mat() * factor);
  out.scale_applied = ds.scale_applied > 0.0 ? ds.scale_applied * factor : factor;
  return out;
}

/// Scales the whole dataset by one global factor so that the largest
/// Frobenius norm equals `target`. Relative distances are preserved.
inline Dataset rescale_frobenius(const Dataset& ds, double target) {
  if (!(target > 0.0)) fail(ErrorKind::usage, "target norm must be positive");
  if (ds.empty()) fail(ErrorKind::usage, "cannot rescale an empty dataset");
  double max_norm = 0.0;
  for (const auto& item : ds.items) max_norm = std::max(max_norm, item.frobenius());
  if (max_norm == 0.0) fail(ErrorKind::numeric, "all items are zero; no finite scale factor");
  return scale(ds, target / max_norm);
}

}  // namespace blsh
