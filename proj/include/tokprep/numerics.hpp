#pragma once

// Dense float32 kernels used by the transformer. Every reduction runs in a
// fixed left-to-right order so results are reproducible bit for bit.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tokprep/error.hpp"

namespace tokprep {

using Vector = std::vector<float>;

// Row-major float matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + shape_string());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

namespace detail {

// out[j] = sum_k x[k] * w(k, j), accumulated over k in increasing order.
// The k-outer loop keeps each out[j] accumulation in the same order as the
// textbook triple loop, so both give identical bits.
inline void row_times_matrix(std::span<const float> x, const Matrix& w,
                             std::span<float> out) {
  const std::size_t n = w.cols();
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0f;
  const float* wd = w.data().data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const float xk = x[k];
    const float* wrow = wd + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += xk * wrow[j];
  }
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    detail::row_times_matrix(a.row(i), b, c.row(i));
  }
  return c;
}

// Softmax over one row. -inf entries are masked and come out as exactly 0.
inline Vector softmax_row(std::span<const float> v) {
  if (v.empty()) throw DomainError("softmax of an empty row");
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  float max_v = kNegInf;
  for (float x : v) {
    if (std::isnan(x) || x == std::numeric_limits<float>::infinity()) {
      throw DomainError("softmax input must be finite or -inf");
    }
    if (x > max_v) max_v = x;
  }
  if (max_v == kNegInf) throw DomainError("softmax over a fully masked row");

  Vector out(v.size(), 0.0f);
  float sum = 0.0f;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == kNegInf) continue;
    out[i] = std::exp(v[i] - max_v);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != kNegInf) out[i] /= sum;
  }
  return out;
}

// gain * v / sqrt(mean(v^2) + eps). An all-zero input maps to zeros even with
// eps == 0.
inline void rms_norm_into(std::span<const float> v, std::span<const float> gain,
                          float eps, std::span<float> out) {
  if (v.size() != gain.size() || out.size() != v.size()) {
    throw ShapeError("rms_norm dimension mismatch: v=" + std::to_string(v.size()) +
                     " gain=" + std::to_string(gain.size()));
  }
  if (!(eps >= 0.0f)) throw ConfigError("rms_norm eps must be non-negative");
  float sum_sq = 0.0f;
  for (float x : v) sum_sq += x * x;
  const float denom = sum_sq / static_cast<float>(v.size()) + eps;
  if (denom == 0.0f) {
    for (float& o : out) o = 0.0f;
    return;
  }
  const float inv = 1.0f / std::sqrt(denom);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = gain[i] * (v[i] * inv);
}

inline Vector rms_norm(std::span<const float> v, std::span<const float> gain,
                       float eps) {
  Vector out(v.size());
  rms_norm_into(v, gain, eps, out);
  return out;
}

// Rotates dimension pairs (2j, 2j+1) of every row by
// position * theta_base^(-2j / head_dim). With head_dim < cols the columns are
// treated as consecutive heads of width head_dim, each rotated independently.
inline Matrix rope_apply(const Matrix& x, std::span<const std::size_t> positions,
                         double theta_base, std::size_t head_dim = 0) {
  if (head_dim == 0) head_dim = x.cols();
  if (x.cols() % 2 != 0 || head_dim % 2 != 0) {
    throw ShapeError("rope requires an even width, got " + x.shape_string());
  }
  if (x.cols() % head_dim != 0) {
    throw ShapeError("rope head width " + std::to_string(head_dim) +
                     " does not divide " + x.shape_string());
  }
  if (positions.size() != x.rows()) {
    throw ShapeError("rope got " + std::to_string(positions.size()) +
                     " positions for " + x.shape_string());
  }
  Matrix out = x;
  const std::size_t half = head_dim / 2;
  std::vector<float> cos_t(half), sin_t(half);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t j = 0; j < half; ++j) {
      const double freq = std::pow(theta_base, -2.0 * static_cast<double>(j) /
                                                   static_cast<double>(head_dim));
      cos_t[j] = static_cast<float>(std::cos(pos * freq));
      sin_t[j] = static_cast<float>(std::sin(pos * freq));
    }
    auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t base = 0; base < x.cols(); base += head_dim) {
      for (std::size_t j = 0; j < half; ++j) {
        const float a = src[base + 2 * j];
        const float b = src[base + 2 * j + 1];
        dst[base + 2 * j] = a * cos_t[j] - b * sin_t[j];
        dst[base + 2 * j + 1] = a * sin_t[j] + b * cos_t[j];
      }
    }
  }
  return out;
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace tokprep
