#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rectattn/errors.hpp"

namespace rectattn {

enum class Precision : std::uint8_t { Single = 0, Double = 1 };

template <typename T>
constexpr Precision precision_of()
{
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "rectattn matrices hold float or double");
  return std::is_same_v<T, float> ? Precision::Single : Precision::Double;
}

inline const char* precision_name(Precision p)
{
  return p == Precision::Single ? "single" : "double";
}

/// Dense row-major matrix. Construction from external data rejects NaN/Inf;
/// the zero-filled constructor is the usual starting point for outputs.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, T(0))
  {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data))
  {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (T x : data_) {
      if (!std::isfinite(x)) throw NonFiniteError("matrix entry is NaN or Inf");
    }
  }

  static constexpr Precision precision() { return precision_of<T>(); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  Matrix<U> cast() const
  {
    Matrix<U> out(rows_, cols_);
    auto dst = out.values();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  /// Rows [begin, end) as a new matrix.
  Matrix slice_rows(std::size_t begin, std::size_t end) const
  {
    if (begin > end || end > rows_) throw ShapeError("row slice out of range");
    Matrix out(end - begin, cols_);
    std::copy(data_.begin() + begin * cols_, data_.begin() + end * cols_, out.data_.begin());
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b)
  {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

template <typename T>
Matrix<T> vstack(const Matrix<T>& top, const Matrix<T>& bottom)
{
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) throw ShapeError("vstack column mismatch");
  Matrix<T> out(top.rows() + bottom.rows(), top.cols());
  auto dst = out.values();
  std::copy(top.values().begin(), top.values().end(), dst.begin());
  std::copy(bottom.values().begin(), bottom.values().end(), dst.begin() + top.size());
  return out;
}

/// Boolean block matrix (N query blocks x M key blocks).
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0)
  {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v ? 1 : 0; }

  std::size_t row_count(std::size_t r) const
  {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols_; ++c) n += bits_[r * cols_ + c];
    return n;
  }

  std::size_t count() const
  {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool all() const { return count() == bits_.size(); }

  /// Every retained entry of *this is retained in other.
  bool subset_of(const BlockMask& other) const
  {
    if (rows_ != other.rows_ || cols_ != other.cols_) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      if (bits_[i] && !other.bits_[i]) return false;
    }
    return true;
  }

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace rectattn
