#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geounet {

// Row-major 2D array. Rows are the slow axis (angle bins in polar space).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Grid: data size does not match shape");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const auto& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  template <typename U>
  Grid<U> cast() const {
    Grid<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](const T& v) { return static_cast<U>(v); });
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline void require_same_shape(const auto& a, const auto& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Circular row shift: out row i = in row (i - k) mod rows, i.e. content moves down by k.
template <typename T>
Grid<T> roll_rows(const Grid<T>& g, long k) {
  const long n = static_cast<long>(g.rows());
  Grid<T> out(g.rows(), g.cols());
  if (n == 0) return out;
  for (long i = 0; i < n; ++i) {
    const long src = ((i - k) % n + n) % n;
    std::copy(g.row(src).begin(), g.row(src).end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
std::vector<T> roll(const std::vector<T>& v, long k) {
  const long n = static_cast<long>(v.size());
  std::vector<T> out(v.size());
  for (long i = 0; i < n; ++i) out[i] = v[((i - k) % n + n) % n];
  return out;
}

}  // namespace geounet
