#pragma once

// Single-sample convolutional building blocks with explicit backward passes.
// Convolutions lower to GEMM through im2col; weights are row-major
// (out_channels x in_channels*k*k).

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "geounet/nn/tensor.hpp"

namespace geounet::nn {

// Padding along rows (the angle axis in polar space). Columns are always zero padded.
enum class RowPadding { zero, circular };

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

inline long source_row(long y, long dy, long h, RowPadding pad) {
  long s = y + dy;
  if (s >= 0 && s < h) return s;
  if (pad == RowPadding::zero) return -1;
  return ((s % h) + h) % h;
}

// Plain left-to-right sums, independent of buffer alignment.
template <typename T>
void add_row_sums(const ConstMatMap<T>& m, std::vector<T>& out) {
  for (Eigen::Index o = 0; o < m.rows(); ++o) {
    const T* row = m.data() + o * m.cols();
    T sum{};
    for (Eigen::Index k = 0; k < m.cols(); ++k) sum += row[k];
    out[static_cast<std::size_t>(o)] += sum;
  }
}

// col[(ci*9 + ky*3 + kx), y*w + x] = x[ci, y+ky-1, x+kx-1]
template <typename T>
void im2col3x3(const Tensor<T>& x, RowPadding pad, Buffer<T>& col) {
  const long h = static_cast<long>(x.h), w = static_cast<long>(x.w);
  const std::size_t hw = x.plane();
  col.assign(x.c * 9 * hw, T{});
  for (std::size_t ci = 0; ci < x.c; ++ci) {
    const T* src = x.channel(ci);
    for (long ky = 0; ky < 3; ++ky) {
      for (long kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const long dx = kx - 1;
        for (long y = 0; y < h; ++y) {
          const long sy = source_row(y, ky - 1, h, pad);
          if (sy < 0) continue;
          const T* srow = src + sy * w;
          T* drow = dst + y * w;
          const long x0 = std::max(0L, -dx);
          const long x1 = std::min(w, w - dx);
          if (x1 > x0) std::memcpy(drow + x0, srow + x0 + dx, sizeof(T) * static_cast<std::size_t>(x1 - x0));
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const Buffer<T>& col, RowPadding pad, Tensor<T>& dx) {
  const long h = static_cast<long>(dx.h), w = static_cast<long>(dx.w);
  const std::size_t hw = dx.plane();
  for (std::size_t ci = 0; ci < dx.c; ++ci) {
    T* dst = dx.channel(ci);
    for (long ky = 0; ky < 3; ++ky) {
      for (long kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const long ddx = kx - 1;
        for (long y = 0; y < h; ++y) {
          const long sy = source_row(y, ky - 1, h, pad);
          if (sy < 0) continue;
          T* drow = dst + sy * w;
          const T* srow = src + y * w;
          const long x0 = std::max(0L, -ddx);
          const long x1 = std::min(w, w - ddx);
          for (long xx = x0; xx < x1; ++xx) drow[xx + ddx] += srow[xx];
        }
      }
    }
  }
}

}  // namespace detail

// 3x3 convolution, stride 1, same size. weight: cout x (cin*9), bias: cout.
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& x, const std::vector<T>& weight,
                          const std::vector<T>& bias, std::size_t cout, RowPadding pad) {
  Buffer<T> col;
  detail::im2col3x3(x, pad, col);
  Tensor<T> y(cout, x.h, x.w);
  const auto hw = static_cast<Eigen::Index>(x.plane());
  MatMap<T> Y(y.v.data(), static_cast<Eigen::Index>(cout), hw);
  ConstMatMap<T> W(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(x.c * 9));
  ConstMatMap<T> C(col.data(), static_cast<Eigen::Index>(x.c * 9), hw);
  Y.noalias() = W * C;
  for (std::size_t o = 0; o < cout; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  return y;
}

// Accumulates dW/db and returns dx.
template <typename T>
Tensor<T> conv3x3_backward(const Tensor<T>& x, const std::vector<T>& weight, const Tensor<T>& dy,
                           RowPadding pad, std::vector<T>& dweight, std::vector<T>& dbias,
                           bool need_dx = true) {
  Buffer<T> col;
  detail::im2col3x3(x, pad, col);
  const auto hw = static_cast<Eigen::Index>(x.plane());
  const auto cout = static_cast<Eigen::Index>(dy.c);
  const auto k = static_cast<Eigen::Index>(x.c * 9);
  ConstMatMap<T> dY(dy.v.data(), cout, hw);
  ConstMatMap<T> C(col.data(), k, hw);
  MatMap<T> dW(dweight.data(), cout, k);
  dW.noalias() += dY * C.transpose();
  detail::add_row_sums(dY, dbias);
  Tensor<T> dx(x.c, x.h, x.w);
  if (!need_dx) return dx;
  ConstMatMap<T> W(weight.data(), cout, k);
  MatMap<T> dC(col.data(), k, hw);
  dC.noalias() = W.transpose() * dY;
  detail::col2im3x3(col, pad, dx);
  return dx;
}

// 1x1 convolution. weight: cout x cin.
template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& x, const std::vector<T>& weight,
                          const std::vector<T>& bias, std::size_t cout) {
  Tensor<T> y(cout, x.h, x.w);
  const auto hw = static_cast<Eigen::Index>(x.plane());
  MatMap<T> Y(y.v.data(), static_cast<Eigen::Index>(cout), hw);
  ConstMatMap<T> W(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(x.c));
  ConstMatMap<T> X(x.v.data(), static_cast<Eigen::Index>(x.c), hw);
  Y.noalias() = W * X;
  for (std::size_t o = 0; o < cout; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  return y;
}

template <typename T>
Tensor<T> conv1x1_backward(const Tensor<T>& x, const std::vector<T>& weight, const Tensor<T>& dy,
                           std::vector<T>& dweight, std::vector<T>& dbias) {
  const auto hw = static_cast<Eigen::Index>(x.plane());
  const auto cout = static_cast<Eigen::Index>(dy.c);
  const auto cin = static_cast<Eigen::Index>(x.c);
  ConstMatMap<T> dY(dy.v.data(), cout, hw);
  ConstMatMap<T> X(x.v.data(), cin, hw);
  MatMap<T> dW(dweight.data(), cout, cin);
  dW.noalias() += dY * X.transpose();
  detail::add_row_sums(dY, dbias);
  Tensor<T> dx(x.c, x.h, x.w);
  MatMap<T> dX(dx.v.data(), cin, hw);
  ConstMatMap<T> W(weight.data(), cout, cin);
  dX.noalias() = W.transpose() * dY;
  return dx;
}

// 2x2 transposed convolution with stride 2 (exact 2x upsampling).
// weight: cin x (cout*4), index (co*4 + a*2 + b) for output offset (a, b).
template <typename T>
Tensor<T> upconv2x2_forward(const Tensor<T>& x, const std::vector<T>& weight,
                            const std::vector<T>& bias, std::size_t cout) {
  const auto hw = static_cast<Eigen::Index>(x.plane());
  RowMatrix<T> Z(static_cast<Eigen::Index>(cout * 4), hw);
  ConstMatMap<T> W(weight.data(), static_cast<Eigen::Index>(x.c), static_cast<Eigen::Index>(cout * 4));
  ConstMatMap<T> X(x.v.data(), static_cast<Eigen::Index>(x.c), hw);
  Z.noalias() = W.transpose() * X;
  Tensor<T> y(cout, x.h * 2, x.w * 2);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) {
        const T* z = Z.data() + (o * 4 + a * 2 + b) * x.plane();
        for (std::size_t yy = 0; yy < x.h; ++yy) {
          T* dst = y.channel(o) + (2 * yy + a) * y.w + b;
          const T* src = z + yy * x.w;
          for (std::size_t xx = 0; xx < x.w; ++xx) dst[2 * xx] = src[xx] + bias[o];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upconv2x2_backward(const Tensor<T>& x, const std::vector<T>& weight, const Tensor<T>& dy,
                             std::vector<T>& dweight, std::vector<T>& dbias) {
  const std::size_t cout = dy.c;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  RowMatrix<T> dZ(static_cast<Eigen::Index>(cout * 4), hw);
  for (std::size_t o = 0; o < cout; ++o) {
    T sum{};
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) {
        T* z = dZ.data() + (o * 4 + a * 2 + b) * x.plane();
        for (std::size_t yy = 0; yy < x.h; ++yy) {
          const T* src = dy.channel(o) + (2 * yy + a) * dy.w + b;
          T* dst = z + yy * x.w;
          for (std::size_t xx = 0; xx < x.w; ++xx) {
            dst[xx] = src[2 * xx];
            sum += src[2 * xx];
          }
        }
      }
    }
    dbias[o] += sum;
  }
  const auto cin = static_cast<Eigen::Index>(x.c);
  ConstMatMap<T> X(x.v.data(), cin, hw);
  MatMap<T> dW(dweight.data(), cin, static_cast<Eigen::Index>(cout * 4));
  dW.noalias() += X * dZ.transpose();
  ConstMatMap<T> W(weight.data(), cin, static_cast<Eigen::Index>(cout * 4));
  Tensor<T> dx(x.c, x.h, x.w);
  MatMap<T> dX(dx.v.data(), cin, hw);
  dX.noalias() = W * dZ;
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.v) v = v > T{} ? v : T{};
}

// dy masked by the positive entries of the ReLU output.
template <typename T>
void relu_backward_inplace(const Tensor<T>& out, Tensor<T>& dy) {
  for (std::size_t k = 0; k < dy.v.size(); ++k) {
    if (!(out.v[k] > T{})) dy.v[k] = T{};
  }
}

// 2x2 max pooling, stride 2. `argmax` receives the winning offset (0..3) per output.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<unsigned char>& argmax) {
  Tensor<T> y(x.c, x.h / 2, x.w / 2);
  argmax.resize(y.v.size());
  for (std::size_t c = 0; c < x.c; ++c) {
    for (std::size_t yy = 0; yy < y.h; ++yy) {
      for (std::size_t xx = 0; xx < y.w; ++xx) {
        T best = -std::numeric_limits<T>::infinity();
        unsigned char arg = 0;
        for (unsigned char k = 0; k < 4; ++k) {
          const T v = x.at(c, 2 * yy + k / 2, 2 * xx + k % 2);
          if (v > best) {
            best = v;
            arg = k;
          }
        }
        y.at(c, yy, xx) = best;
        argmax[(c * y.h + yy) * y.w + xx] = arg;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<unsigned char>& argmax,
                            std::size_t h, std::size_t w) {
  Tensor<T> dx(dy.c, h, w);
  for (std::size_t c = 0; c < dy.c; ++c) {
    for (std::size_t yy = 0; yy < dy.h; ++yy) {
      for (std::size_t xx = 0; xx < dy.w; ++xx) {
        const std::size_t k = (c * dy.h + yy) * dy.w + xx;
        dx.at(c, 2 * yy + argmax[k] / 2, 2 * xx + argmax[k] % 2) += dy.v[k];
      }
    }
  }
  return dx;
}

// Channel concatenation [a; b].
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<long>(a.v.size()));
  return y;
}

}  // namespace geounet::nn
