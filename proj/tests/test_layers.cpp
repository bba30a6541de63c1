#include <gtest/gtest.h>

#include <random>

#include "geounet/nn/layers.hpp"
#include "test_util.hpp"

using namespace geounet;
using namespace geounet::nn;
namespace gt = geounet::testing;

namespace {

Tensor<double> random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Tensor<double> t(c, h, w);
  for (auto& v : t.v) v = std::normal_distribution<double>()(rng);
  return t;
}

std::vector<double> plain(const nn::Buffer<double>& b) { return {b.begin(), b.end()}; }

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = std::normal_distribution<double>()(rng);
  return v;
}

template <typename A>
double dot(const A& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct 3x3 convolution with zero column padding and the given row padding.
Tensor<double> naive_conv3x3(const Tensor<double>& x, const std::vector<double>& W, const std::vector<double>& b,
                             std::size_t cout, RowPadding pad) {
  Tensor<double> y(cout, x.h, x.w);
  const long h = static_cast<long>(x.h), w = static_cast<long>(x.w);
  for (std::size_t o = 0; o < cout; ++o) {
    for (long r = 0; r < h; ++r) {
      for (long c = 0; c < w; ++c) {
        double s = b[o];
        for (std::size_t i = 0; i < x.c; ++i) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              long rr = r + ky - 1;
              const long cc = c + kx - 1;
              if (cc < 0 || cc >= w) continue;
              if (rr < 0 || rr >= h) {
                if (pad == RowPadding::zero) continue;
                rr = (rr + h) % h;
              }
              s += W[o * x.c * 9 + i * 9 + static_cast<std::size_t>(ky * 3 + kx)] *
                   x.at(i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
            }
          }
        }
        y.at(o, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
      }
    }
  }
  return y;
}

}  // namespace

class Conv3x3 : public ::testing::TestWithParam<RowPadding> {};

TEST_P(Conv3x3, ForwardMatchesDirectSum) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(3, 6, 5, rng);
  const auto W = random_vec(4 * 3 * 9, rng), b = random_vec(4, rng);
  const auto y = conv3x3_forward(x, W, b, 4, GetParam());
  const auto z = naive_conv3x3(x, W, b, 4, GetParam());
  for (std::size_t k = 0; k < y.v.size(); ++k) EXPECT_NEAR(y.v[k], z.v[k], 1e-12);
}

TEST_P(Conv3x3, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor(2, 5, 4, rng);
  auto W = random_vec(3 * 2 * 9, rng);
  auto b = random_vec(3, rng);
  const auto r = random_vec(3 * 5 * 4, rng);
  const auto pad = GetParam();
  std::vector<double> dW(W.size()), db(b.size());
  Tensor<double> dy(3, 5, 4);
  dy.v.assign(r.begin(), r.end());
  const auto dx = conv3x3_backward(x, W, dy, pad, dW, db);
  auto fx = [&](const std::vector<double>& v) {
    Tensor<double> t = x;
    t.v.assign(v.begin(), v.end());
    return dot(conv3x3_forward(t, W, b, 3, pad).v, r);
  };
  auto fw = [&](const std::vector<double>& v) { return dot(conv3x3_forward(x, v, b, 3, pad).v, r); };
  auto fb = [&](const std::vector<double>& v) { return dot(conv3x3_forward(x, W, v, 3, pad).v, r); };
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fx, plain(x.v)), plain(dx.v)), 1e-6);
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fw, W), dW), 1e-6);
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fb, b), db), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Padding, Conv3x3, ::testing::Values(RowPadding::zero, RowPadding::circular));

TEST(Conv3x3, CircularPaddingIsRowShiftEquivariant) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor(2, 8, 6, rng);
  const auto W = random_vec(2 * 2 * 9, rng), b = random_vec(2, rng);
  Tensor<double> xs = x;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t q = 0; q < 6; ++q) xs.at(c, (r + 3) % 8, q) = x.at(c, r, q);
    }
  }
  const auto y = conv3x3_forward(x, W, b, 2, RowPadding::circular);
  const auto ys = conv3x3_forward(xs, W, b, 2, RowPadding::circular);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t q = 0; q < 6; ++q) EXPECT_NEAR(ys.at(c, (r + 3) % 8, q), y.at(c, r, q), 1e-12);
    }
  }
}

TEST(Conv1x1, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(3, 4, 4, rng);
  const auto W = random_vec(2 * 3, rng), b = random_vec(2, rng);
  const auto r = random_vec(2 * 16, rng);
  std::vector<double> dW(W.size()), db(2);
  Tensor<double> dy(2, 4, 4);
  dy.v.assign(r.begin(), r.end());
  const auto dx = conv1x1_backward(x, W, dy, dW, db);
  auto fx = [&](const std::vector<double>& v) {
    Tensor<double> t = x;
    t.v.assign(v.begin(), v.end());
    return dot(conv1x1_forward(t, W, b, 2).v, r);
  };
  auto fw = [&](const std::vector<double>& v) { return dot(conv1x1_forward(x, v, b, 2).v, r); };
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fx, plain(x.v)), plain(dx.v)), 1e-6);
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fw, W), dW), 1e-6);
}

TEST(UpConv2x2, ForwardLayoutAndBackward) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor(2, 3, 2, rng);
  const auto W = random_vec(2 * 3 * 4, rng), b = random_vec(3, rng);
  const auto y = upconv2x2_forward(x, W, b, 3);
  ASSERT_EQ(y.h, 6u);
  ASSERT_EQ(y.w, 4u);
  // y[co, 2i+a, 2j+b] = bias[co] + sum_ci x[ci,i,j] * W[ci, co*4 + a*2 + b]
  for (std::size_t co = 0; co < 3; ++co) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t bb = 0; bb < 2; ++bb) {
            double s = b[co];
            for (std::size_t ci = 0; ci < 2; ++ci) s += x.at(ci, i, j) * W[ci * 12 + co * 4 + a * 2 + bb];
            EXPECT_NEAR(y.at(co, 2 * i + a, 2 * j + bb), s, 1e-12);
          }
        }
      }
    }
  }
  const auto r = random_vec(y.v.size(), rng);
  std::vector<double> dW(W.size()), db(3);
  Tensor<double> dy(3, 6, 4);
  dy.v.assign(r.begin(), r.end());
  const auto dx = upconv2x2_backward(x, W, dy, dW, db);
  auto fx = [&](const std::vector<double>& v) {
    Tensor<double> t = x;
    t.v.assign(v.begin(), v.end());
    return dot(upconv2x2_forward(t, W, b, 3).v, r);
  };
  auto fw = [&](const std::vector<double>& v) { return dot(upconv2x2_forward(x, v, b, 3).v, r); };
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fx, plain(x.v)), plain(dx.v)), 1e-6);
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(fw, W), dW), 1e-6);
}

TEST(MaxPool2, RoutesGradientToArgmax) {
  Tensor<double> x(1, 2, 4);
  x.v = {1, 5, 2, 0, 3, 4, 7, 1};
  std::vector<unsigned char> arg;
  const auto y = maxpool2_forward(x, arg);
  EXPECT_EQ(plain(y.v), (std::vector<double>{5, 7}));
  Tensor<double> dy(1, 1, 2);
  dy.v = {10, 20};
  const auto dx = maxpool2_backward(dy, arg, 2, 4);
  EXPECT_EQ(plain(dx.v), (std::vector<double>{0, 10, 0, 0, 0, 0, 20, 0}));
}

TEST(Relu, ForwardBackward) {
  Tensor<double> x(1, 1, 4);
  x.v = {-1, 0.5, 0, 2};
  relu_inplace(x);
  EXPECT_EQ(plain(x.v), (std::vector<double>{0, 0.5, 0, 2}));
  Tensor<double> dy(1, 1, 4, 1.0);
  relu_backward_inplace(x, dy);
  EXPECT_EQ(plain(dy.v), (std::vector<double>{0, 1, 0, 1}));
}

TEST(Concat, StacksChannels) {
  Tensor<double> a(1, 2, 2, 1.0), b(2, 2, 2, 2.0);
  const auto c = concat(a, b);
  EXPECT_EQ(c.c, 3u);
  EXPECT_EQ(plain(c.v), (std::vector<double>{1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2}));
}
