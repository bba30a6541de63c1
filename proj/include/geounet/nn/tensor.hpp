#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace geounet::nn {

// Vector storage aligned for Eigen's packet loads.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

// Channel-major feature map (C x H x W) for a single sample.
template <typename T>
struct Tensor {
  std::size_t c = 0, h = 0, w = 0;
  Buffer<T> v;

  Tensor() = default;
  Tensor(std::size_t c_, std::size_t h_, std::size_t w_, T fill = T{})
      : c(c_), h(h_), w(w_), v(c_ * h_ * w_, fill) {}

  std::size_t plane() const { return h * w; }
  T* channel(std::size_t i) { return v.data() + i * plane(); }
  const T* channel(std::size_t i) const { return v.data() + i * plane(); }
  T& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  const T& at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

// A named, shaped parameter array.
template <typename T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
};

}  // namespace geounet::nn
