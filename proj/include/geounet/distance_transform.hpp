#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "geounet/grid.hpp"

namespace geounet {

namespace detail {

// 1D squared distance transform of a sampled function (lower envelope of parabolas).
inline void sq_dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                     std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == inf) continue;
    if (f[v[k]] == inf) {
      v[k] = q;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    while (k > 0 && s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] == inf ? inf : dq * dq + f[v[k]];
  }
}

}  // namespace detail

// Squared Euclidean distance from every pixel to the nearest pixel where
// `source` is non-zero. All-zero sources give +inf everywhere.
inline Grid<double> squared_distance_to(const Grid<std::uint8_t>& source) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t rows = source.rows();
  const std::size_t cols = source.cols();
  Grid<double> out(rows, cols);
  const std::size_t n = std::max(rows, cols);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (std::size_t c = 0; c < cols; ++c) {
    f.resize(rows);
    d.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) f[r] = source(r, c) ? 0.0 : inf;
    detail::sq_dt_1d(f, d, v, z);
    for (std::size_t r = 0; r < rows; ++r) out(r, c) = d[r];
  }
  f.resize(cols);
  d.resize(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) f[c] = out(r, c);
    detail::sq_dt_1d(f, d, v, z);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = d[c];
  }
  return out;
}

// Unsigned distance to the mask boundary: foreground pixels measure to the
// nearest background pixel and background pixels to the nearest foreground
// pixel. A mask without a boundary (all 0 or all 1) maps to zeros.
inline Grid<double> boundary_distance(const Grid<std::uint8_t>& mask) {
  Grid<std::uint8_t> fg(mask.rows(), mask.cols());
  Grid<std::uint8_t> bg(mask.rows(), mask.cols());
  std::size_t n_fg = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const bool on = mask.values()[k] != 0;
    fg.values()[k] = on;
    bg.values()[k] = !on;
    n_fg += on;
  }
  Grid<double> out(mask.rows(), mask.cols(), 0.0);
  if (n_fg == 0 || n_fg == mask.size()) return out;
  const Grid<double> to_fg = squared_distance_to(fg);
  const Grid<double> to_bg = squared_distance_to(bg);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    out.values()[k] = std::sqrt(fg.values()[k] ? to_bg.values()[k] : to_fg.values()[k]);
  }
  return out;
}

}  // namespace geounet
