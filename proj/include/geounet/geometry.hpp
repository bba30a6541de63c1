#pragma once

// Cartesian <-> polar resampling and the mask/contour conversions used by the
// contour branch. Polar grids index angle by row and radius by column:
//   theta_i = theta0 + 2*pi*i/R      (counter-clockwise from +x)
//   r_j     = r_max_px*(j + 0.5)/R
// A Cartesian point at angle theta and radius r sits at
//   (row, col) = (center.row - r*sin(theta), center.col + r*cos(theta)).

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "geounet/grid.hpp"

namespace geounet {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDefaultFovMm = 70.0;

struct Point {
  double row = 0.0;
  double col = 0.0;
};

enum class Interp { bilinear, nearest };

// How a polar mask is rasterized back into Cartesian space.
//   nearest:     each pixel reads its polar cell.
//   star_convex: nearest, then every foreground pixel is joined to the center
//                pixel by its 8-connected digital segment. The result is one
//                8-connected component containing the center.
enum class MaskRaster { nearest, star_convex };

// Catheter center for an HxH frame. Integer so that it is a pixel.
inline Point default_center(std::size_t side) {
  return {static_cast<double>(side / 2), static_cast<double>(side / 2)};
}

struct CartesianFrame {
  Grid<double> pixels;
  double mm_per_pixel = kDefaultFovMm / 256.0;
  Point center;

  std::size_t side() const { return pixels.rows(); }
};

struct CartesianMask {
  Grid<std::uint8_t> pixels;
  double mm_per_pixel = kDefaultFovMm / 256.0;
  Point center;

  std::size_t side() const { return pixels.rows(); }
};

struct PolarFrame {
  Grid<double> pixels;
  double r_max_px = 128.0;
  double theta0 = 0.0;

  // Angle bins per full turn.
  std::size_t R() const { return pixels.cols(); }
};

struct PolarMask {
  Grid<std::uint8_t> pixels;
  double r_max_px = 128.0;
  double theta0 = 0.0;

  std::size_t R() const { return pixels.cols(); }
};

struct ContourDepthMap {
  std::vector<int> depth;
};

struct SoftContour {
  std::vector<double> depth;
};

inline CartesianFrame make_frame(Grid<double> pixels, double mm_per_pixel = 0.0) {
  const std::size_t side = pixels.rows();
  if (mm_per_pixel <= 0.0) mm_per_pixel = kDefaultFovMm / static_cast<double>(side);
  return {std::move(pixels), mm_per_pixel, default_center(side)};
}

inline CartesianMask make_mask(Grid<std::uint8_t> pixels, double mm_per_pixel = 0.0) {
  const std::size_t side = pixels.rows();
  if (mm_per_pixel <= 0.0) mm_per_pixel = kDefaultFovMm / static_cast<double>(side);
  return {std::move(pixels), mm_per_pixel, default_center(side)};
}

namespace detail {

inline void check_square(std::size_t rows, std::size_t cols, const char* what) {
  if (rows != cols || rows == 0) {
    throw std::invalid_argument(std::string(what) + ": frame must be square and non-empty, got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline void check_resolution(long R, const char* what) {
  if (R < 8) {
    throw std::invalid_argument(std::string(what) + ": R must be >= 8, got " + std::to_string(R));
  }
}

// Points more than one pixel outside the sample lattice [0, n-1] read 0; closer
// ones take the edge value. With the center at n/2 the field of view reaches n-0.5.
template <typename T>
double sample_bilinear(const Grid<T>& g, double row, double col) {
  const double nr = static_cast<double>(g.rows());
  const double nc = static_cast<double>(g.cols());
  if (row < -1.0 || col < -1.0 || row > nr || col > nc) return 0.0;
  row = std::clamp(row, 0.0, nr - 1.0);
  col = std::clamp(col, 0.0, nc - 1.0);
  const auto r0 = static_cast<std::size_t>(row);
  const auto c0 = static_cast<std::size_t>(col);
  const std::size_t r1 = std::min(r0 + 1, g.rows() - 1);
  const std::size_t c1 = std::min(c0 + 1, g.cols() - 1);
  const double fr = row - static_cast<double>(r0);
  const double fc = col - static_cast<double>(c0);
  auto at = [&](std::size_t r, std::size_t c) { return static_cast<double>(g(r, c)); };
  return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c1)) + fr * ((1 - fc) * at(r1, c0) + fc * at(r1, c1));
}

template <typename T>
T sample_nearest(const Grid<T>& g, double row, double col) {
  const long r = std::lround(row);
  const long c = std::lround(col);
  if (r < 0 || c < 0 || r >= static_cast<long>(g.rows()) || c >= static_cast<long>(g.cols())) {
    return T{};
  }
  return g(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

inline long wrap_index(long i, long n) { return ((i % n) + n) % n; }

// Angle of a Cartesian offset, measured counter-clockwise from +x in [0, 2pi).
inline double offset_angle(double drow, double dcol) {
  double a = std::atan2(-drow, dcol);
  if (a < 0) a += kTwoPi;
  return a;
}

}  // namespace detail

// Marks every pixel on the digital segment between the center pixel and each
// foreground pixel. Segments are 8-connected, so the foreground becomes a
// single component containing the center.
inline void fill_rays_to_center(Grid<std::uint8_t>& mask, Point center) {
  const long cr = std::lround(center.row);
  const long cc = std::lround(center.col);
  const long rows = static_cast<long>(mask.rows());
  const long cols = static_cast<long>(mask.cols());
  if (cr < 0 || cc < 0 || cr >= rows || cc >= cols) return;
  std::vector<std::pair<long, long>> seeds;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (mask(r, c)) seeds.emplace_back(r, c);
    }
  }
  if (seeds.empty()) return;
  for (auto [r, c] : seeds) {
    const long dr = r - cr;
    const long dc = c - cc;
    const long steps = std::max(std::labs(dr), std::labs(dc));
    for (long s = 0; s < steps; ++s) {
      const long rr = cr + static_cast<long>(std::lround(static_cast<double>(dr) * s / steps));
      const long ccol = cc + static_cast<long>(std::lround(static_cast<double>(dc) * s / steps));
      mask(rr, ccol) = 1;
    }
  }
}

// Resamples an image onto an R x R polar grid. r_max_px <= 0 selects half the frame side.
inline PolarFrame cartesian_to_polar(const CartesianFrame& frame, long R,
                                     Interp interp = Interp::bilinear, double r_max_px = 0.0) {
  detail::check_square(frame.pixels.rows(), frame.pixels.cols(), "cartesian_to_polar");
  detail::check_resolution(R, "cartesian_to_polar");
  if (r_max_px <= 0.0) r_max_px = static_cast<double>(frame.side()) / 2.0;
  const auto n = static_cast<std::size_t>(R);
  PolarFrame out{Grid<double>(n, n), r_max_px, 0.0};
  std::vector<double> radii(n);
  for (std::size_t j = 0; j < n; ++j) radii[j] = r_max_px * (static_cast<double>(j) + 0.5) / R;
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = kTwoPi * static_cast<double>(i) / R;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (std::size_t j = 0; j < n; ++j) {
      const double row = frame.center.row - radii[j] * st;
      const double col = frame.center.col + radii[j] * ct;
      out.pixels(i, j) = interp == Interp::bilinear ? detail::sample_bilinear(frame.pixels, row, col)
                                                    : detail::sample_nearest(frame.pixels, row, col);
    }
  }
  return out;
}

// Masks always use nearest-neighbour sampling so labels stay binary.
inline PolarMask cartesian_to_polar(const CartesianMask& mask, long R, double r_max_px = 0.0) {
  detail::check_square(mask.pixels.rows(), mask.pixels.cols(), "cartesian_to_polar");
  detail::check_resolution(R, "cartesian_to_polar");
  if (r_max_px <= 0.0) r_max_px = static_cast<double>(mask.side()) / 2.0;
  const auto n = static_cast<std::size_t>(R);
  PolarMask out{Grid<std::uint8_t>(n, n), r_max_px, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = kTwoPi * static_cast<double>(i) / R;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = r_max_px * (static_cast<double>(j) + 0.5) / R;
      out.pixels(i, j) = detail::sample_nearest(mask.pixels, mask.center.row - r * std::sin(theta),
                                                mask.center.col + r * std::cos(theta)) ? 1 : 0;
    }
  }
  return out;
}

// Inverse resampling (bilinear, circular in angle). Pixels beyond r_max_px read 0.
inline CartesianFrame polar_to_cartesian(const PolarFrame& polar, long H, double mm_per_pixel = 0.0) {
  if (H < 8) throw std::invalid_argument("polar_to_cartesian: H must be >= 8");
  detail::check_square(polar.pixels.rows(), polar.pixels.cols(), "polar_to_cartesian");
  const auto side = static_cast<std::size_t>(H);
  CartesianFrame out = make_frame(Grid<double>(side, side), mm_per_pixel);
  const long R = static_cast<long>(polar.R());
  const double bins_per_rad = static_cast<double>(R) / kTwoPi;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dr = static_cast<double>(y) - out.center.row;
      const double dc = static_cast<double>(x) - out.center.col;
      const double r = std::hypot(dr, dc);
      if (r > polar.r_max_px) continue;
      const double fr = (detail::offset_angle(dr, dc) - polar.theta0) * bins_per_rad;
      double fc = r * R / polar.r_max_px - 0.5;
      fc = std::clamp(fc, 0.0, static_cast<double>(R - 1));
      const double r0 = std::floor(fr);
      const double w = fr - r0;
      const long i0 = detail::wrap_index(static_cast<long>(r0), R);
      const long i1 = detail::wrap_index(i0 + 1, R);
      const auto c0 = static_cast<std::size_t>(std::floor(fc));
      const std::size_t c1 = std::min<std::size_t>(c0 + 1, static_cast<std::size_t>(R - 1));
      const double wc = fc - static_cast<double>(c0);
      auto lerp_row = [&](long i) {
        return (1 - wc) * polar.pixels(i, c0) + wc * polar.pixels(i, c1);
      };
      out.pixels(y, x) = (1 - w) * lerp_row(i0) + w * lerp_row(i1);
    }
  }
  return out;
}

inline CartesianMask polar_to_cartesian(const PolarMask& polar, long H,
                                        MaskRaster raster = MaskRaster::nearest,
                                        double mm_per_pixel = 0.0) {
  if (H < 8) throw std::invalid_argument("polar_to_cartesian: H must be >= 8");
  detail::check_square(polar.pixels.rows(), polar.pixels.cols(), "polar_to_cartesian");
  const auto side = static_cast<std::size_t>(H);
  CartesianMask out = make_mask(Grid<std::uint8_t>(side, side), mm_per_pixel);
  const long R = static_cast<long>(polar.R());
  const double bins_per_rad = static_cast<double>(R) / kTwoPi;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dr = static_cast<double>(y) - out.center.row;
      const double dc = static_cast<double>(x) - out.center.col;
      const double r = std::hypot(dr, dc);
      const auto col = static_cast<long>(std::floor(r * R / polar.r_max_px));
      if (col >= R) continue;
      const long row = detail::wrap_index(
          std::lround((detail::offset_angle(dr, dc) - polar.theta0) * bins_per_rad), R);
      out.pixels(y, x) = polar.pixels(row, col) ? 1 : 0;
    }
  }
  if (raster == MaskRaster::star_convex) fill_rays_to_center(out.pixels, out.center);
  return out;
}

inline ContourDepthMap mask_to_contour_depth(const PolarMask& mask) {
  ContourDepthMap out;
  out.depth.resize(mask.pixels.rows());
  for (std::size_t i = 0; i < mask.pixels.rows(); ++i) {
    int sum = 0;
    for (auto v : mask.pixels.row(i)) {
      if (v > 1) {
        throw std::invalid_argument("mask_to_contour_depth: non-binary value " +
                                    std::to_string(int(v)) + " in row " + std::to_string(i));
      }
      sum += v;
    }
    out.depth[i] = sum;
  }
  return out;
}

// Row i gets ones at columns j <= floor(depth[i] + 0.5): the pixels left of or
// along the contour. Every row is a prefix of ones.
inline PolarMask contour_to_mask(const SoftContour& contour, double r_max_px = 0.0,
                                 double theta0 = 0.0) {
  const std::size_t R = contour.depth.size();
  if (R == 0) throw std::invalid_argument("contour_to_mask: empty contour");
  if (r_max_px <= 0.0) r_max_px = static_cast<double>(R) / 2.0;
  PolarMask out{Grid<std::uint8_t>(R, R), r_max_px, theta0};
  for (std::size_t i = 0; i < R; ++i) {
    const double d = contour.depth[i];
    if (!std::isfinite(d) || d < 0.0 || d > static_cast<double>(R - 1)) {
      throw std::invalid_argument("contour_to_mask: depth " + std::to_string(d) + " at row " +
                                  std::to_string(i) + " outside [0, R-1]");
    }
    const auto last = static_cast<std::size_t>(std::floor(d + 0.5));
    for (std::size_t j = 0; j <= last; ++j) out.pixels(i, j) = 1;
  }
  return out;
}

// Rows 0..pad-1 of the result repeat the last pad input rows.
template <typename T>
Grid<T> wrap_pad_rows(const Grid<T>& g, std::size_t pad) {
  if (pad == 0 || pad > g.rows()) {
    throw std::invalid_argument("wrap_pad: pad_rows must be in (0, " + std::to_string(g.rows()) +
                                "], got " + std::to_string(pad));
  }
  Grid<T> out(g.rows() + pad, g.cols());
  const std::size_t n = g.rows();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const std::size_t src = i < pad ? n - pad + i : i - pad;
    std::copy(g.row(src).begin(), g.row(src).end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
Grid<T> slice_rows(const Grid<T>& g, std::size_t start, std::size_t count) {
  if (start + count > g.rows()) {
    throw std::invalid_argument("slice_middle: rows [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") exceed " +
                                std::to_string(g.rows()));
  }
  Grid<T> out(count, g.cols());
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(g.row(start + i).begin(), g.row(start + i).end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
std::vector<T> wrap_pad_rows(const std::vector<T>& v, std::size_t pad) {
  if (pad == 0 || pad > v.size()) throw std::invalid_argument("wrap_pad: pad_rows out of range");
  std::vector<T> out(v.end() - static_cast<long>(pad), v.end());
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

template <typename T>
std::vector<T> slice_rows(const std::vector<T>& v, std::size_t start, std::size_t count) {
  if (start + count > v.size()) throw std::invalid_argument("slice_middle: slice out of bounds");
  return std::vector<T>(v.begin() + static_cast<long>(start),
                        v.begin() + static_cast<long>(start + count));
}

inline PolarFrame wrap_pad(const PolarFrame& polar, long pad_rows) {
  if (pad_rows <= 0 || pad_rows > static_cast<long>(polar.pixels.rows())) {
    throw std::invalid_argument("wrap_pad: pad_rows must be in (0, " +
                                std::to_string(polar.pixels.rows()) + "], got " +
                                std::to_string(pad_rows));
  }
  const double step = kTwoPi / static_cast<double>(polar.R());
  return {wrap_pad_rows(polar.pixels, static_cast<std::size_t>(pad_rows)), polar.r_max_px,
          polar.theta0 - step * static_cast<double>(pad_rows)};
}

inline PolarFrame slice_middle(const PolarFrame& padded, long start_row, long R) {
  if (start_row < 0 || R <= 0) throw std::invalid_argument("slice_middle: negative index");
  const double step = kTwoPi / static_cast<double>(padded.R());
  return {slice_rows(padded.pixels, static_cast<std::size_t>(start_row), static_cast<std::size_t>(R)),
          padded.r_max_px, padded.theta0 + step * static_cast<double>(start_row)};
}

// Default Geo-UNet++ offsets: a quarter turn of padding and a slice starting
// one twelfth of a turn into the padded frame.
inline long default_pad_rows(long R) { return std::lround(static_cast<double>(R) / 4.0); }
inline long default_start_row(long R) { return std::lround(static_cast<double>(R) / 12.0); }

// 8-connected component labels in raster order (0 = background, labels from 1).
// Returns the label grid and the pixel count of each label (index 0 unused).
inline std::pair<Grid<int>, std::vector<std::size_t>> label_components(
    const Grid<std::uint8_t>& mask) {
  Grid<int> labels(mask.rows(), mask.cols(), 0);
  std::vector<std::size_t> sizes{0};
  const long rows = static_cast<long>(mask.rows());
  const long cols = static_cast<long>(mask.cols());
  std::deque<std::pair<long, long>> queue;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (!mask(r, c) || labels(r, c)) continue;
      const int id = static_cast<int>(sizes.size());
      std::size_t count = 0;
      labels(r, c) = id;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        auto [qr, qc] = queue.front();
        queue.pop_front();
        ++count;
        for (long dr = -1; dr <= 1; ++dr) {
          for (long dc = -1; dc <= 1; ++dc) {
            const long nr = qr + dr;
            const long nc = qc + dc;
            if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
            if (!mask(nr, nc) || labels(nr, nc)) continue;
            labels(nr, nc) = id;
            queue.emplace_back(nr, nc);
          }
        }
      }
      sizes.push_back(count);
    }
  }
  return {std::move(labels), std::move(sizes)};
}

inline std::size_t count_components(const Grid<std::uint8_t>& mask) {
  return label_components(mask).second.size() - 1;
}

// Keeps the largest 8-connected component. Raster-order labels make the
// first-found component the one with the smallest top-left index, so ties go to it.
inline Grid<std::uint8_t> largest_component(const Grid<std::uint8_t>& mask) {
  auto [labels, sizes] = label_components(mask);
  Grid<std::uint8_t> out(mask.rows(), mask.cols(), 0);
  if (sizes.size() <= 1) return out;
  int best = 1;
  for (std::size_t i = 2; i < sizes.size(); ++i) {
    if (sizes[i] > sizes[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  for (std::size_t k = 0; k < mask.size(); ++k) out.values()[k] = labels.values()[k] == best;
  return out;
}

inline CartesianMask largest_component(const CartesianMask& mask) {
  return {largest_component(mask.pixels), mask.mm_per_pixel, mask.center};
}

}  // namespace geounet
