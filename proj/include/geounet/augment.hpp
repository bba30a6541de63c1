#pragma once

// Cartesian-space augmentation applied before polar conversion. Geometric
// transforms act on frame and mask together; photometric ones on the frame only.

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "geounet/geometry.hpp"
#include "geounet/metrics.hpp"
#include "geounet/phantom.hpp"

namespace geounet {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double draw(std::mt19937_64& rng) const {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  }
};

struct AugmentConfig {
  bool enabled = true;
  Range rotation_deg{-180.0, 180.0};
  Range translate_px{-10.0, 10.0};
  Range shear_deg{-5.0, 5.0};
  Range contrast_gamma{0.8, 1.25};
  Range blur_sigma{0.0, 1.5};
  Range intensity_scale{0.8, 1.2};
  Range speckle_sigma{0.0, 0.1};

  void validate() const {
    const std::pair<const char*, Range> all[] = {
        {"rotation_deg", rotation_deg}, {"translate_px", translate_px}, {"shear_deg", shear_deg},
        {"contrast_gamma", contrast_gamma}, {"blur_sigma", blur_sigma},
        {"intensity_scale", intensity_scale}, {"speckle_sigma", speckle_sigma}};
    for (const auto& [name, r] : all) {
      if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("AugmentConfig: range ") + name + " is not ordered");
    }
    if (contrast_gamma.lo <= 0.0 || blur_sigma.lo < 0.0 || speckle_sigma.lo < 0.0 ||
        intensity_scale.lo < 0.0) {
      throw std::invalid_argument("AugmentConfig: gamma must be positive and sigmas/scales non-negative");
    }
  }

  static AugmentConfig identity() {
    AugmentConfig c;
    c.rotation_deg = c.translate_px = c.shear_deg = c.blur_sigma = c.speckle_sigma = {0.0, 0.0};
    c.contrast_gamma = c.intensity_scale = {1.0, 1.0};
    return c;
  }
};

inline nlohmann::json to_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

inline Range range_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline nlohmann::json to_json(const AugmentConfig& c) {
  return {{"enabled", c.enabled},
          {"rotation_deg", to_json(c.rotation_deg)},
          {"translate_px", to_json(c.translate_px)},
          {"shear_deg", to_json(c.shear_deg)},
          {"contrast_gamma", to_json(c.contrast_gamma)},
          {"blur_sigma", to_json(c.blur_sigma)},
          {"intensity_scale", to_json(c.intensity_scale)},
          {"speckle_sigma", to_json(c.speckle_sigma)}};
}

inline AugmentConfig augment_config_from_json(const nlohmann::json& j, AugmentConfig c = {}) {
  c.enabled = j.value("enabled", c.enabled);
  auto read = [&](const char* key, Range& r) {
    if (j.contains(key)) r = range_from_json(j.at(key));
  };
  read("rotation_deg", c.rotation_deg);
  read("translate_px", c.translate_px);
  read("shear_deg", c.shear_deg);
  read("contrast_gamma", c.contrast_gamma);
  read("blur_sigma", c.blur_sigma);
  read("intensity_scale", c.intensity_scale);
  read("speckle_sigma", c.speckle_sigma);
  return c;
}

// 2x2 linear part plus translation, mapping source offsets (x right, y up) to output offsets.
struct Affine {
  double a = 1, b = 0, c = 0, d = 1;
  double tx = 0, ty = 0;

  bool is_identity() const { return a == 1 && b == 0 && c == 0 && d == 1 && tx == 0 && ty == 0; }
};

inline Affine make_affine(double rotation_deg, double shear_deg, double tx, double ty) {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(shear_deg * std::numbers::pi / 180.0);
  const double ct = std::cos(th), st = std::sin(th);
  // rotation * shear_x
  return {ct, ct * sh - st, st, st * sh + ct, tx, ty};
}

template <typename T, typename Sampler>
Grid<T> warp(const Grid<T>& src, Point center, const Affine& A, Sampler sample) {
  const double det = A.a * A.d - A.b * A.c;
  if (std::abs(det) < 1e-12) throw std::invalid_argument("augment: singular transform");
  Grid<T> out(src.rows(), src.cols());
  for (std::size_t y = 0; y < src.rows(); ++y) {
    for (std::size_t x = 0; x < src.cols(); ++x) {
      const double ox = static_cast<double>(x) - center.col - A.tx;
      const double oy = center.row - static_cast<double>(y) - A.ty;
      const double sx = (A.d * ox - A.b * oy) / det;
      const double sy = (-A.c * ox + A.a * oy) / det;
      out(y, x) = sample(src, center.row - sy, center.col + sx);
    }
  }
  return out;
}

inline CartesianFrame warp(const CartesianFrame& f, const Affine& A) {
  return {warp(f.pixels, f.center, A,
               [](const Grid<double>& g, double r, double c) { return detail::sample_bilinear(g, r, c); }),
          f.mm_per_pixel, f.center};
}

inline CartesianMask warp(const CartesianMask& m, const Affine& A) {
  return {warp(m.pixels, m.center, A,
               [](const Grid<std::uint8_t>& g, double r, double c) { return detail::sample_nearest(g, r, c); }),
          m.mm_per_pixel, m.center};
}

inline CartesianMask rotate(const CartesianMask& m, double degrees) { return warp(m, make_affine(degrees, 0, 0, 0)); }
inline CartesianFrame rotate(const CartesianFrame& f, double degrees) { return warp(f, make_affine(degrees, 0, 0, 0)); }

inline Grid<double> gaussian_blur(const Grid<double>& g, double sigma) {
  if (sigma < 0.05) return g;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const long rows = static_cast<long>(g.rows()), cols = static_cast<long>(g.cols());
  Grid<double> tmp(g.rows(), g.cols()), out(g.rows(), g.cols());
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const long cc = std::clamp(c + i, 0L, cols - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * g(r, cc);
      }
      tmp(r, c) = acc;
    }
  }
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const long rr = std::clamp(r + i, 0L, rows - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp(rr, c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

// Mask contains the center, stays inside the field of view, and is (up to
// sampling) a prefix of ones along every polar row.
inline bool is_star_convex_lumen(const CartesianMask& m, long R = 0) {
  const long cr = std::lround(m.center.row), cc = std::lround(m.center.col);
  if (!m.pixels(static_cast<std::size_t>(cr), static_cast<std::size_t>(cc))) return false;
  const double r_max = static_cast<double>(m.side()) / 2.0;
  for (std::size_t y = 0; y < m.pixels.rows(); ++y) {
    for (std::size_t x = 0; x < m.pixels.cols(); ++x) {
      if (m.pixels(y, x) && std::hypot(static_cast<double>(y) - m.center.row,
                                       static_cast<double>(x) - m.center.col) >= 0.95 * r_max) {
        return false;
      }
    }
  }
  if (R <= 0) R = static_cast<long>(m.side());
  const PolarMask pm = cartesian_to_polar(m, R);
  SoftContour c;
  for (int d : mask_to_contour_depth(pm).depth) c.depth.push_back(std::max(0, d - 1));
  return dice(contour_to_mask(c, pm.r_max_px).pixels, pm.pixels) >= 0.99;
}

inline constexpr int kAugmentRetries = 10;

// Deterministic given the generator state. Geometric draws that push the
// lumen off-center or out of view are redrawn up to kAugmentRetries times.
inline Sample augment(const Sample& s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.enabled) return s;
  Sample out = s;
  bool ok = false;
  for (int attempt = 0; attempt < kAugmentRetries && !ok; ++attempt) {
    const Affine A = make_affine(cfg.rotation_deg.draw(rng), cfg.shear_deg.draw(rng),
                                 cfg.translate_px.draw(rng), cfg.translate_px.draw(rng));
    if (A.is_identity()) {
      out.frame = s.frame;
      out.mask = s.mask;
      ok = true;
      break;
    }
    out.mask = warp(s.mask, A);
    ok = is_star_convex_lumen(out.mask);
    if (ok) out.frame = warp(s.frame, A);
  }
  if (!ok) {
    throw std::runtime_error("augment: no valid geometric transform for sample '" + s.id + "' after " +
                             std::to_string(kAugmentRetries) + " attempts");
  }
  const double gamma = cfg.contrast_gamma.draw(rng);
  const double sigma = cfg.blur_sigma.draw(rng);
  const double scale = cfg.intensity_scale.draw(rng);
  const double speckle = cfg.speckle_sigma.draw(rng);
  auto& px = out.frame.pixels;
  if (gamma != 1.0) {
    for (auto& v : px) v = std::pow(std::max(v, 0.0), gamma);
  }
  if (sigma > 0.0) px = gaussian_blur(px, sigma);
  if (scale != 1.0) {
    for (auto& v : px) v = std::clamp(v * scale, 0.0, 1.0);
  }
  if (speckle > 0.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : px) v = std::clamp(v * (1.0 + speckle * n(rng)), 0.0, 1.0);
  }
  return out;
}

}  // namespace geounet
