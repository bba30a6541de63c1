#pragma once

// Frame-level segmentation for every model variant, including the
// wrap-padded (Geo-UNet++) continuity mode.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <vector>

#include "geounet/geometry.hpp"
#include "geounet/model.hpp"

namespace geounet {

enum class InferMode { plain, plusplus };

inline InferMode parse_infer_mode(const std::string& s) {
  if (s == "plain") return InferMode::plain;
  if (s == "plusplus" || s == "++") return InferMode::plusplus;
  throw std::invalid_argument("unknown inference mode '" + s + "'");
}

inline std::string to_string(InferMode m) { return m == InferMode::plain ? "plain" : "plusplus"; }

// Anything with a ModelConfig and a grid-to-heads forward pass.
template <typename M>
concept Segmenter = requires(const M& m, const Grid<typename M::scalar_type>& g) {
  { m.config() } -> std::convertible_to<const ModelConfig&>;
  { m.forward(g) } -> std::same_as<ForwardOutput<typename M::scalar_type>>;
};

struct InferOptions {
  InferMode mode = InferMode::plain;
  long pad_rows = -1;   // < 0: round(R/4)
  long start_row = -1;  // < 0: round(R/12)
};

template <typename T>
struct InferResult {
  CartesianMask mask;
  SoftContour contour;               // empty for pixel-only models
  ForwardOutput<T> output;           // in the original angular orientation
  std::size_t raw_components = 0;    // components before largest-component filtering
};

// Runs the forward pass on the R x R polar grid, or on the wrap-padded grid
// followed by re-slicing and a circular shift back to the input orientation.
template <Segmenter M>
ForwardOutput<typename M::scalar_type> polar_forward(const M& model,
                                                     const Grid<typename M::scalar_type>& polar,
                                                     const InferOptions& opt) {
  using T = typename M::scalar_type;
  if (opt.mode == InferMode::plain) return model.forward(polar);
  const long R = static_cast<long>(polar.rows());
  const long pad = opt.pad_rows >= 0 ? opt.pad_rows : default_pad_rows(R);
  const long start = opt.start_row >= 0 ? opt.start_row : default_start_row(R);
  if (start + R > R + pad) throw std::invalid_argument("infer: start_row + R exceeds the padded rows");
  ForwardOutput<T> padded = model.forward(wrap_pad_rows(polar, static_cast<std::size_t>(pad)));
  // Sliced row s sits at original row s + start - pad.
  const long shift = start - pad;
  auto restore = [&](const Grid<T>& g) {
    return roll_rows(slice_rows(g, static_cast<std::size_t>(start), static_cast<std::size_t>(R)), shift);
  };
  ForwardOutput<T> out;
  if (padded.p_c) out.p_c = restore(*padded.p_c);
  if (!padded.s_c.empty()) {
    out.s_c = roll(slice_rows(padded.s_c, static_cast<std::size_t>(start), static_cast<std::size_t>(R)), shift);
  }
  if (padded.p_pix) out.p_pix = restore(*padded.p_pix);
  if (padded.s_pix) out.s_pix = restore(*padded.s_pix);
  return out;
}

template <typename T>
Grid<std::uint8_t> threshold(const Grid<T>& p, double t = 0.5) {
  Grid<std::uint8_t> m(p.rows(), p.cols());
  for (std::size_t k = 0; k < p.size(); ++k) m.values()[k] = static_cast<double>(p.values()[k]) >= t;
  return m;
}

// Contour models: the mask comes from the contour branch and is star-convex by
// construction. Pixel-only models: thresholded p_pix, reduced to its largest component.
template <Segmenter M>
InferResult<typename M::scalar_type> infer(const M& model, const CartesianFrame& frame,
                                           const InferOptions& opt = {}) {
  using T = typename M::scalar_type;
  const ModelConfig& cfg = model.config();
  if (frame.pixels.rows() != frame.pixels.cols()) throw std::invalid_argument("infer: frame must be square");
  if (static_cast<long>(frame.side()) != cfg.R) {
    throw std::invalid_argument("infer: frame side " + std::to_string(frame.side()) +
                                " does not match model R=" + std::to_string(cfg.R));
  }
  const long H = static_cast<long>(frame.side());
  InferResult<T> res;
  if (cfg.representation == Representation::cartesian) {
    res.output = model.forward(frame.pixels.template cast<T>());
    Grid<std::uint8_t> raw = threshold(*res.output.p_pix);
    res.raw_components = count_components(raw);
    res.mask = {largest_component(raw), frame.mm_per_pixel, frame.center};
    return res;
  }
  const PolarFrame polar = cartesian_to_polar(frame, cfg.R);
  res.output = polar_forward(model, polar.pixels.template cast<T>(), opt);
  if (res.output.has_contour()) {
    const PolarMask pm = predict_mask(res.output, polar.r_max_px, polar.theta0);
    res.contour.depth.assign(res.output.s_c.begin(), res.output.s_c.end());
    res.mask = polar_to_cartesian(pm, H, MaskRaster::star_convex, frame.mm_per_pixel);
    res.raw_components = count_components(res.mask.pixels);
  } else {
    const PolarMask pm{threshold(*res.output.p_pix), polar.r_max_px, polar.theta0};
    CartesianMask raw = polar_to_cartesian(pm, H, MaskRaster::nearest, frame.mm_per_pixel);
    res.raw_components = count_components(raw.pixels);
    res.mask = largest_component(raw);
  }
  res.mask.center = frame.center;
  return res;
}

// Size of the jump across the 0/2pi seam beyond the typical row-to-row step.
inline double discontinuity_score(const SoftContour& s) {
  const auto& d = s.depth;
  if (d.size() < 2) return 0.0;
  std::vector<double> steps;
  steps.reserve(d.size() - 1);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) steps.push_back(std::abs(d[i + 1] - d[i]));
  const auto mid = steps.begin() + static_cast<long>(steps.size() / 2);
  std::nth_element(steps.begin(), mid, steps.end());
  double median = *mid;
  if (steps.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(steps.begin(), mid));
  }
  return std::max(0.0, std::abs(d.back() - d.front()) - median);
}

}  // namespace geounet
