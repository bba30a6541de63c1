#pragma once

// Training penalties. Each loss optionally writes its gradient with respect
// to its prediction argument; targets are constants.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/distance_transform.hpp"
#include "geounet/geometry.hpp"
#include "geounet/model.hpp"

namespace geounet {

struct LossWeights {
  double lambda_dice = 0.9;
  double w_ce = 1.0;
  double w_huber = 1.0;
  double w_dense = 1.0;
  double hausdorff_alpha = 2.0;

  void validate() const {
    if (!(lambda_dice > 0.0 && lambda_dice < 1.0)) {
      throw std::invalid_argument("LossWeights: lambda_dice must be in (0,1)");
    }
    if (w_ce < 0 || w_huber < 0 || w_dense < 0) {
      throw std::invalid_argument("LossWeights: term weights must be non-negative");
    }
  }
};

inline constexpr double kLogEps = 1e-7;
inline constexpr double kDiceEps = 1e-5;

namespace detail {

template <typename T>
void require_finite(const Grid<T>& g, const char* what) {
  for (const T& v : g) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

template <typename T>
void require_finite(const std::vector<T>& g, const char* what) {
  for (const T& v : g) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

}  // namespace detail

// Depth targets clipped to the last column; a full-radius lumen has no contour class.
inline ContourDepthMap clipped_depth(const ContourDepthMap& y, std::size_t R) {
  ContourDepthMap out = y;
  for (auto& d : out.depth) d = std::clamp(d, 0, static_cast<int>(R) - 1);
  return out;
}

// Per-pixel binary cross entropy of the row distributions against the one-hot
// depth targets, normalized by the full grid size.
template <typename T>
T contour_ce(const ContourProbMap<T>& p_c, const ContourDepthMap& y_c, Grid<T>* grad = nullptr) {
  if (y_c.depth.size() != p_c.rows()) throw std::invalid_argument("contour_ce: row count mismatch");
  detail::require_finite(p_c, "contour_ce");
  const ContourDepthMap y = clipped_depth(y_c, p_c.cols());
  const double norm = 1.0 / static_cast<double>(p_c.rows() * p_c.cols());
  if (grad) *grad = Grid<T>(p_c.rows(), p_c.cols());
  double sum = 0.0;
  for (std::size_t i = 0; i < p_c.rows(); ++i) {
    for (std::size_t j = 0; j < p_c.cols(); ++j) {
      const double raw = static_cast<double>(p_c(i, j));
      const double p = std::clamp(raw, kLogEps, 1.0 - kLogEps);
      const bool clamped = raw != p;
      if (static_cast<int>(j) == y.depth[i]) {
        sum += std::log(p);
        if (grad && !clamped) (*grad)(i, j) = static_cast<T>(-norm / p);
      } else {
        sum += std::log(1.0 - p);
        if (grad && !clamped) (*grad)(i, j) = static_cast<T>(norm / (1.0 - p));
      }
    }
  }
  return static_cast<T>(-norm * sum);
}

// Sum over angles of the Huber penalty on d = y_c - s_c with the knee at |d| = 1.
template <typename T>
T huber(const std::vector<T>& s_c, const ContourDepthMap& y_c, std::vector<T>* grad = nullptr) {
  if (s_c.size() != y_c.depth.size()) throw std::invalid_argument("huber: length mismatch");
  detail::require_finite(s_c, "huber");
  if (grad) grad->assign(s_c.size(), T{});
  double sum = 0.0;
  for (std::size_t i = 0; i < s_c.size(); ++i) {
    const double d = static_cast<double>(y_c.depth[i]) - static_cast<double>(s_c[i]);
    if (std::abs(d) < 1.0) {
      sum += 0.5 * d * d;
      if (grad) (*grad)[i] = static_cast<T>(-d);
    } else {
      sum += std::abs(d) - 0.5;
      if (grad) (*grad)[i] = static_cast<T>(d > 0 ? -1.0 : 1.0);
    }
  }
  return static_cast<T>(sum);
}

template <typename T>
T soft_dice(const PixelProbMap<T>& pred, const Grid<std::uint8_t>& target, Grid<T>* grad = nullptr) {
  require_same_shape(pred, target, "soft_dice");
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double p = static_cast<double>(pred.values()[k]);
    const double y = target.values()[k] ? 1.0 : 0.0;
    inter += p * y;
    sp += p;
    sy += y;
  }
  const double num = 2.0 * inter + kDiceEps;
  const double den = sp + sy + kDiceEps;
  if (grad) {
    *grad = Grid<T>(pred.rows(), pred.cols());
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double y = target.values()[k] ? 1.0 : 0.0;
      grad->values()[k] = static_cast<T>(-(2.0 * y * den - num) / (den * den));
    }
  }
  return static_cast<T>(1.0 - num / den);
}

// Distance-weighted squared error: mean over pixels of
//   (pred - target)^2 * (DT(target)^alpha + DT(pred >= 0.5)^alpha)
// where DT is the distance to the mask boundary. Distance maps are constants
// for differentiation.
template <typename T>
T hausdorff_dt(const PixelProbMap<T>& pred, const Grid<std::uint8_t>& target, double alpha = 2.0,
               Grid<T>* grad = nullptr) {
  require_same_shape(pred, target, "hausdorff_dt");
  Grid<std::uint8_t> binarized(pred.rows(), pred.cols());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    binarized.values()[k] = static_cast<double>(pred.values()[k]) >= 0.5;
  }
  const Grid<double> dt_t = boundary_distance(target);
  const Grid<double> dt_p = boundary_distance(binarized);
  const double n = static_cast<double>(pred.size());
  if (grad) *grad = Grid<T>(pred.rows(), pred.cols());
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = static_cast<double>(pred.values()[k]) - (target.values()[k] ? 1.0 : 0.0);
    const double w = std::pow(dt_t.values()[k], alpha) + std::pow(dt_p.values()[k], alpha);
    sum += e * e * w;
    if (grad) grad->values()[k] = static_cast<T>(2.0 * e * w / n);
  }
  return static_cast<T>(sum / n);
}

template <typename T>
T dense_loss(const PixelProbMap<T>& pred, const Grid<std::uint8_t>& target, const LossWeights& w,
             Grid<T>* grad = nullptr) {
  Grid<T> gd, gh;
  const double d = static_cast<double>(soft_dice(pred, target, grad ? &gd : nullptr));
  const double h = static_cast<double>(hausdorff_dt(pred, target, w.hausdorff_alpha, grad ? &gh : nullptr));
  if (grad) {
    *grad = Grid<T>(pred.rows(), pred.cols());
    for (std::size_t k = 0; k < pred.size(); ++k) {
      grad->values()[k] = static_cast<T>(w.lambda_dice * static_cast<double>(gd.values()[k]) +
                                         (1.0 - w.lambda_dice) * static_cast<double>(gh.values()[k]));
    }
  }
  return static_cast<T>(w.lambda_dice * d + (1.0 - w.lambda_dice) * h);
}

struct LossBreakdown {
  double total = 0.0;
  std::optional<double> ce;
  std::optional<double> huber;
  std::optional<double> dense;
  std::optional<double> dice;
  std::optional<double> hausdorff;
};

inline nlohmann::json to_json(const LossBreakdown& b) {
  nlohmann::json j{{"total", b.total}};
  if (b.ce) j["ce"] = *b.ce;
  if (b.huber) j["huber"] = *b.huber;
  if (b.dense) j["dense"] = *b.dense;
  if (b.dice) j["dice"] = *b.dice;
  if (b.hausdorff) j["hausdorff"] = *b.hausdorff;
  return j;
}

// Sum of the enabled terms:
//   w_ce * CE(p_c, y_c) + w_huber * Huber(s_c, y_c) + w_dense * dense(s_pix or p_pix, y_pix)
// The dense term reads s_pix when CDFeLU is on and p_pix otherwise.
template <typename T>
LossBreakdown unified_loss(const ForwardOutput<T>& out, const Grid<std::uint8_t>& y_pix,
                           const LossWeights& w, const ModelConfig& cfg,
                           OutputGrads<T>* grads = nullptr) {
  LossBreakdown b;
  if (grads) *grads = OutputGrads<T>{};
  if (cfg.use_contour_branch) {
    if (!out.p_c || out.s_c.empty()) throw std::invalid_argument("unified_loss: contour branch output missing");
    PolarMask m{y_pix, 0.0, 0.0};
    const ContourDepthMap y_c = clipped_depth(mask_to_contour_depth(m), out.p_c->cols());
    Grid<T> g_ce;
    std::vector<T> g_h;
    b.ce = static_cast<double>(contour_ce(*out.p_c, y_c, grads ? &g_ce : nullptr));
    b.huber = static_cast<double>(huber(out.s_c, y_c, grads ? &g_h : nullptr));
    b.total += w.w_ce * *b.ce + w.w_huber * *b.huber;
    if (grads) {
      for (auto& v : g_ce) v = static_cast<T>(w.w_ce * static_cast<double>(v));
      for (auto& v : g_h) v = static_cast<T>(w.w_huber * static_cast<double>(v));
      grads->d_p_c = std::move(g_ce);
      grads->d_s_c = std::move(g_h);
    }
  }
  if (cfg.use_pixel_branch) {
    const bool gated = cfg.use_cdfelu;
    const auto& pred = gated ? out.s_pix : out.p_pix;
    if (!pred) throw std::invalid_argument("unified_loss: pixel branch output missing");
    Grid<T> gd, gh;
    b.dice = static_cast<double>(soft_dice(*pred, y_pix, grads ? &gd : nullptr));
    b.hausdorff = static_cast<double>(hausdorff_dt(*pred, y_pix, w.hausdorff_alpha, grads ? &gh : nullptr));
    b.dense = w.lambda_dice * *b.dice + (1.0 - w.lambda_dice) * *b.hausdorff;
    b.total += w.w_dense * *b.dense;
    if (grads) {
      Grid<T> g(pred->rows(), pred->cols());
      for (std::size_t k = 0; k < g.size(); ++k) {
        g.values()[k] = static_cast<T>(w.w_dense * (w.lambda_dice * static_cast<double>(gd.values()[k]) +
                                                    (1.0 - w.lambda_dice) * static_cast<double>(gh.values()[k])));
      }
      (gated ? grads->d_s_pix : grads->d_p_pix) = std::move(g);
    }
  }
  return b;
}

}  // namespace geounet
