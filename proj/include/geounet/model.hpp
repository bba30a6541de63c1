#pragma once

// Dual-branch UNet segmenter.
//
//   input (1 x R x R polar frame)
//     -> UNet trunk (3x3 conv + ReLU pairs, 2x2 max pool, 2x2 transposed conv, skip concat)
//     -> contour head: 1x1 conv to 1 channel, softmax along each row       => p_c
//          s_c[theta] = sum_r r * p_c[theta, r]                             => s_c
//     -> pixel head:   1x1 conv to 2 channels, softmax across channels      => p_pix
//          s_pix = p_pix * (1 - inclusive_cumsum_r(p_c))                     => s_pix (CDFeLU)
//
// Everything is templated on the scalar so training runs in float and
// gradient checks in double.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/geometry.hpp"
#include "geounet/grid.hpp"
#include "geounet/nn/layers.hpp"
#include "geounet/nn/tensor.hpp"

namespace geounet {

enum class Representation { polar, cartesian };

struct ModelConfig {
  long R = 256;
  int depth = 4;
  int base_channels = 16;
  bool use_contour_branch = true;
  bool use_pixel_branch = true;
  bool use_cdfelu = true;
  Representation representation = Representation::polar;
  nn::RowPadding row_padding = nn::RowPadding::zero;
  std::uint64_t seed = 0;

  void validate() const {
    if (depth < 2) throw std::invalid_argument("ModelConfig: depth must be >= 2");
    if (base_channels < 1) throw std::invalid_argument("ModelConfig: base_channels must be >= 1");
    if (R <= 0 || R % (1L << depth) != 0) {
      throw std::invalid_argument("ModelConfig: R=" + std::to_string(R) +
                                  " must be a positive multiple of 2^depth=" +
                                  std::to_string(1L << depth));
    }
    if (use_cdfelu && !use_pixel_branch) {
      throw std::invalid_argument("ModelConfig: use_cdfelu requires use_pixel_branch");
    }
    if (use_cdfelu && !use_contour_branch) {
      throw std::invalid_argument("ModelConfig: use_cdfelu requires the contour branch");
    }
    if (representation == Representation::cartesian && use_contour_branch) {
      throw std::invalid_argument("ModelConfig: the contour branch is only defined in polar space");
    }
    if (!use_contour_branch && !use_pixel_branch) {
      throw std::invalid_argument("ModelConfig: at least one branch must be enabled");
    }
  }

  std::size_t channels(int level) const {
    return static_cast<std::size_t>(base_channels) << level;
  }
};

inline constexpr int kConfigVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"config_version", kConfigVersion},
          {"R", c.R},
          {"depth", c.depth},
          {"base_channels", c.base_channels},
          {"use_contour_branch", c.use_contour_branch},
          {"use_pixel_branch", c.use_pixel_branch},
          {"use_cdfelu", c.use_cdfelu},
          {"representation", c.representation == Representation::polar ? "polar" : "cartesian"},
          {"row_padding", c.row_padding == nn::RowPadding::zero ? "zero" : "circular"},
          {"seed", c.seed}};
}

// Missing keys keep their defaults; a present config_version must match.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (j.contains("config_version") && j.at("config_version").get<int>() != kConfigVersion) {
    throw std::runtime_error("model config version " + j.at("config_version").dump() +
                             " does not match supported version " + std::to_string(kConfigVersion));
  }
  c.R = j.value("R", c.R);
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.use_contour_branch = j.value("use_contour_branch", c.use_contour_branch);
  c.use_pixel_branch = j.value("use_pixel_branch", c.use_pixel_branch);
  c.use_cdfelu = j.value("use_cdfelu", c.use_cdfelu);
  if (j.contains("representation")) {
    const auto r = j.at("representation").get<std::string>();
    if (r != "polar" && r != "cartesian") throw std::invalid_argument("unknown representation '" + r + "'");
    c.representation = r == "polar" ? Representation::polar : Representation::cartesian;
  }
  if (j.contains("row_padding")) {
    const auto p = j.at("row_padding").get<std::string>();
    if (p != "zero" && p != "circular") throw std::invalid_argument("unknown row_padding '" + p + "'");
    c.row_padding = p == "zero" ? nn::RowPadding::zero : nn::RowPadding::circular;
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

// The five trained configurations compared in the ablation study.
enum class Variant { geounet, no_cdfelu, contour_only, polar_pixel, cartesian_pixel };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::geounet, Variant::no_cdfelu, Variant::contour_only,
                                      Variant::polar_pixel, Variant::cartesian_pixel};
  return v;
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::geounet: return "geounet";
    case Variant::no_cdfelu: return "no-cdfelu";
    case Variant::contour_only: return "contour-only";
    case Variant::polar_pixel: return "polar-pixel";
    case Variant::cartesian_pixel: return "cartesian-pixel";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants()) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline ModelConfig apply_variant(ModelConfig c, Variant v) {
  c.representation = Representation::polar;
  c.use_contour_branch = c.use_pixel_branch = c.use_cdfelu = true;
  switch (v) {
    case Variant::geounet: break;
    case Variant::no_cdfelu: c.use_cdfelu = false; break;
    case Variant::contour_only: c.use_pixel_branch = c.use_cdfelu = false; break;
    case Variant::polar_pixel: c.use_contour_branch = c.use_cdfelu = false; break;
    case Variant::cartesian_pixel:
      c.use_contour_branch = c.use_cdfelu = false;
      c.representation = Representation::cartesian;
      break;
  }
  return c;
}

template <typename T>
using ContourProbMap = Grid<T>;
template <typename T>
using PixelProbMap = Grid<T>;

template <typename T>
struct ForwardOutput {
  std::optional<ContourProbMap<T>> p_c;
  std::vector<T> s_c;  // empty when the contour branch is disabled
  std::optional<PixelProbMap<T>> p_pix;
  std::optional<PixelProbMap<T>> s_pix;

  bool has_contour() const { return p_c.has_value(); }
};

// Raw head outputs. Grids are empty for disabled branches.
template <typename T>
struct HeadLogits {
  Grid<T> contour;
  Grid<T> pixel_bg;
  Grid<T> pixel_fg;
};

// Loss gradients with respect to the forward outputs; empty means zero.
template <typename T>
struct OutputGrads {
  Grid<T> d_p_c;
  std::vector<T> d_s_c;
  Grid<T> d_p_pix;
  Grid<T> d_s_pix;
};

template <typename T>
ContourProbMap<T> row_softmax(const Grid<T>& logits) {
  Grid<T> p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = p.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T sum{};
    for (std::size_t j = 0; j < in.size(); ++j) sum += out[j] = std::exp(in[j] - mx);
    for (auto& v : out) v /= sum;
  }
  return p;
}

// dz = p * (dp - <p, dp>) per row.
template <typename T>
Grid<T> row_softmax_backward(const Grid<T>& p, const Grid<T>& dp) {
  Grid<T> dz(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    T dot{};
    for (std::size_t j = 0; j < p.cols(); ++j) dot += p(i, j) * dp(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) dz(i, j) = p(i, j) * (dp(i, j) - dot);
  }
  return dz;
}

// Expected column index of each row: s[theta] = sum_r r * p[theta, r].
template <typename T>
std::vector<T> soft_argmax(const ContourProbMap<T>& p_c) {
  std::vector<T> s(p_c.rows(), T{});
  for (std::size_t i = 0; i < p_c.rows(); ++i) {
    T acc{};
    for (std::size_t j = 0; j < p_c.cols(); ++j) acc += static_cast<T>(j) * p_c(i, j);
    s[i] = acc;
  }
  return s;
}

template <typename T>
void soft_argmax_backward(const std::vector<T>& ds, Grid<T>& dp_c) {
  for (std::size_t i = 0; i < dp_c.rows(); ++i) {
    for (std::size_t j = 0; j < dp_c.cols(); ++j) dp_c(i, j) += ds[i] * static_cast<T>(j);
  }
}

// CDFeLU: out[theta, r] = p_pix[theta, r] * (1 - sum_{j<=r} p_c[theta, j]), clamped to [0,1].
template <typename T>
PixelProbMap<T> cdfelu(const PixelProbMap<T>& p_pix, const ContourProbMap<T>& p_c) {
  require_same_shape(p_pix, p_c, "cdfelu");
  Grid<T> out(p_pix.rows(), p_pix.cols());
  for (std::size_t i = 0; i < p_c.rows(); ++i) {
    T cdf{};
    for (std::size_t j = 0; j < p_c.cols(); ++j) {
      cdf += p_c(i, j);
      out(i, j) = std::clamp(p_pix(i, j) * (T(1) - cdf), T(0), T(1));
    }
  }
  return out;
}

// Accumulates into dp_pix and dp_c. Clamped entries pass no gradient.
template <typename T>
void cdfelu_backward(const PixelProbMap<T>& p_pix, const ContourProbMap<T>& p_c,
                     const Grid<T>& d_out, Grid<T>& dp_pix, Grid<T>& dp_c) {
  require_same_shape(p_pix, p_c, "cdfelu_backward");
  std::vector<T> dcdf(p_c.cols());
  for (std::size_t i = 0; i < p_c.rows(); ++i) {
    T cdf{};
    for (std::size_t j = 0; j < p_c.cols(); ++j) {
      cdf += p_c(i, j);
      const T gate = T(1) - cdf;
      const T raw = p_pix(i, j) * gate;
      const T g = (raw < T(0) || raw > T(1)) ? T(0) : d_out(i, j);
      dp_pix(i, j) += g * gate;
      dcdf[j] = -g * p_pix(i, j);
    }
    // d cdf[r] / d p_c[j] = 1 for j <= r, so each p_c[j] collects the suffix sum.
    T suffix{};
    for (std::size_t j = p_c.cols(); j-- > 0;) {
      suffix += dcdf[j];
      dp_c(i, j) += suffix;
    }
  }
}

template <typename T>
ForwardOutput<T> apply_heads(const HeadLogits<T>& logits, const ModelConfig& cfg) {
  ForwardOutput<T> out;
  if (cfg.use_contour_branch) {
    out.p_c = row_softmax(logits.contour);
    out.s_c = soft_argmax(*out.p_c);
  }
  if (cfg.use_pixel_branch) {
    Grid<T> p(logits.pixel_fg.rows(), logits.pixel_fg.cols());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T d = logits.pixel_bg.values()[k] - logits.pixel_fg.values()[k];
      p.values()[k] = T(1) / (T(1) + std::exp(d));  // foreground channel of a 2-way softmax
    }
    out.p_pix = std::move(p);
    if (cfg.use_cdfelu) out.s_pix = cdfelu(*out.p_pix, *out.p_c);
  }
  return out;
}

template <typename T>
HeadLogits<T> apply_heads_backward(const ForwardOutput<T>& out, const OutputGrads<T>& g,
                                   const ModelConfig& cfg) {
  HeadLogits<T> d;
  Grid<T> dp_c;
  Grid<T> dp_pix;
  if (cfg.use_contour_branch) {
    dp_c = g.d_p_c.empty() ? Grid<T>(out.p_c->rows(), out.p_c->cols()) : g.d_p_c;
    if (!g.d_s_c.empty()) soft_argmax_backward(g.d_s_c, dp_c);
  }
  if (cfg.use_pixel_branch) {
    dp_pix = g.d_p_pix.empty() ? Grid<T>(out.p_pix->rows(), out.p_pix->cols()) : g.d_p_pix;
    if (cfg.use_cdfelu && !g.d_s_pix.empty()) cdfelu_backward(*out.p_pix, *out.p_c, g.d_s_pix, dp_pix, dp_c);
    d.pixel_fg = Grid<T>(dp_pix.rows(), dp_pix.cols());
    d.pixel_bg = Grid<T>(dp_pix.rows(), dp_pix.cols());
    for (std::size_t k = 0; k < dp_pix.size(); ++k) {
      const T p = out.p_pix->values()[k];
      const T v = dp_pix.values()[k] * p * (T(1) - p);
      d.pixel_fg.values()[k] = v;
      d.pixel_bg.values()[k] = -v;
    }
  }
  if (cfg.use_contour_branch) d.contour = row_softmax_backward(*out.p_c, dp_c);
  return d;
}

// Binarized contour-branch prediction; every row is a prefix of ones.
template <typename T>
PolarMask predict_mask(const ForwardOutput<T>& out, double r_max_px = 0.0, double theta0 = 0.0) {
  if (!out.has_contour()) throw std::invalid_argument("predict_mask: output has no contour branch");
  SoftContour c;
  const double hi = static_cast<double>(out.s_c.size()) - 1.0;
  c.depth.reserve(out.s_c.size());
  for (T v : out.s_c) c.depth.push_back(std::clamp(static_cast<double>(v), 0.0, hi));
  return contour_to_mask(c, r_max_px, theta0);
}

// Activations recorded by a forward pass for the backward pass.
template <typename T>
struct Tape {
  std::size_t in_rows = 0, in_cols = 0;
  std::vector<nn::Tensor<T>> enc_in, enc_mid, enc_out;
  std::vector<std::vector<unsigned char>> pool_arg;
  std::vector<nn::Tensor<T>> dec_cat, dec_mid, dec_out;
  nn::Tensor<T> features;
};

template <typename T>
class Model {
 public:
  using scalar_type = T;
  using Gradients = std::vector<std::vector<T>>;

  explicit Model(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<nn::Param<T>>& params() { return params_; }
  const std::vector<nn::Param<T>>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& p : params_) g.emplace_back(p.value.size(), T{});
    return g;
  }

  // Rows and columns must be multiples of this; other sizes are zero padded internally.
  std::size_t size_multiple() const { return std::size_t{1} << (cfg_.depth - 1); }

  HeadLogits<T> forward_logits(const Grid<T>& input, Tape<T>* tape = nullptr) const {
    if (input.empty()) throw std::invalid_argument("Model::forward: empty input");
    const std::size_t m = size_multiple();
    const std::size_t rows = (input.rows() + m - 1) / m * m;
    const std::size_t cols = (input.cols() + m - 1) / m * m;
    nn::Tensor<T> x(1, rows, cols);
    for (std::size_t r = 0; r < input.rows(); ++r) {
      std::copy(input.row(r).begin(), input.row(r).end(), x.v.begin() + static_cast<long>(r * cols));
    }
    Tape<T> local;
    Tape<T>& t = tape ? *tape : local;
    const bool keep = tape != nullptr;
    t = Tape<T>{};
    t.in_rows = input.rows();
    t.in_cols = input.cols();
    const int D = cfg_.depth;
    const auto pad = cfg_.row_padding;

    nn::Tensor<T> cur = std::move(x);
    std::vector<nn::Tensor<T>> skips(static_cast<std::size_t>(D));
    for (int l = 0; l < D; ++l) {
      const auto& c1 = conv_[enc_index(l, 0)];
      const auto& c2 = conv_[enc_index(l, 1)];
      nn::Tensor<T> a = nn::conv3x3_forward(cur, W(c1), B(c1), c1.cout, pad);
      nn::relu_inplace(a);
      nn::Tensor<T> s = nn::conv3x3_forward(a, W(c2), B(c2), c2.cout, pad);
      nn::relu_inplace(s);
      if (keep) {
        t.enc_in.push_back(std::move(cur));
        t.enc_mid.push_back(std::move(a));
      }
      if (l + 1 < D) {
        std::vector<unsigned char> arg;
        cur = nn::maxpool2_forward(s, arg);
        if (keep) t.pool_arg.push_back(std::move(arg));
      }
      skips[static_cast<std::size_t>(l)] = std::move(s);
    }
    nn::Tensor<T> up_src = skips[static_cast<std::size_t>(D - 1)];
    for (int l = D - 2; l >= 0; --l) {
      const auto& u = up_[static_cast<std::size_t>(l)];
      nn::Tensor<T> up = nn::upconv2x2_forward(up_src, W(u), B(u), u.cout);
      nn::Tensor<T> cat = nn::concat(skips[static_cast<std::size_t>(l)], up);
      const auto& c1 = conv_[dec_index(l, 0)];
      const auto& c2 = conv_[dec_index(l, 1)];
      nn::Tensor<T> m1 = nn::conv3x3_forward(cat, W(c1), B(c1), c1.cout, pad);
      nn::relu_inplace(m1);
      nn::Tensor<T> o = nn::conv3x3_forward(m1, W(c2), B(c2), c2.cout, pad);
      nn::relu_inplace(o);
      if (keep) {
        t.dec_cat.push_back(std::move(cat));
        t.dec_mid.push_back(std::move(m1));
        t.dec_out.push_back(up_src);
      }
      up_src = std::move(o);
    }
    if (keep) t.enc_out = std::move(skips);

    HeadLogits<T> logits;
    if (cfg_.use_contour_branch) {
      const auto& h = heads_[0];
      logits.contour = crop(nn::conv1x1_forward(up_src, W(h), B(h), 1), 0, input.rows(), input.cols());
    }
    if (cfg_.use_pixel_branch) {
      const auto& h = heads_[1];
      nn::Tensor<T> px = nn::conv1x1_forward(up_src, W(h), B(h), 2);
      logits.pixel_bg = crop(px, 0, input.rows(), input.cols());
      logits.pixel_fg = crop(px, 1, input.rows(), input.cols());
    }
    if (keep) t.features = std::move(up_src);
    return logits;
  }

  ForwardOutput<T> forward(const Grid<T>& input, Tape<T>* tape = nullptr) const {
    return apply_heads(forward_logits(input, tape), cfg_);
  }

  ForwardOutput<T> forward(const PolarFrame& polar) const {
    if (cfg_.representation != Representation::polar) {
      throw std::invalid_argument("Model::forward: polar input given to a Cartesian model");
    }
    if (static_cast<long>(polar.R()) != cfg_.R) {
      throw std::invalid_argument("Model::forward: input has R=" + std::to_string(polar.R()) +
                                  ", model expects R=" + std::to_string(cfg_.R));
    }
    return forward(polar.pixels.template cast<T>());
  }

  // Accumulates parameter gradients for the logit gradients of one recorded pass.
  void backward(const Tape<T>& t, const HeadLogits<T>& dlogits, Gradients& grads) const {
    const int D = cfg_.depth;
    const auto pad = cfg_.row_padding;
    const nn::Tensor<T>& F = t.features;
    nn::Tensor<T> dF(F.c, F.h, F.w);
    auto add = [](nn::Tensor<T>& acc, const nn::Tensor<T>& v) {
      for (std::size_t k = 0; k < acc.v.size(); ++k) acc.v[k] += v.v[k];
    };
    if (cfg_.use_contour_branch && !dlogits.contour.empty()) {
      const auto& h = heads_[0];
      nn::Tensor<T> dy(1, F.h, F.w);
      uncrop(dlogits.contour, dy, 0);
      add(dF, nn::conv1x1_backward(F, W(h), dy, grads[h.w], grads[h.b]));
    }
    if (cfg_.use_pixel_branch && !dlogits.pixel_fg.empty()) {
      const auto& h = heads_[1];
      nn::Tensor<T> dy(2, F.h, F.w);
      uncrop(dlogits.pixel_bg, dy, 0);
      uncrop(dlogits.pixel_fg, dy, 1);
      add(dF, nn::conv1x1_backward(F, W(h), dy, grads[h.w], grads[h.b]));
    }

    std::vector<nn::Tensor<T>> dskip(static_cast<std::size_t>(D));
    nn::Tensor<T> d_up_src = std::move(dF);
    // Decoder levels were recorded from D-2 down to 0, so index k = D-2-l.
    for (int l = 0; l <= D - 2; ++l) {
      const std::size_t k = static_cast<std::size_t>(D - 2 - l);
      const nn::Tensor<T>& out = l == 0 ? t.features : t.dec_out[k + 1];
      const auto& c1 = conv_[dec_index(l, 0)];
      const auto& c2 = conv_[dec_index(l, 1)];
      nn::relu_backward_inplace(out, d_up_src);
      nn::Tensor<T> dm = nn::conv3x3_backward(t.dec_mid[k], W(c2), d_up_src, pad, grads[c2.w], grads[c2.b]);
      nn::relu_backward_inplace(t.dec_mid[k], dm);
      nn::Tensor<T> dcat = nn::conv3x3_backward(t.dec_cat[k], W(c1), dm, pad, grads[c1.w], grads[c1.b]);
      const std::size_t cs = t.enc_out[static_cast<std::size_t>(l)].c;
      nn::Tensor<T> ds(cs, dcat.h, dcat.w);
      nn::Tensor<T> du(dcat.c - cs, dcat.h, dcat.w);
      std::copy(dcat.v.begin(), dcat.v.begin() + static_cast<long>(ds.v.size()), ds.v.begin());
      std::copy(dcat.v.begin() + static_cast<long>(ds.v.size()), dcat.v.end(), du.v.begin());
      dskip[static_cast<std::size_t>(l)] = std::move(ds);
      const auto& u = up_[static_cast<std::size_t>(l)];
      d_up_src = nn::upconv2x2_backward(t.dec_out[k], W(u), du, grads[u.w], grads[u.b]);
    }
    // d_up_src now holds the gradient of the bottom encoder output.
    nn::Tensor<T> d_s = std::move(d_up_src);
    nn::Tensor<T> pool_grad;
    for (int l = D - 1; l >= 0; --l) {
      const std::size_t li = static_cast<std::size_t>(l);
      if (l < D - 1) {
        d_s = std::move(dskip[li]);
        add(d_s, pool_grad);  // gradient arriving back through the pool below this level
      }
      const auto& c1 = conv_[enc_index(l, 0)];
      const auto& c2 = conv_[enc_index(l, 1)];
      nn::relu_backward_inplace(t.enc_out[li], d_s);
      nn::Tensor<T> da = nn::conv3x3_backward(t.enc_mid[li], W(c2), d_s, pad, grads[c2.w], grads[c2.b]);
      nn::relu_backward_inplace(t.enc_mid[li], da);
      nn::Tensor<T> din = nn::conv3x3_backward(t.enc_in[li], W(c1), da, pad, grads[c1.w], grads[c1.b],
                                               /*need_dx=*/l > 0);
      if (l > 0) {
        const auto& below = t.enc_out[li - 1];
        pool_grad = nn::maxpool2_backward(din, t.pool_arg[li - 1], below.h, below.w);
      }
    }
  }

 private:
  struct Layer {
    std::size_t w = 0, b = 0;  // parameter indices
    std::size_t cin = 0, cout = 0;
  };

  std::size_t enc_index(int level, int which) const { return static_cast<std::size_t>(level * 2 + which); }
  std::size_t dec_index(int level, int which) const {
    return static_cast<std::size_t>(cfg_.depth * 2 + level * 2 + which);
  }
  const std::vector<T>& W(const Layer& l) const { return params_[l.w].value; }
  const std::vector<T>& B(const Layer& l) const { return params_[l.b].value; }

  static Grid<T> crop(const nn::Tensor<T>& t, std::size_t ch, std::size_t rows, std::size_t cols) {
    Grid<T> g(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = t.channel(ch) + r * t.w;
      std::copy(src, src + cols, g.row(r).begin());
    }
    return g;
  }

  static void uncrop(const Grid<T>& g, nn::Tensor<T>& t, std::size_t ch) {
    for (std::size_t r = 0; r < g.rows(); ++r) {
      std::copy(g.row(r).begin(), g.row(r).end(), t.channel(ch) + r * t.w);
    }
  }

  Layer add_layer(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                  std::vector<std::size_t> wshape, double stddev, std::mt19937_64& rng) {
    Layer l{params_.size(), params_.size() + 1, cin, cout};
    nn::Param<T> w{name + ".weight", std::move(wshape), std::vector<T>(cin * cout * k * k)};
    std::normal_distribution<double> nd(0.0, stddev);
    for (auto& v : w.value) v = static_cast<T>(nd(rng));
    params_.push_back(std::move(w));
    params_.push_back({name + ".bias", {cout}, std::vector<T>(cout, T{})});
    return l;
  }

  void build() {
    std::mt19937_64 rng(cfg_.seed * 0x9e3779b97f4a7c15ULL + 0x51);
    const int D = cfg_.depth;
    auto he = [](std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); };
    auto conv3 = [&](const std::string& name, std::size_t cin, std::size_t cout) {
      return add_layer(name, cin, cout, 3, {cout, cin, 3, 3}, he(cin * 9), rng);
    };
    for (int l = 0; l < D; ++l) {
      const std::size_t cin = l == 0 ? 1 : cfg_.channels(l - 1);
      const std::size_t c = cfg_.channels(l);
      conv_.push_back(conv3("enc" + std::to_string(l) + ".conv1", cin, c));
      conv_.push_back(conv3("enc" + std::to_string(l) + ".conv2", c, c));
    }
    for (int l = 0; l <= D - 2; ++l) {
      const std::size_t c = cfg_.channels(l);
      conv_.push_back(conv3("dec" + std::to_string(l) + ".conv1", 2 * c, c));
      conv_.push_back(conv3("dec" + std::to_string(l) + ".conv2", c, c));
    }
    for (int l = 0; l <= D - 2; ++l) {
      const std::size_t cin = cfg_.channels(l + 1);
      const std::size_t c = cfg_.channels(l);
      up_.push_back(add_layer("dec" + std::to_string(l) + ".up", cin, c, 2, {cin, c, 2, 2}, he(cin), rng));
    }
    const std::size_t c0 = cfg_.channels(0);
    heads_.resize(2);
    if (cfg_.use_contour_branch) {
      heads_[0] = add_layer("head.contour", c0, 1, 1, {1, c0}, std::sqrt(1.0 / c0), rng);
    }
    if (cfg_.use_pixel_branch) {
      heads_[1] = add_layer("head.pixel", c0, 2, 1, {2, c0}, std::sqrt(1.0 / c0), rng);
    }
  }

  ModelConfig cfg_;
  std::vector<nn::Param<T>> params_;
  std::vector<Layer> conv_;
  std::vector<Layer> up_;
  std::vector<Layer> heads_;
};

}  // namespace geounet
