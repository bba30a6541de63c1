#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "geounet/inference.hpp"
#include "geounet/phantom.hpp"
#include "test_util.hpp"

using namespace geounet;
namespace gt = geounet::testing;

namespace {

// Each output row depends only on the same input row. The contour peaks at the
// last column at or above 0.5; the pixel branch thresholds the input at 0.5.
struct RowLocalSegmenter {
  using scalar_type = double;
  ModelConfig cfg;

  const ModelConfig& config() const { return cfg; }

  ForwardOutput<double> forward(const Grid<double>& g) const {
    HeadLogits<double> z;
    if (cfg.use_contour_branch) {
      z.contour = Grid<double>(g.rows(), g.cols(), -50.0);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        std::size_t last = 0;
        for (std::size_t j = 0; j < g.cols(); ++j) {
          if (g(i, j) >= 0.5) last = j;
        }
        z.contour(i, last) = 50.0;
      }
    }
    if (cfg.use_pixel_branch) {
      z.pixel_bg = Grid<double>(g.rows(), g.cols());
      z.pixel_fg = Grid<double>(g.rows(), g.cols());
      for (std::size_t k = 0; k < g.size(); ++k) z.pixel_fg.values()[k] = 40.0 * (g.values()[k] - 0.5);
    }
    return apply_heads(z, cfg);
  }
};

RowLocalSegmenter stub(Variant v, long R) {
  ModelConfig c = apply_variant(ModelConfig{}, v);
  c.R = R;
  return {c};
}

CartesianFrame mask_as_frame(const Grid<std::uint8_t>& m) {
  Grid<double> g(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) g.values()[k] = m.values()[k];
  return make_frame(std::move(g));
}

template <typename T>
void expect_same_output(const ForwardOutput<T>& a, const ForwardOutput<T>& b) {
  ASSERT_EQ(a.has_contour(), b.has_contour());
  if (a.p_c) EXPECT_EQ(a.p_c->values(), b.p_c->values());
  EXPECT_EQ(a.s_c, b.s_c);
  ASSERT_EQ(a.p_pix.has_value(), b.p_pix.has_value());
  if (a.p_pix) EXPECT_EQ(a.p_pix->values(), b.p_pix->values());
  if (a.s_pix) EXPECT_EQ(a.s_pix->values(), b.s_pix->values());
}

}  // namespace

TEST(InferMode, Parse) {
  EXPECT_EQ(parse_infer_mode("plain"), InferMode::plain);
  EXPECT_EQ(parse_infer_mode("plusplus"), InferMode::plusplus);
  EXPECT_EQ(parse_infer_mode("++"), InferMode::plusplus);
  EXPECT_THROW(parse_infer_mode("wrap"), std::invalid_argument);
}

TEST(PolarForward, RowLocalModelIsUnchangedByWrapPadding) {
  std::mt19937_64 rng(1);
  for (long R : {64L, 96L, 128L}) {
    Grid<double> g(static_cast<std::size_t>(R), static_cast<std::size_t>(R));
    for (auto& v : g) v = std::uniform_real_distribution<double>()(rng);
    for (Variant v : {Variant::geounet, Variant::no_cdfelu, Variant::contour_only, Variant::polar_pixel}) {
      const auto m = stub(v, R);
      const auto plain = polar_forward(m, g, {InferMode::plain});
      const auto pp = polar_forward(m, g, {InferMode::plusplus});
      expect_same_output(plain, pp);
      if (pp.p_c) {
        EXPECT_EQ(pp.p_c->rows(), static_cast<std::size_t>(R));
      }
      // Any legal start row gives the same restored orientation.
      for (long start : {0L, 3L, R / 4}) {
        expect_same_output(plain, polar_forward(m, g, {InferMode::plusplus, -1, start}));
      }
    }
  }
}

TEST(PolarForward, RejectsStartBeyondPadding) {
  const auto m = stub(Variant::geounet, 64);
  const Grid<double> g(64, 64);
  EXPECT_THROW(polar_forward(m, g, {InferMode::plusplus, 8, 9}), std::invalid_argument);
  EXPECT_NO_THROW(polar_forward(m, g, {InferMode::plusplus, 8, 8}));
  EXPECT_THROW(polar_forward(m, g, {InferMode::plusplus, 0, 0}), std::invalid_argument);
}

TEST(Infer, OracleContourRecoversDisk) {
  for (long H : {64L, 128L}) {
    const double c = static_cast<double>(H / 2);
    const auto truth = gt::disk(static_cast<std::size_t>(H), c, c, 0.3 * static_cast<double>(H));
    for (InferMode mode : {InferMode::plain, InferMode::plusplus}) {
      for (Variant v : all_variants()) {
        if (v == Variant::cartesian_pixel) continue;
        const auto r = infer(stub(v, H), mask_as_frame(truth), {mode});
        EXPECT_GT(gt::dice_oracle(r.mask.pixels, truth), 0.97) << to_string(v) << " H=" << H;
        EXPECT_EQ(gt::component_count_oracle(r.mask.pixels), 1u);
        EXPECT_EQ(r.contour.depth.empty(), v == Variant::polar_pixel);
      }
    }
  }
}

TEST(Infer, OracleContourRecoversPhantomLumen) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Sample s = render_sample(random_spec(seed % 3 ? Label::N1 : Label::N2, seed, 128), 128);
    const auto r = infer(stub(Variant::geounet, 128), mask_as_frame(s.mask.pixels), {InferMode::plusplus});
    EXPECT_GT(gt::dice_oracle(r.mask.pixels, s.mask.pixels), 0.95) << seed;
    EXPECT_EQ(r.raw_components, 1u);
    EXPECT_LE(discontinuity_score(r.contour), 3.0);
  }
}

TEST(Infer, PixelModelsKeepLargestComponent) {
  Grid<std::uint8_t> two = gt::disk(64, 32, 32, 12);
  for (std::size_t r = 2; r < 6; ++r) {
    for (std::size_t c = 2; c < 6; ++c) two(r, c) = 1;
  }
  const auto cart = infer(stub(Variant::cartesian_pixel, 64), mask_as_frame(two));
  EXPECT_EQ(cart.raw_components, 2u);
  EXPECT_EQ(gt::component_count_oracle(cart.mask.pixels), 1u);
  EXPECT_EQ(cart.mask.pixels, gt::disk(64, 32, 32, 12));
  EXPECT_TRUE(cart.contour.depth.empty());
}

TEST(Infer, RandomModelsGiveOneComponentForContourVariants) {
  const Sample s = render_sample(random_spec(Label::N1, 4, 64), 64);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (Variant v : {Variant::geounet, Variant::no_cdfelu, Variant::contour_only}) {
      ModelConfig c = apply_variant(ModelConfig{}, v);
      c.R = 64;
      c.depth = 3;
      c.base_channels = 4;
      c.seed = seed;
      const Model<float> m(c);
      for (InferMode mode : {InferMode::plain, InferMode::plusplus}) {
        const auto r = infer(m, s.frame, {mode});
        EXPECT_EQ(r.raw_components, 1u);
        EXPECT_EQ(gt::component_count_oracle(r.mask.pixels), 1u);
        EXPECT_EQ(r.contour.depth.size(), 64u);
      }
    }
  }
}

TEST(Infer, RejectsFrameModelMismatch) {
  const Sample s = render_sample(random_spec(Label::N1, 1, 64), 64);
  EXPECT_THROW(infer(stub(Variant::geounet, 128), s.frame), std::invalid_argument);
  CartesianFrame rect = s.frame;
  rect.pixels = Grid<double>(64, 32);
  EXPECT_THROW(infer(stub(Variant::geounet, 64), rect), std::invalid_argument);
}

TEST(Infer, MaskKeepsFrameCalibration) {
  const Sample s = render_sample(random_spec(Label::N1, 2, 64), 64);
  const auto r = infer(stub(Variant::geounet, 64), s.frame);
  EXPECT_EQ(r.mask.mm_per_pixel, s.frame.mm_per_pixel);
  EXPECT_EQ(r.mask.center.row, s.frame.center.row);
  EXPECT_EQ(r.mask.center.col, s.frame.center.col);
}

TEST(Discontinuity, Examples) {
  EXPECT_EQ(discontinuity_score({std::vector<double>(32, 12.0)}), 0.0);
  EXPECT_EQ(discontinuity_score({}), 0.0);
  SoftContour ramp;
  for (int i = 0; i < 101; ++i) ramp.depth.push_back(20.0 + 0.1 * i);
  // Seam jump of 10 px, typical step 0.1 px.
  EXPECT_NEAR(discontinuity_score(ramp), 9.9, 1e-9);
  SoftContour smooth;
  for (int i = 0; i < 64; ++i) smooth.depth.push_back(30 + 5 * std::sin(2 * std::numbers::pi * i / 64));
  EXPECT_LT(discontinuity_score(smooth), 0.5);
}
