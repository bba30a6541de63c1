#include <gtest/gtest.h>

#include <random>

#include "geounet/checkpoint.hpp"
#include "geounet/image_io.hpp"
#include "geounet/inference.hpp"
#include "geounet/losses.hpp"
#include "geounet/model.hpp"
#include "test_util.hpp"

using namespace geounet;
namespace gt = geounet::testing;

namespace {

Grid<double> row_grid(std::vector<double> v) {
  const std::size_t n = v.size();
  return Grid<double>(1, n, std::move(v));
}

Grid<double> random_grid(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  Grid<double> g(rows, cols);
  for (auto& v : g) v = std::normal_distribution<double>(0, sd)(rng);
  return g;
}

// Closed-form parameter count of the encoder-decoder with both heads.
std::size_t expected_parameters(const ModelConfig& c) {
  std::size_t n = 0;
  auto ch = [&](int l) { return static_cast<std::size_t>(c.base_channels) << l; };
  for (int l = 0; l < c.depth; ++l) {
    const std::size_t cin = l == 0 ? 1 : ch(l - 1);
    n += 9 * cin * ch(l) + ch(l);
    n += 9 * ch(l) * ch(l) + ch(l);
  }
  for (int l = 0; l + 1 < c.depth; ++l) {
    n += 4 * ch(l + 1) * ch(l) + ch(l);      // transposed conv
    n += 9 * 2 * ch(l) * ch(l) + ch(l);      // after concatenation
    n += 9 * ch(l) * ch(l) + ch(l);
  }
  if (c.use_contour_branch) n += ch(0) + 1;
  if (c.use_pixel_branch) n += 2 * ch(0) + 2;
  return n;
}

ModelConfig small_config(long R = 16) {
  ModelConfig c;
  c.R = R;
  c.depth = 2;
  c.base_channels = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Cdfelu, HandCases) {
  EXPECT_EQ(cdfelu(row_grid({0.8, 0.6, 0.4, 0.2}), row_grid({0, 0, 0, 1})).values(),
            (std::vector<double>{0.8, 0.6, 0.4, 0.0}));
  EXPECT_EQ(cdfelu(row_grid({0.8, 0.6, 0.4, 0.2}), row_grid({1, 0, 0, 0})).values(),
            (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(cdfelu(row_grid({1, 1, 1, 1}), row_grid({0.25, 0.25, 0.25, 0.25})).values(),
            (std::vector<double>{0.75, 0.5, 0.25, 0.0}));
  EXPECT_THROW(cdfelu(Grid<double>(2, 3), Grid<double>(2, 4)), std::invalid_argument);
}

TEST(Cdfelu, GateProperties) {
  std::mt19937_64 rng(1);
  const Grid<double> pc = row_softmax(random_grid(16, 16, rng));
  Grid<double> pp(16, 16);
  for (auto& v : pp) v = std::uniform_real_distribution<double>()(rng);
  const Grid<double> s = cdfelu(pp, pc);
  const Grid<double> gate = cdfelu(Grid<double>(16, 16, 1.0), pc);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      EXPECT_LE(s(i, j), pp(i, j));
      EXPECT_GE(s(i, j), 0.0);
      if (j > 0) {
        EXPECT_LE(gate(i, j), gate(i, j - 1));
      }
    }
    EXPECT_NEAR(gate(i, 15), 0.0, 1e-5);
  }
}

TEST(Cdfelu, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const std::size_t R = 16;
  const Grid<double> pc = row_softmax(random_grid(R, R, rng));
  Grid<double> pp(R, R);
  for (auto& v : pp) v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
  const Grid<double> w = random_grid(R, R, rng);
  auto loss = [&](const Grid<double>& a, const Grid<double>& b) {
    const Grid<double> s = cdfelu(a, b);
    double t = 0;
    for (std::size_t k = 0; k < s.size(); ++k) t += w.values()[k] * s.values()[k];
    return t;
  };
  Grid<double> dpp(R, R), dpc(R, R);
  cdfelu_backward(pp, pc, w, dpp, dpc);
  // p_c perturbed off the simplex: the last column's gate can go negative and clamp; keep entries interior.
  const auto n_pp = gt::numeric_gradient([&](const std::vector<double>& v) { return loss(Grid<double>(R, R, v), pc); },
                                         pp.values());
  EXPECT_LT(gt::max_relative_error(n_pp, dpp.values()), 1e-4);
  Grid<double> pc_in = pc;
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < R; ++j) pc_in(i, j) *= 0.9;  // row sums 0.9 keep every gate positive
  }
  Grid<double> dpp2(R, R), dpc2(R, R);
  cdfelu_backward(pp, pc_in, w, dpp2, dpc2);
  const auto n_pc = gt::numeric_gradient([&](const std::vector<double>& v) { return loss(pp, Grid<double>(R, R, v)); },
                                         pc_in.values());
  EXPECT_LT(gt::max_relative_error(n_pc, dpc2.values()), 1e-4);
}

TEST(RowSoftmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(3);
  Grid<double> z = random_grid(16, 16, rng, 5.0);
  const Grid<double> p = row_softmax(z);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto s0 = soft_argmax(p);
  for (std::size_t j = 0; j < 16; ++j) z(4, j) += 37.5;
  const auto s1 = soft_argmax(row_softmax(z));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(s0[i], s1[i], 1e-6);
}

TEST(SoftArgmax, OneHotLogitsGiveColumnIndex) {
  ModelConfig cfg = small_config();
  HeadLogits<double> z{Grid<double>(16, 16, -1e3), Grid<double>(16, 16), Grid<double>(16, 16)};
  for (std::size_t i = 0; i < 16; ++i) z.contour(i, 7) = 1e3;
  for (double s : apply_heads(z, cfg).s_c) EXPECT_EQ(s, 7.0);
}

TEST(SoftArgmax, GradientOfSumWrtContourLogits) {
  std::mt19937_64 rng(4);
  const std::size_t R = 16;
  const Grid<double> z = random_grid(R, R, rng, 2.0);
  const Grid<double> p = row_softmax(z);
  Grid<double> dp(R, R);
  soft_argmax_backward(std::vector<double>(R, 1.0), dp);
  const Grid<double> dz = row_softmax_backward(p, dp);
  auto f = [&](const std::vector<double>& v) {
    double s = 0;
    for (double x : soft_argmax(row_softmax(Grid<double>(R, R, v)))) s += x;
    return s;
  };
  EXPECT_LT(gt::max_relative_error(gt::numeric_gradient(f, z.values()), dz.values()), 1e-4);
}

TEST(PredictMask, MatchesRowThresholdOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    ForwardOutput<double> out;
    out.p_c = Grid<double>(16, 16);
    for (int i = 0; i < 16; ++i) out.s_c.push_back(std::uniform_real_distribution<double>(-2, 18)(rng));
    const PolarMask m = predict_mask(out);
    for (std::size_t i = 0; i < 16; ++i) {
      const double d = std::clamp(out.s_c[i], 0.0, 15.0);
      for (std::size_t j = 0; j < 16; ++j) ASSERT_EQ(m.pixels(i, j), j <= std::floor(d + 0.5) ? 1 : 0);
    }
  }
  ForwardOutput<double> constant;
  constant.p_c = Grid<double>(8, 8);
  constant.s_c.assign(8, 3.0);
  const PolarMask m = predict_mask(constant);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(m.pixels(i, j), j <= 3);
  }
  EXPECT_THROW(predict_mask(ForwardOutput<double>{}), std::invalid_argument);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.depth = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.R = 100;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.use_pixel_branch = false;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.use_cdfelu = false;
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(Model<float>(ModelConfig{.R = 100}), std::invalid_argument);
}

TEST(ModelConfig, JsonRoundTripAndVersionCheck) {
  ModelConfig c = apply_variant(small_config(), Variant::polar_pixel);
  c.row_padding = nn::RowPadding::circular;
  const auto j = to_json(c);
  const ModelConfig d = model_config_from_json(j);
  EXPECT_EQ(to_json(d), j);
  auto bad = j;
  bad["config_version"] = 2;
  EXPECT_THROW(model_config_from_json(bad), std::runtime_error);
}

TEST(Variants, FlagMapping) {
  const ModelConfig base;
  EXPECT_FALSE(apply_variant(base, Variant::no_cdfelu).use_cdfelu);
  const auto co = apply_variant(base, Variant::contour_only);
  EXPECT_FALSE(co.use_pixel_branch);
  EXPECT_TRUE(co.use_contour_branch);
  const auto pp = apply_variant(base, Variant::polar_pixel);
  EXPECT_FALSE(pp.use_contour_branch);
  EXPECT_EQ(pp.representation, Representation::polar);
  const auto cp = apply_variant(base, Variant::cartesian_pixel);
  EXPECT_EQ(cp.representation, Representation::cartesian);
  EXPECT_FALSE(cp.use_contour_branch);
  for (Variant v : all_variants()) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_NO_THROW(apply_variant(base, v).validate());
  }
  EXPECT_THROW(parse_variant("unet"), std::invalid_argument);
}

TEST(Model, ParameterCountMatchesClosedForm) {
  for (Variant v : all_variants()) {
    for (int depth : {2, 3, 4}) {
      for (int base : {4, 8, 16}) {
        ModelConfig c = apply_variant(ModelConfig{}, v);
        c.depth = depth;
        c.base_channels = base;
        c.R = 64;
        EXPECT_EQ(Model<float>(c).parameter_count(), expected_parameters(c));
      }
    }
  }
  ModelConfig c;
  c.depth = 4;
  c.base_channels = 16;
  EXPECT_EQ(Model<float>(c).parameter_count(), expected_parameters(c));
  EXPECT_LT(Model<float>(apply_variant(c, Variant::contour_only)).parameter_count(), Model<float>(c).parameter_count());
}

TEST(Model, SeededInitIsDeterministic) {
  const Model<float> a(small_config()), b(small_config());
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  ModelConfig other = small_config();
  other.seed = 4;
  EXPECT_NE(Model<float>(other).params()[0].value, a.params()[0].value);
}

TEST(Model, OutputsFollowBranchFlags) {
  std::mt19937_64 rng(6);
  const Grid<double> x = random_grid(16, 16, rng);
  const auto full = Model<double>(small_config()).forward(x);
  EXPECT_TRUE(full.p_c && full.p_pix && full.s_pix);
  EXPECT_EQ(full.s_c.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0;
    for (double v : full.p_c->row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
  const auto co = Model<double>(apply_variant(small_config(), Variant::contour_only)).forward(x);
  EXPECT_TRUE(co.p_c && !co.p_pix && !co.s_pix);
  const auto nc = Model<double>(apply_variant(small_config(), Variant::no_cdfelu)).forward(x);
  EXPECT_TRUE(nc.p_pix && !nc.s_pix);
  const auto pp = Model<double>(apply_variant(small_config(), Variant::polar_pixel)).forward(x);
  EXPECT_TRUE(!pp.p_c && pp.s_c.empty() && pp.p_pix);
}

TEST(Model, ForwardChecksPolarInput) {
  const Model<double> m(small_config());
  EXPECT_THROW(m.forward(PolarFrame{Grid<double>(32, 32), 16.0, 0.0}), std::invalid_argument);
  EXPECT_NO_THROW(m.forward(PolarFrame{Grid<double>(16, 16), 8.0, 0.0}));
  const Model<double> cart(apply_variant(small_config(), Variant::cartesian_pixel));
  EXPECT_THROW(cart.forward(PolarFrame{Grid<double>(16, 16), 8.0, 0.0}), std::invalid_argument);
}

TEST(Model, AcceptsSizesThatAreNotPoolMultiples) {
  ModelConfig c = small_config(32);
  c.depth = 3;
  const Model<double> m(c);
  std::mt19937_64 rng(7);
  const auto out = m.forward(random_grid(37, 32, rng));
  EXPECT_EQ(out.p_c->rows(), 37u);
  EXPECT_EQ(out.s_c.size(), 37u);
}

TEST(Model, FullNetworkGradientMatchesFiniteDifferences) {
  for (Variant v : all_variants()) {
    ModelConfig c = apply_variant(small_config(), v);
    Model<double> m(c);
    std::mt19937_64 rng(8);
    const Grid<double> x = random_grid(16, 16, rng);
    SoftContour sc;
    for (int i = 0; i < 16; ++i) sc.depth.push_back(std::uniform_real_distribution<double>(3, 12)(rng));
    const Grid<std::uint8_t> y = contour_to_mask(sc).pixels;
    const LossWeights w;
    auto loss = [&]() { return unified_loss(m.forward(x), y, w, c).total; };
    auto dense_mask = [&]() {
      const auto o = m.forward(x);
      if (!o.p_pix) return std::vector<std::uint8_t>{};
      return threshold(o.s_pix ? *o.s_pix : *o.p_pix).values();
    };
    Tape<double> tape;
    const auto out = apply_heads(m.forward_logits(x, &tape), c);
    OutputGrads<double> og;
    unified_loss(out, y, w, c, &og);
    auto grads = m.zero_gradients();
    m.backward(tape, apply_heads_backward(out, og, c), grads);
    std::vector<double> analytic, numeric;
    for (std::size_t pi = 0; pi < m.params().size(); ++pi) {
      auto& val = m.params()[pi].value;
      for (std::size_t k = 0; k < val.size(); k += std::max<std::size_t>(1, val.size() / 6)) {
        const double x0 = val[k], h = 1e-6;
        val[k] = x0 + h;
        const double fp = loss();
        const auto mp = dense_mask();
        val[k] = x0 - h;
        const double fm = loss();
        const auto mm = dense_mask();
        val[k] = x0;
        // The Hausdorff distance map jumps when a pixel crosses 0.5.
        if (mp != mm) continue;
        numeric.push_back((fp - fm) / (2 * h));
        analytic.push_back(grads[pi][k]);
      }
    }
    EXPECT_LT(gt::max_relative_error(numeric, analytic, 1e-5), 1e-4) << to_string(v);
  }
}

TEST(Model, InteriorRowsAreShiftEquivariant) {
  ModelConfig c = small_config(64);
  c.depth = 3;
  c.base_channels = 4;
  const Model<double> m(c);
  std::mt19937_64 rng(9);
  const Grid<double> x = random_grid(64, 64, rng);
  const long k = 8;  // multiple of the pooling stride
  const auto a = m.forward(x);
  const auto b = m.forward(roll_rows(x, k));
  // Receptive field of depth 3 with two 3x3 convs per level spans well under 24 rows.
  const long margin = 24;
  for (long i = margin; i < 64 - margin - k; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      EXPECT_NEAR((*b.p_c)(static_cast<std::size_t>(i + k), j), (*a.p_c)(static_cast<std::size_t>(i), j), 1e-9);
      EXPECT_NEAR((*b.p_pix)(static_cast<std::size_t>(i + k), j), (*a.p_pix)(static_cast<std::size_t>(i), j), 1e-9);
    }
  }
  c.row_padding = nn::RowPadding::circular;
  const Model<double> circ(c);
  const auto ca = circ.forward(x);
  const auto cb = circ.forward(roll_rows(x, k));
  for (std::size_t k2 = 0; k2 < ca.p_c->size(); ++k2) {
    EXPECT_NEAR(roll_rows(*ca.p_c, k).values()[k2], cb.p_c->values()[k2], 1e-9);
  }
}

TEST(Checkpoint, RoundTripAndVersionRejection) {
  const auto dir = gt::temp_dir("ckpt");
  ModelConfig c = apply_variant(small_config(), Variant::no_cdfelu);
  const Model<float> m(c);
  save_checkpoint(dir / "m.bin", m, {{"note", "x"}});
  nlohmann::json meta;
  const Model<float> back = load_checkpoint<float>(dir / "m.bin", &meta);
  EXPECT_EQ(meta["note"], "x");
  EXPECT_EQ(to_json(back.config()), to_json(c));
  for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(back.params()[i].value, m.params()[i].value);
  const Model<double> wide = load_checkpoint<double>(dir / "m.bin");
  EXPECT_EQ(static_cast<float>(wide.params()[0].value[0]), m.params()[0].value[0]);

  // Rewrite the config_version field in the header.
  std::string bytes = io::read_text(dir / "m.bin");
  const auto pos = bytes.find("\"config_version\":1");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + std::string("\"config_version\":").size()] = '7';
  io::write_text(dir / "bad.bin", bytes);
  EXPECT_THROW(load_checkpoint<float>(dir / "bad.bin"), std::runtime_error);
  io::write_text(dir / "junk.bin", "not a checkpoint");
  EXPECT_THROW(load_checkpoint<float>(dir / "junk.bin"), std::runtime_error);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.bin"), std::runtime_error);
}
