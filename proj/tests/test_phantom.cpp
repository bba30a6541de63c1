#include <gtest/gtest.h>

#include <map>
#include <set>

#include "geounet/augment.hpp"
#include "geounet/metrics.hpp"
#include "geounet/phantom.hpp"
#include "test_util.hpp"

using namespace geounet;
namespace gt = geounet::testing;

TEST(SampleContour, DiskIsConstantDepth) {
  PhantomSpec s;
  s.r0 = 50;
  const SoftContour c = sample_contour(s, 256, 128.0);
  for (double d : c.depth) EXPECT_DOUBLE_EQ(d, 50.0 * 256 / 128.0);
}

TEST(SampleContour, EllipseAxesMatchClosedForm) {
  PhantomSpec s;
  s.r0 = 50;
  s.eccentricity = 0.5;
  s.orientation = 0.3;
  const Sample smp = render_sample(s, 256);
  const DiameterReport d = diameters(smp.mask.pixels, 1.0);
  EXPECT_NEAR(d.major_mm, 2 * 50 / std::sqrt(0.5), 1.0);
  EXPECT_NEAR(d.minor_mm, 2 * 50 / std::sqrt(1.5), 1.0);
}

TEST(SampleContour, NonPositiveRadiusNamesAngle) {
  PhantomSpec s;
  s.r0 = 20;
  s.harmonics = {{3, 30.0, 0.0}};
  try {
    sample_contour(s, 64, 128.0);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("theta="), std::string::npos);
  }
}

TEST(SampleContour, Deterministic) {
  const PhantomSpec a = random_spec(Label::N2, 99, 256);
  const PhantomSpec b = random_spec(Label::N2, 99, 256);
  EXPECT_EQ(sample_contour(a, 256, 128).depth, sample_contour(b, 256, 128).depth);
  EXPECT_EQ(render_sample(a, 256).frame.pixels, render_sample(b, 256).frame.pixels);
}

TEST(RenderSample, PiecewiseConstantWithoutSpeckle) {
  PhantomSpec s;
  s.r0 = 50;
  s.speckle_sigma = 0;
  const Sample smp = render_sample(s, 256);
  double sum = 0;
  long n = 0;
  for (std::size_t y = 0; y < 256; ++y) {
    for (std::size_t x = 0; x < 256; ++x) {
      const double r = std::hypot(y - 128.0, x - 128.0);
      const double v = smp.frame.pixels(y, x);
      if (r > s.catheter_radius && r <= 50) sum += v, ++n;
      const double want = r <= s.catheter_radius ? 0.0 : r <= 50 ? kLumenLevel : r <= 60 ? kWallLevel : kTissueLevel;
      EXPECT_EQ(v, want);
    }
  }
  EXPECT_NEAR(sum / n, kLumenLevel, 1e-12);
}

TEST(RenderSample, DiskArea) {
  PhantomSpec s;
  s.r0 = 50;
  const Sample smp = render_sample(s, 256);
  double area = 0;
  for (auto v : smp.mask.pixels) area += v;
  EXPECT_NEAR(area, M_PI * 2500, 0.015 * M_PI * 2500);
  EXPECT_EQ(smp.mask.pixels, gt::disk(256, 128, 128, 50));
}

TEST(RenderSample, SpeckleStatistics) {
  PhantomSpec s;
  s.r0 = 40;
  s.speckle_sigma = 0.1;
  s.seed = 3;
  const Sample smp = render_sample(s, 256);
  double sum = 0, sq = 0;
  long n = 0;
  for (std::size_t y = 0; y < 256; ++y) {
    for (std::size_t x = 0; x < 256; ++x) {
      if (std::hypot(y - 128.0, x - 128.0) > 80) {
        const double v = smp.frame.pixels(y, x);
        sum += v, sq += v * v, ++n;
      }
    }
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, kTissueLevel, 0.005);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), kTissueLevel * 0.1, 0.005);
}

TEST(RenderSample, InvariantsOverRandomSeeds) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Label label = seed % 3 == 0 ? Label::N2 : Label::N1;
    const PhantomSpec spec = random_spec(label, seed, 64);
    if (label == Label::N2) {
      ASSERT_GE(spec.eccentricity, 0.4);
    } else {
      ASSERT_LE(spec.eccentricity, 0.2);
    }
    const Sample s = render_sample(spec, 64);
    ASSERT_EQ(gt::component_count_oracle(s.mask.pixels), 1u) << seed;
    ASSERT_EQ(s.mask.pixels(32, 32), 1) << seed;
  }
}

TEST(RenderSample, StarConvexAtFullSize) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Sample s = render_sample(random_spec(seed % 2 ? Label::N2 : Label::N1, seed, 256), 256);
    EXPECT_TRUE(is_star_convex_lumen(s.mask)) << seed;
  }
}

TEST(RenderSample, RejectsSmallFrames) {
  EXPECT_THROW(render_sample(PhantomSpec{}, 32), std::invalid_argument);
}

TEST(Dataset, ExactN2CountsAndDisjointSeeds) {
  const DatasetPlan p = plan_dataset(100, 10, 20, 0.3, 4, 64);
  std::map<Split, int> n2, total;
  std::set<std::uint64_t> seeds;
  for (const auto& e : p.entries) {
    total[e.split]++;
    n2[e.split] += e.label == Label::N2;
    seeds.insert(e.spec.seed);
  }
  EXPECT_EQ(total[Split::train], 100);
  EXPECT_EQ(n2[Split::train], 30);
  EXPECT_EQ(n2[Split::val], 3);
  EXPECT_EQ(n2[Split::test], 6);
  EXPECT_EQ(seeds.size(), p.entries.size());
}

TEST(Dataset, AllN1WhenFractionZero) {
  for (const auto& e : plan_dataset(10, 2, 2, 0.0, 1, 64).entries) EXPECT_EQ(e.label, Label::N1);
}

TEST(Dataset, RejectsBadArguments) {
  EXPECT_THROW(plan_dataset(0, 1, 1, 0.3, 0), std::invalid_argument);
  EXPECT_THROW(plan_dataset(1, 1, 1, 1.5, 0), std::invalid_argument);
}

TEST(Dataset, ManifestIsByteIdenticalAndRoundTrips) {
  const auto a = gt::temp_dir("ds_a"), b = gt::temp_dir("ds_b");
  make_dataset(4, 2, 2, 0.5, 7, a, 64);
  make_dataset(4, 2, 2, 0.5, 7, b, 64);
  EXPECT_EQ(io::read_text(a / "manifest.json"), io::read_text(b / "manifest.json"));
  const Dataset loaded = load_dataset(a);
  const Dataset mem = render_dataset(plan_dataset(4, 2, 2, 0.5, 7, 64));
  ASSERT_EQ(loaded.train.size(), 4u);
  ASSERT_EQ(loaded.val.size(), 2u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(loaded.train[i].id, mem.train[i].id);
    EXPECT_EQ(loaded.train[i].label, mem.train[i].label);
    EXPECT_EQ(loaded.train[i].mask.pixels, mem.train[i].mask.pixels);
    for (std::size_t k = 0; k < mem.train[i].frame.pixels.size(); ++k) {
      EXPECT_NEAR(loaded.train[i].frame.pixels.values()[k], mem.train[i].frame.pixels.values()[k], 1.0 / 65535);
    }
  }
}

TEST(Dataset, UnwritablePathThrows) {
  EXPECT_THROW(make_dataset(1, 1, 1, 0.0, 0, "/proc/geounet_nope", 64), std::runtime_error);
}

TEST(Dataset, MissingManifestThrows) {
  EXPECT_THROW(load_dataset(gt::temp_dir("empty")), std::runtime_error);
}

TEST(Augment, IdentityConfigReturnsInput) {
  const Sample s = render_sample(random_spec(Label::N1, 1, 128), 128);
  std::mt19937_64 rng(1);
  const Sample a = augment(s, AugmentConfig::identity(), rng);
  EXPECT_EQ(a.frame.pixels, s.frame.pixels);
  EXPECT_EQ(a.mask.pixels, s.mask.pixels);
}

TEST(Augment, QuarterTurnOfDiskKeepsMask) {
  PhantomSpec spec;
  spec.r0 = 40;
  const Sample s = render_sample(spec, 128);
  AugmentConfig c = AugmentConfig::identity();
  c.rotation_deg = {90, 90};
  std::mt19937_64 rng(1);
  const Sample a = augment(s, c, rng);
  EXPECT_GE(gt::dice_oracle(a.mask.pixels, s.mask.pixels), 0.99);
}

TEST(Augment, DeterministicAndStarConvex) {
  const Sample s = render_sample(random_spec(Label::N2, 5, 128), 128);
  const AugmentConfig c;
  for (int k = 0; k < 20; ++k) {
    std::mt19937_64 r1(k), r2(k);
    const Sample a = augment(s, c, r1), b = augment(s, c, r2);
    EXPECT_EQ(a.frame.pixels, b.frame.pixels);
    EXPECT_EQ(a.mask.pixels, b.mask.pixels);
    for (auto v : a.mask.pixels) ASSERT_LE(v, 1);
    EXPECT_TRUE(is_star_convex_lumen(a.mask));
    for (double v : a.frame.pixels) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Augment, GivesUpWhenLumenCannotFit) {
  PhantomSpec spec;
  spec.r0 = 40;
  const Sample s = render_sample(spec, 128);
  AugmentConfig c = AugmentConfig::identity();
  c.translate_px = {50, 50};
  std::mt19937_64 rng(0);
  EXPECT_THROW(augment(s, c, rng), std::runtime_error);
}

TEST(Augment, RejectsInvertedRange) {
  AugmentConfig c;
  c.blur_sigma = {1.0, 0.5};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
