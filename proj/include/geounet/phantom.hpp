#pragma once

// Synthetic vessel cross-sections: a dark star-convex lumen around the
// catheter, a bright wall ring and mid-grey tissue, with multiplicative
// speckle. N1 phantoms are near-circular, N2 phantoms are compressed.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/geometry.hpp"
#include "geounet/image_io.hpp"
#include "geounet/metrics.hpp"

namespace geounet {

inline constexpr double kLumenLevel = 0.15;
inline constexpr double kWallLevel = 0.6;
inline constexpr double kTissueLevel = 0.4;

// Stateless 64-bit mixer used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

struct Harmonic {
  int k = 2;
  double amplitude = 0.0;  // px
  double phase = 0.0;      // rad
};

struct PhantomSpec {
  double r0 = 50.0;
  std::vector<Harmonic> harmonics;
  double eccentricity = 0.0;
  double orientation = 0.0;  // rad, direction of the ellipse's minor axis
  double wall_thickness = 10.0;
  double speckle_sigma = 0.0;
  double catheter_radius = 6.0;
  Label label = Label::N1;
  std::uint64_t seed = 0;

  // Lumen boundary radius in px at angle theta.
  double radius(double theta) const {
    double r = r0 / std::sqrt(1.0 + eccentricity * std::cos(2.0 * (theta - orientation)));
    for (const auto& h : harmonics) r += h.amplitude * std::cos(h.k * theta + h.phase);
    return r;
  }
};

struct Sample {
  CartesianFrame frame;
  CartesianMask mask;
  Label label = Label::N1;
  std::string id;
};

// Throws if the spec violates its invariants for a field of view of radius r_max_px.
inline void validate_spec(const PhantomSpec& spec, double r_max_px) {
  if (!(spec.eccentricity >= 0.0 && spec.eccentricity < 1.0)) {
    throw std::invalid_argument("phantom: eccentricity must be in [0,1)");
  }
  if (spec.r0 <= 0.0 || spec.wall_thickness < 0.0 || spec.speckle_sigma < 0.0 ||
      spec.catheter_radius < 0.0) {
    throw std::invalid_argument("phantom: negative size parameter");
  }
  constexpr int kChecks = 3600;
  for (int i = 0; i < kChecks; ++i) {
    const double theta = kTwoPi * i / kChecks;
    const double r = spec.radius(theta);
    std::ostringstream where;
    where << " at theta=" << theta << " rad (radius " << r << " px)";
    if (r <= 0.0) throw std::invalid_argument("phantom: non-positive contour radius" + where.str());
    if (r < spec.catheter_radius + 2.0) {
      throw std::invalid_argument("phantom: contour closer than 2 px to the catheter" + where.str());
    }
    if (r >= r_max_px) throw std::invalid_argument("phantom: contour leaves the field of view" + where.str());
  }
}

// Contour depth per angle bin in polar column units (radius * R / r_max_px).
inline SoftContour sample_contour(const PhantomSpec& spec, long R, double r_max_px) {
  if (R < 8) throw std::invalid_argument("sample_contour: R must be >= 8");
  validate_spec(spec, r_max_px);
  SoftContour out;
  out.depth.resize(static_cast<std::size_t>(R));
  for (long i = 0; i < R; ++i) {
    const double d = spec.radius(kTwoPi * static_cast<double>(i) / R) * R / r_max_px;
    if (d > static_cast<double>(R - 1)) {
      throw std::invalid_argument("sample_contour: depth beyond the last radius bin at row " +
                                  std::to_string(i));
    }
    out.depth[static_cast<std::size_t>(i)] = d;
  }
  return out;
}

inline Sample render_sample(const PhantomSpec& spec, long H) {
  if (H < 64) throw std::invalid_argument("render_sample: H must be >= 64");
  const auto side = static_cast<std::size_t>(H);
  const double r_max = static_cast<double>(H) / 2.0;
  validate_spec(spec, r_max);
  const double mm = mm_calibration(H, kDefaultFovMm);
  Sample s;
  s.label = spec.label;
  s.frame = make_frame(Grid<double>(side, side), mm);
  s.mask = make_mask(Grid<std::uint8_t>(side, side), mm);
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5eed));
  std::normal_distribution<double> noise(0.0, 1.0);
  const Point c = s.frame.center;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dr = static_cast<double>(y) - c.row;
      const double dc = static_cast<double>(x) - c.col;
      const double r = std::hypot(dr, dc);
      const double boundary = spec.radius(detail::offset_angle(dr, dc));
      double v;
      if (r <= spec.catheter_radius) {
        v = 0.0;
      } else if (r <= boundary) {
        v = kLumenLevel;
      } else if (r <= boundary + spec.wall_thickness) {
        v = kWallLevel;
      } else {
        v = kTissueLevel;
      }
      if (spec.speckle_sigma > 0.0 && v > 0.0) {
        v = std::clamp(v * (1.0 + spec.speckle_sigma * noise(rng)), 0.0, 1.0);
      }
      s.frame.pixels(y, x) = v;
      s.mask.pixels(y, x) = r <= boundary ? 1 : 0;
    }
  }
  fill_rays_to_center(s.mask.pixels, c);
  return s;
}

// Draws a valid spec for the given regime, scaled to an HxH frame.
inline PhantomSpec random_spec(Label label, std::uint64_t seed, long H) {
  std::mt19937_64 rng(mix_seed(seed, 0xa11ce));
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double s = static_cast<double>(H) / 256.0;
  PhantomSpec spec;
  spec.label = label;
  spec.seed = seed;
  spec.catheter_radius = 6.0 * s;
  spec.wall_thickness = uni(6.0, 14.0) * s;
  spec.speckle_sigma = uni(0.05, 0.2);
  spec.orientation = uni(0.0, std::numbers::pi);
  if (label == Label::N1) {
    spec.r0 = uni(35.0, 70.0) * s;
    spec.eccentricity = uni(0.0, 0.2);
    const int n = static_cast<int>(uni(0.0, 3.0));
    for (int i = 0; i < n; ++i) {
      spec.harmonics.push_back({2 + i, uni(0.0, 3.0) * s, uni(0.0, kTwoPi)});
    }
  } else {
    spec.r0 = uni(30.0, 55.0) * s;
    spec.eccentricity = uni(0.4, 0.7);
    const int n = 1 + static_cast<int>(uni(0.0, 3.0));
    for (int i = 0; i < n; ++i) {
      spec.harmonics.push_back({2 + static_cast<int>(uni(0.0, 4.0)), uni(2.0, 6.0) * s,
                                uni(0.0, kTwoPi)});
    }
  }
  // Shrink until the contour fits comfortably inside the field of view.
  const double r_max = static_cast<double>(H) / 2.0;
  for (int attempt = 0; attempt < 50; ++attempt) {
    double lo = 1e9, hi = 0.0;
    for (int i = 0; i < 720; ++i) {
      const double r = spec.radius(kTwoPi * i / 720.0);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi <= 0.85 * r_max && lo >= spec.catheter_radius + 4.0) return spec;
    if (hi > 0.85 * r_max) {
      spec.r0 *= 0.92;
      for (auto& h : spec.harmonics) h.amplitude *= 0.92;
    } else {
      for (auto& h : spec.harmonics) h.amplitude *= 0.8;
      spec.r0 *= 1.03;
    }
  }
  throw std::runtime_error("random_spec: could not fit phantom for seed " + std::to_string(seed));
}

inline nlohmann::json to_json(const PhantomSpec& s) {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& x : s.harmonics) h.push_back({{"k", x.k}, {"amplitude", x.amplitude}, {"phase", x.phase}});
  return {{"r0", s.r0},
          {"harmonics", h},
          {"eccentricity", s.eccentricity},
          {"orientation", s.orientation},
          {"wall_thickness", s.wall_thickness},
          {"speckle_sigma", s.speckle_sigma},
          {"catheter_radius", s.catheter_radius},
          {"label", to_string(s.label)},
          {"seed", s.seed}};
}

inline PhantomSpec spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  s.r0 = j.at("r0").get<double>();
  for (const auto& h : j.at("harmonics")) {
    s.harmonics.push_back({h.at("k").get<int>(), h.at("amplitude").get<double>(),
                           h.at("phase").get<double>()});
  }
  s.eccentricity = j.at("eccentricity").get<double>();
  s.orientation = j.value("orientation", 0.0);
  s.wall_thickness = j.at("wall_thickness").get<double>();
  s.speckle_sigma = j.at("speckle_sigma").get<double>();
  s.catheter_radius = j.at("catheter_radius").get<double>();
  s.label = parse_label(j.at("label").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

struct DatasetEntry {
  std::string id;
  Label label = Label::N1;
  Split split = Split::train;
  PhantomSpec spec;
};

struct DatasetPlan {
  long frame_size = 256;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;
};

// Labels and specs for every split. Each split uses its own seed stream and
// has exactly round(n * n2_fraction) N2 frames.
inline DatasetPlan plan_dataset(long n_train, long n_val, long n_test, double n2_fraction,
                                std::uint64_t seed, long frame_size = 256) {
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw std::invalid_argument("make_dataset: split counts must be positive");
  }
  if (!(n2_fraction >= 0.0 && n2_fraction <= 1.0)) {
    throw std::invalid_argument("make_dataset: n2_fraction must be in [0,1]");
  }
  DatasetPlan plan;
  plan.frame_size = frame_size;
  plan.seed = seed;
  const std::pair<Split, long> splits[] = {{Split::train, n_train}, {Split::val, n_val},
                                           {Split::test, n_test}};
  for (auto [split, n] : splits) {
    const auto n2 = static_cast<long>(std::floor(static_cast<double>(n) * n2_fraction + 0.5));
    std::vector<Label> labels(static_cast<std::size_t>(n), Label::N1);
    std::fill(labels.begin(), labels.begin() + n2, Label::N2);
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(split), 0x1abe1));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (long i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05ld", to_string(split).c_str(), i);
      const std::uint64_t s =
          mix_seed(seed, static_cast<std::uint64_t>(split) + 1, static_cast<std::uint64_t>(i));
      const Label label = labels[static_cast<std::size_t>(i)];
      plan.entries.push_back({id, label, split, random_spec(label, s, frame_size)});
    }
  }
  return plan;
}

inline Sample render_entry(const DatasetEntry& e, long frame_size) {
  Sample s = render_sample(e.spec, frame_size);
  s.id = e.id;
  return s;
}

inline nlohmann::json manifest_json(const DatasetPlan& plan) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : plan.entries) {
    samples.push_back({{"id", e.id},
                       {"label", to_string(e.label)},
                       {"split", to_string(e.split)},
                       {"spec", to_json(e.spec)}});
  }
  return {{"format", "geounet-phantoms"},
          {"version", 1},
          {"seed", plan.seed},
          {"frame_size", plan.frame_size},
          {"mm_per_pixel", mm_calibration(plan.frame_size, kDefaultFovMm)},
          {"samples", samples}};
}

// Writes images/<id>.png, masks/<id>.png and manifest.json under out_dir.
inline nlohmann::json make_dataset(long n_train, long n_val, long n_test, double n2_fraction,
                                   std::uint64_t seed, const std::filesystem::path& out_dir,
                                   long frame_size = 256) {
  const DatasetPlan plan = plan_dataset(n_train, n_val, n_test, n2_fraction, seed, frame_size);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw std::runtime_error("make_dataset: cannot create '" + out_dir.string() + "': " + ec.message());
  for (const auto& e : plan.entries) {
    const Sample s = render_entry(e, frame_size);
    io::save_image(out_dir / "images" / (e.id + ".png"), s.frame.pixels);
    io::save_mask(out_dir / "masks" / (e.id + ".png"), s.mask.pixels);
  }
  nlohmann::json manifest = manifest_json(plan);
  io::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

struct Dataset {
  long frame_size = 256;
  double mm_per_pixel = kDefaultFovMm / 256.0;
  std::vector<Sample> train, val, test;

  std::vector<Sample>& split(Split s) { return s == Split::train ? train : s == Split::val ? val : test; }
  const std::vector<Sample>& split(Split s) const {
    return s == Split::train ? train : s == Split::val ? val : test;
  }
};

// Renders a plan directly in memory.
inline Dataset render_dataset(const DatasetPlan& plan) {
  Dataset d;
  d.frame_size = plan.frame_size;
  d.mm_per_pixel = mm_calibration(plan.frame_size, kDefaultFovMm);
  for (const auto& e : plan.entries) d.split(e.split).push_back(render_entry(e, plan.frame_size));
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw std::runtime_error("no manifest.json in '" + dir.string() + "'");
  }
  const auto m = nlohmann::json::parse(io::read_text(manifest_path));
  Dataset d;
  d.frame_size = m.at("frame_size").get<long>();
  d.mm_per_pixel = m.at("mm_per_pixel").get<double>();
  for (const auto& e : m.at("samples")) {
    Sample s;
    s.id = e.at("id").get<std::string>();
    s.label = parse_label(e.at("label").get<std::string>());
    s.frame = make_frame(io::load_image(dir / "images" / (s.id + ".png")), d.mm_per_pixel);
    s.mask = make_mask(io::load_mask(dir / "masks" / (s.id + ".png")), d.mm_per_pixel);
    d.split(parse_split(e.at("split").get<std::string>())).push_back(std::move(s));
  }
  return d;
}

}  // namespace geounet
