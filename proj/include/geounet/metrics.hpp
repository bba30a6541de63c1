#pragma once

// Segmentation and clinical diameter metrics on Cartesian masks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/geometry.hpp"

namespace geounet {

enum class Label { N1, N2 };

inline std::string to_string(Label l) { return l == Label::N1 ? "N1" : "N2"; }

inline Label parse_label(const std::string& s) {
  if (s == "N1") return Label::N1;
  if (s == "N2") return Label::N2;
  throw std::invalid_argument("unknown frame label '" + s + "'");
}

inline double dice(const Grid<std::uint8_t>& pred, const Grid<std::uint8_t>& truth) {
  require_same_shape(pred, truth, "dice");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const bool p = pred.values()[k] != 0;
    const bool t = truth.values()[k] != 0;
    inter += p && t;
    a += p;
    b += t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

inline double dice(const CartesianMask& pred, const CartesianMask& truth) {
  return dice(pred.pixels, truth.pixels);
}

inline double mm_calibration(long frame_px, double fov_mm) {
  if (frame_px <= 0 || !(fov_mm > 0.0)) {
    throw std::invalid_argument("mm_calibration: frame_px and fov_mm must be positive");
  }
  return fov_mm / static_cast<double>(frame_px);
}

struct DiameterReport {
  double major_mm = 0.0;
  double minor_mm = 0.0;
  double major_err_mm = 0.0;
  double minor_err_mm = 0.0;
  Label label = Label::N1;

  double stent_mm() const { return std::round((major_mm + minor_mm) * 0.5 / 0.5) * 0.5; }
};

struct ChordOptions {
  int n_directions = 36;  // 5 degree increments over half a turn
  double step_px = 0.25;
};

// Chord lengths in pixels through the centre of mass of the largest component.
inline std::vector<double> com_chords(const Grid<std::uint8_t>& mask, ChordOptions opt = {}) {
  const Grid<std::uint8_t> comp = largest_component(mask);
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < comp.rows(); ++r) {
    for (std::size_t c = 0; c < comp.cols(); ++c) {
      if (comp(r, c)) {
        sr += static_cast<double>(r);
        sc += static_cast<double>(c);
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("diameters: no lumen");
  const double cr = sr / static_cast<double>(n);
  const double cc = sc / static_cast<double>(n);
  auto inside = [&](double r, double c) {
    const long ir = std::lround(r);
    const long ic = std::lround(c);
    if (ir < 0 || ic < 0 || ir >= static_cast<long>(comp.rows()) ||
        ic >= static_cast<long>(comp.cols())) {
      return false;
    }
    return comp(ir, ic) != 0;
  };
  // Distance to the last in-mask sample along a ray; 0 when the COM itself is outside.
  auto reach = [&](double ur, double uc) {
    double last = 0.0;
    for (int k = 1;; ++k) {
      const double t = k * opt.step_px;
      if (!inside(cr + t * ur, cc + t * uc)) break;
      last = t;
    }
    return last;
  };
  std::vector<double> chords(static_cast<std::size_t>(opt.n_directions));
  for (int d = 0; d < opt.n_directions; ++d) {
    const double a = std::numbers::pi * d / opt.n_directions;
    const double ur = -std::sin(a);
    const double uc = std::cos(a);
    chords[static_cast<std::size_t>(d)] = reach(ur, uc) + reach(-ur, -uc);
  }
  return chords;
}

inline DiameterReport diameters(const Grid<std::uint8_t>& mask, double mm_per_pixel,
                                ChordOptions opt = {}) {
  const auto chords = com_chords(mask, opt);
  const auto [mn, mx] = std::minmax_element(chords.begin(), chords.end());
  DiameterReport rep;
  rep.major_mm = *mx * mm_per_pixel;
  rep.minor_mm = *mn * mm_per_pixel;
  return rep;
}

inline DiameterReport diameters(const CartesianMask& mask) {
  return diameters(mask.pixels, mask.mm_per_pixel);
}

inline constexpr std::array<double, 3> kErrorThresholdsMm{0.25, 0.50, 0.75};

struct ClinicalSample {
  std::string id;
  CartesianMask pred;
  CartesianMask truth;
  std::optional<Label> label;
};

struct FrameResult {
  std::string id;
  Label label = Label::N1;
  double dice = 0.0;
  DiameterReport pred;
  DiameterReport truth;
};

struct GroupStats {
  std::size_t n_frames = 0;
  double dice_mean = 0.0;
  double dice_std = 0.0;
  std::array<double, 3> major_pass{};  // fraction of frames within each threshold
  std::array<double, 3> minor_pass{};
  bool targets_met = false;
};

struct ClinicalTable {
  GroupStats n1;
  GroupStats n2;
  std::vector<FrameResult> frames;

  const GroupStats& group(Label l) const { return l == Label::N1 ? n1 : n2; }
};

// Clinical targets: N1 needs 50/90/95% within 0.25/0.50/0.75 mm on both axes,
// N2 needs 50/70% within 0.50/0.75 mm.
inline bool meets_targets(const GroupStats& g, Label label) {
  if (g.n_frames == 0) return false;
  auto ok = [&](int idx, double need) {
    return g.major_pass[static_cast<std::size_t>(idx)] >= need &&
           g.minor_pass[static_cast<std::size_t>(idx)] >= need;
  };
  if (label == Label::N1) return ok(0, 0.50) && ok(1, 0.90) && ok(2, 0.95);
  return ok(1, 0.50) && ok(2, 0.70);
}

inline GroupStats summarize(const std::vector<const FrameResult*>& frames, Label label) {
  GroupStats g;
  g.n_frames = frames.size();
  if (frames.empty()) return g;
  double sum = 0, sq = 0;
  for (const auto* f : frames) {
    sum += f->dice;
    sq += f->dice * f->dice;
    for (std::size_t t = 0; t < kErrorThresholdsMm.size(); ++t) {
      g.major_pass[t] += f->pred.major_err_mm <= kErrorThresholdsMm[t];
      g.minor_pass[t] += f->pred.minor_err_mm <= kErrorThresholdsMm[t];
    }
  }
  const double n = static_cast<double>(frames.size());
  g.dice_mean = sum / n;
  g.dice_std = std::sqrt(std::max(0.0, sq / n - g.dice_mean * g.dice_mean));
  for (std::size_t t = 0; t < kErrorThresholdsMm.size(); ++t) {
    g.major_pass[t] /= n;
    g.minor_pass[t] /= n;
  }
  g.targets_met = meets_targets(g, label);
  return g;
}

inline FrameResult evaluate_frame(const ClinicalSample& s, double mm_per_pixel) {
  if (!s.label) throw std::invalid_argument("clinical_report: frame '" + s.id + "' has no label");
  FrameResult f;
  f.id = s.id;
  f.label = *s.label;
  f.dice = dice(s.pred.pixels, s.truth.pixels);
  f.truth = diameters(s.truth.pixels, mm_per_pixel);
  // An empty prediction has no lumen; its diameters are 0 and fail every threshold.
  bool has_pred = std::any_of(s.pred.pixels.begin(), s.pred.pixels.end(),
                              [](std::uint8_t v) { return v != 0; });
  if (has_pred) f.pred = diameters(s.pred.pixels, mm_per_pixel);
  f.pred.major_err_mm = std::abs(f.pred.major_mm - f.truth.major_mm);
  f.pred.minor_err_mm = std::abs(f.pred.minor_mm - f.truth.minor_mm);
  f.pred.label = f.truth.label = f.label;
  return f;
}

inline ClinicalTable summarize_frames(std::vector<FrameResult> frames) {
  ClinicalTable table;
  std::vector<const FrameResult*> n1, n2;
  for (const auto& f : frames) (f.label == Label::N1 ? n1 : n2).push_back(&f);
  table.n1 = summarize(n1, Label::N1);
  table.n2 = summarize(n2, Label::N2);
  table.frames = std::move(frames);
  return table;
}

inline ClinicalTable clinical_report(const std::vector<ClinicalSample>& samples,
                                     double mm_per_pixel) {
  if (samples.empty()) throw std::invalid_argument("clinical_report: no samples");
  std::vector<FrameResult> frames;
  frames.reserve(samples.size());
  for (const auto& s : samples) frames.push_back(evaluate_frame(s, mm_per_pixel));
  return summarize_frames(std::move(frames));
}

inline const char* kClinicalCsvHeader =
    "group,n_frames,dice_mean,dice_std,maj_0.25,maj_0.50,maj_0.75,min_0.25,min_0.50,min_0.75,"
    "targets_met";

inline const char* kFrameCsvHeader =
    "id,label,dice,major_pred_mm,minor_pred_mm,major_true_mm,minor_true_mm,major_err_mm,"
    "minor_err_mm,stent_pred_mm,stent_true_mm";

inline std::string to_csv(const ClinicalTable& t) {
  std::ostringstream os;
  os << kClinicalCsvHeader << '\n';
  for (Label l : {Label::N1, Label::N2}) {
    const auto& g = t.group(l);
    os << to_string(l) << ',' << g.n_frames << ',' << g.dice_mean << ',' << g.dice_std;
    for (double v : g.major_pass) os << ',' << v;
    for (double v : g.minor_pass) os << ',' << v;
    os << ',' << (g.targets_met ? 1 : 0) << '\n';
  }
  return os.str();
}

inline std::string frames_to_csv(const ClinicalTable& t) {
  std::ostringstream os;
  os << kFrameCsvHeader << '\n';
  for (const auto& f : t.frames) {
    os << f.id << ',' << to_string(f.label) << ',' << f.dice << ',' << f.pred.major_mm << ','
       << f.pred.minor_mm << ',' << f.truth.major_mm << ',' << f.truth.minor_mm << ','
       << f.pred.major_err_mm << ',' << f.pred.minor_err_mm << ',' << f.pred.stent_mm() << ','
       << f.truth.stent_mm() << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const GroupStats& g) {
  return {{"n_frames", g.n_frames},       {"dice_mean", g.dice_mean},
          {"dice_std", g.dice_std},       {"major_pass", g.major_pass},
          {"minor_pass", g.minor_pass},   {"thresholds_mm", kErrorThresholdsMm},
          {"targets_met", g.targets_met}};
}

inline nlohmann::json to_json(const ClinicalTable& t) {
  return {{"N1", to_json(t.n1)}, {"N2", to_json(t.n2)}, {"dice_space", "cartesian"}};
}

}  // namespace geounet
