#pragma once

// Runs inference over a list of samples and collects the clinical table plus
// per-frame diagnostics.

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/inference.hpp"
#include "geounet/metrics.hpp"
#include "geounet/phantom.hpp"

namespace geounet {

struct FrameDiagnostics {
  std::string id;
  std::size_t raw_components = 0;
  double discontinuity = 0.0;  // 0 for pixel-only models
  std::vector<double> contour;
};

struct EvalResult {
  ClinicalTable table;
  std::vector<FrameDiagnostics> frames;
  double mean_discontinuity = 0.0;
  double mean_raw_components = 0.0;
  std::size_t max_raw_components = 0;
  double seconds_per_frame = 0.0;
};

// on_mask, if given, is called with each sample and its predicted mask.
template <Segmenter M, typename F = std::nullptr_t>
EvalResult evaluate(const M& model, const std::vector<Sample>& samples, double mm_per_pixel,
                    const InferOptions& opt = {}, F&& on_mask = nullptr) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  EvalResult r;
  std::vector<ClinicalSample> cs;
  cs.reserve(samples.size());
  double infer_s = 0.0;
  for (const auto& s : samples) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = infer(model, s.frame, opt);
    infer_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    FrameDiagnostics d{s.id, res.raw_components, 0.0, res.contour.depth};
    if (!res.contour.depth.empty()) d.discontinuity = discontinuity_score(res.contour);
    r.mean_discontinuity += d.discontinuity;
    r.mean_raw_components += static_cast<double>(d.raw_components);
    r.max_raw_components = std::max(r.max_raw_components, d.raw_components);
    if constexpr (!std::is_same_v<std::decay_t<F>, std::nullptr_t>) on_mask(s, res.mask);
    r.frames.push_back(std::move(d));
    cs.push_back({s.id, std::move(res.mask), s.mask, s.label});
  }
  const double n = static_cast<double>(samples.size());
  r.mean_discontinuity /= n;
  r.mean_raw_components /= n;
  r.seconds_per_frame = infer_s / n;
  r.table = clinical_report(cs, mm_per_pixel);
  return r;
}

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j = to_json(r.table);
  j["mean_discontinuity"] = r.mean_discontinuity;
  j["mean_raw_components"] = r.mean_raw_components;
  j["max_raw_components"] = r.max_raw_components;
  j["seconds_per_frame"] = r.seconds_per_frame;
  return j;
}

}  // namespace geounet
