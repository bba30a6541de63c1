#pragma once

// Trains and evaluates every model variant on shared data and seeds, and
// lays the results out as one comparison row per variant.

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/evaluation.hpp"
#include "geounet/training.hpp"

namespace geounet {

struct AblationRow {
  Variant variant = Variant::geounet;
  std::size_t parameters = 0;
  long best_iter = 0;
  double val_metric = 0.0;
  EvalResult eval;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::optional<EvalResult> geounet_plusplus;  // the Geo-UNet checkpoint under wrap-padded inference

  const AblationRow& row(Variant v) const {
    for (const auto& r : rows) {
      if (r.variant == v) return r;
    }
    throw std::out_of_range("ablation report has no row for " + to_string(v));
  }
};

struct AblationOptions {
  std::filesystem::path out_dir;  // one subdirectory per variant
  std::ostream* progress = nullptr;
  bool with_plusplus = true;
};

inline const char* kAblationCsvHeader =
    "variant,parameters,n1_dice_mean,n1_dice_std,n1_maj_0.25,n1_maj_0.50,n1_maj_0.75,n1_min_0.25,"
    "n1_min_0.50,n1_min_0.75,n2_dice_mean,n2_dice_std,n2_maj_0.25,n2_maj_0.50,n2_maj_0.75,"
    "n2_min_0.25,n2_min_0.50,n2_min_0.75,mean_raw_components,max_raw_components";

inline AblationReport run_ablation_suite(const TrainConfig& base, const Dataset& data,
                                         const AblationOptions& opt = {}) {
  base.validate();
  if (data.test.empty()) throw std::invalid_argument("run_ablation_suite: dataset has no test split");
  AblationReport report;
  for (Variant v : all_variants()) {
    TrainConfig cfg = base;
    cfg.model = apply_variant(base.model, v);
    cfg.model.R = data.frame_size;
    TrainOptions topt;
    if (!opt.out_dir.empty()) topt.out_dir = opt.out_dir / to_string(v);
    if (opt.progress) *opt.progress << "== " << to_string(v) << std::endl;
    TrainResult<float> tr = train<float>(cfg, data, topt);
    AblationRow row;
    row.variant = v;
    row.parameters = tr.best.parameter_count();
    row.best_iter = tr.checkpoint.iter;
    row.val_metric = tr.checkpoint.val_metric;
    row.eval = evaluate(tr.best, data.test, data.mm_per_pixel);
    if (v == Variant::geounet && opt.with_plusplus) {
      report.geounet_plusplus = evaluate(tr.best, data.test, data.mm_per_pixel, {InferMode::plusplus});
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline std::string to_csv(const AblationReport& r) {
  std::ostringstream os;
  os << kAblationCsvHeader << '\n';
  for (const auto& row : r.rows) {
    os << to_string(row.variant) << ',' << row.parameters;
    for (Label l : {Label::N1, Label::N2}) {
      const auto& g = row.eval.table.group(l);
      os << ',' << g.dice_mean << ',' << g.dice_std;
      for (double v : g.major_pass) os << ',' << v;
      for (double v : g.minor_pass) os << ',' << v;
    }
    os << ',' << row.eval.mean_raw_components << ',' << row.eval.max_raw_components << '\n';
  }
  return os.str();
}

// Table layout: Dice mean/std and major/minor pass percentages per group.
inline std::string to_markdown(const AblationReport& r) {
  std::ostringstream os;
  os << std::fixed;
  os << "| Model | Params | N1 Dice | N1 major % | N1 minor % | N2 Dice | N2 major % | N2 minor % | "
        "Components (mean/max) |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  auto pct = [](const std::array<double, 3>& a) {
    std::ostringstream s;
    s << std::lround(100 * a[0]) << '/' << std::lround(100 * a[1]) << '/' << std::lround(100 * a[2]);
    return s.str();
  };
  for (const auto& row : r.rows) {
    const auto& n1 = row.eval.table.n1;
    const auto& n2 = row.eval.table.n2;
    os << "| " << to_string(row.variant) << " | " << row.parameters << " | " << std::setprecision(3)
       << n1.dice_mean << "/" << n1.dice_std << " | " << pct(n1.major_pass) << " | " << pct(n1.minor_pass)
       << " | " << n2.dice_mean << "/" << n2.dice_std << " | " << pct(n2.major_pass) << " | "
       << pct(n2.minor_pass) << " | " << std::setprecision(2) << row.eval.mean_raw_components << "/"
       << row.eval.max_raw_components << " |\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"variant", to_string(row.variant)},
                    {"parameters", row.parameters},
                    {"best_iter", row.best_iter},
                    {"val_metric", row.val_metric},
                    {"eval", to_json(row.eval)}});
  }
  nlohmann::json j{{"rows", rows}};
  if (r.geounet_plusplus) j["geounet_plusplus"] = to_json(*r.geounet_plusplus);
  return j;
}

}  // namespace geounet
