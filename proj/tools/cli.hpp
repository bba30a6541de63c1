#pragma once

// geounet command line: generate, train, eval, infer, ablate.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geounet/ablation.hpp"
#include "geounet/checkpoint.hpp"
#include "geounet/evaluation.hpp"
#include "geounet/image_io.hpp"
#include "geounet/inference.hpp"
#include "geounet/phantom.hpp"
#include "geounet/training.hpp"

namespace geounet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Dataset directory: the flag, else $GEOUNET_DATA_DIR.
inline fs::path data_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("GEOUNET_DATA_DIR"); env && *env) return env;
  throw UsageError("no dataset given: pass --data or set GEOUNET_DATA_DIR");
}

// Written at the end of every command; records what ran and what it produced.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json inputs = json::object();
  json outputs = json::array();
  json summary = json::object();
  std::string started = utc_now();
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void write(const fs::path& out_dir) const {
    json j{{"tool", "geounet"},
           {"command", command},
           {"argv", argv},
           {"started", started},
           {"finished", utc_now()},
           {"wall_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
           {"inputs", inputs},
           {"outputs", outputs},
           {"summary", summary}};
    io::write_text(out_dir / "run.json", j.dump(2) + "\n");
  }
};

struct TrainFlags {
  std::string config;
  std::string variant = "geounet";
  std::optional<long> iters, batch_size, grad_accum, val_every, depth, base_channels;
  std::optional<double> lr_start, lr_end;
  std::optional<std::uint64_t> seed;
  bool no_augment = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "TrainConfig JSON; flags override it")->check(CLI::ExistingFile);
    app->add_option("--variant", variant, "Model variant")
        ->check(CLI::IsMember({"geounet", "no-cdfelu", "contour-only", "polar-pixel", "cartesian-pixel"}));
    app->add_option("--iters", iters, "Optimizer updates")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
    app->add_option("--grad-accum", grad_accum, "Micro-batches per update")->check(CLI::PositiveNumber);
    app->add_option("--val-every", val_every)->check(CLI::PositiveNumber);
    app->add_option("--depth", depth, "UNet levels")->check(CLI::Range(2, 8));
    app->add_option("--base-channels", base_channels)->check(CLI::PositiveNumber);
    app->add_option("--lr-start", lr_start)->check(CLI::PositiveNumber);
    app->add_option("--lr-end", lr_end)->check(CLI::PositiveNumber);
    app->add_option("--seed", seed);
    app->add_flag("--no-augment", no_augment, "Disable augmentation");
  }

  // Model R follows the dataset frame size.
  TrainConfig resolve(long frame_size) const {
    TrainConfig c;
    if (!config.empty()) c = train_config_from_json(json::parse(io::read_text(config)));
    if (iters) c.total_iters = *iters;
    if (batch_size) c.batch_size = *batch_size;
    if (grad_accum) c.grad_accum_steps = *grad_accum;
    if (val_every) c.val_every = *val_every;
    if (depth) c.model.depth = *depth;
    if (base_channels) c.model.base_channels = *base_channels;
    if (lr_start) c.lr_start = *lr_start;
    if (lr_end) c.lr_end = *lr_end;
    if (seed) c.seed = *seed, c.model.seed = *seed;
    if (no_augment) c.augment.enabled = false;
    c.model = apply_variant(c.model, parse_variant(variant));
    c.model.R = frame_size;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

inline int cmd_generate(long n_train, long n_val, long n_test, double n2, std::uint64_t seed, long frame,
                        const fs::path& out, RunManifest& run) {
  const json manifest = make_dataset(n_train, n_val, n_test, n2, seed, out, frame);
  run.inputs = {{"n_train", n_train}, {"n_val", n_val},          {"n_test", n_test},
                {"n2_fraction", n2},  {"seed", seed},            {"frame_size", frame}};
  run.outputs = {"manifest.json", "images/", "masks/"};
  run.summary = {{"samples", manifest.at("samples").size()}};
  return kOk;
}

inline int cmd_train(const TrainFlags& flags, const fs::path& data_dir, const fs::path& out, RunManifest& run,
                     std::ostream& log) {
  const Dataset data = load_dataset(data_dir);
  const TrainConfig cfg = flags.resolve(data.frame_size);
  fs::create_directories(out);
  io::write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  TrainOptions opt;
  opt.out_dir = out;
  opt.progress = &log;
  const TrainResult<float> r = train<float>(cfg, data, opt);
  run.inputs = {{"data", data_dir.string()}, {"variant", flags.variant}, {"config", to_json(cfg)}};
  run.outputs = {"config.json", "checkpoint.bin", "train_log.jsonl"};
  run.summary = {{"best_iter", r.checkpoint.iter},
                 {"best_val_metric", r.checkpoint.val_metric},
                 {"val_kind", validation_metric_name(cfg.model)},
                 {"final_val_metric", r.final_val_metric},
                 {"parameters", r.best.parameter_count()}};
  return kOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::string split = "test";
  std::string mode = "plain";
  long pad_rows = -1;
  long start_row = -1;
  bool render = false;
  bool oracle = false;
};

inline void write_eval_outputs(const EvalResult& r, const fs::path& out, RunManifest& run) {
  io::write_text(out / "clinical.csv", to_csv(r.table));
  io::write_text(out / "clinical.json", to_json(r).dump(2) + "\n");
  io::write_text(out / "frames.csv", frames_to_csv(r.table));
  json contours = json::array();
  for (const auto& f : r.frames) {
    contours.push_back({{"id", f.id},
                        {"contour", f.contour},
                        {"discontinuity", f.discontinuity},
                        {"raw_components", f.raw_components}});
  }
  io::write_text(out / "contours.json", contours.dump() + "\n");
  for (const char* f : {"clinical.csv", "clinical.json", "frames.csv", "contours.json", "masks/"}) {
    run.outputs.push_back(f);
  }
  run.summary = {{"N1", to_json(r.table.n1)},
                 {"N2", to_json(r.table.n2)},
                 {"mean_discontinuity", r.mean_discontinuity},
                 {"seconds_per_frame", r.seconds_per_frame}};
}

// Stands in for a model: returns the ground-truth masks unchanged.
inline EvalResult evaluate_oracle(const std::vector<Sample>& samples, double mm_per_pixel) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  EvalResult r;
  std::vector<ClinicalSample> cs;
  for (const auto& s : samples) {
    r.frames.push_back({s.id, count_components(s.mask.pixels), 0.0, {}});
    cs.push_back({s.id, s.mask, s.mask, s.label});
  }
  r.mean_raw_components = 1.0;
  r.max_raw_components = 1;
  r.table = clinical_report(cs, mm_per_pixel);
  return r;
}

inline int cmd_eval(const EvalFlags& flags, const fs::path& data_dir, const fs::path& out, RunManifest& run) {
  const Dataset data = load_dataset(data_dir);
  const auto& samples = data.split(parse_split(flags.split));
  if (samples.empty()) throw std::runtime_error("split '" + flags.split + "' is empty");
  fs::create_directories(out / "masks");
  if (flags.render) fs::create_directories(out / "overlays");
  auto emit = [&](const Sample& s, const CartesianMask& pred) {
    io::save_mask(out / "masks" / (s.id + ".png"), pred.pixels);
    if (flags.render) io::save_overlay(out / "overlays" / (s.id + ".png"), s.frame.pixels, pred.pixels, s.mask.pixels);
  };
  EvalResult r;
  if (flags.oracle) {
    r = evaluate_oracle(samples, data.mm_per_pixel);
    for (const auto& s : samples) emit(s, s.mask);
  } else {
    if (flags.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --oracle");
    json meta;
    const Model<float> model = load_checkpoint<float>(flags.checkpoint, &meta);
    if (model.config().R != data.frame_size) {
      throw std::runtime_error("checkpoint R=" + std::to_string(model.config().R) +
                               " does not match dataset frame size " + std::to_string(data.frame_size));
    }
    InferOptions opt{parse_infer_mode(flags.mode), flags.pad_rows, flags.start_row};
    r = evaluate(model, samples, data.mm_per_pixel, opt, emit);
  }
  write_eval_outputs(r, out, run);
  if (flags.render) run.outputs.push_back("overlays/");
  run.inputs = {{"data", data_dir.string()},
                {"split", flags.split},
                {"mode", flags.mode},
                {"checkpoint", flags.oracle ? "oracle" : flags.checkpoint},
                {"dice_space", "cartesian"}};
  return kOk;
}

inline int cmd_infer(const std::string& checkpoint, const std::string& image, const std::string& mode,
                     const fs::path& out, RunManifest& run) {
  const Model<float> model = load_checkpoint<float>(checkpoint);
  const CartesianFrame frame = make_frame(io::load_image(image));
  const auto res = infer(model, frame, {parse_infer_mode(mode)});
  fs::create_directories(out);
  io::save_mask(out / "mask.png", res.mask.pixels);
  json j{{"mode", mode}, {"raw_components", res.raw_components}};
  if (!res.contour.depth.empty()) {
    j["contour"] = res.contour.depth;
    j["discontinuity"] = discontinuity_score(res.contour);
  }
  io::write_text(out / "prediction.json", j.dump(2) + "\n");
  run.inputs = {{"checkpoint", checkpoint}, {"image", image}, {"mode", mode}};
  run.outputs = {"mask.png", "prediction.json"};
  run.summary = j;
  run.summary.erase("contour");
  return kOk;
}

inline int cmd_ablate(const TrainFlags& flags, const fs::path& data_dir, const fs::path& out, RunManifest& run,
                      std::ostream& log) {
  const Dataset data = load_dataset(data_dir);
  const TrainConfig cfg = flags.resolve(data.frame_size);
  AblationOptions opt;
  opt.out_dir = out;
  opt.progress = &log;
  const AblationReport rep = run_ablation_suite(cfg, data, opt);
  io::write_text(out / "ablation.csv", to_csv(rep));
  io::write_text(out / "ablation.json", to_json(rep).dump(2) + "\n");
  io::write_text(out / "ablation.md", to_markdown(rep));
  run.inputs = {{"data", data_dir.string()}, {"config", to_json(cfg)}};
  run.outputs = {"ablation.csv", "ablation.json", "ablation.md"};
  for (Variant v : all_variants()) run.outputs.push_back(to_string(v) + "/");
  run.summary = to_json(rep);
  return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Polar lumen segmentation: phantoms, training, inference, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "geounet 1.0");

  RunManifest run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
  std::string out_dir, data_dir;

  long n_train = 100, n_val = 20, n_test = 50, frame = 256;
  double n2 = 0.3;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("generate", "Write a synthetic phantom dataset");
  gen->add_option("--n-train", n_train)->check(CLI::PositiveNumber);
  gen->add_option("--n-val", n_val)->check(CLI::PositiveNumber);
  gen->add_option("--n-test", n_test)->check(CLI::PositiveNumber);
  gen->add_option("--n2-fraction", n2, "Share of N2 frames per split")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", seed);
  gen->add_option("--frame-size", frame, "Frame side in pixels")->check(CLI::Range(64, 4096));
  gen->add_option("--out", out_dir, "Dataset directory (default $GEOUNET_DATA_DIR)");

  TrainFlags train_flags;
  auto* tr = app.add_subcommand("train", "Train one model variant");
  train_flags.add_to(tr);
  tr->add_option("--data", data_dir, "Dataset directory (default $GEOUNET_DATA_DIR)");
  tr->add_option("--out", out_dir, "Run directory")->required();

  EvalFlags eval_flags;
  auto* ev = app.add_subcommand("eval", "Segment a split and write the clinical report");
  ev->add_option("--checkpoint", eval_flags.checkpoint)->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Dataset directory (default $GEOUNET_DATA_DIR)");
  ev->add_option("--split", eval_flags.split)->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--mode", eval_flags.mode)->check(CLI::IsMember({"plain", "plusplus"}));
  ev->add_option("--pad-rows", eval_flags.pad_rows, "Wrap-pad rows (default round(R/4))");
  ev->add_option("--start-row", eval_flags.start_row, "Slice start (default round(R/12))");
  ev->add_flag("--render", eval_flags.render, "Write prediction/truth overlay PNGs");
  ev->add_flag("--oracle", eval_flags.oracle, "Use ground truth as the prediction");
  ev->add_option("--out", out_dir, "Run directory")->required();

  std::string ckpt, image, mode = "plain";
  auto* inf = app.add_subcommand("infer", "Segment one frame");
  inf->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  inf->add_option("--image", image, "Square grayscale PNG")->required()->check(CLI::ExistingFile);
  inf->add_option("--mode", mode)->check(CLI::IsMember({"plain", "plusplus"}));
  inf->add_option("--out", out_dir, "Run directory")->required();

  TrainFlags ablate_flags;
  auto* ab = app.add_subcommand("ablate", "Train and compare all five variants");
  ablate_flags.add_to(ab);
  ab->add_option("--data", data_dir, "Dataset directory (default $GEOUNET_DATA_DIR)");
  ab->add_option("--out", out_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kUsageError;
  }

  try {
    int rc = kOk;
    fs::path out_path;
    if (gen->parsed()) {
      run.command = "generate";
      out_path = data_root(out_dir);
      rc = cmd_generate(n_train, n_val, n_test, n2, seed, frame, out_path, run);
    } else {
      out_path = out_dir;
      fs::create_directories(out_path);
      if (tr->parsed()) {
        run.command = "train";
        rc = cmd_train(train_flags, data_root(data_dir), out_path, run, out);
      } else if (ev->parsed()) {
        run.command = "eval";
        rc = cmd_eval(eval_flags, data_root(data_dir), out_path, run);
      } else if (inf->parsed()) {
        run.command = "infer";
        rc = cmd_infer(ckpt, image, mode, out_path, run);
      } else {
        run.command = "ablate";
        rc = cmd_ablate(ablate_flags, data_root(data_dir), out_path, run, out);
      }
    }
    run.write(out_path);
    return rc;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace geounet::cli
