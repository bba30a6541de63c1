#pragma once

// Optimization loop: Cartesian augmentation -> polar conversion -> forward ->
// unified loss -> backward, with gradient accumulation, Adam, a linear
// learning-rate decay, periodic validation and best-checkpoint retention.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/augment.hpp"
#include "geounet/checkpoint.hpp"
#include "geounet/geometry.hpp"
#include "geounet/losses.hpp"
#include "geounet/model.hpp"
#include "geounet/phantom.hpp"

namespace geounet {

struct TrainConfig {
  long batch_size = 3;
  long grad_accum_steps = 16;
  double lr_start = 1e-4;
  double lr_end = 1e-7;
  long total_iters = 2000;
  std::uint64_t seed = 0;
  long val_every = 100;
  AugmentConfig augment;
  ModelConfig model;
  LossWeights loss;

  void validate() const {
    if (batch_size <= 0 || grad_accum_steps <= 0) {
      throw std::invalid_argument("TrainConfig: batch_size and grad_accum_steps must be positive");
    }
    if (!(lr_start >= lr_end && lr_end > 0.0)) {
      throw std::invalid_argument("TrainConfig: need lr_start >= lr_end > 0");
    }
    if (total_iters <= 0) throw std::invalid_argument("TrainConfig: total_iters must be positive");
    if (val_every <= 0) throw std::invalid_argument("TrainConfig: val_every must be positive");
    augment.validate();
    model.validate();
    loss.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"grad_accum_steps", c.grad_accum_steps},
          {"lr_start", c.lr_start},
          {"lr_end", c.lr_end},
          {"total_iters", c.total_iters},
          {"seed", c.seed},
          {"val_every", c.val_every},
          {"augment", to_json(c.augment)},
          {"model", to_json(c.model)},
          {"loss",
           {{"lambda_dice", c.loss.lambda_dice},
            {"w_ce", c.loss.w_ce},
            {"w_huber", c.loss.w_huber},
            {"w_dense", c.loss.w_dense},
            {"hausdorff_alpha", c.loss.hausdorff_alpha}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_accum_steps = j.value("grad_accum_steps", c.grad_accum_steps);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.seed = j.value("seed", c.seed);
  c.val_every = j.value("val_every", c.val_every);
  if (j.contains("augment")) c.augment = augment_config_from_json(j.at("augment"), c.augment);
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss.lambda_dice = l.value("lambda_dice", c.loss.lambda_dice);
    c.loss.w_ce = l.value("w_ce", c.loss.w_ce);
    c.loss.w_huber = l.value("w_huber", c.loss.w_huber);
    c.loss.w_dense = l.value("w_dense", c.loss.w_dense);
    c.loss.hausdorff_alpha = l.value("hausdorff_alpha", c.loss.hausdorff_alpha);
  }
  return c;
}

// Linear decay from lr_start at iteration 0 to lr_end at total_iters.
inline double lr_schedule(long iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.total_iters) {
    throw std::invalid_argument("lr_schedule: iteration " + std::to_string(iter) + " outside [0, " +
                                std::to_string(cfg.total_iters) + "]");
  }
  return cfg.lr_start +
         (cfg.lr_end - cfg.lr_start) * static_cast<double>(iter) / static_cast<double>(cfg.total_iters);
}

template <typename T>
class Adam {
 public:
  Adam(const std::vector<nn::Param<T>>& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }

  void step(std::vector<nn::Param<T>>& params, const std::vector<std::vector<T>>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i].value;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double g = static_cast<double>(grads[i][k]);
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
        w[k] = static_cast<T>(static_cast<double>(w[k]) - lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_));
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Network input and dense target for one sample in the model's representation.
template <typename T>
struct TrainExample {
  std::string id;
  Grid<T> input;
  Grid<std::uint8_t> target;
};

template <typename T>
TrainExample<T> prepare_example(const Sample& s, const ModelConfig& cfg) {
  if (static_cast<long>(s.frame.side()) != cfg.R) {
    throw std::invalid_argument("model R=" + std::to_string(cfg.R) + " does not match frame side " +
                                std::to_string(s.frame.side()) + " of sample '" + s.id + "'");
  }
  if (cfg.representation == Representation::cartesian) {
    return {s.id, s.frame.pixels.template cast<T>(), s.mask.pixels};
  }
  return {s.id, cartesian_to_polar(s.frame, cfg.R).pixels.template cast<T>(),
          cartesian_to_polar(s.mask, cfg.R).pixels};
}

// Per-sample augmentation stream, independent of loading order.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index, long epoch) {
  return std::mt19937_64(mix_seed(seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(epoch)));
}

// Loss and gradients for one example; accumulates parameter gradients.
template <typename T>
LossBreakdown accumulate_example(const Model<T>& model, const TrainExample<T>& ex, const LossWeights& w,
                                 typename Model<T>::Gradients& grads) {
  Tape<T> tape;
  const ModelConfig& cfg = model.config();
  const ForwardOutput<T> out = apply_heads(model.forward_logits(ex.input, &tape), cfg);
  OutputGrads<T> og;
  LossBreakdown b = unified_loss(out, ex.target, w, cfg, &og);
  if (!std::isfinite(b.total)) {
    throw std::runtime_error("non-finite loss on sample '" + ex.id + "': " + to_json(b).dump());
  }
  model.backward(tape, apply_heads_backward(out, og, cfg), grads);
  return b;
}

// Huber loss for contour-bearing models, soft Dice loss for pixel-only ones; lower is better.
template <typename T>
double validation_metric(const Model<T>& model, const std::vector<TrainExample<T>>& val) {
  const ModelConfig& cfg = model.config();
  double sum = 0.0;
  for (const auto& ex : val) {
    const ForwardOutput<T> out = model.forward(ex.input);
    if (cfg.use_contour_branch) {
      PolarMask m{ex.target, 0.0, 0.0};
      sum += static_cast<double>(huber(out.s_c, clipped_depth(mask_to_contour_depth(m), ex.target.cols())));
    } else {
      sum += static_cast<double>(soft_dice(*out.p_pix, ex.target));
    }
  }
  return val.empty() ? 0.0 : sum / static_cast<double>(val.size());
}

inline const char* validation_metric_name(const ModelConfig& cfg) {
  return cfg.use_contour_branch ? "huber" : "dice_loss";
}

struct CheckpointRef {
  std::filesystem::path path;  // empty when training ran without an output directory
  long iter = 0;
  double val_metric = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // checkpoint.bin and train_log.jsonl; empty: keep in memory
  std::ostream* progress = nullptr;
};

template <typename T>
struct TrainResult {
  Model<T> best;
  CheckpointRef checkpoint;
  double final_val_metric = 0.0;
  long updates = 0;
  std::vector<nlohmann::json> log;
};

// Draws training indices: a fresh permutation per epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::pair<std::size_t, long> next() {
    if (pos_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return {order_[pos_++], epoch_};
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed_, 0xe90c, static_cast<std::uint64_t>(epoch_)));
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  long epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opt = {}) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: dataset has no train split");
  if (data.val.empty()) throw std::invalid_argument("train: dataset has no validation split");

  std::ofstream log_file;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    log_file.open(opt.out_dir / "train_log.jsonl");
    if (!log_file) throw std::runtime_error("train: cannot write log in '" + opt.out_dir.string() + "'");
  }
  TrainResult<T> result{Model<T>(cfg.model), {}, 0.0, 0, {}};
  Model<T> model(cfg.model);
  Adam<T> adam(model.params());
  auto grads = model.zero_gradients();

  std::vector<TrainExample<T>> val;
  for (const auto& s : data.val) val.push_back(prepare_example<T>(s, cfg.model));

  auto emit = [&](nlohmann::json j) {
    if (log_file) log_file << j.dump() << '\n';
    if (opt.progress) *opt.progress << j.dump() << std::endl;
    result.log.push_back(std::move(j));
  };

  EpochSampler sampler(data.train.size(), cfg.seed);
  const long per_update = cfg.batch_size * cfg.grad_accum_steps;
  std::optional<double> best;
  const auto start = std::chrono::steady_clock::now();
  for (long it = 0; it < cfg.total_iters; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& g : grads) std::fill(g.begin(), g.end(), T{});
    LossBreakdown mean;
    auto add = [](std::optional<double>& acc, const std::optional<double>& v) {
      if (v) acc = acc.value_or(0.0) + *v;
    };
    for (long k = 0; k < per_update; ++k) {
      const auto [idx, epoch] = sampler.next();
      std::mt19937_64 rng = sample_rng(cfg.seed, idx, epoch);
      const Sample aug = augment(data.train[idx], cfg.augment, rng);
      const LossBreakdown b = accumulate_example(model, prepare_example<T>(aug, cfg.model), cfg.loss, grads);
      mean.total += b.total;
      add(mean.ce, b.ce);
      add(mean.huber, b.huber);
      add(mean.dense, b.dense);
      add(mean.dice, b.dice);
      add(mean.hausdorff, b.hausdorff);
    }
    const double inv = 1.0 / static_cast<double>(per_update);
    for (auto& g : grads) {
      for (auto& v : g) v = static_cast<T>(static_cast<double>(v) * inv);
    }
    mean.total *= inv;
    for (auto* f : {&mean.ce, &mean.huber, &mean.dense, &mean.dice, &mean.hausdorff}) {
      if (*f) **f *= inv;
    }
    const double lr = lr_schedule(it, cfg);
    adam.step(model.params(), grads, lr);
    const auto t1 = std::chrono::steady_clock::now();
    emit({{"iter", it + 1},
          {"lr", lr},
          {"loss", to_json(mean)},
          {"wall_ms", std::chrono::duration<double, std::milli>(t1 - t0).count()}});

    if ((it + 1) % cfg.val_every == 0 || it + 1 == cfg.total_iters) {
      const double metric = validation_metric(model, val);
      result.final_val_metric = metric;
      const bool improved = !best || metric < *best;
      if (improved) {
        best = metric;
        result.best = model;
        result.checkpoint.iter = it + 1;
        result.checkpoint.val_metric = metric;
      }
      emit({{"iter", it + 1},
            {"val_metric", metric},
            {"val_kind", validation_metric_name(cfg.model)},
            {"best", improved},
            {"elapsed_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
    }
  }
  result.updates = cfg.total_iters;
  if (!opt.out_dir.empty()) {
    result.checkpoint.path = opt.out_dir / "checkpoint.bin";
    save_checkpoint(result.checkpoint.path, result.best,
                    {{"iter", result.checkpoint.iter},
                     {"val_metric", result.checkpoint.val_metric},
                     {"val_kind", validation_metric_name(cfg.model)},
                     {"train_config", to_json(cfg)}});
  }
  return result;
}

template <typename T = float>
TrainResult<T> train(const TrainConfig& cfg, const std::filesystem::path& dataset_dir,
                     const TrainOptions& opt = {}) {
  return train<T>(cfg, load_dataset(dataset_dir), opt);
}

}  // namespace geounet
