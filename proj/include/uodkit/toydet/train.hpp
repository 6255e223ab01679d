#pragma once

// Toy-detector training: AdamW (or SGD with momentum), cosine learning-rate
// decay, gradient-norm clipping, per-epoch validation mAP, the four-arm
// ablation, and the loss-weight probe.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "uodkit/enhance/pipeline.hpp"
#include "uodkit/eval/evaluate.hpp"
#include "uodkit/numcore/param_list.hpp"
#include "uodkit/toydet/model.hpp"

namespace uodkit::toydet {

enum class Optimizer { kSGD, kAdamW };

struct TrainConfig {
  int epochs = 30;
  double lr = 0.01;
  double lr_final_ratio = 0.01;  // cosine decays lr to lr * ratio
  double momentum = 0.937;
  double weight_decay = 0.0005;
  double grad_clip = 10.0;  // max global gradient norm per step; 0 disables
  Optimizer optimizer = Optimizer::kAdamW;
  double adam_beta2 = 0.999;  // AdamW uses momentum as beta1
  double adam_eps = 1e-8;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  bool use_dpsa = true;
  bool use_fgiou = true;
  bool use_enhance = false;
  LossWeights loss_weights;
  FocalParams focal;
  double val_fraction = 0.2;
  int patience = 0;  // early stopping on val mAP50; 0 disables
  unsigned threads = 1;  // enhancement only
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean per-image weighted total over the training split
  double giou = 0.0, focal = 0.0, obj_focal = 0.0;
  double map50 = 0.0, map50_95 = 0.0;
  double lr = 0.0;  // rate used by the epoch's last step
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct Split {
  std::vector<std::size_t> train, val;
};

/// Seeded shuffle; the first floor(n * val_fraction) indices (at least one
/// when n >= 2) form the validation split. Both lists come back sorted.
inline Split split_indices(std::size_t n, std::uint64_t seed, double val_fraction) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5b11u));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
  if (n >= 2) nv = std::clamp<std::size_t>(nv, 1, n - 1);
  Split s{{idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end()}, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv)}};
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

inline double cosine_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return cfg.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  const double lo = cfg.lr * cfg.lr_final_ratio;
  return lo + 0.5 * (cfg.lr - lo) * (1.0 + std::cos(std::numbers::pi * t));
}

/// v = momentum * v + (g + wd * p);  p -= lr * v.
template <typename T>
void sgd_step(ToyNetParams<T>& params, ToyNetParams<T>& grads, ToyNetParams<T>& velocity, double lr,
              double momentum, double weight_decay) {
  auto p = collect_params<T>(params, "");
  auto g = collect_params<T>(grads, "");
  auto v = collect_params<T>(velocity, "");
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pd = p[i].second->data();
    auto gd = g[i].second->data();
    auto vd = v[i].second->data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const T step = gd[k] + static_cast<T>(weight_decay) * pd[k];
      vd[k] = static_cast<T>(momentum) * vd[k] + step;
      pd[k] -= static_cast<T>(lr) * vd[k];
    }
  }
}

/// Decoupled weight decay Adam; m and v are first and second moment
/// estimates, t the 1-based step count.
template <typename T>
void adamw_step(ToyNetParams<T>& params, ToyNetParams<T>& grads, ToyNetParams<T>& m, ToyNetParams<T>& v,
                std::size_t t, double lr, double beta1, double beta2, double eps, double weight_decay) {
  auto p = collect_params<T>(params, "");
  auto g = collect_params<T>(grads, "");
  auto mm = collect_params<T>(m, "");
  auto vv = collect_params<T>(v, "");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pd = p[i].second->data();
    auto gd = g[i].second->data();
    auto md = mm[i].second->data();
    auto vd = vv[i].second->data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
      const double gk = gd[k];
      md[k] = static_cast<T>(beta1 * md[k] + (1.0 - beta1) * gk);
      vd[k] = static_cast<T>(beta2 * vd[k] + (1.0 - beta2) * gk * gk);
      const double upd = (md[k] / c1) / (std::sqrt(vd[k] / c2) + eps) + weight_decay * pd[k];
      pd[k] = static_cast<T>(pd[k] - lr * upd);
    }
  }
}

template <typename T>
double squared_norm(ToyNetParams<T>& params) {
  double acc = 0.0;
  for (auto& [name, t] : collect_params<T>(params, ""))
    for (T v : t->data()) acc += static_cast<double>(v) * v;
  return acc;
}

/// Rescales `grads` so its global L2 norm is at most max_norm; returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(ToyNetParams<T>& grads, double max_norm) {
  const double norm = std::sqrt(squared_norm(grads));
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& [name, t] : collect_params<T>(grads, ""))
      for (T& v : t->data()) v *= scale;
  }
  return norm;
}

struct BatchLoss {
  std::vector<LossBreakdown> per_sample;
};

/// Forward + loss for a batch; when `grads` is non-null, also backpropagates
/// the sum of per-image losses.
template <typename T>
BatchLoss batch_loss(const ToyNetParams<T>& params, const std::vector<const ImageF32*>& imgs,
                     const std::vector<const std::vector<GroundTruthBox>*>& targets, LossKind kind,
                     const FocalParams& fp, const LossWeights& w, ToyNetParams<T>* grads) {
  const Tensor<T> x = images_to_tensor<T>(imgs);
  const ToyNetCache<T> cache = toynet_forward(params, x);
  BatchLoss out;
  Tensor<T> dout(cache.out.shape());
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    const DensePredictions pred = dense_predictions(cache.out, n);
    LossGradients g;
    out.per_sample.push_back(detection_loss(pred, *targets[n], kind, fp, w, nullptr, grads ? &g : nullptr));
    if (grads) write_output_grad(cache.out, n, g, 1.0, dout);
  }
  if (grads) *grads = toynet_backward(params, x, cache, dout);
  return out;
}

/// Decoded detections for every image, tagged with its stem.
inline std::vector<PredictionRecord> predict(const ToyNetParams<float>& params,
                                             const std::vector<const LabeledImage*>& items,
                                             const DecodeParams& dp = {}, std::size_t batch = 16) {
  std::vector<PredictionRecord> recs;
  for (std::size_t b = 0; b < items.size(); b += batch) {
    std::vector<const ImageF32*> imgs;
    for (std::size_t i = b; i < std::min(items.size(), b + batch); ++i) imgs.push_back(&items[i]->image);
    const auto cache = toynet_forward(params, images_to_tensor<float>(imgs));
    for (std::size_t n = 0; n < imgs.size(); ++n)
      for (const auto& d : decode_detections(dense_predictions(cache.out, n), dp))
        recs.push_back({items[b + n]->stem, d.class_id, d.score, d.box});
  }
  sort_records(recs);
  return recs;
}

/// Ground truths of `items` in the same layout read_annotations produces.
inline AnnotationSet annotation_set(std::vector<const LabeledImage*> items) {
  std::sort(items.begin(), items.end(), [](const LabeledImage* a, const LabeledImage* b) { return a->stem < b->stem; });
  AnnotationSet set;
  for (const auto* li : items) {
    const int id = static_cast<int>(set.image_ids.size());
    set.image_ids.push_back(li->stem);
    for (const auto& o : li->objects) set.gts.push_back({id, static_cast<int>(o.class_id), o.box});
  }
  return set;
}

struct TrainResult {
  ToyNetParams<float> params;
  std::vector<EpochLog> log;
  std::vector<PredictionRecord> val_predictions;  // from the final parameters
  Split split;
  EvalSummary final_eval;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

inline TrainResult train_toy(const TrainConfig& cfg, const std::vector<LabeledImage>& data,
                             const EpochCallback& on_epoch = {}) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("train_toy: lr must be >= 0");
  if (cfg.batch == 0 || cfg.epochs < 1) throw std::invalid_argument("train_toy: batch and epochs must be positive");
  if (data.size() < 2) throw std::invalid_argument("train_toy: need at least 2 samples");

  std::vector<LabeledImage> items = data;
  if (cfg.use_enhance)
    for (auto& li : items) li.image = enhance_pipeline(li.image, EnhanceConfig{}, cfg.threads);

  TrainResult res;
  res.split = split_indices(items.size(), cfg.seed, cfg.val_fraction);
  std::vector<const LabeledImage*> val;
  for (std::size_t i : res.split.val) val.push_back(&items[i]);
  const AnnotationSet val_ann = annotation_set(val);

  Rng rng(derive_seed(cfg.seed, 0x1417u));
  res.params = make_toynet<float>(cfg.use_dpsa, rng);
  ToyNetParams<float> velocity = res.params.zeros_like();
  ToyNetParams<float> second_moment = res.params.zeros_like();
  const LossKind kind = cfg.use_fgiou ? LossKind::kFGIoU : LossKind::kBaseline;

  const std::size_t ntrain = res.split.train.size();
  const std::size_t steps_per_epoch = (ntrain + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  std::size_t step = 0;
  double best_map = -1.0;
  int since_best = 0;
  std::vector<std::size_t> order = res.split.train;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<LossBreakdown> losses(items.size());
    double lr = cfg.lr;
    for (std::size_t b = 0; b < ntrain; b += cfg.batch, ++step) {
      std::vector<const ImageF32*> imgs;
      std::vector<const std::vector<GroundTruthBox>*> targets;
      const std::size_t e = std::min(ntrain, b + cfg.batch);
      for (std::size_t k = b; k < e; ++k) {
        imgs.push_back(&items[order[k]].image);
        targets.push_back(&items[order[k]].objects);
      }
      ToyNetParams<float> grads;
      const BatchLoss bl = batch_loss(res.params, imgs, targets, kind, cfg.focal, cfg.loss_weights, &grads);
      for (std::size_t k = b; k < e; ++k) {
        const LossBreakdown& l = bl.per_sample[k - b];
        if (!std::isfinite(l.total)) throw TrainingDiverged(step, "non-finite loss on sample " + items[order[k]].stem);
        losses[order[k]] = l;
      }
      if (!std::isfinite(clip_grad_norm(grads, cfg.grad_clip))) throw TrainingDiverged(step, "non-finite gradient");
      lr = cosine_lr(cfg, step, total_steps);
      if (cfg.optimizer == Optimizer::kAdamW)
        adamw_step(res.params, grads, velocity, second_moment, step + 1, lr, cfg.momentum, cfg.adam_beta2,
                   cfg.adam_eps, cfg.weight_decay);
      else
        sgd_step(res.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      for (auto& [name, t] : collect_params<float>(res.params, "net"))
        if (!t->all_finite()) throw TrainingDiverged(step, "non-finite parameter " + name);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (std::size_t i : res.split.train) {  // index order keeps the sum independent of shuffling
      log.loss += losses[i].total;
      log.giou += losses[i].giou;
      log.focal += losses[i].focal;
      log.obj_focal += losses[i].obj_focal;
    }
    const double inv = 1.0 / static_cast<double>(ntrain);
    log.loss *= inv;
    log.giou *= inv;
    log.focal *= inv;
    log.obj_focal *= inv;

    res.val_predictions = predict(res.params, val);
    res.final_eval = evaluate_records(res.val_predictions, val_ann);
    log.map50 = res.final_eval.map50;
    log.map50_95 = res.final_eval.map50_95;
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (cfg.patience > 0) {
      if (log.map50 > best_map) {
        best_map = log.map50;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        res.stopped_early = true;
        break;
      }
    }
  }
  return res;
}

/// Synthetic samples as labeled images (stems "s00000", ...), optionally
/// degraded, and quantized to 8 bits exactly as a PNG round trip would be.
inline std::vector<LabeledImage> make_dataset(std::size_t n, std::uint64_t seed, bool degrade) {
  std::vector<LabeledImage> out;
  const auto samples = synth_dataset(n, seed);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "s%05zu", i);
    ImageF32 img = degrade ? degrade_underwater(samples[i].image, derive_seed(samples[i].seed, 0xde9u)) : samples[i].image;
    out.push_back({stem, quantize8(img), samples[i].objects});
  }
  return out;
}

struct AblationRow {
  std::string name;
  bool dpsa = false, fgiou = false;
  double map50 = 0.0, map50_95 = 0.0;
  std::vector<EpochLog> log;
};

/// The four (DPSA, FGIoU) arms from one base config and seed.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<LabeledImage>& data,
                                       const std::function<void(const AblationRow&)>& on_row = {}) {
  std::vector<AblationRow> rows(4);
  const std::array<const char*, 4> names{"baseline", "+DPSA", "+FGIoU", "both"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].name = names[i];
    rows[i].dpsa = (i & 1) != 0;
    rows[i].fgiou = (i & 2) != 0;
  }
  for (auto& row : rows) {
    TrainConfig cfg = base;
    cfg.use_dpsa = row.dpsa;
    cfg.use_fgiou = row.fgiou;
    const TrainResult r = train_toy(cfg, data);
    row.map50 = r.log.back().map50;
    row.map50_95 = r.log.back().map50_95;
    row.log = r.log;
    if (on_row) on_row(row);
  }
  return rows;
}

inline std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  auto cell = [](double v, double base) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.1f (%+.1f)", 100.0 * v, 100.0 * (v - base));
    return std::string(buf);
  };
  std::string md = "| Dataset | Method | DPSA_SPPF | FGIoU Loss | mAP50 (%) | mAP50:95 (%) |\n";
  md += "|---|---|---|---|---|---|\n";
  const AblationRow& b = rows.front();
  for (const auto& r : rows) {
    md += "| synthetic | toynet | " + std::string(r.dpsa ? "Yes" : "--") + " | " + (r.fgiou ? "Yes" : "--") + " | " +
          cell(r.map50, b.map50) + " | " + cell(r.map50_95, b.map50_95) + " |\n";
  }
  return md;
}

struct ProbeResult {
  std::string weight;  // "box", "cls" or "obj"
  double factor = 1.0;
  double map50 = 0.0;
  double delta = 0.0;  // map50 - reference map50
};

/// Re-trains with each loss weight scaled by 0.8 and 1.2 in turn.
inline std::vector<ProbeResult> weight_probe(const TrainConfig& base, const std::vector<LabeledImage>& data,
                                             double reference_map50,
                                             const std::function<void(const ProbeResult&)>& on_result = {}) {
  std::vector<ProbeResult> out;
  for (const char* which : {"box", "cls", "obj"})
    for (double f : {0.8, 1.2}) {
      TrainConfig cfg = base;
      double& w = which[0] == 'b' ? cfg.loss_weights.box : which[0] == 'c' ? cfg.loss_weights.cls : cfg.loss_weights.obj;
      w *= f;
      const TrainResult r = train_toy(cfg, data);
      ProbeResult p{which, f, r.log.back().map50, r.log.back().map50 - reference_map50};
      if (on_result) on_result(p);
      out.push_back(p);
    }
  return out;
}

}  // namespace uodkit::toydet
