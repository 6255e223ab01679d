#pragma once

// Toy anchor-free detector: three conv stages, a (DPSA_)SPPF block, and a 1x1
// head predicting (obj, 3 class logits, 4 box deltas) on a 16x16 grid.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "uodkit/dpsa/sppf.hpp"
#include "uodkit/eval/metrics.hpp"
#include "uodkit/fgiou/fgiou.hpp"
#include "uodkit/numcore/random.hpp"
#include "uodkit/toydet/synth.hpp"

namespace uodkit::toydet {

inline constexpr std::size_t kGrid = 16;
inline constexpr double kStride = 4.0;
inline constexpr std::size_t kHeadChannels = 1 + kNumClasses + 4;
inline constexpr double kDeltaClamp = 4.0;
// Backbone/SPPF convs use He-uniform init; without normalization layers the
// 1/sqrt(fan_in) bound shrinks activations ~3x per stage.
inline const double kBackboneInitGain = std::sqrt(6.0);
// The head starts at zero weights: with a random head the quickest way to cut
// the initial loss is to shrink the features, which saturates the attention
// gates at zero. Objectness prior: sigmoid(bias) ~ 0.01 at init.
inline constexpr double kObjBiasPrior = -4.6;
// Floor on the per-channel std used to standardize input images.
inline constexpr double kMinInputStd = 1e-3;

template <typename T>
struct ToyNetParams {
  ConvParams<T> stem;   // 3 -> 8, 3x3
  ConvParams<T> down1;  // 8 -> 16, 3x3 stride 2
  ConvParams<T> down2;  // 16 -> 32, 3x3 stride 2
  dpsa::DPSASPPFParams<T> sppf;
  ConvParams<T> head;  // 32 -> 8, 1x1

  bool uses_dpsa() const { return sppf.attention.has_value(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    dpsa::visit_conv(prefix + ".stem", stem, f);
    dpsa::visit_conv(prefix + ".down1", down1, f);
    dpsa::visit_conv(prefix + ".down2", down2, f);
    sppf.visit(prefix + ".sppf", f);
    dpsa::visit_conv(prefix + ".head", head, f);
  }
  template <typename U>
  ToyNetParams<U> cast() const {
    return {stem.template cast<U>(), down1.template cast<U>(), down2.template cast<U>(), sppf.template cast<U>(),
            head.template cast<U>()};
  }
  ToyNetParams zeros_like() const {
    return {dpsa::zeros_like_conv(stem), dpsa::zeros_like_conv(down1), dpsa::zeros_like_conv(down2),
            sppf.zeros_like(), dpsa::zeros_like_conv(head)};
  }
};

template <typename T>
ToyNetParams<T> make_toynet(bool use_dpsa, Rng& rng) {
  ToyNetParams<T> p;
  p.stem = init_conv<T>(8, 3, 3, 1, 1, true, rng, kBackboneInitGain);
  p.down1 = init_conv<T>(16, 8, 3, 2, 1, true, rng, kBackboneInitGain);
  p.down2 = init_conv<T>(32, 16, 3, 2, 1, true, rng, kBackboneInitGain);
  p.sppf = dpsa::make_dpsa_sppf<T>(32, 32, use_dpsa, rng, kBackboneInitGain);
  p.head = init_conv<T>(kHeadChannels, 32, 1, 1, 0, true, rng);
  std::fill(p.head.weight.data().begin(), p.head.weight.data().end(), T{0});
  p.head.bias->data()[0] = static_cast<T>(kObjBiasPrior);
  return p;
}

template <typename T>
struct ToyNetCache {
  Tensor<T> pre_stem, a_stem, pre_d1, a_d1, pre_d2, a_d2;
  dpsa::DPSASPPFResult<T> sppf;
  Tensor<T> out;  // N x 8 x 16 x 16
};

/// Images as an N x 3 x 64 x 64 tensor.
template <typename T>
ToyNetCache<T> toynet_forward(const ToyNetParams<T>& p, const Tensor<T>& x) {
  require_rank4(x, "toynet_forward");
  if (x.dim(1) != 3) throw ShapeError("toynet_forward", "C", 3, x.dim(1));
  if (x.dim(2) != kImageSize) throw ShapeError("toynet_forward", "H", kImageSize, x.dim(2));
  if (x.dim(3) != kImageSize) throw ShapeError("toynet_forward", "W", kImageSize, x.dim(3));
  ToyNetCache<T> c;
  c.pre_stem = conv2d(x, p.stem);
  c.a_stem = silu(c.pre_stem);
  c.pre_d1 = conv2d(c.a_stem, p.down1);
  c.a_d1 = silu(c.pre_d1);
  c.pre_d2 = conv2d(c.a_d1, p.down2);
  c.a_d2 = silu(c.pre_d2);
  c.sppf = dpsa::dpsa_sppf_forward(c.a_d2, p.sppf);
  c.out = conv2d(c.sppf.out, p.head);
  return c;
}

/// Parameter gradients for d(loss)/d(out) = dout.
template <typename T>
ToyNetParams<T> toynet_backward(const ToyNetParams<T>& p, const Tensor<T>& x, const ToyNetCache<T>& c,
                                const Tensor<T>& dout) {
  ToyNetParams<T> g = p.zeros_like();
  auto gh = conv2d_backward(c.sppf.out, p.head, dout);
  dpsa::accumulate(g.head, gh);
  auto gs = dpsa::dpsa_sppf_backward(c.a_d2, p.sppf, c.sppf, gh.dx);
  g.sppf = std::move(gs.grads);
  auto g2 = conv2d_backward(c.a_d1, p.down2, silu_backward(c.pre_d2, gs.dx));
  dpsa::accumulate(g.down2, g2);
  auto g1 = conv2d_backward(c.a_stem, p.down1, silu_backward(c.pre_d1, g2.dx));
  dpsa::accumulate(g.down1, g1);
  auto g0 = conv2d_backward(x, p.stem, silu_backward(c.pre_stem, g1.dx));
  dpsa::accumulate(g.stem, g0);
  return g;
}

/// Packs images as N x 3 x 64 x 64, each channel standardized to zero mean and
/// unit variance per image.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const ImageF32*>& imgs) {
  Tensor<T> x({imgs.size(), 3, kImageSize, kImageSize});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    const ImageF32& im = *imgs[n];
    if (im.height != kImageSize || im.width != kImageSize)
      throw std::invalid_argument("images_to_tensor: expected 64x64 images");
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = im.channel_mean(c);
      double var = 0.0;
      for (std::size_t i = 0; i < im.num_pixels(); ++i) var += (im.pixels[i * 3 + c] - mean) * (im.pixels[i * 3 + c] - mean);
      const double inv = 1.0 / std::max(std::sqrt(var / static_cast<double>(im.num_pixels())), kMinInputStd);
      for (std::size_t y = 0; y < kImageSize; ++y)
        for (std::size_t xx = 0; xx < kImageSize; ++xx)
          x.at(n, c, y, xx) = static_cast<T>((im.at(y, xx, c) - mean) * inv);
    }
  }
  return x;
}

/// Cell (i, j) has its anchor at ((j + 0.5) * stride, (i + 0.5) * stride); row-major order.
inline const std::vector<AnchorPoint>& grid_anchors() {
  static const std::vector<AnchorPoint> anchors = [] {
    std::vector<AnchorPoint> a;
    for (std::size_t i = 0; i < kGrid; ++i)
      for (std::size_t j = 0; j < kGrid; ++j) a.push_back({(j + 0.5) * kStride, (i + 0.5) * kStride});
    return a;
  }();
  return anchors;
}

inline Box decode_box(const AnchorPoint& a, double dx, double dy, double dw, double dh) {
  const double w = kStride * std::exp(std::clamp(dw, -kDeltaClamp, kDeltaClamp));
  const double h = kStride * std::exp(std::clamp(dh, -kDeltaClamp, kDeltaClamp));
  return Box::from_center(a.x + std::tanh(dx) * kStride, a.y + std::tanh(dy) * kStride, w, h);
}

/// Sample n of the head output as dense per-anchor predictions (double).
template <typename T>
DensePredictions dense_predictions(const Tensor<T>& out, std::size_t n) {
  const auto& anchors = grid_anchors();
  const std::size_t A = anchors.size();
  DensePredictions p;
  p.num_classes = kNumClasses;
  p.anchors = anchors;
  p.boxes.resize(A);
  p.class_logits.resize(A * kNumClasses);
  p.obj_logits.resize(A);
  const T* o = out.data().data() + n * kHeadChannels * A;
  for (std::size_t a = 0; a < A; ++a) {
    p.obj_logits[a] = o[a];
    for (std::size_t c = 0; c < kNumClasses; ++c) p.class_logits[a * kNumClasses + c] = o[(1 + c) * A + a];
    const std::size_t b = 1 + kNumClasses;
    p.boxes[a] = decode_box(anchors[a], o[b * A + a], o[(b + 1) * A + a], o[(b + 2) * A + a], o[(b + 3) * A + a]);
  }
  return p;
}

/// Writes d(loss)/d(out) for sample n, scaled by `scale`, chaining box
/// gradients through the decoding.
template <typename T>
void write_output_grad(const Tensor<T>& out, std::size_t n, const LossGradients& g, double scale, Tensor<T>& dout) {
  const std::size_t A = kGrid * kGrid, b = 1 + kNumClasses;
  const T* o = out.data().data() + n * kHeadChannels * A;
  T* d = dout.data().data() + n * kHeadChannels * A;
  for (std::size_t a = 0; a < A; ++a) {
    d[a] = static_cast<T>(scale * g.obj_logits[a]);
    for (std::size_t c = 0; c < kNumClasses; ++c)
      d[(1 + c) * A + a] = static_cast<T>(scale * g.class_logits[a * kNumClasses + c]);
    const auto& gb = g.boxes[a];
    for (int axis = 0; axis < 2; ++axis) {
      const double t = std::tanh(static_cast<double>(o[(b + axis) * A + a]));
      d[(b + axis) * A + a] = static_cast<T>(scale * (gb[axis] + gb[axis + 2]) * kStride * (1.0 - t * t));
      const double raw = o[(b + 2 + axis) * A + a];
      const double size = kStride * std::exp(std::clamp(raw, -kDeltaClamp, kDeltaClamp));
      const bool live = raw > -kDeltaClamp && raw < kDeltaClamp;
      d[(b + 2 + axis) * A + a] = static_cast<T>(live ? scale * 0.5 * (gb[axis + 2] - gb[axis]) * size : 0.0);
    }
  }
}

struct DecodeParams {
  double conf_threshold = 0.001;
  double nms_iou = 0.5;
  std::size_t max_detections = 100;
};

struct ScoredBox {
  int class_id = 0;
  double score = 0.0;
  Box box;
};

/// Score = sigmoid(obj) * sigmoid(class) for the best class of each anchor,
/// then greedy per-class NMS in score order.
inline std::vector<ScoredBox> decode_detections(const DensePredictions& p, const DecodeParams& dp = {}) {
  const std::size_t K = p.num_classes;
  std::vector<ScoredBox> cand;
  for (std::size_t a = 0; a < p.size(); ++a) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < K; ++c)
      if (p.class_logits[a * K + c] > p.class_logits[a * K + best]) best = c;
    const double s = stable_sigmoid(p.obj_logits[a]) * stable_sigmoid(p.class_logits[a * K + best]);
    if (s >= dp.conf_threshold) cand.push_back({static_cast<int>(best), s, p.boxes[a]});
  }
  std::stable_sort(cand.begin(), cand.end(), [](const ScoredBox& x, const ScoredBox& y) { return x.score > y.score; });
  std::vector<ScoredBox> kept;
  for (const auto& c : cand) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.class_id == c.class_id && iou(k.box, c.box) > dp.nms_iou) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(c);
    if (kept.size() == dp.max_detections) break;
  }
  return kept;
}

}  // namespace uodkit::toydet
