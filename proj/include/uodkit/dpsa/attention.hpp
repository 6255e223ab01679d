#pragma once

// Dual-pooling sequential attention: channel attention (global avg + max
// pooling through one shared 1x1-conv MLP, sigmoid) followed by spatial
// attention (channel mean/max stack, 7x7 conv, sigmoid). Both gates are
// multiplicative.

#include <algorithm>
#include <string>

#include "uodkit/numcore/ops.hpp"
#include "uodkit/numcore/random.hpp"

namespace uodkit::dpsa {

inline constexpr std::size_t kReductionRatio = 16;
inline constexpr std::size_t kSpatialKernel = 7;

inline std::size_t hidden_channels(std::size_t channels) { return std::max<std::size_t>(1, channels / kReductionRatio); }

template <typename T>
ConvParams<T> zeros_like_conv(const ConvParams<T>& p) {
  ConvParams<T> g;
  g.weight = Tensor<T>(p.weight.shape());
  if (p.bias) g.bias = Tensor<T>(p.bias->shape());
  g.stride = p.stride;
  g.padding = p.padding;
  return g;
}

template <typename T>
void accumulate(ConvParams<T>& acc, const ConvGrads<T>& g) {
  add_inplace(acc.weight, g.dweight);
  if (acc.bias && g.dbias) add_inplace(*acc.bias, *g.dbias);
}

template <typename T, typename F>
void visit_conv(const std::string& prefix, ConvParams<T>& p, F&& f) {
  f(prefix + ".weight", p.weight);
  if (p.bias) f(prefix + ".bias", *p.bias);
}

template <typename T>
struct ChannelAttentionParams {
  ConvParams<T> reduce;  // 1x1, C -> hidden
  ConvParams<T> expand;  // 1x1, hidden -> C

  std::size_t channels() const { return reduce.in_ch(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_conv(prefix + ".reduce", reduce, f);
    visit_conv(prefix + ".expand", expand, f);
  }
  template <typename U>
  ChannelAttentionParams<U> cast() const {
    return {reduce.template cast<U>(), expand.template cast<U>()};
  }
  ChannelAttentionParams zeros_like() const { return {zeros_like_conv(reduce), zeros_like_conv(expand)}; }
};

template <typename T>
struct SpatialAttentionParams {
  ConvParams<T> conv;  // 7x7, 2 -> 1, padding 3

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_conv(prefix + ".conv", conv, f);
  }
  template <typename U>
  SpatialAttentionParams<U> cast() const {
    return {conv.template cast<U>()};
  }
  SpatialAttentionParams zeros_like() const { return {zeros_like_conv(conv)}; }
};

template <typename T>
struct DPSAParams {
  ChannelAttentionParams<T> channel;
  SpatialAttentionParams<T> spatial;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    channel.visit(prefix + ".channel", f);
    spatial.visit(prefix + ".spatial", f);
  }
  template <typename U>
  DPSAParams<U> cast() const {
    return {channel.template cast<U>(), spatial.template cast<U>()};
  }
  DPSAParams zeros_like() const { return {channel.zeros_like(), spatial.zeros_like()}; }
};

template <typename T>
ChannelAttentionParams<T> make_channel_attention(std::size_t channels, Rng& rng) {
  const std::size_t hidden = hidden_channels(channels);
  return {init_conv<T>(hidden, channels, 1, 1, 0, true, rng), init_conv<T>(channels, hidden, 1, 1, 0, true, rng)};
}

template <typename T>
SpatialAttentionParams<T> make_spatial_attention(Rng& rng) {
  return {init_conv<T>(1, 2, kSpatialKernel, 1, kSpatialKernel / 2, true, rng)};
}

template <typename T>
DPSAParams<T> make_dpsa(std::size_t channels, Rng& rng) {
  auto ca = make_channel_attention<T>(channels, rng);
  auto sa = make_spatial_attention<T>(rng);
  return {std::move(ca), std::move(sa)};
}

// ---------------------------------------------------------------- channel

template <typename T>
struct ChannelAttentionResult {
  Tensor<T> weights;  // N x C x 1 x 1, in (0,1)
  Tensor<T> y;
  // intermediates for the backward pass
  Tensor<T> avg, max;
  Tensor<T> hidden_avg, hidden_max;  // pre-ReLU
};

template <typename T>
ChannelAttentionResult<T> channel_attention(const Tensor<T>& x, const ChannelAttentionParams<T>& p) {
  require_rank4(x, "channel_attention");
  if (x.dim(1) != p.channels()) throw ShapeError("channel_attention", "C", p.channels(), x.dim(1));
  ChannelAttentionResult<T> r;
  r.avg = adaptive_pool(x, PoolMode::kAvg);
  r.max = adaptive_pool(x, PoolMode::kMax);
  r.hidden_avg = conv2d(r.avg, p.reduce);
  r.hidden_max = conv2d(r.max, p.reduce);
  Tensor<T> logits = conv2d(relu(r.hidden_avg), p.expand);
  add_inplace(logits, conv2d(relu(r.hidden_max), p.expand));
  r.weights = sigmoid(logits);
  r.y = broadcast_mul(x, r.weights);
  return r;
}

template <typename T>
struct ChannelAttentionBackward {
  Tensor<T> dx;
  ChannelAttentionParams<T> grads;
};

template <typename T>
ChannelAttentionBackward<T> channel_attention_backward(const Tensor<T>& x, const ChannelAttentionParams<T>& p,
                                                       const ChannelAttentionResult<T>& r, const Tensor<T>& dy) {
  ChannelAttentionBackward<T> out{Tensor<T>(), p.zeros_like()};
  auto bm = broadcast_mul_backward(x, r.weights, dy);
  const Tensor<T> dlogits = sigmoid_backward(r.weights, bm.dw);

  const Tensor<T> relu_avg = relu(r.hidden_avg), relu_max = relu(r.hidden_max);
  auto ge_avg = conv2d_backward(relu_avg, p.expand, dlogits);
  auto ge_max = conv2d_backward(relu_max, p.expand, dlogits);
  accumulate(out.grads.expand, ge_avg);
  accumulate(out.grads.expand, ge_max);

  auto gr_avg = conv2d_backward(r.avg, p.reduce, relu_backward(r.hidden_avg, ge_avg.dx));
  auto gr_max = conv2d_backward(r.max, p.reduce, relu_backward(r.hidden_max, ge_max.dx));
  accumulate(out.grads.reduce, gr_avg);
  accumulate(out.grads.reduce, gr_max);

  out.dx = std::move(bm.dx);
  add_inplace(out.dx, adaptive_pool_backward(x, PoolMode::kAvg, gr_avg.dx));
  add_inplace(out.dx, adaptive_pool_backward(x, PoolMode::kMax, gr_max.dx));
  return out;
}

// ---------------------------------------------------------------- spatial

template <typename T>
struct SpatialAttentionResult {
  Tensor<T> map;  // N x 1 x H x W, in (0,1)
  Tensor<T> y;
  Tensor<T> stats;  // N x 2 x H x W (channel mean, channel max)
};

template <typename T>
SpatialAttentionResult<T> spatial_attention(const Tensor<T>& x, const SpatialAttentionParams<T>& p) {
  require_rank4(x, "spatial_attention");
  SpatialAttentionResult<T> r;
  const Tensor<T> mean = channel_reduce(x, PoolMode::kAvg);
  const Tensor<T> mx = channel_reduce(x, PoolMode::kMax);
  r.stats = channel_concat<T>({&mean, &mx});
  r.map = sigmoid(conv2d(r.stats, p.conv));
  r.y = broadcast_mul(x, r.map);
  return r;
}

template <typename T>
struct SpatialAttentionBackward {
  Tensor<T> dx;
  SpatialAttentionParams<T> grads;
};

template <typename T>
SpatialAttentionBackward<T> spatial_attention_backward(const Tensor<T>& x, const SpatialAttentionParams<T>& p,
                                                       const SpatialAttentionResult<T>& r, const Tensor<T>& dy) {
  SpatialAttentionBackward<T> out{Tensor<T>(), p.zeros_like()};
  auto bm = broadcast_mul_backward(x, r.map, dy);
  const Tensor<T> dpre = sigmoid_backward(r.map, bm.dw);
  auto gc = conv2d_backward(r.stats, p.conv, dpre);
  accumulate(out.grads.conv, gc);
  out.dx = std::move(bm.dx);
  add_inplace(out.dx, channel_reduce_backward(x, PoolMode::kAvg, channel_slice(gc.dx, 0, 1)));
  add_inplace(out.dx, channel_reduce_backward(x, PoolMode::kMax, channel_slice(gc.dx, 1, 1)));
  return out;
}

// ---------------------------------------------------------------- DPSA

template <typename T>
struct DPSAResult {
  ChannelAttentionResult<T> channel;
  SpatialAttentionResult<T> spatial;
  const Tensor<T>& y() const { return spatial.y; }
};

template <typename T>
DPSAResult<T> dpsa_forward(const Tensor<T>& x, const DPSAParams<T>& p) {
  DPSAResult<T> r;
  r.channel = channel_attention(x, p.channel);
  r.spatial = spatial_attention(r.channel.y, p.spatial);
  return r;
}

template <typename T>
struct DPSABackward {
  Tensor<T> dx;
  DPSAParams<T> grads;
};

template <typename T>
DPSABackward<T> dpsa_backward(const Tensor<T>& x, const DPSAParams<T>& p, const DPSAResult<T>& r,
                              const Tensor<T>& dy) {
  auto sb = spatial_attention_backward(r.channel.y, p.spatial, r.spatial, dy);
  auto cb = channel_attention_backward(x, p.channel, r.channel, sb.dx);
  return {std::move(cb.dx), {std::move(cb.grads), std::move(sb.grads)}};
}

}  // namespace uodkit::dpsa
