#pragma once

// DPSA_SPPF: 1x1 reduce + SiLU, three max pools (5, 9, 13) taken in parallel
// from the reduced map, concatenation, DPSA, then 1x1 expand + SiLU. Without
// DPSA parameters the block is a plain SPPF with the same parallel pools.

#include <array>
#include <optional>

#include "uodkit/dpsa/attention.hpp"

namespace uodkit::dpsa {

inline constexpr std::array<std::size_t, 3> kPoolKernels{5, 9, 13};

template <typename T>
struct DPSASPPFParams {
  ConvParams<T> cv1;  // 1x1, C_in -> C_hidden
  ConvParams<T> cv2;  // 1x1, 4*C_hidden -> C_out
  std::optional<DPSAParams<T>> attention;

  std::size_t in_channels() const { return cv1.in_ch(); }
  std::size_t hidden() const { return cv1.out_ch(); }
  std::size_t out_channels() const { return cv2.out_ch(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_conv(prefix + ".cv1", cv1, f);
    if (attention) attention->visit(prefix + ".dpsa", f);
    visit_conv(prefix + ".cv2", cv2, f);
  }
  template <typename U>
  DPSASPPFParams<U> cast() const {
    DPSASPPFParams<U> p{cv1.template cast<U>(), cv2.template cast<U>(), std::nullopt};
    if (attention) p.attention = attention->template cast<U>();
    return p;
  }
  DPSASPPFParams zeros_like() const {
    DPSASPPFParams g{zeros_like_conv(cv1), zeros_like_conv(cv2), std::nullopt};
    if (attention) g.attention = attention->zeros_like();
    return g;
  }
};

/// C_hidden = max(1, C_in / 2). conv_gain scales the cv1/cv2 init bound.
template <typename T>
DPSASPPFParams<T> make_dpsa_sppf(std::size_t in_channels, std::size_t out_channels, bool with_attention, Rng& rng,
                                    double conv_gain = 1.0) {
  const std::size_t hidden = std::max<std::size_t>(1, in_channels / 2);
  DPSASPPFParams<T> p;
  p.cv1 = init_conv<T>(hidden, in_channels, 1, 1, 0, true, rng, conv_gain);
  if (with_attention) p.attention = make_dpsa<T>(4 * hidden, rng);
  p.cv2 = init_conv<T>(out_channels, 4 * hidden, 1, 1, 0, true, rng, conv_gain);
  return p;
}

template <typename T>
struct DPSASPPFResult {
  Tensor<T> pre1;                   // cv1(x)
  Tensor<T> y0;                     // SiLU(cv1(x))
  std::array<Tensor<T>, 3> pooled;  // maxpool k = 5, 9, 13 of y0
  Tensor<T> concat;                 // [y0, p5, p9, p13]
  std::optional<DPSAResult<T>> attention;
  Tensor<T> pre2;  // cv2(z)
  Tensor<T> out;

  const Tensor<T>& attended() const { return attention ? attention->y() : concat; }
};

template <typename T>
DPSASPPFResult<T> dpsa_sppf_forward(const Tensor<T>& x, const DPSASPPFParams<T>& p) {
  require_rank4(x, "dpsa_sppf_forward");
  if (x.dim(1) != p.in_channels()) throw ShapeError("dpsa_sppf_forward", "C_in", p.in_channels(), x.dim(1));
  DPSASPPFResult<T> r;
  r.pre1 = conv2d(x, p.cv1);
  r.y0 = silu(r.pre1);
  for (std::size_t i = 0; i < kPoolKernels.size(); ++i)
    r.pooled[i] = maxpool2d(r.y0, kPoolKernels[i], 1, kPoolKernels[i] / 2);
  r.concat = channel_concat<T>({&r.y0, &r.pooled[0], &r.pooled[1], &r.pooled[2]});
  if (p.attention) r.attention = dpsa_forward(r.concat, *p.attention);
  r.pre2 = conv2d(r.attended(), p.cv2);
  r.out = silu(r.pre2);
  return r;
}

template <typename T>
struct DPSASPPFBackward {
  Tensor<T> dx;
  DPSASPPFParams<T> grads;
};

template <typename T>
DPSASPPFBackward<T> dpsa_sppf_backward(const Tensor<T>& x, const DPSASPPFParams<T>& p, const DPSASPPFResult<T>& r,
                                       const Tensor<T>& dout) {
  DPSASPPFBackward<T> b{Tensor<T>(), p.zeros_like()};
  auto g2 = conv2d_backward(r.attended(), p.cv2, silu_backward(r.pre2, dout));
  accumulate(b.grads.cv2, g2);
  Tensor<T> dconcat = std::move(g2.dx);
  if (p.attention) {
    auto ab = dpsa_backward(r.concat, *p.attention, *r.attention, dconcat);
    b.grads.attention = std::move(ab.grads);
    dconcat = std::move(ab.dx);
  }
  const std::size_t h = p.hidden();
  Tensor<T> dy0 = channel_slice(dconcat, 0, h);
  for (std::size_t i = 0; i < kPoolKernels.size(); ++i) {
    const std::size_t k = kPoolKernels[i];
    add_inplace(dy0, maxpool2d_backward(r.y0, k, 1, k / 2, channel_slice(dconcat, (i + 1) * h, h)));
  }
  auto g1 = conv2d_backward(x, p.cv1, silu_backward(r.pre1, dy0));
  accumulate(b.grads.cv1, g1);
  b.dx = std::move(g1.dx);
  return b;
}

}  // namespace uodkit::dpsa
