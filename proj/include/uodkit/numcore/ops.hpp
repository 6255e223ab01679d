#pragma once

// Forward and backward kernels for the fixed set of operations used by the
// attention blocks and the toy detector. Every backward function takes the
// forward inputs plus the upstream gradient and returns input gradients; no
// graph is recorded.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "uodkit/numcore/tensor.hpp"

namespace uodkit {

template <typename T>
struct ConvParams {
  Tensor<T> weight;               // (out_ch, in_ch, kh, kw)
  std::optional<Tensor<T>> bias;  // (out_ch)
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_ch() const { return weight.dim(0); }
  std::size_t in_ch() const { return weight.dim(1); }
  std::size_t kh() const { return weight.dim(2); }
  std::size_t kw() const { return weight.dim(3); }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> p;
    p.weight = weight.template cast<U>();
    if (bias) p.bias = bias->template cast<U>();
    p.stride = stride;
    p.padding = padding;
    return p;
  }
};

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dweight;
  std::optional<Tensor<T>> dbias;
};

namespace detail {

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* op,
                                const char* axis) {
  if (in + 2 * pad < k) throw ShapeError(op, axis, k, in + 2 * pad);
  return (in + 2 * pad - k) / stride + 1;
}

// Range of output indices o for which o*stride - pad + k lies in [0, in).
inline void valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad, std::size_t k,
                        std::size_t& lo, std::size_t& hi) {
  // need o*stride + k >= pad  and  o*stride + k - pad < in
  lo = (k >= pad) ? 0 : (pad - k + stride - 1) / stride;
  const std::ptrdiff_t lim = static_cast<std::ptrdiff_t>(in) + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(k);  // o*stride < lim
  if (lim <= 0) {
    hi = lo;
    return;
  }
  hi = std::min<std::size_t>(out, (static_cast<std::size_t>(lim) + stride - 1) / stride);
  if (hi < lo) hi = lo;
}

template <typename T>
void check_conv(const Tensor<T>& x, const ConvParams<T>& p) {
  require_rank4(x, "conv2d");
  if (p.weight.rank() != 4) throw ShapeError("conv2d", "weight_rank", 4, p.weight.rank());
  if (x.dim(1) != p.in_ch()) throw ShapeError("conv2d", "in_ch", p.in_ch(), x.dim(1));
  if (p.bias && p.bias->size() != p.out_ch()) throw ShapeError("conv2d", "bias", p.out_ch(), p.bias->size());
  if (p.stride == 0) throw ShapeError("conv2d", "stride", 1, 0);
}

}  // namespace detail

/// 2-D cross-correlation (no kernel flip), NCHW. Output spatial size is
/// floor((H + 2*padding - kh) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  detail::check_conv(x, p);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = p.out_ch(), KH = p.kh(), KW = p.kw(), s = p.stride, pad = p.padding;
  const std::size_t OH = detail::conv_out_dim(H, KH, s, pad, "conv2d", "H");
  const std::size_t OW = detail::conv_out_dim(W, KW, s, pad, "conv2d", "W");
  Tensor<T> y({N, O, OH, OW});
  const T* xd = x.data().data();
  const T* wd = p.weight.data().data();
  T* yd = y.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      T* yp = yd + (n * O + o) * OH * OW;
      if (p.bias) std::fill(yp, yp + OH * OW, (*p.bias)[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const T* xp = xd + (n * C + c) * H * W;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          std::size_t oy0, oy1;
          detail::valid_range(OH, H, s, pad, ky, oy0, oy1);
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const T wv = wd[((o * C + c) * KH + ky) * KW + kx];
            std::size_t ox0, ox1;
            detail::valid_range(OW, W, s, pad, kx, ox0, ox1);
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const T* xrow = xp + static_cast<std::ptrdiff_t>((oy * s + ky - pad) * W + kx) - static_cast<std::ptrdiff_t>(pad);
              T* yrow = yp + oy * OW;
              if (s == 1) {
                for (std::size_t ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox];
              } else {
                for (std::size_t ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox * s];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& dy) {
  detail::check_conv(x, p);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = p.out_ch(), KH = p.kh(), KW = p.kw(), s = p.stride, pad = p.padding;
  const std::size_t OH = dy.dim(2), OW = dy.dim(3);
  if (dy.dim(1) != O) throw ShapeError("conv2d_backward", "out_ch", O, dy.dim(1));
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(p.weight.shape()), std::nullopt};
  if (p.bias) g.dbias = Tensor<T>(p.bias->shape());
  const T* xd = x.data().data();
  const T* wd = p.weight.data().data();
  const T* dyd = dy.data().data();
  T* dxd = g.dx.data().data();
  T* dwd = g.dweight.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const T* gp = dyd + (n * O + o) * OH * OW;
      if (g.dbias) {
        T acc = 0;
        for (std::size_t i = 0; i < OH * OW; ++i) acc += gp[i];
        (*g.dbias)[o] += acc;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const T* xp = xd + (n * C + c) * H * W;
        T* dxp = dxd + (n * C + c) * H * W;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          std::size_t oy0, oy1;
          detail::valid_range(OH, H, s, pad, ky, oy0, oy1);
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const std::size_t widx = ((o * C + c) * KH + ky) * KW + kx;
            const T wv = wd[widx];
            std::size_t ox0, ox1;
            detail::valid_range(OW, W, s, pad, kx, ox0, ox1);
            T acc = 0;
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const std::ptrdiff_t row = static_cast<std::ptrdiff_t>((oy * s + ky - pad) * W + kx) - static_cast<std::ptrdiff_t>(pad);
              const T* xrow = xp + row;
              T* dxrow = dxp + row;
              const T* grow = gp + oy * OW;
              if (s == 1) {
                for (std::size_t ox = ox0; ox < ox1; ++ox) {
                  acc += grow[ox] * xrow[ox];
                  dxrow[ox] += wv * grow[ox];
                }
              } else {
                for (std::size_t ox = ox0; ox < ox1; ++ox) {
                  acc += grow[ox] * xrow[ox * s];
                  dxrow[ox * s] += wv * grow[ox];
                }
              }
            }
            dwd[widx] += acc;
          }
        }
      }
    }
  }
  return g;
}

/// Max pooling with a -inf sentinel for padded cells. k must be odd.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t padding) {
  require_rank4(x, "maxpool2d");
  if (k % 2 == 0) throw std::invalid_argument("maxpool2d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ShapeError("maxpool2d", "stride", 1, 0);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = detail::conv_out_dim(H, k, stride, padding, "maxpool2d", "H");
  const std::size_t OW = detail::conv_out_dim(W, k, stride, padding, "maxpool2d", "W");
  Tensor<T> y({N, C, OH, OW});
  // Separable: max over rows then columns gives the same result as the k*k
  // window, including the -inf handling of padded cells.
  std::vector<T> rowmax(H * OW);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xp = x.data().data() + nc * H * W;
    T* yp = y.data().data() + nc * OH * OW;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(padding);
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, x0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W), x0 + static_cast<std::ptrdiff_t>(k));
        T m = -std::numeric_limits<T>::infinity();
        for (std::ptrdiff_t i = lo; i < hi; ++i) m = std::max(m, xp[h * W + i]);
        rowmax[h * OW + ox] = m;
      }
    }
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(padding);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, y0);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), y0 + static_cast<std::ptrdiff_t>(k));
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T m = -std::numeric_limits<T>::infinity();
        for (std::ptrdiff_t i = lo; i < hi; ++i) m = std::max(m, rowmax[i * OW + ox]);
        yp[oy * OW + ox] = m;
      }
    }
  }
  return y;
}

/// Routes each output gradient to the first maximal element of its window in
/// row-major order.
template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t padding,
                             const Tensor<T>& dy) {
  require_rank4(x, "maxpool2d_backward");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = dy.dim(2), OW = dy.dim(3);
  Tensor<T> dx(x.shape());
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xp = x.data().data() + nc * H * W;
    const T* gp = dy.data().data() + nc * OH * OW;
    T* dxp = dx.data().data() + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(padding);
      const std::size_t ylo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, y0));
      const std::size_t yhi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), y0 + static_cast<std::ptrdiff_t>(k)));
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(padding);
        const std::size_t xlo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, x0));
        const std::size_t xhi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W), x0 + static_cast<std::ptrdiff_t>(k)));
        std::size_t best = ylo * W + xlo;
        for (std::size_t yy = ylo; yy < yhi; ++yy)
          for (std::size_t xx = xlo; xx < xhi; ++xx)
            if (xp[yy * W + xx] > xp[best]) best = yy * W + xx;
        dxp[best] += gp[oy * OW + ox];
      }
    }
  }
  return dx;
}

enum class PoolMode { kAvg, kMax };

/// Global pooling to N x C x 1 x 1.
template <typename T>
Tensor<T> adaptive_pool(const Tensor<T>& x, PoolMode mode) {
  require_rank4(x, "adaptive_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> y({N, C, 1, 1});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xp = x.data().data() + nc * HW;
    if (mode == PoolMode::kAvg) {
      T acc = 0;
      for (std::size_t i = 0; i < HW; ++i) acc += xp[i];
      y[nc] = acc / static_cast<T>(HW);
    } else {
      y[nc] = *std::max_element(xp, xp + HW);
    }
  }
  return y;
}

template <typename T>
Tensor<T> adaptive_pool_backward(const Tensor<T>& x, PoolMode mode, const Tensor<T>& dy) {
  require_rank4(x, "adaptive_pool_backward");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> dx(x.shape());
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xp = x.data().data() + nc * HW;
    T* dxp = dx.data().data() + nc * HW;
    if (mode == PoolMode::kAvg) {
      const T g = dy[nc] / static_cast<T>(HW);
      for (std::size_t i = 0; i < HW; ++i) dxp[i] = g;
    } else {
      dxp[std::max_element(xp, xp + HW) - xp] = dy[nc];
    }
  }
  return dx;
}

/// Reduction across the channel axis: N x C x H x W -> N x 1 x H x W.
template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& x, PoolMode mode) {
  require_rank4(x, "channel_reduce");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> y({N, 1, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    T* yp = y.data().data() + n * HW;
    const T* xp = x.data().data() + n * C * HW;
    for (std::size_t i = 0; i < HW; ++i) yp[i] = xp[i];
    for (std::size_t c = 1; c < C; ++c) {
      const T* xc = xp + c * HW;
      if (mode == PoolMode::kAvg)
        for (std::size_t i = 0; i < HW; ++i) yp[i] += xc[i];
      else
        for (std::size_t i = 0; i < HW; ++i) yp[i] = std::max(yp[i], xc[i]);
    }
    if (mode == PoolMode::kAvg)
      for (std::size_t i = 0; i < HW; ++i) yp[i] /= static_cast<T>(C);
  }
  return y;
}

template <typename T>
Tensor<T> channel_reduce_backward(const Tensor<T>& x, PoolMode mode, const Tensor<T>& dy) {
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> dx(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* gp = dy.data().data() + n * HW;
    const T* xp = x.data().data() + n * C * HW;
    T* dxp = dx.data().data() + n * C * HW;
    if (mode == PoolMode::kAvg) {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < HW; ++i) dxp[c * HW + i] = gp[i] / static_cast<T>(C);
    } else {
      for (std::size_t i = 0; i < HW; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (xp[c * HW + i] > xp[best * HW + i]) best = c;
        dxp[best * HW + i] = gp[i];
      }
    }
  }
  return dx;
}

template <typename T>
T sigmoid_scalar(T v) {
  if (v >= 0) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

/// Takes the forward output y = sigmoid(x).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
  return dx;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid_scalar(x[i]);
  return y;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = sigmoid_scalar(x[i]);
    dx[i] = dy[i] * s * (T{1} + x[i] * (T{1} - s));
  }
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> channel_concat(const std::vector<const Tensor<T>*>& xs) {
  if (xs.empty()) throw std::invalid_argument("channel_concat: empty input list");
  const Tensor<T>& first = *xs.front();
  require_rank4(first, "channel_concat");
  const std::size_t N = first.dim(0), H = first.dim(2), W = first.dim(3), HW = H * W;
  std::size_t total = 0;
  for (const Tensor<T>* t : xs) {
    require_rank4(*t, "channel_concat");
    if (t->dim(0) != N) throw ShapeError("channel_concat", "N", N, t->dim(0));
    if (t->dim(2) != H) throw ShapeError("channel_concat", "H", H, t->dim(2));
    if (t->dim(3) != W) throw ShapeError("channel_concat", "W", W, t->dim(3));
    total += t->dim(1);
  }
  Tensor<T> y({N, total, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    T* out = y.data().data() + n * total * HW;
    for (const Tensor<T>* t : xs) {
      const std::size_t len = t->dim(1) * HW;
      const T* src = t->data().data() + n * len;
      std::copy(src, src + len, out);
      out += len;
    }
  }
  return y;
}

/// Channels [begin, begin + count) of x. The backward of channel_concat.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank4(x, "channel_slice");
  if (begin + count > x.dim(1) || count == 0) throw ShapeError("channel_slice", "C", x.dim(1), begin + count);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> y({N, count, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    const T* src = x.data().data() + (n * C + begin) * HW;
    std::copy(src, src + count * HW, y.data().data() + n * count * HW);
  }
  return y;
}

namespace detail {
enum class BroadcastKind { kChannel, kSpatial };

template <typename T>
BroadcastKind broadcast_kind(const Tensor<T>& x, const Tensor<T>& w) {
  require_rank4(x, "broadcast_mul");
  require_rank4(w, "broadcast_mul");
  if (w.dim(0) != x.dim(0)) throw ShapeError("broadcast_mul", "N", x.dim(0), w.dim(0));
  if (w.dim(2) == 1 && w.dim(3) == 1 && w.dim(1) == x.dim(1)) return BroadcastKind::kChannel;
  if (w.dim(1) == 1) {
    if (w.dim(2) != x.dim(2)) throw ShapeError("broadcast_mul", "H", x.dim(2), w.dim(2));
    if (w.dim(3) != x.dim(3)) throw ShapeError("broadcast_mul", "W", x.dim(3), w.dim(3));
    return BroadcastKind::kSpatial;
  }
  throw ShapeError("broadcast_mul", "C", x.dim(1), w.dim(1));
}
}  // namespace detail

/// x * w where w is N x C x 1 x 1 (per-channel) or N x 1 x H x W (per-pixel).
template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& w) {
  const auto kind = detail::broadcast_kind(x, w);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * HW;
      if (kind == detail::BroadcastKind::kChannel) {
        const T g = w[n * C + c];
        for (std::size_t i = 0; i < HW; ++i) y[base + i] = x[base + i] * g;
      } else {
        const T* wp = w.data().data() + n * HW;
        for (std::size_t i = 0; i < HW; ++i) y[base + i] = x[base + i] * wp[i];
      }
    }
  return y;
}

template <typename T>
struct BroadcastMulGrads {
  Tensor<T> dx;
  Tensor<T> dw;
};

template <typename T>
BroadcastMulGrads<T> broadcast_mul_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const auto kind = detail::broadcast_kind(x, w);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  BroadcastMulGrads<T> g{broadcast_mul(dy, w), Tensor<T>(w.shape())};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * HW;
      if (kind == detail::BroadcastKind::kChannel) {
        T acc = 0;
        for (std::size_t i = 0; i < HW; ++i) acc += dy[base + i] * x[base + i];
        g.dw[n * C + c] = acc;
      } else {
        T* dwp = g.dw.data().data() + n * HW;
        for (std::size_t i = 0; i < HW; ++i) dwp[i] += dy[base + i] * x[base + i];
      }
    }
  return g;
}

}  // namespace uodkit
