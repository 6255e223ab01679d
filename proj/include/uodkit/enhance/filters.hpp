#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uodkit/enhance/image.hpp"
#include "uodkit/parallel.hpp"

namespace uodkit {

/// Sampled Gaussian with radius ceil(3*sigma), normalized to sum 1.
inline std::vector<float> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  std::vector<float> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

/// Separable Gaussian blur with clamp-to-edge borders.
inline Plane gaussian_blur(const Plane& src, double sigma, unsigned threads = 1) {
  const std::vector<float> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int H = static_cast<int>(src.height), W = static_cast<int>(src.width);
  Plane tmp(src.height, src.width), out(src.height, src.width);
  parallel_for(src.height, threads, [&](std::size_t b, std::size_t e) {
    for (int y = static_cast<int>(b); y < static_cast<int>(e); ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * src.data[y * W + std::clamp(x + i, 0, W - 1)];
        tmp.data[y * W + x] = static_cast<float>(acc);
      }
  });
  parallel_for(src.height, threads, [&](std::size_t b, std::size_t e) {
    for (int y = static_cast<int>(b); y < static_cast<int>(e); ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.data[std::clamp(y + i, 0, H - 1) * W + x];
        out.data[y * W + x] = static_cast<float>(acc);
      }
  });
  return out;
}

namespace detail {

// Mean over the (2r+1)^2 window truncated to the image, via an integral image.
inline std::vector<double> box_mean(const std::vector<double>& src, std::size_t H, std::size_t W, std::size_t r) {
  std::vector<double> integral((H + 1) * (W + 1), 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < W; ++x) {
      row += src[y * W + x];
      integral[(y + 1) * (W + 1) + x + 1] = integral[y * (W + 1) + x + 1] + row;
    }
  }
  std::vector<double> out(H * W);
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0, y1 = std::min(H, y + r + 1);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0, x1 = std::min(W, x + r + 1);
      const double s = integral[y1 * (W + 1) + x1] - integral[y0 * (W + 1) + x1] - integral[y1 * (W + 1) + x0] +
                       integral[y0 * (W + 1) + x0];
      out[y * W + x] = s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace detail

/// Guided filter: a = cov(I,p)/(var(I)+eps), b = mean(p) - a*mean(I) over
/// (2r+1)^2 windows (truncated at borders); output mean(a)*I + mean(b).
inline Plane guided_filter(const Plane& guide, const Plane& src, std::size_t r, double eps) {
  if (guide.height != src.height || guide.width != src.width)
    throw std::invalid_argument("guided_filter: guide and source dimensions differ");
  const std::size_t H = src.height, W = src.width, n = H * W;
  std::vector<double> I(n), p(n), Ip(n), II(n);
  for (std::size_t i = 0; i < n; ++i) {
    I[i] = guide.data[i];
    p[i] = src.data[i];
    Ip[i] = I[i] * p[i];
    II[i] = I[i] * I[i];
  }
  const auto mI = detail::box_mean(I, H, W, r);
  const auto mp = detail::box_mean(p, H, W, r);
  const auto mIp = detail::box_mean(Ip, H, W, r);
  const auto mII = detail::box_mean(II, H, W, r);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cov = mIp[i] - mI[i] * mp[i];
    const double var = mII[i] - mI[i] * mI[i];
    a[i] = cov / (var + eps);
    b[i] = mp[i] - a[i] * mI[i];
  }
  const auto ma = detail::box_mean(a, H, W, r);
  const auto mb = detail::box_mean(b, H, W, r);
  Plane out(H, W);
  for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(ma[i] * I[i] + mb[i]);
  return out;
}

}  // namespace uodkit
