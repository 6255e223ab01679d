#pragma once

// Four-stage deterministic enhancement for underwater imagery:
//   color_correct -> clahe_luminance -> soft_guided_dehaze -> edge_refine.
// No learnable state; every hyperparameter lives in EnhanceConfig.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "uodkit/enhance/color.hpp"
#include "uodkit/enhance/filters.hpp"
#include "uodkit/enhance/image.hpp"

namespace uodkit {

struct EnhanceConfig {
  std::pair<float, float> red_gain_clamp{1.0f, 3.0f};
  std::pair<float, float> blue_gain_clamp{0.5f, 1.5f};
  float clahe_clip = 2.0f;
  std::pair<std::size_t, std::size_t> clahe_tiles{8, 8};  // (x, y)
  float dehaze_omega = 0.75f;
  float dehaze_t_floor = 0.1f;
  float dehaze_sigma_divisor = 30.0f;
  std::size_t guided_radius = 4;
  float guided_eps = 1e-3f;
  float sharpen_beta = 0.5f;
};

/// Gray-world gains toward the green channel, clamped; green is untouched.
inline ImageF32 color_correct(const ImageF32& img, const EnhanceConfig& cfg) {
  if (img.empty()) throw std::invalid_argument("color_correct: empty image");
  const double mr = img.channel_mean(0), mg = img.channel_mean(1), mb = img.channel_mean(2);
  const float gr = std::clamp(static_cast<float>(mg / std::max(mr, 1e-6)), cfg.red_gain_clamp.first,
                              cfg.red_gain_clamp.second);
  const float gb = std::clamp(static_cast<float>(mg / std::max(mb, 1e-6)), cfg.blue_gain_clamp.first,
                              cfg.blue_gain_clamp.second);
  ImageF32 out = img;
  for (std::size_t i = 0; i < out.num_pixels(); ++i) {
    out.pixels[3 * i] = clip01(gr * img.pixels[3 * i]);
    out.pixels[3 * i + 2] = clip01(gb * img.pixels[3 * i + 2]);
  }
  return out;
}

/// CLAHE on the L channel of a Lab image; a and b are left bit-identical.
inline void clahe_lab_inplace(LabImage& lab, const EnhanceConfig& cfg) {
  constexpr std::size_t kBins = 256;
  const std::size_t H = lab.height, W = lab.width;
  if (H == 0 || W == 0) return;
  const std::size_t tx = std::max<std::size_t>(1, std::min(cfg.clahe_tiles.first, W));
  const std::size_t ty = std::max<std::size_t>(1, std::min(cfg.clahe_tiles.second, H));

  std::vector<std::uint8_t> bin(H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    const double l = std::clamp(static_cast<double>(lab.values[3 * i]), 0.0, 100.0);
    bin[i] = static_cast<std::uint8_t>(std::lround(l / 100.0 * 255.0));
  }

  // Tile t spans [t*W/tx, (t+1)*W/tx).
  std::vector<std::vector<double>> luts(tx * ty, std::vector<double>(kBins));
  for (std::size_t j = 0; j < ty; ++j) {
    for (std::size_t i = 0; i < tx; ++i) {
      const std::size_t x0 = i * W / tx, x1 = (i + 1) * W / tx;
      const std::size_t y0 = j * H / ty, y1 = (j + 1) * H / ty;
      std::vector<double> hist(kBins, 0.0);
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) hist[bin[y * W + x]] += 1.0;
      const double area = static_cast<double>((x1 - x0) * (y1 - y0));
      const double limit = cfg.clahe_clip * area / kBins;
      double excess = 0.0;
      for (double& h : hist)
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      const double share = excess / kBins;
      auto& lut = luts[j * tx + i];
      double cdf = 0.0;
      for (std::size_t b = 0; b < kBins; ++b) {
        cdf += hist[b] + share;
        lut[b] = cdf * 255.0 / area;
      }
    }
  }

  const double tile_w = static_cast<double>(W) / tx, tile_h = static_cast<double>(H) / ty;
  for (std::size_t y = 0; y < H; ++y) {
    const double gy = (y + 0.5) / tile_h - 0.5;
    const double fy0 = std::floor(gy);
    const double wy = gy - fy0;
    const std::size_t r0 = static_cast<std::size_t>(std::clamp(fy0, 0.0, static_cast<double>(ty - 1)));
    const std::size_t r1 = static_cast<std::size_t>(std::clamp(fy0 + 1.0, 0.0, static_cast<double>(ty - 1)));
    for (std::size_t x = 0; x < W; ++x) {
      const double gx = (x + 0.5) / tile_w - 0.5;
      const double fx0 = std::floor(gx);
      const double wx = gx - fx0;
      const std::size_t c0 = static_cast<std::size_t>(std::clamp(fx0, 0.0, static_cast<double>(tx - 1)));
      const std::size_t c1 = static_cast<std::size_t>(std::clamp(fx0 + 1.0, 0.0, static_cast<double>(tx - 1)));
      const std::uint8_t b = bin[y * W + x];
      const double top = (1.0 - wx) * luts[r0 * tx + c0][b] + wx * luts[r0 * tx + c1][b];
      const double bot = (1.0 - wx) * luts[r1 * tx + c0][b] + wx * luts[r1 * tx + c1][b];
      const double v = (1.0 - wy) * top + wy * bot;
      lab.values[3 * (y * W + x)] = static_cast<float>(std::clamp(v, 0.0, 255.0) / 255.0 * 100.0);
    }
  }
}

inline ImageF32 clahe_luminance(const ImageF32& img, const EnhanceConfig& cfg, unsigned threads = 1) {
  LabImage lab = srgb_to_lab(img, threads);
  clahe_lab_inplace(lab, cfg);
  return lab_to_srgb(lab, threads);
}

struct DehazeState {
  Plane veil;
  std::array<float, 3> airlight{};
  Plane transmission;
};

/// Veil, airlight, and transmission used by soft_guided_dehaze.
inline DehazeState dehaze_estimate(const ImageF32& img, const EnhanceConfig& cfg, unsigned threads = 1) {
  const std::size_t n = img.num_pixels();
  Plane minc(img.height, img.width);
  for (std::size_t i = 0; i < n; ++i)
    minc.data[i] = std::min({img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]});
  const double sigma = static_cast<double>(std::max(img.height, img.width)) / cfg.dehaze_sigma_divisor;
  DehazeState s;
  s.veil = gaussian_blur(minc, sigma, threads);

  const std::size_t top = std::max<std::size_t>(1, static_cast<std::size_t>(0.001 * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.veil.data[a] > s.veil.data[b]; });
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < top; ++k) acc += img.pixels[3 * order[k] + c];
    s.airlight[c] = static_cast<float>(acc / static_cast<double>(top));
  }

  s.transmission = Plane(img.height, img.width);
  for (std::size_t i = 0; i < n; ++i)
    s.transmission.data[i] = std::max(1.0f - cfg.dehaze_omega * s.veil.data[i], cfg.dehaze_t_floor);
  return s;
}

inline ImageF32 soft_guided_dehaze(const ImageF32& img, const EnhanceConfig& cfg, unsigned threads = 1) {
  const DehazeState s = dehaze_estimate(img, cfg, threads);
  ImageF32 out(img.height, img.width);
  for (std::size_t i = 0; i < img.num_pixels(); ++i) {
    // (I - A)/t + A rewritten as I + (I - A)(1/t - 1): exact identity at t = 1.
    const float k = 1.0f / s.transmission.data[i] - 1.0f;
    for (int c = 0; c < 3; ++c) {
      const float v = img.pixels[3 * i + c];
      out.pixels[3 * i + c] = clip01(v + (v - s.airlight[c]) * k);
    }
  }
  return out;
}

/// Self-guided filtering per channel, then an unsharp boost of the result.
inline ImageF32 edge_refine(const ImageF32& img, const EnhanceConfig& cfg, unsigned threads = 1) {
  ImageF32 out(img.height, img.width);
  std::vector<Plane> refined(3);
  parallel_for(3, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      const Plane ch = img.channel(c);
      const Plane q = guided_filter(ch, ch, cfg.guided_radius, cfg.guided_eps);
      const Plane blurred = gaussian_blur(q, 1.0);
      Plane r(q.height, q.width);
      for (std::size_t i = 0; i < q.size(); ++i)
        r.data[i] = clip01(q.data[i] + cfg.sharpen_beta * (q.data[i] - blurred.data[i]));
      refined[c] = std::move(r);
    }
  });
  for (std::size_t c = 0; c < 3; ++c) out.set_channel(c, refined[c]);
  return out;
}

/// Runs the four stages in order. When `stages` is non-null it receives the
/// output of each stage.
inline ImageF32 enhance_pipeline(const ImageF32& img, const EnhanceConfig& cfg, unsigned threads = 1,
                                 std::vector<ImageF32>* stages = nullptr) {
  ImageF32 s1 = color_correct(img, cfg);
  ImageF32 s2 = clahe_luminance(s1, cfg, threads);
  ImageF32 s3 = soft_guided_dehaze(s2, cfg, threads);
  ImageF32 s4 = edge_refine(s3, cfg, threads);
  if (stages) *stages = {s1, s2, s3, s4};
  return s4;
}

}  // namespace uodkit
