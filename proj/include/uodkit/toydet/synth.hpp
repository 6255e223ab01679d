#pragma once

// Synthetic "underwater" detection data: 64x64 scenes with discs, squares and
// triangles on a blue-green gradient, and a seeded degradation that adds a
// cyan cast, haze, blur, and reduced contrast.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "uodkit/enhance/color.hpp"
#include "uodkit/enhance/filters.hpp"
#include "uodkit/fgiou/assigner.hpp"

namespace uodkit::toydet {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kNumClasses = 3;  // 0 disc, 1 square, 2 triangle
inline constexpr std::array<const char*, kNumClasses> kClassNames{"disc", "square", "triangle"};

struct SynthSample {
  ImageF32 image;
  std::vector<GroundTruthBox> objects;
  std::uint64_t seed = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the i-th item of a stream keyed by `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t i) { return splitmix64(splitmix64(seed) ^ i); }

namespace detail {

inline constexpr std::array<std::array<float, 3>, kNumClasses> kClassColor{{
    {0.85f, 0.40f, 0.30f},  // disc: coral
    {0.90f, 0.80f, 0.30f},  // square: yellow
    {0.80f, 0.45f, 0.80f},  // triangle: violet
}};

inline bool covers(std::size_t cls, const Box& b, double px, double py) {
  const double s = b.width();
  switch (cls) {
    case 0: {
      const double dx = px - b.cx(), dy = py - b.cy();
      return dx * dx + dy * dy <= 0.25 * s * s;
    }
    case 1:
      return px >= b.x1 && px <= b.x2 && py >= b.y1 && py <= b.y2;
    default:  // apex at top centre, base along the bottom edge
      return py >= b.y1 && py <= b.y2 && std::abs(px - b.cx()) <= 0.5 * (py - b.y1);
  }
}

}  // namespace detail

/// One scene: 1-4 non-overlapping objects with sides in [8, 20] pixels.
inline SynthSample synth_sample(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(1, 4), cls_dist(0, kNumClasses - 1), side(8, 20);
  std::uniform_real_distribution<float> jitter(-0.08f, 0.08f), u(0.0f, 1.0f);
  std::normal_distribution<float> noise(0.0f, 0.03f);

  SynthSample s;
  s.seed = seed;
  const std::size_t N = kImageSize;
  s.image = ImageF32(N, N);
  const float tilt = 0.1f * (u(rng) - 0.5f);
  for (std::size_t y = 0; y < N; ++y)
    for (std::size_t x = 0; x < N; ++x) {
      const float fy = static_cast<float>(y) / (N - 1), fx = static_cast<float>(x) / (N - 1);
      const float t = std::clamp(fy + tilt * (fx - 0.5f), 0.0f, 1.0f);
      s.image.at(y, x, 0) = 0.46f - 0.10f * t;
      s.image.at(y, x, 1) = 0.60f - 0.12f * t;
      s.image.at(y, x, 2) = 0.62f - 0.06f * t;
    }

  const int wanted = count(rng);
  for (int k = 0; k < wanted; ++k) {
    const std::size_t cls = static_cast<std::size_t>(cls_dist(rng));
    const int sz = side(rng);
    std::uniform_int_distribution<int> pos(0, static_cast<int>(N) - sz);
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double x0 = pos(rng), y0 = pos(rng);
      const Box b{x0, y0, x0 + sz, y0 + sz};
      bool clear = true;
      for (const auto& o : s.objects) clear = clear && intersection_area(o.box, b) == 0.0;
      if (!clear) continue;
      std::array<float, 3> col = detail::kClassColor[cls];
      for (float& c : col) c = clip01(c + jitter(rng));
      for (std::size_t y = static_cast<std::size_t>(y0); y < static_cast<std::size_t>(b.y2); ++y)
        for (std::size_t x = static_cast<std::size_t>(x0); x < static_cast<std::size_t>(b.x2); ++x)
          if (detail::covers(cls, b, x + 0.5, y + 0.5))
            for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = col[c];
      s.objects.push_back({b, cls});
      break;
    }
  }
  for (float& v : s.image.pixels) v = clip01(v + noise(rng));
  return s;
}

/// n samples; sample i uses derive_seed(seed, i), so datasets nest by prefix.
inline std::vector<SynthSample> synth_dataset(std::size_t n, std::uint64_t seed) {
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sample(derive_seed(seed, i)));
  return out;
}

struct DegradeConfig {
  float red_scale = 0.4f;
  float blue_scale = 0.85f;
  float haze = 0.25f;
  std::array<float, 3> airlight{0.7f, 0.9f, 0.9f};
  double blur_sigma = 0.8;
  double contrast = 0.6;
  float noise_sigma = 0.01f;
};

/// Channel attenuation, haze toward the airlight, blur, L-contrast
/// compression about the mean L, then seeded sensor noise.
inline ImageF32 degrade_underwater(const ImageF32& img, std::uint64_t seed, const DegradeConfig& cfg = {}) {
  ImageF32 out = img;
  for (std::size_t i = 0; i < out.num_pixels(); ++i) {
    out.pixels[3 * i] *= cfg.red_scale;
    out.pixels[3 * i + 2] *= cfg.blue_scale;
    for (int c = 0; c < 3; ++c)
      out.pixels[3 * i + c] = (1.0f - cfg.haze) * out.pixels[3 * i + c] + cfg.haze * cfg.airlight[c];
  }
  if (cfg.blur_sigma > 0.0)
    for (std::size_t c = 0; c < 3; ++c) out.set_channel(c, gaussian_blur(out.channel(c), cfg.blur_sigma));
  LabImage lab = srgb_to_lab(out);
  double mean_l = 0.0;
  for (std::size_t i = 0; i < lab.num_pixels(); ++i) mean_l += lab.values[3 * i];
  mean_l /= static_cast<double>(lab.num_pixels());
  for (std::size_t i = 0; i < lab.num_pixels(); ++i)
    lab.values[3 * i] = static_cast<float>(mean_l + cfg.contrast * (lab.values[3 * i] - mean_l));
  out = lab_to_srgb(lab);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, cfg.noise_sigma);
  for (float& v : out.pixels) v = clip01(v + noise(rng));
  return out;
}

}  // namespace uodkit::toydet
