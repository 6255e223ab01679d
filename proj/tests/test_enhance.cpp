#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "uodkit/enhance/pipeline.hpp"

using namespace uodkit;

namespace {

ImageF32 random_image(std::size_t h, std::size_t w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF32 img(h, w);
  for (float& v : img.pixels) v = u(rng);
  return img;
}

// Smooth scene with structure: colored gradients and a bright rectangle.
ImageF32 scene(std::size_t h, std::size_t w) {
  ImageF32 img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const float fx = static_cast<float>(x) / w, fy = static_cast<float>(y) / h;
      img.at(y, x, 0) = 0.3f + 0.4f * fx;
      img.at(y, x, 1) = 0.5f + 0.3f * fy;
      img.at(y, x, 2) = 0.6f - 0.2f * fx;
      if (x > w / 3 && x < w / 2 && y > h / 4 && y < h / 2) {
        img.at(y, x, 0) = 0.9f;
        img.at(y, x, 1) = 0.8f;
        img.at(y, x, 2) = 0.2f;
      }
    }
  return img;
}

double ratio_rg(const ImageF32& img) { return img.channel_mean(0) / img.channel_mean(1); }

double stddev(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<double> lightness(const ImageF32& img) {
  std::vector<double> out;
  for (std::size_t i = 0; i < img.num_pixels(); ++i)
    out.push_back(color::rgb_to_lab(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2])[0]);
  return out;
}

}  // namespace

TEST(Lab, WhiteAndBlack) {
  const auto w = color::rgb_to_lab(1, 1, 1);
  EXPECT_NEAR(w[0], 100.0, 0.01);
  EXPECT_LE(std::abs(w[1]), 0.01);
  EXPECT_LE(std::abs(w[2]), 0.01);
  const auto k = color::rgb_to_lab(0, 0, 0);
  EXPECT_NEAR(k[0], 0.0, 1e-9);
  EXPECT_NEAR(k[1], 0.0, 1e-9);
  EXPECT_NEAR(k[2], 0.0, 1e-9);
}

TEST(Lab, RoundTripThousandPixels) {
  const ImageF32 img = random_image(1, 1000, 11);
  const ImageF32 back = lab_to_srgb(srgb_to_lab(img));
  float worst = 0.0f;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) worst = std::max(worst, std::abs(img.pixels[i] - back.pixels[i]));
  EXPECT_LT(worst, 0.5f / 255.0f);
}

TEST(ColorCorrect, GrayIsFixed) {
  ImageF32 img(4, 5);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  for (std::size_t i = 0; i < img.num_pixels(); ++i) img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = u(rng);
  EXPECT_EQ(color_correct(img, {}), img);
}

TEST(ColorCorrect, GainFromMeans) {
  ImageF32 img(1, 2);
  img.pixels = {0.1f, 0.4f, 0.4f, 0.3f, 0.4f, 0.4f};  // mean R 0.2, mean G 0.4
  const ImageF32 out = color_correct(img, {});
  EXPECT_NEAR(out.at(0, 1, 0), 0.6f, 1e-6);
  EXPECT_NEAR(out.at(0, 0, 0), 0.2f, 1e-6);
  EXPECT_EQ(out.at(0, 0, 1), 0.4f);
  EXPECT_NEAR(out.at(0, 0, 2), 0.4f, 1e-6);
}

TEST(ColorCorrect, RedGainClamped) {
  ImageF32 img(1, 2);
  img.pixels = {0.05f, 0.4f, 0.4f, 0.05f, 0.4f, 0.4f};  // raw ratio 8
  const ImageF32 out = color_correct(img, {});
  EXPECT_NEAR(out.at(0, 0, 0), 0.15f, 1e-6);
  // Blue above green: gain clamps at 0.5 from below.
  img.pixels = {0.4f, 0.1f, 0.9f, 0.4f, 0.1f, 0.9f};
  EXPECT_NEAR(color_correct(img, {}).at(0, 0, 2), 0.45f, 1e-6);
}

TEST(Clahe, AbChannelsUntouched) {
  const ImageF32 img = random_image(37, 29, 4);
  LabImage lab = srgb_to_lab(img);
  const LabImage before = lab;
  clahe_lab_inplace(lab, {});
  bool l_changed = false;
  for (std::size_t i = 0; i < lab.num_pixels(); ++i) {
    EXPECT_EQ(lab.values[3 * i + 1], before.values[3 * i + 1]);
    EXPECT_EQ(lab.values[3 * i + 2], before.values[3 * i + 2]);
    l_changed |= lab.values[3 * i] != before.values[3 * i];
  }
  EXPECT_TRUE(l_changed);
}

TEST(Clahe, NeutralStaysNeutralAfterRoundTrip) {
  ImageF32 img(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.3f + 0.01f * static_cast<float>((x * 7 + y * 3) % 20);
  const ImageF32 out = clahe_luminance(img, {});
  for (std::size_t i = 0; i < out.num_pixels(); ++i) {
    EXPECT_NEAR(out.pixels[3 * i], out.pixels[3 * i + 1], 0.5 / 255.0);
    EXPECT_NEAR(out.pixels[3 * i + 2], out.pixels[3 * i + 1], 0.5 / 255.0);
  }
}

TEST(Clahe, ConstantImageStaysConstant) {
  ImageF32 img(40, 50);
  for (std::size_t i = 0; i < img.num_pixels(); ++i) {
    img.pixels[3 * i] = 0.2f;
    img.pixels[3 * i + 1] = 0.5f;
    img.pixels[3 * i + 2] = 0.6f;
  }
  const ImageF32 out = clahe_luminance(img, {});
  for (std::size_t i = 1; i < out.num_pixels(); ++i)
    for (int c = 0; c < 3; ++c) ASSERT_EQ(out.pixels[3 * i + c], out.pixels[c]);
}

// L ramps from 40 to 60 across every tile width (sawtooth over the 8x8 grid).
ImageF32 low_contrast_ramp(std::size_t n) {
  ImageF32 img(n, n);
  const std::size_t period = n / 8;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double t = static_cast<double>(x % period) / static_cast<double>(period - 1);
      const auto rgb = color::lab_to_rgb(40.0 + 20.0 * t, 0.0, 0.0);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = clip01(static_cast<float>(rgb[c]));
    }
  return img;
}

TEST(Clahe, RaisesContrastOnLowContrastRamp) {
  for (std::size_t n : {64u, 128u}) {
    const ImageF32 img = low_contrast_ramp(n);
    const auto lin = lightness(img);
    EXPECT_GE(*std::min_element(lin.begin(), lin.end()), 39.99);
    EXPECT_LE(*std::max_element(lin.begin(), lin.end()), 60.01);
    EXPECT_GT(stddev(lightness(clahe_luminance(img, {}))), stddev(lin));
  }
}

TEST(Clahe, SmallImageShrinksGrid) {
  const ImageF32 img = random_image(3, 5, 9);
  const ImageF32 out = clahe_luminance(img, {});
  EXPECT_EQ(out.height, 3u);
  EXPECT_EQ(out.width, 5u);
}

TEST(GaussianBlur, ConstantPlane) {
  Plane p(17, 23, 0.37f);
  for (float v : gaussian_blur(p, 2.3).data) EXPECT_NEAR(v, 0.37f, 1e-6);
}

TEST(GaussianBlur, ImpulseMatchesSampledKernel) {
  const double sigma = 1.5;
  Plane p(21, 21);
  p.at(10, 10) = 1.0f;
  const Plane out = gaussian_blur(p, sigma);
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double norm = 0.0;
  for (int i = -r; i <= r; ++i) norm += std::exp(-i * i / (2 * sigma * sigma));
  double total = 0.0;
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x) {
      const int dy = y - 10, dx = x - 10;
      double expect = 0.0;
      if (std::abs(dy) <= r && std::abs(dx) <= r)
        expect = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (norm * norm);
      EXPECT_NEAR(out.at(y, x), expect, 1e-6);
      total += out.at(y, x);
    }
  EXPECT_NEAR(total, 1.0, 1e-4);
}

TEST(GaussianBlur, RejectsNonPositiveSigma) { EXPECT_THROW(gaussian_blur(Plane(3, 3), 0.0), std::invalid_argument); }

TEST(GuidedFilter, ConstantSource) {
  const ImageF32 g = random_image(12, 9, 1);
  const Plane out = guided_filter(g.channel(0), Plane(12, 9, 0.42f), 2, 1e-3);
  for (float v : out.data) EXPECT_NEAR(v, 0.42f, 1e-6);
}

TEST(GuidedFilter, HugeEpsApproachesBoxMean) {
  // a -> 0, so the output tends to the window mean of b = mean(src).
  const ImageF32 g = random_image(10, 10, 2), s = random_image(10, 10, 3);
  const Plane src = s.channel(1);
  auto box = [](const Plane& p) {
    Plane out(p.height, p.width);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        double acc = 0;
        int n = 0;
        for (int yy = std::max(0, y - 2); yy <= std::min(9, y + 2); ++yy)
          for (int xx = std::max(0, x - 2); xx <= std::min(9, x + 2); ++xx, ++n) acc += p.at(yy, xx);
        out.at(y, x) = static_cast<float>(acc / n);
      }
    return out;
  };
  const Plane expect = box(box(src));
  const Plane out = guided_filter(g.channel(0), src, 2, 1e6);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LT(std::abs(out.data[i] - expect.data[i]), 1e-3);
}

TEST(GuidedFilter, MatchesWindowedOracle) {
  const ImageF32 gi = random_image(8, 8, 5), si = random_image(8, 8, 6);
  const Plane I = gi.channel(2), p = si.channel(0);
  const int r = 1;
  const double eps = 0.01;
  auto window = [&](int y, int x, auto&& f) {
    double acc = 0;
    int n = 0;
    for (int yy = std::max(0, y - r); yy <= std::min(7, y + r); ++yy)
      for (int xx = std::max(0, x - r); xx <= std::min(7, x + r); ++xx, ++n) acc += f(yy, xx);
    return acc / n;
  };
  double a[8][8], b[8][8];
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double mi = window(y, x, [&](int yy, int xx) { return double(I.at(yy, xx)); });
      const double mp = window(y, x, [&](int yy, int xx) { return double(p.at(yy, xx)); });
      const double mip = window(y, x, [&](int yy, int xx) { return double(I.at(yy, xx)) * p.at(yy, xx); });
      const double mii = window(y, x, [&](int yy, int xx) { return double(I.at(yy, xx)) * I.at(yy, xx); });
      a[y][x] = (mip - mi * mp) / (mii - mi * mi + eps);
      b[y][x] = mp - a[y][x] * mi;
    }
  const Plane out = guided_filter(I, p, r, eps);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double ma = window(y, x, [&](int yy, int xx) { return a[yy][xx]; });
      const double mb = window(y, x, [&](int yy, int xx) { return b[yy][xx]; });
      EXPECT_NEAR(out.at(y, x), ma * I.at(y, x) + mb, 1e-5);
    }
}

TEST(GuidedFilter, SizeMismatchThrows) {
  EXPECT_THROW(guided_filter(Plane(3, 3), Plane(3, 4), 1, 0.1), std::invalid_argument);
}

TEST(Dehaze, ZeroMinChannelIsIdentity) {
  ImageF32 img = random_image(20, 30, 7);
  for (std::size_t i = 0; i < img.num_pixels(); ++i) img.pixels[3 * i + 2] = 0.0f;
  const auto s = dehaze_estimate(img, {});
  for (float v : s.veil.data) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(soft_guided_dehaze(img, {}), img);
}

TEST(Dehaze, UniformFogIsFixedPoint) {
  const ImageF32 img(16, 16, 0.8f);
  const ImageF32 out = soft_guided_dehaze(img, {});
  for (float v : out.pixels) EXPECT_NEAR(v, 0.8f, 1e-6);
}

TEST(Dehaze, TwoPixelHandCase) {
  // sigma = 2/30, so the 3-tap kernel is a delta to float precision.
  ImageF32 img(1, 2);
  img.pixels = {0.2f, 0.5f, 0.6f, 0.6f, 0.7f, 0.8f};
  const auto s = dehaze_estimate(img, {});
  EXPECT_NEAR(s.veil.data[0], 0.2, 1e-6);
  EXPECT_NEAR(s.veil.data[1], 0.6, 1e-6);
  EXPECT_NEAR(s.airlight[0], 0.6, 1e-6);
  EXPECT_NEAR(s.airlight[2], 0.8, 1e-6);
  EXPECT_NEAR(s.transmission.data[0], 0.85, 1e-6);
  EXPECT_NEAR(s.transmission.data[1], 0.55, 1e-6);
  const ImageF32 out = soft_guided_dehaze(img, {});
  EXPECT_NEAR(out.pixels[0], (0.2 - 0.6) / 0.85 + 0.6, 1e-6);
  EXPECT_NEAR(out.pixels[1], (0.5 - 0.7) / 0.85 + 0.7, 1e-6);
  EXPECT_NEAR(out.pixels[2], (0.6 - 0.8) / 0.85 + 0.8, 1e-6);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.pixels[3 + c], img.pixels[3 + c], 1e-6);
}

TEST(Dehaze, TransmissionFloor) {
  EnhanceConfig cfg;
  cfg.dehaze_omega = 1.0f;
  const ImageF32 img(8, 8, 0.95f);
  for (float t : dehaze_estimate(img, cfg).transmission.data) EXPECT_FLOAT_EQ(t, 0.1f);
}

TEST(EdgeRefine, ConstantUnchanged) {
  const ImageF32 img(12, 12, 0.33f);
  const ImageF32 out = edge_refine(img, {});
  for (float v : out.pixels) EXPECT_NEAR(v, 0.33f, 1e-6);
}

TEST(EdgeRefine, StepEdgeSharpened) {
  ImageF32 img(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = x < 16 ? 0.2f : 0.8f;
  const EnhanceConfig cfg;
  const Plane q = guided_filter(img.channel(0), img.channel(0), cfg.guided_radius, cfg.guided_eps);
  const ImageF32 out = edge_refine(img, cfg);
  for (std::size_t y = 0; y < 32; ++y)
    EXPECT_GE(std::abs(out.at(y, 16, 0) - out.at(y, 15, 0)), std::abs(q.at(y, 16) - q.at(y, 15)));
}

TEST(EdgeRefine, RangeClipped) {
  const ImageF32 out = edge_refine(random_image(24, 24, 8), {});
  for (float v : out.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Pipeline, DeterministicAcrossRunsAndThreads) {
  const ImageF32 img = random_image(45, 61, 12);
  const ImageF32 ref = enhance_pipeline(img, {}, 1);
  EXPECT_EQ(enhance_pipeline(img, {}, 1), ref);
  EXPECT_EQ(enhance_pipeline(img, {}, 2), ref);
  EXPECT_EQ(enhance_pipeline(img, {}, 7), ref);
}

TEST(Pipeline, StagesMatchIndividualCalls) {
  const ImageF32 img = scene(40, 48);
  const EnhanceConfig cfg;
  std::vector<ImageF32> stages;
  const ImageF32 out = enhance_pipeline(img, cfg, 1, &stages);
  ASSERT_EQ(stages.size(), 4u);
  const ImageF32 s1 = color_correct(img, cfg);
  const ImageF32 s2 = clahe_luminance(s1, cfg);
  const ImageF32 s3 = soft_guided_dehaze(s2, cfg);
  EXPECT_EQ(stages[0], s1);
  EXPECT_EQ(stages[1], s2);
  EXPECT_EQ(stages[2], s3);
  EXPECT_EQ(stages[3], edge_refine(s3, cfg));
  EXPECT_EQ(stages[3], out);
  for (const auto& s : stages)
    for (float v : s.pixels) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(Pipeline, CyanCastRatioMovesTowardOne) {
  ImageF32 img = scene(48, 48);
  for (std::size_t i = 0; i < img.num_pixels(); ++i) img.pixels[3 * i] *= 0.4f;
  const double before = ratio_rg(img);
  const double after = ratio_rg(enhance_pipeline(img, {}));
  EXPECT_LT(std::abs(after - 1.0), std::abs(before - 1.0));
}
