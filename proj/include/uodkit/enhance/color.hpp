#pragma once

// sRGB <-> CIELAB under the D65 white point.

#include <array>
#include <cmath>

#include "uodkit/enhance/image.hpp"
#include "uodkit/parallel.hpp"

namespace uodkit {

/// Interleaved (L, a, b) per pixel. L in [0,100].
struct LabImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  LabImage() = default;
  LabImage(std::size_t h, std::size_t w) : height(h), width(w), values(h * w * 3, 0.0f) {}
  std::size_t num_pixels() const { return height * width; }
};

namespace color {

inline constexpr std::array<std::array<double, 3>, 3> kRgbToXyz{{
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
}};

inline constexpr std::array<std::array<double, 3>, 3> kXyzToRgb{{
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252},
}};

// Reference white: the image of sRGB (1,1,1), so white lands on L=100, a=b=0.
inline constexpr double kWhiteX = 0.4124564 + 0.3575761 + 0.1804375;
inline constexpr double kWhiteY = 1.0;
inline constexpr double kWhiteZ = 0.0193339 + 0.1191920 + 0.9503041;

inline double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
inline double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

inline constexpr double kDelta = 6.0 / 29.0;
inline double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
inline double lab_f_inv(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }

inline std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  const double fx = lab_f(xyz[0] / kWhiteX), fy = lab_f(xyz[1] / kWhiteY), fz = lab_f(xyz[2] / kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Unclipped sRGB.
inline std::array<double, 3> lab_to_rgb(double L, double a, double b) {
  const double fy = (L + 16.0) / 116.0;
  const double fx = fy + a / 500.0;
  const double fz = fy - b / 200.0;
  const double xyz[3] = {kWhiteX * lab_f_inv(fx), kWhiteY * lab_f_inv(fy), kWhiteZ * lab_f_inv(fz)};
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    const double lin = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
    rgb[i] = linear_to_srgb(std::max(lin, 0.0));
  }
  return rgb;
}

}  // namespace color

inline LabImage srgb_to_lab(const ImageF32& img, unsigned threads = 1) {
  LabImage lab(img.height, img.width);
  parallel_for(img.num_pixels(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto v = color::rgb_to_lab(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
      for (int c = 0; c < 3; ++c) lab.values[3 * i + c] = static_cast<float>(v[c]);
    }
  });
  return lab;
}

/// Converts back to sRGB and clips to [0,1].
inline ImageF32 lab_to_srgb(const LabImage& lab, unsigned threads = 1) {
  ImageF32 img(lab.height, lab.width);
  parallel_for(lab.num_pixels(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto v = color::lab_to_rgb(lab.values[3 * i], lab.values[3 * i + 1], lab.values[3 * i + 2]);
      for (int c = 0; c < 3; ++c) img.pixels[3 * i + c] = clip01(static_cast<float>(v[c]));
    }
  });
  return img;
}

}  // namespace uodkit
