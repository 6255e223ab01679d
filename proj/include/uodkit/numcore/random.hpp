#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "uodkit/numcore/ops.hpp"

namespace uodkit {

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> random_normal(Shape shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> random_uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Weights ~ U(-gain/sqrt(fan_in), gain/sqrt(fan_in)); bias zero when present.
/// gain = sqrt(6) is He-uniform.
template <typename T>
ConvParams<T> init_conv(std::size_t out_ch, std::size_t in_ch, std::size_t k, std::size_t stride,
                        std::size_t padding, bool with_bias, Rng& rng, double gain = 1.0) {
  const double bound = gain / std::sqrt(static_cast<double>(in_ch * k * k));
  ConvParams<T> p;
  p.weight = random_uniform<T>({out_ch, in_ch, k, k}, rng, -bound, bound);
  if (with_bias) p.bias = Tensor<T>({out_ch});
  p.stride = stride;
  p.padding = padding;
  return p;
}

}  // namespace uodkit
