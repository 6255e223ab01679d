#pragma once

#include <string>
#include <utility>
#include <vector>

#include "uodkit/numcore/tensor.hpp"

namespace uodkit {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>*>>;

/// Flattens any parameter struct exposing visit(prefix, f) into an ordered
/// list of (name, tensor*) pairs. Gradient structs of the same type produce
/// the same order.
template <typename T, typename Params>
NamedTensors<T> collect_params(Params& p, const std::string& prefix) {
  NamedTensors<T> out;
  p.visit(prefix, [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, &t); });
  return out;
}

}  // namespace uodkit
