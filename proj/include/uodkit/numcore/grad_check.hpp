#pragma once

// Central finite-difference gradient checking for the explicit backward
// functions. The scalar objective is always a fixed linear reduction of the
// op's outputs, sum_i w_i * y_i (w = 1 gives the plain sum), so the central
// difference is taken elementwise on the outputs before reducing. This keeps
// the difference free of cancellation against the magnitude of the sum.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "uodkit/numcore/tensor.hpp"

namespace uodkit {

class GradCheckError : public std::runtime_error {
 public:
  GradCheckError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " at element " + std::to_string(index)), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

inline GradCheckResult compare_gradients(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  if (analytic.size() != numeric.size())
    throw ShapeError("compare_gradients", "numel", analytic.size(), numeric.size());
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i])) throw GradCheckError("non-finite analytic gradient", i);
    const double e = relative_error(analytic[i], numeric[i]);
    if (i == 0 || e > r.max_rel_error) r = {e, i, analytic[i], numeric[i]};
  }
  return r;
}

inline double weighted_diff(const Tensor<double>& plus, const Tensor<double>& minus, const Tensor<double>* weights,
                            std::size_t element) {
  if (plus.size() != minus.size()) throw ShapeError("grad_check", "output_numel", minus.size(), plus.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < plus.size(); ++j) {
    const double d = plus[j] - minus[j];
    if (!std::isfinite(d)) throw GradCheckError("non-finite forward output", element);
    acc += weights ? (*weights)[j] * d : d;
  }
  return acc;
}

/// Numeric gradient of sum_i w_i * outputs()_i with respect to `param`,
/// perturbing `param` in place (restored on return). `outputs` re-evaluates
/// the forward pass and must read `param` by reference.
template <typename Outputs>
Tensor<double> numeric_gradient(Tensor<double>& param, Outputs&& outputs, double eps,
                                const Tensor<double>* weights = nullptr) {
  Tensor<double> g(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + eps;
    const Tensor<double> plus = outputs();
    param[i] = saved - eps;
    const Tensor<double> minus = outputs();
    param[i] = saved;
    g[i] = weighted_diff(plus, minus, weights, i) / (2.0 * eps);
  }
  return g;
}

/// Checks `backward(x, dy)` against central differences of `forward(x)`,
/// with dy = weights (or all ones). Returns the max relative error using the
/// denominator max(|analytic|, |numeric|, 1e-8).
template <typename Forward, typename Backward>
GradCheckResult grad_check(Forward&& forward, Backward&& backward, const Tensor<double>& x, double eps,
                           const Tensor<double>* weights = nullptr) {
  const Tensor<double> y = forward(x);
  for (std::size_t j = 0; j < y.size(); ++j)
    if (!std::isfinite(y[j])) throw GradCheckError("non-finite forward output", j);
  Tensor<double> dy = weights ? *weights : Tensor<double>(y.shape(), 1.0);
  if (dy.size() != y.size()) throw ShapeError("grad_check", "weights", y.size(), dy.size());
  const Tensor<double> analytic = backward(x, dy);
  Tensor<double> probe = x;
  const Tensor<double> numeric = numeric_gradient(probe, [&] { return forward(probe); }, eps, &dy);
  return compare_gradients(analytic, numeric);
}

}  // namespace uodkit
