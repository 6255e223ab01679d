#pragma once

// Finite-difference gradient suite over every op and block with a backward
// pass, in 64-bit. Shared by `uodkit gradcheck` and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uodkit/dpsa/sppf.hpp"
#include "uodkit/fgiou/losses.hpp"
#include "uodkit/numcore/grad_check.hpp"
#include "uodkit/numcore/param_list.hpp"
#include "uodkit/numcore/random.hpp"

namespace uodkit::validation {

struct GradCheckEntry {
  std::string name;
  int seed = 0;
  double max_rel_error = 0.0;
};

struct GradientSuiteReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_error);
    return w;
  }
  bool passed() const { return !entries.empty() && worst() < tolerance; }
};

/// Called on each analytic gradient before comparison, with the check name.
/// Lets callers verify that the suite catches a wrong backward pass.
using GradientHook = std::function<void(const std::string& name, Tensor<double>& analytic)>;

namespace detail {

// Distinct, well-separated values so max-type ops stay away from ties.
inline Tensor<double> separated_values(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (static_cast<double>(i) - static_cast<double>(v.size()) / 2.0) * 0.1;
  std::shuffle(v.begin(), v.end(), rng);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i] + jitter(rng);
  return t;
}

// Zero biases can put every channel gate at exactly 0.5 and the spatial
// channel-max on a tie; random biases keep the checks off that set.
template <typename Params>
void randomize_biases(Params& p, Rng& rng) {
  std::normal_distribution<double> d(0.0, 0.5);
  for (auto& [name, t] : collect_params<double>(p, ""))
    if (name.ends_with(".bias"))
      for (auto& v : t->data()) v = d(rng);
}

class Runner {
 public:
  Runner(int seed, GradientSuiteReport& report, const GradientHook& hook) : seed_(seed), report_(report), hook_(hook) {}

  void compare(const std::string& name, Tensor<double> analytic, const Tensor<double>& numeric) {
    if (hook_) hook_(name, analytic);
    report_.entries.push_back({name, seed_, compare_gradients(analytic, numeric).max_rel_error});
  }

  // Input gradient of an op under random output weights.
  template <typename Fwd, typename Bwd>
  void op(const std::string& name, Fwd fwd, Bwd bwd, Tensor<double> x, Rng& rng, double eps) {
    const Tensor<double> w = random_normal<double>(fwd(x).shape(), rng);
    const Tensor<double> analytic = bwd(x, w);
    compare(name, analytic, numeric_gradient(x, [&] { return fwd(x); }, eps, &w));
  }

  // Input and every parameter gradient of a block. `bwd` returns {dx, grads}.
  // `wide` has the same layout as `p` and receives its values; the finite
  // differences are taken on it in extended precision, because the blocks
  // produce gradient entries near 1e-7 where 64-bit forward rounding alone
  // costs more than 1e-5 relative error.
  template <typename Params, typename Wide, typename Fwd, typename Bwd>
  void block(const std::string& name, Params& p, Wide wide, const Tensor<double>& x, Fwd fwd, Bwd bwd, Rng& rng,
             double eps) {
    const Tensor<double> w = random_normal<double>(fwd(x, p).shape(), rng);
    auto [dx, grads] = bwd(x, p, w);
    auto params = collect_params<double>(p, name);
    auto wparams = collect_params<long double>(wide, name);
    for (std::size_t i = 0; i < params.size(); ++i) *wparams[i].second = params[i].second->template cast<long double>();
    Tensor<long double> wx = x.cast<long double>();
    const Tensor<long double> ww = w.cast<long double>();
    auto forward = [&] { return fwd(wx, wide); };
    compare(name + ".dx", dx, wide_gradient(wx, forward, eps, ww));
    auto gparams = collect_params<double>(grads, name);
    for (std::size_t i = 0; i < params.size(); ++i)
      compare(params[i].first, *gparams[i].second, wide_gradient(*wparams[i].second, forward, eps, ww));
  }

 private:
  template <typename Outputs>
  static Tensor<double> wide_gradient(Tensor<long double>& param, Outputs&& outputs, double eps,
                                      const Tensor<long double>& weights) {
    Tensor<double> g(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
      const long double saved = param[i];
      param[i] = saved + eps;
      const Tensor<long double> plus = outputs();
      param[i] = saved - eps;
      const Tensor<long double> minus = outputs();
      param[i] = saved;
      long double acc = 0.0L;
      for (std::size_t j = 0; j < plus.size(); ++j) acc += weights[j] * (plus[j] - minus[j]);
      g[i] = static_cast<double>(acc / (2.0L * eps));
    }
    return g;
  }

  int seed_;
  GradientSuiteReport& report_;
  const GradientHook& hook_;
};

inline Tensor<double> box_tensor(const Box& b) { return Tensor<double>({4}, {b.x1, b.y1, b.x2, b.y2}); }
inline Box tensor_box(const Tensor<double>& t) { return {t[0], t[1], t[2], t[3]}; }

inline void run_seed(int seed, GradientSuiteReport& report, const GradientHook& hook) {
  Rng rng(static_cast<std::uint64_t>(seed) * 7919 + 13);
  Runner run(seed, report, hook);
  constexpr double kOpEps = 1e-4, kBlockEps = 1e-5;
  const auto x = separated_values({2, 3, 6, 6}, rng);

  run.op("sigmoid", [](const auto& t) { return sigmoid(t); },
         [](const auto& t, const auto& dy) { return sigmoid_backward(sigmoid(t), dy); }, x, rng, kOpEps);
  run.op("silu", [](const auto& t) { return silu(t); },
         [](const auto& t, const auto& dy) { return silu_backward(t, dy); }, x, rng, kOpEps);
  run.op("relu", [](const auto& t) { return relu(t); },
         [](const auto& t, const auto& dy) { return relu_backward(t, dy); }, x, rng, kOpEps);
  for (std::size_t k : {5, 9, 13})
    run.op("maxpool2d.k" + std::to_string(k), [k](const auto& t) { return maxpool2d(t, k, 1, k / 2); },
           [k](const auto& t, const auto& dy) { return maxpool2d_backward(t, k, 1, k / 2, dy); }, x, rng, kOpEps);
  for (auto [mode, tag] : {std::pair{PoolMode::kAvg, "avg"}, std::pair{PoolMode::kMax, "max"}}) {
    run.op(std::string("adaptive_pool.") + tag, [mode](const auto& t) { return adaptive_pool(t, mode); },
           [mode](const auto& t, const auto& dy) { return adaptive_pool_backward(t, mode, dy); }, x, rng, kOpEps);
    run.op(std::string("channel_reduce.") + tag, [mode](const auto& t) { return channel_reduce(t, mode); },
           [mode](const auto& t, const auto& dy) { return channel_reduce_backward(t, mode, dy); }, x, rng, kOpEps);
  }
  for (std::size_t stride : {1, 2}) {
    auto p = init_conv<double>(2, 3, 3, stride, 1, true, rng);
    for (auto& b : p.bias->data()) b = 0.1;
    const std::string tag = "conv2d.s" + std::to_string(stride);
    run.op(tag + ".dx", [&](const auto& t) { return conv2d(t, p); },
           [&](const auto& t, const auto& dy) { return conv2d_backward(t, p, dy).dx; }, x, rng, kOpEps);
    const Tensor<double> w = random_normal<double>(conv2d(x, p).shape(), rng);
    const auto g = conv2d_backward(x, p, w);
    run.compare(tag + ".weight", g.dweight, numeric_gradient(p.weight, [&] { return conv2d(x, p); }, kOpEps, &w));
    run.compare(tag + ".bias", *g.dbias, numeric_gradient(*p.bias, [&] { return conv2d(x, p); }, kOpEps, &w));
  }
  for (bool channel : {true, false}) {
    const std::string tag = channel ? "broadcast_mul.channel" : "broadcast_mul.spatial";
    const auto wt = channel ? random_normal<double>({2, 3, 1, 1}, rng) : random_normal<double>({2, 1, 6, 6}, rng);
    run.op(tag + ".dx", [&](const auto& t) { return broadcast_mul(t, wt); },
           [&](const auto& t, const auto& dy) { return broadcast_mul_backward(t, wt, dy).dx; }, x, rng, kOpEps);
    run.op(tag + ".dw", [&](const auto& t) { return broadcast_mul(x, t); },
           [&](const auto& t, const auto& dy) { return broadcast_mul_backward(x, t, dy).dw; }, wt, rng, kOpEps);
  }
  const auto other = separated_values({2, 2, 6, 6}, rng);
  run.op("channel_concat", [&](const auto& t) { return channel_concat<double>({&t, &other}); },
         [](const auto&, const auto& dy) { return channel_slice(dy, 0, 3); }, x, rng, kOpEps);
  run.op("channel_slice", [](const auto& t) { return channel_slice(t, 1, 2); },
         [](const auto& t, const auto& dy) {
           const Tensor<double> zero_front({t.dim(0), 1, t.dim(2), t.dim(3)});
           return channel_concat<double>({&zero_front, &dy});
         },
         x, rng, kOpEps);

  const auto ax = random_normal<double>({2, 6, 5, 5}, rng);
  auto ca = dpsa::make_channel_attention<double>(6, rng);
  randomize_biases(ca, rng);
  run.block(
      "channel_attention", ca, dpsa::make_channel_attention<long double>(6, rng), ax, [](const auto& in, const auto& p) { return dpsa::channel_attention(in, p).y; },
      [](const auto& in, const auto& p, const auto& dy) {
        auto b = dpsa::channel_attention_backward(in, p, dpsa::channel_attention(in, p), dy);
        return std::pair{b.dx, b.grads};
      },
      rng, kBlockEps);
  auto sa = dpsa::make_spatial_attention<double>(rng);
  randomize_biases(sa, rng);
  run.block(
      "spatial_attention", sa, dpsa::make_spatial_attention<long double>(rng), ax, [](const auto& in, const auto& p) { return dpsa::spatial_attention(in, p).y; },
      [](const auto& in, const auto& p, const auto& dy) {
        auto b = dpsa::spatial_attention_backward(in, p, dpsa::spatial_attention(in, p), dy);
        return std::pair{b.dx, b.grads};
      },
      rng, kBlockEps);
  auto dp = dpsa::make_dpsa<double>(6, rng);
  randomize_biases(dp, rng);
  run.block(
      "dpsa", dp, dpsa::make_dpsa<long double>(6, rng), ax, [](const auto& in, const auto& p) { return dpsa::dpsa_forward(in, p).y(); },
      [](const auto& in, const auto& p, const auto& dy) {
        auto b = dpsa::dpsa_backward(in, p, dpsa::dpsa_forward(in, p), dy);
        return std::pair{b.dx, b.grads};
      },
      rng, kBlockEps);
  auto sp = dpsa::make_dpsa_sppf<double>(8, 6, true, rng);
  randomize_biases(sp, rng);
  run.block(
      "dpsa_sppf", sp, dpsa::make_dpsa_sppf<long double>(8, 6, true, rng), random_normal<double>({1, 8, 8, 8}, rng),
      [](const auto& in, const auto& p) { return dpsa::dpsa_sppf_forward(in, p).out; },
      [](const auto& in, const auto& p, const auto& dy) {
        auto b = dpsa::dpsa_sppf_backward(in, p, dpsa::dpsa_sppf_forward(in, p), dy);
        return std::pair{b.dx, b.grads};
      },
      rng, kBlockEps);

  std::uniform_real_distribution<double> pos(0.0, 20.0), size(0.5, 10.0);
  auto random_box = [&] {
    const double bx = pos(rng), by = pos(rng);
    return Box{bx, by, bx + size(rng), by + size(rng)};
  };
  for (int i = 0; i < 10; ++i) {
    const Box target = random_box();
    Tensor<double> pred = box_tensor(random_box());
    const BoxGrad g = giou_loss_grad(tensor_box(pred), target).grad;
    const Tensor<double> analytic({4}, {g[0], g[1], g[2], g[3]});
    run.compare("giou_loss", analytic, numeric_gradient(pred, [&] {
                  return Tensor<double>({1}, {giou_loss(tensor_box(pred), target)});
                }, 1e-6));
  }
}

}  // namespace detail

/// Runs every check for seeds 0..seeds-1 and records each max relative error.
inline GradientSuiteReport run_gradient_suite(int seeds = 20, double tolerance = 1e-5,
                                              const GradientHook& hook = {}, int first_seed = 0) {
  GradientSuiteReport report;
  report.tolerance = tolerance;
  for (int s = first_seed; s < first_seed + seeds; ++s) detail::run_seed(s, report, hook);
  return report;
}

}  // namespace uodkit::validation
