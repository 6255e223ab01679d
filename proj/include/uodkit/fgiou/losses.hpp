#pragma once

// Component losses of the composite detection objective: GIoU regression,
// sigmoid focal classification, and focal-weighted objectness BCE. Each has a
// probability-space form matching the textbook definition and a logit-space
// form with an analytic gradient used for training.

#include <cmath>
#include <span>
#include <vector>

#include "uodkit/fgiou/box.hpp"

namespace uodkit {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct LossWeights {
  double box = 7.5;
  double cls = 0.5;
  double obj = 1.0;
};

// ------------------------------------------------------------------ GIoU

struct OverlapTerms {
  double loss = 0.0;
  BoxGrad grad{};  // w.r.t. the first (predicted) box
};

namespace detail {

struct OverlapParts {
  double inter, uni, hull;
  double iw, ih, cw, ch;
};

inline OverlapParts overlap_parts(const Box& a, const Box& b) {
  OverlapParts p{};
  p.iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  p.ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  p.inter = (p.iw > 0 && p.ih > 0) ? p.iw * p.ih : 0.0;
  p.uni = a.area() + b.area() - p.inter;
  p.cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  p.ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  p.hull = p.cw * p.ch;
  return p;
}

// Derivatives of intersection, union, and hull area w.r.t. the coordinates
// of `a` (x1, y1, x2, y2), away from tie sets.
inline void overlap_derivatives(const Box& a, const Box& b, const OverlapParts& p, BoxGrad& dI, BoxGrad& dU,
                                BoxGrad& dC) {
  const double aw = a.width(), ah = a.height();
  const bool overlap = p.inter > 0;
  dI = {overlap && a.x1 > b.x1 ? -p.ih : 0.0, overlap && a.y1 > b.y1 ? -p.iw : 0.0,
        overlap && a.x2 < b.x2 ? p.ih : 0.0, overlap && a.y2 < b.y2 ? p.iw : 0.0};
  const BoxGrad dA{-ah, -aw, ah, aw};
  for (int i = 0; i < 4; ++i) dU[i] = dA[i] - dI[i];
  dC = {a.x1 < b.x1 ? -p.ch : 0.0, a.y1 < b.y1 ? -p.cw : 0.0, a.x2 > b.x2 ? p.ch : 0.0, a.y2 > b.y2 ? p.cw : 0.0};
}

}  // namespace detail

/// 1 - (IoU - |C \ (A u B)| / |C|), C the smallest enclosing box. Lies in
/// [0, 2]; a zero-area hull gives 1.
inline double giou_loss(const Box& a, const Box& b) {
  const auto p = detail::overlap_parts(a, b);
  if (p.hull <= 0) return 1.0;
  const double iou_v = p.uni > 0 ? p.inter / p.uni : 0.0;
  return 1.0 - (iou_v - (p.hull - p.uni) / p.hull);
}

inline OverlapTerms giou_loss_grad(const Box& a, const Box& b) {
  OverlapTerms t;
  const auto p = detail::overlap_parts(a, b);
  if (p.hull <= 0) {
    t.loss = 1.0;
    return t;
  }
  BoxGrad dI, dU, dC;
  detail::overlap_derivatives(a, b, p, dI, dU, dC);
  // loss = 2 - I/U - U/C
  const double iou_v = p.uni > 0 ? p.inter / p.uni : 0.0;
  t.loss = 2.0 - iou_v - p.uni / p.hull;
  for (int i = 0; i < 4; ++i) {
    const double diou = p.uni > 0 ? (dI[i] * p.uni - p.inter * dU[i]) / (p.uni * p.uni) : 0.0;
    const double dratio = (dU[i] * p.hull - p.uni * dC[i]) / (p.hull * p.hull);
    t.grad[i] = -diou - dratio;
  }
  return t;
}

/// 1 - IoU with its gradient; the plain regression term of the baseline loss.
inline OverlapTerms iou_loss_grad(const Box& a, const Box& b) {
  OverlapTerms t;
  const auto p = detail::overlap_parts(a, b);
  if (p.uni <= 0) {
    t.loss = 1.0;
    return t;
  }
  BoxGrad dI, dU, dC;
  detail::overlap_derivatives(a, b, p, dI, dU, dC);
  t.loss = 1.0 - p.inter / p.uni;
  for (int i = 0; i < 4; ++i) t.grad[i] = -(dI[i] * p.uni - p.inter * dU[i]) / (p.uni * p.uni);
  return t;
}

// ------------------------------------------------------------------ focal

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// One class term -alpha_t (1 - p_t)^gamma log(p_t), with p_t = p for the
/// true class and 1 - p otherwise; alpha_t = alpha or 1 - alpha likewise.
inline double focal_term(double p, bool is_true_class, const FocalParams& fp) {
  const double pt = is_true_class ? p : 1.0 - p;
  const double at = is_true_class ? fp.alpha : 1.0 - fp.alpha;
  return -at * std::pow(1.0 - pt, fp.gamma) * std::log(std::max(pt, 1e-12));
}

/// Mean of focal_term over the classes of one anchor.
inline double focal_loss(std::span<const double> probs, std::size_t target_class, const FocalParams& fp) {
  if (probs.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) acc += focal_term(probs[c], c == target_class, fp);
  return acc / static_cast<double>(probs.size());
}

struct ScalarLoss {
  double loss = 0.0;
  double dlogit = 0.0;
};

/// focal_term evaluated from a logit, with d/dlogit.
inline ScalarLoss focal_term_logit(double z, bool is_true_class, const FocalParams& fp) {
  const double zt = is_true_class ? z : -z;
  const double pt = stable_sigmoid(zt);
  const double one_minus = stable_sigmoid(-zt);
  const double log_pt = -softplus(-zt);
  const double at = is_true_class ? fp.alpha : 1.0 - fp.alpha;
  const double mod = std::pow(one_minus, fp.gamma);
  ScalarLoss r;
  r.loss = -at * mod * log_pt;
  const double dzt = -at * mod * (one_minus - fp.gamma * pt * log_pt);
  r.dlogit = is_true_class ? dzt : -dzt;
  return r;
}

// ------------------------------------------------------------------ objectness

/// alpha_t (1 - p_t)^gamma * BCE(p, t). The modulating factor uses the focal
/// convention p_t = p for a positive target (t > 0.5) and 1 - p otherwise;
/// BCE uses the continuous target t.
inline double obj_focal_loss(double p, double t, const FocalParams& fp) {
  const bool pos = t > 0.5;
  const double pt = pos ? p : 1.0 - p;
  const double at = pos ? fp.alpha : 1.0 - fp.alpha;
  const double bce = -(t * std::log(std::max(p, 1e-12)) + (1.0 - t) * std::log(std::max(1.0 - p, 1e-12)));
  return at * std::pow(1.0 - pt, fp.gamma) * bce;
}

inline ScalarLoss obj_focal_loss_logit(double z, double t, const FocalParams& fp) {
  const bool pos = t > 0.5;
  const double p = stable_sigmoid(z);
  const double pt = pos ? p : 1.0 - p;
  const double one_minus = pos ? stable_sigmoid(-z) : p;  // 1 - p_t
  const double at = pos ? fp.alpha : 1.0 - fp.alpha;
  const double bce = softplus(z) - t * z;
  const double mod = std::pow(one_minus, fp.gamma);
  const double sign = pos ? 1.0 : -1.0;
  ScalarLoss r;
  r.loss = at * mod * bce;
  r.dlogit = at * mod * ((p - t) - fp.gamma * sign * pt * bce);
  return r;
}

/// Plain binary cross-entropy from a logit (baseline loss arm).
inline ScalarLoss bce_logit(double z, double t) {
  return {softplus(z) - t * z, stable_sigmoid(z) - t};
}

}  // namespace uodkit
