#pragma once

// Loss examples with known values, evaluated by `uodkit losscheck` and the
// acceptance binary. Each entry compares a computed value to its expectation.

#include <cmath>
#include <string>
#include <vector>

#include "uodkit/fgiou/fgiou.hpp"

namespace uodkit::validation {

struct LossExample {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool passed() const { return std::abs(value - expected) <= tolerance; }
};

/// The three hand values the loss must reproduce exactly (within 1e-6).
inline std::vector<LossExample> core_loss_examples() {
  const FocalParams fp;
  const double quarter_sq_ln2 = 0.25 * 0.25 * std::log(2.0);
  return {
      {"giou_loss([0,0,1,1],[2,0,3,1]) = 4/3", giou_loss({0, 0, 1, 1}, {2, 0, 3, 1}), 4.0 / 3.0, 1e-6},
      {"focal true-class term, p_t=0.5 = 0.25*0.25*ln2", focal_term(0.5, true, fp), quarter_sq_ln2, 1e-6},
      {"obj_focal t=1 p=0.5 = 0.0625*ln2", obj_focal_loss(0.5, 1.0, fp), quarter_sq_ln2, 1e-6},
  };
}

namespace detail {

inline DensePredictions three_anchor_case() {
  DensePredictions p;
  p.num_classes = 2;
  p.anchors = {{1, 1}, {3, 3}, {6, 6}};
  p.boxes = {{0, 0, 4, 4}, {1, 1, 5, 5}, {5, 5, 7, 7}};
  p.class_logits = {2.0, -1.0, 0.5, 0.3, 0.0, 0.0};
  p.obj_logits = {1.0, -0.5, -2.0};
  return p;
}

}  // namespace detail

/// Every loss example: the core hand values plus limits and identities.
inline std::vector<LossExample> all_loss_examples() {
  std::vector<LossExample> out = core_loss_examples();
  const FocalParams fp;
  auto add = [&](std::string name, double value, double expected, double tol) {
    out.push_back({std::move(name), value, expected, tol});
  };
  add("iou([0,0,2,2],[1,0,3,2]) = 1/3", iou({0, 0, 2, 2}, {1, 0, 3, 2}), 1.0 / 3.0, 1e-12);
  add("iou of identical boxes = 1", iou({1, 2, 5, 7}, {1, 2, 5, 7}), 1.0, 1e-12);
  add("iou of disjoint boxes = 0", iou({0, 0, 1, 1}, {3, 3, 4, 4}), 0.0, 0.0);
  add("giou_loss of identical boxes = 0", giou_loss({1, 2, 5, 7}, {1, 2, 5, 7}), 0.0, 1e-12);
  add("giou_loss at gap 1e6 -> 2", giou_loss({0, 0, 1, 1}, {1e6, 0, 1e6 + 1, 1}), 2.0, 1e-5);
  add("focal true-class term, p_t -> 1 = 0", focal_term(1.0 - 1e-9, true, fp), 0.0, 1e-12);
  {
    const FocalParams ce{0.3, 0.0};
    const std::vector<double> p{0.2, 0.7, 0.4};
    const double expected = -(0.3 * std::log(0.7) + 0.7 * std::log(0.8) + 0.7 * std::log(0.6)) / 3.0;
    add("focal with gamma=0 = alpha-weighted cross-entropy", focal_loss(p, 1, ce), expected, 1e-12);
  }
  add("obj_focal t=0 p -> 0 = 0", obj_focal_loss(1e-9, 0.0, fp), 0.0, 1e-12);
  add("obj_focal t=1 p -> 1 = 0", obj_focal_loss(1.0 - 1e-9, 1.0, fp), 0.0, 1e-12);
  {
    const std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}};
    const auto l = fgiou_total(detail::three_anchor_case(), gts);
    add("fgiou_total 3-anchor hand case: giou", l.giou, 0.3443478260869565, 1e-6);
    add("fgiou_total 3-anchor hand case: focal", l.focal, 0.061445152161789814, 1e-6);
    add("fgiou_total 3-anchor hand case: obj_focal", l.obj_focal, 0.01928620517571204, 1e-6);
    add("fgiou_total 3-anchor hand case: total", l.total, 2.632617476908781, 1e-6);
  }
  {
    DensePredictions p;
    p.num_classes = 2;
    p.anchors = {{1, 1}, {3, 3}, {9, 9}};
    p.boxes = {{0, 0, 4, 4}, {0, 0, 4, 4}, {8, 8, 9.5, 9.5}};
    p.class_logits = {40, -40, 40, -40, -40, -40};
    p.obj_logits = {40, 40, -40};
    const std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}};
    add("fgiou_total of a perfect prediction = 0", fgiou_total(p, gts).total, 0.0, 1e-12);
  }
  {
    const std::vector<GroundTruthBox> gts{{{10, 10, 12, 12}, 1}};
    const LossWeights w;
    const auto l = fgiou_total(detail::three_anchor_case(), gts, {}, w);
    add("fgiou_total with no foreground = w_obj * obj_focal", l.total, w.obj * l.obj_focal, 1e-12);
  }
  return out;
}

}  // namespace uodkit::validation
