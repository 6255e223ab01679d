#pragma once

// Composite detection objective over one image's dense predictions:
//   total = w_box * GIoU + w_cls * Focal + w_obj * ObjFocal
// GIoU and Focal average over foreground anchors, ObjFocal over all anchors
// with the alignment score as target. Each mean divides by max(1, count).
// The baseline variant swaps in (1 - IoU), class BCE, and objectness BCE on
// the same assignment.

#include <stdexcept>
#include <vector>

#include "uodkit/fgiou/assigner.hpp"
#include "uodkit/fgiou/losses.hpp"

namespace uodkit {

enum class LossKind { kFGIoU, kBaseline };

struct DensePredictions {
  std::size_t num_classes = 0;
  std::vector<Box> boxes;              // per anchor
  std::vector<double> class_logits;    // anchors x classes
  std::vector<double> obj_logits;      // per anchor
  std::vector<AnchorPoint> anchors;    // per anchor

  std::size_t size() const { return boxes.size(); }

  std::vector<double> class_probs() const {
    std::vector<double> p(class_logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = stable_sigmoid(class_logits[i]);
    return p;
  }
};

struct LossBreakdown {
  double giou = 0.0;  // regression term (1 - IoU for the baseline)
  double focal = 0.0;
  double obj_focal = 0.0;
  double total = 0.0;
  std::size_t num_pos = 0;
};

struct LossGradients {
  std::vector<BoxGrad> boxes;
  std::vector<double> class_logits;
  std::vector<double> obj_logits;
};

inline AssignResult assign(const DensePredictions& pred, std::span<const GroundTruthBox> gts,
                           const AssignerParams& ap = {}) {
  const auto probs = pred.class_probs();
  return task_aligned_assign(probs, pred.num_classes, pred.boxes, pred.anchors, gts, ap);
}

/// Evaluates the loss for one image. When `assignment` is null it is computed
/// from the predictions; targets are treated as constants either way. When
/// `grads` is non-null it receives d(total)/d(inputs).
inline LossBreakdown detection_loss(const DensePredictions& pred, std::span<const GroundTruthBox> gts,
                                    LossKind kind, const FocalParams& fp, const LossWeights& w,
                                    const AssignResult* assignment = nullptr, LossGradients* grads = nullptr) {
  const std::size_t A = pred.size(), K = pred.num_classes;
  if (pred.class_logits.size() != A * K || pred.obj_logits.size() != A || pred.anchors.size() != A)
    throw std::invalid_argument("detection_loss: prediction arrays disagree in length");
  AssignResult local;
  if (!assignment) {
    local = assign(pred, gts);
    assignment = &local;
  }
  const AssignResult& as = *assignment;
  if (grads) {
    grads->boxes.assign(A, BoxGrad{});
    grads->class_logits.assign(A * K, 0.0);
    grads->obj_logits.assign(A, 0.0);
  }

  LossBreakdown out;
  out.num_pos = as.num_foreground();
  const double pos_norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, out.num_pos));
  const double all_norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, A));
  const double cls_norm = pos_norm / static_cast<double>(std::max<std::size_t>(1, K));

  for (std::size_t a = 0; a < A; ++a) {
    if (as.fg_mask[a]) {
      const auto& gt = gts[static_cast<std::size_t>(as.matched_gt[a])];
      const OverlapTerms reg =
          kind == LossKind::kFGIoU ? giou_loss_grad(pred.boxes[a], gt.box) : iou_loss_grad(pred.boxes[a], gt.box);
      out.giou += reg.loss;
      if (grads)
        for (int i = 0; i < 4; ++i) grads->boxes[a][i] = w.box * pos_norm * reg.grad[i];
      double cls_sum = 0.0;
      for (std::size_t c = 0; c < K; ++c) {
        const double z = pred.class_logits[a * K + c];
        const bool is_true = c == gt.class_id;
        const ScalarLoss term = kind == LossKind::kFGIoU ? focal_term_logit(z, is_true, fp)
                                                         : bce_logit(z, is_true ? 1.0 : 0.0);
        cls_sum += term.loss;
        if (grads) grads->class_logits[a * K + c] = w.cls * cls_norm * term.dlogit;
      }
      out.focal += cls_sum / static_cast<double>(std::max<std::size_t>(1, K));
    }
    const double t = as.alignment[a];
    const ScalarLoss obj =
        kind == LossKind::kFGIoU ? obj_focal_loss_logit(pred.obj_logits[a], t, fp) : bce_logit(pred.obj_logits[a], t);
    out.obj_focal += obj.loss;
    if (grads) grads->obj_logits[a] = w.obj * all_norm * obj.dlogit;
  }
  out.giou *= pos_norm;
  out.focal *= pos_norm;
  out.obj_focal *= all_norm;
  out.total = w.box * out.giou + w.cls * out.focal + w.obj * out.obj_focal;
  return out;
}

inline LossBreakdown fgiou_total(const DensePredictions& pred, std::span<const GroundTruthBox> gts,
                                 const FocalParams& fp = {}, const LossWeights& w = {},
                                 const AssignResult* assignment = nullptr, LossGradients* grads = nullptr) {
  return detection_loss(pred, gts, LossKind::kFGIoU, fp, w, assignment, grads);
}

}  // namespace uodkit
