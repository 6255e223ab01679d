#pragma once

// Task-aligned label assignment. Candidates for a ground truth are the
// anchors whose center lies inside it; they are ranked by
// m = score^alpha * IoU^beta and the top-k are kept. An anchor claimed by
// several ground truths goes to the one with the larger m (lower index on
// ties). Alignment targets are m rescaled per ground truth so that their max
// equals the best IoU among that ground truth's anchors.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "uodkit/fgiou/box.hpp"

namespace uodkit {

struct GroundTruthBox {
  Box box;
  std::size_t class_id = 0;
};

struct AnchorPoint {
  double x = 0, y = 0;
};

struct AssignerParams {
  std::size_t top_k = 10;
  double score_exponent = 0.5;
  double iou_exponent = 6.0;
};

struct AssignResult {
  std::vector<char> fg_mask;       // per anchor
  std::vector<int> matched_gt;     // per anchor, -1 for background
  std::vector<double> alignment;   // per anchor, 0 for background
  std::vector<double> metric;      // raw m of the chosen pair, 0 for background

  std::size_t num_foreground() const {
    return static_cast<std::size_t>(std::count(fg_mask.begin(), fg_mask.end(), char{1}));
  }
};

/// `scores` is row-major (anchors x classes) of probabilities.
inline AssignResult task_aligned_assign(std::span<const double> scores, std::size_t num_classes,
                                        std::span<const Box> pred_boxes, std::span<const AnchorPoint> anchors,
                                        std::span<const GroundTruthBox> gts, const AssignerParams& ap = {}) {
  const std::size_t A = anchors.size();
  AssignResult r{std::vector<char>(A, 0), std::vector<int>(A, -1), std::vector<double>(A, 0.0),
                 std::vector<double>(A, 0.0)};
  if (gts.empty() || A == 0) return r;

  std::vector<double> ious(A);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const auto& gt = gts[g];
    std::vector<std::size_t> cand;
    std::vector<double> m(A, 0.0);
    for (std::size_t a = 0; a < A; ++a) {
      if (!gt.box.contains(anchors[a].x, anchors[a].y)) continue;
      const double s = scores[a * num_classes + gt.class_id];
      m[a] = std::pow(s, ap.score_exponent) * std::pow(iou(pred_boxes[a], gt.box), ap.iou_exponent);
      cand.push_back(a);
    }
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return m[a] > m[b]; });
    if (cand.size() > ap.top_k) cand.resize(ap.top_k);
    for (std::size_t a : cand) {
      // Gts are visited in index order, so a strict comparison keeps the
      // lower gt index on ties.
      if (r.matched_gt[a] < 0 || m[a] > r.metric[a]) {
        r.matched_gt[a] = static_cast<int>(g);
        r.metric[a] = m[a];
        r.fg_mask[a] = 1;
      }
    }
  }

  for (std::size_t g = 0; g < gts.size(); ++g) {
    double max_m = 0.0, max_iou = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      if (r.matched_gt[a] != static_cast<int>(g)) continue;
      max_m = std::max(max_m, r.metric[a]);
      max_iou = std::max(max_iou, iou(pred_boxes[a], gts[g].box));
    }
    for (std::size_t a = 0; a < A; ++a)
      if (r.matched_gt[a] == static_cast<int>(g)) r.alignment[a] = max_m > 0 ? r.metric[a] / max_m * max_iou : 0.0;
  }
  return r;
}

}  // namespace uodkit
