#pragma once

// Detection metrics: greedy matching, P/R/F1, PR curves, AP (all-point and
// 101-point), and mAP over classes and IoU thresholds.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "uodkit/fgiou/box.hpp"

namespace uodkit {

struct Detection {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
};

struct GroundTruth {
  int image_id = 0;
  int class_id = 0;
  Box box;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score_threshold = 0.0;
};

struct PRF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class APMode { kAllPoint, kCoco101 };

struct MatchResult {
  std::vector<char> tp;  // per detection, same order as the input
  std::size_t num_gt = 0;
  std::size_t num_tp() const { return static_cast<std::size_t>(std::count(tp.begin(), tp.end(), 1)); }
  std::size_t num_fp() const { return tp.size() - num_tp(); }
  std::size_t num_fn() const { return num_gt - num_tp(); }
};

/// Indices of `dets` by descending score; ties keep the lower index first.
inline std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

/// Per (image, class), detections in score order claim the highest-IoU
/// unclaimed gt with IoU > iou_thresh. Each gt is matched at most once.
inline MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                    double iou_thresh) {
  MatchResult r;
  r.tp.assign(dets.size(), 0);
  r.num_gt = gts.size();
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_key;
  for (std::size_t g = 0; g < gts.size(); ++g) by_key[{gts[g].image_id, gts[g].class_id}].push_back(g);
  std::vector<char> claimed(gts.size(), 0);
  for (std::size_t d : score_order(dets)) {
    const auto it = by_key.find({dets[d].image_id, dets[d].class_id});
    if (it == by_key.end()) continue;
    double best = iou_thresh;
    std::ptrdiff_t best_g = -1;
    for (std::size_t g : it->second) {
      if (claimed[g]) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v > best) {
        best = v;
        best_g = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_g >= 0) {
      claimed[static_cast<std::size_t>(best_g)] = 1;
      r.tp[d] = 1;
    }
  }
  return r;
}

inline PRF1 precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF1 out;
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (out.precision + out.recall > 0) out.f1 = 2 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

namespace detail {

template <typename T>
std::vector<T> of_class(const std::vector<T>& xs, int class_id) {
  std::vector<T> out;
  for (const auto& x : xs)
    if (x.class_id == class_id) out.push_back(x);
  return out;
}

}  // namespace detail

/// One point per detection of `class_id`, in descending score order.
inline std::vector<PRPoint> pr_curve(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                     int class_id, double iou_thresh) {
  const auto cd = detail::of_class(dets, class_id);
  const auto cg = detail::of_class(gts, class_id);
  std::vector<PRPoint> curve;
  if (cg.empty()) return curve;
  const MatchResult m = match_detections(cd, cg, iou_thresh);
  std::size_t tp = 0, seen = 0;
  for (std::size_t d : score_order(cd)) {
    ++seen;
    tp += m.tp[d] ? 1 : 0;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(cg.size()),
                     static_cast<double>(tp) / static_cast<double>(seen), cd[d].score});
  }
  return curve;
}

/// Precision envelope: at each point, the max precision over all points whose
/// recall is at least as large.
inline std::vector<double> precision_envelope(const std::vector<PRPoint>& curve) {
  std::vector<double> env(curve.size());
  double run = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    run = std::max(run, curve[i].precision);
    env[i] = run;
  }
  // Points sharing a recall value take the value of the first of their run.
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].recall == curve[i - 1].recall) env[i] = env[i - 1];
  return env;
}

inline double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                int class_id, double iou_thresh, APMode mode) {
  const auto curve = pr_curve(dets, gts, class_id, iou_thresh);
  if (curve.empty()) return 0.0;
  const auto env = precision_envelope(curve);
  if (mode == APMode::kAllPoint) {
    double ap = 0.0, prev_r = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      ap += (curve[i].recall - prev_r) * env[i];
      prev_r = curve[i].recall;
    }
    return ap;
  }
  double acc = 0.0;
  std::size_t i = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (i < curve.size() && curve[i].recall < r) ++i;
    if (i == curve.size()) break;
    acc += env[i];
  }
  return acc / 101.0;
}

struct MeanAP {
  double map50 = 0.0;
  double map50_95 = 0.0;
};

inline constexpr std::array<double, 10> kCocoIouThresholds{0.50, 0.55, 0.60, 0.65, 0.70,
                                                           0.75, 0.80, 0.85, 0.90, 0.95};

/// mAP50: all-point AP at IoU 0.5; mAP50:95: 101-point AP averaged over
/// kCocoIouThresholds. Both are means over classes 0..num_classes-1.
inline MeanAP mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes) {
  MeanAP out;
  if (num_classes < 1) return out;
  for (int c = 0; c < num_classes; ++c) {
    out.map50 += average_precision(dets, gts, c, 0.5, APMode::kAllPoint);
    double acc = 0.0;
    for (double t : kCocoIouThresholds) acc += average_precision(dets, gts, c, t, APMode::kCoco101);
    out.map50_95 += acc / static_cast<double>(kCocoIouThresholds.size());
  }
  out.map50 /= num_classes;
  out.map50_95 /= num_classes;
  return out;
}

}  // namespace uodkit
