#pragma once

// Scores prediction records against an annotation set. Shared by `eval` and
// the trainer so both report the same numbers for the same inputs.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "uodkit/eval/metrics.hpp"
#include "uodkit/io/annotations.hpp"
#include "uodkit/io/predictions.hpp"

namespace uodkit {

struct EvalSummary {
  std::size_t num_classes = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double map50 = 0.0, map50_95 = 0.0;
};

/// Classes are 0..max gt class id. P/R/F1 count detections with score >=
/// conf matched at `iou_thresh`; the mAPs use every record.
inline EvalSummary evaluate_records(std::vector<PredictionRecord> recs, const AnnotationSet& ann,
                                    double iou_thresh = 0.5, double conf = 0.25) {
  sort_records(recs);
  EvalSummary s;
  for (const auto& g : ann.gts) s.num_classes = std::max<std::size_t>(s.num_classes, static_cast<std::size_t>(g.class_id) + 1);
  std::vector<Detection> all, confident;
  for (const auto& r : recs) {
    const int id = ann.index_of(r.image_id);
    if (id < 0) throw std::invalid_argument("prediction for unknown image '" + r.image_id + "'");
    const Detection d{id, r.class_id, r.score, r.box};
    all.push_back(d);
    if (r.score >= conf) confident.push_back(d);
  }
  const MatchResult m = match_detections(confident, ann.gts, iou_thresh);
  s.tp = m.num_tp();
  s.fp = m.num_fp();
  s.fn = m.num_fn();
  const PRF1 prf = precision_recall_f1(s.tp, s.fp, s.fn);
  s.precision = prf.precision;
  s.recall = prf.recall;
  s.f1 = prf.f1;
  if (s.num_classes > 0) {
    const MeanAP map = mean_ap(all, ann.gts, static_cast<int>(s.num_classes));
    s.map50 = map.map50;
    s.map50_95 = map.map50_95;
  }
  return s;
}

}  // namespace uodkit
