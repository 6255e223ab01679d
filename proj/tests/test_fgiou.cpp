#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "uodkit/fgiou/fgiou.hpp"
#include "uodkit/numcore/grad_check.hpp"

using namespace uodkit;

namespace {

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 20.0), size(0.5, 10.0);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Box-coordinate FD of a scalar box loss.
template <typename F>
BoxGrad box_fd(const Box& a, F&& f, double eps) {
  BoxGrad g{};
  for (int i = 0; i < 4; ++i) {
    Box p = a, m = a;
    (&p.x1)[i] += eps;
    (&m.x1)[i] -= eps;
    g[i] = (f(p) - f(m)) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST(IoU, HandCases) {
  const Box a{0, 0, 2, 2};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, {3, 3, 4, 4}), 0.0);
  EXPECT_NEAR(iou(a, {1, 0, 3, 2}), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(iou({1, 1, 1, 1}, {1, 1, 1, 1}), 0.0);
}

TEST(GIoU, HandCases) {
  const Box a{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(giou_loss(a, a), 0.0);
  EXPECT_NEAR(giou_loss(a, {2, 0, 3, 1}), 4.0 / 3.0, 1e-6);
  EXPECT_DOUBLE_EQ(giou_loss({1, 1, 1, 1}, {1, 1, 1, 1}), 1.0);
}

TEST(GIoU, ApproachesTwoMonotonically) {
  const Box a{0, 0, 1, 1};
  double prev = giou_loss(a, {1, 0, 2, 1});
  for (double gap = 0.5; gap < 1e4; gap *= 1.7) {
    const double l = giou_loss(a, {1 + gap, 0, 2 + gap, 1});
    EXPECT_GT(l, prev);
    EXPECT_LT(l, 2.0);
    prev = l;
  }
  EXPECT_GT(prev, 1.999);
}

TEST(GIoU, PropertiesOnRandomBoxes) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 2000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double l = giou_loss(a, b);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 2.0);
    ASSERT_NEAR(l, giou_loss(b, a), 1e-12);
    ASSERT_NEAR(giou_loss(a, a), 0.0, 1e-12);
    const double s = scale(rng);
    const Box as{a.x1 * s, a.y1 * s, a.x2 * s, a.y2 * s}, bs{b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
    ASSERT_NEAR(iou(as, bs), iou(a, b), 1e-9);
    ASSERT_NEAR(giou_loss(as, bs), l, 1e-9);
  }
}

TEST(GIoU, EqualsOneMinusIoUUnderContainment) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> f(0.05, 0.45);
  for (int i = 0; i < 200; ++i) {
    const Box outer = random_box(rng);
    const Box inner{outer.x1 + f(rng) * outer.width(), outer.y1 + f(rng) * outer.height(),
                    outer.x2 - f(rng) * outer.width(), outer.y2 - f(rng) * outer.height()};
    EXPECT_NEAR(giou_loss(inner, outer), 1.0 - iou(inner, outer), 1e-12);
  }
  // Tiling the hull: side-by-side boxes.
  EXPECT_NEAR(giou_loss({0, 0, 1, 1}, {1, 0, 2, 1}), 1.0, 1e-12);
}

class GIoUGradient : public ::testing::TestWithParam<int> {};

TEST_P(GIoUGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(static_cast<uint64_t>(GetParam()) + 1000);
  for (int i = 0; i < 50; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const auto t = giou_loss_grad(a, b);
    EXPECT_NEAR(t.loss, giou_loss(a, b), 1e-12);
    const auto n = box_fd(a, [&](const Box& x) { return giou_loss(x, b); }, 1e-6);
    for (int k = 0; k < 4; ++k) EXPECT_LT(relative_error(t.grad[k], n[k]), 1e-5) << i << " coord " << k;
    const auto u = iou_loss_grad(a, b);
    const auto nu = box_fd(a, [&](const Box& x) { return 1.0 - iou(x, b); }, 1e-6);
    for (int k = 0; k < 4; ++k) EXPECT_LT(relative_error(u.grad[k], nu[k]), 1e-5);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GIoUGradient, ::testing::Range(0, 20));

TEST(Focal, HandValueAndLimits) {
  const FocalParams fp;
  EXPECT_NEAR(focal_term(0.5, true, fp), 0.25 * 0.25 * std::log(2.0), 1e-6);
  EXPECT_NEAR(focal_term(0.5, true, fp), 0.043322, 1e-6);
  EXPECT_LT(focal_term(1.0 - 1e-9, true, fp), 1e-15);
  // Negative class: p_t = 1 - p.
  EXPECT_NEAR(focal_term(0.5, false, fp), 0.75 * 0.25 * std::log(2.0), 1e-12);
}

TEST(Focal, GammaZeroIsWeightedCrossEntropy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  const FocalParams fp{0.3, 0.0};
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p{u(rng), u(rng), u(rng)};
    const double ce = -(0.3 * std::log(p[1]) + 0.7 * std::log(1 - p[0]) + 0.7 * std::log(1 - p[2])) / 3.0;
    EXPECT_NEAR(focal_loss(p, 1, fp), ce, 1e-12);
  }
}

TEST(Focal, MonotoneDecreasingInPt) {
  const FocalParams fp;
  double prev = focal_term(0.001, true, fp);
  for (double p = 0.01; p < 1.0; p += 0.01) {
    const double l = focal_term(p, true, fp);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Focal, LogitFormMatchesAndDifferentiates) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0.0, 3.0);
  for (const FocalParams fp : {FocalParams{}, FocalParams{0.6, 0.0}, FocalParams{0.25, 1.5}}) {
    for (int i = 0; i < 200; ++i) {
      const double z = d(rng);
      for (bool tc : {true, false}) {
        const auto r = focal_term_logit(z, tc, fp);
        EXPECT_NEAR(r.loss, focal_term(sigm(z), tc, fp), 1e-10);
        const double h = 1e-6;
        const double n = (focal_term_logit(z + h, tc, fp).loss - focal_term_logit(z - h, tc, fp).loss) / (2 * h);
        EXPECT_LT(relative_error(r.dlogit, n), 1e-5);
      }
    }
  }
}

TEST(ObjFocal, HandValueAndLimits) {
  const FocalParams fp;
  EXPECT_NEAR(obj_focal_loss(0.5, 1.0, fp), 0.0625 * std::log(2.0), 1e-6);
  EXPECT_NEAR(obj_focal_loss(0.5, 1.0, fp), 0.043322, 1e-6);
  EXPECT_LT(obj_focal_loss(1e-9, 0.0, fp), 1e-12);
  EXPECT_LT(obj_focal_loss(1.0 - 1e-9, 1.0, fp), 1e-12);
}

TEST(ObjFocal, LogitFormMatchesAndDifferentiates) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const FocalParams fp;
  for (int i = 0; i < 500; ++i) {
    const double z = d(rng);
    double t = u(rng);
    if (i % 3 == 0) t = 0.0;
    if (std::abs(t - 0.5) < 1e-3) continue;
    const auto r = obj_focal_loss_logit(z, t, fp);
    EXPECT_NEAR(r.loss, obj_focal_loss(sigm(z), t, fp), 1e-9);
    const double h = 1e-6;
    const double n = (obj_focal_loss_logit(z + h, t, fp).loss - obj_focal_loss_logit(z - h, t, fp).loss) / (2 * h);
    EXPECT_LT(relative_error(r.dlogit, n), 1e-5);
  }
}

TEST(Assigner, SingleGtSaturation) {
  std::vector<AnchorPoint> anchors{{2, 2}, {6, 2}, {2, 6}, {6, 6}};
  std::vector<Box> boxes{{0, 0, 4, 4}, {4, 0, 8, 4}, {0, 4, 4, 8}, {4, 4, 8, 8}};
  std::vector<double> scores(4, 0.5);
  std::vector<GroundTruthBox> gts{{{0, 0, 8, 8}, 0}};
  auto r = task_aligned_assign(scores, 1, boxes, anchors, gts);
  EXPECT_EQ(r.num_foreground(), 4u);
  for (int g : r.matched_gt) EXPECT_EQ(g, 0);
  // Equal metrics: every alignment equals the max IoU (0.25).
  for (double a : r.alignment) EXPECT_NEAR(a, 0.25, 1e-12);
}

TEST(Assigner, OutsideAnchorIsBackground) {
  std::vector<AnchorPoint> anchors{{2, 2}, {20, 20}};
  std::vector<Box> boxes{{0, 0, 4, 4}, {0, 0, 4, 4}};
  std::vector<double> scores{0.2, 0.99};
  std::vector<GroundTruthBox> gts{{{0, 0, 5, 5}, 0}};
  auto r = task_aligned_assign(scores, 1, boxes, anchors, gts);
  EXPECT_TRUE(r.fg_mask[0]);
  EXPECT_FALSE(r.fg_mask[1]);
  EXPECT_EQ(r.alignment[1], 0.0);
  EXPECT_EQ(task_aligned_assign(scores, 1, boxes, anchors, {}).num_foreground(), 0u);
}

TEST(Assigner, SharedAnchorGoesToLargerMetric) {
  std::vector<AnchorPoint> anchors{{3, 3}};
  std::vector<Box> boxes{{2, 2, 5, 5}};
  std::vector<double> scores{0.9, 0.4};
  std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}, {{2, 2, 6, 6}, 1}};
  // IoU with gt0 = 4/21, with gt1 = 9/16.
  const double m0 = std::sqrt(0.9) * std::pow(4.0 / 21.0, 6);
  const double m1 = std::sqrt(0.4) * std::pow(9.0 / 16.0, 6);
  ASSERT_GT(m1, m0);
  auto r = task_aligned_assign(scores, 2, boxes, anchors, gts);
  EXPECT_EQ(r.matched_gt[0], 1);
  EXPECT_NEAR(r.metric[0], m1, 1e-15);
  EXPECT_NEAR(r.alignment[0], 9.0 / 16.0, 1e-12);
  // Swapping scores so gt0 wins.
  std::vector<double> s2{1.0, 1e-6};
  EXPECT_EQ(task_aligned_assign(s2, 2, boxes, anchors, gts).matched_gt[0], 0);
}

TEST(Assigner, KeepsTopK) {
  std::vector<AnchorPoint> anchors;
  std::vector<Box> boxes;
  for (int i = 0; i < 15; ++i) {
    anchors.push_back({1.0 + i, 5.0});
    boxes.push_back({0.5 + i, 4.5, 1.5 + i + 0.1 * i, 5.5});
  }
  std::vector<double> scores(15, 0.7);
  std::vector<GroundTruthBox> gts{{{0, 0, 20, 10}, 0}};
  auto r = task_aligned_assign(scores, 1, boxes, anchors, gts);
  EXPECT_EQ(r.num_foreground(), 10u);
  // Wider predicted boxes have larger IoU with the big gt; the 5 narrowest drop.
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(r.fg_mask[i]);
}

namespace {

DensePredictions hand_case() {
  DensePredictions p;
  p.num_classes = 2;
  p.anchors = {{1, 1}, {3, 3}, {6, 6}};
  p.boxes = {{0, 0, 4, 4}, {1, 1, 5, 5}, {5, 5, 7, 7}};
  p.class_logits = {2.0, -1.0, 0.5, 0.3, 0.0, 0.0};
  p.obj_logits = {1.0, -0.5, -2.0};
  return p;
}

}  // namespace

TEST(FGIoUTotal, ThreeAnchorHandCase) {
  const auto pred = hand_case();
  std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}};
  const auto as = assign(pred, gts);
  EXPECT_EQ(as.num_foreground(), 2u);
  EXPECT_NEAR(as.alignment[0], 1.0, 1e-12);
  EXPECT_NEAR(as.alignment[1], 0.00301790523782793, 1e-12);
  const auto l = fgiou_total(pred, gts);
  // Component values composed independently from the textbook formulas.
  EXPECT_NEAR(l.giou, 0.3443478260869565, 1e-9);
  EXPECT_NEAR(l.focal, 0.061445152161789814, 1e-9);
  EXPECT_NEAR(l.obj_focal, 0.01928620517571204, 1e-9);
  EXPECT_NEAR(l.total, 2.632617476908781, 1e-6);
  EXPECT_EQ(l.num_pos, 2u);
}

TEST(FGIoUTotal, PerfectPredictionIsZero) {
  DensePredictions p;
  p.num_classes = 2;
  p.anchors = {{1, 1}, {3, 3}, {9, 9}};
  p.boxes = {{0, 0, 4, 4}, {0, 0, 4, 4}, {8, 8, 9.5, 9.5}};
  p.class_logits = {40, -40, 40, -40, -40, -40};
  p.obj_logits = {40, 40, -40};
  std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}};
  const auto l = fgiou_total(p, gts);
  EXPECT_EQ(l.num_pos, 2u);
  EXPECT_LT(l.giou, 1e-12);
  EXPECT_LT(l.focal, 1e-12);
  EXPECT_LT(l.obj_focal, 1e-12);
  EXPECT_LT(l.total, 1e-12);
}

TEST(FGIoUTotal, NoForegroundGuard) {
  auto pred = hand_case();
  std::vector<GroundTruthBox> gts{{{10, 10, 12, 12}, 1}};
  const LossWeights w;
  const auto l = fgiou_total(pred, gts, {}, w);
  EXPECT_EQ(l.num_pos, 0u);
  EXPECT_EQ(l.giou, 0.0);
  EXPECT_EQ(l.focal, 0.0);
  EXPECT_DOUBLE_EQ(l.total, w.obj * l.obj_focal);
  EXPECT_GT(l.obj_focal, 0.0);
}

TEST(FGIoUTotal, LinearInWeights) {
  const auto pred = hand_case();
  std::vector<GroundTruthBox> gts{{{0, 0, 4, 4}, 0}};
  const auto a = fgiou_total(pred, gts, {}, {7.5, 0.5, 1.0});
  const auto b = fgiou_total(pred, gts, {}, {15.0, 0.5, 1.0});
  EXPECT_NEAR(b.total - a.total, 7.5 * a.giou, 1e-12);
  EXPECT_GE(a.giou, 0.0);
  EXPECT_GE(a.focal, 0.0);
  EXPECT_GE(a.obj_focal, 0.0);
}

class DetectionLossGradient : public ::testing::TestWithParam<int> {};

TEST_P(DetectionLossGradient, MatchesFiniteDifferencesWithFixedAssignment) {
  std::mt19937_64 rng(static_cast<uint64_t>(GetParam()) + 77);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  DensePredictions p;
  p.num_classes = 3;
  for (int gy = 0; gy < 4; ++gy)
    for (int gx = 0; gx < 4; ++gx) {
      const double cx = 2 + 4 * gx, cy = 2 + 4 * gy;
      p.anchors.push_back({cx, cy});
      p.boxes.push_back(Box::from_center(cx + jitter(rng), cy + jitter(rng), 4 + 2 * std::abs(nd(rng)),
                                         4 + 2 * std::abs(nd(rng))));
      for (int c = 0; c < 3; ++c) p.class_logits.push_back(nd(rng));
      p.obj_logits.push_back(nd(rng));
    }
  std::vector<GroundTruthBox> gts{{{1, 1, 9, 8}, 0}, {{7, 6, 15, 15}, 2}};
  for (LossKind kind : {LossKind::kFGIoU, LossKind::kBaseline}) {
    const auto as = assign(p, gts);
    ASSERT_GT(as.num_foreground(), 0u);
    LossGradients g;
    detection_loss(p, gts, kind, {}, {}, &as, &g);
    auto loss = [&](const DensePredictions& q) { return detection_loss(q, gts, kind, {}, {}, &as).total; };
    const double h = 1e-6;
    for (size_t i = 0; i < p.obj_logits.size(); ++i) {
      auto a = p, b = p;
      a.obj_logits[i] += h;
      b.obj_logits[i] -= h;
      EXPECT_LT(relative_error(g.obj_logits[i], (loss(a) - loss(b)) / (2 * h)), 1e-5);
    }
    for (size_t i = 0; i < p.class_logits.size(); ++i) {
      auto a = p, b = p;
      a.class_logits[i] += h;
      b.class_logits[i] -= h;
      EXPECT_LT(relative_error(g.class_logits[i], (loss(a) - loss(b)) / (2 * h)), 1e-5);
    }
    for (size_t i = 0; i < p.boxes.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        auto a = p, b = p;
        (&a.boxes[i].x1)[k] += h;
        (&b.boxes[i].x1)[k] -= h;
        EXPECT_LT(relative_error(g.boxes[i][k], (loss(a) - loss(b)) / (2 * h)), 1e-5);
      }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, DetectionLossGradient, ::testing::Range(0, 5));
