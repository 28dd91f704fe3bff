/*
 * Copyright 2026 The GLOD-Desk Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "glod/metrics.hpp"
#include "test_util.hpp"

namespace glod {
namespace {

Box sq(double x, double y, double s = 10) { return {x, y, x + s, y + s}; }

TEST(AveragePrecision, HandComputedExamples) {
  // 1 GT, 1 detection at IoU 0.6.
  const Box gt = sq(0, 0);
  const Box det{0, 0, 10, 6};
  ASSERT_NEAR(iou(gt, det), 0.6, 1e-12);
  EXPECT_EQ(average_precision({{0, 0.9, det}}, {gt}, 0.5), 1.0);
  EXPECT_EQ(average_precision({{0, 0.9, det}}, {gt}, 0.75), 0.0);
  // 2 GT, detections TP .9, FP .8, TP .7.
  const std::vector<Box> gts{sq(0, 0), sq(50, 50)};
  const std::vector<Detection> dets{{0, 0.9, sq(0, 0)}, {0, 0.8, sq(100, 0)}, {0, 0.7, sq(50, 50)}};
  EXPECT_NEAR(average_precision(dets, gts, 0.5), 0.83333333, 1e-6);
  EXPECT_NEAR(average_precision(dets, gts, 0.5), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
  // Perfect detections.
  EXPECT_EQ(average_precision({{0, 0.5, sq(0, 0)}, {0, 0.4, sq(50, 50)}}, gts, 0.75), 1.0);
  EXPECT_EQ(average_precision({}, gts, 0.5), 0.0);
}

TEST(AveragePrecision, EachGroundTruthMatchedOnce) {
  const std::vector<Box> gts{sq(0, 0)};
  const std::vector<Detection> dets{{0, 0.9, sq(0, 0)}, {0, 0.8, sq(0, 0)}};
  // Second detection is a duplicate: precision 1 then 1/2, recall 1 at the first.
  EXPECT_EQ(average_precision(dets, gts, 0.5), 1.0);
  const std::vector<Detection> rev{{0, 0.8, sq(0, 0)}, {0, 0.9, sq(30, 30)}};
  EXPECT_EQ(average_precision(rev, gts, 0.5), 0.5);
}

TEST(AveragePrecision, PrefersBestUnmatchedGroundTruth) {
  const std::vector<Box> gts{sq(0, 0), sq(3, 0)};
  // First det overlaps gt1 best; second then takes gt0.
  const std::vector<Detection> dets{{0, 0.9, sq(2.5, 0)}, {0, 0.8, sq(0.5, 0)}};
  EXPECT_EQ(average_precision(dets, gts, 0.5), 1.0);
}

// Independent AP: for each recall step, the best precision at any rank with
// recall >= that level.
double oracle_ap(const std::vector<bool>& tp, std::size_t num_gt) {
  std::vector<double> rec, prec;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    rec.push_back(double(hits) / double(num_gt));
    prec.push_back(double(hits) / double(i + 1));
  }
  double ap = 0;
  for (std::size_t k = 1; k <= num_gt; ++k) {
    const double level = double(k) / double(num_gt);
    double best = 0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] >= level - 1e-12) best = std::max(best, prec[i]);
    ap += best / double(num_gt);
  }
  return ap;
}

TEST(AveragePrecision, MatchesOracleOnRandomFlags) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> tp(1 + trial % 30);
    std::size_t hits = 0;
    for (auto&& v : tp) hits += (v = coin(rng));
    const std::size_t gt = hits + trial % 4;
    if (gt == 0) continue;
    EXPECT_NEAR(detail::ap_from_flags(tp, gt), oracle_ap(tp, gt), 1e-12);
  }
}

struct Scenario {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GroundTruthObject>> gts;
};

Scenario random_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(10, 110), jitter(-3, 3), u(0, 1);
  std::uniform_int_distribution<int> cls(0, 2);
  Scenario s;
  for (int img = 0; img < 4; ++img) {
    std::vector<GroundTruthObject> g;
    std::vector<Detection> d;
    for (int i = 0; i < 6; ++i) {
      GroundTruthObject o{std::size_t(cls(rng)), pos(rng), pos(rng), 12, 10};
      g.push_back(o);
      if (u(rng) < 0.7) {
        auto b = box_of(o);
        const double dx = jitter(rng), dy = jitter(rng);
        d.push_back({o.class_id, u(rng), {b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}});
      }
    }
    for (int i = 0; i < 3; ++i) {
      const double x = pos(rng), y = pos(rng);
      d.push_back({std::size_t(cls(rng)), u(rng), {x, y, x + 8, y + 8}});
    }
    s.dets.push_back(d);
    s.gts.push_back(g);
  }
  return s;
}

TEST(MeanAp, Examples) {
  const std::vector<std::vector<GroundTruthObject>> gts{{{0, 5, 5, 10, 10}, {1, 50, 50, 10, 10}}};
  const std::vector<std::vector<Detection>> dets{{{0, 0.9, box_of(gts[0][0])}}};
  EXPECT_EQ(map_at(dets, gts, 0.5), 0.5);
  const std::vector<std::vector<GroundTruthObject>> one{{{0, 5, 5, 10, 10}}};
  EXPECT_EQ(map_at(dets, one, 0.5), average_precision(dets[0], {box_of(one[0][0])}, 0.5));
  // Detections of a class without ground truth do not enter the mean.
  auto extra = dets;
  extra[0].push_back({3, 0.99, sq(70, 70)});
  EXPECT_EQ(map_at(extra, one, 0.5), 1.0);
  EXPECT_THROW(map_at(dets, {{}}, 0.5), NumericError);
}

TEST(MeanAp, Invariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto s = random_scenario(seed);
    const double m50 = map_at(s.dets, s.gts, 0.5), m75 = map_at(s.dets, s.gts, 0.75);
    EXPECT_LE(m75, m50);
    EXPECT_GE(m50, 0.0);
    EXPECT_LE(m50, 1.0);
    // Image order.
    auto p = s;
    std::reverse(p.dets.begin(), p.dets.end());
    std::reverse(p.gts.begin(), p.gts.end());
    EXPECT_NEAR(map_at(p.dets, p.gts, 0.5), m50, 1e-12);
    // Positive monotone score rescaling.
    auto r = s;
    for (auto& v : r.dets)
      for (auto& d : v) d.score = std::sqrt(d.score) * 0.5 + 0.1;
    EXPECT_NEAR(map_at(r.dets, r.gts, 0.5), m50, 1e-12);
    // A false positive above everything cannot help.
    auto f = s;
    f.dets[0].push_back({0, 2.0, sq(-100, -100)});
    EXPECT_LE(map_at(f.dets, f.gts, 0.5), m50 + 1e-12);
  }
}

TEST(Psnr, ArithmeticAndCap) {
  EXPECT_EQ(psnr_from_mse(0.01), 20.0);
  EXPECT_EQ(psnr_from_mse(1.0), 0.0);
  EXPECT_EQ(psnr_from_mse(0.0), kPsnrCap);
  EXPECT_EQ(psnr_from_mse(1e-30), kPsnrCap);
  Tensor<double> a({1, 2, 2}, std::vector<double>{0, 0, 0, 0});
  Tensor<double> b({1, 2, 2}, std::vector<double>{0.2, 0, 0, 0});
  EXPECT_EQ(heatmap_psnr(a, a), kPsnrCap);
  EXPECT_EQ(heatmap_psnr(a, b), heatmap_psnr(b, a));
  EXPECT_NEAR(heatmap_psnr(a, b), 10 * std::log10(1 / 0.01), 1e-12);
  double prev = kPsnrCap + 1;
  for (double mse = 1e-9; mse < 10; mse *= 1.7) {
    const double v = psnr_from_mse(mse);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_THROW(heatmap_psnr(a, Tensor<double>({1, 2, 3})), ShapeError);
}

TEST(Evaluate, PerClassRowsAndCsv) {
  const std::vector<std::vector<GroundTruthObject>> gts{{{0, 20, 20, 10, 10}, {2, 60, 60, 16, 16}}};
  std::vector<std::vector<Detection>> dets{{{0, 0.9, box_of(gts[0][0])},
                                            {2, 0.8, {52, 52, 68, 66}},
                                            {1, 0.3, sq(90, 90)}}};
  Tensor<double> gt_map({3, 2, 2}), pred_map({3, 2, 2});
  pred_map[0] = 0.1;
  const auto r = evaluate<double>(dets, gts, 3, {pred_map}, {gt_map});
  ASSERT_EQ(r.classes.size(), 3u);
  EXPECT_EQ(*r.classes[0].ap50, 1.0);
  EXPECT_FALSE(r.classes[1].ap50.has_value());
  EXPECT_EQ(r.classes[1].det_count, 1u);
  EXPECT_EQ(*r.classes[2].ap50, 1.0);
  EXPECT_EQ(*r.classes[2].ap75, 1.0);  // IoU 14*16/(16*16) = 0.875
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_NEAR(*r.classes[0].psnr, 10 * std::log10(1 / (0.01 / 4)), 1e-12);
  EXPECT_EQ(*r.classes[1].psnr, kPsnrCap);
  EXPECT_NEAR(*r.psnr, 10 * std::log10(1 / (0.01 / 12)), 1e-12);
  EXPECT_EQ(r.gt_count, 2u);
  EXPECT_EQ(r.det_count, 3u);
  std::ostringstream os;
  write_eval_csv(os, r);
  std::istringstream lines(os.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "class_id,AP50,AP75,PSNR,gt_count,det_count");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("0,1.000000,1.000000,", 0), 0u);
  std::getline(lines, line);
  EXPECT_EQ(line, "1,nan,nan,100.000000,0,1");
  std::getline(lines, line);
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("all,1.000000,1.000000,", 0), 0u);
  EXPECT_EQ(line.substr(line.size() - 4), ",2,3");
}

}  // namespace
}  // namespace glod
