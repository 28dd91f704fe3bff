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
#include <set>
#include <sstream>

#include "glod/data.hpp"
#include "glod/decode.hpp"
#include "test_util.hpp"

namespace glod {
namespace {

HeadMaps<double> zero_head(std::size_t k, std::size_t h, std::size_t w) {
  return {Tensor<double>({k, h, w}), Tensor<double>({2, h, w}), Tensor<double>({2, h, w}, 1.0)};
}

TEST(Iou, Examples) {
  const Box a{0, 0, 1, 1};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, Box{2, 2, 3, 3}), 0.0);
  EXPECT_EQ(iou(a, Box{1, 0, 2, 1}), 0.0);
  EXPECT_NEAR(iou(a, Box{0.5, 0, 1.5, 1}), 1.0 / 3, 1e-15);
  EXPECT_EQ(iou(a, Box{0.5, 0, 1.5, 1}), iou(Box{0.5, 0, 1.5, 1}, a));
}

TEST(LocalPeaks, WindowOneKeepsEveryCell) {
  const auto hm = test::random_tensor({2, 4, 5}, 1);
  EXPECT_EQ(local_peaks(hm, 0).size(), 40u);
}

TEST(LocalPeaks, SingleSpike) {
  Tensor<double> hm({1, 7, 7});
  hm.at({0, 3, 2}) = 0.8;
  for (std::size_t p : {1u, 2u, 5u, 20u}) {
    std::size_t spikes = 0;
    for (const auto& pk : local_peaks(hm, p)) {
      if (pk.score > 0) {
        ++spikes;
        EXPECT_EQ(pk.y, 3u);
        EXPECT_EQ(pk.x, 2u);
      }
    }
    EXPECT_EQ(spikes, 1u);
  }
}

TEST(LocalPeaks, EqualPeaksTieRule) {
  // Two equal peaks at Chebyshev distance d, exhaustively against a window scan.
  for (std::size_t d = 1; d <= 4; ++d)
    for (std::size_t p = 0; p <= 5; ++p) {
      Tensor<double> hm({1, 9, 9});
      hm.at({0, 4, 2}) = 0.7;
      hm.at({0, 4, 2 + d}) = 0.7;
      std::set<std::pair<std::size_t, std::size_t>> got;
      for (const auto& pk : local_peaks(hm, p))
        if (pk.score > 0) got.insert({pk.y, pk.x});
      EXPECT_EQ(got.size(), 2u) << "d=" << d << " p=" << p;
    }
}

TEST(LocalPeaks, LargerWindowsOnlySuppress) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto hm = test::random_tensor({3, 12, 10}, seed);
    // Quantize to create plateaus.
    for (auto& v : hm.values()) v = std::round(v * 2) / 2;
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> prev;
    bool first = true;
    for (std::size_t p : {0u, 1u, 2u, 3u, 5u, 10u, 20u}) {
      std::set<std::tuple<std::size_t, std::size_t, std::size_t>> cur;
      for (const auto& pk : local_peaks(hm, p)) cur.insert({pk.class_id, pk.y, pk.x});
      if (!first) {
        for (const auto& c : cur) EXPECT_TRUE(prev.count(c)) << "p=" << p;
      }
      prev = std::move(cur);
      first = false;
    }
  }
}

TEST(Decode, EmptyHeatmapYieldsNothing) {
  DecodeConfig cfg;
  cfg.score_threshold = 0.1;
  EXPECT_TRUE(decode(zero_head(3, 8, 8), cfg).empty());
}

TEST(Decode, BoxGeometryAndOrdering) {
  auto head = zero_head(2, 8, 8);
  head.heatmap.at({1, 2, 3}) = 0.9;
  head.heatmap.at({0, 5, 6}) = 0.6;
  head.heatmap.at({0, 1, 1}) = 0.6;
  head.offset.at({0, 2, 3}) = 0.25;
  head.offset.at({1, 2, 3}) = 0.5;
  head.size.at({0, 2, 3}) = 2.0;
  head.size.at({1, 2, 3}) = 3.0;
  DecodeConfig cfg;
  const auto dets = decode(head, cfg);
  ASSERT_EQ(dets.size(), 3u);
  EXPECT_EQ(dets[0].class_id, 1u);
  EXPECT_EQ(dets[0].score, 0.9);
  // center ((3.25)*4, (2.5)*4) = (13, 10), size (8, 12)
  EXPECT_EQ(dets[0].box, (Box{9, 4, 17, 16}));
  // Equal scores: earlier (y, x) first.
  EXPECT_EQ(dets[1].box, (Box{2, 2, 6, 6}));
  EXPECT_EQ(dets[2].box, (Box{22, 18, 26, 22}));
  cfg.top_k = 1;
  const auto top = decode(head, cfg);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].class_id, 1u);
  cfg.top_k = 0;
  EXPECT_THROW(decode(head, cfg), ConfigError);
}

TEST(Decode, ClassPermutationRelabels) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  auto head = zero_head(3, 10, 10);
  for (auto& v : head.heatmap.values()) v = u(rng);
  const std::size_t perm[3] = {2, 0, 1};
  auto swapped = head;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 100; ++i) swapped.heatmap[perm[c] * 100 + i] = head.heatmap[c * 100 + i];
  DecodeConfig cfg;
  auto key = [](const Detection& d) { return std::tuple(d.box.x1, d.box.y1, d.score); };
  auto a = decode(head, cfg), b = decode(swapped, cfg);
  ASSERT_EQ(a.size(), b.size());
  std::multiset<std::tuple<std::size_t, double, double, double>> sa, sb;
  for (auto& d : a) sa.insert(std::tuple_cat(std::tuple(perm[d.class_id]), key(d)));
  for (auto& d : b) sb.insert(std::tuple_cat(std::tuple(d.class_id), key(d)));
  EXPECT_EQ(sa, sb);
}

// O(n^2) reference: repeatedly take the best remaining box (first in input
// order among equal scores) and delete everything it suppresses.
std::vector<Detection> brute_nms(std::vector<Detection> rest, double thr) {
  std::vector<Detection> out;
  while (!rest.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rest.size(); ++i)
      if (rest[i].score > rest[best].score) best = i;
    const Detection keep = rest[best];
    out.push_back(keep);
    std::vector<Detection> next;
    for (std::size_t i = 0; i < rest.size(); ++i)
      if (i != best && !(rest[i].class_id == keep.class_id && iou(rest[i].box, keep.box) >= thr))
        next.push_back(rest[i]);
    rest = std::move(next);
  }
  return out;
}

std::vector<Detection> random_boxes(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 60), sz(2, 25);
  std::uniform_int_distribution<int> cls(0, 2), q(1, 20);
  std::vector<Detection> d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    d.push_back({std::size_t(cls(rng)), q(rng) / 20.0, {x, y, x + sz(rng), y + sz(rng)}});
  }
  return d;
}

TEST(Nms, MatchesBruteForceOnRandomSets) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto dets = random_boxes(seed, 50);
    EXPECT_EQ(nms(dets, 0.5), brute_nms(dets, 0.5)) << "seed " << seed;
  }
}

TEST(Nms, Examples) {
  const Detection a{0, 0.9, {0, 0, 10, 10}}, b{0, 0.8, {0, 0, 10, 10}}, c{1, 0.7, {0, 0, 10, 10}};
  EXPECT_EQ(nms({a}, 0.5), std::vector<Detection>{a});
  EXPECT_EQ(nms({b, a}, 0.5), std::vector<Detection>{a});
  EXPECT_EQ(nms({a, b, c}, 0.5), (std::vector<Detection>{a, c}));
  // Equal scores keep input order.
  const Detection d{0, 0.9, {1, 0, 11, 10}};
  EXPECT_EQ(nms({d, a}, 0.5), std::vector<Detection>{d});
}

TEST(Nms, IsAFixedPoint) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto once = nms(random_boxes(seed, 50), 0.4);
    EXPECT_EQ(nms(once, 0.4), once);
  }
}

TEST(MultiKernel, SingletonEqualsDecodeThenNms) {
  auto head = zero_head(2, 16, 16);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : head.heatmap.values()) v = u(rng);
  for (auto& v : head.size.values()) v = 1 + 3 * u(rng);
  DecodeConfig cfg;
  for (std::size_t p : {0u, 1u, 3u}) {
    cfg.p = p;
    cfg.merge_ps = {p};
    EXPECT_EQ(multi_kernel_decode(head, cfg), nms(decode(head, cfg), cfg.nms_iou));
  }
  cfg.merge_ps = {0, 1, 10, 20};
  std::size_t per_p = 0;
  for (std::size_t p : cfg.merge_ps) {
    cfg.p = p;
    per_p += decode(head, cfg).size();
  }
  EXPECT_LE(multi_kernel_decode(head, cfg).size(), per_p);
  cfg.merge_ps.clear();
  EXPECT_THROW(multi_kernel_decode(head, cfg), ConfigError);
}

TEST(MultiKernel, RecoversTinyObjectNextToHugeOne) {
  auto head = zero_head(1, 32, 32);
  head.heatmap.at({0, 16, 16}) = 0.9;  // huge object
  head.size.at({0, 16, 16}) = 25;
  head.size.at({1, 16, 16}) = 25;
  head.heatmap.at({0, 19, 20}) = 0.6;  // tiny object
  DecodeConfig cfg;
  cfg.p = 20;
  const auto wide = decode(head, cfg);
  ASSERT_EQ(wide.size(), 1u);
  EXPECT_EQ(wide[0].score, 0.9);
  const auto merged = multi_kernel_decode(head, cfg);
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_EQ(merged[1].score, 0.6);
}

TEST(DetectionsFile, RoundTripAndFormat) {
  const std::vector<DetectionRecord> recs{{"000001", {2, 0.123456789, {1.234, 5.678, 9.999, 10.0}}},
                                          {"000002", {0, 1.0, {0, 0, 128, 64}}}};
  std::stringstream ss;
  write_detections(ss, recs);
  EXPECT_EQ(ss.str(),
            "000001\t2\t0.123457\t1.23\t5.68\t10.00\t10.00\n"
            "000002\t0\t1.000000\t0.00\t0.00\t128.00\t64.00\n");
  const auto back = read_detections(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_id, "000001");
  EXPECT_EQ(back[0].det.class_id, 2u);
  EXPECT_EQ(back[0].det.score, 0.123457);
  EXPECT_EQ(back[0].det.box, (Box{1.23, 5.68, 10.0, 10.0}));
  std::stringstream again;
  write_detections(again, back);
  std::stringstream first;
  write_detections(first, recs);
  EXPECT_EQ(again.str(), first.str());
}

TEST(DetectionsFile, MalformedLineNamesLineNumber) {
  std::stringstream ss("a\t0\t0.5\t1\t2\t3\t4\nb\t0\t0.5\t1\t2\n");
  try {
    read_detections(ss);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

// Encode targets, feed them back as predictions, decode.
TEST(RoundTrip, EncodeDecodeRecoversObjects) {
  const SceneSpec spec;
  std::size_t objects = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto scene = generate_scene(seed, spec);
    TargetConfig tc;
    tc.num_classes = spec.classes.size();
    tc.image_h = spec.height;
    tc.image_w = spec.width;
    const auto t = encode_targets<double>(scene.objects, tc, seed);
    DecodeConfig cfg;
    cfg.p = 1;
    cfg.score_threshold = 0.99;
    const auto dets = decode(HeadMaps<double>{t.heatmap, t.offset, t.size}, cfg);
    ASSERT_EQ(dets.size(), scene.objects.size()) << "seed " << seed;
    for (const auto& o : scene.objects) {
      const auto want = box_of(o);
      const auto it = std::find_if(dets.begin(), dets.end(), [&](const Detection& d) {
        return d.class_id == o.class_id && std::floor((d.box.x1 + d.box.x2) / 8) == std::floor(o.cx / 4) &&
               std::floor((d.box.y1 + d.box.y2) / 8) == std::floor(o.cy / 4);
      });
      ASSERT_NE(it, dets.end()) << "seed " << seed;
      EXPECT_NEAR(it->box.x1, want.x1, 1.0);
      EXPECT_NEAR(it->box.y1, want.y1, 1.0);
      EXPECT_NEAR(it->box.x2, want.x2, 1.0);
      EXPECT_NEAR(it->box.y2, want.y2, 1.0);
      ++objects;
    }
  }
  EXPECT_GT(objects, 200u);
}

}  // namespace
}  // namespace glod
