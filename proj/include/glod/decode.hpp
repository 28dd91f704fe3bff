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
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "glod/conv.hpp"
#include "glod/model.hpp"
#include "glod/targets.hpp"

namespace glod {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
  friend bool operator==(const Box&, const Box&) = default;
};

inline Box box_of(const GroundTruthObject& o) {
  return {o.cx - o.w / 2, o.cy - o.h / 2, o.cx + o.w / 2, o.cy + o.h / 2};
}

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Detection {
  std::size_t class_id = 0;
  double score = 0;
  Box box;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DecodeConfig {
  std::size_t p = 1;
  std::size_t top_k = 1000;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  std::vector<std::size_t> merge_ps{0, 1, 10, 20};
  std::size_t output_stride = 4;

  void validate() const {
    GLOD_CHECK(top_k >= 1, ConfigError, "top_k must be >= 1");
    GLOD_CHECK(output_stride >= 1, ConfigError, "output_stride must be >= 1");
  }
};

struct Peak {
  std::size_t class_id, y, x;
  double score;
};

/// Cells equal to the (2p+1)^2 max-filtered heatmap; ties are all kept.
/// Returned in (class, y, x) order.
template <class T>
std::vector<Peak> local_peaks(const Tensor<T>& heatmap, std::size_t p) {
  GLOD_CHECK(heatmap.rank() == 3, ShapeError, "local_peaks expects [K,H,W], got ",
             to_string(heatmap.shape()));
  const std::size_t k = heatmap.shape()[0], h = heatmap.shape()[1], w = heatmap.shape()[2];
  const Tensor<T> pooled = ops::max_pool2d_same(heatmap, 2 * p + 1);
  std::vector<Peak> out;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = (c * h + y) * w + x;
        if (heatmap[i] == pooled[i]) out.push_back({c, y, x, double(heatmap[i])});
      }
  return out;
}

/// Peaks at cfg.p, global top-K, boxes in input pixels; ordered by score
/// desc, then class, y, x.
template <class T>
std::vector<Detection> decode(const HeadMaps<T>& head, const DecodeConfig& cfg) {
  cfg.validate();
  const auto& hs = head.heatmap.shape();
  GLOD_CHECK(head.offset.shape() == Shape({2, hs[1], hs[2]}) &&
                 head.size.shape() == Shape({2, hs[1], hs[2]}),
             ShapeError, "head map shapes disagree: heatmap ", to_string(hs), ", offset ",
             to_string(head.offset.shape()), ", size ", to_string(head.size.shape()));
  auto peaks = local_peaks(head.heatmap, cfg.p);
  // Peaks are already in (class, y, x) order, so a stable sort on score alone
  // yields the full ordering.
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (peaks.size() > cfg.top_k) peaks.resize(cfg.top_k);
  const std::size_t plane = hs[1] * hs[2];
  const double r = double(cfg.output_stride);
  std::vector<Detection> out;
  for (const auto& pk : peaks) {
    if (!(pk.score >= cfg.score_threshold)) continue;
    const std::size_t cell = pk.y * hs[2] + pk.x;
    const double cx = (double(pk.x) + double(head.offset[cell])) * r;
    const double cy = (double(pk.y) + double(head.offset[plane + cell])) * r;
    const double w = double(head.size[cell]) * r, h = double(head.size[plane + cell]) * r;
    out.push_back({pk.class_id, pk.score, {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}});
  }
  return out;
}

/// Class-aware greedy NMS. Ties in score keep input order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const auto& d = dets[i];
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.class_id == d.class_id && iou(k.box, d.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

/// Union of per-p decodes, exact duplicates dropped, then NMS.
template <class T>
std::vector<Detection> multi_kernel_decode(const HeadMaps<T>& head, const DecodeConfig& cfg) {
  GLOD_CHECK(!cfg.merge_ps.empty(), ConfigError, "merge_ps must be non-empty");
  std::vector<Detection> all;
  for (std::size_t p : cfg.merge_ps) {
    DecodeConfig c = cfg;
    c.p = p;
    for (auto& d : decode(head, c)) {
      const bool dup = std::any_of(all.begin(), all.end(), [&](const Detection& e) {
        return e.class_id == d.class_id && e.box == d.box;
      });
      if (!dup) all.push_back(d);
    }
  }
  return nms(all, cfg.nms_iou);
}

// Detections file: image_id, class_id, score (6 dp), x1, y1, x2, y2 (2 dp).

struct DetectionRecord {
  std::string image_id;
  Detection det;
};

inline void write_detections(std::ostream& os, const std::vector<DetectionRecord>& recs) {
  char buf[256];
  for (const auto& r : recs) {
    std::snprintf(buf, sizeof buf, "\t%zu\t%.6f\t%.2f\t%.2f\t%.2f\t%.2f\n", r.det.class_id,
                  r.det.score, r.det.box.x1, r.det.box.y1, r.det.box.x2, r.det.box.y2);
    os << r.image_id << buf;
  }
}

inline std::vector<DetectionRecord> read_detections(std::istream& is) {
  std::vector<DetectionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    DetectionRecord r;
    std::string tail;
    ss >> r.image_id >> r.det.class_id >> r.det.score >> r.det.box.x1 >> r.det.box.y1 >>
        r.det.box.x2 >> r.det.box.y2;
    GLOD_CHECK(ss && !(ss >> tail), FormatError, "detections line ", lineno,
               ": expected 7 tab-separated fields");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace glod
