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
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "glod/decode.hpp"

namespace glod {

namespace detail {

/// Area under the monotone precision envelope given TP flags in score order.
inline double ap_from_flags(const std::vector<bool>& tp, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> rec, prec;
  std::size_t tps = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    tps += tp[i] ? 1 : 0;
    rec.push_back(double(tps) / double(num_gt));
    prec.push_back(double(tps) / double(i + 1));
  }
  for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0, last_recall = 0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    ap += (rec[i] - last_recall) * prec[i];
    last_recall = rec[i];
  }
  return ap;
}

struct ClassMatch {
  std::vector<bool> tp;  // per detection, score-descending
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
};

/// Greedy matching for one class across images. Each detection, in score
/// order, takes the unmatched ground truth of its image with the highest IoU
/// if that IoU reaches tau.
inline ClassMatch match_class(const std::vector<std::vector<Detection>>& dets,
                              const std::vector<std::vector<Box>>& gts, double tau) {
  GLOD_CHECK(dets.size() == gts.size(), ShapeError, "detections cover ", dets.size(),
             " images, ground truth covers ", gts.size());
  struct Ref {
    std::size_t image;
    const Detection* det;
  };
  std::vector<Ref> all;
  ClassMatch m;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) all.push_back({i, &d});
    m.num_gt += gts[i].size();
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Ref& a, const Ref& b) { return a.det->score > b.det->score; });
  std::vector<std::vector<bool>> used(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), false);
  for (const auto& r : all) {
    double best = -1;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts[r.image].size(); ++j) {
      if (used[r.image][j]) continue;
      const double v = iou(r.det->box, gts[r.image][j]);
      if (v > best) best = v, best_j = j;
    }
    const bool hit = best >= tau;
    if (hit) used[r.image][best_j] = true;
    m.tp.push_back(hit);
  }
  m.num_det = all.size();
  return m;
}

}  // namespace detail

/// AP for one class on one image.
inline double average_precision(const std::vector<Detection>& dets, const std::vector<Box>& gts,
                                double tau) {
  const auto m = detail::match_class({dets}, {gts}, tau);
  return detail::ap_from_flags(m.tp, m.num_gt);
}

struct ClassEval {
  std::size_t class_id = 0;
  std::optional<double> ap50, ap75;  // empty when the class has no ground truth
  std::optional<double> psnr;
  std::size_t gt_count = 0, det_count = 0;
};

struct EvalResult {
  std::vector<ClassEval> classes;
  double map50 = 0, map75 = 0;
  std::optional<double> psnr;
  std::size_t gt_count = 0, det_count = 0;
};

namespace detail {

inline std::vector<std::vector<Detection>> of_class(const std::vector<std::vector<Detection>>& d,
                                                    std::size_t c) {
  std::vector<std::vector<Detection>> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (const auto& x : d[i])
      if (x.class_id == c) out[i].push_back(x);
  return out;
}

inline std::vector<std::vector<Box>> of_class(const std::vector<std::vector<GroundTruthObject>>& g,
                                              std::size_t c) {
  std::vector<std::vector<Box>> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (const auto& o : g[i])
      if (o.class_id == c) out[i].push_back(box_of(o));
  return out;
}

inline std::size_t max_class(const std::vector<std::vector<GroundTruthObject>>& g,
                             const std::vector<std::vector<Detection>>& d) {
  std::size_t k = 0;
  for (const auto& v : g)
    for (const auto& o : v) k = std::max(k, o.class_id + 1);
  for (const auto& v : d)
    for (const auto& o : v) k = std::max(k, o.class_id + 1);
  return k;
}

}  // namespace detail

/// Unweighted mean of per-class AP over classes that have ground truth.
inline double map_at(const std::vector<std::vector<Detection>>& dets_by_image,
                     const std::vector<std::vector<GroundTruthObject>>& gts_by_image, double tau) {
  const std::size_t k = detail::max_class(gts_by_image, dets_by_image);
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto m = detail::match_class(detail::of_class(dets_by_image, c),
                                       detail::of_class(gts_by_image, c), tau);
    if (m.num_gt == 0) continue;
    sum += detail::ap_from_flags(m.tp, m.num_gt);
    ++present;
  }
  GLOD_CHECK(present > 0, NumericError, "mAP undefined: no ground-truth objects");
  return sum / double(present);
}

inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse, double max_val = 1.0) {
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

template <class T>
double heatmap_psnr(const Tensor<T>& pred, const Tensor<T>& gt, double max_val = 1.0) {
  GLOD_CHECK(pred.shape() == gt.shape(), ShapeError, "heatmap_psnr shapes differ: ",
             to_string(pred.shape()), " vs ", to_string(gt.shape()));
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(gt[i]);
    acc += d * d;
  }
  return psnr_from_mse(acc / double(pred.size()), max_val);
}

/// Full evaluation. Heatmap lists may be empty to skip PSNR; otherwise both
/// hold one [K,h,w] map per image.
template <class T>
EvalResult evaluate(const std::vector<std::vector<Detection>>& dets_by_image,
                    const std::vector<std::vector<GroundTruthObject>>& gts_by_image,
                    std::size_t num_classes, const std::vector<Tensor<T>>& pred_heatmaps = {},
                    const std::vector<Tensor<T>>& gt_heatmaps = {}) {
  GLOD_CHECK(pred_heatmaps.size() == gt_heatmaps.size(), ShapeError,
             "predicted and target heatmap counts differ");
  EvalResult r;
  double s50 = 0, s75 = 0;
  std::size_t present = 0;
  double sq_all = 0;
  std::size_t n_all = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassEval ce;
    ce.class_id = c;
    const auto d = detail::of_class(dets_by_image, c);
    const auto g = detail::of_class(gts_by_image, c);
    const auto m50 = detail::match_class(d, g, 0.5);
    const auto m75 = detail::match_class(d, g, 0.75);
    ce.gt_count = m50.num_gt;
    ce.det_count = m50.num_det;
    if (ce.gt_count > 0) {
      ce.ap50 = detail::ap_from_flags(m50.tp, m50.num_gt);
      ce.ap75 = detail::ap_from_flags(m75.tp, m75.num_gt);
      s50 += *ce.ap50;
      s75 += *ce.ap75;
      ++present;
    }
    if (!pred_heatmaps.empty()) {
      double sq = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < pred_heatmaps.size(); ++i) {
        const auto& p = pred_heatmaps[i];
        const auto& t = gt_heatmaps[i];
        GLOD_CHECK(p.shape() == t.shape() && p.rank() == 3 && p.shape()[0] == num_classes,
                   ShapeError, "heatmap ", i, " shape ", to_string(p.shape()), " vs target ",
                   to_string(t.shape()));
        const std::size_t plane = p.shape()[1] * p.shape()[2];
        for (std::size_t j = c * plane; j < (c + 1) * plane; ++j) {
          const double diff = double(p[j]) - double(t[j]);
          sq += diff * diff;
        }
        n += plane;
      }
      ce.psnr = psnr_from_mse(sq / double(n));
      sq_all += sq;
      n_all += n;
    }
    r.gt_count += ce.gt_count;
    r.det_count += ce.det_count;
    r.classes.push_back(ce);
  }
  GLOD_CHECK(present > 0, NumericError, "mAP undefined: no ground-truth objects");
  r.map50 = s50 / double(present);
  r.map75 = s75 / double(present);
  if (n_all > 0) r.psnr = psnr_from_mse(sq_all / double(n_all));
  return r;
}

/// CSV: class_id,AP50,AP75,PSNR,gt_count,det_count then a summary row
/// labelled "all". Undefined values are written as "nan".
inline void write_eval_csv(std::ostream& os, const EvalResult& r) {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  os << "class_id,AP50,AP75,PSNR,gt_count,det_count\n";
  for (const auto& c : r.classes)
    os << c.class_id << ',' << num(c.ap50) << ',' << num(c.ap75) << ',' << num(c.psnr) << ','
       << c.gt_count << ',' << c.det_count << '\n';
  os << "all," << num(r.map50) << ',' << num(r.map75) << ',' << num(r.psnr) << ',' << r.gt_count
     << ',' << r.det_count << '\n';
}

}  // namespace glod
