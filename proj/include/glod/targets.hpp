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
#include <random>
#include <vector>

#include "glod/tensor.hpp"

namespace glod {

struct GroundTruthObject {
  std::size_t class_id = 0;
  double cx = 0, cy = 0;  // center, input pixels
  double w = 0, h = 0;    // size, input pixels

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

/// Largest corner perturbation r keeping IoU >= min_overlap, for each of the
/// three ways a perturbed box can relate to the ground truth. Each entry is
/// the relevant root of the boundary quadratic.
struct RadiusRoots {
  double one_inside_one_outside;  // both corners shifted the same way
  double both_inside;             // box shrinks by r on every side
  double both_outside;            // box grows by r on every side
};

inline RadiusRoots gaussian_radius_roots(double w, double h, double min_overlap = 0.7) {
  GLOD_CHECK(w > 0 && h > 0, ConfigError, "gaussian_radius needs positive size, got ", w, "x", h);
  const double o = min_overlap;
  // r^2 - (w+h) r + wh(1-o)/(1+o) = 0, smaller root.
  const double b1 = w + h, c1 = w * h * (1 - o) / (1 + o);
  const double r1 = (b1 - std::sqrt(b1 * b1 - 4 * c1)) / 2;
  // 4r^2 - 2(w+h) r + (1-o) wh = 0, smaller root.
  const double a2 = 4, b2 = 2 * (w + h), c2 = (1 - o) * w * h;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 4 * a2 * c2)) / (2 * a2);
  // 4o r^2 + 2o(w+h) r + (o-1) wh = 0, positive root.
  const double a3 = 4 * o, b3 = 2 * o * (w + h), c3 = (o - 1) * w * h;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3);
  return {r1, r2, r3};
}

/// Smallest of the three radii, floored at 1 cell.
inline double gaussian_radius(double w_feat, double h_feat, double min_overlap = 0.7) {
  const auto r = gaussian_radius_roots(w_feat, h_feat, min_overlap);
  return std::max(1.0, std::min({r.one_inside_one_outside, r.both_inside, r.both_outside}));
}

struct TargetConfig {
  std::size_t num_classes = 5;
  std::size_t output_stride = 4;
  std::size_t image_h = 128, image_w = 128;
  double min_overlap = 0.7;
  double neg_ratio = 0.02;
  double background_below = 1e-4;
};

template <class T>
struct DetectionTargets {
  Tensor<T> heatmap;      // [K,h,w]
  Tensor<T> offset;       // [2,h,w]
  Tensor<T> size;         // [2,h,w], feature-map cells
  Tensor<T> center_mask;  // [1,h,w], 1 at object-center cells
  std::vector<std::size_t> center_cells;  // y*w + x, one per distinct center cell
  std::vector<std::size_t> neg_cells;     // (c*h + y)*w + x, sampled background
  std::size_t num_objects = 0;
};

/// Uniform sample without replacement of round(ratio * #background) cells
/// whose heatmap value is below `background_below`.
template <class T>
void sample_negatives(DetectionTargets<T>& t, const TargetConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < t.heatmap.size(); ++i)
    if (t.heatmap[i] < T(cfg.background_below)) pool.push_back(i);
  const auto want = static_cast<std::size_t>(std::llround(cfg.neg_ratio * double(pool.size())));
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  t.neg_cells = std::move(pool);
}

/// Gaussian center heatmaps plus offset/size regression targets.
template <class T>
DetectionTargets<T> encode_targets(const std::vector<GroundTruthObject>& objects,
                                   const TargetConfig& cfg, std::uint64_t seed) {
  const std::size_t r = cfg.output_stride;
  GLOD_CHECK(r >= 1 && cfg.image_h % r == 0 && cfg.image_w % r == 0, ConfigError,
             "image ", cfg.image_h, "x", cfg.image_w, " not divisible by stride ", r);
  const std::size_t fh = cfg.image_h / r, fw = cfg.image_w / r, k = cfg.num_classes;
  DetectionTargets<T> t;
  t.heatmap = Tensor<T>({k, fh, fw});
  t.offset = Tensor<T>({2, fh, fw});
  t.size = Tensor<T>({2, fh, fw});
  t.center_mask = Tensor<T>({1, fh, fw});
  t.num_objects = objects.size();
  for (const auto& o : objects) {
    GLOD_CHECK(o.class_id < k, ConfigError, "object class ", o.class_id, " >= num_classes ", k);
    GLOD_CHECK(o.w > 0 && o.h > 0, ConfigError, "object size must be positive");
    GLOD_CHECK(o.cx >= 0 && o.cy >= 0 && o.cx < double(cfg.image_w) && o.cy < double(cfg.image_h),
               ConfigError, "object center (", o.cx, ",", o.cy, ") outside ", cfg.image_w, "x",
               cfg.image_h, " image");
    const double fx = o.cx / double(r), fy = o.cy / double(r);
    const auto ix = static_cast<std::size_t>(std::floor(fx));
    const auto iy = static_cast<std::size_t>(std::floor(fy));
    const double wf = o.w / double(r), hf = o.h / double(r);
    const long radius = std::max(1L, long(std::floor(gaussian_radius(wf, hf, cfg.min_overlap))));
    const double sigma = double(radius) / 3.0;
    T* plane = t.heatmap.data() + o.class_id * fh * fw;
    for (long dy = -radius; dy <= radius; ++dy) {
      const long y = long(iy) + dy;
      if (y < 0 || y >= long(fh)) continue;
      for (long dx = -radius; dx <= radius; ++dx) {
        const long x = long(ix) + dx;
        if (x < 0 || x >= long(fw)) continue;
        const T g = static_cast<T>(std::exp(-double(dx * dx + dy * dy) / (2 * sigma * sigma)));
        T& cell = plane[std::size_t(y) * fw + std::size_t(x)];
        cell = std::max(cell, g);
      }
    }
    const std::size_t cell = iy * fw + ix;
    t.offset[cell] = static_cast<T>(fx - double(ix));
    t.offset[fh * fw + cell] = static_cast<T>(fy - double(iy));
    t.size[cell] = static_cast<T>(wf);
    t.size[fh * fw + cell] = static_cast<T>(hf);
    if (t.center_mask[cell] == T{0}) t.center_cells.push_back(cell);
    t.center_mask[cell] = T{1};
  }
  sample_negatives(t, cfg, seed);
  return t;
}

}  // namespace glod
