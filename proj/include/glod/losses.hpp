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
#include <span>
#include <vector>

#include "glod/autograd.hpp"
#include "glod/model.hpp"
#include "glod/targets.hpp"

namespace glod {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  double clamp = 1e-7;
};

namespace detail {

inline void check_batch(const Shape& s, std::size_t images, std::size_t c, std::size_t h,
                        std::size_t w, const char* what) {
  const auto d = as_nchw(s, what);
  GLOD_CHECK(d.n == images && d.c == c && d.h == h && d.w == w, ShapeError, what, " shape ",
             to_string(s), " does not match ", images, " target(s) of [", c, ",", h, ",", w,
             "]");
}

/// Per-cell focal contributions and derivatives w.r.t. the prediction.
struct FocalCell {
  double value, grad;
};

inline FocalCell focal_positive(double p, const FocalParams& fp) {
  const double lo = fp.clamp, hi = 1.0 - fp.clamp;
  const bool clamped = p < lo || p > hi;
  trace_branch(clamped);
  p = std::clamp(p, lo, hi);
  const double q = 1.0 - p;
  const double v = std::pow(q, fp.alpha) * std::log(p);
  const double g = -fp.alpha * std::pow(q, fp.alpha - 1) * std::log(p) + std::pow(q, fp.alpha) / p;
  return {v, clamped ? 0.0 : g};
}

inline FocalCell focal_negative(double p, double y, const FocalParams& fp) {
  const double lo = fp.clamp, hi = 1.0 - fp.clamp;
  const bool clamped = p < lo || p > hi;
  trace_branch(clamped);
  p = std::clamp(p, lo, hi);
  const double damp = std::pow(1.0 - y, fp.beta);
  const double v = damp * std::pow(p, fp.alpha) * std::log(1.0 - p);
  const double g = damp * (fp.alpha * std::pow(p, fp.alpha - 1) * std::log(1.0 - p) -
                           std::pow(p, fp.alpha) / (1.0 - p));
  return {v, clamped ? 0.0 : g};
}

}  // namespace detail

/// Penalty-reduced focal loss averaged over the images of a batch.
/// `pred` is [N,K,h,w] (or [K,h,w] for one image) of probabilities.
template <class T>
Var<T> focal_loss(const Var<T>& pred, std::span<const DetectionTargets<T>> targets,
                  FocalParams fp = {}) {
  GLOD_CHECK(!targets.empty(), ShapeError, "focal_loss needs at least one target");
  const auto& y0 = targets[0].heatmap.shape();
  detail::check_batch(pred.shape(), targets.size(), y0[0], y0[1], y0[2], "heatmap prediction");
  const std::size_t per = targets[0].heatmap.size();
  const T* pv = pred.value().data();
  auto grad = std::make_shared<std::vector<T>>(pred.value().size(), T{0});
  double total = 0;
  const double inv_n = 1.0 / double(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    GLOD_CHECK(t.heatmap.shape() == y0, ShapeError, "targets in a batch differ in shape");
    const T* y = t.heatmap.data();
    const T* p = pv + i * per;
    T* g = grad->data() + i * per;
    const double norm = 1.0 / double(std::max<std::size_t>(t.num_objects, 1));
    const double scale = -norm * inv_n;
    double acc = 0;
    for (std::size_t c = 0; c < per; ++c) {
      if (y[c] == T{1}) {
        const auto f = detail::focal_positive(double(p[c]), fp);
        acc += f.value;
        g[c] = static_cast<T>(scale * f.grad);
      } else if (y[c] > T{0}) {
        const auto f = detail::focal_negative(double(p[c]), double(y[c]), fp);
        acc += f.value;
        g[c] = static_cast<T>(scale * f.grad);
      }
    }
    for (std::size_t c : t.neg_cells) {
      if (y[c] > T{0}) continue;  // already counted in the ring
      const auto f = detail::focal_negative(double(p[c]), 0.0, fp);
      acc += f.value;
      g[c] = static_cast<T>(scale * f.grad);
    }
    total += -norm * acc;
  }
  return pred.tape().record(Tensor<T>::scalar(static_cast<T>(total * inv_n)), {pred},
                            [pred, grad](Tape<T>& tape, std::uint32_t self) {
                              const T up = tape.grad(self)[0];
                              auto gx = tape.grad_buffer(pred).values();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += up * (*grad)[i];
                            });
}

/// Smooth-L1 of a scalar difference.
inline double smooth_l1_value(double x, double y, double beta = 1.0) {
  GLOD_CHECK(beta > 0, ConfigError, "smooth_l1 beta must be positive");
  const double d = std::abs(x - y);
  detail::trace_branch(d < beta);
  return d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
}

inline double smooth_l1_grad(double x, double y, double beta = 1.0) {
  const double d = x - y;
  return std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
}

enum class Regression { offset, size };

/// Smooth-L1 over the two regression channels at each image's center cells,
/// averaged over cells x dims, then over images. Empty masks contribute 0.
template <class T>
Var<T> regression_loss(const Var<T>& pred, std::span<const DetectionTargets<T>> targets,
                       Regression which, double beta = 1.0) {
  GLOD_CHECK(!targets.empty(), ShapeError, "regression_loss needs at least one target");
  const auto& s0 = targets[0].offset.shape();
  detail::check_batch(pred.shape(), targets.size(), 2, s0[1], s0[2],
                      which == Regression::offset ? "offset prediction" : "size prediction");
  const std::size_t plane = s0[1] * s0[2];
  const T* pv = pred.value().data();
  auto grad = std::make_shared<std::vector<T>>(pred.value().size(), T{0});
  double total = 0;
  const double inv_n = 1.0 / double(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (t.center_cells.empty()) continue;
    const Tensor<T>& tgt = which == Regression::offset ? t.offset : t.size;
    const double scale = inv_n / double(2 * t.center_cells.size());
    double acc = 0;
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t cell : t.center_cells) {
        const std::size_t at = d * plane + cell;
        const double x = double(pv[i * 2 * plane + at]), y = double(tgt[at]);
        acc += smooth_l1_value(x, y, beta);
        (*grad)[i * 2 * plane + at] = static_cast<T>(scale * smooth_l1_grad(x, y, beta));
      }
    }
    total += acc * scale;
  }
  return pred.tape().record(Tensor<T>::scalar(static_cast<T>(total)), {pred},
                            [pred, grad](Tape<T>& tape, std::uint32_t self) {
                              const T up = tape.grad(self)[0];
                              auto gx = tape.grad_buffer(pred).values();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += up * (*grad)[i];
                            });
}

struct LossWeights {
  double cls = 1.0, off = 1.0, size = 1.0;
};

template <class T>
struct LossBreakdown {
  Var<T> total;
  double cls = 0, off = 0, size = 0;  // unweighted terms

  double total_value() const { return double(total.value().item()); }
};

template <class T>
LossBreakdown<T> total_loss(const HeadOutput<T>& head,
                            std::span<const DetectionTargets<T>> targets, LossWeights w = {},
                            FocalParams fp = {}) {
  LossBreakdown<T> out;
  auto cls = focal_loss(head.heatmap, targets, fp);
  auto off = regression_loss(head.offset, targets, Regression::offset);
  auto size = regression_loss(head.size, targets, Regression::size);
  out.cls = double(cls.value().item());
  out.off = double(off.value().item());
  out.size = double(size.value().item());
  out.total = ops::add(ops::add(ops::scale(cls, T(w.cls)), ops::scale(off, T(w.off))),
                       ops::scale(size, T(w.size)));
  return out;
}

}  // namespace glod
