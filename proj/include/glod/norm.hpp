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

#include <cmath>
#include <memory>

#include "glod/ops.hpp"

namespace glod {

enum class Mode { train, eval };

/// Running statistics carried by a batch-norm layer between steps.
template <class T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
  T momentum = T(0.1);

  RunningStats() = default;
  explicit RunningStats(std::size_t channels)
      : mean({channels}, T{0}), var({channels}, T{1}) {}
};

namespace ops {

/// Per-channel batch normalization over N,H,W. Train mode normalizes with
/// batch statistics (biased variance) and updates `stats`; eval mode uses
/// `stats`.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  RunningStats<T>& stats, Mode mode, T eps = T(1e-5)) {
  GLOD_CHECK(eps > T{0}, ConfigError, "batch_norm eps must be positive");
  const auto& xv = x.value();
  const auto d = as_nchw(xv.shape(), "batch_norm input");
  GLOD_CHECK(gamma.value().size() == d.c && beta.value().size() == d.c, ShapeError,
             "batch_norm channel dimension ", d.c, " does not match gamma/beta length ",
             gamma.value().size(), "/", beta.value().size());
  GLOD_CHECK(stats.mean.size() == d.c && stats.var.size() == d.c, ShapeError,
             "batch_norm channel dimension ", d.c, " does not match running stats length ",
             stats.mean.size());
  const std::size_t hw = d.h * d.w;
  const std::size_t m = d.n * hw;
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(xv.shape());

  if (mode == Mode::eval) {
    auto scale = std::make_shared<std::vector<T>>(d.c);
    for (std::size_t c = 0; c < d.c; ++c) (*scale)[c] = T{1} / std::sqrt(stats.var[c] + eps);
    auto mu = std::make_shared<std::vector<T>>(stats.mean.values().begin(), stats.mean.values().end());
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t c = 0; c < d.c; ++c) {
        const T* xp = xv.data() + (n * d.c + c) * hw;
        T* yp = out.data() + (n * d.c + c) * hw;
        const T a = gv[c] * (*scale)[c];
        for (std::size_t i = 0; i < hw; ++i) yp[i] = a * (xp[i] - (*mu)[c]) + bv[c];
      }
    return x.tape().record(std::move(out), {x, gamma, beta},
                           [x, gamma, beta, d, scale, mu](Tape<T>& t, std::uint32_t self) {
      const auto& g = t.grad(self);
      const auto& xv = t.value(x.id());
      const auto& gv = t.value(gamma.id());
      const std::size_t hw = d.h * d.w;
      T* gx = t.needs_grad(x) ? t.grad_buffer(x).data() : nullptr;
      T* gg = t.needs_grad(gamma) ? t.grad_buffer(gamma).data() : nullptr;
      T* gb = t.needs_grad(beta) ? t.grad_buffer(beta).data() : nullptr;
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t off = (n * d.c + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const T go = g[off + i];
            if (gx) gx[off + i] += go * gv[c] * (*scale)[c];
            if (gg) gg[c] += go * (xv[off + i] - (*mu)[c]) * (*scale)[c];
            if (gb) gb[c] += go;
          }
        }
    });
  }

  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(d.c);
  for (std::size_t c = 0; c < d.c; ++c) {
    T mean{0};
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* xp = xv.data() + (n * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) mean += xp[i];
    }
    mean /= T(m);
    T var{0};
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* xp = xv.data() + (n * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) var += (xp[i] - mean) * (xp[i] - mean);
    }
    var /= T(m);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = (n * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T h = (xv[off + i] - mean) * is;
        (*xhat)[off + i] = h;
        out[off + i] = gv[c] * h + bv[c];
      }
    }
    const T unbiased = m > 1 ? var * T(m) / T(m - 1) : var;
    stats.mean[c] = (T{1} - stats.momentum) * stats.mean[c] + stats.momentum * mean;
    stats.var[c] = (T{1} - stats.momentum) * stats.var[c] + stats.momentum * unbiased;
  }
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, d, xhat, inv_std](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& gv = t.value(gamma.id());
    const std::size_t hw = d.h * d.w;
    const T m = T(d.n * hw);
    T* gx = t.needs_grad(x) ? t.grad_buffer(x).data() : nullptr;
    T* gg = t.needs_grad(gamma) ? t.grad_buffer(gamma).data() : nullptr;
    T* gb = t.needs_grad(beta) ? t.grad_buffer(beta).data() : nullptr;
    for (std::size_t c = 0; c < d.c; ++c) {
      T sum_g{0}, sum_gh{0};
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_g += g[off + i];
          sum_gh += g[off + i] * (*xhat)[off + i];
        }
      }
      if (gg) gg[c] += sum_gh;
      if (gb) gb[c] += sum_g;
      if (!gx) continue;
      const T k = gv[c] * (*inv_std)[c] / m;
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
          gx[off + i] += k * (m * g[off + i] - sum_g - (*xhat)[off + i] * sum_gh);
      }
    }
  });
}

/// Layer normalization over the last axis.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::size_t dim = xv.shape().back();
  GLOD_CHECK(gamma.value().size() == dim && beta.value().size() == dim, ShapeError,
             "layer_norm last dimension ", dim, " does not match gamma/beta");
  const std::size_t rows = xv.size() / dim;
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(xv.shape());
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = xv.data() + r * dim;
    T mean{0};
    for (std::size_t i = 0; i < dim; ++i) mean += p[i];
    mean /= T(dim);
    T var{0};
    for (std::size_t i = 0; i < dim; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= T(dim);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < dim; ++i) {
      const T h = (p[i] - mean) * is;
      (*xhat)[r * dim + i] = h;
      out[r * dim + i] = gv[i] * h + bv[i];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, rows, dim, xhat, inv_std](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& gv = t.value(gamma.id());
    T* gx = t.needs_grad(x) ? t.grad_buffer(x).data() : nullptr;
    T* gg = t.needs_grad(gamma) ? t.grad_buffer(gamma).data() : nullptr;
    T* gb = t.needs_grad(beta) ? t.grad_buffer(beta).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = g.data() + r * dim;
      const T* hr = xhat->data() + r * dim;
      T sum_d{0}, sum_dh{0};
      for (std::size_t i = 0; i < dim; ++i) {
        const T dh = gr[i] * gv[i];
        sum_d += dh;
        sum_dh += dh * hr[i];
        if (gg) gg[i] += gr[i] * hr[i];
        if (gb) gb[i] += gr[i];
      }
      if (!gx) continue;
      const T k = (*inv_std)[r] / T(dim);
      for (std::size_t i = 0; i < dim; ++i)
        gx[r * dim + i] += k * (T(dim) * gr[i] * gv[i] - sum_d - hr[i] * sum_dh);
    }
  });
}

}  // namespace ops
}  // namespace glod
