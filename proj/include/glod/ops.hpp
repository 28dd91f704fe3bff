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
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "glod/autograd.hpp"
#include "glod/gemm.hpp"

namespace glod::ops {

// ---------------------------------------------------------------------------
// Broadcasting helpers. Operands must share rank; extents must match or be 1.

namespace detail {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline Broadcast broadcast(const Shape& a, const Shape& b) {
  GLOD_CHECK(a.size() == b.size(), ShapeError, "broadcast rank mismatch ",
             to_string(a), " vs ", to_string(b));
  Broadcast bc;
  bc.out.resize(a.size());
  const auto sa = strides_of(a);
  const auto sb = strides_of(b);
  bc.stride_a.resize(a.size());
  bc.stride_b.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    GLOD_CHECK(a[i] == b[i] || a[i] == 1 || b[i] == 1, ShapeError,
               "dimension ", i, " mismatch: ", to_string(a), " vs ",
               to_string(b));
    bc.out[i] = std::max(a[i], b[i]);
    bc.stride_a[i] = a[i] == 1 ? 0 : sa[i];
    bc.stride_b[i] = b[i] == 1 ? 0 : sb[i];
  }
  return bc;
}

/// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t rank = bc.out.size();
  const std::size_t total = numel(bc.out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    f(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < bc.out[d]) {
        ia += bc.stride_a[d];
        ib += bc.stride_b[d];
        break;
      }
      ia -= bc.stride_a[d] * (bc.out[d] - 1);
      ib -= bc.stride_b[d] * (bc.out[d] - 1);
      idx[d] = 0;
    }
  }
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting.

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    detail::add_into(out, bv);
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
      const auto& g = t.grad(self);
      if (t.needs_grad(a)) detail::add_into(t.grad_buffer(a), g);
      if (t.needs_grad(b)) detail::add_into(t.grad_buffer(b), g);
    });
  }
  auto bc = std::make_shared<detail::Broadcast>(detail::broadcast(av.shape(), bv.shape()));
  Tensor<T> out(bc->out);
  detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] + bv[ib];
  });
  return a.tape().record(std::move(out), {a, b}, [a, b, bc](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    T* ga = t.needs_grad(a) ? t.grad_buffer(a).data() : nullptr;
    T* gb = t.needs_grad(b) ? t.grad_buffer(b).data() : nullptr;
    detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) ga[ia] += g[i];
      if (gb) gb[ib] += g[i];
    });
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto bc = std::make_shared<detail::Broadcast>(detail::broadcast(av.shape(), bv.shape()));
  Tensor<T> out(bc->out);
  detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] - bv[ib];
  });
  return a.tape().record(std::move(out), {a, b}, [a, b, bc](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    T* ga = t.needs_grad(a) ? t.grad_buffer(a).data() : nullptr;
    T* gb = t.needs_grad(b) ? t.grad_buffer(b).data() : nullptr;
    detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) ga[ia] += g[i];
      if (gb) gb[ib] -= g[i];
    });
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto bc = std::make_shared<detail::Broadcast>(detail::broadcast(av.shape(), bv.shape()));
  Tensor<T> out(bc->out);
  detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = av[ia] * bv[ib];
  });
  return a.tape().record(std::move(out), {a, b}, [a, b, bc](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id());
    const auto& bv = t.value(b.id());
    T* ga = t.needs_grad(a) ? t.grad_buffer(a).data() : nullptr;
    T* gb = t.needs_grad(b) ? t.grad_buffer(b).data() : nullptr;
    detail::for_each_broadcast(*bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) ga[ia] += g[i] * bv[ib];
      if (gb) gb[ib] += g[i] * av[ia];
    });
  });
}

/// y = s*x + c
template <class T>
Var<T> affine(const Var<T>& x, T s, T c) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = s * v + c;
  return x.tape().record(std::move(out), {x}, [x, s](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  return affine(x, s, T{0});
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

namespace detail {

/// Records y = f(x) with dy/dx = df(x, y).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = f(v);
  return x.tape().record(std::move(out), {x}, [x, df](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x.id());
    const auto& yv = t.value(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> relu(const Var<T>& x) {
  if (glod::detail::tracing_branches())
    for (T v : x.value().values()) glod::detail::trace_branch(v > T{0});
  return detail::unary(
      x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <class T>
T sigmoid_value(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T{1} - y); });
}

/// Exact GELU, x * Phi(x).
template <class T>
T gelu_value(T v) {
  return T{0.5} * v * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
}

template <class T>
Var<T> gelu(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return gelu_value(v); },
      [](T v, T) {
        const T cdf = T{0.5} * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T{-0.5} * v * v) * std::numbers::inv_sqrtpi_v<T> /
                      std::numbers::sqrt2_v<T>;
        return cdf + v * pdf;
      });
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

enum class Activation { relu, gelu, sigmoid };

template <class T>
Var<T> activation(const Var<T>& x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return relu(x);
    case Activation::gelu:
      return gelu(x);
    case Activation::sigmoid:
      return sigmoid(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (T v : x.value().values()) s += v;
  return x.tape().record(Tensor<T>::scalar(s), {x}, [x](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(x).values()) v += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

enum class Reduce { global_avg, global_max, channel_avg, channel_max };

/// global_* collapse H,W to [N,C,1,1]; channel_* collapse C to [N,1,H,W].
/// Max reductions route the gradient to the first maximal index.
template <class T>
Var<T> reduce(const Var<T>& x, Reduce kind) {
  const auto& xv = x.value();
  const auto d = as_nchw(xv.shape(), "reduce input");
  const bool global = kind == Reduce::global_avg || kind == Reduce::global_max;
  const bool is_max = kind == Reduce::global_max || kind == Reduce::channel_max;
  const std::size_t hw = d.h * d.w;
  Tensor<T> out(global ? nchw_like(xv.shape(), d.n, d.c, 1, 1)
                       : nchw_like(xv.shape(), d.n, 1, d.h, d.w));
  auto arg = std::make_shared<std::vector<std::size_t>>(is_max ? out.size() : 0);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = xv.data() + n * d.c * hw;
    if (global) {
      for (std::size_t c = 0; c < d.c; ++c) {
        const T* p = xn + c * hw;
        const std::size_t o = n * d.c + c;
        if (is_max) {
          std::size_t best = 0;
          for (std::size_t i = 1; i < hw; ++i)
            if (p[i] > p[best]) best = i;
          out[o] = p[best];
          (*arg)[o] = n * d.c * hw + c * hw + best;
        } else {
          T s{0};
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
          out[o] = s / static_cast<T>(hw);
        }
      }
    } else {
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t o = n * hw + i;
        if (is_max) {
          std::size_t best = 0;
          for (std::size_t c = 1; c < d.c; ++c)
            if (xn[c * hw + i] > xn[best * hw + i]) best = c;
          out[o] = xn[best * hw + i];
          (*arg)[o] = n * d.c * hw + best * hw + i;
        } else {
          T s{0};
          for (std::size_t c = 0; c < d.c; ++c) s += xn[c * hw + i];
          out[o] = s / static_cast<T>(d.c);
        }
      }
    }
  }
  if (glod::detail::tracing_branches())
    for (std::size_t a : *arg) glod::detail::trace_branch(a);
  return x.tape().record(std::move(out), {x}, [x, d, global, is_max, arg](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_buffer(x);
    const std::size_t hw = d.h * d.w;
    if (is_max) {
      for (std::size_t o = 0; o < g.size(); ++o) gx[(*arg)[o]] += g[o];
      return;
    }
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t c = 0; c < d.c; ++c) {
        T* gp = gx.data() + (n * d.c + c) * hw;
        if (global) {
          const T gv = g[n * d.c + c] / static_cast<T>(hw);
          for (std::size_t i = 0; i < hw; ++i) gp[i] += gv;
        } else {
          const T* gg = g.data() + n * hw;
          const T inv = T{1} / static_cast<T>(d.c);
          for (std::size_t i = 0; i < hw; ++i) gp[i] += gg[i] * inv;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops.

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& t, std::uint32_t self) {
    detail::add_into(t.grad_buffer(x), t.grad(self));
  });
}

using Index = std::vector<std::uint32_t>;

/// out[i] = x[index[i]]. Backward scatter-adds, so index may repeat.
template <class T>
Var<T> gather(const Var<T>& x, std::shared_ptr<const Index> index, Shape shape) {
  GLOD_CHECK(numel(shape) == index->size(), ShapeError, "gather index length ",
             index->size(), " != output size of ", to_string(shape));
  const auto& xv = x.value();
  Tensor<T> out(std::move(shape));
  for (std::size_t i = 0; i < index->size(); ++i) out[i] = xv[(*index)[i]];
  return x.tape().record(std::move(out), {x}, [x, index](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += g[i];
  });
}

/// Index map for a permutation of axes: out axis i is input axis perm[i].
inline std::shared_ptr<const Index> permute_index(const Shape& in, const std::vector<std::size_t>& perm,
                                                  Shape* out_shape) {
  GLOD_CHECK(perm.size() == in.size(), ShapeError, "permutation rank ",
             perm.size(), " != tensor rank ", in.size());
  const auto in_strides = detail::strides_of(in);
  Shape out(in.size());
  std::vector<std::size_t> st(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out[i] = in[perm[i]];
    st[i] = in_strides[perm[i]];
  }
  auto idx = std::make_shared<Index>(numel(out));
  detail::Broadcast walk{out, st, st};
  detail::for_each_broadcast(walk, [&](std::size_t i, std::size_t ia, std::size_t) {
    (*idx)[i] = static_cast<std::uint32_t>(ia);
  });
  *out_shape = out;
  return idx;
}

template <class T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  Shape out;
  auto idx = permute_index(x.value().shape(), perm, &out);
  return gather(x, std::move(idx), std::move(out));
}

/// Concatenation along `axis`; all other extents must match.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  GLOD_CHECK(!xs.empty(), ShapeError, "concat of nothing");
  Shape shape = xs[0].value().shape();
  GLOD_CHECK(axis < shape.size(), ShapeError, "concat axis ", axis, " out of range");
  std::size_t total = 0;
  for (const auto& x : xs) {
    const auto& s = x.value().shape();
    GLOD_CHECK(s.size() == shape.size(), ShapeError, "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      GLOD_CHECK(d == axis || s[d] == shape[d], ShapeError, "concat dimension ",
                 d, " mismatch: ", to_string(s), " vs ", to_string(shape));
    }
    total += s[axis];
  }
  shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  Tensor<T> out(shape);
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& x : xs) {
    const auto& xv = x.value();
    const std::size_t w = xv.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(xv.data() + o * w, w, out.data() + o * total * inner + off);
    widths.push_back(w);
    off += w;
  }
  auto fn = [ids = xs, widths, outer, inner, total](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (t.needs_grad(ids[k])) {
        auto& gx = t.grad_buffer(ids[k]);
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = g.data() + o * total * inner + off;
          T* dst = gx.data() + o * w;
          for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
        }
      }
      off += w;
    }
  };
  return xs[0].tape().record(std::move(out), std::span<const Var<T>>(xs), fn);
}

// ---------------------------------------------------------------------------
// Dense linear algebra.

/// Affine map over the last axis: x[..., D] * W[D, E] + b[E].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* b = nullptr) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  GLOD_CHECK(wv.rank() == 2, ShapeError, "linear weight must be rank 2");
  const std::size_t in = wv.dim(0), outd = wv.dim(1);
  GLOD_CHECK(xv.shape().back() == in, ShapeError, "linear inner dimension ",
             xv.shape().back(), " != weight rows ", in);
  const std::size_t rows = xv.size() / in;
  Shape shape = xv.shape();
  shape.back() = outd;
  Tensor<T> out(shape);
  ::glod::detail::gemm<T>(false, false, int(rows), int(outd), int(in), xv.data(), wv.data(), T{0},
                          out.data());
  Var<T> bias;
  if (b != nullptr) {
    const auto& bv = b->value();
    GLOD_CHECK(bv.size() == outd, ShapeError, "linear bias length ", bv.size(),
               " != ", outd);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t e = 0; e < outd; ++e) out[r * outd + e] += bv[e];
    bias = *b;
  }
  auto fn = [x, w, bias, rows, in, outd](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(x))
      ::glod::detail::gemm<T>(false, true, int(rows), int(in), int(outd), g.data(),
                              t.value(w.id()).data(), T{1}, t.grad_buffer(x).data());
    if (t.needs_grad(w))
      ::glod::detail::gemm<T>(true, false, int(in), int(outd), int(rows), t.value(x.id()).data(),
                              g.data(), T{1}, t.grad_buffer(w).data());
    if (bias.valid() && t.needs_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t e = 0; e < outd; ++e) gb[e] += g[r * outd + e];
    }
  };
  if (b != nullptr) return x.tape().record(std::move(out), {x, w, *b}, fn);
  return x.tape().record(std::move(out), {x, w}, fn);
}

/// Batched matmul over leading axes: a[..., M, K] * b[..., K, N]
/// (or b[..., N, K] when trans_b).
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_b = false) {
  const auto& av = a.value();
  const auto& bv = b.value();
  GLOD_CHECK(av.rank() >= 2 && av.rank() == bv.rank(), ShapeError, "bmm rank mismatch ",
             to_string(av.shape()), " vs ", to_string(bv.shape()));
  const std::size_t r = av.rank();
  const std::size_t m = av.dim(r - 2), k = av.dim(r - 1);
  const std::size_t n = trans_b ? bv.dim(r - 2) : bv.dim(r - 1);
  const std::size_t kb = trans_b ? bv.dim(r - 1) : bv.dim(r - 2);
  GLOD_CHECK(k == kb, ShapeError, "bmm inner dimension ", k, " != ", kb);
  const std::size_t batch = av.size() / (m * k);
  GLOD_CHECK(bv.size() / (k * n) == batch, ShapeError, "bmm batch mismatch");
  Shape shape = av.shape();
  shape[r - 1] = n;
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < batch; ++i)
    ::glod::detail::gemm<T>(false, trans_b, int(m), int(n), int(k), av.data() + i * m * k,
                            bv.data() + i * k * n, T{0}, out.data() + i * m * n);
  return a.tape().record(std::move(out), {a, b}, [a, b, trans_b, batch, m, n, k](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id());
    const auto& bv = t.value(b.id());
    for (std::size_t i = 0; i < batch; ++i) {
      const T* gi = g.data() + i * m * n;
      if (t.needs_grad(a)) {
        // dA = G * B^T  (or G * B when trans_b)
        ::glod::detail::gemm<T>(false, !trans_b, int(m), int(k), int(n), gi,
                                bv.data() + i * k * n, T{1},
                                t.grad_buffer(a).data() + i * m * k);
      }
      if (t.needs_grad(b)) {
        if (trans_b) {
          // dB[n,k] = G^T * A
          ::glod::detail::gemm<T>(true, false, int(n), int(k), int(m), gi,
                                  av.data() + i * m * k, T{1},
                                  t.grad_buffer(b).data() + i * k * n);
        } else {
          ::glod::detail::gemm<T>(true, false, int(k), int(n), int(m),
                                  av.data() + i * m * k, gi, T{1},
                                  t.grad_buffer(b).data() + i * k * n);
        }
      }
    }
  });
}

/// Softmax over the last axis with max subtraction.
template <class T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const auto& xv = x.value();
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = xv.data() + r * d;
    T* o = out.data() + r * d;
    const T mx = *std::max_element(p, p + d);
    T s{0};
    for (std::size_t i = 0; i < d; ++i) {
      o[i] = std::exp(p[i] - mx);
      s += o[i];
    }
    for (std::size_t i = 0; i < d; ++i) o[i] /= s;
  }
  return x.tape().record(std::move(out), {x}, [x, rows, d](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.data() + r * d;
      const T* gr = g.data() + r * d;
      T dot{0};
      for (std::size_t i = 0; i < d; ++i) dot += yr[i] * gr[i];
      for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += yr[i] * (gr[i] - dot);
    }
  });
}

}  // namespace glod::ops
