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

#include <limits>
#include <memory>

#include "glod/ops.hpp"

namespace glod {

struct ConvSpec {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;

  static ConvSpec square(std::size_t k, std::size_t pad = 0, std::size_t stride = 1) {
    return {k, k, stride, pad, pad, 1, 1};
  }

  std::size_t out_h(std::size_t in) const { return out_dim(in, kernel_h, pad_h, "height"); }
  std::size_t out_w(std::size_t in) const { return out_dim(in, kernel_w, pad_w, "width"); }

 private:
  std::size_t out_dim(std::size_t in, std::size_t k, std::size_t pad, const char* what) const {
    const long span = long(dilation) * (long(k) - 1) + 1;
    const long num = long(in) + 2 * long(pad) - span;
    GLOD_CHECK(num >= 0, ShapeError, "conv ", what, " collapses: in=", in,
               " kernel=", k, " dilation=", dilation, " pad=", pad);
    return std::size_t(num) / stride + 1;
  }
};

namespace ops {
namespace detail {

struct ConvGeom {
  Nchw in;
  std::size_t cout, ho, wo, cin_g, cout_g;
  ConvSpec spec;
};

/// Unfolds one group of one image into cols[cin_g*kh*kw, ho*wo].
template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const auto& s = g.spec;
  const std::size_t hw = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.in.h * g.in.w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        T* row = cols + ((c * s.kernel_h + ky) * s.kernel_w + kx) * hw;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = long(oy * s.stride + ky * s.dilation) - long(s.pad_h);
          T* r = row + oy * g.wo;
          if (iy < 0 || iy >= long(g.in.h)) {
            std::fill(r, r + g.wo, T{0});
            continue;
          }
          const T* xr = xc + std::size_t(iy) * g.in.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = long(ox * s.stride + kx * s.dilation) - long(s.pad_w);
            r[ox] = (ix < 0 || ix >= long(g.in.w)) ? T{0} : xr[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
  const auto& s = g.spec;
  const std::size_t hw = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* xc = dx + c * g.in.h * g.in.w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const T* row = cols + ((c * s.kernel_h + ky) * s.kernel_w + kx) * hw;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = long(oy * s.stride + ky * s.dilation) - long(s.pad_h);
          if (iy < 0 || iy >= long(g.in.h)) continue;
          T* xr = xc + std::size_t(iy) * g.in.w;
          const T* r = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = long(ox * s.stride + kx * s.dilation) - long(s.pad_w);
            if (ix >= 0 && ix < long(g.in.w)) xr[ix] += r[ox];
          }
        }
      }
    }
  }
}

/// Depthwise path (one input and one output channel per group).
template <class T>
void depthwise_forward(const T* x, const T* w, const ConvGeom& g, T* y) {
  const auto& s = g.spec;
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      T acc{0};
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        const long iy = long(oy * s.stride + ky * s.dilation) - long(s.pad_h);
        if (iy < 0 || iy >= long(g.in.h)) continue;
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          const long ix = long(ox * s.stride + kx * s.dilation) - long(s.pad_w);
          if (ix < 0 || ix >= long(g.in.w)) continue;
          acc += w[ky * s.kernel_w + kx] * x[std::size_t(iy) * g.in.w + std::size_t(ix)];
        }
      }
      y[oy * g.wo + ox] = acc;
    }
  }
}

template <class T>
void depthwise_backward(const T* x, const T* w, const T* gy, const ConvGeom& g, T* gx, T* gw) {
  const auto& s = g.spec;
  for (std::size_t oy = 0; oy < g.ho; ++oy) {
    for (std::size_t ox = 0; ox < g.wo; ++ox) {
      const T go = gy[oy * g.wo + ox];
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        const long iy = long(oy * s.stride + ky * s.dilation) - long(s.pad_h);
        if (iy < 0 || iy >= long(g.in.h)) continue;
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          const long ix = long(ox * s.stride + kx * s.dilation) - long(s.pad_w);
          if (ix < 0 || ix >= long(g.in.w)) continue;
          const std::size_t xi = std::size_t(iy) * g.in.w + std::size_t(ix);
          if (gx) gx[xi] += go * w[ky * s.kernel_w + kx];
          if (gw) gw[ky * s.kernel_w + kx] += go * x[xi];
        }
      }
    }
  }
}

}  // namespace detail

/// 2D cross-correlation over [C,H,W] or [N,C,H,W] input with weight
/// [Cout, Cin/groups, kh, kw].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>* b, const ConvSpec& spec) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto in = as_nchw(xv.shape(), "conv2d input");
  GLOD_CHECK(spec.groups >= 1 && spec.stride >= 1 && spec.dilation >= 1, ShapeError,
             "conv2d groups, stride and dilation must be positive");
  GLOD_CHECK(wv.rank() == 4, ShapeError, "conv2d weight must be rank 4, got ",
             to_string(wv.shape()));
  const std::size_t cout = wv.dim(0);
  GLOD_CHECK(in.c % spec.groups == 0, ShapeError, "conv2d input channels ", in.c,
             " not divisible by groups ", spec.groups);
  GLOD_CHECK(cout % spec.groups == 0, ShapeError, "conv2d output channels ", cout,
             " not divisible by groups ", spec.groups);
  GLOD_CHECK(wv.dim(1) == in.c / spec.groups, ShapeError,
             "conv2d weight dimension 1 (input channels per group) is ", wv.dim(1),
             ", expected ", in.c / spec.groups);
  GLOD_CHECK(wv.dim(2) == spec.kernel_h, ShapeError, "conv2d weight dimension 2 (kernel height) is ",
             wv.dim(2), ", spec says ", spec.kernel_h);
  GLOD_CHECK(wv.dim(3) == spec.kernel_w, ShapeError, "conv2d weight dimension 3 (kernel width) is ",
             wv.dim(3), ", spec says ", spec.kernel_w);
  if (b != nullptr)
    GLOD_CHECK(b->value().size() == cout, ShapeError, "conv2d bias length ",
               b->value().size(), " != output channels ", cout);

  detail::ConvGeom g{in, cout, spec.out_h(in.h), spec.out_w(in.w), in.c / spec.groups,
                     cout / spec.groups, spec};
  const std::size_t hw = g.ho * g.wo;
  const std::size_t kk = g.cin_g * spec.kernel_h * spec.kernel_w;
  const bool depthwise = g.cin_g == 1 && g.cout_g == 1;
  const bool pointwise = spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 &&
                         spec.pad_h == 0 && spec.pad_w == 0;
  Tensor<T> out(nchw_like(xv.shape(), in.n, cout, g.ho, g.wo));
  std::vector<T> cols(depthwise || pointwise ? 0 : kk * hw);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t gi = 0; gi < spec.groups; ++gi) {
      const T* xg = xv.data() + (n * in.c + gi * g.cin_g) * in.h * in.w;
      T* yg = out.data() + (n * cout + gi * g.cout_g) * hw;
      const T* wg = wv.data() + gi * g.cout_g * kk;
      if (depthwise) {
        detail::depthwise_forward(xg, wg, g, yg);
        continue;
      }
      const T* src = xg;
      if (!pointwise) {
        detail::im2col(xg, g, cols.data());
        src = cols.data();
      }
      ::glod::detail::gemm<T>(false, false, int(g.cout_g), int(hw), int(kk), wg, src, T{0}, yg);
    }
    if (b != nullptr) {
      const auto& bv = b->value();
      for (std::size_t c = 0; c < cout; ++c) {
        T* yc = out.data() + (n * cout + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) yc[i] += bv[c];
      }
    }
  }

  Var<T> bias = b != nullptr ? *b : Var<T>{};
  auto fn = [x, w, bias, g, depthwise, pointwise](Tape<T>& t, std::uint32_t self) {
    const auto& gy = t.grad(self);
    const auto& xv = t.value(x.id());
    const auto& wv = t.value(w.id());
    const auto& s = g.spec;
    const std::size_t hw = g.ho * g.wo;
    const std::size_t kk = g.cin_g * s.kernel_h * s.kernel_w;
    const bool want_x = t.needs_grad(x);
    const bool want_w = t.needs_grad(w);
    T* gx = want_x ? t.grad_buffer(x).data() : nullptr;
    T* gw = want_w ? t.grad_buffer(w).data() : nullptr;
    std::vector<T> cols(depthwise || pointwise ? 0 : kk * hw);
    std::vector<T> dcols(depthwise || pointwise || !want_x ? 0 : kk * hw);
    for (std::size_t n = 0; n < g.in.n; ++n) {
      for (std::size_t gi = 0; gi < s.groups; ++gi) {
        const std::size_t xoff = (n * g.in.c + gi * g.cin_g) * g.in.h * g.in.w;
        const T* xg = xv.data() + xoff;
        const T* gyg = gy.data() + (n * g.cout + gi * g.cout_g) * hw;
        const T* wg = wv.data() + gi * g.cout_g * kk;
        if (depthwise) {
          detail::depthwise_backward(xg, wg, gyg, g, gx ? gx + xoff : nullptr,
                                     gw ? gw + gi * kk : nullptr);
          continue;
        }
        if (pointwise) {
          if (want_w)
            ::glod::detail::gemm<T>(false, true, int(g.cout_g), int(kk), int(hw), gyg, xg, T{1},
                                    gw + gi * g.cout_g * kk);
          if (want_x)
            ::glod::detail::gemm<T>(true, false, int(kk), int(hw), int(g.cout_g), wg, gyg, T{1},
                                    gx + xoff);
          continue;
        }
        if (want_w) {
          detail::im2col(xg, g, cols.data());
          ::glod::detail::gemm<T>(false, true, int(g.cout_g), int(kk), int(hw), gyg, cols.data(),
                                  T{1}, gw + gi * g.cout_g * kk);
        }
        if (want_x) {
          ::glod::detail::gemm<T>(true, false, int(kk), int(hw), int(g.cout_g), wg, gyg, T{0},
                                  dcols.data());
          detail::col2im(dcols.data(), g, gx + xoff);
        }
      }
    }
    if (bias.valid() && t.needs_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t n = 0; n < g.in.n; ++n)
        for (std::size_t c = 0; c < g.cout; ++c) {
          const T* gc = gy.data() + (n * g.cout + c) * hw;
          T acc{0};
          for (std::size_t i = 0; i < hw; ++i) acc += gc[i];
          gb[c] += acc;
        }
    }
  };
  if (b != nullptr) return x.tape().record(std::move(out), {x, w, *b}, fn);
  return x.tape().record(std::move(out), {x, w}, fn);
}

/// Stride-1 max filter with (window-1)/2 padding of -inf. Forward only; used
/// by peak extraction.
template <class T>
Tensor<T> max_pool2d_same(const Tensor<T>& x, std::size_t window) {
  GLOD_CHECK(window >= 1 && window % 2 == 1, ShapeError,
             "max_pool2d_same window must be odd and >= 1, got ", window);
  const auto d = as_nchw(x.shape(), "max_pool2d_same input");
  if (window == 1) return x;
  const long r = long(window - 1) / 2;
  Tensor<T> out(x.shape());
  // Separable: row max then column max.
  std::vector<T> tmp(d.h * d.w);
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* src = x.data() + p * d.h * d.w;
    T* dst = out.data() + p * d.h * d.w;
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t xx = 0; xx < d.w; ++xx) {
        T m = -std::numeric_limits<T>::infinity();
        const long lo = std::max(0L, long(xx) - r), hi = std::min(long(d.w) - 1, long(xx) + r);
        for (long k = lo; k <= hi; ++k) m = std::max(m, src[y * d.w + std::size_t(k)]);
        tmp[y * d.w + xx] = m;
      }
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t xx = 0; xx < d.w; ++xx) {
        T m = -std::numeric_limits<T>::infinity();
        const long lo = std::max(0L, long(y) - r), hi = std::min(long(d.h) - 1, long(y) + r);
        for (long k = lo; k <= hi; ++k) m = std::max(m, tmp[std::size_t(k) * d.w + xx]);
        dst[y * d.w + xx] = m;
      }
  }
  return out;
}

/// Bilinear upsampling by an integer factor, half-pixel centers
/// (align_corners = false).
template <class T>
Var<T> bilinear_upsample(const Var<T>& x, std::size_t factor) {
  GLOD_CHECK(factor >= 1, ShapeError, "upsample factor must be >= 1");
  const auto& xv = x.value();
  const auto d = as_nchw(xv.shape(), "bilinear_upsample input");
  if (factor == 1) return reshape(x, xv.shape());
  const std::size_t oh = d.h * factor, ow = d.w * factor;
  struct Tap {
    std::size_t i0, i1;
    T l;
  };
  auto taps = [factor](std::size_t out, std::size_t in) {
    std::vector<Tap> v(out);
    for (std::size_t o = 0; o < out; ++o) {
      T src = (T(o) + T{0.5}) / T(factor) - T{0.5};
      if (src < T{0}) src = T{0};
      std::size_t i0 = std::min(std::size_t(src), in - 1);
      std::size_t i1 = std::min(i0 + 1, in - 1);
      v[o] = {i0, i1, src - T(i0)};
    }
    return v;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(oh, d.h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(ow, d.w));
  Tensor<T> out(nchw_like(xv.shape(), d.n, d.c, oh, ow));
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* src = xv.data() + p * d.h * d.w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto& a = (*ty)[y];
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const auto& b = (*tx)[xx];
        const T top = src[a.i0 * d.w + b.i0] * (T{1} - b.l) + src[a.i0 * d.w + b.i1] * b.l;
        const T bot = src[a.i1 * d.w + b.i0] * (T{1} - b.l) + src[a.i1 * d.w + b.i1] * b.l;
        dst[y * ow + xx] = top * (T{1} - a.l) + bot * a.l;
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [x, d, oh, ow, ty, tx](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      T* dst = gx.data() + p * d.h * d.w;
      const T* gp = g.data() + p * oh * ow;
      for (std::size_t y = 0; y < oh; ++y) {
        const auto& a = (*ty)[y];
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const auto& b = (*tx)[xx];
          const T v = gp[y * ow + xx];
          dst[a.i0 * d.w + b.i0] += v * (T{1} - a.l) * (T{1} - b.l);
          dst[a.i0 * d.w + b.i1] += v * (T{1} - a.l) * b.l;
          dst[a.i1 * d.w + b.i0] += v * a.l * (T{1} - b.l);
          dst[a.i1 * d.w + b.i1] += v * a.l * b.l;
        }
      }
    }
  });
}

/// Index map of depth-to-space: out[c, h*r+dy, w*r+dx] = in[c*r*r + dy*r + dx, h, w].
inline std::shared_ptr<const Index> pixel_shuffle_index(const Shape& in_shape, std::size_t r,
                                                         Shape* out_shape) {
  const auto d = as_nchw(in_shape, "pixel_shuffle input");
  GLOD_CHECK(r >= 1, ShapeError, "pixel_shuffle factor must be >= 1");
  GLOD_CHECK(d.c % (r * r) == 0, ShapeError, "pixel_shuffle channel dimension ", d.c,
             " not divisible by r^2 = ", r * r);
  const std::size_t c = d.c / (r * r), oh = d.h * r, ow = d.w * r;
  auto idx = std::make_shared<Index>(d.n * d.c * d.h * d.w);
  std::size_t i = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const std::size_t src_c = ch * r * r + (y % r) * r + (xx % r);
          (*idx)[i++] = static_cast<std::uint32_t>(((n * d.c + src_c) * d.h + y / r) * d.w + xx / r);
        }
  *out_shape = nchw_like(in_shape, d.n, c, oh, ow);
  return idx;
}

template <class T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
  Shape out;
  auto idx = pixel_shuffle_index(x.value().shape(), r, &out);
  return gather(x, std::move(idx), std::move(out));
}

/// Inverse of pixel_shuffle (space-to-depth).
template <class T>
Var<T> pixel_unshuffle(const Var<T>& x, std::size_t r) {
  const auto d = as_nchw(x.value().shape(), "pixel_unshuffle input");
  GLOD_CHECK(r >= 1 && d.h % r == 0 && d.w % r == 0, ShapeError,
             "pixel_unshuffle spatial dims ", d.h, "x", d.w, " not divisible by ", r);
  const Shape packed = nchw_like(x.value().shape(), d.n, d.c * r * r, d.h / r, d.w / r);
  Shape ignored;
  auto fwd = pixel_shuffle_index(packed, r, &ignored);
  auto inv = std::make_shared<Index>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[(*fwd)[i]] = static_cast<std::uint32_t>(i);
  return gather(x, std::move(inv), packed);
}

}  // namespace ops
}  // namespace glod
