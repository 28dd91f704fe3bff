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

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "glod/module.hpp"

namespace glod::swin {

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::size_t patch_size = 4;
  std::size_t window_size = 4;
  std::array<std::size_t, 4> depths{2, 2, 2, 2};
  std::array<std::size_t, 4> dims{32, 64, 128, 256};
  std::array<std::size_t, 4> heads{2, 4, 4, 8};
  std::size_t mlp_ratio = 2;

  /// Stride of stage i relative to the input image.
  std::size_t stride(std::size_t stage) const { return patch_size << stage; }

  void validate() const {
    GLOD_CHECK(patch_size >= 1 && window_size >= 1, ConfigError,
               "patch and window size must be positive");
    for (std::size_t s = 0; s < 4; ++s) {
      GLOD_CHECK(depths[s] >= 1, ConfigError, "stage ", s, " depth must be >= 1");
      GLOD_CHECK(heads[s] >= 1 && dims[s] % heads[s] == 0, ConfigError, "stage ", s, " dim ",
                 dims[s], " not divisible by heads ", heads[s]);
    }
  }

  void validate_image(std::size_t h, std::size_t w) const {
    const std::size_t unit = patch_size * 8 * window_size;
    GLOD_CHECK(h % unit == 0, ShapeError, "image height ", h, " not divisible by patch*8*window = ",
               unit);
    GLOD_CHECK(w % unit == 0, ShapeError, "image width ", w, " not divisible by patch*8*window = ",
               unit);
  }
};

namespace detail {

/// Gather map [N,H,W,C] -> [N*nW, ws*ws, C] after a cyclic shift by -shift.
inline std::shared_ptr<const ops::Index> partition_index(std::size_t n, std::size_t h, std::size_t w,
                                                         std::size_t c, std::size_t ws,
                                                         std::size_t shift) {
  auto idx = std::make_shared<ops::Index>(n * h * w * c);
  std::size_t i = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t wy = 0; wy < h / ws; ++wy)
      for (std::size_t wx = 0; wx < w / ws; ++wx)
        for (std::size_t py = 0; py < ws; ++py)
          for (std::size_t px = 0; px < ws; ++px) {
            const std::size_t y = (wy * ws + py + shift) % h;
            const std::size_t x = (wx * ws + px + shift) % w;
            for (std::size_t ch = 0; ch < c; ++ch)
              (*idx)[i++] = static_cast<std::uint32_t>(((b * h + y) * w + x) * c + ch);
          }
  return idx;
}

inline std::shared_ptr<const ops::Index> inverse(const ops::Index& fwd) {
  auto inv = std::make_shared<ops::Index>(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) (*inv)[fwd[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

/// Additive mask [1, nW, 1, L, L]: -1e9 between tokens that came from
/// different regions before the cyclic shift.
template <class T>
Tensor<T> shift_mask(std::size_t h, std::size_t w, std::size_t ws, std::size_t shift) {
  std::vector<int> region(h * w);
  auto band = [&](std::size_t v, std::size_t extent) {
    if (v < extent - ws) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) region[y * w + x] = band(y, h) * 3 + band(x, w);
  const std::size_t nwy = h / ws, nwx = w / ws, l = ws * ws;
  Tensor<T> mask({1, nwy * nwx, 1, l, l});
  for (std::size_t wy = 0; wy < nwy; ++wy)
    for (std::size_t wx = 0; wx < nwx; ++wx)
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < l; ++j) {
          const int ri = region[(wy * ws + i / ws) * w + wx * ws + i % ws];
          const int rj = region[(wy * ws + j / ws) * w + wx * ws + j % ws];
          mask[((wy * nwx + wx) * l + i) * l + j] = ri == rj ? T{0} : T(-1e9);
        }
  return mask;
}

}  // namespace detail

template <class T>
struct AttentionProbe {
  Tensor<T> probs;  // [N, nW, heads, L, L]
};

/// Multi-head self-attention inside non-overlapping windows, with a learned
/// relative position bias. Tokens are channel-last [N,H,W,C].
template <class T>
struct WindowAttention {
  std::size_t dim = 0, heads = 1, window = 1;
  nn::Linear<T> qkv, proj;
  // Query and value biases only: a key bias shifts every score of a query
  // equally and cancels in the softmax.
  Parameter<T> q_bias, v_bias;
  Parameter<T> rel_bias;  // [(2w-1)^2, heads]
  std::shared_ptr<const ops::Index> bias_index;

  WindowAttention() = default;
  WindowAttention(std::size_t d, std::size_t nh, std::size_t ws, Rng& rng)
      : dim(d), heads(nh), window(ws), qkv(d, 3 * d, false, rng), proj(d, d, true, rng) {
    q_bias = Parameter<T>(Tensor<T>({d}));
    v_bias = Parameter<T>(Tensor<T>({d}));
    const std::size_t side = 2 * ws - 1;
    rel_bias = Parameter<T>(trunc_normal_tensor<T>({side * side, nh}, T(0.02), rng));
    const std::size_t l = ws * ws;
    auto idx = std::make_shared<ops::Index>(nh * l * l);
    for (std::size_t h = 0; h < nh; ++h)
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < l; ++j) {
          const std::size_t dy = i / ws + ws - 1 - j / ws;
          const std::size_t dx = i % ws + ws - 1 - j % ws;
          (*idx)[(h * l + i) * l + j] = static_cast<std::uint32_t>((dy * side + dx) * nh + h);
        }
    bias_index = idx;
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& tokens, std::size_t shift,
                    AttentionProbe<T>* probe = nullptr) {
    const auto& s = tokens.shape();
    GLOD_CHECK(s.size() == 4 && s[3] == dim, ShapeError, "window_attention expects [N,H,W,", dim,
               "], got ", to_string(s));
    const std::size_t n = s[0], h = s[1], w = s[2], ws = window, l = ws * ws;
    GLOD_CHECK(h % ws == 0, ShapeError, "window_attention height ", h,
               " not divisible by window ", ws);
    GLOD_CHECK(w % ws == 0, ShapeError, "window_attention width ", w,
               " not divisible by window ", ws);
    GLOD_CHECK(shift < ws, ShapeError, "shift ", shift, " must be smaller than window ", ws);
    const std::size_t nw = (h / ws) * (w / ws), b = n * nw, hd = dim / heads;

    auto part = detail::partition_index(n, h, w, dim, ws, shift);
    auto xw = ops::gather(tokens, part, {b, l, dim});
    auto qkv_bias = ops::concat<T>({ctx.tape.param(q_bias), ctx.tape.constant(Tensor<T>({dim})),
                                    ctx.tape.param(v_bias)},
                                   0);
    auto qkv_out = ops::add(qkv(ctx, xw), ops::reshape(qkv_bias, {1, 1, 3 * dim}));  // [B, L, 3C]

    auto split = [&](std::size_t which) {
      auto idx = std::make_shared<ops::Index>(b * heads * l * hd);
      std::size_t i = 0;
      for (std::size_t bb = 0; bb < b; ++bb)
        for (std::size_t hh = 0; hh < heads; ++hh)
          for (std::size_t t = 0; t < l; ++t)
            for (std::size_t d = 0; d < hd; ++d)
              (*idx)[i++] = static_cast<std::uint32_t>((bb * l + t) * 3 * dim + which * dim + hh * hd + d);
      return ops::gather(qkv_out, std::move(idx), {b, heads, l, hd});
    };
    auto q = ops::scale(split(0), T{1} / std::sqrt(T(hd)));
    auto k = split(1);
    auto v = split(2);

    auto scores = ops::bmm(q, k, true);  // [B, heads, L, L]
    auto bias = ops::gather(ctx.tape.param(rel_bias), bias_index, {1, heads, l, l});
    scores = ops::add(scores, bias);
    if (shift > 0) {
      scores = ops::reshape(scores, {n, nw, heads, l, l});
      scores = ops::add(scores, ctx.tape.constant(detail::shift_mask<T>(h, w, ws, shift)));
      scores = ops::reshape(scores, {b, heads, l, l});
    }
    auto attn = ops::softmax_lastdim(scores);
    if (probe) probe->probs = attn.value().reshaped({n, nw, heads, l, l});

    auto o = ops::bmm(attn, v);                  // [B, heads, L, hd]
    o = ops::permute(o, {0, 2, 1, 3});           // [B, L, heads, hd]
    o = ops::reshape(o, {b, l, dim});
    o = proj(ctx, o);
    return ops::gather(o, detail::inverse(*part), {n, h, w, dim});
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    qkv.collect(reg, join(p, "qkv"));
    reg.add(join(p, "q_bias"), q_bias);
    reg.add(join(p, "v_bias"), v_bias);
    proj.collect(reg, join(p, "proj"));
    reg.add(join(p, "rel_bias"), rel_bias);
  }
};

/// Pre-norm transformer block: x + W-MSA(LN(x)), then x + MLP(LN(x)).
template <class T>
struct SwinBlock {
  nn::LayerNorm<T> norm1, norm2;
  WindowAttention<T> attn;
  nn::Linear<T> fc1, fc2;
  std::size_t shift = 0;

  SwinBlock() = default;
  SwinBlock(std::size_t dim, std::size_t heads, std::size_t ws, std::size_t shift_size,
            std::size_t mlp_ratio, Rng& rng)
      : norm1(dim),
        norm2(dim),
        attn(dim, heads, ws, rng),
        fc1(dim, dim * mlp_ratio, true, rng),
        fc2(dim * mlp_ratio, dim, true, rng),
        shift(shift_size) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    auto y = ops::add(x, attn(ctx, norm1(ctx, x), shift));
    auto m = fc2(ctx, ops::gelu(fc1(ctx, norm2(ctx, y))));
    return ops::add(y, m);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    norm1.collect(reg, join(p, "norm1"));
    attn.collect(reg, join(p, "attn"));
    norm2.collect(reg, join(p, "norm2"));
    fc1.collect(reg, join(p, "fc1"));
    fc2.collect(reg, join(p, "fc2"));
  }
};

/// Non-overlapping p x p patches projected to `dim` (a stride-p conv),
/// followed by LayerNorm. Returns channel-last tokens.
template <class T>
struct PatchEmbed {
  nn::Conv2d<T> proj;
  nn::LayerNorm<T> norm;
  std::size_t patch = 4;

  PatchEmbed() = default;
  PatchEmbed(std::size_t cin, std::size_t dim, std::size_t p, Rng& rng)
      : proj(cin, dim, ConvSpec::square(p, 0, p), true, rng), norm(dim), patch(p) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& image) {
    const auto d = as_nchw(image.shape(), "patch_embed input");
    GLOD_CHECK(d.h % patch == 0 && d.w % patch == 0, ShapeError, "image ", d.h, "x", d.w,
               " not divisible by patch size ", patch);
    auto x = ops::reshape(image, {d.n, d.c, d.h, d.w});
    x = ops::permute(proj(ctx, x), {0, 2, 3, 1});
    return norm(ctx, x);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    proj.collect(reg, join(p, "proj"));
    norm.collect(reg, join(p, "norm"));
  }
};

/// Concatenates each 2x2 neighbourhood (4C) and projects to 2C.
template <class T>
struct PatchMerge {
  nn::Linear<T> reduce;

  PatchMerge() = default;
  PatchMerge(std::size_t dim, Rng& rng) : reduce(4 * dim, 2 * dim, false, rng) {}

  static std::shared_ptr<const ops::Index> index(std::size_t n, std::size_t h, std::size_t w,
                                                 std::size_t c) {
    auto idx = std::make_shared<ops::Index>(n * h * w * c);
    std::size_t i = 0;
    // Neighbour order (dy,dx): (0,0), (1,0), (0,1), (1,1).
    constexpr std::size_t dys[4] = {0, 1, 0, 1}, dxs[4] = {0, 0, 1, 1};
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t y = 0; y < h / 2; ++y)
        for (std::size_t x = 0; x < w / 2; ++x)
          for (std::size_t q = 0; q < 4; ++q)
            for (std::size_t ch = 0; ch < c; ++ch)
              (*idx)[i++] = static_cast<std::uint32_t>(
                  ((b * h + 2 * y + dys[q]) * w + 2 * x + dxs[q]) * c + ch);
    return idx;
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& tokens) {
    const auto& s = tokens.shape();
    GLOD_CHECK(s.size() == 4, ShapeError, "patch_merge expects [N,H,W,C]");
    GLOD_CHECK(s[1] % 2 == 0, ShapeError, "patch_merge height ", s[1], " is odd");
    GLOD_CHECK(s[2] % 2 == 0, ShapeError, "patch_merge width ", s[2], " is odd");
    auto x = ops::gather(tokens, index(s[0], s[1], s[2], s[3]), {s[0], s[1] / 2, s[2] / 2, 4 * s[3]});
    return reduce(ctx, x);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) { reduce.collect(reg, join(p, "reduce")); }
};

/// Four feature maps [N,C_s,H/stride_s,W/stride_s], finest first.
template <class T>
struct StageOutputs {
  std::array<Var<T>, 4> maps;
};

template <class T>
struct Encoder {
  EncoderConfig cfg;
  PatchEmbed<T> embed;
  std::array<PatchMerge<T>, 3> merges;
  std::array<std::vector<SwinBlock<T>>, 4> blocks;

  Encoder() = default;
  Encoder(const EncoderConfig& c, Rng& rng) : cfg(c) {
    c.validate();
    embed = PatchEmbed<T>(c.in_channels, c.dims[0], c.patch_size, rng);
    for (std::size_t s = 0; s < 4; ++s) {
      if (s > 0) {
        GLOD_CHECK(c.dims[s] == 2 * c.dims[s - 1], ConfigError, "stage ", s, " dim ", c.dims[s],
                   " must double the previous stage dim ", c.dims[s - 1]);
        merges[s - 1] = PatchMerge<T>(c.dims[s - 1], rng);
      }
      for (std::size_t b = 0; b < c.depths[s]; ++b) {
        const std::size_t shift = (b % 2 == 1) ? c.window_size / 2 : 0;
        blocks[s].emplace_back(c.dims[s], c.heads[s], c.window_size, shift, c.mlp_ratio, rng);
      }
    }
  }

  StageOutputs<T> operator()(Context<T>& ctx, const Var<T>& image) {
    const auto d = as_nchw(image.shape(), "encoder input");
    cfg.validate_image(d.h, d.w);
    StageOutputs<T> out;
    auto x = embed(ctx, image);
    for (std::size_t s = 0; s < 4; ++s) {
      if (s > 0) x = merges[s - 1](ctx, x);
      // A window spanning the whole map has nothing to shift across.
      const bool whole = x.shape()[1] == cfg.window_size && x.shape()[2] == cfg.window_size;
      for (auto& blk : blocks[s]) {
        const std::size_t keep = blk.shift;
        if (whole) blk.shift = 0;
        x = blk(ctx, x);
        blk.shift = keep;
      }
      out.maps[s] = ops::permute(x, {0, 3, 1, 2});
    }
    return out;
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    embed.collect(reg, join(p, "embed"));
    for (std::size_t s = 0; s < 4; ++s) {
      if (s > 0) merges[s - 1].collect(reg, join(p, "merge" + std::to_string(s)));
      for (std::size_t b = 0; b < blocks[s].size(); ++b)
        blocks[s][b].collect(reg, join(p, "stage" + std::to_string(s + 1) + ".block" + std::to_string(b)));
    }
  }
};

}  // namespace glod::swin
