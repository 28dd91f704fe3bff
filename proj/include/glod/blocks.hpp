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

#include <string>
#include <vector>

#include "glod/module.hpp"

namespace glod::nn {

inline std::size_t channel_axis(const Shape& s) { return s.size() == 4 ? 1 : 0; }

inline void require_same_spatial(const Shape& a, const Shape& b, const char* what) {
  const auto da = as_nchw(a, what), db = as_nchw(b, what);
  GLOD_CHECK(da.h == db.h, ShapeError, what, ": height mismatch ", da.h, " vs ", db.h);
  GLOD_CHECK(da.w == db.w, ShapeError, what, ": width mismatch ", da.w, " vs ", db.w);
  GLOD_CHECK(da.n == db.n && a.size() == b.size(), ShapeError, what, ": batch mismatch ",
             to_string(a), " vs ", to_string(b));
}

/// ReLU of the sum of three batch-normalized convolutions (1x3, 3x3, 3x1)
/// over the channel concatenation of two aligned inputs.
template <class T>
struct AsymmetricFusion {
  Conv2d<T> conv_1x3, conv_3x3, conv_3x1;
  BatchNorm2d<T> bn_1x3, bn_3x3, bn_3x1;

  AsymmetricFusion() = default;
  AsymmetricFusion(std::size_t cin, std::size_t cout, Rng& rng)
      : conv_1x3(cin, cout, {1, 3, 1, 0, 1, 1, 1}, false, rng),
        conv_3x3(cin, cout, {3, 3, 1, 1, 1, 1, 1}, false, rng),
        conv_3x1(cin, cout, {3, 1, 1, 1, 0, 1, 1}, false, rng),
        bn_1x3(cout),
        bn_3x3(cout),
        bn_3x1(cout) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x1, const Var<T>& x2) {
    require_same_spatial(x1.shape(), x2.shape(), "asymmetric_fusion");
    auto x = ops::concat<T>({x1, x2}, channel_axis(x1.shape()));
    auto s = ops::add(bn_1x3(ctx, conv_1x3(ctx, x)), bn_3x3(ctx, conv_3x3(ctx, x)));
    s = ops::add(s, bn_3x1(ctx, conv_3x1(ctx, x)));
    return ops::relu(s);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    conv_1x3.collect(reg, join(p, "conv_1x3"));
    bn_1x3.collect(reg, join(p, "bn_1x3"));
    conv_3x3.collect(reg, join(p, "conv_3x3"));
    bn_3x3.collect(reg, join(p, "bn_3x3"));
    conv_3x1.collect(reg, join(p, "conv_3x1"));
    bn_3x1.collect(reg, join(p, "bn_3x1"));
  }
};

/// Attention maps produced by a CBAM pass, for inspection.
template <class T>
struct CbamMaps {
  Tensor<T> channel;  // [N,C,1,1]
  Tensor<T> spatial;  // [N,1,H,W]
};

/// Channel attention (shared MLP over avg- and max-pooled descriptors)
/// followed by spatial attention (7x7 conv over channel avg/max maps).
template <class T>
struct Cbam {
  Conv2d<T> mlp_reduce, mlp_expand;
  Conv2d<T> spatial;

  Cbam() = default;
  Cbam(std::size_t c, std::size_t reduction, Rng& rng) {
    GLOD_CHECK(reduction >= 1 && c % reduction == 0, ShapeError, "cbam reduction ", reduction,
               " does not divide channel count ", c);
    mlp_reduce = Conv2d<T>(c, c / reduction, ConvSpec::square(1), true, rng);
    mlp_expand = Conv2d<T>(c / reduction, c, ConvSpec::square(1), true, rng);
    spatial = Conv2d<T>(2, 1, ConvSpec::square(7, 3), true, rng);
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x, CbamMaps<T>* maps = nullptr) {
    const std::size_t c = as_nchw(x.shape(), "cbam input").c;
    GLOD_CHECK(c == mlp_expand.out_channels(), ShapeError, "cbam channel dimension ", c,
               " != configured ", mlp_expand.out_channels());
    auto mlp = [&](const Var<T>& v) { return mlp_expand(ctx, ops::relu(mlp_reduce(ctx, v))); };
    auto mc = ops::sigmoid(ops::add(mlp(ops::reduce(x, ops::Reduce::global_avg)),
                                    mlp(ops::reduce(x, ops::Reduce::global_max))));
    auto y = ops::mul(x, mc);
    auto desc = ops::concat<T>({ops::reduce(y, ops::Reduce::channel_avg),
                                ops::reduce(y, ops::Reduce::channel_max)},
                               channel_axis(y.shape()));
    auto ms = ops::sigmoid(spatial(ctx, desc));
    if (maps) {
      maps->channel = mc.value();
      maps->spatial = ms.value();
    }
    return ops::mul(y, ms);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    mlp_reduce.collect(reg, join(p, "mlp_reduce"));
    mlp_expand.collect(reg, join(p, "mlp_expand"));
    spatial.collect(reg, join(p, "spatial"));
  }
};

/// g*h + (1-g)*x with g = sigmoid(pointwise(x)).
template <class T>
struct Highway {
  Conv2d<T> gate;

  Highway() = default;
  Highway(std::size_t c, Rng& rng, T gate_bias = T(-1)) : gate(c, c, ConvSpec::square(1), true, rng) {
    gate.bias.value.fill(gate_bias);
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x, const Var<T>& h) {
    GLOD_CHECK(x.shape() == h.shape(), ShapeError, "highway shape mismatch ",
               to_string(x.shape()), " vs ", to_string(h.shape()));
    auto g = ops::sigmoid(gate(ctx, x));
    return ops::add(x, ops::mul(g, ops::sub(h, x)));
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) { gate.collect(reg, join(p, "gate")); }
};

struct UpConvMixerConfig {
  std::size_t in_channels = 0;  // channels of x1 and x2 combined
  std::size_t width = 64;       // internal width, divisible by 4
  std::size_t repeats = 3;
  std::size_t dilation = 2;
  std::size_t cbam_reduction = 8;
  bool cbam_per_repeat = false;  // CBAM inside every repeat instead of once at the end
};

/// Separable depthwise-atrous / pointwise mixing step.
template <class T>
struct MixerStep {
  Conv2d<T> depthwise, pointwise;
  BatchNorm2d<T> bn_dw, bn_pw;
  Highway<T> highway;

  MixerStep() = default;
  MixerStep(std::size_t c, std::size_t dilation, Rng& rng)
      : depthwise(c, c, {3, 3, 1, dilation, dilation, dilation, c}, false, rng),
        pointwise(c, c, ConvSpec::square(1), false, rng),
        bn_dw(c),
        bn_pw(c),
        highway(c, rng) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& carry) {
    auto x1 = ops::gelu(bn_dw(ctx, depthwise(ctx, carry)));
    auto x2 = ops::gelu(bn_pw(ctx, pointwise(ctx, x1)));
    return highway(ctx, carry, x2);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    depthwise.collect(reg, join(p, "depthwise"));
    bn_dw.collect(reg, join(p, "bn_dw"));
    pointwise.collect(reg, join(p, "pointwise"));
    bn_pw.collect(reg, join(p, "bn_pw"));
    highway.collect(reg, join(p, "highway"));
  }
};

/// Asymmetric fusion, N gated mixer steps, CBAM, then PixelShuffle x2.
/// Output: width/4 channels at twice the input resolution.
template <class T>
struct UpConvMixer {
  UpConvMixerConfig cfg;
  AsymmetricFusion<T> fusion;
  std::vector<MixerStep<T>> steps;
  std::vector<Cbam<T>> cbam;

  UpConvMixer() = default;
  UpConvMixer(const UpConvMixerConfig& c, Rng& rng) : cfg(c) {
    GLOD_CHECK(c.repeats >= 1, ConfigError, "UpConvMixer needs at least one repeat");
    GLOD_CHECK(c.width % 4 == 0, ConfigError, "UpConvMixer width ", c.width,
               " must be divisible by 4 for PixelShuffle r=2");
    fusion = AsymmetricFusion<T>(c.in_channels, c.width, rng);
    for (std::size_t i = 0; i < c.repeats; ++i) steps.emplace_back(c.width, c.dilation, rng);
    const std::size_t n_cbam = c.cbam_per_repeat ? c.repeats : 1;
    for (std::size_t i = 0; i < n_cbam; ++i) cbam.emplace_back(c.width, c.cbam_reduction, rng);
  }

  std::size_t out_channels() const { return cfg.width / 4; }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x1, const Var<T>& x2) {
    auto x = fusion(ctx, x1, x2);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      x = steps[i](ctx, x);
      if (cfg.cbam_per_repeat) x = cbam[i](ctx, x);
    }
    if (!cfg.cbam_per_repeat) x = cbam[0](ctx, x);
    return ops::pixel_shuffle(x, 2);
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    fusion.collect(reg, join(p, "fusion"));
    for (std::size_t i = 0; i < steps.size(); ++i)
      steps[i].collect(reg, join(p, "step" + std::to_string(i)));
    for (std::size_t i = 0; i < cbam.size(); ++i)
      cbam[i].collect(reg, join(p, cbam.size() == 1 ? "cbam" : "cbam" + std::to_string(i)));
  }
};

/// GELU(pointwise(high) + bilinear_f(pointwise(low))).
template <class T>
struct FusionBlock {
  Conv2d<T> low_proj, high_proj;
  std::size_t factor = 2;

  FusionBlock() = default;
  FusionBlock(std::size_t c_low, std::size_t c_high, std::size_t f, Rng& rng)
      : low_proj(c_low, c_high, ConvSpec::square(1), true, rng),
        high_proj(c_high, c_high, ConvSpec::square(1), true, rng),
        factor(f) {
    GLOD_CHECK(f >= 2, ConfigError, "fusion factor must be >= 2");
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& low, const Var<T>& high) {
    const auto dl = as_nchw(low.shape(), "fusion low"), dh = as_nchw(high.shape(), "fusion high");
    GLOD_CHECK(dh.h == dl.h * factor && dh.w == dl.w * factor, ShapeError,
               "fusion_block resolution ratio mismatch: low ", dl.h, "x", dl.w, ", high ", dh.h,
               "x", dh.w, ", factor ", factor);
    auto up = ops::bilinear_upsample(low_proj(ctx, low), factor);
    return ops::gelu(ops::add(high_proj(ctx, high), up));
  }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    low_proj.collect(reg, join(p, "low_proj"));
    high_proj.collect(reg, join(p, "high_proj"));
  }
};

}  // namespace glod::nn
