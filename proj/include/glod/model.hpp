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
#include <map>
#include <sstream>
#include <string>

#include "glod/blocks.hpp"
#include "glod/swin.hpp"

namespace glod {

struct GlodConfig {
  swin::EncoderConfig encoder;
  /// Internal widths of UCM1 (finest) .. UCM4 (coarsest); each divisible by 4.
  std::array<std::size_t, 4> ucm_widths{32, 32, 64, 64};
  std::size_t mixer_repeats = 3;
  std::size_t dilation = 2;
  std::size_t cbam_reduction = 8;
  bool cbam_per_repeat = false;
  std::size_t head_width = 32;
  std::size_t num_classes = 5;
  std::size_t output_stride = 4;
  bool fusion = true;
  double heatmap_prior = 0.01;

  /// Space-to-depth factor between the finest neck map (stride patch/2) and
  /// the head map (stride R).
  std::size_t head_unshuffle() const {
    return 2 * output_stride / encoder.patch_size;
  }

  void validate() const {
    encoder.validate();
    GLOD_CHECK(num_classes >= 1, ConfigError, "num_classes must be >= 1");
    GLOD_CHECK(output_stride >= 1 && (2 * output_stride) % encoder.patch_size == 0 &&
                   head_unshuffle() >= 1,
               ConfigError, "output stride ", output_stride,
               " must be a multiple of half the patch size ", encoder.patch_size);
    for (std::size_t i = 0; i < 4; ++i) {
      GLOD_CHECK(ucm_widths[i] % 4 == 0, ConfigError, "UCM", i + 1, " width ", ucm_widths[i],
                 " not divisible by 4");
      GLOD_CHECK(ucm_widths[i] % cbam_reduction == 0, ConfigError, "cbam reduction ",
                 cbam_reduction, " does not divide UCM", i + 1, " width ", ucm_widths[i]);
    }
  }
};

// key=value text form embedded in checkpoints.

namespace detail {

template <std::size_t N>
std::string join_list(const std::array<std::size_t, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

template <std::size_t N>
std::array<std::size_t, N> parse_list(const std::string& key, const std::string& v) {
  std::array<std::size_t, N> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    GLOD_CHECK(i < N, ConfigError, "too many values for ", key);
    out[i++] = std::stoul(item);
  }
  GLOD_CHECK(i == N, ConfigError, "expected ", N, " values for ", key);
  return out;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    GLOD_CHECK(eq != std::string::npos, FormatError, "config line ", lineno, " has no '='");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::string to_text(const GlodConfig& c) {
  std::ostringstream os;
  const auto& e = c.encoder;
  os << "encoder.in_channels=" << e.in_channels << "\n"
     << "encoder.patch_size=" << e.patch_size << "\n"
     << "encoder.window_size=" << e.window_size << "\n"
     << "encoder.depths=" << detail::join_list(e.depths) << "\n"
     << "encoder.dims=" << detail::join_list(e.dims) << "\n"
     << "encoder.heads=" << detail::join_list(e.heads) << "\n"
     << "encoder.mlp_ratio=" << e.mlp_ratio << "\n"
     << "neck.ucm_widths=" << detail::join_list(c.ucm_widths) << "\n"
     << "neck.mixer_repeats=" << c.mixer_repeats << "\n"
     << "neck.dilation=" << c.dilation << "\n"
     << "neck.cbam_reduction=" << c.cbam_reduction << "\n"
     << "neck.cbam_per_repeat=" << (c.cbam_per_repeat ? 1 : 0) << "\n"
     << "neck.fusion=" << (c.fusion ? 1 : 0) << "\n"
     << "head.width=" << c.head_width << "\n"
     << "head.num_classes=" << c.num_classes << "\n"
     << "head.output_stride=" << c.output_stride << "\n";
  return os.str();
}

inline GlodConfig config_from_text(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    GLOD_CHECK(it != kv.end(), FormatError, "config key '", k, "' missing");
    return it->second;
  };
  GlodConfig c;
  auto& e = c.encoder;
  e.in_channels = std::stoul(get("encoder.in_channels"));
  e.patch_size = std::stoul(get("encoder.patch_size"));
  e.window_size = std::stoul(get("encoder.window_size"));
  e.depths = detail::parse_list<4>("encoder.depths", get("encoder.depths"));
  e.dims = detail::parse_list<4>("encoder.dims", get("encoder.dims"));
  e.heads = detail::parse_list<4>("encoder.heads", get("encoder.heads"));
  e.mlp_ratio = std::stoul(get("encoder.mlp_ratio"));
  c.ucm_widths = detail::parse_list<4>("neck.ucm_widths", get("neck.ucm_widths"));
  c.mixer_repeats = std::stoul(get("neck.mixer_repeats"));
  c.dilation = std::stoul(get("neck.dilation"));
  c.cbam_reduction = std::stoul(get("neck.cbam_reduction"));
  c.cbam_per_repeat = get("neck.cbam_per_repeat") == "1";
  c.fusion = get("neck.fusion") == "1";
  c.head_width = std::stoul(get("head.width"));
  c.num_classes = std::stoul(get("head.num_classes"));
  c.output_stride = std::stoul(get("head.output_stride"));
  c.validate();
  return c;
}

/// Dense head maps of one image, plain tensors.
template <class T>
struct HeadMaps {
  Tensor<T> heatmap;  // [K,h,w] in (0,1)
  Tensor<T> offset;   // [2,h,w], sub-cell (dx,dy)
  Tensor<T> size;     // [2,h,w], (w,h) in feature-map cells, positive
};

/// Differentiable head outputs, [N,K,h,w] / [N,2,h,w] / [N,2,h,w].
template <class T>
struct HeadOutput {
  Var<T> heatmap;
  Var<T> offset;
  Var<T> size;

  HeadMaps<T> maps(std::size_t n) const {
    auto slice = [n](const Tensor<T>& t) {
      const auto d = as_nchw(t.shape());
      const std::size_t per = d.c * d.h * d.w;
      std::vector<T> v(t.data() + n * per, t.data() + (n + 1) * per);
      return Tensor<T>({d.c, d.h, d.w}, std::move(v));
    };
    return {slice(heatmap.value()), slice(offset.value()), slice(size.value())};
  }
};

/// One detection-head branch: 3x3 conv + GELU + pointwise.
template <class T>
struct HeadBranch {
  nn::Conv2d<T> conv, out;

  HeadBranch() = default;
  HeadBranch(std::size_t cin, std::size_t width, std::size_t cout, Rng& rng)
      : conv(cin, width, ConvSpec::square(3, 1), true, rng),
        out(width, cout, ConvSpec::square(1), true, rng) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) { return out(ctx, ops::gelu(conv(ctx, x))); }

  void collect(ParamRegistry<T>& reg, const std::string& p) {
    conv.collect(reg, join(p, "conv"));
    out.collect(reg, join(p, "out"));
  }
};

/// Encoder, four cascaded UpConvMixers with encoder skips, optional
/// Fusion-Block cascade, and a three-branch center-point head.
template <class T>
class GlodNet {
 public:
  GlodNet(const GlodConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    const auto& e = cfg.encoder;
    encoder_ = swin::Encoder<T>(e, rng);
    deep_proj_ = nn::Conv2d<T>(e.dims[3], e.dims[3], ConvSpec::square(1), true, rng);
    auto ucm_cfg = [&](std::size_t in, std::size_t level) {
      nn::UpConvMixerConfig c;
      c.in_channels = in;
      c.width = cfg.ucm_widths[level];
      c.repeats = cfg.mixer_repeats;
      c.dilation = cfg.dilation;
      c.cbam_reduction = cfg.cbam_reduction;
      c.cbam_per_repeat = cfg.cbam_per_repeat;
      return c;
    };
    const auto out_c = [&](std::size_t level) { return cfg.ucm_widths[level] / 4; };
    ucm_[3] = nn::UpConvMixer<T>(ucm_cfg(2 * e.dims[3], 3), rng);
    for (std::size_t level = 3; level-- > 0;)
      ucm_[level] = nn::UpConvMixer<T>(ucm_cfg(out_c(level + 1) + e.dims[level], level), rng);
    const std::size_t u = cfg.head_unshuffle();
    const std::size_t head_in = out_c(0) * u * u;
    heatmap_ = HeadBranch<T>(head_in, cfg.head_width, cfg.num_classes, rng);
    offset_ = HeadBranch<T>(head_in, cfg.head_width, 2, rng);
    size_ = HeadBranch<T>(head_in, cfg.head_width, 2, rng);
    // Last, so fusion on/off share every other initial weight for a seed.
    for (std::size_t level = 0; level < 3 && cfg.fusion; ++level)
      fusion_[level] = nn::FusionBlock<T>(out_c(level + 1), out_c(level), 2, rng);
    const double p = cfg.heatmap_prior;
    heatmap_.out.bias.value.fill(static_cast<T>(-std::log((1.0 - p) / p)));
  }

  const GlodConfig& config() const { return cfg_; }

  HeadOutput<T> operator()(Context<T>& ctx, const Var<T>& image) {
    const auto d = as_nchw(image.shape(), "image");
    GLOD_CHECK(d.c == cfg_.encoder.in_channels, ShapeError, "image channel dimension ", d.c,
               " != ", cfg_.encoder.in_channels);
    auto maps = encoder_(ctx, image).maps;
    std::array<Var<T>, 4> up;
    up[3] = ucm_[3](ctx, maps[3], deep_proj_(ctx, maps[3]));
    for (std::size_t level = 3; level-- > 0;) up[level] = ucm_[level](ctx, up[level + 1], maps[level]);
    Var<T> neck = up[0];
    if (cfg_.fusion) {
      neck = fusion_[2](ctx, up[3], up[2]);
      neck = fusion_[1](ctx, neck, up[1]);
      neck = fusion_[0](ctx, neck, up[0]);
    }
    const std::size_t u = cfg_.head_unshuffle();
    if (u > 1) neck = ops::pixel_unshuffle(neck, u);
    HeadOutput<T> out;
    out.heatmap = ops::sigmoid(heatmap_(ctx, neck));
    out.offset = offset_(ctx, neck);
    out.size = ops::exp(size_(ctx, neck));
    return out;
  }

  ParamRegistry<T> registry() {
    ParamRegistry<T> reg;
    encoder_.collect(reg, "encoder");
    deep_proj_.collect(reg, "neck.deep_proj");
    for (std::size_t level = 4; level-- > 0;) ucm_[level].collect(reg, "neck.ucm" + std::to_string(level + 1));
    for (std::size_t level = 3; cfg_.fusion && level-- > 0;) fusion_[level].collect(reg, "neck.fusion" + std::to_string(level + 1));
    heatmap_.collect(reg, "head.heatmap");
    offset_.collect(reg, "head.offset");
    size_.collect(reg, "head.size");
    return reg;
  }

 private:
  GlodConfig cfg_;
  swin::Encoder<T> encoder_;
  nn::Conv2d<T> deep_proj_;
  std::array<nn::UpConvMixer<T>, 4> ucm_;
  std::array<nn::FusionBlock<T>, 3> fusion_;
  HeadBranch<T> heatmap_, offset_, size_;
};

/// Learnable scalar count of the network built from `cfg`.
inline std::size_t parameter_count(const GlodConfig& cfg) {
  GlodNet<float> net(cfg, 0);
  return net.registry().scalar_count();
}

}  // namespace glod
