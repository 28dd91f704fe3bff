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

#include <functional>
#include <string>
#include <vector>

#include "glod/blocks.hpp"
#include "glod/gradcheck.hpp"
#include "glod/losses.hpp"
#include "glod/model.hpp"
#include "glod/swin.hpp"
#include "glod/targets.hpp"

namespace glod {

struct BlockGradReport {
  std::string block;
  GradCheckResult result;
};

namespace detail {

using D = double;

inline Parameter<D> random_param(Shape s, Rng& rng, double scale = 1.0) {
  return Parameter<D>(normal_tensor<D>(std::move(s), scale, rng));
}

/// sum(out * W) with a fixed random W, so every output element matters with
/// a distinct weight.
inline Var<D> project(const Var<D>& out, const Tensor<D>& w) {
  return ops::sum(ops::mul(out, out.tape().constant(w)));
}

/// Checks `forward` with its inputs and the module's parameters as the
/// variables. The projection weights are drawn once from `rng`.
inline GradCheckResult check_block(
    const std::function<Var<D>(Context<D>&, const std::vector<Var<D>>&)>& forward,
    std::vector<Parameter<D>>& inputs, ParamRegistry<D>& reg, Rng& rng, std::size_t per_tensor) {
  Tensor<D> weights;
  {
    Tape<D> tape(false);
    Context<D> ctx{tape, Mode::train};
    std::vector<Var<D>> in;
    for (auto& p : inputs) in.push_back(tape.constant(p.value));
    weights = normal_tensor<D>(forward(ctx, in).shape(), 1.0, rng);
  }
  auto loss = [&](Tape<D>& tape) {
    Context<D> ctx{tape, Mode::train};
    std::vector<Var<D>> in;
    for (auto& p : inputs) in.push_back(tape.param(p));
    return project(forward(ctx, in), weights);
  };
  auto vars = reg.parameters();
  for (std::size_t i = 0; i < inputs.size(); ++i)
    vars.emplace_back("input" + std::to_string(i), &inputs[i]);
  return check_parameter_gradients(loss, vars, 1e-3, per_tensor, rng());
}

}  // namespace detail

/// Small toy configuration of the full network used by the gradient suite.
inline GlodConfig toy_config() {
  GlodConfig c;
  c.encoder.patch_size = 1;
  c.encoder.window_size = 2;
  c.encoder.depths = {2, 2, 2, 2};
  c.encoder.dims = {4, 8, 16, 32};
  c.encoder.heads = {1, 2, 2, 4};
  c.ucm_widths = {8, 8, 8, 8};
  c.mixer_repeats = 1;
  c.cbam_reduction = 4;
  c.head_width = 4;
  c.num_classes = 2;
  c.output_stride = 2;
  return c;
}

/// Training-loss gradient of the toy network w.r.t. sampled parameter
/// coordinates and the input image.
inline GradCheckResult check_toy_network(std::uint64_t seed, double h = 1e-3,
                                         std::size_t per_tensor = 4) {
  using detail::D;
  Rng rng(seed);
  const GlodConfig cfg = toy_config();
  GlodNet<D> net(cfg, rng());
  auto reg = net.registry();
  Parameter<D> image = detail::random_param({2, 3, 16, 16}, rng);
  TargetConfig tc;
  tc.num_classes = cfg.num_classes;
  tc.output_stride = cfg.output_stride;
  tc.image_h = tc.image_w = 16;
  tc.neg_ratio = 0.2;
  std::vector<DetectionTargets<D>> targets{
      encode_targets<D>({{0, 4.5, 5.2, 6, 4}, {1, 11.3, 10.9, 3, 5}}, tc, rng()),
      encode_targets<D>({{1, 7.7, 3.1, 5, 5}}, tc, rng())};
  auto loss = [&](Tape<D>& tape) {
    Context<D> ctx{tape, Mode::train};
    return total_loss<D>(net(ctx, tape.param(image)), targets).total;
  };
  auto vars = reg.parameters();
  vars.emplace_back("image", &image);
  return check_parameter_gradients(loss, vars, h, per_tensor, rng());
}

/// Central finite-difference checks at real64 of every network block and of
/// the full toy network under the training loss.
inline std::vector<BlockGradReport> run_gradient_suite(std::uint64_t seed = 0) {
  using detail::D;
  std::vector<BlockGradReport> out;
  Rng rng(seed);
  {
    nn::AsymmetricFusion<D> m(4, 4, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "asymmetric_fusion");
    std::vector<Parameter<D>> in{detail::random_param({2, 2, 5, 5}, rng),
                                 detail::random_param({2, 2, 5, 5}, rng)};
    out.push_back({"asymmetric_fusion",
                   detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0], x[1]); },
                                       in, reg, rng, 0)});
  }
  {
    nn::UpConvMixerConfig cfg;
    cfg.in_channels = 4;
    cfg.width = 8;
    cfg.repeats = 3;
    cfg.dilation = 2;
    cfg.cbam_reduction = 2;
    nn::UpConvMixer<D> m(cfg, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "upconvmixer");
    std::vector<Parameter<D>> in{detail::random_param({2, 2, 4, 4}, rng),
                                 detail::random_param({2, 2, 4, 4}, rng)};
    out.push_back({"upconvmixer",
                   detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0], x[1]); },
                                       in, reg, rng, 0)});
  }
  {
    nn::Cbam<D> m(8, 2, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "cbam");
    std::vector<Parameter<D>> in{detail::random_param({2, 8, 5, 5}, rng)};
    out.push_back({"cbam", detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0]); },
                                               in, reg, rng, 0)});
  }
  {
    nn::Highway<D> m(4, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "highway");
    std::vector<Parameter<D>> in{detail::random_param({2, 4, 3, 3}, rng),
                                 detail::random_param({2, 4, 3, 3}, rng)};
    out.push_back({"highway",
                   detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0], x[1]); },
                                       in, reg, rng, 0)});
  }
  {
    nn::FusionBlock<D> m(3, 4, 2, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "fusion_block");
    std::vector<Parameter<D>> in{detail::random_param({2, 3, 3, 3}, rng),
                                 detail::random_param({2, 4, 6, 6}, rng)};
    out.push_back({"fusion_block",
                   detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0], x[1]); },
                                       in, reg, rng, 0)});
  }
  for (std::size_t shift : {0, 1}) {
    swin::WindowAttention<D> m(8, 2, 2, rng);
    ParamRegistry<D> reg;
    m.collect(reg, "window_attention");
    std::vector<Parameter<D>> in{detail::random_param({2, 4, 4, 8}, rng)};
    out.push_back({shift ? "window_attention_shifted" : "window_attention",
                   detail::check_block([&](Context<D>& c, const auto& x) { return m(c, x[0], shift); },
                                       in, reg, rng, 0)});
  }
  out.push_back({"glod_net", check_toy_network(rng())});
  return out;
}

}  // namespace glod
