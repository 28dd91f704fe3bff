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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glod/conv.hpp"
#include "glod/norm.hpp"

namespace glod {

using Rng = std::mt19937_64;

template <class T>
struct Context {
  Tape<T>& tape;
  Mode mode = Mode::train;
};

/// Named view over a model's parameters and non-learnable buffers, in
/// registration order.
template <class T>
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Parameter<T>* param = nullptr;  // null for buffers
    Tensor<T>* buffer = nullptr;

    Tensor<T>& tensor() const { return param ? param->value : *buffer; }
  };

  void add(std::string name, Parameter<T>& p) { entries_.push_back({std::move(name), &p, nullptr}); }
  void add_buffer(std::string name, Tensor<T>& t) {
    entries_.push_back({std::move(name), nullptr, &t});
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<std::pair<std::string, Parameter<T>*>> parameters() const {
    std::vector<std::pair<std::string, Parameter<T>*>> out;
    for (const auto& e : entries_)
      if (e.param) out.emplace_back(e.name, e.param);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.param) n += e.param->value.size();
    return n;
  }

  void zero_grad() const {
    for (const auto& e : entries_)
      if (e.param) e.param->zero_grad();
  }

 private:
  std::vector<Entry> entries_;
};

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <class T>
Tensor<T> normal_tensor(Shape shape, T stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, double(stddev));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

/// Truncated at two standard deviations.
template <class T>
Tensor<T> trunc_normal_tensor(Shape shape, T stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.values()) {
    double z;
    do {
      z = dist(rng);
    } while (std::abs(z) > 2.0);
    v = static_cast<T>(z * double(stddev));
  }
  return t;
}

namespace nn {

template <class T>
struct Conv2d {
  ConvSpec spec;
  Parameter<T> weight;
  Parameter<T> bias;
  bool has_bias = false;

  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, ConvSpec s, bool with_bias, Rng& rng)
      : spec(s), has_bias(with_bias) {
    GLOD_CHECK(cin % s.groups == 0 && cout % s.groups == 0, ConfigError,
               "conv channels ", cin, "->", cout, " not divisible by groups ", s.groups);
    const std::size_t fan_in = cin / s.groups * s.kernel_h * s.kernel_w;
    weight = Parameter<T>(normal_tensor<T>({cout, cin / s.groups, s.kernel_h, s.kernel_w},
                                           T(std::sqrt(2.0 / double(fan_in))), rng));
    if (has_bias) bias = Parameter<T>(Tensor<T>({cout}));
  }

  std::size_t out_channels() const { return weight.value.dim(0); }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    auto w = ctx.tape.param(weight);
    if (!has_bias) return ops::conv2d<T>(x, w, nullptr, spec);
    auto b = ctx.tape.param(bias);
    return ops::conv2d(x, w, &b, spec);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(join(prefix, "weight"), weight);
    if (has_bias) reg.add(join(prefix, "bias"), bias);
  }
};

template <class T>
struct BatchNorm2d {
  Parameter<T> gamma, beta;
  RunningStats<T> stats;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t c)
      : gamma(Tensor<T>({c}, T{1})), beta(Tensor<T>({c}, T{0})), stats(c) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    return ops::batch_norm(x, ctx.tape.param(gamma), ctx.tape.param(beta), stats, ctx.mode);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(join(prefix, "gamma"), gamma);
    reg.add(join(prefix, "beta"), beta);
    reg.add_buffer(join(prefix, "running_mean"), stats.mean);
    reg.add_buffer(join(prefix, "running_var"), stats.var);
  }
};

/// x[..., in] -> x[..., out]; weight stored as [in, out].
template <class T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;
  bool has_bias = true;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng, T stddev = T(0.02))
      : weight(trunc_normal_tensor<T>({in, out}, stddev, rng)), has_bias(with_bias) {
    if (has_bias) bias = Parameter<T>(Tensor<T>({out}));
  }

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    auto w = ctx.tape.param(weight);
    if (!has_bias) return ops::linear<T>(x, w);
    auto b = ctx.tape.param(bias);
    return ops::linear(x, w, &b);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(join(prefix, "weight"), weight);
    if (has_bias) reg.add(join(prefix, "bias"), bias);
  }
};

template <class T>
struct LayerNorm {
  Parameter<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d) : gamma(Tensor<T>({d}, T{1})), beta(Tensor<T>({d}, T{0})) {}

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) {
    return ops::layer_norm(x, ctx.tape.param(gamma), ctx.tape.param(beta));
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(join(prefix, "gamma"), gamma);
    reg.add(join(prefix, "beta"), beta);
  }
};

}  // namespace nn
}  // namespace glod
