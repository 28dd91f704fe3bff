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
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glod/autograd.hpp"

namespace glod {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "<tensor>[<flat index>]"
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes whose +-h step changed a branch (ReLU sign, argmax, clamp)
  double worst_analytic = 0.0, worst_numeric = 0.0;

  void record(double analytic, double numeric, const std::string& where) {
    const double err = relative_error(analytic, numeric);
    ++checked;
    if (err > max_rel_err) {
      max_rel_err = err;
      worst = where;
      worst_analytic = analytic;
      worst_numeric = numeric;
    }
  }

  static double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
  }
};

/// |a-b| / max(|a|, |b|, 1e-8)
inline double relative_error(double a, double b) { return GradCheckResult::relative_error(a, b); }

namespace detail {

struct TracedValue {
  double value;
  std::uint64_t branches;
};

template <class F>
TracedValue traced(F&& f) {
  BranchTrace trace;
  BranchTraceScope scope(trace);
  const double v = f();
  return {v, trace.hash};
}

}  // namespace detail

/// Fourth-order central difference
/// [8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))] / 12h.
/// When a probe crosses a kink the step is divided by 10, up to twice.
template <class Eval>
bool central_difference(Eval&& eval_at, double h, std::uint64_t base, double* out) {
  for (int attempt = 0; attempt < 3; ++attempt, h /= 10) {
    const auto p1 = eval_at(h), m1 = eval_at(-h), p2 = eval_at(2 * h), m2 = eval_at(-2 * h);
    if (p1.branches != base || m1.branches != base || p2.branches != base ||
        m2.branches != base)
      continue;
    *out = (8 * (p1.value - m1.value) - (p2.value - m2.value)) / (12 * h);
    return true;
  }
  return false;
}

/// Compares the reverse-mode gradient of f at x with central differences on
/// every coordinate. Coordinates whose probes take a different branch than x
/// are skipped: the function is not smooth there.
inline GradCheckResult finite_diff_check(
    const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
    double h = 1e-3) {
  Tensor<double> analytic;
  {
    Tape<double> tape;
    auto in = tape.input(x);
    tape.backward(f(in));
    analytic = tape.grad(in);
    if (analytic.empty()) analytic = Tensor<double>(x.shape());
  }
  auto eval = [&](const Tensor<double>& at) {
    return detail::traced([&] {
      Tape<double> tape(false);
      return f(tape.constant(at)).value().item();
    });
  };
  GradCheckResult res;
  Tensor<double> probe = x;
  const auto base = eval(probe).branches;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    double numeric = 0;
    const bool smooth = central_difference(
        [&](double step) {
          probe[i] = orig + step;
          return eval(probe);
        },
        h, base, &numeric);
    probe[i] = orig;
    if (!smooth) {
      ++res.skipped;
      continue;
    }
    res.record(analytic[i], numeric, "x[" + std::to_string(i) + "]");
  }
  return res;
}

/// Same check against named parameters. At most `per_tensor` coordinates are
/// sampled from each parameter tensor (all of them when 0).
inline GradCheckResult check_parameter_gradients(
    const std::function<Var<double>(Tape<double>&)>& loss,
    const std::vector<std::pair<std::string, Parameter<double>*>>& params, double h = 1e-3,
    std::size_t per_tensor = 0, std::uint64_t seed = 0) {
  for (auto& [name, p] : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    return detail::traced([&] {
      Tape<double> tape(false);
      return loss(tape).value().item();
    });
  };
  const auto base = eval().branches;
  std::mt19937_64 rng(seed);
  GradCheckResult res;
  for (auto& [name, p] : params) {
    std::vector<std::size_t> coords(p->value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_tensor != 0 && coords.size() > per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_tensor);
    }
    for (std::size_t i : coords) {
      const double orig = p->value[i];
      double numeric = 0;
      const bool smooth = central_difference(
          [&](double step) {
            p->value[i] = orig + step;
            return eval();
          },
          h, base, &numeric);
      p->value[i] = orig;
      if (!smooth) {
        ++res.skipped;
        continue;
      }
      res.record(p->grad[i], numeric, name + "[" + std::to_string(i) + "]");
    }
  }
  return res;
}

}  // namespace glod
