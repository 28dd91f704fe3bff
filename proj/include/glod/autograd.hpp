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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glod/tensor.hpp"

namespace glod {

namespace detail {

/// Fingerprint of the branch choices (ReLU signs, argmax indices, clamps)
/// taken while evaluating a function. Finite-difference checks compare it
/// across x-h, x, x+h to detect probes that straddle a kink.
struct BranchTrace {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void add(std::uint64_t v) { hash = (hash ^ v) * 0x100000001b3ULL; }
};

inline thread_local BranchTrace* branch_trace = nullptr;

inline bool tracing_branches() { return branch_trace != nullptr; }
inline void trace_branch(std::uint64_t v) {
  if (branch_trace) branch_trace->add(v);
}

/// Installs a trace for the current scope.
class BranchTraceScope {
 public:
  explicit BranchTraceScope(BranchTrace& t) : prev_(branch_trace) { branch_trace = &t; }
  ~BranchTraceScope() { branch_trace = prev_; }
  BranchTraceScope(const BranchTraceScope&) = delete;
  BranchTraceScope& operator=(const BranchTraceScope&) = delete;

 private:
  BranchTrace* prev_;
};

}  // namespace detail

/// A learnable tensor plus its accumulated gradient. Gradients accumulate
/// across backward passes until zero_grad().
template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T{0});
  }
};

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Append-only record of differentiable operations. Append order is a
/// topological order; backward() walks it in reverse.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  /// A free input that receives a gradient (used by gradient checks).
  Var<T> input(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, grad_enabled_});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  /// Leaf bound to a parameter. Each parameter gets one leaf per tape, so
  /// repeated use accumulates into a single gradient buffer.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) {
      return Var<T>(this, it->second);
    }
    nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    param_ids_.emplace(&p, id);
    return Var<T>(this, id);
  }

  /// Records the result of an op. The backward closure is kept only when
  /// some input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& v : inputs) {
      GLOD_CHECK(&v.tape() == this, Error, "mixing vars from different tapes");
      needs = needs || nodes_[v.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{},
                          nullptr, needs});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const Tensor<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var<T>& v) const { return needs_grad(v.id()); }

  /// Incoming gradient of a node during backward.
  const Tensor<T>& grad(std::uint32_t id) const { return nodes_[id].grad; }
  const Tensor<T>& grad(const Var<T>& v) const { return grad(v.id()); }

  /// Gradient buffer of an input, zero-allocated on first touch.
  Tensor<T>& grad_buffer(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  Tensor<T>& grad_buffer(const Var<T>& v) { return grad_buffer(v.id()); }

  /// Reverse-mode sweep from a scalar loss. Parameter gradients are added
  /// into Parameter::grad.
  void backward(const Var<T>& loss) {
    GLOD_CHECK(loss.value().size() == 1, ShapeError,
               "backward() requires a scalar loss, got shape ",
               to_string(loss.shape()));
    GLOD_CHECK(grad_enabled_, Error, "backward() on a no-grad tape");
    grad_buffer(loss.id()).fill(T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
      if (n.param != nullptr) {
        auto& pg = n.param->grad;
        if (pg.shape() != n.grad.shape()) pg = Tensor<T>(n.grad.shape());
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param;
    bool needs_grad;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_ids_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

}  // namespace glod
