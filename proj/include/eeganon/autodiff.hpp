// Copyright 2026 The eeganon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <utility>

#include "eeganon/tensor.hpp"

namespace eeganon {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->node(id).value; }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->node(id).requires_grad; }
  const Tensor<T>& grad() const { return tape->node(id).grad; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
// them backwards is a valid topological order.
template <typename T>
class Tape {
 public:
  struct Node;
  using Backward = std::function<void(Tape&, Node&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> Constant(Tensor<T> value) { return Push(std::move(value), false, {}); }

  Var<T> Leaf(Tensor<T> value, bool requires_grad) {
    return Push(std::move(value), requires_grad, {});
  }

  // Records an op result. `backward` is dropped when no input needs a
  // gradient.
  Var<T> Op(Tensor<T> value, bool requires_grad, Backward backward) {
    if (!requires_grad) backward = nullptr;
    return Push(std::move(value), requires_grad, std::move(backward));
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient buffer of `id`, zero-allocated on first use.
  Tensor<T>& GradOf(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 for every element of root and propagates.
  void Backpropagate(Var<T> root) {
    Tensor<T>& seed = GradOf(root.id);
    seed.Fill(T{1});
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n);
    }
  }

 private:
  Var<T> Push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad,
                          std::move(backward)});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
};

}  // namespace eeganon
