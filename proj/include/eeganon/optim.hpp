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

#include <cmath>
#include <cstddef>
#include <vector>

#include "eeganon/params.hpp"

namespace eeganon {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Moment buffers follow the
// store's array order.
template <typename T>
class Adam {
 public:
  Adam(const ParameterStore<T>& store, AdamOptions options) : options_(options) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_.emplace_back(store.At(i).shape());
      v_.emplace_back(store.At(i).shape());
    }
  }

  // grads[i] pairs with store.At(i). Empty gradient tensors are skipped.
  void Step(ParameterStore<T>& store, const std::vector<Tensor<T>>& grads) {
    ++step_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const T lr = static_cast<T>(options_.learning_rate / c1);
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(options_.epsilon);
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (grads[i].empty()) continue;
      Tensor<T>& p = store.At(i);
      T* m = m_[i].data();
      T* v = v_[i].data();
      const T* g = grads[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        p[j] -= lr * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
      }
    }
  }

  std::size_t steps() const noexcept { return step_; }

 private:
  AdamOptions options_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::size_t step_ = 0;
};

}  // namespace eeganon
