// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Adam with bias correction, usable for raw double buffers (VQE parameters)
// and for float32 network tensors.

#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dmvqe/error.hpp"
#include "dmvqe/tensor.hpp"

namespace dmvqe {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <std::floating_point T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  long step_count = 0;
  AdamHyper hyper;

  AdamState() = default;
  AdamState(std::size_t n, AdamHyper h) : first_moment(n, T(0)), second_moment(n, T(0)), hyper(h) {}
};

template <std::floating_point T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() || params.size() != state.second_moment.size()) {
    throw InvalidArgument("adam_update size mismatch: params " + std::to_string(params.size()) + ", grads " +
                          std::to_string(grads.size()) + ", state " + std::to_string(state.first_moment.size()));
  }
  const auto& h = state.hyper;
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T step = static_cast<T>(h.learning_rate / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(h.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    T& m = state.first_moment[i];
    T& v = state.second_moment[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    params[i] -= step * m / (std::sqrt(v * inv_bc2) + eps);
  }
}

namespace nn {

/// Adam over a fixed list of float32 leaf tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamHyper hyper) : params_(std::move(params)) {
    for (const auto& p : params_) states_.emplace_back(p.numel(), hyper);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Parameters that received no gradient are treated as having zero gradient.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      std::span<const float> g = p.has_grad() ? p.grad() : std::span<const float>(zeros(p.numel()));
      adam_update<float>(p.data(), g, states_[i]);
    }
  }

  long step_count() const { return states_.empty() ? 0 : states_.front().step_count; }

  void set_learning_rate(double lr) {
    for (auto& s : states_) s.hyper.learning_rate = lr;
  }

 private:
  const std::vector<float>& zeros(std::size_t n) {
    if (scratch_.size() != n) scratch_.assign(n, 0.0f);
    return scratch_;
  }

  std::vector<Tensor> params_;
  std::vector<AdamState<float>> states_;
  std::vector<float> scratch_;
};

}  // namespace nn
}  // namespace dmvqe
