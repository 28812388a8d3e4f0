// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Parameterized layers on top of the tensor engine, and a named parameter
// registry used for optimizers and checkpoints.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dmvqe/rng.hpp"
#include "dmvqe/tensor.hpp"

namespace dmvqe::nn {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Parameters in declaration order; the order defines the checkpoint layout.
class ParameterSet {
 public:
  Tensor add(std::string name, Shape shape, std::vector<float> values) {
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    params_.push_back({std::move(name), t});
    return t;
  }

  Tensor add_uniform(std::string name, Shape shape, float bound, Rng& rng) {
    std::vector<float> v(numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return add(std::move(name), std::move(shape), std::move(v));
  }

  Tensor add_constant(std::string name, Shape shape, float value) {
    std::vector<float> v(numel(shape), value);
    return add(std::move(name), std::move(shape), std::move(v));
  }

  const std::vector<NamedParameter>& entries() const { return params_; }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<NamedParameter> params_;
};

/// y = x W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    weight = ps.add_uniform(name + ".weight", {in, out}, bound, rng);
    bias = ps.add_uniform(name + ".bias", {out}, bound, rng);
  }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

/// Square-kernel, stride-1, "same" padded convolution.
struct Conv2d {
  Tensor weight;
  Tensor bias;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, int in, int out, int kernel, Rng& rng, float gain = 1.0f) : pad(kernel / 2) {
    const float bound = gain / std::sqrt(static_cast<float>(in * kernel * kernel));
    weight = ps.add_uniform(name + ".weight", {out, in, kernel, kernel}, bound, rng);
    bias = ps.add_uniform(name + ".bias", {out}, bound, rng);
  }

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, pad); }
};

struct GroupNorm {
  Tensor gamma;
  Tensor beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParameterSet& ps, const std::string& name, int channels, int n_groups) : groups(n_groups) {
    gamma = ps.add_constant(name + ".gamma", {channels}, 1.0f);
    beta = ps.add_constant(name + ".beta", {channels}, 0.0f);
  }

  Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
};

}  // namespace dmvqe::nn
