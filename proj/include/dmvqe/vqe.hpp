// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// VQE drivers: random initialization (RPVQE), network-parameterized (NNVQE)
// and the shared Adam loop, plus convergence accounting.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmvqe/error.hpp"
#include "dmvqe/layers.hpp"
#include "dmvqe/optim.hpp"
#include "dmvqe/pauli.hpp"
#include "dmvqe/rng.hpp"
#include "dmvqe/simulator.hpp"
#include "dmvqe/tensor.hpp"

namespace dmvqe {

/// Without a target the loop runs exactly max_epochs updates. With a target
/// it stops at the first epoch within target_mre of the reference energy, or
/// after epoch_cap updates.
struct OptimizerConfig {
  int max_epochs = 50;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  std::optional<double> target_mre;
  int epoch_cap = 2000;
  // Absolute-error scale used in place of |reference| when the reference is 0.
  double zero_energy_scale = 1.0;
  // Reference (exact) energy; computed by diagonalization when absent.
  std::optional<double> reference_energy;

  void validate() const {
    if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be positive");
    if (target_mre) {
      if (!(*target_mre > 0.0)) throw InvalidArgument("target_mre must be positive");
      if (epoch_cap < max_epochs) throw InvalidArgument("epoch_cap must be >= max_epochs when a target is set");
    }
    if (!(zero_energy_scale > 0.0)) throw InvalidArgument("zero_energy_scale must be positive");
  }
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"max_epochs", c.max_epochs}, {"learning_rate", c.learning_rate}, {"seed", c.seed}, {"epoch_cap", c.epoch_cap},
       {"zero_energy_scale", c.zero_energy_scale}};
  j["target_mre"] = c.target_mre ? nlohmann::json(*c.target_mre) : nlohmann::json(nullptr);
  if (c.reference_energy) j["reference_energy"] = *c.reference_energy;
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.epoch_cap = j.value("epoch_cap", c.epoch_cap);
  c.zero_energy_scale = j.value("zero_energy_scale", c.zero_energy_scale);
  if (j.contains("target_mre") && !j["target_mre"].is_null()) c.target_mre = j["target_mre"].get<double>();
  if (j.contains("reference_energy") && !j["reference_energy"].is_null()) c.reference_energy = j["reference_energy"].get<double>();
  c.validate();
}

struct RunResult {
  std::vector<double> energy_trace;  // entry 0 is the initial energy
  ParamGrid final_params;
  double final_energy = 0.0;
  std::optional<int> epochs_to_target;
  bool trapped = false;
};

inline void to_json(nlohmann::json& j, const RunResult& r) {
  j = {{"energy_trace", r.energy_trace}, {"final_params", r.final_params}, {"final_energy", r.final_energy}, {"trapped", r.trapped}};
  j["epochs_to_target"] = r.epochs_to_target ? nlohmann::json(*r.epochs_to_target) : nlohmann::json(nullptr);
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.energy_trace = j.at("energy_trace").get<std::vector<double>>();
  r.final_params = param_grid_from_json(j.at("final_params"));
  r.final_energy = j.at("final_energy").get<double>();
  r.trapped = j.at("trapped").get<bool>();
  if (!j.at("epochs_to_target").is_null()) r.epochs_to_target = j["epochs_to_target"].get<int>();
  return r;
}

/// |E - ref| / |ref|, or |E - ref| / zero_scale when ref is exactly 0.
inline double relative_error(double estimate, double reference, double zero_scale = 1.0) {
  const double denom = reference == 0.0 ? zero_scale : std::abs(reference);
  return std::abs(estimate - reference) / denom;
}

struct TargetOutcome {
  std::optional<int> epochs;
  bool trapped = false;
};

/// First trace index within target_mre of e_exact, considering indices up to
/// `cap`.
inline TargetOutcome epochs_to_target(std::span<const double> trace, double e_exact, double target_mre, int cap,
                                      double zero_scale = 1.0) {
  const std::size_t last = std::min(trace.size(), static_cast<std::size_t>(std::max(cap, 0)) + 1);
  for (std::size_t i = 0; i < last; ++i) {
    if (relative_error(trace[i], e_exact, zero_scale) <= target_mre) return {static_cast<int>(i), false};
  }
  return {std::nullopt, true};
}

/// Maps a normalized value into [-1, 1) by its period of 2. Energies are
/// invariant because a full turn only flips the global phase.
inline double wrap_normalized(double v) { return v - 2.0 * std::floor((v + 1.0) / 2.0); }

namespace detail {

inline double resolve_reference(const OptimizerConfig& config, const PauliSum& h) {
  if (config.reference_energy) return *config.reference_energy;
  return exact_ground_energy(h);
}

}  // namespace detail

/// Adam on the normalized parameters from a given starting grid.
inline RunResult optimize_from(const PauliSum& h, const CircuitLayout& layout, const ParamGrid& initial, const OptimizerConfig& config) {
  config.validate();
  layout.validate();
  detail::check_shape(layout, initial);
  const CompiledObservable obs(h);
  if (h.n_qubits() != layout.n_qubits) throw InvalidArgument("layout and Hamiltonian qubit counts differ");
  std::optional<double> reference;
  if (config.target_mre) reference = detail::resolve_reference(config, h);
  const int limit = config.target_mre ? config.epoch_cap : config.max_epochs;

  RunResult result;
  std::vector<double> values(initial.values().begin(), initial.values().end());
  ParamGrid grid = initial;
  AdamState<double> state(values.size(), AdamHyper{config.learning_rate});
  double e = energy(layout, grid, obs);
  result.energy_trace.push_back(e);
  auto hit = [&](double energy_value) {
    return reference && relative_error(energy_value, *reference, config.zero_energy_scale) <= *config.target_mre;
  };
  if (hit(e)) result.epochs_to_target = 0;
  for (int epoch = 1; epoch <= limit && !result.epochs_to_target; ++epoch) {
    const RealGrid g = gradient_parameter_shift(layout, grid, obs);
    adam_update<double>(values, g.values, state);
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = wrap_normalized(values[i]);
      grid.set_flat(i, values[i]);
    }
    e = energy(layout, grid, obs);
    result.energy_trace.push_back(e);
    if (hit(e)) result.epochs_to_target = epoch;
  }
  result.final_params = grid;
  result.final_energy = result.energy_trace.back();
  result.trapped = config.target_mre.has_value() && !result.epochs_to_target;
  return result;
}

/// Uniform random start in [-1, 1] drawn from config.seed.
inline ParamGrid random_initializer(const CircuitLayout& layout, std::uint64_t seed) {
  Rng rng(seed);
  return ParamGrid::uniform(layout.n_layers, layout.n_qubits, rng);
}

inline RunResult run_rpvqe(const PauliSum& h, const CircuitLayout& layout, const OptimizerConfig& config) {
  return optimize_from(h, layout, random_initializer(layout, config.seed), config);
}

// ---------------------------------------------------------------------------
// NNVQE

struct NnvqeConfig {
  int input_dim = 8;
  int hidden = 64;
  int hidden_layers = 2;
};

/// Fixed all-ones input through tanh hidden layers to a tanh output of L x N.
class NnvqeModel {
 public:
  NnvqeModel(const CircuitLayout& layout, std::uint64_t seed, NnvqeConfig arch = {})
      : layers_(layout.n_layers), qubits_(layout.n_qubits), arch_(arch) {
    if (arch.input_dim < 1 || arch.hidden < 1 || arch.hidden_layers < 1) throw InvalidArgument("invalid NNVQE architecture");
    Rng rng(seed);
    int in = arch.input_dim;
    for (int i = 0; i < arch.hidden_layers; ++i) {
      hidden_.emplace_back(params_, "hidden" + std::to_string(i), in, arch.hidden, rng);
      in = arch.hidden;
    }
    out_ = nn::Linear(params_, "out", in, layers_ * qubits_, rng);
    input_ = nn::Tensor::from({1, arch.input_dim}, std::vector<float>(static_cast<std::size_t>(arch.input_dim), 1.0f));
  }

  nn::Tensor forward() const {
    nn::Tensor x = input_;
    for (const auto& l : hidden_) x = nn::tanh(l(x));
    return nn::tanh(out_(x));
  }

  /// Current output as a grid; values saturated to +-1 in float32 are pulled
  /// to the nearest representable interior value.
  ParamGrid output() const {
    nn::NoGradGuard guard;
    return to_grid(forward());
  }

  ParamGrid to_grid(const nn::Tensor& out) const {
    constexpr double kEdge = 1.0 - 0x1.0p-24;
    std::vector<double> v(out.data().begin(), out.data().end());
    for (double& x : v) x = std::clamp(x, -kEdge, kEdge);
    return ParamGrid(layers_, qubits_, v);
  }

  nn::ParameterSet& parameters() { return params_; }

 private:
  int layers_;
  int qubits_;
  NnvqeConfig arch_;
  nn::ParameterSet params_;
  std::vector<nn::Linear> hidden_;
  nn::Linear out_;
  nn::Tensor input_;
};

struct NnvqeResult {
  RunResult run;
  ParamGrid label;      // network output at the lowest-energy epoch
  double label_energy = 0.0;
};

/// Optimizes the network weights by backpropagating parameter-shift energy
/// gradients through the output layer. config.learning_rate applies to the
/// network; the target, if set, stops training as in optimize_from.
inline NnvqeResult run_nnvqe(const PauliSum& h, const CircuitLayout& layout, const OptimizerConfig& config, NnvqeConfig arch = {}) {
  config.validate();
  layout.validate();
  const CompiledObservable obs(h);
  if (h.n_qubits() != layout.n_qubits) throw InvalidArgument("layout and Hamiltonian qubit counts differ");
  std::optional<double> reference;
  if (config.target_mre) reference = detail::resolve_reference(config, h);
  const int limit = config.target_mre ? config.epoch_cap : config.max_epochs;

  NnvqeModel model(layout, config.seed, arch);
  nn::Adam opt(model.parameters().tensors(), AdamHyper{config.learning_rate});
  NnvqeResult out;
  out.label_energy = std::numeric_limits<double>::infinity();
  for (int epoch = 0;; ++epoch) {
    opt.zero_grad();
    const nn::Tensor y = model.forward();
    const ParamGrid grid = model.to_grid(y);
    const double e = energy(layout, grid, obs);
    out.run.energy_trace.push_back(e);
    if (e < out.label_energy) {
      out.label_energy = e;
      out.label = grid;
    }
    out.run.final_params = grid;
    if (reference && relative_error(e, *reference, config.zero_energy_scale) <= *config.target_mre) {
      out.run.epochs_to_target = epoch;
      break;
    }
    if (epoch == limit) break;
    const RealGrid g = gradient_parameter_shift(layout, grid, obs);
    std::vector<float> gf(g.values.begin(), g.values.end());
    const nn::Tensor weights = nn::Tensor::from(y.shape(), std::move(gf));
    nn::backward(nn::sum(nn::mul(y, weights)));
    opt.step();
  }
  out.run.final_energy = out.run.energy_trace.back();
  out.run.trapped = config.target_mre.has_value() && !out.run.epochs_to_target;
  return out;
}

}  // namespace dmvqe
