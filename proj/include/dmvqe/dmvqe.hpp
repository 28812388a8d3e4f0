// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// VQE initialized from diffusion samples (DMVQE), and the deep-circuit
// variant whose extra layers start random (DMVQE').

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dmvqe/diffusion.hpp"
#include "dmvqe/vqe.hpp"

namespace dmvqe {

struct DmvqeOptions {
  int k = 100;                // best-of candidates
  std::uint64_t sample_seed = 0;
  bool deterministic = false;  // sampler variant without posterior noise
  std::uint64_t hash_seed = kDefaultHashSeed;
};

inline void to_json(nlohmann::json& j, const DmvqeOptions& o) {
  j = {{"k", o.k}, {"sample_seed", o.sample_seed}, {"deterministic", o.deterministic}, {"hash_seed", o.hash_seed}};
}

inline void from_json(const nlohmann::json& j, DmvqeOptions& o) {
  o = DmvqeOptions{};
  o.k = j.value("k", o.k);
  o.sample_seed = j.value("sample_seed", o.sample_seed);
  o.deterministic = j.value("deterministic", o.deterministic);
  o.hash_seed = j.value("hash_seed", o.hash_seed);
  if (o.k < 1) throw InvalidArgument("k must be >= 1");
}

struct DmvqeResult {
  RunResult run;
  ParamGrid initial;      // the grid optimization started from
  BestOf generation;      // selection over the DM candidates
};

inline BestOf generate_initializer(const PauliSum& h, const CircuitLayout& layout, const DiffusionModel& model, const DmvqeOptions& options) {
  SampleOptions so;
  so.deterministic = options.deterministic;
  return generate_best_of(model, h, layout, options.k, options.sample_seed, so, options.hash_seed);
}

/// Best-of-k DM sample, then the RPVQE optimizer from that grid. trace[0] is
/// the selected sample's energy.
inline DmvqeResult run_dmvqe(const PauliSum& h, const CircuitLayout& layout, const DiffusionModel& model, const OptimizerConfig& config,
                             const DmvqeOptions& options = {}) {
  config.validate();
  layout.validate();
  DmvqeResult out;
  out.generation = generate_initializer(h, layout, model, options);
  out.initial = out.generation.grid;
  out.run = optimize_from(h, layout, out.initial, config);
  return out;
}

/// DM samples fill the first L_dm layers of deep_layout; the remaining layers
/// are uniform in [-1, 1] drawn from config.seed. Candidates are ranked on the
/// L_dm-layer prefix circuit.
inline DmvqeResult run_dmvqe_prime(const PauliSum& h, const CircuitLayout& deep_layout, const DiffusionModel& model,
                                   const OptimizerConfig& config, const DmvqeOptions& options = {}) {
  config.validate();
  deep_layout.validate();
  const int L_dm = model.net.config().layers;
  if (deep_layout.n_qubits != model.net.config().qubits) throw InvalidArgument("model qubit count does not match the circuit");
  if (deep_layout.n_layers < L_dm) throw InvalidArgument("deep circuit has fewer layers than the model grid");
  DmvqeResult out;
  out.generation = generate_initializer(h, deep_layout.with_layers(L_dm), model, options);
  ParamGrid init(deep_layout.n_layers, deep_layout.n_qubits);
  for (int l = 0; l < L_dm; ++l)
    for (int q = 0; q < deep_layout.n_qubits; ++q) init.set(l, q, out.generation.grid(l, q));
  Rng rng(config.seed);
  for (int l = L_dm; l < deep_layout.n_layers; ++l)
    for (int q = 0; q < deep_layout.n_qubits; ++q) init.set(l, q, rng.uniform(-1.0, 1.0));
  out.initial = init;
  out.run = optimize_from(h, deep_layout, out.initial, config);
  return out;
}

}  // namespace dmvqe
