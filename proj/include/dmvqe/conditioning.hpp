// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Hamiltonian prompt encoder: signed feature hashing of character trigrams
// into a fixed 512-dimensional unit vector, averaged over terms.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dmvqe/error.hpp"
#include "dmvqe/pauli.hpp"
#include "dmvqe/rng.hpp"

namespace dmvqe {

inline constexpr std::size_t kEmbeddingDim = 512;
inline constexpr std::uint64_t kDefaultHashSeed = 0x9E3779B97F4A7C15ULL;

using Embedding = std::vector<double>;

namespace detail {

inline void normalize(Embedding& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s == 0.0) throw InvalidArgument("cannot normalize a zero embedding");
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
}

}  // namespace detail

/// Embedding of one prompt token such as "0.2500 XXII". Tokens shorter than
/// three characters hash as a single feature.
inline Embedding encode_term(std::string_view token, std::uint64_t seed = kDefaultHashSeed) {
  if (token.empty()) throw InvalidArgument("cannot encode an empty prompt token");
  const std::uint64_t basis = kFnvOffsetBasis ^ seed;
  Embedding v(kEmbeddingDim, 0.0);
  const std::size_t grams = token.size() < 3 ? 1 : token.size() - 2;
  for (std::size_t i = 0; i < grams; ++i) {
    const std::uint64_t h = fnv1a64(token.substr(i, 3), basis);
    v[h % kEmbeddingDim] += (h >> 63) ? -1.0 : 1.0;
  }
  // Colliding trigrams with opposite signs can cancel to zero.
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s == 0.0) v[fnv1a64(token, basis) % kEmbeddingDim] = 1.0;
  detail::normalize(v);
  return v;
}

/// Mean of per-term embeddings, re-normalized.
inline Embedding encode_hamiltonian(std::span<const std::string> prompts, std::uint64_t seed = kDefaultHashSeed) {
  if (prompts.empty()) throw InvalidArgument("cannot encode an empty prompt list");
  Embedding sum(kEmbeddingDim, 0.0);
  for (const auto& p : prompts) {
    const Embedding e = encode_term(p, seed);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) sum[i] += e[i];
  }
  for (double& x : sum) x /= static_cast<double>(prompts.size());
  detail::normalize(sum);
  return sum;
}

/// Embedding of a Hamiltonian via its canonical prompt list. The zero
/// Hamiltonian has no terms and cannot be encoded.
inline Embedding encode_hamiltonian(const PauliSum& h, std::uint64_t seed = kDefaultHashSeed) {
  const auto prompts = to_prompts(h);
  return encode_hamiltonian(std::span<const std::string>(prompts), seed);
}

inline nlohmann::json embedding_to_json(const Embedding& e) { return nlohmann::json(e); }

inline Embedding embedding_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kEmbeddingDim) throw InvalidArgument("embedding must be an array of 512 numbers");
  Embedding e;
  e.reserve(kEmbeddingDim);
  for (const auto& x : j) {
    if (!x.is_number()) throw InvalidArgument("embedding entries must be numbers");
    e.push_back(x.get<double>());
  }
  return e;
}

}  // namespace dmvqe
