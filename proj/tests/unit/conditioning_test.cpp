// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dmvqe/conditioning.hpp"

using namespace dmvqe;

namespace {

double cosine(const Embedding& a, const Embedding& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double norm(const Embedding& a) {
  double s = 0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// Independent reimplementation of the hashing scheme.
Embedding reference_term(const std::string& token, std::uint64_t seed) {
  std::uint64_t basis = 0xcbf29ce484222325ULL ^ seed;
  Embedding v(512, 0.0);
  for (std::size_t i = 0; i + 3 <= token.size(); ++i) {
    std::uint64_t h = basis;
    for (std::size_t k = i; k < i + 3; ++k) {
      h ^= static_cast<unsigned char>(token[k]);
      h *= 0x100000001b3ULL;
    }
    v[h % 512] += (h >> 63) ? -1.0 : 1.0;
  }
  const double n = norm(v);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

TEST(EncodeTerm, DeterministicAndUnitNorm) {
  const auto a = encode_term("0.2500 XXII");
  const auto b = encode_term("0.2500 XXII");
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), kEmbeddingDim);
  EXPECT_NEAR(norm(a), 1.0, 1e-12);
}

TEST(EncodeTerm, MatchesIndependentHashing) {
  for (const std::string t : {"0.2500 XXII", "-1.5000 ZIZI", "0.7500 YY"}) {
    const auto ours = encode_term(t);
    const auto ref = reference_term(t, kDefaultHashSeed);
    for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(ours[i], ref[i], 1e-15) << t << " bucket " << i;
  }
}

TEST(EncodeTerm, SeedSensitivity) {
  EXPECT_NE(encode_term("0.2500 XXII", 1), encode_term("0.2500 XXII", 2));
}

TEST(EncodeTerm, NearbyCoefficientsAreCloser) {
  const auto a = encode_term("0.2500 XX");
  EXPECT_GT(cosine(a, encode_term("0.2600 XX")), cosine(a, encode_term("1.0000 ZZ")));
}

TEST(EncodeTerm, ShortAndEmptyTokens) {
  EXPECT_THROW(encode_term(""), InvalidArgument);
  const auto e = encode_term("X");
  EXPECT_NEAR(norm(e), 1.0, 1e-12);
  EXPECT_EQ(std::count_if(e.begin(), e.end(), [](double x) { return x != 0.0; }), 1);
}

TEST(EncodeHamiltonian, SingleTermEqualsTermEmbedding) {
  const std::vector<std::string> one{"0.5000 ZIII"};
  const auto h = encode_hamiltonian(std::span<const std::string>(one));
  const auto t = encode_term("0.5000 ZIII");
  for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(h[i], t[i], 1e-15);
}

TEST(EncodeHamiltonian, PermutationInvariant) {
  const auto prompts = to_prompts(build_heisenberg(4, 1.3, 0.7));
  auto shuffled = prompts;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 3, shuffled.end());
  const auto a = encode_hamiltonian(std::span<const std::string>(prompts));
  const auto b = encode_hamiltonian(std::span<const std::string>(shuffled));
  for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  EXPECT_NEAR(norm(a), 1.0, 1e-12);
}

TEST(EncodeHamiltonian, DistinguishesFamilies) {
  const auto heis = encode_hamiltonian(build_heisenberg(8, 1.0, 1.0));
  const auto ising = encode_hamiltonian(build_ising(8, 1.0, 1.0));
  EXPECT_LT(cosine(heis, ising), 1.0 - 1e-6);
}

TEST(EncodeHamiltonian, EmptyListThrows) {
  const std::vector<std::string> none;
  EXPECT_THROW(encode_hamiltonian(std::span<const std::string>(none)), InvalidArgument);
  EXPECT_THROW(encode_hamiltonian(PauliSum(3, {})), InvalidArgument);
}

TEST(EmbeddingJson, RoundTripIsExact) {
  const auto e = encode_hamiltonian(build_heisenberg(6, 2.5, 1.5));
  const auto back = embedding_from_json(nlohmann::json::parse(embedding_to_json(e).dump()));
  EXPECT_EQ(back, e);
  EXPECT_THROW(embedding_from_json(nlohmann::json::array({1.0, 2.0})), InvalidArgument);
}
