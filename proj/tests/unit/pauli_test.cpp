// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmvqe/pauli.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dmvqe/simulator.hpp"
#include "oracles.hpp"

namespace dmvqe {
namespace {

double max_abs_diff(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<std::pair<double, std::string>> as_pairs(const PauliSum& h) {
  std::vector<std::pair<double, std::string>> out;
  for (const auto& t : h.terms()) out.emplace_back(t.coeff, t.string.str());
  return out;
}

TEST(PauliString, RejectsInvalidCharacters) {
  EXPECT_THROW(PauliString("XQ"), InvalidSpec);
  EXPECT_NO_THROW(PauliString("IXYZ"));
}

TEST(PauliSum, MergesDuplicatesAndSortsLexicographically) {
  PauliSum h(2, {{1.0, PauliString("ZZ")}, {0.5, PauliString("XX")}, {0.25, PauliString("ZZ")}, {1.0, PauliString("II")}});
  ASSERT_EQ(h.terms().size(), 3u);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{1.0, "II"}, {0.5, "XX"}, {1.25, "ZZ"}}));
}

TEST(PauliSum, RejectsLengthMismatchAndNonFinite) {
  EXPECT_THROW(PauliSum(2, {{1.0, PauliString("Z")}}), InvalidSpec);
  EXPECT_THROW(PauliSum(1, {{std::nan(""), PauliString("Z")}}), InvalidSpec);
}

TEST(PauliSum, MergingPreservesMatrix) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  const std::string alphabet = "IXYZ";
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3;
    std::vector<PauliTerm> terms;
    Eigen::MatrixXcd direct = Eigen::MatrixXcd::Zero(1 << n, 1 << n);
    for (int k = 0; k < 12; ++k) {
      std::string s;
      for (int q = 0; q < n; ++q) s.push_back(alphabet[gen() % 4]);
      const double c = coef(gen);
      terms.push_back({c, PauliString(s)});
      direct += c * oracle::pauli_string(s);
    }
    EXPECT_LT(max_abs_diff(dense_matrix(PauliSum(n, terms)), direct), 1e-12);
  }
}

TEST(Heisenberg, TwoQubitOpenBond) {
  const auto h = build_heisenberg(2, 1.0, 0.0, Boundary::Open);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{0.25, "XX"}, {0.25, "YY"}, {0.25, "ZZ"}}));
  EXPECT_NEAR(exact_ground_energy(h), -0.75, 1e-9);
}

TEST(Heisenberg, RejectsSingleQubit) {
  EXPECT_THROW(build_heisenberg(1, 1.0, 1.0), InvalidSpec);
  EXPECT_THROW(build_ising(1, 1.0, 1.0), InvalidSpec);
}

TEST(Heisenberg, FullDatasetGridIsDistinct) {
  std::set<std::vector<std::pair<double, std::string>>> seen;
  for (int a = 0; a <= 30; ++a) {
    for (int b = 0; b <= 30; ++b) seen.insert(as_pairs(build_heisenberg(8, 1.0 + 0.1 * a, 1.0 + 0.1 * b)));
  }
  EXPECT_EQ(seen.size(), 961u);
}

TEST(Ising, TwoQubitOpenBond) {
  EXPECT_EQ(as_pairs(build_ising(2, 4.0, 0.0, Boundary::Open)), (std::vector<std::pair<double, std::string>>{{1.0, "ZZ"}}));
}

TEST(Ising, ThreeQubitGroundEnergyMatchesDenseOracle) {
  const auto h = build_ising(3, 1.0, 1.0, Boundary::Open);
  EXPECT_NEAR(exact_ground_energy(h), oracle::min_eigenvalue(oracle::ising(3, 1.0, 1.0, false)), 1e-9);
}

TEST(Ising, UnseenFamilyGridCount) {
  std::set<std::vector<std::pair<double, std::string>>> seen;
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; b <= 10; ++b) seen.insert(as_pairs(build_ising(8, 2.0 + 0.1 * a, 2.0 + 0.1 * b)));
  EXPECT_EQ(seen.size(), 121u);
}

TEST(JordanWigner, NumberOperator) {
  const auto h = jordan_wigner({{{1.0, 0.0}, {{0, true}, {0, false}}}}, 1);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{0.5, "I"}, {-0.5, "Z"}}));
}

TEST(JordanWigner, AdjacentHopping) {
  const auto h = jordan_wigner({{{1.0, 0.0}, {{0, true}, {1, false}}}, {{1.0, 0.0}, {{1, true}, {0, false}}}}, 2);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{0.5, "XX"}, {0.5, "YY"}}));
  const auto a0 = oracle::annihilate(0, 2), a1 = oracle::annihilate(1, 2);
  EXPECT_LT(max_abs_diff(dense_matrix(h), a0.adjoint() * a1 + a1.adjoint() * a0), 1e-12);
}

TEST(JordanWigner, HoppingOverIntermediateModeCarriesZString) {
  const auto h = jordan_wigner({{{1.0, 0.0}, {{0, true}, {2, false}}}, {{1.0, 0.0}, {{2, true}, {0, false}}}}, 3);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{0.5, "XZX"}, {0.5, "YZY"}}));
  const auto a0 = oracle::annihilate(0, 3), a2 = oracle::annihilate(2, 3);
  EXPECT_LT(max_abs_diff(dense_matrix(h), a0.adjoint() * a2 + a2.adjoint() * a0), 1e-12);
}

TEST(JordanWigner, RejectsOutOfRangeModeAndNonHermitian) {
  EXPECT_THROW(jordan_wigner({{{1.0, 0.0}, {{3, true}}}}, 2), InvalidSpec);
  EXPECT_THROW(jordan_wigner({{{1.0, 0.0}, {{0, true}, {1, false}}}}, 2), InvalidSpec);
}

TEST(Hubbard, SingleSiteIsOnsiteRepulsionOnly) {
  const auto h = build_hubbard(1, 3.0, 3.0);
  EXPECT_EQ(as_pairs(h), (std::vector<std::pair<double, std::string>>{{0.75, "II"}, {-0.75, "IZ"}, {-0.75, "ZI"}, {0.75, "ZZ"}}));
  EXPECT_LT(max_abs_diff(dense_matrix(h), oracle::hubbard(1, 3.0, 3.0)), 1e-12);
}

TEST(Hubbard, TwoSiteGroundEnergyMatchesOccupationBasisOracle) {
  const auto h = build_hubbard(2, 3.0, 3.0);
  EXPECT_EQ(h.n_qubits(), 4);
  const double oracle_e = oracle::min_eigenvalue(oracle::hubbard(2, 3.0, 3.0));
  EXPECT_NEAR(exact_ground_energy(h), oracle_e, 1e-9);
}

TEST(Hubbard, ZeroParametersGiveEmptySum) {
  const auto h = build_hubbard(1, 0.0, 0.0);
  EXPECT_TRUE(h.empty());
  EXPECT_EQ(exact_ground_energy(h), 0.0);
  EXPECT_THROW(build_hubbard(0, 1.0, 1.0), InvalidSpec);
}

TEST(Hubbard, OddQubitSpecRejected) {
  HamiltonianSpec s = HamiltonianSpec::hubbard(2, 1.0, 1.0);
  s.n_qubits = 3;
  EXPECT_THROW(s.validate(), InvalidSpec);
}

// Every family against directly assembled spin / fermion matrices, n <= 4.
TEST(Families, MatchBruteForceMatrices) {
  for (int n = 2; n <= 4; ++n) {
    for (bool periodic : {false, true}) {
      const auto b = periodic ? Boundary::Periodic : Boundary::Open;
      for (auto [J, h] : {std::pair{1.0, 0.0}, {1.3, 2.7}, {4.0, 1.0}}) {
        EXPECT_LT(max_abs_diff(dense_matrix(build_heisenberg(n, J, h, b)), oracle::heisenberg(n, J, h, periodic)), 1e-12);
        EXPECT_LT(max_abs_diff(dense_matrix(build_ising(n, J, h, b)), oracle::ising(n, J, h, periodic)), 1e-12);
      }
    }
  }
  for (int sites = 1; sites <= 2; ++sites) {
    for (auto [T, U] : {std::pair{3.0, 3.0}, {1.0, 0.5}, {0.0, 2.0}}) {
      EXPECT_LT(max_abs_diff(dense_matrix(build_hubbard(sites, T, U)), oracle::hubbard(sites, T, U)), 1e-12);
    }
  }
}

TEST(Builders, ArePure) {
  EXPECT_EQ(build_heisenberg(5, 1.7, 2.3), build_heisenberg(5, 1.7, 2.3));
  EXPECT_EQ(build_hubbard(3, 3.0, 3.0), build_hubbard(3, 3.0, 3.0));
}

TEST(ExactGroundEnergy, ScalarAndSingleZ) {
  EXPECT_EQ(exact_ground_energy(PauliSum(7)), 0.0);
  EXPECT_NEAR(exact_ground_energy(PauliSum(1, {{1.0, PauliString("Z")}})), -1.0, 1e-12);
}

TEST(ExactGroundEnergy, RespectsCap) {
  const auto h = build_ising(6, 1.0, 1.0);
  EXPECT_THROW(exact_ground_energy(h, 5), ResourceLimit);
  EXPECT_NO_THROW(exact_ground_energy(h, 6));
}

TEST(ExactGroundEnergy, HandlesComplexMatrices) {
  PauliSum h(2, {{1.0, PauliString("XY")}, {0.5, PauliString("ZI")}});
  EXPECT_NEAR(exact_ground_energy(h), oracle::min_eigenvalue(oracle::pauli_string("XY") + 0.5 * oracle::pauli_string("ZI")), 1e-10);
}

TEST(Prompts, FormatAndOrder) {
  EXPECT_EQ(to_prompts(PauliSum(1, {{1.0, PauliString("Z")}})), std::vector<std::string>{"1.0000 Z"});
  EXPECT_EQ(to_prompts(build_heisenberg(2, 1.0, 0.0, Boundary::Open)),
            (std::vector<std::string>{"0.2500 XX", "0.2500 YY", "0.2500 ZZ"}));
  EXPECT_EQ(to_prompts(build_hubbard(1, 3.0, 3.0)),
            (std::vector<std::string>{"0.7500 II", "-0.7500 IZ", "-0.7500 ZI", "0.7500 ZZ"}));
  EXPECT_EQ(format_coefficient(-1e-9), "0.0000");
}

TEST(Prompts, IdenticalSumsGiveIdenticalPrompts) {
  // Same operator reached through two different specs.
  const auto a = build_ising(3, 2.0, 0.0, Boundary::Open);
  const auto b = PauliSum(3, {{0.5, PauliString("IZZ")}, {0.5, PauliString("ZZI")}});
  EXPECT_EQ(to_prompts(a), to_prompts(b));
}

TEST(Json, PauliSumRoundTrip) {
  const auto h = build_hubbard(2, 3.0, 3.0);
  nlohmann::json j = h;
  EXPECT_EQ(j["n"], 4);
  EXPECT_EQ(pauli_sum_from_json(j), h);
}

TEST(Json, SpecRoundTrip) {
  for (const auto& s : {HamiltonianSpec::heisenberg(8, 1.5, 2.5), HamiltonianSpec::ising(6, 2, 3, Boundary::Open),
                        HamiltonianSpec::hubbard(2, 3, 3)}) {
    nlohmann::json j = s;
    EXPECT_EQ(j.get<HamiltonianSpec>(), s);
  }
}

// The variational principle: no ansatz state beats the exact ground energy.
TEST(ExactGroundEnergy, IsVariationalLowerBound) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 4;
    const auto layout = CircuitLayout::hea(n, 1 + trial % 3);
    const PauliSum h = trial % 3 == 0 ? build_heisenberg(n, 1.0 + trial * 0.1, 0.5)
                     : trial % 3 == 1 ? build_ising(n, 2.0, 1.0 + 0.1 * trial)
                                      : build_hubbard(n / 2 > 0 ? (n / 2) : 1, 3.0, 3.0);
    if (h.n_qubits() != n) continue;
    const auto params = ParamGrid::uniform(layout.n_layers, n, rng);
    EXPECT_GE(energy(layout, params, h), exact_ground_energy(h) - 1e-9);
  }
}

}  // namespace
}  // namespace dmvqe
