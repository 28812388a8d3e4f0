// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmvqe/simulator.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "oracles.hpp"

namespace dmvqe {
namespace {

constexpr double kPi = std::numbers::pi;

// Statevector built from dense gate matrices, independent of StateVector.
Eigen::VectorXcd dense_hea_state(const CircuitLayout& c, const ParamGrid& p) {
  const int n = c.n_qubits;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(Eigen::Index{1} << n);
  psi(0) = 1.0;
  for (int l = 0; l < c.n_layers; ++l) {
    oracle::Mat wall = oracle::Mat::Identity(1, 1);
    for (int j = 0; j < n; ++j) wall = oracle::kron(wall, oracle::rotation(axis_char(c.axes[l]), c.angle_scale * p(l, j)));
    psi = wall * psi;
    for (auto [a, b] : c.cz_pairs()) psi = oracle::cz(a, b, n) * psi;
  }
  return psi;
}

PauliSum random_sum(int n, Rng& rng, int terms = 8) {
  const std::string alphabet = "IXYZ";
  std::vector<PauliTerm> t;
  for (int k = 0; k < terms; ++k) {
    std::string s;
    for (int q = 0; q < n; ++q) s.push_back(alphabet[rng.next_u64() % 4]);
    t.push_back({rng.uniform(-1.0, 1.0), PauliString(s)});
  }
  return PauliSum(n, t);
}

TEST(Layout, ValidatesAndCountsParameters) {
  const auto c = CircuitLayout::hea(4, 3);
  EXPECT_EQ(c.param_count(), 12);
  EXPECT_THROW(CircuitLayout::hea(4, 0), InvalidArgument);
  EXPECT_EQ(CircuitLayout::hea(2, 1).cz_pairs().size(), 1u);
  EXPECT_EQ(CircuitLayout::hea(4, 1).cz_pairs().size(), 4u);
  EXPECT_EQ(CircuitLayout::hea(4, 1, Axis::Y, Entangler::Chain).cz_pairs().size(), 3u);
}

TEST(ParamGrid, ClampsOnWriteAndRejectsNonFinite) {
  ParamGrid g(2, 2);
  g.set(0, 0, 1.7);
  g.set(1, 1, -3.0);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 1), -1.0);
  EXPECT_THROW(g.set(0, 1, std::nan("")), InvalidArgument);
  EXPECT_THROW(g(2, 0), InvalidArgument);
}

TEST(ParamGrid, JsonAndBinaryRoundTrip) {
  Rng rng(5);
  const auto g = ParamGrid::uniform(3, 4, rng);
  nlohmann::json j = g;
  EXPECT_EQ(j.size(), 3u);
  EXPECT_EQ(param_grid_from_json(j), g);

  std::stringstream ss;
  write_param_grid_binary(ss, g);
  const auto back = read_param_grid_binary(ss);
  ASSERT_TRUE(back.matches(CircuitLayout::hea(4, 3)));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(g.values()[i])));
}

TEST(ParamGrid, BinaryTruncationIsAnError) {
  std::stringstream ss;
  write_param_grid_binary(ss, ParamGrid(2, 2));
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  EXPECT_THROW(read_param_grid_binary(cut), ParseError);
}

TEST(PrepareState, ZeroParamsGiveAllZeroState) {
  for (int L : {1, 3}) {
    const auto c = CircuitLayout::hea(3, L);
    const auto psi = prepare_hea_state(c, ParamGrid::zeros(c));
    EXPECT_NEAR(std::abs(psi[0] - 1.0), 0.0, 1e-15);
  }
}

TEST(PrepareState, SingleQubitRy) {
  const auto c = CircuitLayout::hea(1, 1);
  for (double v : {-0.7, 0.0, 0.3, 1.0}) {
    ParamGrid p(1, 1);
    p.set(0, 0, v);
    const auto psi = prepare_hea_state(c, p);
    EXPECT_NEAR(psi[0].real(), std::cos(kPi * v / 2), 1e-14);
    EXPECT_NEAR(psi[1].real(), std::sin(kPi * v / 2), 1e-14);
  }
}

TEST(PrepareState, ShapeMismatchRejected) {
  EXPECT_THROW(prepare_hea_state(CircuitLayout::hea(3, 2), ParamGrid(2, 4)), InvalidArgument);
}

TEST(PrepareState, MatchesDenseGateOracleForAllAxes) {
  Rng rng(3);
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
    for (auto ent : {Entangler::Ring, Entangler::Chain}) {
      auto c = CircuitLayout::hea(3, 2, axis, ent);
      c.axes[1] = Axis::X;
      const auto p = ParamGrid::uniform(2, 3, rng);
      const auto psi = prepare_hea_state(c, p);
      const auto ref = dense_hea_state(c, p);
      for (Eigen::Index k = 0; k < ref.size(); ++k) EXPECT_LT(std::abs(psi[static_cast<std::size_t>(k)] - ref(k)), 1e-12);
    }
  }
}

TEST(StateVector, NormPreservedAcrossRandomCircuits) {
  Rng rng(9);
  const auto c = CircuitLayout::hea(4, 3);
  EXPECT_NEAR(prepare_hea_state(c, ParamGrid::uniform(3, 4, rng)).norm(), 1.0, 1e-12);
  StateVector psi(5);
  for (int g = 0; g < 200; ++g) {
    const int q = static_cast<int>(rng.next_u64() % 5);
    if (g % 3 == 0) psi.apply_cz(q, (q + 1) % 5);
    else psi.apply_rotation(q, static_cast<Axis>(rng.next_u64() % 3), rng.uniform(-4, 4));
    ASSERT_LT(std::abs(psi.norm() - 1.0), 1e-10);
  }
}

TEST(StateVector, RotationInverseRestoresState) {
  Rng rng(1);
  const auto c = CircuitLayout::hea(3, 2);
  const auto base = prepare_hea_state(c, ParamGrid::uniform(2, 3, rng));
  for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
    StateVector psi = base;
    psi.apply_rotation(1, a, 0.83);
    psi.apply_rotation(1, a, -0.83);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_LT(std::abs(psi[k] - base[k]), 1e-12);
  }
}

TEST(StateVector, CzIsSymmetric) {
  Rng rng(2);
  const auto base = prepare_hea_state(CircuitLayout::hea(3, 1, Axis::X), ParamGrid::uniform(1, 3, rng));
  StateVector a = base, b = base;
  a.apply_cz(0, 2);
  b.apply_cz(2, 0);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Expectation, BasisStateAndIdentity) {
  StateVector zero(4);
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(expectation(zero, PauliSum(4, {{1.0, PauliString::on(4, {{j, 'Z'}})}})), 1.0, 1e-15);
  }
  Rng rng(4);
  const auto psi = prepare_hea_state(CircuitLayout::hea(4, 2, Axis::X), ParamGrid::uniform(2, 4, rng));
  EXPECT_NEAR(expectation(psi, PauliSum(4, {{2.5, PauliString::identity(4)}})), 2.5, 1e-12);
  EXPECT_THROW(expectation(psi, PauliSum(3, {{1.0, PauliString("ZZZ")}})), InvalidArgument);
}

TEST(Expectation, MatchesDenseMatrixOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    auto c = CircuitLayout::hea(n, 2, trial % 2 ? Axis::X : Axis::Y);
    const auto p = ParamGrid::uniform(2, n, rng);
    const auto h = random_sum(n, rng);
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(1 << n, 1 << n);
    for (const auto& t : h.terms()) m += t.coeff * oracle::pauli_string(t.string.str());
    const auto ref = dense_hea_state(c, p);
    const double expected = (ref.adjoint() * m * ref)(0, 0).real();
    EXPECT_NEAR(energy(c, p, h), expected, 1e-10);
  }
}

TEST(Energy, IsingFieldOnlyAtZeroParams) {
  const int n = 5;
  const double h = 2.3;
  const auto c = CircuitLayout::hea(n, 2);
  EXPECT_NEAR(energy(c, ParamGrid::zeros(c), build_ising(n, 0.0, h)), h * n / 2.0, 1e-12);
}

TEST(Gradient, ZeroHamiltonianGivesZero) {
  Rng rng(8);
  const auto c = CircuitLayout::hea(3, 2);
  const auto g = gradient_parameter_shift(c, ParamGrid::uniform(2, 3, rng), PauliSum(3));
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, SingleQubitAnalytic) {
  const auto c = CircuitLayout::hea(1, 1);
  const PauliSum z(1, {{1.0, PauliString("Z")}});
  for (double v : {-0.9, -0.2, 0.0, 0.45, 0.8}) {
    ParamGrid p(1, 1);
    p.set(0, 0, v);
    EXPECT_NEAR(gradient_parameter_shift(c, p, z)(0, 0), -kPi * std::sin(kPi * v), 1e-12);
  }
}

double central_difference(const CircuitLayout& c, const ParamGrid& p, const CompiledObservable& obs, int l, int j, double step) {
  ParamGrid plus = p, minus = p;
  plus.set(l, j, p(l, j) + step);
  minus.set(l, j, p(l, j) - step);
  return (energy(c, plus, obs) - energy(c, minus, obs)) / (2 * step);
}

TEST(Gradient, AgreesWithFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 5, L = 1 + trial % 4;
    auto c = CircuitLayout::hea(n, L, static_cast<Axis>(trial % 3));
    ParamGrid p(L, n);
    for (std::size_t i = 0; i < p.size(); ++i) p.set_flat(i, rng.uniform(-0.9, 0.9));
    const CompiledObservable obs(random_sum(n, rng));
    const auto g = gradient_parameter_shift(c, p, obs);
    for (int l = 0; l < L; ++l) {
      for (int j = 0; j < n; ++j) {
        const double fd = central_difference(c, p, obs, l, j, 1e-5);
        EXPECT_NEAR(g(l, j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
        EXPECT_NEAR(partial_parameter_shift(c, p, obs, l, j), g(l, j), 1e-14);
      }
    }
  }
  const auto c = CircuitLayout::hea(2, 2);
  EXPECT_THROW(partial_parameter_shift(c, ParamGrid::zeros(c), CompiledObservable(PauliSum(2)), 2, 0), InvalidArgument);
}

}  // namespace
}  // namespace dmvqe
