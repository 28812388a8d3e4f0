// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmvqe/vqe.hpp"

using namespace dmvqe;

namespace {

void expect_variational(const RunResult& r, double exact) {
  for (double e : r.energy_trace) EXPECT_GE(e, exact - 1e-9);
  EXPECT_EQ(r.final_energy, r.energy_trace.back());
}

}  // namespace

TEST(Rpvqe, ZeroHamiltonianTraceIsZero) {
  const PauliSum zero(3, {});
  const auto layout = CircuitLayout::hea(3, 2);
  OptimizerConfig c;
  c.max_epochs = 5;
  const auto r = run_rpvqe(zero, layout, c);
  ASSERT_EQ(r.energy_trace.size(), 6u);
  for (double e : r.energy_trace) EXPECT_EQ(e, 0.0);

  c.target_mre = 0.005;
  const auto t = run_rpvqe(zero, layout, c);
  ASSERT_TRUE(t.epochs_to_target.has_value());
  EXPECT_EQ(*t.epochs_to_target, 0);
  EXPECT_FALSE(t.trapped);
  EXPECT_EQ(t.energy_trace.size(), 1u);
}

TEST(Rpvqe, TwoQubitHeisenbergReachesSinglet) {
  const auto h = build_heisenberg(2, 1.0, 0.0, Boundary::Open);
  const double exact = exact_ground_energy(h);
  ASSERT_NEAR(exact, -0.75, 1e-12);
  const auto layout = CircuitLayout::hea(2, 4);
  int good = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OptimizerConfig c;
    c.max_epochs = 500;
    c.seed = seed;
    const auto r = run_rpvqe(h, layout, c);
    expect_variational(r, exact);
    ASSERT_EQ(r.energy_trace.size(), 501u);
    if (relative_error(r.final_energy, exact) < 0.01) ++good;
  }
  EXPECT_GE(good, 6);
}

TEST(Rpvqe, SeededDeterminism) {
  const auto h = build_ising(4, 1.0, 0.7);
  const auto layout = CircuitLayout::hea(4, 3);
  OptimizerConfig c;
  c.max_epochs = 20;
  c.seed = 99;
  const auto a = run_rpvqe(h, layout, c);
  const auto b = run_rpvqe(h, layout, c);
  EXPECT_EQ(a.energy_trace, b.energy_trace);
  EXPECT_EQ(a.final_params, b.final_params);
  c.seed = 100;
  EXPECT_NE(run_rpvqe(h, layout, c).energy_trace, a.energy_trace);
}

TEST(Rpvqe, FixedInitializerGivesIdenticalTraces) {
  const auto h = build_heisenberg(4, 1.5, 0.5);
  const auto layout = CircuitLayout::hea(4, 3);
  Rng rng(5);
  const auto init = ParamGrid::uniform(3, 4, rng);
  OptimizerConfig c;
  c.max_epochs = 30;
  std::vector<std::vector<double>> traces;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    c.seed = seed;
    traces.push_back(optimize_from(h, layout, init, c).energy_trace);
  }
  EXPECT_EQ(traces[0], traces[1]);
  EXPECT_EQ(traces[1], traces[2]);
}

TEST(Rpvqe, TargetStopsEarlyAndCapTraps) {
  const auto h = build_heisenberg(3, 1.0, 0.5);
  const auto layout = CircuitLayout::hea(3, 4);
  const double exact = exact_ground_energy(h);
  OptimizerConfig c;
  c.seed = 3;
  c.target_mre = 0.5;
  c.epoch_cap = 200;
  const auto loose = run_rpvqe(h, layout, c);
  ASSERT_TRUE(loose.epochs_to_target.has_value());
  EXPECT_EQ(loose.energy_trace.size(), static_cast<std::size_t>(*loose.epochs_to_target) + 1);
  EXPECT_LE(relative_error(loose.final_energy, exact), 0.5);

  // An unreachable target runs to the cap and reports a trap.
  c.target_mre = 1e-14;
  c.reference_energy = exact - 1.0;
  c.epoch_cap = 60;
  const auto capped = run_rpvqe(h, layout, c);
  EXPECT_TRUE(capped.trapped);
  EXPECT_FALSE(capped.epochs_to_target.has_value());
  EXPECT_EQ(capped.energy_trace.size(), 61u);
}

TEST(Rpvqe, ParametersStayInRange) {
  const auto h = build_heisenberg(3, 2.0, 1.0);
  const auto layout = CircuitLayout::hea(3, 3);
  OptimizerConfig c;
  c.max_epochs = 200;
  c.learning_rate = 0.3;
  const auto r = run_rpvqe(h, layout, c);
  for (double v : r.final_params.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Rpvqe, ShapeAndConfigErrors) {
  const auto h = build_ising(3, 1.0, 1.0);
  OptimizerConfig c;
  EXPECT_THROW(optimize_from(h, CircuitLayout::hea(3, 2), ParamGrid(3, 3), c), InvalidArgument);
  EXPECT_THROW(run_rpvqe(h, CircuitLayout::hea(4, 2), c), InvalidArgument);
  c.max_epochs = 0;
  EXPECT_THROW(run_rpvqe(h, CircuitLayout::hea(3, 2), c), InvalidArgument);
  c.max_epochs = 100;
  c.target_mre = 0.01;
  c.epoch_cap = 50;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(WrapNormalized, MapsIntoHalfOpenRangeAndPreservesEnergy) {
  EXPECT_DOUBLE_EQ(wrap_normalized(0.25), 0.25);
  EXPECT_DOUBLE_EQ(wrap_normalized(1.5), -0.5);
  EXPECT_DOUBLE_EQ(wrap_normalized(-1.25), 0.75);
  EXPECT_DOUBLE_EQ(wrap_normalized(1.0), -1.0);
  const auto h = build_heisenberg(3, 1.0, 0.3);
  const auto layout = CircuitLayout::hea(3, 2);
  const std::vector<double> a{0.9, -0.4, 0.2, 0.7, -0.95, 0.1};
  std::vector<double> full = a;
  full[4] = wrap_normalized(a[4] - 2.0);
  EXPECT_NEAR(energy(layout, ParamGrid(2, 3, a), h), energy(layout, ParamGrid(2, 3, full), h), 1e-12);
}

TEST(EpochsToTarget, Definition) {
  const std::vector<double> trace{-0.5, -0.8, -0.95, -0.999, -1.0};
  EXPECT_EQ(epochs_to_target(trace, -0.5, 0.01, 2000).epochs, 0);
  const auto k = epochs_to_target(trace, -1.0, 0.01, 2000);
  EXPECT_EQ(k.epochs, 3);
  EXPECT_FALSE(k.trapped);
  const auto capped = epochs_to_target(trace, -1.0, 0.01, 2);
  EXPECT_TRUE(capped.trapped);
  EXPECT_FALSE(capped.epochs.has_value());
  EXPECT_EQ(epochs_to_target(std::vector<double>{0.1}, 0.0, 0.2, 10, 1.0).epochs, 0);
}

TEST(EpochsToTarget, MonotoneInTarget) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> trace(40);
    for (auto& e : trace) e = -rng.uniform(0.0, 2.0);
    int previous = 1 << 30;
    for (double target : {0.001, 0.01, 0.05, 0.1, 0.3, 1.0}) {
      const auto r = epochs_to_target(trace, -2.0, target, 2000);
      const int k = r.epochs.value_or(1 << 30);
      EXPECT_LE(k, previous);
      previous = k;
    }
  }
}

TEST(RunResultJson, RoundTrip) {
  const auto h = build_ising(3, 1.0, 0.5);
  OptimizerConfig c;
  c.max_epochs = 3;
  c.target_mre = 1e-9;
  c.epoch_cap = 3;
  const auto r = run_rpvqe(h, CircuitLayout::hea(3, 2), c);
  const auto back = run_result_from_json(nlohmann::json(r));
  EXPECT_EQ(back.energy_trace, r.energy_trace);
  EXPECT_EQ(back.final_energy, r.final_energy);
  EXPECT_EQ(back.trapped, r.trapped);
  EXPECT_EQ(back.epochs_to_target, r.epochs_to_target);
  EXPECT_EQ(back.final_params, r.final_params);
}

TEST(OptimizerConfigJson, RoundTrip) {
  OptimizerConfig c;
  c.max_epochs = 7;
  c.learning_rate = 0.01;
  c.seed = 12;
  c.target_mre = 0.02;
  OptimizerConfig back;
  from_json(nlohmann::json(c), back);
  EXPECT_EQ(back.max_epochs, 7);
  EXPECT_EQ(back.learning_rate, 0.01);
  EXPECT_EQ(back.seed, 12u);
  EXPECT_EQ(back.target_mre, 0.02);
}

TEST(Nnvqe, OutputsStrictlyInsideUnitInterval) {
  const auto layout = CircuitLayout::hea(4, 3);
  const auto h = build_heisenberg(4, 1.0, 1.0);
  OptimizerConfig c;
  c.max_epochs = 40;
  c.learning_rate = 0.05;
  const auto r = run_nnvqe(h, layout, c);
  ASSERT_TRUE(r.label.matches(layout));
  for (double v : r.label.values()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(r.label_energy, *std::min_element(r.run.energy_trace.begin(), r.run.energy_trace.end()));
  EXPECT_NEAR(energy(layout, r.label, h), r.label_energy, 1e-12);
  expect_variational(r.run, exact_ground_energy(h));
}

TEST(Nnvqe, BeatsRandomBaselineMedian) {
  const auto layout = CircuitLayout::hea(4, 4);
  const auto h = build_heisenberg(4, 1.0, 1.0);
  const double exact = exact_ground_energy(h);
  std::vector<double> nn_energies, rp_energies;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OptimizerConfig c;
    c.max_epochs = 300;
    c.seed = seed;
    c.learning_rate = 1e-3;
    const auto nnr = run_nnvqe(h, layout, c);
    expect_variational(nnr.run, exact);
    nn_energies.push_back(nnr.label_energy);
    OptimizerConfig rc;
    rc.max_epochs = 300;
    rc.seed = seed;
    const auto rp = run_rpvqe(h, layout, rc);
    expect_variational(rp, exact);
    rp_energies.push_back(rp.final_energy);
  }
  std::sort(rp_energies.begin(), rp_energies.end());
  const double rp_median = 0.5 * (rp_energies[4] + rp_energies[5]);
  const double nn_best = *std::min_element(nn_energies.begin(), nn_energies.end());
  EXPECT_LE(nn_best, rp_median + 1e-9);
}

TEST(Nnvqe, Deterministic) {
  const auto layout = CircuitLayout::hea(3, 2);
  const auto h = build_ising(3, 1.0, 0.5);
  OptimizerConfig c;
  c.max_epochs = 15;
  c.seed = 4;
  const auto a = run_nnvqe(h, layout, c);
  const auto b = run_nnvqe(h, layout, c);
  EXPECT_EQ(a.run.energy_trace, b.run.energy_trace);
  EXPECT_EQ(a.label, b.label);
}
