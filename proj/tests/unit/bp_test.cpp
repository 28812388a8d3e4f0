// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "dmvqe/bp.hpp"

using namespace dmvqe;

namespace {

PauliSum single_z() { return PauliSum(1, {{1.0, PauliString("Z")}}); }

double sample_sd(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST(VarianceOfPartial, ZeroHamiltonian) {
  const auto est = variance_of_partial(CircuitLayout::hea(3, 2), PauliSum(3), 20, {0, 0}, 1);
  EXPECT_EQ(est.variance, 0.0);
  EXPECT_EQ(est.stderr_, 0.0);
}

// dE/dv = -pi sin(pi v) for E = cos(pi v); Var over v ~ U[-1, 1] is pi^2 / 2.
TEST(VarianceOfPartial, SingleQubitAnalyticCase) {
  const auto est = variance_of_partial(CircuitLayout::hea(1, 1), single_z(), 2000, {0, 0}, 31);
  const double expected = std::numbers::pi * std::numbers::pi / 2.0;
  EXPECT_GT(est.stderr_, 0.0);
  EXPECT_LE(std::abs(est.variance - expected), 3.0 * est.stderr_);
  // Independent Monte Carlo of the closed-form derivative.
  Rng rng(99);
  std::vector<double> d(20000);
  for (auto& v : d) v = -std::numbers::pi * std::sin(std::numbers::pi * rng.uniform(-1.0, 1.0));
  const double sd = sample_sd(d);
  EXPECT_NEAR(sd * sd, expected, 0.05 * expected);
}

TEST(VarianceOfPartial, DeterministicAndValidated) {
  const auto layout = CircuitLayout::hea(3, 3);
  const auto h = build_heisenberg(3, 1.0, 0.5);
  const auto a = variance_of_partial(layout, h, 50, {1, 2}, 8);
  const auto b = variance_of_partial(layout, h, 50, {1, 2}, 8);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_EQ(a.stderr_, b.stderr_);
  EXPECT_GE(a.variance, 0.0);
  EXPECT_THROW(variance_of_partial(layout, h, 1, {0, 0}, 1), InvalidArgument);
  EXPECT_THROW(variance_of_partial(layout, h, 10, {3, 0}, 1), InvalidArgument);
  EXPECT_THROW(variance_of_partial(layout, h, 10, {0, -1}, 1), InvalidArgument);
}

// The spread of the estimate over seeds shrinks like 1/sqrt(n), so doubling n
// divides it by sqrt(2); the reported standard error agrees with that spread.
TEST(VarianceOfPartial, StandardErrorScalesAsInverseRootN) {
  const auto layout = CircuitLayout::hea(1, 1);
  const auto h = single_z();
  std::vector<double> small, large;
  double reported_small = 0.0;
  const int reps = 200;
  for (int s = 0; s < reps; ++s) {
    const auto a = variance_of_partial(layout, h, 100, {0, 0}, 1000 + s);
    small.push_back(a.variance);
    reported_small += a.stderr_ / reps;
    large.push_back(variance_of_partial(layout, h, 200, {0, 0}, 5000 + s).variance);
  }
  const double ratio = sample_sd(small) / sample_sd(large);
  EXPECT_NEAR(ratio, std::sqrt(2.0), 0.3 * std::sqrt(2.0));
  EXPECT_NEAR(reported_small, sample_sd(small), 0.3 * sample_sd(small));
}

TEST(ScanDepths, SingleDepthMatchesDirectEstimate) {
  const auto base = CircuitLayout::hea(3, 1);
  const auto h = build_ising(3, 1.0, 1.0);
  const std::vector<int> depths{4};
  const auto scan = scan_depths(base, h, depths, 40, 6);
  ASSERT_EQ(scan.variances.size(), 1u);
  EXPECT_EQ(scan.variances[0], variance_of_partial(base.with_layers(4), h, 40, {0, 0}, 6).variance);
  EXPECT_THROW(scan_depths(base, h, std::vector<int>{}, 40, 6), InvalidArgument);
}

TEST(ScanDepths, CsvLayout) {
  const auto base = CircuitLayout::hea(2, 1);
  const auto h = build_heisenberg(2, 1.0, 0.0, Boundary::Open);
  const std::vector<int> depths{1, 2};
  const auto scan = scan_depths(base, h, depths, 10, 3);
  std::ostringstream ss;
  write_scan_csv(ss, scan);
  std::istringstream in(ss.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "depth,variance,stderr,n_samples,seed");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(0, 2), std::to_string(rows) + ",");
    EXPECT_NE(line.find(",10,3"), std::string::npos);
  }
  EXPECT_EQ(rows, 2);
}

TEST(Spearman, PerfectAndTiedOrderings) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> down{9, 7, 5, 3, 1};
  const auto r = spearman(x, down);
  EXPECT_DOUBLE_EQ(r.rho, -1.0);
  EXPECT_EQ(r.p_value, 0.0);
  // Ties take the average rank: ranks of y are (1.5, 1.5, 3, 4, 5).
  const std::vector<double> tied{1, 1, 2, 3, 4};
  EXPECT_NEAR(spearman(x, tied).rho, 0.9746794344808963, 1e-12);
  EXPECT_THROW(spearman(x, std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(spearman(x, std::vector<double>{1, 1, 1, 1, 1}), InvalidArgument);
}

// Reference values computed independently with an external statistics
// package (t-distribution p-value, n - 2 degrees of freedom).
TEST(Spearman, PValueFromStudentT) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> y{4, 1, 2, 7, 3, 10, 5, 6, 9, 8};
  const auto r = spearman(x, y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_NEAR(r.rho, 1.0 - 6.0 * d2 / (10.0 * 99.0), 1e-12);
  EXPECT_NEAR(r.rho, 0.6848484848484848, 1e-12);
  EXPECT_NEAR(r.p_value, 0.02888279750673276, 1e-9);
  const std::vector<double> a{1, 2, 3, 4, 5}, tied{1, 1, 2, 3, 4};
  EXPECT_NEAR(spearman(a, tied).p_value, 0.004818230468198537, 1e-9);
}

TEST(ScanDepths, VarianceDecaysWithDepthAtSixQubits) {
  const auto base = CircuitLayout::hea(6, 1);
  const auto h = build_heisenberg(6, 1.0, 1.0);
  const std::vector<int> depths{1, 4, 8};
  const auto scan = scan_depths(base, h, depths, 200, 12);
  for (double v : scan.variances) EXPECT_GE(v, 0.0);
  EXPECT_GT(scan.variances.front(), scan.variances.back());
}
