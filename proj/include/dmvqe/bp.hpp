// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Trainability diagnostics: Monte Carlo variance of one cost partial
// derivative over uniform parameters, scanned over circuit depth.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "dmvqe/error.hpp"
#include "dmvqe/pauli.hpp"
#include "dmvqe/rng.hpp"
#include "dmvqe/simulator.hpp"

namespace dmvqe {

struct ParamIndex {
  int layer = 0;
  int qubit = 0;
};

struct VarianceEstimate {
  double variance = 0.0;
  double stderr_ = 0.0;  // standard error of the variance estimate
  int n_samples = 0;
};

namespace detail {

// Unbiased variance and the standard error of that estimate from the
// sample fourth central moment.
inline VarianceEstimate variance_with_stderr(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  const double var = m2 / (n - 1.0);
  m2 /= n;
  m4 /= n;
  const double se2 = std::max(0.0, (m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n);
  return {var, std::sqrt(se2), static_cast<int>(x.size())};
}

}  // namespace detail

/// Var over uniform grids of dE/dvalue at `target`. The derivative is taken
/// with respect to the normalized value, i.e. angle_scale * dE/dtheta.
inline VarianceEstimate variance_of_partial(const CircuitLayout& layout, const PauliSum& h, int n_samples, ParamIndex target,
                                            std::uint64_t seed) {
  layout.validate();
  if (n_samples < 2) throw InvalidArgument("variance needs n_samples >= 2");
  if (target.layer < 0 || target.layer >= layout.n_layers || target.qubit < 0 || target.qubit >= layout.n_qubits) {
    throw InvalidArgument("target parameter out of range");
  }
  const CompiledObservable obs(h);
  Rng rng(seed);
  std::vector<double> d(static_cast<std::size_t>(n_samples));
  for (auto& v : d) {
    const ParamGrid g = ParamGrid::uniform(layout.n_layers, layout.n_qubits, rng);
    v = partial_parameter_shift(layout, g, obs, target.layer, target.qubit);
  }
  return detail::variance_with_stderr(d);
}

struct VarianceScan {
  std::vector<int> depths;
  std::vector<double> variances;
  std::vector<double> stderrs;
  int n_samples = 0;
  std::uint64_t seed = 0;
  ParamIndex target;
};

/// Every depth reuses `seed`, so a depth's estimate equals the matching
/// variance_of_partial call.
inline VarianceScan scan_depths(const CircuitLayout& base, const PauliSum& h, std::span<const int> depths, int n_samples,
                                std::uint64_t seed, ParamIndex target = {}) {
  if (depths.empty()) throw InvalidArgument("depth range must be nonempty");
  VarianceScan scan;
  scan.n_samples = n_samples;
  scan.seed = seed;
  scan.target = target;
  for (int L : depths) {
    const auto est = variance_of_partial(base.with_layers(L), h, n_samples, target, seed);
    scan.depths.push_back(L);
    scan.variances.push_back(est.variance);
    scan.stderrs.push_back(est.stderr_);
  }
  return scan;
}

inline void write_scan_csv(std::ostream& out, const VarianceScan& scan) {
  out << "depth,variance,stderr,n_samples,seed\n";
  char buf[128];
  for (std::size_t i = 0; i < scan.depths.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%llu\n", scan.depths[i], scan.variances[i], scan.stderrs[i], scan.n_samples,
                  static_cast<unsigned long long>(scan.seed));
    out << buf;
  }
}

struct RankCorrelation {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, Student-t approximation
};

namespace detail {

inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman correlation (Pearson over average ranks).
inline RankCorrelation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  if (x.size() < 3) throw InvalidArgument("spearman needs at least 3 points");
  const auto rx = detail::average_ranks(x), ry = detail::average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("spearman: constant input");
  RankCorrelation out;
  out.rho = sxy / std::sqrt(sxx * syy);
  if (std::abs(out.rho) >= 1.0) {
    out.p_value = 0.0;
    return out;
  }
  const double t = out.rho * std::sqrt((n - 2.0) / (1.0 - out.rho * out.rho));
  const boost::math::students_t dist(n - 2.0);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

inline void to_json(nlohmann::json& j, const VarianceScan& s) {
  j = {{"depths", s.depths}, {"variances", s.variances}, {"stderrs", s.stderrs}, {"n_samples", s.n_samples}, {"seed", s.seed},
       {"target", {s.target.layer, s.target.qubit}}};
}

}  // namespace dmvqe
