// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation metrics: mean relative error, cosine similarity of grids, the
// similarity histogram and the energy confusion scatter.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "dmvqe/dataset.hpp"
#include "dmvqe/diffusion.hpp"
#include "dmvqe/error.hpp"
#include "dmvqe/vqe.hpp"

namespace dmvqe {

/// Mean over i of |a_i - b_i| / |b_i|; zero references use zero_scale.
inline double mre(std::span<const double> estimates, std::span<const double> references, double zero_scale = 1.0) {
  if (estimates.size() != references.size()) throw InvalidArgument("mre: length mismatch");
  if (estimates.empty()) throw InvalidArgument("mre of an empty list");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) s += relative_error(estimates[i], references[i], zero_scale);
  return s / static_cast<double>(estimates.size());
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InvalidArgument("cosine_similarity of a zero vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

inline double cosine_similarity(const ParamGrid& a, const ParamGrid& b) { return cosine_similarity(a.values(), b.values()); }

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges; the last bin is closed
  std::vector<int> counts;
};

inline Histogram histogram(std::span<const double> values, int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw InvalidArgument("histogram needs bins >= 1 and hi > lo");
  Histogram h;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

struct SimilarityReport {
  std::vector<double> values;  // per record
  Histogram histogram;
  double median = 0.0;
  // Generated grids should never reproduce labels exactly; any value equal
  // to 1 marks the distribution as suspicious.
  bool anomalous = false;
};

inline SimilarityReport similarity_distribution(std::span<const ParamGrid> generated, std::span<const ParamGrid> labels, int bins = 40) {
  if (generated.size() != labels.size() || generated.empty()) throw InvalidArgument("similarity_distribution: mismatched or empty lists");
  SimilarityReport r;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    r.values.push_back(cosine_similarity(generated[i], labels[i]));
    if (r.values.back() == 1.0) r.anomalous = true;
  }
  r.histogram = histogram(r.values, bins, -1.0, 1.0);
  r.median = median(r.values);
  return r;
}

struct ConfusionScatter {
  std::vector<double> label_energies;
  std::vector<double> dm_energies;
  double slope = 0.0;  // least-squares fit dm = slope * label + intercept
  double intercept = 0.0;
  std::vector<double> residuals;
  double mre = 0.0;  // of dm against label energies
};

inline ConfusionScatter confusion_scatter(std::span<const double> label_energies, std::span<const double> dm_energies) {
  if (label_energies.size() != dm_energies.size() || label_energies.empty()) throw InvalidArgument("confusion_scatter: mismatched or empty lists");
  ConfusionScatter c;
  c.label_energies.assign(label_energies.begin(), label_energies.end());
  c.dm_energies.assign(dm_energies.begin(), dm_energies.end());
  const double n = static_cast<double>(label_energies.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < label_energies.size(); ++i) {
    mx += label_energies[i] / n;
    my += dm_energies[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < label_energies.size(); ++i) {
    sxy += (label_energies[i] - mx) * (dm_energies[i] - my);
    sxx += (label_energies[i] - mx) * (label_energies[i] - mx);
  }
  c.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  c.intercept = my - c.slope * mx;
  for (std::size_t i = 0; i < label_energies.size(); ++i) c.residuals.push_back(dm_energies[i] - (c.slope * label_energies[i] + c.intercept));
  c.mre = mre(dm_energies, label_energies);
  return c;
}

/// One generated grid per record: a single sample (k = 1) or best-of-k, with
/// record i seeded by derive_seed(seed, {i}).
inline std::vector<ParamGrid> generate_for_records(const DiffusionModel& model, std::span<const LabelRecord> records,
                                                   const CircuitLayout& layout, std::uint64_t seed, int k = 1, const SampleOptions& options = {}) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < records.size(); ++i) seeds.push_back(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
  if (k == 1) {
    std::vector<Embedding> conds;
    for (const auto& r : records) conds.push_back(r.embedding);
    return sample_batch(model, conds, seeds, options);
  }
  std::vector<PauliSum> hs;
  for (const auto& r : records) hs.push_back(build_hamiltonian(r.spec));
  std::vector<ParamGrid> out;
  for (auto& b : generate_best_of_many(model, hs, layout, k, seeds, options)) out.push_back(std::move(b.grid));
  return out;
}

inline void to_json(nlohmann::json& j, const Histogram& h) { j = {{"edges", h.edges}, {"counts", h.counts}}; }

inline void to_json(nlohmann::json& j, const SimilarityReport& r) {
  j = {{"values", r.values}, {"histogram", r.histogram}, {"median", r.median}, {"anomalous", r.anomalous}};
}

inline void to_json(nlohmann::json& j, const ConfusionScatter& c) {
  j = {{"label_energies", c.label_energies}, {"dm_energies", c.dm_energies}, {"slope", c.slope}, {"intercept", c.intercept},
       {"residuals", c.residuals}, {"mre", c.mre}};
}

}  // namespace dmvqe
