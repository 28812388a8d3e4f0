// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: one entry point per pipeline stage, each writing
// its outputs plus a manifest into an output directory.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmvqe/bp.hpp"
#include "dmvqe/dataset.hpp"
#include "dmvqe/diffusion.hpp"
#include "dmvqe/dmvqe.hpp"
#include "dmvqe/error.hpp"
#include "dmvqe/metrics.hpp"
#include "dmvqe/vqe.hpp"

namespace dmvqe {

enum class ExperimentKind { DatasetGen, DmTrain, DmQuality, DmvqeEval, IsingEpochs, HubbardDepth, BpScan, Sample, Vqe };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::DatasetGen: return "dataset-gen";
    case ExperimentKind::DmTrain: return "dm-train";
    case ExperimentKind::DmQuality: return "dm-quality";
    case ExperimentKind::DmvqeEval: return "dmvqe-eval";
    case ExperimentKind::IsingEpochs: return "ising-epochs";
    case ExperimentKind::HubbardDepth: return "hubbard-depth";
    case ExperimentKind::BpScan: return "bp-scan";
    case ExperimentKind::Sample: return "sample";
    case ExperimentKind::Vqe: return "vqe";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(std::string_view s) {
  for (auto k : {ExperimentKind::DatasetGen, ExperimentKind::DmTrain, ExperimentKind::DmQuality, ExperimentKind::DmvqeEval,
                 ExperimentKind::IsingEpochs, ExperimentKind::HubbardDepth, ExperimentKind::BpScan, ExperimentKind::Sample,
                 ExperimentKind::Vqe}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown experiment kind: " + std::string(s));
}

/// `params` holds the kind-specific keys; the top-level seed feeds every
/// stochastic sub-stage of the experiment.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::DatasetGen;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  nlohmann::json params = nlohmann::json::object();
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  ExperimentConfig c;
  c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  c.seed = j.value("seed", std::uint64_t{0});
  c.out_dir = j.value("out_dir", std::string("out"));
  c.params = j;
  for (const char* k : {"kind", "seed", "out_dir"}) c.params.erase(k);
  return c;
}

struct ExperimentOutput {
  nlohmann::json report;            // also written to metrics.json
  std::vector<std::string> files;   // relative to out_dir, sorted
};

using LogFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Hamiltonian sets

/// Heisenberg points outside the training square: the lo band covers
/// [lo_band.lo, lo_band.hi) on both axes and the hi band (hi_band.lo,
/// hi_band.hi] on both axes, at `step`.
struct OutOfGridBands {
  int n_qubits = 6;
  double low_lo = 0.0, low_hi = 1.0;
  double high_lo = 4.0, high_hi = 5.0;
  double step = 0.1;
  bool closed = false;  // include the band edges that touch the training square
};

inline void from_json(const nlohmann::json& j, OutOfGridBands& b) {
  b = OutOfGridBands{};
  b.n_qubits = j.value("n", b.n_qubits);
  if (j.contains("low")) {
    b.low_lo = j["low"].at(0).get<double>();
    b.low_hi = j["low"].at(1).get<double>();
  }
  if (j.contains("high")) {
    b.high_lo = j["high"].at(0).get<double>();
    b.high_hi = j["high"].at(1).get<double>();
  }
  b.step = j.value("step", b.step);
  b.closed = j.value("closed", b.closed);
  if (!(b.step > 0.0) || b.low_lo >= b.low_hi || b.high_lo >= b.high_hi) throw InvalidArgument("malformed out-of-grid bands");
}

inline void to_json(nlohmann::json& j, const OutOfGridBands& b) {
  j = {{"n", b.n_qubits}, {"low", {b.low_lo, b.low_hi}}, {"high", {b.high_lo, b.high_hi}}, {"step", b.step}, {"closed", b.closed}};
}

inline std::vector<HamiltonianSpec> out_of_grid_points(const OutOfGridBands& b) {
  auto axis = [&](double lo, double hi, bool drop_lo, bool drop_hi) {
    std::vector<double> v = AxisRange{lo, hi, b.step}.values();
    if (drop_hi && !v.empty() && std::abs(v.back() - hi) < 1e-9) v.pop_back();
    if (drop_lo && !v.empty() && std::abs(v.front() - lo) < 1e-9) v.erase(v.begin());
    return v;
  };
  std::vector<HamiltonianSpec> out;
  const auto low = axis(b.low_lo, b.low_hi, false, !b.closed);
  const auto high = axis(b.high_lo, b.high_hi, !b.closed, false);
  for (const auto* band : {&low, &high})
    for (double J : *band)
      for (double h : *band) out.push_back(HamiltonianSpec::heisenberg(b.n_qubits, J, h));
  return out;
}

/// Union, in order, of "specs", "grids" (row-major each) and "bands".
inline std::vector<HamiltonianSpec> hamiltonian_set(const nlohmann::json& j) {
  std::vector<HamiltonianSpec> out;
  if (j.contains("specs"))
    for (const auto& s : j["specs"]) {
      auto spec = s.get<HamiltonianSpec>();
      spec.validate();
      out.push_back(spec);
    }
  if (j.contains("grids"))
    for (const auto& g : j["grids"])
      for (const auto& s : g.get<GridSpec>().points()) out.push_back(s);
  if (j.contains("bands"))
    for (const auto& s : out_of_grid_points(j["bands"].get<OutOfGridBands>())) out.push_back(s);
  if (out.empty()) throw InvalidArgument("hamiltonian set is empty");
  return out;
}

// ---------------------------------------------------------------------------
// File helpers

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StagedArtifactError(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw StagedArtifactError(path);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json input_entry(const std::string& path) {
  return {{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}};
}

class OutDir {
 public:
  explicit OutDir(const std::string& dir) : dir_(dir) { std::filesystem::create_directories(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& bytes) {
    std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path(name) + " for writing");
    out << bytes;
    if (!out) throw std::runtime_error("failed writing " + path(name));
    files_.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  void write_jsonl(const std::string& name, const std::vector<nlohmann::json>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.dump() + "\n";
    write(name, s);
  }

  std::vector<std::string> files() const {
    auto f = files_;
    std::sort(f.begin(), f.end());
    return f;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Population variance, shifted by the first entry so that bit-identical
// entries give exactly 0.
inline double variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double s1 = 0.0, s2 = 0.0;
  for (double x : v) {
    s1 += x - v.front();
    s2 += (x - v.front()) * (x - v.front());
  }
  return std::max(0.0, s2 / n - (s1 / n) * (s1 / n));
}

inline std::vector<double> relative_errors(std::span<const double> est, std::span<const double> ref) {
  std::vector<double> out;
  for (std::size_t i = 0; i < est.size(); ++i) out.push_back(relative_error(est[i], ref[i]));
  return out;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

inline PauliSum hamiltonian_from_params(const nlohmann::json& p, nlohmann::json& resolved, nlohmann::json& inputs) {
  if (p.contains("pauli")) {
    const std::string path = p["pauli"].get<std::string>();
    inputs["pauli"] = input_entry(path);
    resolved["pauli"] = path;
    try {
      return pauli_sum_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), 0);
    }
  }
  if (!p.contains("hamiltonian")) throw InvalidArgument("config needs \"hamiltonian\" (a spec) or \"pauli\" (a PauliSum file)");
  auto spec = p["hamiltonian"].get<HamiltonianSpec>();
  spec.validate();
  resolved["hamiltonian"] = spec;
  return build_hamiltonian(spec);
}

inline DiffusionModel load_model_input(const nlohmann::json& p, nlohmann::json& resolved, nlohmann::json& inputs) {
  if (!p.contains("model")) throw InvalidArgument("config needs \"model\" (a checkpoint path)");
  const std::string path = p["model"].get<std::string>();
  require_file(path);
  inputs["model"] = input_entry(path);
  resolved["model"] = path;
  return load_checkpoint(path);
}

inline Dataset load_dataset_input(const nlohmann::json& p, nlohmann::json& resolved, nlohmann::json& inputs) {
  if (!p.contains("dataset")) throw InvalidArgument("config needs \"dataset\" (a JSON-lines path)");
  const std::string path = p["dataset"].get<std::string>();
  require_file(path);
  inputs["dataset"] = input_entry(path);
  resolved["dataset"] = path;
  Dataset d = load_dataset(path);
  if (d.records.empty()) throw InvalidArgument("dataset " + path + " has no records");
  return d;
}

inline CircuitLayout model_layout(const nlohmann::json& p, const DiffusionModel& m) {
  const auto& c = m.net.config();
  CircuitLayout layout = p.contains("layout") ? p["layout"].get<CircuitLayout>() : CircuitLayout::hea(c.qubits, c.layers);
  if (layout.n_qubits != c.qubits || layout.n_layers != c.layers) throw InvalidArgument("layout does not match the model grid");
  return layout;
}

inline SamplingManifest sampling_manifest(const DiffusionModel& m, const std::string& hash, std::uint64_t seed, int k, bool det) {
  return {seed, k, m.schedule, det, hash};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages. Each returns the report and fills `resolved` with the effective
// configuration and `inputs` with hashed input artifacts.

namespace detail {

struct StageContext {
  const ExperimentConfig& config;
  OutDir& out;
  nlohmann::json& resolved;
  nlohmann::json& inputs;
  const LogFn& log;
};

inline nlohmann::json stage_dataset_gen(StageContext& cx) {
  const auto& p = cx.config.params;
  const GridSpec grid = p.at("grid").get<GridSpec>();
  const CircuitLayout layout = p.contains("layout") ? p["layout"].get<CircuitLayout>() : CircuitLayout::hea(grid.n_qubits, 10);
  LabelConfig label = p.contains("label") ? p["label"].get<LabelConfig>() : LabelConfig{};
  label.seed = cx.config.seed;
  cx.resolved["grid"] = grid;
  cx.resolved["layout"] = layout;
  cx.resolved["label"] = label;

  // Records from an earlier run with the same header are reused.
  DatasetHeader header;
  header.layout = layout;
  header.grid = grid;
  header.extra = {{"label", label}};
  std::vector<LabelRecord> existing;
  const std::string path = cx.out.path("dataset.jsonl");
  if (std::filesystem::is_regular_file(path)) {
    try {
      Dataset old = load_dataset(path);
      if (header_to_json(old.header) == header_to_json(header)) existing = std::move(old.records);
    } catch (const ParseError&) {
    }
    if (!existing.empty() && cx.log) cx.log("reusing " + std::to_string(existing.size()) + " records");
  }
  const LabelSet set = generate_labels(grid, layout, label, existing);
  std::ostringstream ds;
  write_dataset(ds, Dataset{header, set.records});
  cx.out.write("dataset.jsonl", ds.str());
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : set.failures) failures.push_back({{"spec", f.spec}, {"message", f.message}});
  cx.out.write_json("failures.json", failures);

  std::vector<double> e_label, e_real;
  for (const auto& r : set.records) {
    e_label.push_back(r.label_energy);
    e_real.push_back(r.exact_energy);
  }
  nlohmann::json rep = {{"records", set.records.size()}, {"failures", set.failures.size()}, {"e_label", e_label}, {"e_real", e_real}};
  rep["mre_label"] = e_label.empty() ? nlohmann::json(nullptr) : nlohmann::json(mre(e_label, e_real));
  return rep;
}

inline nlohmann::json stage_dm_train(StageContext& cx) {
  const auto& p = cx.config.params;
  const Dataset data = load_dataset_input(p, cx.resolved, cx.inputs);
  DMTrainingConfig tc = p.contains("training") ? p["training"].get<DMTrainingConfig>() : DMTrainingConfig{};
  tc.seed = cx.config.seed;
  cx.resolved["training"] = tc;
  const int every = std::max(1, tc.epochs / 20);
  const TrainResult res = train_dm(data.records, tc, [&](int epoch, double loss) {
    if (cx.log && (epoch + 1) % every == 0) cx.log("epoch " + std::to_string(epoch + 1) + " loss " + csv_double(loss));
  });
  std::ostringstream ck;
  write_checkpoint(ck, res.model);
  cx.out.write("model.ckpt", ck.str());
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < res.loss_trace.size(); ++e) csv += std::to_string(e + 1) + "," + csv_double(res.loss_trace[e]) + "\n";
  cx.out.write("loss.csv", csv);
  return {{"records", data.records.size()}, {"epochs", tc.epochs}, {"final_loss", res.loss_trace.back()},
          {"model_hash", model_hash(res.model)}};
}

inline nlohmann::json stage_dm_quality(StageContext& cx) {
  const auto& p = cx.config.params;
  const Dataset data = load_dataset_input(p, cx.resolved, cx.inputs);
  const DiffusionModel model = load_model_input(p, cx.resolved, cx.inputs);
  const CircuitLayout layout = data.header.layout;
  if (layout.n_qubits != model.net.config().qubits || layout.n_layers != model.net.config().layers) {
    throw InvalidArgument("dataset layout does not match the model grid");
  }
  const int k = get_or(p, "k", 1);
  const int bins = get_or(p, "bins", 40);
  SampleOptions so;
  so.deterministic = get_or(p, "deterministic", false);
  so.max_batch = get_or(p, "max_batch", so.max_batch);
  if (k < 1) throw InvalidArgument("k must be >= 1");
  cx.resolved["k"] = k;
  cx.resolved["bins"] = bins;
  cx.resolved["deterministic"] = so.deterministic;
  cx.resolved["max_batch"] = so.max_batch;

  const auto generated = generate_for_records(model, data.records, layout, cx.config.seed, k, so);
  std::vector<ParamGrid> labels;
  std::vector<double> e_label, e_dm;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    labels.push_back(data.records[i].params);
    e_label.push_back(data.records[i].label_energy);
    e_dm.push_back(energy(layout, generated[i], build_hamiltonian(data.records[i].spec)));
  }
  const auto sim = similarity_distribution(generated, labels, bins);
  const auto conf = confusion_scatter(e_label, e_dm);
  cx.out.write_json("similarity.json", sim);
  cx.out.write_json("confusion.json", conf);
  std::vector<nlohmann::json> rows;
  const std::string hash = model_hash(model);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    rows.push_back({{"spec", data.records[i].spec}, {"params", generated[i]}, {"cosine", sim.values[i]}, {"e_dm", e_dm[i]},
                    {"e_label", e_label[i]},
                    {"sampling", sampling_manifest(model, hash, derive_seed(cx.config.seed, {i}), k, so.deterministic)}});
  }
  cx.out.write_jsonl("generated.jsonl", rows);
  return {{"records", data.records.size()}, {"median_cosine", sim.median}, {"anomalous", sim.anomalous},
          {"cosine", sim.values},           {"e_label", e_label},          {"e_dm", e_dm},
          {"mre_dm", conf.mre}};
}

// dmvqe-eval and ising-epochs: paired DMVQE/RPVQE runs, item i seeded by
// derive_seed(seed, {i}) for both the sampler and the random initializer.
inline nlohmann::json stage_dmvqe_eval(StageContext& cx, bool epochs_mode) {
  const auto& p = cx.config.params;
  const DiffusionModel model = load_model_input(p, cx.resolved, cx.inputs);
  const CircuitLayout layout = model_layout(p, model);
  const auto specs = hamiltonian_set(p.at("hamiltonians"));
  OptimizerConfig oc;
  if (p.contains("optimizer")) oc = p["optimizer"].get<OptimizerConfig>();
  if (epochs_mode) {
    if (!oc.target_mre) oc.target_mre = 0.005;
    if (!p.contains("optimizer") || !p["optimizer"].contains("epoch_cap")) oc.epoch_cap = 2000;
    oc.validate();
  }
  DmvqeOptions dopt = p.contains("dmvqe") ? p["dmvqe"].get<DmvqeOptions>() : DmvqeOptions{};
  SampleOptions so;
  so.deterministic = dopt.deterministic;
  so.max_batch = get_or(p, "max_batch", so.max_batch);
  cx.resolved["layout"] = layout;
  cx.resolved["optimizer"] = oc;
  cx.resolved["dmvqe"] = dopt;
  cx.resolved["max_batch"] = so.max_batch;
  cx.resolved["hamiltonians"] = p.at("hamiltonians");

  std::vector<PauliSum> hs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    hs.push_back(build_hamiltonian(specs[i]));
    seeds.push_back(derive_seed(cx.config.seed, {i}));
  }
  if (cx.log) cx.log("sampling " + std::to_string(specs.size()) + " x " + std::to_string(dopt.k) + " candidates");
  const auto gens = generate_best_of_many(model, hs, layout, dopt.k, seeds, so, dopt.hash_seed);
  const std::string hash = model_hash(model);

  std::vector<double> e_real, e_dm, e_dmvqe, e_rpvqe;
  std::vector<nlohmann::json> rows, ep_dmvqe, ep_rpvqe;
  int trapped_dmvqe = 0, trapped_rpvqe = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    OptimizerConfig c = oc;
    c.seed = seeds[i];
    c.reference_energy = exact_ground_energy(hs[i]);
    const RunResult dm_run = optimize_from(hs[i], layout, gens[i].grid, c);
    const RunResult rp_run = run_rpvqe(hs[i], layout, c);
    e_real.push_back(*c.reference_energy);
    e_dm.push_back(gens[i].energy);
    e_dmvqe.push_back(dm_run.final_energy);
    e_rpvqe.push_back(rp_run.final_energy);
    trapped_dmvqe += dm_run.trapped;
    trapped_rpvqe += rp_run.trapped;
    auto epochs_json = [](const RunResult& r) { return r.epochs_to_target ? nlohmann::json(*r.epochs_to_target) : nlohmann::json(nullptr); };
    ep_dmvqe.push_back(epochs_json(dm_run));
    ep_rpvqe.push_back(epochs_json(rp_run));
    rows.push_back({{"spec", specs[i]}, {"e_real", e_real.back()}, {"e_dm", e_dm.back()}, {"dm_params", gens[i].grid},
                    {"dmvqe", dm_run}, {"rpvqe", rp_run},
                    {"sampling", sampling_manifest(model, hash, seeds[i], dopt.k, dopt.deterministic)}});
    if (cx.log && (i + 1) % 10 == 0) cx.log("optimized " + std::to_string(i + 1) + "/" + std::to_string(specs.size()));
  }
  cx.out.write_jsonl("runs.jsonl", rows);

  const auto re_dmvqe = relative_errors(e_dmvqe, e_real), re_rpvqe = relative_errors(e_rpvqe, e_real);
  int wins = 0;
  for (std::size_t i = 0; i < re_dmvqe.size(); ++i) wins += re_dmvqe[i] < re_rpvqe[i];
  nlohmann::json rep = {{"n", specs.size()},
                        {"e_real", e_real},
                        {"e_dm", e_dm},
                        {"e_dmvqe", e_dmvqe},
                        {"e_rpvqe", e_rpvqe},
                        {"mre_dm", mre(e_dm, e_real)},
                        {"mre_dmvqe", mre(e_dmvqe, e_real)},
                        {"mre_rpvqe", mre(e_rpvqe, e_real)},
                        {"dmvqe_wins", wins},
                        {"dmvqe_win_fraction", static_cast<double>(wins) / static_cast<double>(specs.size())}};
  if (epochs_mode) {
    rep["epochs_dmvqe"] = ep_dmvqe;
    rep["epochs_rpvqe"] = ep_rpvqe;
    rep["trapped_dmvqe"] = trapped_dmvqe;
    rep["trapped_rpvqe"] = trapped_rpvqe;
  }
  return rep;
}

// DMVQE' against RPVQE at depths L_dm + extra. The DM initializer is sampled
// once (sample seed = experiment seed); repeat r draws its extra layers and
// the RPVQE start from derive_seed(seed, {depth index, r}).
inline nlohmann::json stage_hubbard_depth(StageContext& cx) {
  const auto& p = cx.config.params;
  const DiffusionModel model = load_model_input(p, cx.resolved, cx.inputs);
  const CircuitLayout base = model_layout(p, model);
  HamiltonianSpec spec = p.contains("hamiltonian") ? p["hamiltonian"].get<HamiltonianSpec>() : HamiltonianSpec::hubbard(base.n_qubits / 2, 3.0, 3.0);
  spec.validate();
  const auto extra = get_or(p, "extra_layers", std::vector<int>{0, 2, 4});
  const int repeats = get_or(p, "repeats", 10);
  if (repeats < 1 || extra.empty()) throw InvalidArgument("need repeats >= 1 and at least one depth");
  for (int e : extra)
    if (e < 0) throw InvalidArgument("extra_layers must be >= 0");
  OptimizerConfig oc = p.contains("optimizer") ? p["optimizer"].get<OptimizerConfig>() : OptimizerConfig{};
  DmvqeOptions dopt = p.contains("dmvqe") ? p["dmvqe"].get<DmvqeOptions>() : DmvqeOptions{};
  dopt.sample_seed = cx.config.seed;
  cx.resolved["layout"] = base;
  cx.resolved["hamiltonian"] = spec;
  cx.resolved["extra_layers"] = extra;
  cx.resolved["repeats"] = repeats;
  cx.resolved["optimizer"] = oc;
  cx.resolved["dmvqe"] = dopt;

  const PauliSum h = build_hamiltonian(spec);
  oc.reference_energy = exact_ground_energy(h);
  const BestOf gen = generate_initializer(h, base, model, dopt);

  std::vector<nlohmann::json> rows;
  std::string csv = "depth,mean_dmvqe,var_dmvqe,mean_rpvqe,var_rpvqe,max_trace_var_dmvqe\n";
  nlohmann::json per_depth = nlohmann::json::array();
  for (std::size_t d = 0; d < extra.size(); ++d) {
    const CircuitLayout deep = base.with_layers(base.n_layers + extra[d]);
    std::vector<double> fin_dm, fin_rp;
    std::vector<std::vector<double>> traces;
    for (int r = 0; r < repeats; ++r) {
      OptimizerConfig c = oc;
      c.seed = derive_seed(cx.config.seed, {d, static_cast<std::uint64_t>(r)});
      // Same initializer as run_dmvqe_prime, reusing the one generated grid.
      ParamGrid init(deep.n_layers, deep.n_qubits);
      for (int l = 0; l < base.n_layers; ++l)
        for (int q = 0; q < deep.n_qubits; ++q) init.set(l, q, gen.grid(l, q));
      Rng rng(c.seed);
      for (int l = base.n_layers; l < deep.n_layers; ++l)
        for (int q = 0; q < deep.n_qubits; ++q) init.set(l, q, rng.uniform(-1.0, 1.0));
      const RunResult dm_run = optimize_from(h, deep, init, c);
      const RunResult rp_run = run_rpvqe(h, deep, c);
      fin_dm.push_back(dm_run.final_energy);
      fin_rp.push_back(rp_run.final_energy);
      traces.push_back(dm_run.energy_trace);
      rows.push_back({{"depth", deep.n_layers}, {"repeat", r}, {"dmvqe", dm_run}, {"rpvqe", rp_run}});
    }
    double max_trace_var = 0.0;
    for (std::size_t e = 0; e < traces.front().size(); ++e) {
      std::vector<double> col;
      for (const auto& t : traces) col.push_back(t[e]);
      max_trace_var = std::max(max_trace_var, variance(col));
    }
    const double mdm = mean(fin_dm), vdm = variance(fin_dm), mrp = mean(fin_rp), vrp = variance(fin_rp);
    csv += std::to_string(deep.n_layers) + "," + csv_double(mdm) + "," + csv_double(vdm) + "," + csv_double(mrp) + "," + csv_double(vrp) + "," +
           csv_double(max_trace_var) + "\n";
    per_depth.push_back({{"depth", deep.n_layers}, {"e_dmvqe", fin_dm}, {"e_rpvqe", fin_rp}, {"mean_dmvqe", mdm}, {"var_dmvqe", vdm},
                         {"mean_rpvqe", mrp}, {"var_rpvqe", vrp}, {"max_trace_var_dmvqe", max_trace_var}});
    if (cx.log) cx.log("depth " + std::to_string(deep.n_layers) + " done");
  }
  cx.out.write_jsonl("runs.jsonl", rows);
  cx.out.write("depth.csv", csv);
  return {{"e_real", *oc.reference_energy}, {"e_dm", gen.energy}, {"depths", per_depth},
          {"sampling", sampling_manifest(model, model_hash(model), dopt.sample_seed, dopt.k, dopt.deterministic)}};
}

inline nlohmann::json stage_bp_scan(StageContext& cx) {
  const auto& p = cx.config.params;
  nlohmann::json with_default = p;
  if (!p.contains("hamiltonian") && !p.contains("pauli")) with_default["hamiltonian"] = HamiltonianSpec::heisenberg(6, 1.0, 1.0);
  const PauliSum h = hamiltonian_from_params(with_default, cx.resolved, cx.inputs);
  const CircuitLayout base = p.contains("layout") ? p["layout"].get<CircuitLayout>() : CircuitLayout::hea(h.n_qubits(), 1);
  if (base.n_qubits != h.n_qubits()) throw InvalidArgument("layout and Hamiltonian qubit counts differ");
  std::vector<int> depths;
  if (p.contains("depths") && p["depths"].is_array()) {
    depths = p["depths"].get<std::vector<int>>();
  } else {
    const int lo = p.contains("depths") ? p["depths"].value("lo", 1) : 1;
    const int hi = p.contains("depths") ? p["depths"].value("hi", 12) : 12;
    if (lo < 1 || hi < lo) throw InvalidArgument("depth range must satisfy 1 <= lo <= hi");
    for (int L = lo; L <= hi; ++L) depths.push_back(L);
  }
  const int n = get_or(p, "n_samples", 500);
  ParamIndex target;
  if (p.contains("target")) {
    target.layer = p["target"].at(0).get<int>();
    target.qubit = p["target"].at(1).get<int>();
  }
  cx.resolved["layout"] = base;
  cx.resolved["depths"] = depths;
  cx.resolved["n_samples"] = n;
  cx.resolved["target"] = {target.layer, target.qubit};
  const VarianceScan scan = scan_depths(base, h, depths, n, cx.config.seed, target);
  std::ostringstream csv;
  write_scan_csv(csv, scan);
  cx.out.write("scan.csv", csv.str());
  nlohmann::json rep = scan;
  if (depths.size() >= 3) {
    const std::vector<double> x(depths.begin(), depths.end());
    try {
      const auto rc = spearman(x, scan.variances);
      rep["spearman_rho"] = rc.rho;
      rep["spearman_p"] = rc.p_value;
    } catch (const InvalidArgument&) {
      rep["spearman_rho"] = nullptr;
      rep["spearman_p"] = nullptr;
    }
  }
  rep["ratio_first_last"] = scan.variances.back() > 0.0 ? nlohmann::json(scan.variances.front() / scan.variances.back()) : nlohmann::json(nullptr);
  return rep;
}

inline nlohmann::json stage_sample(StageContext& cx) {
  const auto& p = cx.config.params;
  const DiffusionModel model = load_model_input(p, cx.resolved, cx.inputs);
  const CircuitLayout layout = model_layout(p, model);
  const PauliSum h = hamiltonian_from_params(p, cx.resolved, cx.inputs);
  const int k = get_or(p, "k", 100);
  SampleOptions so;
  so.deterministic = get_or(p, "deterministic", false);
  so.max_batch = get_or(p, "max_batch", so.max_batch);
  const std::string format = get_or(p, "format", std::string("json"));
  if (format != "json" && format != "binary") throw InvalidArgument("format must be json or binary");
  cx.resolved["layout"] = layout;
  cx.resolved["k"] = k;
  cx.resolved["deterministic"] = so.deterministic;
  cx.resolved["format"] = format;
  const BestOf best = generate_best_of(model, h, layout, k, cx.config.seed, so);
  if (format == "json") {
    cx.out.write_json("grid.json", best.grid);
  } else {
    std::ostringstream b;
    write_param_grid_binary(b, best.grid);
    cx.out.write("grid.bin", b.str());
  }
  const nlohmann::json manifest = sampling_manifest(model, model_hash(model), cx.config.seed, k, so.deterministic);
  cx.out.write_json("sampling.json", manifest);
  return {{"energy", best.energy}, {"index", best.index}, {"energies", best.energies}, {"sampling", manifest}};
}

inline nlohmann::json stage_vqe(StageContext& cx) {
  const auto& p = cx.config.params;
  const PauliSum h = hamiltonian_from_params(p, cx.resolved, cx.inputs);
  const std::string method = get_or(p, "method", std::string("rpvqe"));
  OptimizerConfig oc = p.contains("optimizer") ? p["optimizer"].get<OptimizerConfig>() : OptimizerConfig{};
  oc.seed = cx.config.seed;
  if (!oc.reference_energy) oc.reference_energy = exact_ground_energy(h);
  cx.resolved["method"] = method;
  cx.resolved["optimizer"] = oc;
  nlohmann::json rep;
  RunResult run;
  if (method == "dmvqe") {
    const DiffusionModel model = load_model_input(p, cx.resolved, cx.inputs);
    const CircuitLayout layout = p.contains("layout") ? p["layout"].get<CircuitLayout>() : CircuitLayout::hea(h.n_qubits(), model.net.config().layers);
    DmvqeOptions dopt = p.contains("dmvqe") ? p["dmvqe"].get<DmvqeOptions>() : DmvqeOptions{};
    dopt.sample_seed = cx.config.seed;
    cx.resolved["layout"] = layout;
    cx.resolved["dmvqe"] = dopt;
    const DmvqeResult r = layout.n_layers == model.net.config().layers ? run_dmvqe(h, layout, model, oc, dopt) : run_dmvqe_prime(h, layout, model, oc, dopt);
    run = r.run;
    rep["e_dm"] = r.generation.energy;
    rep["sampling"] = sampling_manifest(model, model_hash(model), dopt.sample_seed, dopt.k, dopt.deterministic);
  } else {
    const CircuitLayout layout = p.contains("layout") ? p["layout"].get<CircuitLayout>() : CircuitLayout::hea(h.n_qubits(), 10);
    cx.resolved["layout"] = layout;
    if (method == "rpvqe") {
      run = run_rpvqe(h, layout, oc);
    } else if (method == "nnvqe") {
      run = run_nnvqe(h, layout, oc).run;
    } else {
      throw InvalidArgument("method must be rpvqe, nnvqe or dmvqe");
    }
  }
  cx.out.write_json("result.json", run);
  rep["e_real"] = *oc.reference_energy;
  rep["final_energy"] = run.final_energy;
  rep["mre"] = relative_error(run.final_energy, *oc.reference_energy, oc.zero_energy_scale);
  rep["epochs_to_target"] = run.epochs_to_target ? nlohmann::json(*run.epochs_to_target) : nlohmann::json(nullptr);
  rep["trapped"] = run.trapped;
  return rep;
}

}  // namespace detail

/// Runs one stage. Writes the stage outputs, metrics.json and manifest.json
/// into config.out_dir; identical configs and inputs give identical bytes.
inline ExperimentOutput run_experiment(const ExperimentConfig& config, const LogFn& log = {}) {
  nlohmann::json resolved = nlohmann::json::object(), inputs = nlohmann::json::object();
  nlohmann::json report;
  // Validate staged inputs before creating the output directory.
  for (const char* key : {"dataset", "model", "pauli"}) {
    if (config.params.contains(key) && config.params[key].is_string()) detail::require_file(config.params[key].get<std::string>());
  }
  detail::OutDir out(config.out_dir);
  detail::StageContext cx{config, out, resolved, inputs, log};
  try {
    switch (config.kind) {
      case ExperimentKind::DatasetGen: report = detail::stage_dataset_gen(cx); break;
      case ExperimentKind::DmTrain: report = detail::stage_dm_train(cx); break;
      case ExperimentKind::DmQuality: report = detail::stage_dm_quality(cx); break;
      case ExperimentKind::DmvqeEval: report = detail::stage_dmvqe_eval(cx, false); break;
      case ExperimentKind::IsingEpochs: report = detail::stage_dmvqe_eval(cx, true); break;
      case ExperimentKind::HubbardDepth: report = detail::stage_hubbard_depth(cx); break;
      case ExperimentKind::BpScan: report = detail::stage_bp_scan(cx); break;
      case ExperimentKind::Sample: report = detail::stage_sample(cx); break;
      case ExperimentKind::Vqe: report = detail::stage_vqe(cx); break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  out.write_json("metrics.json", report);
  nlohmann::json manifest = {{"kind", to_string(config.kind)}, {"seed", config.seed}, {"config", resolved}, {"inputs", inputs}};
  auto files = out.files();
  files.push_back("manifest.json");
  std::sort(files.begin(), files.end());
  manifest["outputs"] = files;
  out.write_json("manifest.json", manifest);
  return {report, files};
}

}  // namespace dmvqe
