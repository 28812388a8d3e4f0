// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Label-parameter datasets: grid enumeration, label generation by repeated
// NNVQE (or RPVQE) runs, and JSON-lines persistence.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmvqe/conditioning.hpp"
#include "dmvqe/error.hpp"
#include "dmvqe/pauli.hpp"
#include "dmvqe/rng.hpp"
#include "dmvqe/simulator.hpp"
#include "dmvqe/vqe.hpp"

namespace dmvqe {

inline constexpr int kDatasetVersion = 1;

struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  void validate(const std::string& name) const {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(step)) throw InvalidArgument(name + " range must be finite");
    if (!(step > 0.0)) throw InvalidArgument(name + " step must be positive");
    if (lo > hi) throw InvalidArgument(name + " range bounds out of order");
  }

  /// lo, lo+step, ... up to hi inclusive (with 1e-9 slack), rounded to 12
  /// decimals so that 1 + 3*0.1 prints as 1.3.
  std::vector<double> values() const {
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
    return out;
  }
};

/// Cartesian grid over the two model parameters: (J, h) for spin chains,
/// (T, U) for Hubbard (n_qubits = 2 * sites).
struct GridSpec {
  Family family = Family::Heisenberg;
  int n_qubits = 6;
  AxisRange first{1.0, 4.0, 0.5};
  AxisRange second{1.0, 4.0, 0.5};
  Boundary boundary = Boundary::Periodic;

  void validate() const {
    first.validate(family == Family::Hubbard ? "T" : "J");
    second.validate(family == Family::Hubbard ? "U" : "h");
    if (family == Family::Hubbard && n_qubits % 2 != 0) throw InvalidSpec("Hubbard grid needs an even qubit count");
    spec_at(first.lo, second.lo).validate();
  }

  HamiltonianSpec spec_at(double a, double b) const {
    if (family == Family::Hubbard) return HamiltonianSpec::hubbard(n_qubits / 2, a, b);
    HamiltonianSpec s{family, n_qubits, a, b, 0.0, 0.0, boundary};
    return s;
  }

  /// Row-major over (first, second).
  std::vector<HamiltonianSpec> points() const {
    validate();
    std::vector<HamiltonianSpec> out;
    for (double a : first.values())
      for (double b : second.values()) out.push_back(spec_at(a, b));
    return out;
  }
};

inline void to_json(nlohmann::json& j, const AxisRange& r) { j = {{"lo", r.lo}, {"hi", r.hi}, {"step", r.step}}; }
inline void from_json(const nlohmann::json& j, AxisRange& r) {
  r.lo = j.at("lo").get<double>();
  r.hi = j.at("hi").get<double>();
  r.step = j.at("step").get<double>();
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  const bool hub = g.family == Family::Hubbard;
  j = {{"family", to_string(g.family)}, {"n", g.n_qubits}, {hub ? "T" : "J", g.first}, {hub ? "U" : "h", g.second},
       {"boundary", to_string(g.boundary)}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
  g = GridSpec{};
  g.family = family_from_string(j.at("family").get<std::string>());
  g.n_qubits = j.at("n").get<int>();
  const bool hub = g.family == Family::Hubbard;
  g.first = j.at(hub ? "T" : "J").get<AxisRange>();
  g.second = j.at(hub ? "U" : "h").get<AxisRange>();
  g.boundary = boundary_from_string(j.value("boundary", hub ? "open" : "periodic"));
  g.validate();
}

struct LabelRecord {
  HamiltonianSpec spec;
  Embedding embedding;
  ParamGrid params;
  double label_energy = 0.0;
  double exact_energy = 0.0;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

inline void to_json(nlohmann::json& j, const LabelRecord& r) {
  j = {{"spec", r.spec}, {"embedding", r.embedding}, {"params", r.params}, {"label_energy", r.label_energy},
       {"exact_energy", r.exact_energy}};
}

inline LabelRecord label_record_from_json(const nlohmann::json& j) {
  LabelRecord r;
  r.spec = j.at("spec").get<HamiltonianSpec>();
  r.embedding = embedding_from_json(j.at("embedding"));
  r.params = param_grid_from_json(j.at("params"));
  r.label_energy = j.at("label_energy").get<double>();
  r.exact_energy = j.at("exact_energy").get<double>();
  return r;
}

enum class LabelMethod { Nnvqe, Rpvqe };

inline std::string to_string(LabelMethod m) { return m == LabelMethod::Nnvqe ? "nnvqe" : "rpvqe"; }
inline LabelMethod label_method_from_string(std::string_view s) {
  if (s == "nnvqe") return LabelMethod::Nnvqe;
  if (s == "rpvqe") return LabelMethod::Rpvqe;
  throw InvalidArgument("unknown label method: " + std::string(s));
}

struct LabelConfig {
  LabelMethod method = LabelMethod::Nnvqe;
  int restarts = 5;
  int epochs = 300;
  double learning_rate = 1e-3;  // network rate for NNVQE, parameter rate for RPVQE
  std::uint64_t seed = 0;
  std::uint64_t hash_seed = kDefaultHashSeed;

  void validate() const {
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (epochs < 1) throw InvalidArgument("label epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("label learning_rate must be positive");
  }
};

inline void to_json(nlohmann::json& j, const LabelConfig& c) {
  j = {{"method", to_string(c.method)}, {"restarts", c.restarts}, {"epochs", c.epochs},
       {"learning_rate", c.learning_rate}, {"seed", c.seed}, {"hash_seed", c.hash_seed}};
}

inline void from_json(const nlohmann::json& j, LabelConfig& c) {
  c = LabelConfig{};
  c.method = label_method_from_string(j.value("method", std::string("nnvqe")));
  c.restarts = j.value("restarts", c.restarts);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.method == LabelMethod::Nnvqe ? 1e-3 : 0.05);
  c.seed = j.value("seed", c.seed);
  c.hash_seed = j.value("hash_seed", c.hash_seed);
  c.validate();
}

struct LabelFailure {
  HamiltonianSpec spec;
  std::string message;
};

struct LabelSet {
  std::vector<LabelRecord> records;
  std::vector<LabelFailure> failures;
};

/// Label for one Hamiltonian: the lowest-energy grid over `restarts` runs.
/// NNVQE restart r initializes its network from derive_seed(seed, {r}) at every
/// grid point; RPVQE restart r draws from derive_seed(seed, {point, r}).
inline LabelRecord make_label(const HamiltonianSpec& spec, const CircuitLayout& layout, const LabelConfig& config,
                              std::uint64_t point_index) {
  config.validate();
  const PauliSum h = build_hamiltonian(spec);
  LabelRecord rec;
  rec.spec = spec;
  rec.exact_energy = exact_ground_energy(h);
  rec.embedding = encode_hamiltonian(h, config.hash_seed);
  rec.label_energy = std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    OptimizerConfig oc;
    oc.max_epochs = config.epochs;
    oc.learning_rate = config.learning_rate;
    if (config.method == LabelMethod::Nnvqe) {
      oc.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(r)});
      const NnvqeResult res = run_nnvqe(h, layout, oc);
      if (res.label_energy < rec.label_energy) {
        rec.label_energy = res.label_energy;
        rec.params = res.label;
      }
    } else {
      oc.seed = derive_seed(config.seed, {point_index, static_cast<std::uint64_t>(r)});
      const RunResult res = run_rpvqe(h, layout, oc);
      if (res.final_energy < rec.label_energy) {
        rec.label_energy = res.final_energy;
        rec.params = res.final_params;
      }
    }
  }
  if (rec.label_energy < rec.exact_energy - 1e-9) {
    throw std::runtime_error("label energy below the exact ground energy");
  }
  return rec;
}

/// One record per grid point. Points already present in `existing` (matched
/// by spec) are reused; failing points are reported in `failures` and skipped.
inline LabelSet generate_labels(const GridSpec& grid, const CircuitLayout& layout, const LabelConfig& config,
                                const std::vector<LabelRecord>& existing = {}) {
  config.validate();
  layout.validate();
  const auto specs = grid.points();
  if (specs.empty()) throw InvalidArgument("grid has no points");
  if (grid.n_qubits != layout.n_qubits) throw InvalidArgument("grid and layout qubit counts differ");
  LabelSet out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto hit = std::find_if(existing.begin(), existing.end(), [&](const LabelRecord& r) { return r.spec == specs[i]; });
    if (hit != existing.end()) {
      out.records.push_back(*hit);
      continue;
    }
    try {
      out.records.push_back(make_label(specs[i], layout, config, i));
    } catch (const std::exception& e) {
      out.failures.push_back({specs[i], e.what()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

struct DatasetHeader {
  int version = kDatasetVersion;
  CircuitLayout layout;
  std::optional<GridSpec> grid;
  nlohmann::json extra = nlohmann::json::object();  // e.g. label config
};

struct Dataset {
  DatasetHeader header;
  std::vector<LabelRecord> records;
};

inline nlohmann::json header_to_json(const DatasetHeader& h) {
  nlohmann::json j = {{"version", h.version}, {"layout", h.layout}};
  j["grid"] = h.grid ? nlohmann::json(*h.grid) : nlohmann::json(nullptr);
  for (const auto& [k, v] : h.extra.items()) j[k] = v;
  return j;
}

/// Header line then one record per line. An empty record list writes an
/// empty file.
inline void write_dataset(std::ostream& out, const Dataset& d) {
  if (d.records.empty()) return;
  out << header_to_json(d.header).dump() << '\n';
  for (const auto& r : d.records) out << nlohmann::json(r).dump() << '\n';
}

inline Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        d.header.version = j.at("version").get<int>();
        if (d.header.version != kDatasetVersion) throw InvalidArgument("unsupported dataset version " + std::to_string(d.header.version));
        d.header.layout = j.at("layout").get<CircuitLayout>();
        if (j.contains("grid") && !j["grid"].is_null()) d.header.grid = j["grid"].get<GridSpec>();
        for (const auto& [k, v] : j.items()) {
          if (k != "version" && k != "layout" && k != "grid") d.header.extra[k] = v;
        }
        have_header = true;
        continue;
      }
      LabelRecord r = label_record_from_json(j);
      if (!r.params.matches(d.header.layout)) throw InvalidArgument("record params do not match the header layout");
      d.records.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(out, d);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StagedArtifactError(path);
  return read_dataset(in);
}

}  // namespace dmvqe
