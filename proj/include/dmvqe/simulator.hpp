// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dmvqe/error.hpp"
#include "dmvqe/pauli.hpp"
#include "dmvqe/rng.hpp"

namespace dmvqe {

enum class Axis { X, Y, Z };
enum class Entangler { Ring, Chain };

inline char axis_char(Axis a) { return a == Axis::X ? 'X' : (a == Axis::Y ? 'Y' : 'Z'); }

inline Axis axis_from_char(char c) {
  switch (c) {
    case 'X': case 'x': return Axis::X;
    case 'Y': case 'y': return Axis::Y;
    case 'Z': case 'z': return Axis::Z;
  }
  throw InvalidArgument(std::string("unknown rotation axis '") + c + "'");
}

/// Hardware-efficient ansatz: per layer, one rotation about `axes[l]` on every
/// qubit followed by a wall of CZ gates.
struct CircuitLayout {
  int n_qubits = 1;
  int n_layers = 1;
  std::vector<Axis> axes;  // one per layer
  Entangler entangler = Entangler::Ring;
  double angle_scale = std::numbers::pi;

  static CircuitLayout hea(int n_qubits, int n_layers, Axis axis = Axis::Y, Entangler e = Entangler::Ring) {
    CircuitLayout c{n_qubits, n_layers, std::vector<Axis>(static_cast<std::size_t>(std::max(n_layers, 0)), axis), e};
    c.validate();
    return c;
  }

  /// Same layout with a different depth; new layers reuse the last axis.
  CircuitLayout with_layers(int layers) const {
    CircuitLayout c = *this;
    c.n_layers = layers;
    c.axes.resize(static_cast<std::size_t>(std::max(layers, 0)), axes.empty() ? Axis::Y : axes.back());
    c.validate();
    return c;
  }

  int param_count() const noexcept { return n_qubits * n_layers; }

  void validate() const {
    if (n_qubits < 1 || n_qubits > 24) throw InvalidArgument("n_qubits must be in [1, 24]");
    if (n_layers < 1) throw InvalidArgument("n_layers must be >= 1");
    if (static_cast<int>(axes.size()) != n_layers) throw InvalidArgument("one rotation axis per layer required");
    if (!std::isfinite(angle_scale) || angle_scale == 0.0) throw InvalidArgument("angle_scale must be finite and nonzero");
  }

  /// CZ pairs of one entangling wall. A ring on two qubits is a single CZ.
  std::vector<std::pair<int, int>> cz_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int j = 0; j + 1 < n_qubits; ++j) out.emplace_back(j, j + 1);
    if (entangler == Entangler::Ring && n_qubits > 2) out.emplace_back(n_qubits - 1, 0);
    return out;
  }

  friend bool operator==(const CircuitLayout&, const CircuitLayout&) = default;
};

inline void to_json(nlohmann::json& j, const CircuitLayout& c) {
  std::string axes;
  for (Axis a : c.axes) axes.push_back(axis_char(a));
  j = {{"N", c.n_qubits}, {"L", c.n_layers}, {"axes", axes},
       {"entangler", c.entangler == Entangler::Ring ? "ring" : "chain"}, {"angle_scale", c.angle_scale}};
}

inline void from_json(const nlohmann::json& j, CircuitLayout& c) {
  c.n_qubits = j.at("N").get<int>();
  c.n_layers = j.at("L").get<int>();
  const std::string axes = j.value("axes", std::string(static_cast<std::size_t>(std::max(c.n_layers, 0)), 'Y'));
  c.axes.clear();
  for (char a : axes) c.axes.push_back(axis_from_char(a));
  const std::string ent = j.value("entangler", "ring");
  if (ent != "ring" && ent != "chain") throw InvalidArgument("entangler must be ring or chain");
  c.entangler = ent == "ring" ? Entangler::Ring : Entangler::Chain;
  c.angle_scale = j.value("angle_scale", std::numbers::pi);
  c.validate();
}

/// Row-major real matrix, used for gradients and other unbounded grids.
struct RealGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  RealGrid() = default;
  RealGrid(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}
  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r * cols + c)]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
};

/// L x N grid of normalized rotation parameters in [-1, 1]; physical angle is
/// angle_scale * value. Writes clamp into range.
class ParamGrid {
 public:
  ParamGrid() = default;
  ParamGrid(int layers, int qubits)
      : layers_(layers), qubits_(qubits), values_(static_cast<std::size_t>(layers) * static_cast<std::size_t>(qubits), 0.0) {
    if (layers < 1 || qubits < 1) throw InvalidArgument("ParamGrid dimensions must be positive");
  }
  ParamGrid(int layers, int qubits, std::span<const double> values) : ParamGrid(layers, qubits) {
    if (values.size() != values_.size()) throw InvalidArgument("ParamGrid value count does not match shape");
    for (std::size_t i = 0; i < values.size(); ++i) set_flat(i, values[i]);
  }

  static ParamGrid zeros(const CircuitLayout& c) { return ParamGrid(c.n_layers, c.n_qubits); }

  static ParamGrid uniform(int layers, int qubits, Rng& rng) {
    ParamGrid g(layers, qubits);
    for (auto& v : g.values_) v = rng.uniform(-1.0, 1.0);
    return g;
  }

  int layers() const noexcept { return layers_; }
  int qubits() const noexcept { return qubits_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  double operator()(int l, int j) const { return values_[index(l, j)]; }
  void set(int l, int j, double v) { set_flat(index(l, j), v); }
  void set_flat(std::size_t i, double v) {
    if (!std::isfinite(v)) throw InvalidArgument("ParamGrid values must be finite");
    values_[i] = std::clamp(v, -1.0, 1.0);
  }

  bool matches(const CircuitLayout& c) const noexcept { return layers_ == c.n_layers && qubits_ == c.n_qubits; }

  friend bool operator==(const ParamGrid&, const ParamGrid&) = default;

 private:
  std::size_t index(int l, int j) const {
    if (l < 0 || l >= layers_ || j < 0 || j >= qubits_) throw InvalidArgument("ParamGrid index out of range");
    return static_cast<std::size_t>(l * qubits_ + j);
  }

  int layers_ = 0;
  int qubits_ = 0;
  std::vector<double> values_;
};

inline void to_json(nlohmann::json& j, const ParamGrid& g) {
  j = nlohmann::json::array();
  for (int l = 0; l < g.layers(); ++l) {
    auto row = nlohmann::json::array();
    for (int q = 0; q < g.qubits(); ++q) row.push_back(g(l, q));
    j.push_back(std::move(row));
  }
}

inline ParamGrid param_grid_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.at(0).is_array()) throw InvalidArgument("ParamGrid JSON must be an array of arrays");
  const int layers = static_cast<int>(j.size());
  const int qubits = static_cast<int>(j.at(0).size());
  std::vector<double> flat;
  for (const auto& row : j) {
    if (static_cast<int>(row.size()) != qubits) throw InvalidArgument("ragged ParamGrid rows");
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return ParamGrid(layers, qubits, flat);
}

/// Binary form: JSON header line {"L":..,"N":..} then row-major little-endian float32.
inline void write_param_grid_binary(std::ostream& out, const ParamGrid& g) {
  static_assert(std::endian::native == std::endian::little, "binary writer assumes a little-endian host");
  out << nlohmann::json{{"L", g.layers()}, {"N", g.qubits()}}.dump() << '\n';
  for (double v : g.values()) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
}

inline ParamGrid read_param_grid_binary(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("missing ParamGrid header", 1);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), 1);
  }
  const int layers = h.at("L").get<int>();
  const int qubits = h.at("N").get<int>();
  std::vector<double> flat(static_cast<std::size_t>(layers) * static_cast<std::size_t>(qubits));
  for (auto& v : flat) {
    float f = 0.0f;
    if (!in.read(reinterpret_cast<char*>(&f), sizeof f)) throw ParseError("truncated ParamGrid payload", 0);
    v = f;
  }
  return ParamGrid(layers, qubits, flat);
}

// ---------------------------------------------------------------------------
// State vectors

class StateVector {
 public:
  using Amplitude = std::complex<double>;

  explicit StateVector(int n_qubits) : n_(n_qubits), amps_(std::size_t{1} << n_qubits) { amps_[0] = 1.0; }
  StateVector(int n_qubits, std::vector<Amplitude> amps) : n_(n_qubits), amps_(std::move(amps)) {
    if (amps_.size() != (std::size_t{1} << n_qubits)) throw InvalidArgument("amplitude count must be 2^n");
  }

  int n_qubits() const noexcept { return n_; }
  std::span<const Amplitude> amplitudes() const noexcept { return amps_; }
  Amplitude operator[](std::size_t i) const { return amps_[i]; }

  double norm() const {
    double s = 0.0;
    for (const auto& a : amps_) s += std::norm(a);
    return std::sqrt(s);
  }

  /// exp(-i theta sigma / 2) on `qubit`.
  void apply_rotation(int qubit, Axis axis, double theta) {
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    const std::size_t stride = std::size_t{1} << (n_ - 1 - qubit);
    const std::size_t dim = amps_.size();
    switch (axis) {
      case Axis::Y:
        for (std::size_t base = 0; base < dim; base += 2 * stride) {
          for (std::size_t k = base; k < base + stride; ++k) {
            const Amplitude a0 = amps_[k];
            const Amplitude a1 = amps_[k + stride];
            amps_[k] = c * a0 - s * a1;
            amps_[k + stride] = s * a0 + c * a1;
          }
        }
        break;
      case Axis::X: {
        const Amplitude mis{0.0, -s};
        for (std::size_t base = 0; base < dim; base += 2 * stride) {
          for (std::size_t k = base; k < base + stride; ++k) {
            const Amplitude a0 = amps_[k];
            const Amplitude a1 = amps_[k + stride];
            amps_[k] = c * a0 + mis * a1;
            amps_[k + stride] = mis * a0 + c * a1;
          }
        }
        break;
      }
      case Axis::Z: {
        const Amplitude p0{c, -s};
        const Amplitude p1{c, s};
        for (std::size_t base = 0; base < dim; base += 2 * stride) {
          for (std::size_t k = base; k < base + stride; ++k) {
            amps_[k] *= p0;
            amps_[k + stride] *= p1;
          }
        }
        break;
      }
    }
  }

  void apply_cz(int a, int b) {
    const std::size_t mask = (std::size_t{1} << (n_ - 1 - a)) | (std::size_t{1} << (n_ - 1 - b));
    for (std::size_t k = 0; k < amps_.size(); ++k) {
      if ((k & mask) == mask) amps_[k] = -amps_[k];
    }
  }

 private:
  int n_;
  std::vector<Amplitude> amps_;
};

/// A PauliSum grouped by X-mask with per-basis-state phase tables, so that an
/// expectation costs one pass over the state per distinct X-mask.
class CompiledObservable {
 public:
  explicit CompiledObservable(const PauliSum& h) : n_(h.n_qubits()) {
    const std::size_t dim = std::size_t{1} << n_;
    std::map<std::uint64_t, std::vector<std::complex<double>>> groups;
    for (const auto& t : h.terms()) {
      auto& table = groups[t.string.x_mask()];
      if (table.empty()) table.assign(dim, 0.0);
      const auto zm = t.string.z_mask();
      const int ny = t.string.y_count();
      for (std::size_t b = 0; b < dim; ++b) table[b] += t.coeff * pauli_phase(b, zm, ny);
    }
    for (auto& [xm, table] : groups) groups_.push_back({xm, std::move(table)});
  }

  int n_qubits() const noexcept { return n_; }

  /// <psi|H|psi>; the imaginary residue must be below 1e-10.
  double expectation(const StateVector& psi) const {
    if (psi.n_qubits() != n_) throw InvalidArgument("state and Hamiltonian qubit counts differ");
    const auto amps = psi.amplitudes();
    std::complex<double> total = 0.0;
    for (const auto& g : groups_) {
      std::complex<double> acc = 0.0;
      for (std::size_t b = 0; b < amps.size(); ++b) acc += std::conj(amps[b ^ g.x_mask]) * g.phase[b] * amps[b];
      total += acc;
    }
    if (std::abs(total.imag()) > 1e-10) throw InvalidArgument("expectation has a non-negligible imaginary part");
    return total.real();
  }

 private:
  struct Group {
    std::uint64_t x_mask;
    std::vector<std::complex<double>> phase;
  };
  int n_;
  std::vector<Group> groups_;
};

namespace detail {

inline void check_shape(const CircuitLayout& layout, const ParamGrid& params) {
  layout.validate();
  if (!params.matches(layout)) {
    throw InvalidArgument("ParamGrid shape " + std::to_string(params.layers()) + "x" + std::to_string(params.qubits()) +
                          " does not match layout " + std::to_string(layout.n_layers) + "x" + std::to_string(layout.n_qubits));
  }
}

inline void apply_layer(StateVector& psi, const CircuitLayout& layout, int l, std::span<const double> angles) {
  const Axis axis = layout.axes[static_cast<std::size_t>(l)];
  for (int j = 0; j < layout.n_qubits; ++j) psi.apply_rotation(j, axis, angles[static_cast<std::size_t>(l * layout.n_qubits + j)]);
  for (auto [a, b] : layout.cz_pairs()) psi.apply_cz(a, b);
}

inline std::vector<double> physical_angles(const CircuitLayout& layout, const ParamGrid& params) {
  std::vector<double> angles(params.values().begin(), params.values().end());
  for (auto& a : angles) a *= layout.angle_scale;
  return angles;
}

inline StateVector run_layers(StateVector psi, const CircuitLayout& layout, std::span<const double> angles, int from_layer) {
  for (int l = from_layer; l < layout.n_layers; ++l) apply_layer(psi, layout, l, angles);
  return psi;
}

}  // namespace detail

/// |psi> = prod_l W_l R_l |0...0>, rotations first within each layer.
inline StateVector prepare_hea_state(const CircuitLayout& layout, const ParamGrid& params) {
  detail::check_shape(layout, params);
  return detail::run_layers(StateVector(layout.n_qubits), layout, detail::physical_angles(layout, params), 0);
}

inline double expectation(const StateVector& psi, const PauliSum& h) {
  if (psi.n_qubits() != h.n_qubits()) throw InvalidArgument("state and Hamiltonian qubit counts differ");
  return CompiledObservable(h).expectation(psi);
}

inline double energy(const CircuitLayout& layout, const ParamGrid& params, const CompiledObservable& obs) {
  if (obs.n_qubits() != layout.n_qubits) throw InvalidArgument("layout and Hamiltonian qubit counts differ");
  return obs.expectation(prepare_hea_state(layout, params));
}

inline double energy(const CircuitLayout& layout, const ParamGrid& params, const PauliSum& h) {
  return energy(layout, params, CompiledObservable(h));
}

/// dE/dvalue for every grid entry by the two-point shift rule on the physical
/// angle (shift pi/2), scaled by angle_scale. Shifted angles are not clamped.
inline RealGrid gradient_parameter_shift(const CircuitLayout& layout, const ParamGrid& params, const CompiledObservable& obs) {
  detail::check_shape(layout, params);
  if (obs.n_qubits() != layout.n_qubits) throw InvalidArgument("layout and Hamiltonian qubit counts differ");
  std::vector<double> angles = detail::physical_angles(layout, params);
  RealGrid grad(layout.n_layers, layout.n_qubits);
  StateVector prefix(layout.n_qubits);  // state entering layer l
  constexpr double kShift = std::numbers::pi / 2.0;
  for (int l = 0; l < layout.n_layers; ++l) {
    for (int j = 0; j < layout.n_qubits; ++j) {
      const auto idx = static_cast<std::size_t>(l * layout.n_qubits + j);
      const double saved = angles[idx];
      angles[idx] = saved + kShift;
      const double plus = obs.expectation(detail::run_layers(prefix, layout, angles, l));
      angles[idx] = saved - kShift;
      const double minus = obs.expectation(detail::run_layers(prefix, layout, angles, l));
      angles[idx] = saved;
      grad(l, j) = 0.5 * (plus - minus) * layout.angle_scale;
    }
    detail::apply_layer(prefix, layout, l, angles);
  }
  return grad;
}

/// Shift-rule partial derivative with respect to a single entry (layer, qubit).
inline double partial_parameter_shift(const CircuitLayout& layout, const ParamGrid& params, const CompiledObservable& obs,
                                      int layer, int qubit) {
  detail::check_shape(layout, params);
  if (layer < 0 || layer >= layout.n_layers || qubit < 0 || qubit >= layout.n_qubits) {
    throw InvalidArgument("target parameter (" + std::to_string(layer) + ", " + std::to_string(qubit) + ") out of range");
  }
  std::vector<double> angles = detail::physical_angles(layout, params);
  StateVector prefix = detail::run_layers(StateVector(layout.n_qubits), [&] {
    CircuitLayout head = layout;
    head.n_layers = layer;
    return head;
  }(), angles, 0);
  const auto idx = static_cast<std::size_t>(layer * layout.n_qubits + qubit);
  const double saved = angles[idx];
  angles[idx] = saved + std::numbers::pi / 2.0;
  const double plus = obs.expectation(detail::run_layers(prefix, layout, angles, layer));
  angles[idx] = saved - std::numbers::pi / 2.0;
  const double minus = obs.expectation(detail::run_layers(prefix, layout, angles, layer));
  return 0.5 * (plus - minus) * layout.angle_scale;
}

inline RealGrid gradient_parameter_shift(const CircuitLayout& layout, const ParamGrid& params, const PauliSum& h) {
  return gradient_parameter_shift(layout, params, CompiledObservable(h));
}

}  // namespace dmvqe
