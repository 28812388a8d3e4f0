// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmvqe/error.hpp"

namespace dmvqe {

/// Tensor product of single-qubit Paulis, one character per qubit from
/// {I, X, Y, Z}. Character q acts on qubit q; qubit 0 is the leftmost
/// Kronecker factor (most significant bit of a basis index).
class PauliString {
 public:
  PauliString() = default;
  explicit PauliString(std::string ops) : ops_(std::move(ops)) {
    for (char c : ops_) {
      if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z') {
        throw InvalidSpec("invalid Pauli character '" + std::string(1, c) + "' in \"" + ops_ + "\"");
      }
    }
  }

  static PauliString identity(int n) { return PauliString(std::string(static_cast<std::size_t>(n), 'I')); }

  /// String with `ops` placed on `qubits`, identity elsewhere.
  static PauliString on(int n, std::initializer_list<std::pair<int, char>> ops) {
    std::string s(static_cast<std::size_t>(n), 'I');
    for (auto [q, c] : ops) {
      if (q < 0 || q >= n) throw InvalidSpec("qubit index out of range");
      s[static_cast<std::size_t>(q)] = c;
    }
    return PauliString(std::move(s));
  }

  int size() const noexcept { return static_cast<int>(ops_.size()); }
  char operator[](int q) const { return ops_[static_cast<std::size_t>(q)]; }
  const std::string& str() const noexcept { return ops_; }
  bool is_identity() const noexcept { return ops_.find_first_not_of('I') == std::string::npos; }

  // Bit (n-1-q) of each mask refers to qubit q.
  std::uint64_t x_mask() const noexcept { return mask_of('X', 'Y'); }
  std::uint64_t z_mask() const noexcept { return mask_of('Z', 'Y'); }
  int y_count() const noexcept { return static_cast<int>(std::count(ops_.begin(), ops_.end(), 'Y')); }

  friend auto operator<=>(const PauliString&, const PauliString&) = default;

 private:
  std::uint64_t mask_of(char a, char b) const noexcept {
    std::uint64_t m = 0;
    const int n = size();
    for (int q = 0; q < n; ++q) {
      const char c = ops_[static_cast<std::size_t>(q)];
      if (c == a || c == b) m |= std::uint64_t{1} << (n - 1 - q);
    }
    return m;
  }

  std::string ops_;
};

struct PauliTerm {
  double coeff = 0.0;
  PauliString string;

  friend bool operator==(const PauliTerm&, const PauliTerm&) = default;
};

/// Real-weighted sum of Pauli strings in canonical form: duplicates merged,
/// zero terms dropped, terms sorted lexicographically by string.
class PauliSum {
 public:
  /// Coefficients whose magnitude falls below this after merging are dropped.
  static constexpr double kDropTolerance = 1e-14;

  PauliSum() = default;
  explicit PauliSum(int n_qubits) : n_(n_qubits) {
    if (n_qubits < 1) throw InvalidSpec("PauliSum needs at least one qubit");
  }
  PauliSum(int n_qubits, std::span<const PauliTerm> terms) : PauliSum(n_qubits) {
    std::map<std::string, double> merged;
    for (const auto& t : terms) {
      if (t.string.size() != n_) {
        throw InvalidSpec("term \"" + t.string.str() + "\" does not have " + std::to_string(n_) + " qubits");
      }
      if (!std::isfinite(t.coeff)) throw InvalidSpec("non-finite coefficient");
      merged[t.string.str()] += t.coeff;
    }
    for (auto& [s, c] : merged) {
      if (std::abs(c) > kDropTolerance) terms_.push_back({c, PauliString(s)});
    }
  }
  PauliSum(int n_qubits, std::initializer_list<PauliTerm> terms)
      : PauliSum(n_qubits, std::span<const PauliTerm>(terms.begin(), terms.size())) {}

  int n_qubits() const noexcept { return n_; }
  const std::vector<PauliTerm>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  friend bool operator==(const PauliSum&, const PauliSum&) = default;

 private:
  int n_ = 0;
  std::vector<PauliTerm> terms_;
};

inline void to_json(nlohmann::json& j, const PauliSum& h) {
  auto terms = nlohmann::json::array();
  for (const auto& t : h.terms()) terms.push_back(nlohmann::json::array({t.coeff, t.string.str()}));
  j = {{"n", h.n_qubits()}, {"terms", terms}};
}

inline PauliSum pauli_sum_from_json(const nlohmann::json& j) {
  std::vector<PauliTerm> terms;
  for (const auto& t : j.at("terms")) terms.push_back({t.at(0).get<double>(), PauliString(t.at(1).get<std::string>())});
  return PauliSum(j.at("n").get<int>(), terms);
}

// ---------------------------------------------------------------------------
// Hamiltonian families

enum class Family { Heisenberg, Ising, Hubbard };
enum class Boundary { Periodic, Open };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Heisenberg: return "heisenberg";
    case Family::Ising: return "ising";
    case Family::Hubbard: return "hubbard";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  if (s == "heisenberg") return Family::Heisenberg;
  if (s == "ising") return Family::Ising;
  if (s == "hubbard") return Family::Hubbard;
  throw InvalidSpec("unknown Hamiltonian family \"" + std::string(s) + "\"");
}

inline std::string to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "open"; }

inline Boundary boundary_from_string(std::string_view s) {
  if (s == "periodic") return Boundary::Periodic;
  if (s == "open") return Boundary::Open;
  throw InvalidSpec("unknown boundary \"" + std::string(s) + "\"");
}

/// Parameters of one model instance. Spin models use `coupling` (J) and
/// `field` (h); Hubbard uses `hopping` (T) and `repulsion` (U) on
/// n_qubits / 2 sites.
struct HamiltonianSpec {
  Family family = Family::Heisenberg;
  int n_qubits = 2;
  double coupling = 0.0;
  double field = 0.0;
  double hopping = 0.0;
  double repulsion = 0.0;
  Boundary boundary = Boundary::Periodic;

  static HamiltonianSpec heisenberg(int n, double J, double h, Boundary b = Boundary::Periodic) {
    return {Family::Heisenberg, n, J, h, 0.0, 0.0, b};
  }
  static HamiltonianSpec ising(int n, double J, double h, Boundary b = Boundary::Periodic) {
    return {Family::Ising, n, J, h, 0.0, 0.0, b};
  }
  static HamiltonianSpec hubbard(int sites, double T, double U) {
    return {Family::Hubbard, 2 * sites, 0.0, 0.0, T, U, Boundary::Open};
  }

  void validate() const {
    if (n_qubits < 1) throw InvalidSpec("n_qubits must be positive");
    for (double v : {coupling, field, hopping, repulsion}) {
      if (!std::isfinite(v)) throw InvalidSpec("non-finite Hamiltonian parameter");
    }
    if (family == Family::Hubbard && n_qubits % 2 != 0) {
      throw InvalidSpec("Hubbard model needs an even qubit count (two spin orbitals per site)");
    }
  }

  friend bool operator==(const HamiltonianSpec&, const HamiltonianSpec&) = default;
};

inline void to_json(nlohmann::json& j, const HamiltonianSpec& s) {
  j = {{"family", to_string(s.family)}, {"n", s.n_qubits}, {"boundary", to_string(s.boundary)}};
  if (s.family == Family::Hubbard) {
    j["T"] = s.hopping;
    j["U"] = s.repulsion;
  } else {
    j["J"] = s.coupling;
    j["h"] = s.field;
  }
}

inline void from_json(const nlohmann::json& j, HamiltonianSpec& s) {
  s = HamiltonianSpec{};
  s.family = family_from_string(j.at("family").get<std::string>());
  s.n_qubits = j.at("n").get<int>();
  s.boundary = boundary_from_string(j.value("boundary", s.family == Family::Hubbard ? "open" : "periodic"));
  s.coupling = j.value("J", 0.0);
  s.field = j.value("h", 0.0);
  s.hopping = j.value("T", 0.0);
  s.repulsion = j.value("U", 0.0);
  s.validate();
}

namespace detail {

// Nearest-neighbour bonds of a 1-D chain. A periodic chain closes j=N-1 to 0,
// so N=2 periodic carries the (0,1) bond twice.
inline std::vector<std::pair<int, int>> chain_bonds(int n, Boundary b) {
  std::vector<std::pair<int, int>> bonds;
  for (int j = 0; j + 1 < n; ++j) bonds.emplace_back(j, j + 1);
  if (b == Boundary::Periodic && n >= 2) bonds.emplace_back(n - 1, 0);
  return bonds;
}

}  // namespace detail

/// J * sum_j (SxSx + SySy + SzSz)_{j,j+1} + h * sum_j Sz_j with S = sigma/2.
inline PauliSum build_heisenberg(int n, double J, double h, Boundary boundary = Boundary::Periodic) {
  if (n < 2) throw InvalidSpec("Heisenberg chain needs n >= 2");
  std::vector<PauliTerm> terms;
  for (auto [a, b] : detail::chain_bonds(n, boundary)) {
    for (char p : {'X', 'Y', 'Z'}) terms.push_back({J / 4.0, PauliString::on(n, {{a, p}, {b, p}})});
  }
  for (int j = 0; j < n; ++j) terms.push_back({h / 2.0, PauliString::on(n, {{j, 'Z'}})});
  return PauliSum(n, terms);
}

/// J * sum_<i,j> Sz_i Sz_j + h * sum_i Sz_i with S = sigma/2.
inline PauliSum build_ising(int n, double J, double h, Boundary boundary = Boundary::Periodic) {
  if (n < 2) throw InvalidSpec("Ising chain needs n >= 2");
  std::vector<PauliTerm> terms;
  for (auto [a, b] : detail::chain_bonds(n, boundary)) terms.push_back({J / 4.0, PauliString::on(n, {{a, 'Z'}, {b, 'Z'}})});
  for (int j = 0; j < n; ++j) terms.push_back({h / 2.0, PauliString::on(n, {{j, 'Z'}})});
  return PauliSum(n, terms);
}

// ---------------------------------------------------------------------------
// Fermions

/// One creation (`creation == true`) or annihilation operator on `mode`.
struct LadderOp {
  int mode = 0;
  bool creation = false;
};

/// coeff * ops[0] ops[1] ... (leftmost operator applied last).
struct FermionTerm {
  std::complex<double> coeff{1.0, 0.0};
  std::vector<LadderOp> ops;
};

namespace detail {

using ComplexTerms = std::map<std::string, std::complex<double>>;

// Single-qubit product a*b = phase * result.
inline std::pair<std::complex<double>, char> pauli_product(char a, char b) {
  using C = std::complex<double>;
  if (a == 'I') return {C{1, 0}, b};
  if (b == 'I') return {C{1, 0}, a};
  if (a == b) return {C{1, 0}, 'I'};
  const C i{0, 1};
  if (a == 'X' && b == 'Y') return {i, 'Z'};
  if (a == 'Y' && b == 'Z') return {i, 'X'};
  if (a == 'Z' && b == 'X') return {i, 'Y'};
  if (a == 'Y' && b == 'X') return {-i, 'Z'};
  if (a == 'Z' && b == 'Y') return {-i, 'X'};
  return {-i, 'Y'};  // X*Z
}

inline ComplexTerms multiply(const ComplexTerms& lhs, const ComplexTerms& rhs) {
  ComplexTerms out;
  for (const auto& [sa, ca] : lhs) {
    for (const auto& [sb, cb] : rhs) {
      std::string s(sa.size(), 'I');
      std::complex<double> phase{1, 0};
      for (std::size_t q = 0; q < sa.size(); ++q) {
        auto [p, c] = pauli_product(sa[q], sb[q]);
        phase *= p;
        s[q] = c;
      }
      out[s] += ca * cb * phase;
    }
  }
  return out;
}

// c_k = Z_0..Z_{k-1} (X_k + iY_k)/2, c_k^dag = Z_0..Z_{k-1} (X_k - iY_k)/2.
inline ComplexTerms ladder_image(const LadderOp& op, int n_modes) {
  std::string sx(static_cast<std::size_t>(n_modes), 'I');
  for (int q = 0; q < op.mode; ++q) sx[static_cast<std::size_t>(q)] = 'Z';
  std::string sy = sx;
  sx[static_cast<std::size_t>(op.mode)] = 'X';
  sy[static_cast<std::size_t>(op.mode)] = 'Y';
  const double sign = op.creation ? -1.0 : 1.0;
  return {{sx, {0.5, 0.0}}, {sy, {0.0, 0.5 * sign}}};
}

}  // namespace detail

/// Jordan-Wigner image of a fermionic operator. The result must be Hermitian
/// (imaginary coefficients cancel); otherwise InvalidSpec is thrown.
inline PauliSum jordan_wigner(std::span<const FermionTerm> op, int n_modes) {
  if (n_modes < 1) throw InvalidSpec("n_modes must be positive");
  detail::ComplexTerms total;
  for (const auto& term : op) {
    detail::ComplexTerms acc{{std::string(static_cast<std::size_t>(n_modes), 'I'), term.coeff}};
    for (const auto& ladder : term.ops) {
      if (ladder.mode < 0 || ladder.mode >= n_modes) {
        throw InvalidSpec("fermionic mode " + std::to_string(ladder.mode) + " out of range [0, " +
                          std::to_string(n_modes) + ")");
      }
      acc = detail::multiply(acc, detail::ladder_image(ladder, n_modes));
    }
    for (const auto& [s, c] : acc) total[s] += c;
  }
  std::vector<PauliTerm> terms;
  for (const auto& [s, c] : total) {
    if (std::abs(c.imag()) > 1e-12) throw InvalidSpec("fermionic operator is not Hermitian");
    terms.push_back({c.real(), PauliString(s)});
  }
  return PauliSum(n_modes, terms);
}

inline PauliSum jordan_wigner(std::initializer_list<FermionTerm> op, int n_modes) {
  return jordan_wigner(std::span<const FermionTerm>(op.begin(), op.size()), n_modes);
}

/// Mode index of (site, spin) with spin 0 = up, 1 = down.
constexpr int hubbard_mode(int site, int spin) noexcept { return 2 * site + spin; }

/// Fermionic 1-D open-chain Hubbard Hamiltonian
/// -T sum_<ij>,s (c+_is c_js + h.c.) + U sum_i n_iu n_id.
inline std::vector<FermionTerm> hubbard_fermion_terms(int sites, double T, double U) {
  if (sites < 1) throw InvalidSpec("Hubbard model needs at least one site");
  std::vector<FermionTerm> op;
  for (int i = 0; i + 1 < sites; ++i) {
    for (int s = 0; s < 2; ++s) {
      const int a = hubbard_mode(i, s);
      const int b = hubbard_mode(i + 1, s);
      op.push_back({{-T, 0.0}, {{a, true}, {b, false}}});
      op.push_back({{-T, 0.0}, {{b, true}, {a, false}}});
    }
  }
  for (int i = 0; i < sites; ++i) {
    const int up = hubbard_mode(i, 0);
    const int dn = hubbard_mode(i, 1);
    op.push_back({{U, 0.0}, {{up, true}, {up, false}, {dn, true}, {dn, false}}});
  }
  return op;
}

inline PauliSum build_hubbard(int sites, double T, double U) {
  const auto op = hubbard_fermion_terms(sites, T, U);
  return jordan_wigner(op, 2 * sites);
}

inline PauliSum build_hamiltonian(const HamiltonianSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case Family::Heisenberg: return build_heisenberg(spec.n_qubits, spec.coupling, spec.field, spec.boundary);
    case Family::Ising: return build_ising(spec.n_qubits, spec.coupling, spec.field, spec.boundary);
    case Family::Hubbard: return build_hubbard(spec.n_qubits / 2, spec.hopping, spec.repulsion);
  }
  throw InvalidSpec("unknown family");
}

// ---------------------------------------------------------------------------
// Dense matrices and exact ground energies

/// Phase of P|b> = phase * |b ^ x_mask>, i.e. i^{#Y} (-1)^{popcount(b & z_mask)}.
inline std::complex<double> pauli_phase(std::uint64_t b, std::uint64_t z_mask, int y_count) {
  static constexpr std::complex<double> kIPow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const std::complex<double> base = kIPow[y_count & 3];
  return (std::popcount(b & z_mask) & 1) ? -base : base;
}

inline Eigen::MatrixXcd dense_matrix(const PauliSum& h) {
  const std::uint64_t dim = std::uint64_t{1} << h.n_qubits();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (const auto& t : h.terms()) {
    const auto xm = t.string.x_mask();
    const auto zm = t.string.z_mask();
    const int ny = t.string.y_count();
    for (std::uint64_t b = 0; b < dim; ++b) {
      m(static_cast<Eigen::Index>(b ^ xm), static_cast<Eigen::Index>(b)) += t.coeff * pauli_phase(b, zm, ny);
    }
  }
  return m;
}

/// Lowest eigenvalue of the dense Hamiltonian matrix.
inline double exact_ground_energy(const PauliSum& h, int max_qubits = 12) {
  if (h.empty()) return 0.0;
  if (h.n_qubits() > max_qubits) {
    throw ResourceLimit("exact diagonalization of " + std::to_string(h.n_qubits()) +
                        " qubits exceeds the cap of " + std::to_string(max_qubits));
  }
  const Eigen::MatrixXcd m = dense_matrix(h);
  if (m.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.real(), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Prompts

/// Coefficient rendered with four decimals and no exponent; "-0.0000" is
/// normalized to "0.0000".
inline std::string format_coefficient(double c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", c);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

/// One "<coefficient> <pauli string>" token per term, in canonical term order.
inline std::vector<std::string> to_prompts(const PauliSum& h) {
  std::vector<std::string> out;
  out.reserve(h.terms().size());
  for (const auto& t : h.terms()) out.push_back(format_coefficient(t.coeff) + " " + t.string.str());
  return out;
}

}  // namespace dmvqe
