// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference constructions used only by tests. Nothing here goes
// through the library's Pauli-mask machinery.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXcd;

inline Mat pauli(char p) {
  Mat m(2, 2);
  const std::complex<double> i{0, 1};
  switch (p) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -i, i, 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: m << 1, 0, 0, 1; break;
  }
  return m;
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

/// Single-site operator `op` (2x2) on `site` of an n-site register; site 0 is
/// the leftmost factor.
inline Mat embed(const Mat& op, int site, int n) {
  Mat out = Mat::Identity(1, 1);
  for (int q = 0; q < n; ++q) out = kron(out, q == site ? op : Mat(Mat::Identity(2, 2)));
  return out;
}

inline Mat pauli_string(const std::string& s) {
  Mat out = Mat::Identity(1, 1);
  for (char c : s) out = kron(out, pauli(c));
  return out;
}

inline Mat spin(char axis, int site, int n) { return embed(0.5 * pauli(axis), site, n); }

inline Mat heisenberg(int n, double J, double h, bool periodic) {
  const auto dim = Eigen::Index{1} << n;
  Mat H = Mat::Zero(dim, dim);
  const int bonds = periodic ? n : n - 1;
  for (int j = 0; j < bonds; ++j) {
    const int k = (j + 1) % n;
    for (char a : {'X', 'Y', 'Z'}) H += J * spin(a, j, n) * spin(a, k, n);
  }
  for (int j = 0; j < n; ++j) H += h * spin('Z', j, n);
  return H;
}

inline Mat ising(int n, double J, double h, bool periodic) {
  const auto dim = Eigen::Index{1} << n;
  Mat H = Mat::Zero(dim, dim);
  const int bonds = periodic ? n : n - 1;
  for (int j = 0; j < bonds; ++j) H += J * spin('Z', j, n) * spin('Z', (j + 1) % n, n);
  for (int j = 0; j < n; ++j) H += h * spin('Z', j, n);
  return H;
}

/// Annihilation operator on `mode` in the occupation basis: bit (n-1-mode) of a
/// basis index is the occupation of that mode, and c_k picks up
/// (-1)^(number of occupied modes with index < k).
inline Mat annihilate(int mode, int n_modes) {
  const auto dim = Eigen::Index{1} << n_modes;
  Mat c = Mat::Zero(dim, dim);
  for (Eigen::Index b = 0; b < dim; ++b) {
    const auto bit = Eigen::Index{1} << (n_modes - 1 - mode);
    if (!(b & bit)) continue;
    int parity = 0;
    for (int j = 0; j < mode; ++j) parity += (b >> (n_modes - 1 - j)) & 1;
    c(b ^ bit, b) = (parity % 2) ? -1.0 : 1.0;
  }
  return c;
}

inline Mat hubbard(int sites, double T, double U) {
  const int n = 2 * sites;
  const auto dim = Eigen::Index{1} << n;
  Mat H = Mat::Zero(dim, dim);
  for (int i = 0; i + 1 < sites; ++i) {
    for (int s = 0; s < 2; ++s) {
      const Mat ci = annihilate(2 * i + s, n);
      const Mat cj = annihilate(2 * (i + 1) + s, n);
      H += -T * (ci.adjoint() * cj + cj.adjoint() * ci);
    }
  }
  for (int i = 0; i < sites; ++i) {
    const Mat nu = annihilate(2 * i, n).adjoint() * annihilate(2 * i, n);
    const Mat nd = annihilate(2 * i + 1, n).adjoint() * annihilate(2 * i + 1, n);
    H += U * nu * nd;
  }
  return H;
}

inline double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// Dense rotation exp(-i theta sigma/2).
inline Mat rotation(char axis, double theta) {
  return std::cos(theta / 2) * Mat(Mat::Identity(2, 2)) - std::complex<double>(0, 1) * std::sin(theta / 2) * pauli(axis);
}

inline Mat cz(int a, int b, int n) {
  const auto dim = Eigen::Index{1} << n;
  Mat m = Mat::Identity(dim, dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (((k >> (n - 1 - a)) & 1) && ((k >> (n - 1 - b)) & 1)) m(k, k) = -1.0;
  }
  return m;
}

}  // namespace oracle
