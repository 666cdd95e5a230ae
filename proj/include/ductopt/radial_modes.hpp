#pragma once

#include <Eigen/Dense>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ductopt/geometry.hpp"

namespace ductopt {

enum class Side { left, right };

inline const std::vector<int>& boundary_nodes(const Mesh& mesh, Side side) {
  return side == Side::left ? mesh.gamma_left_nodes : mesh.gamma_right_nodes;
}

// Discrete duct modes on one truncation boundary: generalized eigenpairs of
// the r-weighted 1D quadratic-element stiffness/mass pair on the boundary
// trace. Mode vectors are stored trace-local (one value per boundary node,
// increasing r) and are M-orthonormal.
struct ModeBasis {
  Side side = Side::left;
  std::vector<int> nodes;        // global node ids, increasing r
  Eigen::VectorXd eigenvalues;   // ascending, lambda_0 = 0
  Eigen::MatrixXd mode_vectors;  // n_b x M, column m = trace of mode m
  Eigen::MatrixXd boundary_mass; // n_b x n_b
  double radius = 0;

  int n_modes() const { return static_cast<int>(eigenvalues.size()); }

  // Embeds mode m into a full-length vector (zero off the boundary).
  Eigen::VectorXd full_mode(int n_dof, int m) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_dof);
    for (size_t i = 0; i < nodes.size(); ++i) v[nodes[i]] = mode_vectors(i, m);
    return v;
  }
};

namespace detail {

// 3-point Gauss-Legendre on [-1, 1]; exact through degree 5, which covers
// the r-weighted quadratic mass integrand.
inline constexpr double kGauss3Pts[3] = {-0.7745966692414834, 0.0,
                                         0.7745966692414834};
inline constexpr double kGauss3Wts[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

inline void quadratic_shape_1d(double xi, double N[3], double dN[3]) {
  N[0] = 0.5 * xi * (xi - 1.0);
  N[1] = 1.0 - xi * xi;
  N[2] = 0.5 * xi * (xi + 1.0);
  dN[0] = xi - 0.5;
  dN[1] = -2.0 * xi;
  dN[2] = xi + 0.5;
}

}  // namespace detail

// 1D stiffness/mass with weight r on the boundary trace grid. Neumann ends
// are natural; no constraint rows.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_radial_matrices(
    const Mesh& mesh, Side side) {
  const auto& nodes = boundary_nodes(mesh, side);
  if (nodes.empty()) throw std::invalid_argument("empty boundary node set");
  const int n = static_cast<int>(nodes.size());
  const int n_elem = (n - 1) / 2;
  const double h = mesh.spec.h;

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int e = 0; e < n_elem; ++e) {
    const double r0 = e * h;
    for (int q = 0; q < 3; ++q) {
      double N[3], dN[3];
      detail::quadratic_shape_1d(detail::kGauss3Pts[q], N, dN);
      const double r = r0 + 0.5 * h * (detail::kGauss3Pts[q] + 1.0);
      const double w = detail::kGauss3Wts[q];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          K(2 * e + i, 2 * e + j) += w * r * dN[i] * dN[j] * 2.0 / h;
          M(2 * e + i, 2 * e + j) += w * r * N[i] * N[j] * 0.5 * h;
        }
    }
  }
  return {K, M};
}

inline ModeBasis solve_modes(const Eigen::MatrixXd& K_r,
                             const Eigen::MatrixXd& M_r, const Mesh& mesh,
                             Side side) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K_r, M_r);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("radial eigensolve failed for boundary of size " +
                             std::to_string(K_r.rows()));
  ModeBasis basis;
  basis.side = side;
  basis.nodes = boundary_nodes(mesh, side);
  basis.radius = side == Side::left ? mesh.spec.r_left : mesh.spec.r_right;
  basis.eigenvalues = eig.eigenvalues().cwiseMax(0.0);  // clip round-off
  basis.mode_vectors = eig.eigenvectors();              // M-orthonormal
  basis.boundary_mass = M_r;
  // Sign convention: the entry at r = 0 (or the first non-negligible entry)
  // is positive.
  for (int m = 0; m < basis.n_modes(); ++m) {
    auto col = basis.mode_vectors.col(m);
    const double scale = col.cwiseAbs().maxCoeff();
    for (int i = 0; i < col.size(); ++i) {
      if (std::abs(col[i]) > 1e-12 * scale) {
        if (col[i] < 0) basis.mode_vectors.col(m) = -col;
        break;
      }
    }
  }
  return basis;
}

inline ModeBasis build_mode_basis(const Mesh& mesh, Side side) {
  auto [K, M] = assemble_radial_matrices(mesh, side);
  return solve_modes(K, M, mesh, side);
}

struct ReducedWavenumber {
  std::complex<double> value;  // axial wavenumber, 1/m
  bool propagating = false;
};

// k_m^2 = k^2 - lambda_m; evanescent branch takes Im(k_m) > 0 so the mode
// decays away from the boundary.
inline ReducedWavenumber reduced_wavenumber(double k, double lambda) {
  ReducedWavenumber out;
  if (lambda <= k * k) {
    out.value = std::sqrt(k * k - lambda);
    out.propagating = true;
  } else {
    out.value = std::complex<double>(0.0, std::sqrt(lambda - k * k));
    out.propagating = false;
  }
  return out;
}

inline double wavenumber(double f_hz, double c) {
  return 2.0 * std::numbers::pi * f_hz / c;
}

inline int count_propagating(double f_hz, const ModeBasis& basis, double c) {
  const double k2 = wavenumber(f_hz, c) * wavenumber(f_hz, c);
  int count = 0;
  for (int m = 0; m < basis.n_modes(); ++m)
    if (basis.eigenvalues[m] <= k2) ++count;
  return count;
}

}  // namespace ductopt
