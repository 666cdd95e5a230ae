#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace ductopt;

namespace {
// First zeros of the Bessel function J1; the radial eigenvalues of a
// sound-hard disc of radius W satisfy sqrt(lambda_m) = j_{1,m} / W.
constexpr double kJ1Zeros[] = {3.8317059702075123, 7.015586669815619,
                               10.173468135062722, 13.323691936314223};
}  // namespace

TEST_CASE("radial matrices: mass integrates r, stiffness kills constants") {
  const auto& fx = testutil::desk();
  for (Side side : {Side::left, Side::right}) {
    auto [K, M] = assemble_radial_matrices(fx.mesh, side);
    const double W = side == Side::left ? fx.spec.r_left : fx.spec.r_right;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(M.rows());
    // 1^T M 1 = integral of r over [0, W]
    CHECK(ones.dot(M * ones) == Catch::Approx(W * W / 2).epsilon(1e-12));
    CHECK((K * ones).cwiseAbs().maxCoeff() < 1e-9 * K.cwiseAbs().maxCoeff());
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("eigenvalues match the Bessel oracle within 1 percent") {
  const auto& fx = testutil::desk();
  for (Side side : {Side::left, Side::right}) {
    const ModeBasis basis = build_mode_basis(fx.mesh, side);
    const double W = basis.radius;
    CHECK(basis.eigenvalues[0] < 1e-9 * basis.eigenvalues[1]);
    for (int m = 1; m <= 4; ++m) {
      const double oracle = kJ1Zeros[m - 1] / W;
      CHECK(std::sqrt(basis.eigenvalues[m]) ==
            Catch::Approx(oracle).epsilon(0.01));
    }
    // ascending
    for (int m = 1; m < basis.n_modes(); ++m)
      CHECK(basis.eigenvalues[m] >= basis.eigenvalues[m - 1]);
  }
}

TEST_CASE("modes are M-orthonormal with positive leading entry") {
  const auto& fx = testutil::desk();
  const ModeBasis basis = build_mode_basis(fx.mesh, Side::left);
  const Eigen::MatrixXd gram =
      basis.mode_vectors.transpose() * basis.boundary_mass * basis.mode_vectors;
  const Eigen::MatrixXd I =
      Eigen::MatrixXd::Identity(basis.n_modes(), basis.n_modes());
  CHECK((gram - I).cwiseAbs().maxCoeff() < 1e-10);
  for (int m = 0; m < basis.n_modes(); ++m) {
    const auto col = basis.mode_vectors.col(m);
    const double scale = col.cwiseAbs().maxCoeff();
    for (int i = 0; i < col.size(); ++i)
      if (std::abs(col[i]) > 1e-12 * scale) {
        CHECK(col[i] > 0);
        break;
      }
  }
}

TEST_CASE("planar mode is constant with value sqrt(2)/W") {
  const auto& fx = testutil::desk();
  const ModeBasis basis = build_mode_basis(fx.mesh, Side::right);
  const double expected = std::sqrt(2.0) / basis.radius;
  for (int i = 0; i < basis.mode_vectors.rows(); ++i)
    CHECK(basis.mode_vectors(i, 0) == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("reduced wavenumber branches") {
  const double k = wavenumber(10000, 343);
  const auto prop = reduced_wavenumber(k, 0.0);
  CHECK(prop.propagating);
  CHECK(prop.value.real() == Catch::Approx(k));
  CHECK(prop.value.imag() == 0.0);
  const auto evan = reduced_wavenumber(k, 4 * k * k);
  CHECK_FALSE(evan.propagating);
  CHECK(evan.value.real() == 0.0);
  CHECK(evan.value.imag() == Catch::Approx(std::sqrt(3.0) * k));
  // grazing: lambda = k^2 counts as propagating with k_m = 0
  const auto graze = reduced_wavenumber(k, k * k);
  CHECK(graze.propagating);
  CHECK(std::abs(graze.value) == 0.0);
}

TEST_CASE("propagating-mode counts at the band edges") {
  const auto& fx = testutil::desk();
  CHECK(count_propagating(4000, fx.left, fx.spec.c) == 1);
  CHECK(count_propagating(4000, fx.right, fx.spec.c) == 1);
  CHECK(count_propagating(16000, fx.left, fx.spec.c) == 3);
  CHECK(count_propagating(16000, fx.right, fx.spec.c) == 4);
}

TEST_CASE("full_mode embeds the trace at the boundary nodes") {
  const auto& fx = testutil::tiny();
  const Eigen::VectorXd v = fx.left.full_mode(fx.mesh.n_dof, 1);
  double off_boundary = 0;
  std::vector<bool> on(fx.mesh.n_dof, false);
  for (int id : fx.left.nodes) on[id] = true;
  for (int i = 0; i < fx.mesh.n_dof; ++i)
    if (!on[i]) off_boundary = std::max(off_boundary, std::abs(v[i]));
  CHECK(off_boundary == 0.0);
  for (size_t i = 0; i < fx.left.nodes.size(); ++i)
    CHECK(v[fx.left.nodes[i]] == fx.left.mode_vectors(i, 1));
}
