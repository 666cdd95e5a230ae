#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace ductopt;

TEST_CASE("box projection and rounding") {
  Eigen::VectorXd d(4);
  d << -0.5, 0.3, 0.5, 1.7;
  const Eigen::VectorXd p = project_box(d);
  CHECK(p[0] == kDefaultEpsilon);
  CHECK(p[1] == 0.3);
  CHECK(p[3] == 1.0);
  const Eigen::VectorXd r = round_design(p);
  CHECK(r[0] == kDefaultEpsilon);
  CHECK(r[1] == kDefaultEpsilon);
  CHECK(r[2] == 1.0);  // threshold 0.5 rounds up at the boundary
  CHECK(r[3] == 1.0);
}

TEST_CASE("filter modes parse and print") {
  CHECK(parse_filter_mode("linear") == FilterMode::linear);
  CHECK(parse_filter_mode("fw-open-close") == FilterMode::fw_open_close);
  CHECK_THROWS_AS(parse_filter_mode("gauss"), std::invalid_argument);
  CHECK(std::string(filter_mode_name(FilterMode::linear)) == "linear");
}

TEST_CASE("sub-element radius reduces the filter to the identity") {
  const auto& fx = testutil::tiny();
  const DensityFilter filt(fx.mesh, 0.5 * fx.spec.h);
  CHECK(filt.is_identity());
  const Eigen::VectorXd d = testutil::random_design(
      fx.mesh.design_elements.size(), 5);
  CHECK((filt.apply(d) - d).cwiseAbs().maxCoeff() == 0.0);
  CHECK((filt.backprop(d, d) - d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("both filter modes preserve constants and the box") {
  const auto& fx = testutil::tiny();
  const long n = fx.mesh.design_elements.size();
  for (FilterMode mode : {FilterMode::linear, FilterMode::fw_open_close}) {
    const DensityFilter filt(fx.mesh, 2.5 * fx.spec.h, mode);
    REQUIRE_FALSE(filt.is_identity());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    CHECK((filt.apply(ones) - ones).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd d = testutil::random_design(n, 17, 0.05, 0.95);
    const Eigen::VectorXd a = filt.apply(d);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("linear filter averages within the radius") {
  const auto& fx = testutil::tiny();
  const long n = fx.mesh.design_elements.size();
  const DensityFilter filt(fx.mesh, 2.5 * fx.spec.h, FilterMode::linear);
  // a single spike spreads no further than the kernel radius
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  const int nz = fx.mesh.design_nz;
  const int ci = nz / 2, cj = fx.mesh.design_nr / 2;
  d[cj * nz + ci] = 1.0;
  const Eigen::VectorXd a = filt.apply(d);
  for (int j = 0; j < fx.mesh.design_nr; ++j)
    for (int i = 0; i < nz; ++i) {
      const double dist = std::hypot(i - ci, j - cj);
      if (dist >= 2.5) CHECK(a[j * nz + i] == 0.0);
      if (dist < 1.0) CHECK(a[j * nz + i] > 0.0);
    }
}

TEST_CASE("filter cotangent pullback matches finite differences") {
  const auto& fx = testutil::tiny();
  const long n = fx.mesh.design_elements.size();
  for (FilterMode mode : {FilterMode::linear, FilterMode::fw_open_close}) {
    const DensityFilter filt(fx.mesh, 2.2 * fx.spec.h, mode);
    const Eigen::VectorXd d = testutil::random_design(n, 23, 0.15, 0.85);
    const Eigen::VectorXd v = testutil::random_design(n, 29, -1.0, 1.0);
    const Eigen::VectorXd jt_v = filt.backprop(d, v);
    std::srand(31);
    const double step = 1e-7;
    for (int t = 0; t < 8; ++t) {
      const long i = std::rand() % n;
      Eigen::VectorXd dp = d, dm = d;
      dp[i] += step;
      dm[i] -= step;
      const double fd = (v.dot(filt.apply(dp)) - v.dot(filt.apply(dm))) /
                        (2 * step);
      CHECK(jt_v[i] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("open-close mode erodes thin spikes but keeps bulk material") {
  const auto& fx = testutil::tiny();
  const long n = fx.mesh.design_elements.size();
  const int nz = fx.mesh.design_nz;
  const DensityFilter filt(fx.mesh, 2.5 * fx.spec.h, FilterMode::fw_open_close);
  Eigen::VectorXd d = Eigen::VectorXd::Constant(n, 0.0);
  d[(fx.mesh.design_nr / 2) * nz + nz / 2] = 1.0;  // isolated spike
  const double spike_after =
      filt.apply(d)[(fx.mesh.design_nr / 2) * nz + nz / 2];
  CHECK(spike_after < 0.5);  // opening suppresses features below the radius
}

TEST_CASE("density expansion covers non-design elements with one") {
  const auto& fx = testutil::tiny();
  const Eigen::VectorXd dd = Eigen::VectorXd::Constant(
      fx.mesh.design_elements.size(), 0.25);
  const Eigen::VectorXd alpha = density_over_elements(fx.mesh, dd);
  REQUIRE(alpha.size() == fx.mesh.n_elements());
  std::vector<bool> is_design(fx.mesh.n_elements(), false);
  for (int e : fx.mesh.design_elements) is_design[e] = true;
  for (int e = 0; e < fx.mesh.n_elements(); ++e)
    CHECK(alpha[e] == (is_design[e] ? 0.25 : 1.0));
  CHECK_THROWS_AS(density_over_elements(fx.mesh, Eigen::VectorXd::Ones(3)),
                  std::invalid_argument);
}

TEST_CASE("binariness penalty vanishes at the box corners") {
  const PenaltyConfig cfg{10.0, 1e-8};
  Eigen::VectorXd a(2);
  a << cfg.epsilon, 1.0;
  auto [value, grad] = penalty_value_grad(a, cfg);
  CHECK(value == Catch::Approx(0.0).margin(1e-12));
  // interior point: positive value, finite-difference gradient
  Eigen::VectorXd b = Eigen::VectorXd::Constant(3, 0.37);
  auto [v0, g0] = penalty_value_grad(b, cfg);
  CHECK(v0 > 0);
  const double step = 1e-7;
  Eigen::VectorXd bp = b, bm = b;
  bp[1] += step;
  bm[1] -= step;
  const double fd = (penalty_value_grad(bp, cfg).first -
                     penalty_value_grad(bm, cfg).first) /
                    (2 * step);
  CHECK(g0[1] == Catch::Approx(fd).epsilon(1e-6));
}
