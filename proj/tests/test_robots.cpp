#include "doctest.h"
#include "robots.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace geoflow;
using testutil::vec2;

TEST_CASE("mass matrix closed-form values") {
  PlanarArm arm;

  MetricTensor M0 = mass_matrix(arm, vec2(0.9, 0.0));
  CHECK(M0(0, 0) == doctest::Approx(20.0));
  CHECK(M0(0, 1) == doctest::Approx(8.0));
  CHECK(M0(1, 0) == doctest::Approx(8.0));
  CHECK(M0(1, 1) == doctest::Approx(4.0));

  MetricTensor Mpi = mass_matrix(arm, vec2(-2.1, M_PI));
  CHECK(Mpi(0, 0) == doctest::Approx(4.0));
  CHECK(Mpi(0, 1) == doctest::Approx(0.0));
  CHECK(Mpi(1, 1) == doctest::Approx(4.0));

  std::mt19937_64 gen = testutil::rng(41);
  for (int t = 0; t < 20; ++t) {
    Config q = testutil::random_config(gen);
    MetricTensor M = mass_matrix(arm, q);
    CHECK(M(0, 1) == M(1, 0));
    // depends on q only through cos(q2)
    Config q2 = q;
    q2[0] += 1.234;
    CHECK((mass_matrix(arm, q2) - M).norm() == 0.0);
  }
}

TEST_CASE("mass matrix is positive definite over the joint box") {
  PlanarArm arm;
  for (int i = 0; i < 201; ++i) {
    for (int j = 0; j < 201; ++j) {
      Config q = vec2(-M_PI + 2 * M_PI * i / 200.0, -M_PI + 2 * M_PI * j / 200.0);
      MetricTensor M = mass_matrix(arm, q);
      CHECK(M(0, 0) > 0.0);
      CHECK(M.determinant() > 0.0);
    }
  }
}

TEST_CASE("potential energy closed-form values") {
  PlanarArm arm;
  CHECK(potential_energy(arm, vec2(0, 0)) == doctest::Approx(0.0));
  CHECK(potential_energy(arm, vec2(M_PI / 2, 0)) == doctest::Approx(6.0));
  CHECK(potential_energy(arm, vec2(-M_PI / 2, 0)) == doctest::Approx(-6.0));
}

TEST_CASE("kinetic metric fields are inverse pairs with analytic derivatives") {
  PlanarArm arm;
  KineticFields fields = kinetic_metric_fields(arm);
  CHECK(fields.path.role == MetricRole::PathMetric);
  CHECK(fields.eikonal.role == MetricRole::EikonalMetric);

  MetricTensor Mp = fields.path.evaluator(vec2(0.3, 0.0));
  CHECK(Mp(0, 0) == doctest::Approx(20.0));

  std::mt19937_64 gen = testutil::rng(42);
  for (int t = 0; t < 20; ++t) {
    Config q = testutil::random_config(gen);
    MetricTensor prod = fields.eikonal.evaluator(q) * fields.path.evaluator(q);
    CHECK((prod - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-10);

    // dM/dq1 vanishes, and both analytic derivatives match finite differences
    MetricDerivative dpath = fields.path.analytic_derivative(q);
    CHECK(dpath[0].norm() == 0.0);
    MetricField fd_path = fields.path;
    fd_path.analytic_derivative = nullptr;
    MetricDerivative dpath_fd = metric_derivative(fd_path, q);
    CHECK((dpath[1] - dpath_fd[1]).cwiseAbs().maxCoeff() < 1e-6);

    MetricDerivative deik = fields.eikonal.analytic_derivative(q);
    MetricField fd_eik = fields.eikonal;
    fd_eik.analytic_derivative = nullptr;
    MetricDerivative deik_fd = metric_derivative(fd_eik, q);
    CHECK((deik[0] - deik_fd[0]).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((deik[1] - deik_fd[1]).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("jacobi metric field scaling and validity") {
  PlanarArm arm;
  MetricField jacobi = jacobi_metric_field(arm, 8.0);
  CHECK(jacobi.role == MetricRole::PathMetric);

  // P = 0 at q = (0, 0), so the conformal factor is 1/16
  MetricTensor MJ = jacobi.evaluator(vec2(0, 0));
  MetricTensor M = mass_matrix(arm, vec2(0, 0));
  CHECK((MJ - M / 16.0).cwiseAbs().maxCoeff() < 1e-12);

  // spot-check the conformal factor away from P = 0:
  // q = (pi/2, pi) gives P = 2 and a factor of 1 / (2 (8 - 2)) = 1/12
  MetricTensor MJ2 = jacobi.evaluator(vec2(M_PI / 2, M_PI));
  MetricTensor M2 = mass_matrix(arm, vec2(M_PI / 2, M_PI));
  CHECK((MJ2 - M2 / 12.0).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(jacobi_metric_field(arm, 5.0), std::invalid_argument);

  // determinant rescaling multiplies the matrix by sqrt(det_scale) in 2-D
  MetricField scaled = jacobi_metric_field(arm, 8.0, 100.0);
  MetricTensor S = scaled.evaluator(vec2(0.7, -0.4));
  MetricTensor U = jacobi.evaluator(vec2(0.7, -0.4));
  CHECK((S - 10.0 * U).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(S.determinant() == doctest::Approx(100.0 * U.determinant()));
}

TEST_CASE("jacobi conformal factor of one where the energy gap is 0.5") {
  // with E = 6.1 (above the potential maximum of 6), the slice q2 = 0 has
  // P(q1, 0) = 6 sin(q1), so sin(q1) = 5.6 / 6 puts the gap at exactly 0.5
  PlanarArm arm;
  const double E = 6.1;
  const Config q = vec2(std::asin((E - 0.5) / 6.0), 0.0);
  MetricField jac = jacobi_metric_field(arm, E);
  CHECK((jac.evaluator(q) - mass_matrix(arm, q)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("jacobi metric analytic derivative matches finite differences") {
  PlanarArm arm;
  MetricField jacobi = jacobi_metric_field(arm, 8.0, 100.0);
  MetricField fd = jacobi;
  fd.analytic_derivative = nullptr;
  std::mt19937_64 gen = testutil::rng(43);
  for (int t = 0; t < 15; ++t) {
    Config q = testutil::random_config(gen);
    MetricDerivative da = jacobi.analytic_derivative(q);
    MetricDerivative df = metric_derivative(fd, q);
    CHECK((da[0] - df[0]).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((da[1] - df[1]).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("jacobi field stays positive definite on the probe grid") {
  PlanarArm arm;
  MetricField jacobi = jacobi_metric_field(arm, 8.0);
  for (int i = 0; i < 101; ++i) {
    for (int j = 0; j < 101; ++j) {
      Config q = vec2(-M_PI + 2 * M_PI * i / 100.0, -M_PI + 2 * M_PI * j / 100.0);
      MetricTensor G = jacobi.evaluator(q);
      CHECK(G(0, 0) > 0.0);
      CHECK(G.determinant() > 0.0);
    }
  }
}

TEST_CASE("forward kinematics known poses") {
  PlanarArm arm;
  TaskPoint home = forward_kinematics(arm, vec2(0, 0));
  CHECK(home.position[0] == doctest::Approx(4.0));
  CHECK(home.position[1] == doctest::Approx(0.0));

  TaskPoint elbow = forward_kinematics(arm, vec2(0, M_PI / 2));
  CHECK(elbow.position[0] == doctest::Approx(2.0));
  CHECK(elbow.position[1] == doctest::Approx(2.0));

  TaskPoint second = forward_kinematics(arm, vec2(1.57, -1.57));
  CHECK((second.position - Eigen::Vector2d(2.0, 2.0)).norm() < 2e-3);
}

TEST_CASE("forward kinematics stays in the reachable annulus") {
  PlanarArm arm;
  std::mt19937_64 gen = testutil::rng(44);
  for (int t = 0; t < 100; ++t) {
    Config q = testutil::random_config(gen);
    const double r = forward_kinematics(arm, q).position.norm();
    CHECK(r >= std::abs(arm.l1 - arm.l2) - 1e-12);
    CHECK(r <= arm.l1 + arm.l2 + 1e-12);
  }
}

TEST_CASE("jacobian analytic form") {
  PlanarArm arm;
  Eigen::Matrix2d J0 = jacobian(arm, vec2(0, 0));
  CHECK(J0(0, 0) == doctest::Approx(0.0));
  CHECK(J0(0, 1) == doctest::Approx(0.0));
  CHECK(J0(1, 0) == doctest::Approx(4.0));
  CHECK(J0(1, 1) == doctest::Approx(2.0));

  std::mt19937_64 gen = testutil::rng(45);
  for (int t = 0; t < 100; ++t) {
    Config q = testutil::random_config(gen);
    Eigen::Matrix2d J = jacobian(arm, q);
    Eigen::MatrixXd Jfd = testutil::fd_jacobian(
        [&](const Config& p) {
          return Eigen::VectorXd(forward_kinematics(arm, p).position);
        },
        q);
    CHECK((J - Jfd).cwiseAbs().maxCoeff() / std::max(1.0, J.norm()) < 1e-7);
    // rank drops exactly where sin(q2) = 0
    CHECK(J.determinant() ==
          doctest::Approx(arm.l1 * arm.l2 * std::sin(q[1])).epsilon(1e-10));
  }
}
