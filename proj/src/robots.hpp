// Planar two-link arm: mass matrix, potential energy, metric fields, forward
// kinematics and Jacobian. These supply the manifolds the solvers run on.
#pragma once

#include "manifold.hpp"

namespace geoflow {

struct PlanarArm {
  double l1 = 2.0;
  double l2 = 2.0;
  double m1 = 1.0;
  double m2 = 1.0;
  Eigen::Vector2d joint_lo = Eigen::Vector2d::Constant(-M_PI);
  Eigen::Vector2d joint_hi = Eigen::Vector2d::Constant(M_PI);
};

struct TaskPoint {
  Eigen::Vector2d position;
};

struct KineticFields {
  MetricField path;     // M(q)
  MetricField eikonal;  // M(q)^-1
};

MetricTensor mass_matrix(const PlanarArm& arm, const Config& q);

double potential_energy(const PlanarArm& arm, const Config& q);

// Path metric M(q) and eikonal metric M(q)^-1, both with analytic derivatives.
KineticFields kinetic_metric_fields(const PlanarArm& arm);

// Conformal metric M(q) / (2 (E - P(q))), scaled so that its determinant is
// multiplied by det_scale. The energy level must clear the potential over the
// whole joint box (checked on a 101x101 probe grid).
MetricField jacobi_metric_field(const PlanarArm& arm, double energy, double det_scale = 1.0);

TaskPoint forward_kinematics(const PlanarArm& arm, const Config& q);

// Analytic task Jacobian df/dq; singular exactly where sin(q2) = 0.
Eigen::Matrix2d jacobian(const PlanarArm& arm, const Config& q);

}  // namespace geoflow
