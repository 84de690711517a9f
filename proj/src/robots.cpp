#include "robots.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace geoflow {

namespace {

void require_dim2(const Config& q, const char* op) {
  if (q.size() != 2) {
    throw std::invalid_argument(std::string(op) + ": configuration must be 2-dimensional");
  }
}

// dM/dq2; the mass matrix depends on q only through cos(q2), so dM/dq1 = 0.
Eigen::Matrix2d mass_matrix_dq2(const PlanarArm& arm, const Config& q) {
  const double s2 = std::sin(q[1]);
  Eigen::Matrix2d dM;
  dM << -2.0 * arm.m2 * arm.l1 * arm.l2 * s2, -arm.m2 * arm.l1 * arm.l2 * s2,
        -arm.m2 * arm.l1 * arm.l2 * s2, 0.0;
  return dM;
}

Eigen::Vector2d potential_gradient(const PlanarArm& arm, const Config& q) {
  const double c1 = std::cos(q[0]);
  const double c12 = std::cos(q[0] + q[1]);
  return {arm.m1 * arm.l1 * c1 + arm.m2 * (arm.l1 * c1 + arm.l2 * c12),
          arm.m2 * arm.l2 * c12};
}

double max_potential_on_probe_grid(const PlanarArm& arm, Config* argmax) {
  const int n = 101;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Config q(2);
      q[0] = arm.joint_lo[0] + (arm.joint_hi[0] - arm.joint_lo[0]) * i / (n - 1);
      q[1] = arm.joint_lo[1] + (arm.joint_hi[1] - arm.joint_lo[1]) * j / (n - 1);
      const double p = potential_energy(arm, q);
      if (p > best) {
        best = p;
        if (argmax) *argmax = q;
      }
    }
  }
  return best;
}

}  // namespace

MetricTensor mass_matrix(const PlanarArm& arm, const Config& q) {
  require_dim2(q, "mass_matrix");
  const double c2 = std::cos(q[1]);
  const double a = (arm.m1 + arm.m2) * arm.l1 * arm.l1 + arm.m2 * arm.l2 * arm.l2 +
                   2.0 * arm.m2 * arm.l1 * arm.l2 * c2;
  const double b = arm.m2 * arm.l2 * arm.l2 + arm.m2 * arm.l1 * arm.l2 * c2;
  const double c = arm.m2 * arm.l2 * arm.l2;
  MetricTensor M(2, 2);
  M << a, b, b, c;
  return M;
}

double potential_energy(const PlanarArm& arm, const Config& q) {
  require_dim2(q, "potential_energy");
  return arm.m1 * arm.l1 * std::sin(q[0]) +
         arm.m2 * (arm.l1 * std::sin(q[0]) + arm.l2 * std::sin(q[0] + q[1]));
}

KineticFields kinetic_metric_fields(const PlanarArm& arm) {
  KineticFields fields;
  fields.path.role = MetricRole::PathMetric;
  fields.path.evaluator = [arm](const Config& q) { return mass_matrix(arm, q); };
  fields.path.analytic_derivative = [arm](const Config& q) {
    require_dim2(q, "kinetic path metric derivative");
    return MetricDerivative{Eigen::Matrix2d::Zero(), mass_matrix_dq2(arm, q)};
  };

  fields.eikonal.role = MetricRole::EikonalMetric;
  fields.eikonal.evaluator = [arm](const Config& q) {
    return MetricTensor(mass_matrix(arm, q).inverse());
  };
  fields.eikonal.analytic_derivative = [arm](const Config& q) {
    require_dim2(q, "kinetic eikonal metric derivative");
    const Eigen::Matrix2d Minv = mass_matrix(arm, q).inverse();
    const Eigen::Matrix2d dG2 = -Minv * mass_matrix_dq2(arm, q) * Minv;
    return MetricDerivative{Eigen::Matrix2d::Zero(), dG2};
  };
  return fields;
}

MetricField jacobi_metric_field(const PlanarArm& arm, double energy, double det_scale) {
  if (det_scale <= 0.0) {
    throw std::invalid_argument("jacobi_metric_field: det_scale must be positive");
  }
  Config worst(2);
  const double pmax = max_potential_on_probe_grid(arm, &worst);
  if (energy <= pmax) {
    std::ostringstream msg;
    msg << "jacobi_metric_field: energy " << energy << " does not exceed the potential "
        << pmax << " at q = (" << worst[0] << ", " << worst[1] << ")";
    throw std::invalid_argument(msg.str());
  }
  const double scale = std::sqrt(det_scale);  // matrix factor for a 2x2 metric

  MetricField field;
  field.role = MetricRole::PathMetric;
  field.evaluator = [arm, energy, scale](const Config& q) {
    const double gap = 2.0 * (energy - potential_energy(arm, q));
    return MetricTensor(scale * mass_matrix(arm, q) / gap);
  };
  field.analytic_derivative = [arm, energy, scale](const Config& q) {
    require_dim2(q, "jacobi metric derivative");
    const double gap = 2.0 * (energy - potential_energy(arm, q));
    const Eigen::Matrix2d M = mass_matrix(arm, q);
    const Eigen::Vector2d dP = potential_gradient(arm, q);
    MetricDerivative deriv(2);
    deriv[0] = scale * (2.0 * dP[0] / (gap * gap)) * M;
    deriv[1] = scale * ((2.0 * dP[1] / (gap * gap)) * M + mass_matrix_dq2(arm, q) / gap);
    return deriv;
  };
  return field;
}

TaskPoint forward_kinematics(const PlanarArm& arm, const Config& q) {
  require_dim2(q, "forward_kinematics");
  const double c1 = std::cos(q[0]);
  const double s1 = std::sin(q[0]);
  const double c12 = std::cos(q[0] + q[1]);
  const double s12 = std::sin(q[0] + q[1]);
  return {{arm.l1 * c1 + arm.l2 * c12, arm.l1 * s1 + arm.l2 * s12}};
}

Eigen::Matrix2d jacobian(const PlanarArm& arm, const Config& q) {
  require_dim2(q, "jacobian");
  const double s1 = std::sin(q[0]);
  const double c1 = std::cos(q[0]);
  const double s12 = std::sin(q[0] + q[1]);
  const double c12 = std::cos(q[0] + q[1]);
  Eigen::Matrix2d J;
  J << -arm.l1 * s1 - arm.l2 * s12, -arm.l2 * s12,
       arm.l1 * c1 + arm.l2 * c12, arm.l2 * c12;
  return J;
}

}  // namespace geoflow
