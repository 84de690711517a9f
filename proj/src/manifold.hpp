// Differential-geometry core: metric fields, Christoffel symbols, the
// Laplace-Beltrami operator, curve functionals and a geodesic ODE integrator.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace geoflow {

using Config = Eigen::VectorXd;
using Tangent = Eigen::VectorXd;
using MetricTensor = Eigen::MatrixXd;

// A metric field serves one of two roles: the path metric measures curve
// lengths, the eikonal metric (its pointwise inverse) measures gradient norms
// in the eikonal constraint. Keeping the role explicit avoids mixing the two.
enum class MetricRole { PathMetric, EikonalMetric };

// Per-coordinate metric derivatives: deriv[k](i, j) = dG_ij / dq_k.
using MetricDerivative = std::vector<Eigen::MatrixXd>;

struct MetricField {
  MetricRole role = MetricRole::PathMetric;
  std::function<MetricTensor(const Config&)> evaluator;
  // Optional closed-form derivative; finite differences are used when absent.
  std::function<MetricDerivative(const Config&)> analytic_derivative;

  MetricTensor operator()(const Config& q) const { return evaluator(q); }
};

struct GeodesicPath {
  std::vector<Config> points;
  std::vector<double> segment_lengths;
  double total_length = 0.0;
};

// Twice-differentiable scalar function. Missing gradient or hessian callbacks
// fall back to central finite differences of the value.
struct ScalarField {
  std::function<double(const Config&)> value;
  std::function<Tangent(const Config&)> gradient;
  std::function<Eigen::MatrixXd(const Config&)> hessian;
};

// Symmetrizes G and rejects it unless positive definite.
MetricTensor validated_metric(const MetricTensor& G);

// Evaluates dG/dq_k for all k, preferring the analytic hook over central
// finite differences with step 1e-5.
MetricDerivative metric_derivative(const MetricField& field, const Config& q);

// Identity metric of the given dimension; analytic derivative is exactly zero.
MetricField identity_metric_field(int dim, MetricRole role);

double inner_product(const Tangent& u, const Tangent& v, const MetricTensor& G);

double metric_norm(const Tangent& u, const MetricTensor& G);

// gamma[i](j, k) = Christoffel symbol with upper index i and lower indices j, k.
std::vector<Eigen::MatrixXd> christoffel(const MetricField& field, const Config& q);

// G^ij (d2f/dqi dqj - Gamma^k_ij df/dqk) with G^ij the inverse metric entries.
double laplace_beltrami(const MetricField& field, const ScalarField& f, const Config& q);

// Polyline length with each segment measured by the metric at its midpoint.
GeodesicPath curve_length(const MetricField& field, const std::vector<Config>& points);

// Discrete curve energy: 0.5 * sum ||(q_{i+1}-q_i)/dt||_G^2 * dt, midpoint metric.
double curve_energy(const MetricField& field, const std::vector<Config>& points, double dt);

// RK4 integration of the geodesic equation qdd_i = -Gamma^i_jk qd_j qd_k.
// Returns steps+1 points with segment lengths measured under the same field.
GeodesicPath integrate_geodesic_ode(const MetricField& field, const Config& q0,
                                    const Tangent& v0, double T, int steps);

}  // namespace geoflow
