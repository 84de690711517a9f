#include "manifold.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace geoflow {

namespace {

constexpr double kFdStep = 1e-5;

void require_path_role(const MetricField& field, const char* op) {
  if (field.role != MetricRole::PathMetric) {
    throw std::invalid_argument(std::string(op) + " expects a path-metric field");
  }
}

Tangent fd_gradient(const ScalarField& f, const Config& q) {
  const int d = static_cast<int>(q.size());
  Tangent g(d);
  for (int i = 0; i < d; ++i) {
    Config qp = q, qm = q;
    qp[i] += kFdStep;
    qm[i] -= kFdStep;
    g[i] = (f.value(qp) - f.value(qm)) / (2.0 * kFdStep);
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const ScalarField& f, const Config& q) {
  const int d = static_cast<int>(q.size());
  const double h = 1e-4;
  Eigen::MatrixXd H(d, d);
  const double f0 = f.value(q);
  for (int i = 0; i < d; ++i) {
    Config qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    H(i, i) = (f.value(qp) - 2.0 * f0 + f.value(qm)) / (h * h);
    for (int j = i + 1; j < d; ++j) {
      Config qpp = q, qpm = q, qmp = q, qmm = q;
      qpp[i] += h; qpp[j] += h;
      qpm[i] += h; qpm[j] -= h;
      qmp[i] -= h; qmp[j] += h;
      qmm[i] -= h; qmm[j] -= h;
      H(i, j) = (f.value(qpp) - f.value(qpm) - f.value(qmp) + f.value(qmm)) / (4.0 * h * h);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

}  // namespace

MetricTensor validated_metric(const MetricTensor& G) {
  if (G.rows() != G.cols()) {
    throw std::invalid_argument("metric tensor must be square");
  }
  MetricTensor S = 0.5 * (G + G.transpose());
  Eigen::LLT<MetricTensor> llt(S);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("metric tensor is not positive definite");
  }
  return S;
}

MetricDerivative metric_derivative(const MetricField& field, const Config& q) {
  if (field.analytic_derivative) {
    return field.analytic_derivative(q);
  }
  const int d = static_cast<int>(q.size());
  MetricDerivative deriv(d);
  for (int k = 0; k < d; ++k) {
    Config qp = q, qm = q;
    qp[k] += kFdStep;
    qm[k] -= kFdStep;
    Eigen::MatrixXd diff = (field.evaluator(qp) - field.evaluator(qm)) / (2.0 * kFdStep);
    deriv[k] = 0.5 * (diff + diff.transpose());
  }
  return deriv;
}

MetricField identity_metric_field(int dim, MetricRole role) {
  MetricField field;
  field.role = role;
  field.evaluator = [dim](const Config&) {
    return MetricTensor(Eigen::MatrixXd::Identity(dim, dim));
  };
  field.analytic_derivative = [dim](const Config&) {
    return MetricDerivative(dim, Eigen::MatrixXd::Zero(dim, dim));
  };
  return field;
}

double inner_product(const Tangent& u, const Tangent& v, const MetricTensor& G) {
  if (u.size() != v.size() || G.rows() != u.size() || G.cols() != u.size()) {
    throw std::invalid_argument("inner_product: dimension mismatch");
  }
  // averaging both orderings keeps the result bit-identical under swapping
  // u and v even though floating-point contraction is not associative
  return 0.5 * (u.dot(G * v) + v.dot(G * u));
}

double metric_norm(const Tangent& u, const MetricTensor& G) {
  if (G.rows() != u.size() || G.cols() != u.size()) {
    throw std::invalid_argument("metric_norm: dimension mismatch");
  }
  const double s = u.dot(G * u);
  if (s < -1e-12) {
    throw std::runtime_error("metric_norm: negative norm, metric is not positive definite");
  }
  return std::sqrt(std::max(s, 0.0));
}

std::vector<Eigen::MatrixXd> christoffel(const MetricField& field, const Config& q) {
  const int d = static_cast<int>(q.size());
  const MetricTensor G = validated_metric(field.evaluator(q));
  const MetricDerivative dG = metric_derivative(field, q);
  Eigen::LLT<MetricTensor> llt(G);

  std::vector<Eigen::MatrixXd> gamma(d, Eigen::MatrixXd::Zero(d, d));
  Eigen::VectorXd rhs(d);
  for (int j = 0; j < d; ++j) {
    for (int k = j; k < d; ++k) {
      for (int l = 0; l < d; ++l) {
        rhs[l] = dG[k](l, j) + dG[j](l, k) - dG[l](j, k);
      }
      Eigen::VectorXd g = 0.5 * llt.solve(rhs);
      for (int i = 0; i < d; ++i) {
        gamma[i](j, k) = g[i];
        gamma[i](k, j) = g[i];
      }
    }
  }
  return gamma;
}

double laplace_beltrami(const MetricField& field, const ScalarField& f, const Config& q) {
  if (!f.value) {
    throw std::invalid_argument("laplace_beltrami: scalar field has no value callback");
  }
  const int d = static_cast<int>(q.size());
  const MetricTensor G = validated_metric(field.evaluator(q));
  const Eigen::MatrixXd Ginv = G.llt().solve(Eigen::MatrixXd::Identity(d, d));
  const Tangent grad = f.gradient ? f.gradient(q) : fd_gradient(f, q);
  const Eigen::MatrixXd hess = f.hessian ? f.hessian(q) : fd_hessian(f, q);
  const std::vector<Eigen::MatrixXd> gamma = christoffel(field, q);

  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double corr = 0.0;
      for (int k = 0; k < d; ++k) {
        corr += gamma[k](i, j) * grad[k];
      }
      acc += Ginv(i, j) * (hess(i, j) - corr);
    }
  }
  return acc;
}

GeodesicPath curve_length(const MetricField& field, const std::vector<Config>& points) {
  require_path_role(field, "curve_length");
  if (points.empty()) {
    throw std::invalid_argument("curve_length: need at least one point");
  }
  GeodesicPath path;
  path.points = points;
  path.segment_lengths.reserve(points.size() - 1);
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    const Config mid = 0.5 * (points[i] + points[i + 1]);
    const MetricTensor G = validated_metric(field.evaluator(mid));
    const double len = metric_norm(points[i + 1] - points[i], G);
    path.segment_lengths.push_back(len);
    path.total_length += len;
  }
  return path;
}

double curve_energy(const MetricField& field, const std::vector<Config>& points, double dt) {
  require_path_role(field, "curve_energy");
  if (dt <= 0.0) {
    throw std::invalid_argument("curve_energy: dt must be positive");
  }
  if (points.size() < 2) {
    throw std::invalid_argument("curve_energy: need at least two points");
  }
  double acc = 0.0;
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    const Config mid = 0.5 * (points[i] + points[i + 1]);
    const MetricTensor G = validated_metric(field.evaluator(mid));
    const Tangent vel = (points[i + 1] - points[i]) / dt;
    acc += 0.5 * inner_product(vel, vel, G) * dt;
  }
  return acc;
}

GeodesicPath integrate_geodesic_ode(const MetricField& field, const Config& q0,
                                    const Tangent& v0, double T, int steps) {
  require_path_role(field, "integrate_geodesic_ode");
  if (steps < 1) {
    throw std::invalid_argument("integrate_geodesic_ode: steps must be >= 1");
  }
  if (T <= 0.0) {
    throw std::invalid_argument("integrate_geodesic_ode: horizon must be positive");
  }
  const int d = static_cast<int>(q0.size());

  auto accel = [&](const Config& q, const Tangent& v) {
    const std::vector<Eigen::MatrixXd> gamma = christoffel(field, q);
    Tangent a(d);
    for (int i = 0; i < d; ++i) {
      a[i] = -v.dot(gamma[i] * v);
    }
    return a;
  };

  const double h = T / steps;
  std::vector<Config> points;
  points.reserve(steps + 1);
  Config q = q0;
  Tangent v = v0;
  points.push_back(q);
  for (int s = 0; s < steps; ++s) {
    const Tangent k1q = v;
    const Tangent k1v = accel(q, v);
    const Tangent k2q = v + 0.5 * h * k1v;
    const Tangent k2v = accel(q + 0.5 * h * k1q, v + 0.5 * h * k1v);
    const Tangent k3q = v + 0.5 * h * k2v;
    const Tangent k3v = accel(q + 0.5 * h * k2q, v + 0.5 * h * k2v);
    const Tangent k4q = v + h * k3v;
    const Tangent k4v = accel(q + h * k3q, v + h * k3v);
    q += (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    points.push_back(q);
  }
  return curve_length(field, points);
}

}  // namespace geoflow
