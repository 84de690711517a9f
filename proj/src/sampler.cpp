#include "sampler.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace geoflow {

namespace {

constexpr double kFdStep = 1e-5;
constexpr int kMaxConsecutiveRejects = 1000;

Tangent fd_gradient(const std::function<double(const Config&)>& f, const Config& q) {
  Tangent g(q.size());
  Config probe = q;
  for (int k = 0; k < q.size(); ++k) {
    probe(k) = q(k) + kFdStep;
    const double hi = f(probe);
    probe(k) = q(k) - kFdStep;
    const double lo = f(probe);
    probe(k) = q(k);
    g(k) = (hi - lo) / (2.0 * kFdStep);
  }
  return g;
}

Tangent log_target_gradient(const DensitySpec& density, const Config& q) {
  if (density.log_target_gradient) return density.log_target_gradient(q);
  return fd_gradient(density.log_target, q);
}

void require_density(const DensitySpec& density) {
  if (!density.log_target) {
    throw std::invalid_argument("sampler: density.log_target is empty");
  }
}

void require_step(double epsilon) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("sampler: epsilon must be positive");
  }
}

// log sqrt(det G) as the sum of log Cholesky diagonals.
double half_log_det(const Eigen::LLT<MetricTensor>& llt) {
  return llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

DensitySpec metric_volume_density(const MetricField& field) {
  DensitySpec density;
  density.log_target = [field](const Config& q) {
    const MetricTensor G = validated_metric(field(q));
    return half_log_det(Eigen::LLT<MetricTensor>(G));
  };
  density.log_target_gradient = [field](const Config& q) {
    const MetricTensor G = validated_metric(field(q));
    const MetricDerivative dG = metric_derivative(field, q);
    const Eigen::LLT<MetricTensor> llt(G);
    Tangent g(q.size());
    for (int k = 0; k < q.size(); ++k) {
      g(k) = 0.5 * llt.solve(dG[k]).trace();
    }
    return g;
  };
  return density;
}

Tangent natural_gradient(const MetricField& field, const Config& q) {
  const MetricTensor G = validated_metric(field(q));
  const Eigen::LLT<MetricTensor> llt(G);
  Tangent grad_sqrt_det(q.size());
  if (field.analytic_derivative) {
    const MetricDerivative dG = field.analytic_derivative(q);
    const double sqrt_det = std::exp(half_log_det(llt));
    for (int k = 0; k < q.size(); ++k) {
      grad_sqrt_det(k) = 0.5 * sqrt_det * llt.solve(dG[k]).trace();
    }
  } else {
    grad_sqrt_det = fd_gradient(
        [&field](const Config& p) {
          const MetricTensor Gp = validated_metric(field(p));
          return std::exp(half_log_det(Eigen::LLT<MetricTensor>(Gp)));
        },
        q);
  }
  return llt.solve(grad_sqrt_det);
}

Config proposal_mean(const MetricField& field, const DensitySpec& density,
                     const Config& q, double epsilon) {
  require_density(density);
  require_step(epsilon);
  const MetricTensor G = validated_metric(field(q));
  const Eigen::LLT<MetricTensor> llt(G);
  const int d = static_cast<int>(q.size());
  const double eps2 = epsilon * epsilon;

  Config mu = q + 0.5 * eps2 * llt.solve(log_target_gradient(density, q));

  const MetricDerivative dG = metric_derivative(field, q);
  const MetricTensor G_inv = llt.solve(MetricTensor::Identity(d, d));
  for (int j = 0; j < d; ++j) {
    const MetricTensor GdG = llt.solve(dG[j]);
    const MetricTensor A = GdG * G_inv;
    const double tr = GdG.trace();
    for (int i = 0; i < d; ++i) {
      mu(i) += -eps2 * A(i, j) + 0.5 * eps2 * G_inv(i, j) * tr;
    }
  }
  return mu;
}

Config propose(const MetricField& field, const DensitySpec& density,
               const Config& q, double epsilon, const Tangent& z) {
  if (z.size() != q.size()) {
    throw std::invalid_argument("sampler: noise dimension mismatch");
  }
  const Config mu = proposal_mean(field, density, q, epsilon);
  const MetricTensor G = validated_metric(field(q));
  Eigen::SelfAdjointEigenSolver<MetricTensor> es(G);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("sampler: metric eigendecomposition failed");
  }
  const MetricTensor S = es.eigenvectors() *
                         es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                         es.eigenvectors().transpose();
  return mu + epsilon * (S * z);
}

double transition_logpdf(const MetricField& field, const DensitySpec& density,
                         const Config& from, const Config& to, double epsilon) {
  const Config mu = proposal_mean(field, density, from, epsilon);
  const MetricTensor G = validated_metric(field(from));
  const Eigen::LLT<MetricTensor> llt(G);
  const double d = static_cast<double>(from.size());
  const Eigen::VectorXd r = to - mu;
  const double quad = r.dot(G * r);
  return -0.5 * d * std::log(2.0 * M_PI) - d * std::log(epsilon) +
         half_log_det(llt) - 0.5 * quad / (epsilon * epsilon);
}

double acceptance_log_ratio(const MetricField& field, const DensitySpec& density,
                            const Config& q, const Config& q_new, double epsilon) {
  require_density(density);
  const double target_term = density.log_target(q_new) - density.log_target(q);
  const double transition_term =
      transition_logpdf(field, density, q_new, q, epsilon) -
      transition_logpdf(field, density, q, q_new, epsilon);
  return target_term + transition_term;
}

Config wrap_angles(const Config& q) {
  Config wrapped(q.size());
  for (int k = 0; k < q.size(); ++k) {
    wrapped(k) = std::atan2(std::sin(q(k)), std::cos(q(k)));
  }
  return wrapped;
}

SampleSet run_rmmala(const MetricField& field, const DensitySpec& density,
                     const SamplerConfig& config) {
  require_density(density);
  require_step(config.epsilon);
  if (config.n_burn < 0 || config.n_sample < 0) {
    throw std::invalid_argument("sampler: counts must be nonnegative");
  }
  if (config.dim < 1) {
    throw std::invalid_argument("sampler: dim must be positive");
  }

  std::mt19937_64 gen(config.seed);
  std::uniform_real_distribution<double> box_draw(-M_PI, M_PI);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> accept_draw(0.0, 1.0);

  Config q(config.dim);
  for (int k = 0; k < config.dim; ++k) q(k) = box_draw(gen);

  SampleSet out;
  out.iterations = static_cast<long>(config.n_burn) + config.n_sample;
  int consecutive_rejects = 0;
  for (long i = 1; i <= out.iterations; ++i) {
    Tangent z(config.dim);
    for (int k = 0; k < config.dim; ++k) z(k) = normal(gen);
    const Config raw = propose(field, density, q, config.epsilon, z);
    const double alpha = acceptance_log_ratio(field, density, q, raw, config.epsilon);
    const double t = accept_draw(gen);
    if (std::exp(alpha) >= t) {
      const bool in_box =
          (raw.array() >= -M_PI).all() && (raw.array() < M_PI).all();
      q = in_box ? raw : wrap_angles(raw);
      ++out.accepted;
      consecutive_rejects = 0;
      if (i >= config.n_burn) out.samples.push_back(q);
    } else if (++consecutive_rejects >= kMaxConsecutiveRejects) {
      throw std::runtime_error(
          "sampler: 1000 consecutive rejections, step size needs retuning");
    }
  }
  out.acceptance_rate =
      out.iterations > 0
          ? static_cast<double>(out.accepted) / static_cast<double>(out.iterations)
          : 0.0;
  return out;
}

}  // namespace geoflow
