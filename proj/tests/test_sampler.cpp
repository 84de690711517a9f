#include "sampler.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "manifold.hpp"
#include "test_util.hpp"

using namespace geoflow;

namespace {

using testutil::polar_metric_field;
using testutil::random_config;
using testutil::vec2;
using testutil::wavy_metric_field;

Config vec1(double a) {
  Config q(1);
  q << a;
  return q;
}

// 1D field G(q) = (2 + sin q)^2, the closed-form stationarity benchmark.
MetricField sin_squared_field(bool with_analytic) {
  MetricField field;
  field.role = MetricRole::PathMetric;
  field.evaluator = [](const Config& q) {
    MetricTensor G(1, 1);
    const double s = 2.0 + std::sin(q[0]);
    G(0, 0) = s * s;
    return G;
  };
  if (with_analytic) {
    field.analytic_derivative = [](const Config& q) {
      Eigen::MatrixXd d0(1, 1);
      d0(0, 0) = 2.0 * (2.0 + std::sin(q[0])) * std::cos(q[0]);
      return MetricDerivative{d0};
    };
  }
  return field;
}

// 1D field G(q) = 1 + q^2 with simple closed-form derivatives.
MetricField quadratic_field(bool with_analytic) {
  MetricField field;
  field.role = MetricRole::PathMetric;
  field.evaluator = [](const Config& q) {
    MetricTensor G(1, 1);
    G(0, 0) = 1.0 + q[0] * q[0];
    return G;
  };
  if (with_analytic) {
    field.analytic_derivative = [](const Config& q) {
      Eigen::MatrixXd d0(1, 1);
      d0(0, 0) = 2.0 * q[0];
      return MetricDerivative{d0};
    };
  }
  return field;
}

MetricField constant_field(const MetricTensor& G0) {
  MetricField field;
  field.role = MetricRole::PathMetric;
  field.evaluator = [G0](const Config&) { return G0; };
  field.analytic_derivative = [G0](const Config& q) {
    return MetricDerivative(q.size(), Eigen::MatrixXd::Zero(G0.rows(), G0.cols()));
  };
  return field;
}

DensitySpec flat_density() {
  DensitySpec density;
  density.log_target = [](const Config&) { return 0.0; };
  density.log_target_gradient = [](const Config& q) {
    return Tangent(Tangent::Zero(q.size()));
  };
  return density;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Eigen::VectorXd r = x - mean;
  const double quad = r.dot(llt.solve(r));
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * std::log(2.0 * M_PI) + log_det + quad);
}

double histogram_tv(const std::vector<Config>& samples, int bins) {
  std::vector<double> counts(bins, 0.0);
  const double lo = -M_PI, hi = M_PI;
  double total = 0.0;
  for (const Config& q : samples) {
    int b = static_cast<int>((q[0] - lo) / (hi - lo) * bins);
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    counts[b] += 1.0;
    total += 1.0;
  }
  std::vector<double> target(bins);
  double target_total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double center = lo + (b + 0.5) * (hi - lo) / bins;
    target[b] = 2.0 + std::sin(center);
    target_total += target[b];
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) {
    tv += std::abs(counts[b] / total - target[b] / target_total);
  }
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("natural gradient vanishes for a constant metric") {
  const Tangent g_analytic = natural_gradient(identity_metric_field(2, MetricRole::PathMetric), vec2(0.4, -1.2));
  CHECK(g_analytic[0] == 0.0);
  CHECK(g_analytic[1] == 0.0);

  MetricField no_hook;
  no_hook.role = MetricRole::PathMetric;
  no_hook.evaluator = [](const Config&) {
    MetricTensor G(2, 2);
    G << 2.0, 0.3, 0.3, 1.0;
    return G;
  };
  const Tangent g_fd = natural_gradient(no_hook, vec2(0.4, -1.2));
  CHECK(g_fd[0] == 0.0);
  CHECK(g_fd[1] == 0.0);
}

TEST_CASE("natural gradient matches the 1D closed form") {
  // G = 1 + q^2: G^-1 d/dq sqrt(G) at q = 1 is q (1+q^2)^{-3/2} = 2^{-3/2}.
  const double expected = std::pow(2.0, -1.5);
  const Tangent g_analytic = natural_gradient(quadratic_field(true), vec1(1.0));
  CHECK(g_analytic[0] == doctest::Approx(expected).epsilon(1e-13));
  const Tangent g_fd = natural_gradient(quadratic_field(false), vec1(1.0));
  CHECK(g_fd[0] == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("finite-difference and analytic determinant gradients agree") {
  auto gen = testutil::rng(311);
  for (int trial = 0; trial < 10; ++trial) {
    const Config q = random_config(gen, 0.5, 2.5);
    const Tangent a = natural_gradient(polar_metric_field(true), q);
    const Tangent b = natural_gradient(polar_metric_field(false), q);
    CHECK((a - b).norm() < 1e-4);
  }
}

TEST_CASE("proposal mean reduces to the plain drift on a constant metric") {
  MetricTensor G0(2, 2);
  G0 << 2.0, 0.3, 0.3, 1.0;
  const MetricField field = constant_field(G0);
  const double eps = 0.25;

  SUBCASE("flat target leaves the point fixed") {
    const Config q = vec2(0.7, -0.4);
    const Config mu = proposal_mean(field, flat_density(), q, eps);
    CHECK(mu[0] == q[0]);
    CHECK(mu[1] == q[1]);
  }

  SUBCASE("general target gives the preconditioned gradient step bit for bit") {
    DensitySpec density;
    const Config center = vec2(0.1, 0.6);
    density.log_target = [center](const Config& q) {
      return -0.5 * (q - center).squaredNorm();
    };
    density.log_target_gradient = [center](const Config& q) {
      return Tangent(center - q);
    };
    const Config q = vec2(-1.1, 0.9);
    const Config mu = proposal_mean(field, density, q, eps);
    const Eigen::LLT<MetricTensor> llt(validated_metric(G0));
    const double eps2 = eps * eps;
    const Config expected = q + 0.5 * eps2 * llt.solve(density.log_target_gradient(q));
    CHECK(mu[0] == expected[0]);
    CHECK(mu[1] == expected[1]);
  }
}

TEST_CASE("proposal mean matches the 1D term-by-term oracle") {
  // G = 1 + q^2 with rho = sqrt(det G) at q = 1, eps = 0.1. By hand:
  //   drift      (eps^2/2) G^-1 dL        = 0.005 * 0.5 * 0.5 = 0.00125
  //   curvature  -eps^2 G^-1 G' G^-1      = -0.01 * 0.5 * 2 * 0.5 = -0.005
  //   volume     (eps^2/2) G^-1 tr(G^-1 G') = 0.005 * 0.5 * 1 = 0.0025
  const double expected = 1.0 + 0.00125 - 0.005 + 0.0025;
  const MetricField analytic = quadratic_field(true);
  const Config mu = proposal_mean(analytic, metric_volume_density(analytic), vec1(1.0), 0.1);
  CHECK(mu[0] == doctest::Approx(expected).epsilon(1e-12));

  const MetricField fd = quadratic_field(false);
  const Config mu_fd = proposal_mean(fd, metric_volume_density(fd), vec1(1.0), 0.1);
  CHECK(mu_fd[0] == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("propose is the mean plus a metric-shaped draw") {
  const MetricField field = polar_metric_field(true);
  const DensitySpec density = flat_density();
  const Config q = vec2(0.7, 0.4);
  const double eps = 0.3;

  SUBCASE("zero noise returns the mean exactly") {
    const Config mu = proposal_mean(field, density, q, eps);
    const Config p = propose(field, density, q, eps, Tangent::Zero(2));
    CHECK(p[0] == mu[0]);
    CHECK(p[1] == mu[1]);
  }

  SUBCASE("identity metric shifts by eps z") {
    const MetricField id = identity_metric_field(2, MetricRole::PathMetric);
    const Config mu = proposal_mean(id, density, q, eps);
    Tangent z = vec2(0.8, -1.7);
    const Config p = propose(id, density, q, eps, z);
    CHECK((p - (mu + eps * z)).norm() < 1e-14);
  }

  SUBCASE("draw covariance approaches eps^2 G^-1") {
    const Config mu = proposal_mean(field, density, q, eps);
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      Tangent z = vec2(normal(gen), normal(gen));
      const Config p = propose(field, density, q, eps, z);
      const Eigen::Vector2d r = p - mu;
      acc += r * r.transpose();
    }
    const Eigen::Matrix2d empirical = acc / static_cast<double>(n);
    const Eigen::Matrix2d expected =
        eps * eps * validated_metric(field(q)).inverse();
    CHECK((empirical - expected).norm() / expected.norm() < 0.05);
  }
}

TEST_CASE("transition logpdf has the closed form at the mean") {
  const MetricField field = wavy_metric_field();
  const DensitySpec density = metric_volume_density(field);
  const double eps = 0.2;
  auto gen = testutil::rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const Config from = random_config(gen, -2.0, 2.0);
    const Config mu = proposal_mean(field, density, from, eps);
    const MetricTensor G = validated_metric(field(from));
    const double d = 2.0;
    const double expected = -0.5 * d * std::log(2.0 * M_PI) -
                            0.5 * std::log((eps * eps * G.inverse()).determinant());
    CHECK(transition_logpdf(field, density, from, mu, eps) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("transition logpdf is symmetric for a constant metric and flat target") {
  MetricTensor G0(2, 2);
  G0 << 1.5, -0.2, -0.2, 0.8;
  const MetricField field = constant_field(G0);
  const DensitySpec density = flat_density();
  auto gen = testutil::rng(78);
  for (int trial = 0; trial < 10; ++trial) {
    const Config a = random_config(gen);
    const Config b = random_config(gen);
    const double fwd = transition_logpdf(field, density, a, b, 0.4);
    const double bwd = transition_logpdf(field, density, b, a, 0.4);
    CHECK(fwd == bwd);
  }
}

TEST_CASE("transition logpdf agrees with a dense Gaussian density") {
  const MetricField field = wavy_metric_field();
  const DensitySpec density = metric_volume_density(field);
  const double eps = 0.35;
  auto gen = testutil::rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const Config from = random_config(gen, -2.5, 2.5);
    const Config to = random_config(gen, -2.5, 2.5);
    const Config mu = proposal_mean(field, density, from, eps);
    const Eigen::MatrixXd cov = eps * eps * validated_metric(field(from)).inverse();
    const double expected = mvn_logpdf(to, mu, cov);
    CHECK(transition_logpdf(field, density, from, to, eps) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("acceptance log ratio is exactly antisymmetric") {
  const MetricField field = wavy_metric_field();
  const DensitySpec density = metric_volume_density(field);
  auto gen = testutil::rng(80);
  for (int trial = 0; trial < 10; ++trial) {
    const Config a = random_config(gen, -2.5, 2.5);
    const Config b = random_config(gen, -2.5, 2.5);
    const double fwd = acceptance_log_ratio(field, density, a, b, 0.3);
    const double bwd = acceptance_log_ratio(field, density, b, a, 0.3);
    CHECK(fwd == -bwd);
    CHECK(acceptance_log_ratio(field, density, a, a, 0.3) == 0.0);
  }
}

TEST_CASE("acceptance log ratio is zero for a symmetric proposal and flat target") {
  MetricTensor G0(2, 2);
  G0 << 1.5, -0.2, -0.2, 0.8;
  const MetricField field = constant_field(G0);
  const DensitySpec density = flat_density();
  auto gen = testutil::rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    const Config a = random_config(gen);
    const Config b = random_config(gen);
    CHECK(acceptance_log_ratio(field, density, a, b, 0.5) == 0.0);
  }
}

TEST_CASE("wrap angles maps every coordinate into (-pi, pi]") {
  CHECK(wrap_angles(vec1(1.5 * M_PI))[0] == doctest::Approx(-0.5 * M_PI).epsilon(1e-12));
  CHECK(wrap_angles(vec1(0.0))[0] == 0.0);

  // Exact arithmetic sends -3*pi to the seam value +pi; in floating point
  // sin(-3*pi) is a hair below zero so the result lands just above -pi. Both
  // are the same point of the circle, so pin the magnitude and the interval.
  const double seam = wrap_angles(vec1(-3.0 * M_PI))[0];
  CHECK(std::abs(seam) == doctest::Approx(M_PI).epsilon(1e-12));
  CHECK(seam > -M_PI);
  CHECK(seam <= M_PI);

  auto gen = testutil::rng(82);
  std::uniform_real_distribution<double> wide(-40.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = wide(gen);
    const double w = wrap_angles(vec1(x))[0];
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
    CHECK(std::sin(w) == doctest::Approx(std::sin(x)).epsilon(1e-9));
    CHECK(std::cos(w) == doctest::Approx(std::cos(x)).epsilon(1e-9));
  }
}

TEST_CASE("constant metric with flat target accepts every proposal") {
  SamplerConfig config;
  config.epsilon = 0.8;
  config.n_burn = 5;
  config.n_sample = 200;
  config.dim = 2;
  config.seed = 11;
  const SampleSet out = run_rmmala(identity_metric_field(2, MetricRole::PathMetric),
                                   flat_density(), config);
  CHECK(out.acceptance_rate == 1.0);
  CHECK(out.accepted == out.iterations);
  // Collection starts at iteration n_burn, so an all-accept chain stores
  // n_sample + 1 points.
  CHECK(out.samples.size() == static_cast<size_t>(config.n_sample + 1));
  for (const Config& q : out.samples) {
    CHECK(q[0] > -M_PI);
    CHECK(q[0] <= M_PI);
    CHECK(q[1] > -M_PI);
    CHECK(q[1] <= M_PI);
  }
}

TEST_CASE("seeded chains reproduce and reseeding changes the draw") {
  const MetricField field = sin_squared_field(true);
  const DensitySpec density = metric_volume_density(field);
  SamplerConfig config;
  config.epsilon = 1.0;
  config.n_burn = 50;
  config.n_sample = 500;
  config.dim = 1;
  config.seed = 42;
  const SampleSet a = run_rmmala(field, density, config);
  const SampleSet b = run_rmmala(field, density, config);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(a.accepted == b.accepted);
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i][0] == b.samples[i][0]);
  }
  config.seed = 43;
  const SampleSet c = run_rmmala(field, density, config);
  bool differs = c.samples.size() != a.samples.size();
  for (size_t i = 0; !differs && i < a.samples.size(); ++i) {
    differs = a.samples[i][0] != c.samples[i][0];
  }
  CHECK(differs);
}

TEST_CASE("chain matches the analytic stationary density") {
  const MetricField field = sin_squared_field(true);
  const DensitySpec density = metric_volume_density(field);
  SamplerConfig config;
  config.epsilon = 1.0;
  config.n_burn = 2000;
  config.n_sample = 65000;
  config.dim = 1;
  config.seed = 7;
  const SampleSet out = run_rmmala(field, density, config);
  REQUIRE(out.samples.size() >= 50000);
  for (const Config& q : out.samples) {
    CHECK(q[0] > -M_PI);
    CHECK(q[0] <= M_PI);
  }
  const std::vector<Config> head(out.samples.begin(), out.samples.begin() + 50000);
  const double tv = histogram_tv(head, 50);
  CHECK(tv <= 0.05);
}

TEST_CASE("hopeless step size reports a tuning failure") {
  // A needle-sharp target makes the preconditioned drift overshoot by orders
  // of magnitude, so every proposal is rejected.
  DensitySpec density;
  const double inv_var = 1e8;
  density.log_target = [inv_var](const Config& q) {
    return -0.5 * inv_var * q.squaredNorm();
  };
  density.log_target_gradient = [inv_var](const Config& q) {
    return Tangent(-inv_var * q);
  };
  SamplerConfig config;
  config.epsilon = 1.0;
  config.n_burn = 0;
  config.n_sample = 5000;
  config.dim = 1;
  config.seed = 1;
  CHECK_THROWS_AS(run_rmmala(identity_metric_field(1, MetricRole::PathMetric),
                             density, config),
                  std::runtime_error);
}

TEST_CASE("sampler rejects bad arguments") {
  const MetricField field = identity_metric_field(1, MetricRole::PathMetric);
  const DensitySpec density = flat_density();
  SamplerConfig config;
  config.dim = 1;

  config.epsilon = 0.0;
  CHECK_THROWS_AS(run_rmmala(field, density, config), std::invalid_argument);
  config.epsilon = 0.1;
  config.n_sample = -1;
  CHECK_THROWS_AS(run_rmmala(field, density, config), std::invalid_argument);
  config.n_sample = 10;
  config.dim = 0;
  CHECK_THROWS_AS(run_rmmala(field, density, config), std::invalid_argument);

  DensitySpec empty;
  CHECK_THROWS_AS(proposal_mean(field, empty, vec1(0.0), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(propose(field, density, vec1(0.0), 0.1, Tangent::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("empty iteration budget yields an empty sample set") {
  SamplerConfig config;
  config.epsilon = 0.5;
  config.n_burn = 0;
  config.n_sample = 0;
  config.dim = 2;
  const SampleSet out = run_rmmala(identity_metric_field(2, MetricRole::PathMetric),
                                   flat_density(), config);
  CHECK(out.samples.empty());
  CHECK(out.iterations == 0);
  CHECK(out.acceptance_rate == 0.0);
}
