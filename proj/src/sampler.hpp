// RM-MALA: geometry-aware MCMC whose Langevin proposal is preconditioned by
// the Riemannian metric. Used standalone and as the metric-aware sampler for
// training pairs.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "manifold.hpp"

namespace geoflow {

struct SamplerConfig {
  double epsilon = 0.1;
  int n_burn = 1000;
  int n_sample = 10000;
  int dim = 2;
  std::uint64_t seed = 0;
};

// Target density in log form. The gradient hook is optional; central finite
// differences with step 1e-5 fill in when it is absent.
struct DensitySpec {
  std::function<double(const Config&)> log_target;
  std::function<Tangent(const Config&)> log_target_gradient;
};

struct SampleSet {
  std::vector<Config> samples;
  long iterations = 0;
  long accepted = 0;
  double acceptance_rate = 0.0;
};

// Default target: rho proportional to sqrt(det G), configurations weighted by
// metric volume.
DensitySpec metric_volume_density(const MetricField& field);

// G(q)^-1 grad sqrt(det G(q)). The determinant gradient uses the analytic
// metric derivative when present, else central differences with step 1e-5.
Tangent natural_gradient(const MetricField& field, const Config& q);

// Mean of the Langevin proposal: the preconditioned drift plus the two
// metric-curvature correction terms.
Config proposal_mean(const MetricField& field, const DensitySpec& density,
                     const Config& q, double epsilon);

// mu + epsilon * S z with S the symmetric square root of G(q)^-1.
Config propose(const MetricField& field, const DensitySpec& density,
               const Config& q, double epsilon, const Tangent& z);

// Log density of N(to | proposal_mean(from), epsilon^2 G(from)^-1).
double transition_logpdf(const MetricField& field, const DensitySpec& density,
                         const Config& from, const Config& to, double epsilon);

// L(q_new) - L(q) + logp(q | q_new) - logp(q_new | q), grouped so that
// alpha(a, b) == -alpha(b, a) holds bit for bit.
double acceptance_log_ratio(const MetricField& field, const DensitySpec& density,
                            const Config& q, const Config& q_new, double epsilon);

// Each coordinate mapped into (-pi, pi] via arctan2(sin, cos).
Config wrap_angles(const Config& q);

// Metropolis-adjusted chain on the torus. The MH ratio sees the raw proposal
// and the state is wrapped on storage: for 2*pi-periodic metrics this is the
// covering-space chain projected to the circle, which is exactly stationary,
// whereas wrapping before the ratio skews seam crossings. Collected samples
// are the accepted moves after burn-in. Throws after 1000 consecutive
// rejections.
SampleSet run_rmmala(const MetricField& field, const DensitySpec& density,
                     const SamplerConfig& config);

}  // namespace geoflow
