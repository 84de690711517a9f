// Neural eikonal solver: a symmetric factorized distance network, the eikonal
// and divergence losses, self-supervised training and gradient-flow
// backtracking for configuration-to-configuration queries.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "manifold.hpp"

namespace geoflow {

// Fully connected scalar network with tanh hidden layers. params flattens
// each layer as row-major weights followed by biases, the same layout the
// differentiation programs use.
struct Mlp {
  std::vector<int> layer_sizes;
  std::string activation = "tanh";
  Eigen::VectorXd params;
};

// Glorot-uniform weights, zero biases.
Mlp make_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed);

enum class PairSampler { kUniformBox, kRmMala };

struct TrainConfig {
  double lambda = 0.1;
  double learning_rate = 0.001;
  int epochs = 1000;
  int batch_size = 256;
  std::uint64_t seed = 0;
  PairSampler sampler = PairSampler::kUniformBox;
  double validation_fraction = 0.0;
  double box_lo = -M_PI;
  double box_hi = M_PI;
};

struct LossReport {
  int epoch = 0;
  double eikonal = 0.0;
  double divergence = 0.0;
  double total = 0.0;
};

using ConfigPair = std::pair<Config, Config>;

// (u(a,b) + u(b,a)) / 2 of the raw network, before the softplus and the
// Euclidean factor.
double symmetric_output(const Mlp& net, const Config& a, const Config& b);

// U(q_s, q_e) = ||q_e - q_s|| * softplus(symmetric_output).
double factorized_distance(const Mlp& net, const Config& q_s, const Config& q_e);

// Exact reverse-mode gradient of U with respect to q_e.
Tangent distance_gradient(const Mlp& net, const Config& q_s, const Config& q_e);

// Exact second derivatives of U with respect to q_e, one tangent sweep per
// direction.
Eigen::MatrixXd distance_hessian(const Mlp& net, const Config& q_s, const Config& q_e);

// (||grad U||_G - 1)^2 at q_e under the eikonal metric.
double eikonal_loss(const Mlp& net, const MetricField& field, const Config& q_s,
                    const Config& q_e);

// Laplace-Beltrami divergence of U at q_e under the eikonal metric; signed.
double divergence_loss(const Mlp& net, const MetricField& field, const Config& q_s,
                       const Config& q_e);

// Batch means: total = eikonal + lambda * divergence.
LossReport total_loss(const Mlp& net, const MetricField& field,
                      const std::vector<ConfigPair>& batch, double lambda);

// Adam on the batch-mean loss, one step per epoch on a freshly sampled batch.
// Mutates net in place and returns the per-epoch loss history.
std::vector<LossReport> train(Mlp& net, const MetricField& field,
                              const TrainConfig& config);

// Descends q_e along the geodesic flow V = G grad U with Euclidean step
// `step` until within `tol` of q_s, then appends q_s. Points are clamped to
// the joint box; segment lengths are measured under the path metric.
GeodesicPath backtrack_neural(const Mlp& net, const MetricField& field,
                              const Config& q_s, const Config& q_e,
                              double step = 0.01, double tol = 0.05);

}  // namespace geoflow
