#include "nes.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "diff.hpp"
#include "sampler.hpp"

namespace geoflow {

namespace {

constexpr double kBoxLo = -M_PI;
constexpr double kBoxHi = M_PI;

void require_net(const Mlp& net) {
  if (net.layer_sizes.size() < 2) {
    throw std::invalid_argument("nes: network needs at least input and output sizes");
  }
  for (int s : net.layer_sizes) {
    if (s < 1) throw std::invalid_argument("nes: layer sizes must be positive");
  }
  if (net.layer_sizes.back() != 1) {
    throw std::invalid_argument("nes: network output must be scalar");
  }
  if (net.activation != "tanh") {
    throw std::invalid_argument("nes: unsupported activation " + net.activation);
  }
}

void require_eikonal_role(const MetricField& field) {
  if (field.role != MetricRole::EikonalMetric) {
    throw std::invalid_argument("nes: losses take the eikonal metric, not the path metric");
  }
}

int pair_config_dim(const Mlp& net) {
  const int in = net.layer_sizes.front();
  if (in % 2 != 0) {
    throw std::invalid_argument("nes: pair network input size must be even");
  }
  return in / 2;
}

int expected_param_count(const std::vector<int>& layer_sizes) {
  int n = 0;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

// Appends the linear/tanh chain of the network. When shared_offsets is given
// the chain reuses those parameter blocks instead of allocating fresh ones.
int emit_chain(ScalarProgram& prog, const std::vector<int>& layer_sizes, int input_reg,
               const std::vector<int>* shared_offsets, std::vector<int>* offsets_out) {
  int h = input_reg;
  const int layers = static_cast<int>(layer_sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    if (shared_offsets) {
      h = prog.add_linear_shared(h, layer_sizes[l + 1], (*shared_offsets)[l]);
    } else {
      h = prog.add_linear(h, layer_sizes[l + 1]);
      offsets_out->push_back(prog.ops.back().param_offset);
    }
    if (l + 1 < layers) h = prog.add_tanh(h);
  }
  return h;
}

// Builds the program for x = (q_s, q_e). With the full stage the output is
// U = ||q_e - q_s|| * softplus(sym); otherwise it stops at the symmetrized
// network output.
ScalarProgram build_pair_program(const Mlp& net, bool full) {
  require_net(net);
  const int d = pair_config_dim(net);
  ScalarProgram prog;
  prog.n_inputs = 2 * d;

  std::vector<int> forward(2 * d), swapped(2 * d);
  for (int i = 0; i < d; ++i) {
    forward[i] = i;
    forward[d + i] = d + i;
    swapped[i] = d + i;
    swapped[d + i] = i;
  }
  const int x1 = prog.add_gather(forward);
  const int x2 = prog.add_gather(swapped);
  std::vector<int> offsets;
  const int h1 = emit_chain(prog, net.layer_sizes, x1, nullptr, &offsets);
  const int h2 = emit_chain(prog, net.layer_sizes, x2, &offsets, nullptr);
  const int sym = prog.add_avg2(h1, h2);
  if (full) {
    std::vector<int> s_idx(d), e_idx(d);
    for (int i = 0; i < d; ++i) {
      s_idx[i] = i;
      e_idx[i] = d + i;
    }
    const int g_s = prog.add_gather(s_idx);
    const int g_e = prog.add_gather(e_idx);
    const int sp = prog.add_softplus(sym);
    const int dist = prog.add_euclid_dist(g_e, g_s);
    prog.set_output(prog.add_mul(dist, sp));
  } else {
    prog.set_output(sym);
  }

  if (prog.n_params() != net.params.size()) {
    throw std::invalid_argument("nes: parameter vector does not match the layer sizes");
  }
  std::copy(net.params.data(), net.params.data() + net.params.size(), prog.params.begin());
  return prog;
}

Eigen::VectorXd pair_input(const Config& q_s, const Config& q_e) {
  Eigen::VectorXd x(q_s.size() + q_e.size());
  x << q_s, q_e;
  return x;
}

void require_pair_dims(const Mlp& net, const Config& q_s, const Config& q_e) {
  const int d = pair_config_dim(net);
  if (q_s.size() != d || q_e.size() != d) {
    throw std::invalid_argument("nes: configuration dimension does not match the network");
  }
}

// Gradient and q_e Hessian block of U via one tangent sweep per direction.
void gradient_and_hessian(const ScalarProgram& prog, const Eigen::VectorXd& x, int d,
                          Tangent& g, Eigen::MatrixXd& H) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual> xin(n), xadj(n);
  Workspace<Dual> ws;
  g.resize(d);
  H.resize(d, d);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < n; ++k) xin[k] = {x[k], k == d + i ? 1.0 : 0.0};
    const Dual out = sweep(prog, xin.data(), ws, xadj.data(), static_cast<Dual*>(nullptr));
    g[i] = out.t;
    for (int j = 0; j < d; ++j) H(j, i) = xadj[d + j].t;
  }
}

struct PairLosses {
  double eikonal = 0.0;
  double divergence = 0.0;
};

PairLosses pair_losses(const ScalarProgram& prog, const MetricField& field,
                       const Config& q_s, const Config& q_e, bool with_divergence) {
  const int d = static_cast<int>(q_e.size());
  const Eigen::VectorXd x = pair_input(q_s, q_e);
  PairLosses out;
  Tangent g;
  Eigen::MatrixXd H;
  if (with_divergence) {
    gradient_and_hessian(prog, x, d, g, H);
  } else {
    g = grad_input(prog, x).tail(d);
  }
  const MetricTensor G = validated_metric(field(q_e));
  const double norm = metric_norm(g, G);
  out.eikonal = (norm - 1.0) * (norm - 1.0);
  if (with_divergence) {
    const Eigen::MatrixXd A = G.llt().solve(Eigen::MatrixXd::Identity(d, d));
    const auto gamma = christoffel(field, q_e);
    double div = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        double corrected = H(i, j);
        for (int k = 0; k < d; ++k) corrected -= gamma[k](i, j) * g[k];
        div += A(i, j) * corrected;
      }
    }
    out.divergence = div;
  }
  return out;
}

// Inverts an eikonal field into the corresponding path-metric field for the
// metric-aware pair sampler.
MetricField path_field_from_eikonal(const MetricField& eikonal) {
  MetricField path;
  path.role = MetricRole::PathMetric;
  const auto eval = eikonal.evaluator;
  path.evaluator = [eval](const Config& q) {
    const MetricTensor G = validated_metric(eval(q));
    return MetricTensor(G.llt().solve(
        Eigen::MatrixXd::Identity(G.rows(), G.cols())));
  };
  if (eikonal.analytic_derivative) {
    const auto deriv = eikonal.analytic_derivative;
    path.analytic_derivative = [eval, deriv](const Config& q) {
      const MetricTensor G = validated_metric(eval(q));
      const MetricTensor M = G.llt().solve(Eigen::MatrixXd::Identity(G.rows(), G.cols()));
      MetricDerivative dG = deriv(q);
      MetricDerivative dM(dG.size());
      for (size_t k = 0; k < dG.size(); ++k) dM[k] = -M * dG[k] * M;
      return dM;
    };
  }
  return path;
}

void validate_train_config(const TrainConfig& config) {
  if (config.lambda < 0.0) throw std::invalid_argument("nes: lambda must be nonnegative");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("nes: learning rate must be positive");
  }
  if (config.batch_size < 1) throw std::invalid_argument("nes: batch size must be at least 1");
  if (config.epochs < 0) throw std::invalid_argument("nes: epochs must be nonnegative");
  if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
    throw std::invalid_argument("nes: validation fraction must lie in [0, 1)");
  }
  if (!(config.box_lo < config.box_hi)) {
    throw std::invalid_argument("nes: empty sampling box");
  }
}

std::string describe_pair(const Config& q_s, const Config& q_e) {
  std::ostringstream oss;
  oss << "q_s = [" << q_s.transpose() << "], q_e = [" << q_e.transpose() << "]";
  return oss.str();
}

}  // namespace

Mlp make_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("nes: network needs at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("nes: layer sizes must be positive");
  }
  Mlp net;
  net.layer_sizes = layer_sizes;
  net.params.resize(expected_param_count(layer_sizes));
  std::mt19937_64 gen(seed);
  int offset = 0;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> weight(-limit, limit);
    for (int k = 0; k < in * out; ++k) net.params[offset++] = weight(gen);
    for (int k = 0; k < out; ++k) net.params[offset++] = 0.0;
  }
  return net;
}

double symmetric_output(const Mlp& net, const Config& a, const Config& b) {
  require_pair_dims(net, a, b);
  const ScalarProgram prog = build_pair_program(net, false);
  return value(prog, pair_input(a, b));
}

double factorized_distance(const Mlp& net, const Config& q_s, const Config& q_e) {
  require_pair_dims(net, q_s, q_e);
  const ScalarProgram prog = build_pair_program(net, true);
  return value(prog, pair_input(q_s, q_e));
}

Tangent distance_gradient(const Mlp& net, const Config& q_s, const Config& q_e) {
  require_pair_dims(net, q_s, q_e);
  const ScalarProgram prog = build_pair_program(net, true);
  return grad_input(prog, pair_input(q_s, q_e)).tail(q_e.size());
}

Eigen::MatrixXd distance_hessian(const Mlp& net, const Config& q_s, const Config& q_e) {
  require_pair_dims(net, q_s, q_e);
  const ScalarProgram prog = build_pair_program(net, true);
  Tangent g;
  Eigen::MatrixXd H;
  gradient_and_hessian(prog, pair_input(q_s, q_e), static_cast<int>(q_e.size()), g, H);
  return H;
}

double eikonal_loss(const Mlp& net, const MetricField& field, const Config& q_s,
                    const Config& q_e) {
  require_pair_dims(net, q_s, q_e);
  require_eikonal_role(field);
  const ScalarProgram prog = build_pair_program(net, true);
  return pair_losses(prog, field, q_s, q_e, false).eikonal;
}

double divergence_loss(const Mlp& net, const MetricField& field, const Config& q_s,
                       const Config& q_e) {
  require_pair_dims(net, q_s, q_e);
  require_eikonal_role(field);
  const ScalarProgram prog = build_pair_program(net, true);
  return pair_losses(prog, field, q_s, q_e, true).divergence;
}

LossReport total_loss(const Mlp& net, const MetricField& field,
                      const std::vector<ConfigPair>& batch, double lambda) {
  require_eikonal_role(field);
  if (batch.empty()) throw std::invalid_argument("nes: empty batch");
  const ScalarProgram prog = build_pair_program(net, true);
  LossReport report;
  for (const auto& [q_s, q_e] : batch) {
    require_pair_dims(net, q_s, q_e);
    const PairLosses losses = pair_losses(prog, field, q_s, q_e, true);
    report.eikonal += losses.eikonal;
    report.divergence += losses.divergence;
  }
  const double n = static_cast<double>(batch.size());
  report.eikonal /= n;
  report.divergence /= n;
  report.total = report.eikonal + lambda * report.divergence;
  return report;
}

std::vector<LossReport> train(Mlp& net, const MetricField& field, const TrainConfig& config) {
  require_eikonal_role(field);
  validate_train_config(config);
  const int d = pair_config_dim(net);
  if (config.epochs == 0) return {};

  ScalarProgram prog = build_pair_program(net, true);
  const int n_params = prog.n_params();
  const int n_inputs = prog.n_inputs;

  std::mt19937_64 gen(config.seed);
  std::uniform_real_distribution<double> box_draw(config.box_lo, config.box_hi);

  // The metric-aware sampler draws pair endpoints from one RM-MALA pool
  // built up front; acceptance decides the final pool size.
  std::vector<Config> pool;
  if (config.sampler == PairSampler::kRmMala) {
    const MetricField path_field = path_field_from_eikonal(field);
    SamplerConfig sampler_config;
    sampler_config.epsilon = 0.5;
    sampler_config.n_burn = 1000;
    const int pool_target = std::max(10 * config.batch_size, 5000);
    sampler_config.n_sample = 3 * pool_target;
    sampler_config.dim = d;
    sampler_config.seed = gen();
    pool = run_rmmala(path_field, metric_volume_density(path_field), sampler_config).samples;
    if (pool.size() < 2) {
      throw std::runtime_error("nes: metric-aware sampler produced too few points");
    }
  }

  const int n_val = static_cast<int>(config.validation_fraction * config.batch_size);
  const int n_grad = config.batch_size - n_val;
  if (n_grad < 1) {
    throw std::invalid_argument("nes: validation fraction leaves no gradient pairs");
  }

  Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(n_params);
  Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(n_params);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  Workspace<Dual> ws1;
  Workspace<Dual2> ws2;
  std::vector<Dual> x1(n_inputs), padj1(n_params);
  std::vector<Dual2> x2(n_inputs), padj2(n_params);
  Eigen::MatrixXd grad_g(n_params, d);
  Eigen::VectorXd grad_div(n_params);
  Eigen::VectorXd batch_grad(n_params);
  Tangent g(d);

  std::vector<ConfigPair> batch(config.batch_size);
  std::vector<LossReport> history;
  history.reserve(config.epochs);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int p = 0; p < config.batch_size; ++p) {
      Config q_s(d), q_e(d);
      if (config.sampler == PairSampler::kRmMala) {
        std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
        q_s = pool[pick(gen)];
        q_e = pool[pick(gen)];
      } else {
        for (int k = 0; k < d; ++k) q_s[k] = box_draw(gen);
        for (int k = 0; k < d; ++k) q_e[k] = box_draw(gen);
      }
      batch[p] = {std::move(q_s), std::move(q_e)};
    }

    batch_grad.setZero();
    double eik_sum = 0.0, div_sum = 0.0;
    for (int p = 0; p < n_grad; ++p) {
      const auto& [q_s, q_e] = batch[p];
      const Eigen::VectorXd x = pair_input(q_s, q_e);
      const MetricTensor G = validated_metric(field(q_e));
      double trHA = 0.0;
      Eigen::VectorXd c;
      if (config.lambda > 0.0) {
        const Eigen::MatrixXd A = G.llt().solve(Eigen::MatrixXd::Identity(d, d));
        const auto gamma = christoffel(field, q_e);
        c = Eigen::VectorXd::Zero(d);
        for (int k = 0; k < d; ++k) {
          for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) c[k] += A(i, j) * gamma[k](i, j);
          }
        }
        // Direction i carries the unit tangent on q_e[i] and A e_i as the
        // second tangent, so out.d12 sums to A:H and the parameter adjoints
        // carry d(grad)/dtheta and d(A:H)/dtheta in one pass.
        for (int i = 0; i < d; ++i) {
          for (int k = 0; k < n_inputs; ++k) {
            const int local = k - d;
            x2[k] = {x[k], k == d + i ? 1.0 : 0.0,
                     local >= 0 ? A(local, i) : 0.0, 0.0};
          }
          const Dual2 out = sweep(prog, x2.data(), ws2, static_cast<Dual2*>(nullptr), padj2.data());
          g[i] = out.d1;
          trHA += out.d12;
          for (int k = 0; k < n_params; ++k) grad_g(k, i) = padj2[k].d1;
          if (i == 0) {
            for (int k = 0; k < n_params; ++k) grad_div[k] = padj2[k].d12;
          } else {
            for (int k = 0; k < n_params; ++k) grad_div[k] += padj2[k].d12;
          }
        }
      } else {
        for (int i = 0; i < d; ++i) {
          for (int k = 0; k < n_inputs; ++k) x1[k] = {x[k], k == d + i ? 1.0 : 0.0};
          const Dual out = sweep(prog, x1.data(), ws1, static_cast<Dual*>(nullptr), padj1.data());
          g[i] = out.t;
          for (int k = 0; k < n_params; ++k) grad_g(k, i) = padj1[k].t;
        }
      }

      const Eigen::VectorXd Gg = G * g;
      const double norm = std::sqrt(g.dot(Gg));
      const double eik = (norm - 1.0) * (norm - 1.0);
      eik_sum += eik;
      Eigen::VectorXd w;
      if (norm > 0.0) {
        w = (2.0 * (norm - 1.0) / norm) * Gg;
      } else {
        w = Eigen::VectorXd::Zero(d);
      }
      if (config.lambda > 0.0) {
        div_sum += trHA - c.dot(g);
        w -= config.lambda * c;
        batch_grad.noalias() += grad_g * w + config.lambda * grad_div;
      } else {
        batch_grad.noalias() += grad_g * w;
      }
    }

    const double inv_n = 1.0 / static_cast<double>(n_grad);
    batch_grad *= inv_n;
    LossReport report;
    report.epoch = epoch;
    report.eikonal = eik_sum * inv_n;
    report.divergence = config.lambda > 0.0 ? div_sum * inv_n : 0.0;
    report.total = report.eikonal + config.lambda * report.divergence;

    if (n_val > 0) {
      double val_eik = 0.0, val_div = 0.0;
      for (int p = n_grad; p < config.batch_size; ++p) {
        const PairLosses losses = pair_losses(prog, field, batch[p].first, batch[p].second,
                                              config.lambda > 0.0);
        val_eik += losses.eikonal;
        val_div += losses.divergence;
      }
      report.eikonal = val_eik / n_val;
      report.divergence = config.lambda > 0.0 ? val_div / n_val : 0.0;
      report.total = report.eikonal + config.lambda * report.divergence;
    }

    if (!std::isfinite(report.total) || !batch_grad.allFinite()) {
      for (int p = 0; p < n_grad; ++p) {
        const PairLosses losses = pair_losses(prog, field, batch[p].first, batch[p].second,
                                              config.lambda > 0.0);
        if (!std::isfinite(losses.eikonal + config.lambda * losses.divergence)) {
          throw std::runtime_error("nes: non-finite loss at epoch " + std::to_string(epoch) +
                                   " on pair " + describe_pair(batch[p].first, batch[p].second));
        }
      }
      throw std::runtime_error("nes: non-finite loss at epoch " + std::to_string(epoch));
    }
    history.push_back(report);

    const double t = static_cast<double>(epoch + 1);
    adam_m = beta1 * adam_m + (1.0 - beta1) * batch_grad;
    adam_v = beta2 * adam_v + (1.0 - beta2) * batch_grad.cwiseProduct(batch_grad);
    const double m_scale = 1.0 / (1.0 - std::pow(beta1, t));
    const double v_scale = 1.0 / (1.0 - std::pow(beta2, t));
    for (int k = 0; k < n_params; ++k) {
      const double m_hat = adam_m[k] * m_scale;
      const double v_hat = adam_v[k] * v_scale;
      net.params[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + adam_eps);
    }
    std::copy(net.params.data(), net.params.data() + n_params, prog.params.begin());
  }
  return history;
}

GeodesicPath backtrack_neural(const Mlp& net, const MetricField& field,
                              const Config& q_s, const Config& q_e,
                              double step, double tol) {
  require_pair_dims(net, q_s, q_e);
  require_eikonal_role(field);
  if (!(step > 0.0) || !(tol > 0.0)) {
    throw std::invalid_argument("nes backtracking: step and tol must be positive");
  }
  const ScalarProgram prog = build_pair_program(net, true);
  const int d = static_cast<int>(q_e.size());

  GeodesicPath path;
  path.points.push_back(q_e);
  const double separation = (q_e - q_s).norm();
  if (separation < tol) return path;

  const long budget = std::max<long>(1, static_cast<long>(std::ceil(10.0 * separation / step)));
  Config q = q_e;
  Config q_ref = q;
  int since_ref = 0;
  bool reached = false;
  for (long it = 0; it < budget && !reached; ++it) {
    const Tangent g = grad_input(prog, pair_input(q_s, q)).tail(d);
    const MetricTensor G = validated_metric(field(q));
    Tangent flow = G * g;
    const double flow_norm = flow.norm();
    if (!(flow_norm > 1e-14)) {
      throw std::runtime_error("nes backtracking: geodesic flow vanished");
    }
    q -= (step / flow_norm) * flow;
    for (int k = 0; k < d; ++k) q[k] = std::clamp(q[k], kBoxLo, kBoxHi);
    path.points.push_back(q);
    if ((q - q_s).norm() < tol) {
      path.points.push_back(q_s);
      reached = true;
    }
    if (++since_ref == 100) {
      if ((q - q_ref).norm() < 1e-9 * step) {
        throw std::runtime_error("nes backtracking: no progress toward the source");
      }
      q_ref = q;
      since_ref = 0;
    }
  }
  if (!reached) {
    throw std::runtime_error("nes backtracking: step budget exhausted");
  }

  path.segment_lengths.reserve(path.points.size() - 1);
  for (size_t i = 0; i + 1 < path.points.size(); ++i) {
    const Config mid = 0.5 * (path.points[i] + path.points[i + 1]);
    const MetricTensor G = validated_metric(field(mid));
    const Eigen::VectorXd delta = path.points[i + 1] - path.points[i];
    const double len = std::sqrt(delta.dot(G.llt().solve(delta)));
    path.segment_lengths.push_back(len);
    path.total_length += len;
  }
  return path;
}

}  // namespace geoflow
