#include "diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geoflow {

namespace {

template <class S>
S from_double(double c) {
  return S{c};
}

template <class S>
S jet_sin(S x) {
  const double v = jet_value(x);
  return jet_apply(x, std::sin(v), std::cos(v), -std::sin(v));
}

template <class S>
S jet_cos(S x) {
  const double v = jet_value(x);
  return jet_apply(x, std::cos(v), -std::sin(v), -std::cos(v));
}

double softplus_value(double v) {
  // log(1 + e^v) without overflow on either tail.
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid_value(double v) {
  return v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace

int ScalarProgram::new_reg(int width) {
  reg_width.push_back(width);
  return static_cast<int>(reg_width.size()) - 1;
}

int ScalarProgram::require_reg(int reg, const char* op) const {
  if (reg < 0 || reg >= static_cast<int>(reg_width.size()))
    throw std::invalid_argument(std::string(op) + ": unknown register " + std::to_string(reg));
  return reg_width[reg];
}

int ScalarProgram::add_gather(const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("gather: empty index list");
  Op op;
  op.kind = OpKind::kGather;
  op.idx = idx;
  for (int i : idx) {
    if (i < 0) throw std::invalid_argument("gather: negative input index");
    n_inputs = std::max(n_inputs, i + 1);
  }
  op.out = new_reg(static_cast<int>(idx.size()));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_const(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("const: empty payload");
  Op op;
  op.kind = OpKind::kConstVec;
  op.data = values;
  op.out = new_reg(static_cast<int>(values.size()));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_linear(int in, int out_dim) {
  const int in_dim = require_reg(in, "linear");
  if (out_dim <= 0) throw std::invalid_argument("linear: non-positive output width");
  Op op;
  op.kind = OpKind::kLinear;
  op.a = in;
  op.in_dim = in_dim;
  op.out_dim = out_dim;
  op.param_offset = static_cast<int>(params.size());
  params.resize(params.size() + static_cast<size_t>(in_dim) * out_dim + out_dim, 0.0);
  op.out = new_reg(out_dim);
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_linear_shared(int in, int out_dim, int param_offset) {
  const int in_dim = require_reg(in, "linear");
  const size_t need = static_cast<size_t>(param_offset) +
                      static_cast<size_t>(in_dim) * out_dim + out_dim;
  if (param_offset < 0 || need > params.size())
    throw std::invalid_argument("linear: shared parameter block out of range");
  Op op;
  op.kind = OpKind::kLinear;
  op.a = in;
  op.in_dim = in_dim;
  op.out_dim = out_dim;
  op.param_offset = param_offset;
  op.out = new_reg(out_dim);
  ops.push_back(std::move(op));
  return ops.back().out;
}

namespace {
int unary_width(const ScalarProgram& p, int in, const char* name) {
  if (in < 0 || in >= static_cast<int>(p.reg_width.size()))
    throw std::invalid_argument(std::string(name) + ": unknown register");
  return p.reg_width[in];
}
}  // namespace

int ScalarProgram::add_tanh(int in) {
  Op op;
  op.kind = OpKind::kTanh;
  op.a = in;
  op.out = new_reg(unary_width(*this, in, "tanh"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_softplus(int in) {
  Op op;
  op.kind = OpKind::kSoftplus;
  op.a = in;
  op.out = new_reg(unary_width(*this, in, "softplus"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_square(int in) {
  Op op;
  op.kind = OpKind::kSquare;
  op.a = in;
  op.out = new_reg(unary_width(*this, in, "square"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

namespace {
int binary_width(const ScalarProgram& p, int a, int b, const char* name) {
  if (a < 0 || b < 0 || a >= static_cast<int>(p.reg_width.size()) ||
      b >= static_cast<int>(p.reg_width.size()))
    throw std::invalid_argument(std::string(name) + ": unknown register");
  if (p.reg_width[a] != p.reg_width[b])
    throw std::invalid_argument(std::string(name) + ": operand widths differ");
  return p.reg_width[a];
}
}  // namespace

int ScalarProgram::add_add(int a, int b) {
  Op op;
  op.kind = OpKind::kAdd;
  op.a = a;
  op.b = b;
  op.out = new_reg(binary_width(*this, a, b, "add"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_sub(int a, int b) {
  Op op;
  op.kind = OpKind::kSub;
  op.a = a;
  op.b = b;
  op.out = new_reg(binary_width(*this, a, b, "sub"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_mul(int a, int b) {
  Op op;
  op.kind = OpKind::kMul;
  op.a = a;
  op.b = b;
  op.out = new_reg(binary_width(*this, a, b, "mul"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_avg2(int a, int b) {
  Op op;
  op.kind = OpKind::kAvg2;
  op.a = a;
  op.b = b;
  op.out = new_reg(binary_width(*this, a, b, "avg2"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_scale(int a, double c) {
  Op op;
  op.kind = OpKind::kScale;
  op.a = a;
  op.scale = c;
  op.out = new_reg(require_reg(a, "scale"));
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_euclid_dist(int a, int b) {
  Op op;
  op.kind = OpKind::kEuclidDist;
  op.a = a;
  op.b = b;
  binary_width(*this, a, b, "euclid_dist");
  op.out = new_reg(1);
  ops.push_back(std::move(op));
  return ops.back().out;
}

int ScalarProgram::add_planar_fk(int q, double l1, double l2) {
  if (require_reg(q, "planar_fk") != 2)
    throw std::invalid_argument("planar_fk: expects a width-2 joint register");
  Op op;
  op.kind = OpKind::kPlanarFk;
  op.a = q;
  op.data = {l1, l2};
  op.out = new_reg(2);
  ops.push_back(std::move(op));
  return ops.back().out;
}

void ScalarProgram::set_output(int reg) {
  if (require_reg(reg, "output") != 1)
    throw std::invalid_argument("output: register must be scalar");
  output_reg = reg;
}

template <class S>
S sweep(const ScalarProgram& prog, const S* x, Workspace<S>& ws, S* x_adj, S* param_adj) {
  if (prog.output_reg < 0) throw std::invalid_argument("sweep: program has no output");
  const size_t n_regs = prog.reg_width.size();
  ws.regs.resize(n_regs);
  for (size_t r = 0; r < n_regs; ++r)
    ws.regs[r].assign(static_cast<size_t>(prog.reg_width[r]), S{});

  for (const Op& op : prog.ops) {
    std::vector<S>& out = ws.regs[op.out];
    switch (op.kind) {
      case OpKind::kGather:
        for (size_t i = 0; i < op.idx.size(); ++i) out[i] = x[op.idx[i]];
        break;
      case OpKind::kConstVec:
        for (size_t i = 0; i < op.data.size(); ++i) out[i] = from_double<S>(op.data[i]);
        break;
      case OpKind::kLinear: {
        const std::vector<S>& in = ws.regs[op.a];
        const double* w = prog.params.data() + op.param_offset;
        const double* bias = w + static_cast<size_t>(op.in_dim) * op.out_dim;
        for (int j = 0; j < op.out_dim; ++j) {
          S acc = from_double<S>(bias[j]);
          const double* row = w + static_cast<size_t>(j) * op.in_dim;
          for (int k = 0; k < op.in_dim; ++k) acc += row[k] * in[k];
          out[j] = acc;
        }
        break;
      }
      case OpKind::kTanh: {
        const std::vector<S>& in = ws.regs[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const double t = std::tanh(jet_value(in[i]));
          out[i] = jet_apply(in[i], t, 1.0 - t * t, -2.0 * t * (1.0 - t * t));
        }
        break;
      }
      case OpKind::kSoftplus: {
        const std::vector<S>& in = ws.regs[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const double v = jet_value(in[i]);
          const double sg = sigmoid_value(v);
          out[i] = jet_apply(in[i], softplus_value(v), sg, sg * (1.0 - sg));
        }
        break;
      }
      case OpKind::kSquare: {
        const std::vector<S>& in = ws.regs[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const double v = jet_value(in[i]);
          out[i] = jet_apply(in[i], v * v, 2.0 * v, 2.0);
        }
        break;
      }
      case OpKind::kAdd: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        break;
      }
      case OpKind::kSub: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
        break;
      }
      case OpKind::kMul: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
        break;
      }
      case OpKind::kAvg2: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        for (size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
        break;
      }
      case OpKind::kScale: {
        const std::vector<S>& a = ws.regs[op.a];
        for (size_t i = 0; i < a.size(); ++i) out[i] = op.scale * a[i];
        break;
      }
      case OpKind::kEuclidDist: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        S ss{};
        for (size_t i = 0; i < a.size(); ++i) {
          const S d = a[i] - b[i];
          ss += d * d;
        }
        const double sv = jet_value(ss);
        if (sv <= 0.0) {
          out[0] = S{};  // coincident points: distance 0 with zero derivative
        } else {
          const double r = std::sqrt(sv);
          out[0] = jet_apply(ss, r, 0.5 / r, -0.25 / (r * sv));
        }
        break;
      }
      case OpKind::kPlanarFk: {
        const std::vector<S>& q = ws.regs[op.a];
        const double l1 = op.data[0], l2 = op.data[1];
        const S q12 = q[0] + q[1];
        out[0] = l1 * jet_cos(q[0]) + l2 * jet_cos(q12);
        out[1] = l1 * jet_sin(q[0]) + l2 * jet_sin(q12);
        break;
      }
    }
  }

  const S out_value = ws.regs[prog.output_reg][0];
  if (!x_adj && !param_adj) return out_value;

  ws.adj.resize(n_regs);
  for (size_t r = 0; r < n_regs; ++r)
    ws.adj[r].assign(static_cast<size_t>(prog.reg_width[r]), S{});
  if (x_adj)
    for (int i = 0; i < prog.n_inputs; ++i) x_adj[i] = S{};
  if (param_adj)
    for (int i = 0; i < prog.n_params(); ++i) param_adj[i] = S{};
  ws.adj[prog.output_reg][0] = from_double<S>(1.0);

  for (auto it = prog.ops.rbegin(); it != prog.ops.rend(); ++it) {
    const Op& op = *it;
    const std::vector<S>& ybar = ws.adj[op.out];
    switch (op.kind) {
      case OpKind::kGather:
        if (x_adj)
          for (size_t i = 0; i < op.idx.size(); ++i) x_adj[op.idx[i]] += ybar[i];
        break;
      case OpKind::kConstVec:
        break;
      case OpKind::kLinear: {
        const std::vector<S>& in = ws.regs[op.a];
        std::vector<S>& in_adj = ws.adj[op.a];
        const double* w = prog.params.data() + op.param_offset;
        for (int j = 0; j < op.out_dim; ++j) {
          const S yj = ybar[j];
          const double* row = w + static_cast<size_t>(j) * op.in_dim;
          for (int k = 0; k < op.in_dim; ++k) in_adj[k] += row[k] * yj;
        }
        if (param_adj) {
          S* wa = param_adj + op.param_offset;
          S* ba = wa + static_cast<size_t>(op.in_dim) * op.out_dim;
          for (int j = 0; j < op.out_dim; ++j) {
            const S yj = ybar[j];
            S* row = wa + static_cast<size_t>(j) * op.in_dim;
            for (int k = 0; k < op.in_dim; ++k) row[k] += yj * in[k];
            ba[j] += yj;
          }
        }
        break;
      }
      case OpKind::kTanh: {
        const std::vector<S>& in = ws.regs[op.a];
        std::vector<S>& in_adj = ws.adj[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const double t = std::tanh(jet_value(in[i]));
          const double fp = 1.0 - t * t;
          // derivative jet of tanh needs one order more: f', f'', f'''
          const S dj = jet_apply(in[i], fp, -2.0 * t * fp, -2.0 * fp * (1.0 - 3.0 * t * t));
          in_adj[i] += ybar[i] * dj;
        }
        break;
      }
      case OpKind::kSoftplus: {
        const std::vector<S>& in = ws.regs[op.a];
        std::vector<S>& in_adj = ws.adj[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const double sg = sigmoid_value(jet_value(in[i]));
          const double fpp = sg * (1.0 - sg);
          const S dj = jet_apply(in[i], sg, fpp, fpp * (1.0 - 2.0 * sg));
          in_adj[i] += ybar[i] * dj;
        }
        break;
      }
      case OpKind::kSquare: {
        const std::vector<S>& in = ws.regs[op.a];
        std::vector<S>& in_adj = ws.adj[op.a];
        for (size_t i = 0; i < in.size(); ++i) {
          const S dj = jet_apply(in[i], 2.0 * jet_value(in[i]), 2.0, 0.0);
          in_adj[i] += ybar[i] * dj;
        }
        break;
      }
      case OpKind::kAdd: {
        std::vector<S>& aa = ws.adj[op.a];
        std::vector<S>& bb = ws.adj[op.b];
        for (size_t i = 0; i < ybar.size(); ++i) {
          aa[i] += ybar[i];
          bb[i] += ybar[i];
        }
        break;
      }
      case OpKind::kSub: {
        std::vector<S>& aa = ws.adj[op.a];
        std::vector<S>& bb = ws.adj[op.b];
        for (size_t i = 0; i < ybar.size(); ++i) {
          aa[i] += ybar[i];
          bb[i] -= ybar[i];
        }
        break;
      }
      case OpKind::kMul: {
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        std::vector<S>& aa = ws.adj[op.a];
        std::vector<S>& bb = ws.adj[op.b];
        for (size_t i = 0; i < ybar.size(); ++i) {
          aa[i] += ybar[i] * b[i];
          bb[i] += ybar[i] * a[i];
        }
        break;
      }
      case OpKind::kAvg2: {
        std::vector<S>& aa = ws.adj[op.a];
        std::vector<S>& bb = ws.adj[op.b];
        for (size_t i = 0; i < ybar.size(); ++i) {
          const S half = 0.5 * ybar[i];
          aa[i] += half;
          bb[i] += half;
        }
        break;
      }
      case OpKind::kScale: {
        std::vector<S>& aa = ws.adj[op.a];
        for (size_t i = 0; i < ybar.size(); ++i) aa[i] += op.scale * ybar[i];
        break;
      }
      case OpKind::kEuclidDist: {
        const S r = ws.regs[op.out][0];
        const double rv = jet_value(r);
        if (rv <= 0.0) break;
        const std::vector<S>& a = ws.regs[op.a];
        const std::vector<S>& b = ws.regs[op.b];
        std::vector<S>& aa = ws.adj[op.a];
        std::vector<S>& bb = ws.adj[op.b];
        const S rinv = jet_apply(r, 1.0 / rv, -1.0 / (rv * rv), 2.0 / (rv * rv * rv));
        const S coeff = ybar[0] * rinv;
        for (size_t i = 0; i < a.size(); ++i) {
          const S contrib = coeff * (a[i] - b[i]);
          aa[i] += contrib;
          bb[i] -= contrib;
        }
        break;
      }
      case OpKind::kPlanarFk: {
        const std::vector<S>& q = ws.regs[op.a];
        std::vector<S>& qa = ws.adj[op.a];
        const double l1 = op.data[0], l2 = op.data[1];
        const S s1 = jet_sin(q[0]);
        const S c1 = jet_cos(q[0]);
        const S q12 = q[0] + q[1];
        const S s12 = jet_sin(q12);
        const S c12 = jet_cos(q12);
        const S j00 = (-l1) * s1 - l2 * s12;
        const S j01 = (-l2) * s12;
        const S j10 = l1 * c1 + l2 * c12;
        const S j11 = l2 * c12;
        qa[0] += ybar[0] * j00 + ybar[1] * j10;
        qa[1] += ybar[0] * j01 + ybar[1] * j11;
        break;
      }
    }
  }

  return out_value;
}

template double sweep<double>(const ScalarProgram&, const double*, Workspace<double>&, double*,
                              double*);
template Dual sweep<Dual>(const ScalarProgram&, const Dual*, Workspace<Dual>&, Dual*, Dual*);
template Dual2 sweep<Dual2>(const ScalarProgram&, const Dual2*, Workspace<Dual2>&, Dual2*,
                            Dual2*);

namespace {
void check_input_size(const ScalarProgram& prog, const Eigen::VectorXd& x) {
  if (x.size() != prog.n_inputs)
    throw std::invalid_argument("program expects " + std::to_string(prog.n_inputs) +
                                " inputs, got " + std::to_string(x.size()));
}
}  // namespace

double value(const ScalarProgram& prog, const Eigen::VectorXd& x) {
  check_input_size(prog, x);
  Workspace<double> ws;
  return sweep<double>(prog, x.data(), ws, nullptr, nullptr);
}

Eigen::VectorXd grad_input(const ScalarProgram& prog, const Eigen::VectorXd& x) {
  check_input_size(prog, x);
  Workspace<double> ws;
  Eigen::VectorXd g(prog.n_inputs);
  sweep<double>(prog, x.data(), ws, g.data(), nullptr);
  return g;
}

Eigen::VectorXd grad_params(const ScalarProgram& prog, const Eigen::VectorXd& x) {
  check_input_size(prog, x);
  Workspace<double> ws;
  Eigen::VectorXd g(prog.n_params());
  sweep<double>(prog, x.data(), ws, nullptr, g.data());
  return g;
}

Eigen::MatrixXd hessian_input(const ScalarProgram& prog, const Eigen::VectorXd& x) {
  check_input_size(prog, x);
  const int n = prog.n_inputs;
  Workspace<Dual> ws;
  std::vector<Dual> xd(n);
  std::vector<Dual> xadj(n);
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) xd[j] = {x[j], j == i ? 1.0 : 0.0};
    sweep<Dual>(prog, xd.data(), ws, xadj.data(), nullptr);
    for (int j = 0; j < n; ++j) h(j, i) = xadj[j].t;
  }
  return h;
}

}  // namespace geoflow
