// Differentiation engine for scalar programs built from affine maps, smooth
// elementwise activations, products, Euclidean distances and planar forward
// kinematics. Reverse accumulation gives exact input and parameter gradients;
// running the same sweeps in jet arithmetic gives second derivatives (one
// tangent) and the mixed third-order terms needed by training (two tangents).
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace geoflow {

// First-order jet: value and one directional tangent.
struct Dual {
  double v = 0.0;
  double t = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.t + b.t}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.t - b.t}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.t + a.t * b.v}; }
inline Dual operator*(double c, Dual a) { return {c * a.v, c * a.t}; }
inline Dual& operator+=(Dual& a, Dual b) { a.v += b.v; a.t += b.t; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a.v -= b.v; a.t -= b.t; return a; }

// Second-order jet carrying two tangent directions and their cross term:
// for y = f(x + a u + b w), d12 holds d2y/dadb at a = b = 0.
struct Dual2 {
  double v = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double d12 = 0.0;
};

inline Dual2 operator+(Dual2 a, Dual2 b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d12 + b.d12};
}
inline Dual2 operator-(Dual2 a, Dual2 b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d12 - b.d12};
}
inline Dual2 operator*(Dual2 a, Dual2 b) {
  return {a.v * b.v,
          a.v * b.d1 + a.d1 * b.v,
          a.v * b.d2 + a.d2 * b.v,
          a.v * b.d12 + a.d12 * b.v + a.d1 * b.d2 + a.d2 * b.d1};
}
inline Dual2 operator*(double c, Dual2 a) { return {c * a.v, c * a.d1, c * a.d2, c * a.d12}; }
inline Dual2& operator+=(Dual2& a, Dual2 b) {
  a.v += b.v; a.d1 += b.d1; a.d2 += b.d2; a.d12 += b.d12;
  return a;
}
inline Dual2& operator-=(Dual2& a, Dual2 b) {
  a.v -= b.v; a.d1 -= b.d1; a.d2 -= b.d2; a.d12 -= b.d12;
  return a;
}

// Composition with a scalar function given its derivatives at the value point.
// Each jet type consumes as many derivatives as it can propagate.
inline double jet_apply(double, double f, double, double) { return f; }
inline Dual jet_apply(Dual x, double f, double fp, double) { return {f, fp * x.t}; }
inline Dual2 jet_apply(Dual2 x, double f, double fp, double fpp) {
  return {f, fp * x.d1, fp * x.d2, fp * x.d12 + fpp * x.d1 * x.d2};
}

inline double jet_value(double x) { return x; }
inline double jet_value(Dual x) { return x.v; }
inline double jet_value(Dual2 x) { return x.v; }

enum class OpKind : uint8_t {
  kGather,      // out[i] = input[idx[i]]
  kConstVec,    // out = fixed payload
  kLinear,      // out = W in + b; W row-major then b at param_offset
  kTanh,        // elementwise
  kSoftplus,    // elementwise
  kSquare,      // elementwise
  kAdd,         // out = a + b
  kSub,         // out = a - b
  kMul,         // out = a .* b
  kAvg2,        // out = (a + b) / 2
  kScale,       // out = c * a
  kEuclidDist,  // out = ||a - b||, scalar; derivative defined as 0 at a = b
  kPlanarFk,    // out = planar 2-link forward kinematics of in; payload {l1, l2}
};

struct Op {
  OpKind kind;
  int out = -1;
  int a = -1;
  int b = -1;
  int param_offset = -1;
  int in_dim = 0;
  int out_dim = 0;
  double scale = 1.0;
  std::vector<int> idx;
  std::vector<double> data;
};

// A scalar-valued computation with its flattened parameter vector. Registers
// are write-once; the builder methods below each allocate the result register
// and return its id.
struct ScalarProgram {
  int n_inputs = 0;
  int output_reg = -1;
  std::vector<Op> ops;
  std::vector<int> reg_width;
  std::vector<double> params;

  int n_params() const { return static_cast<int>(params.size()); }

  int add_gather(const std::vector<int>& idx);
  int add_const(const std::vector<double>& values);
  // Fresh parameter block, Glorot-style range is the caller's concern;
  // parameters are appended zero-initialized.
  int add_linear(int in, int out_dim);
  // Reuses the parameter block of a previous linear layer (weight sharing).
  int add_linear_shared(int in, int out_dim, int param_offset);
  int add_tanh(int in);
  int add_softplus(int in);
  int add_square(int in);
  int add_add(int a, int b);
  int add_sub(int a, int b);
  int add_mul(int a, int b);
  int add_avg2(int a, int b);
  int add_scale(int a, double c);
  int add_euclid_dist(int a, int b);
  int add_planar_fk(int q, double l1, double l2);
  void set_output(int reg);

 private:
  int new_reg(int width);
  int require_reg(int reg, const char* op) const;
};

// Reusable evaluation buffers; sized on first use with a given program.
template <class S>
struct Workspace {
  std::vector<std::vector<S>> regs;
  std::vector<std::vector<S>> adj;
};

// Forward pass in jet arithmetic, then (when either adjoint target is given)
// reverse accumulation seeded with unit output adjoint. x has n_inputs
// entries; x_adj and param_adj may be null independently. Returns the output.
template <class S>
S sweep(const ScalarProgram& prog, const S* x, Workspace<S>& ws, S* x_adj, S* param_adj);

double value(const ScalarProgram& prog, const Eigen::VectorXd& x);

// Exact reverse-mode gradient with respect to the inputs.
Eigen::VectorXd grad_input(const ScalarProgram& prog, const Eigen::VectorXd& x);

// Exact reverse-mode gradient with respect to the flattened parameters.
Eigen::VectorXd grad_params(const ScalarProgram& prog, const Eigen::VectorXd& x);

// Forward-over-reverse Hessian: one tangent sweep per input direction.
Eigen::MatrixXd hessian_input(const ScalarProgram& prog, const Eigen::VectorXd& x);

}  // namespace geoflow
