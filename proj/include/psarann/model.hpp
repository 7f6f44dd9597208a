// PSAR-ANN model representation: y = rho W y + X beta + sum_i lambda_i
// F(z_i) + eps, where z_i is an affine neuron input. Holds the parameter
// layout, residual evaluation and the identification ordering.
#pragma once

#include "psarann/density.hpp"
#include "psarann/spatial_weights.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace psarann {

// Overflow-safe logistic. order 0: F, order 1: F' = F(1-F),
// order 2: F'' = F'(1-2F).
inline double logistic(double z, int order = 0) {
  double f;
  if (z >= 0.0) {
    f = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    f = e / (1.0 + e);
  }
  switch (order) {
    case 0: return f;
    case 1: return f * (1.0 - f);
    case 2: return f * (1.0 - f) * (1.0 - 2.0 * f);
    default: throw std::invalid_argument("logistic order must be 0, 1 or 2");
  }
}

struct ModelSpec {
  int q = 1;               // covariate count seen by the neurons
  int h = 1;               // neuron count
  DensityFamily family = DensityFamily::normal();
  bool intercept = false;  // constant column in the linear part
  bool neuron_bias = false;  // per-neuron centering offset gamma_i0
  bool linear = true;      // include the X beta term

  void validate() const {
    if (q < 0) throw std::invalid_argument("covariate count must be nonnegative");
    if (h < 0) throw std::invalid_argument("neuron count must be nonnegative");
  }
  // beta dimension
  int p() const { return (linear ? q : 0) + (intercept ? 1 : 0); }
  // gamma row length (center slot first when neuron_bias is on)
  int g() const { return q + (neuron_bias ? 1 : 0); }
  int dim() const { return p() + 1 + h + h * g(); }
};

// Flattening order: (beta, rho, lambda, gamma_1, ..., gamma_h).
struct ParamLayout {
  int p = 0, h = 0, g = 0;
  bool neuron_bias = false;

  explicit ParamLayout(const ModelSpec& spec)
      : p(spec.p()), h(spec.h), g(spec.g()), neuron_bias(spec.neuron_bias) {}

  int dim() const { return p + 1 + h + h * g; }
  int rho_index() const { return p; }
  int lambda_offset() const { return p + 1; }
  int gamma_offset(int i) const { return p + 1 + h + i * g; }
  // index of gamma_{i1}, the first neuron weight (Restriction 2)
  int gamma_first_weight(int i) const { return gamma_offset(i) + (neuron_bias ? 1 : 0); }
};

struct ParameterVector {
  Eigen::VectorXd beta;    // length p
  double rho = 0.0;
  Eigen::VectorXd lambda;  // length h
  Eigen::MatrixXd gamma;   // h x g, row i = neuron i ([center,] weights)

  int h() const { return static_cast<int>(lambda.size()); }

  Eigen::VectorXd flatten(const ParamLayout& layout) const {
    Eigen::VectorXd out(layout.dim());
    out.head(layout.p) = beta;
    out[layout.rho_index()] = rho;
    out.segment(layout.lambda_offset(), layout.h) = lambda;
    for (int i = 0; i < layout.h; ++i)
      out.segment(layout.gamma_offset(i), layout.g) = gamma.row(i);
    return out;
  }

  static ParameterVector from_flat(const ParamLayout& layout, const Eigen::VectorXd& x) {
    if (x.size() != layout.dim())
      throw std::invalid_argument("flat parameter vector has wrong length");
    ParameterVector t;
    t.beta = x.head(layout.p);
    t.rho = x[layout.rho_index()];
    t.lambda = x.segment(layout.lambda_offset(), layout.h);
    t.gamma.resize(layout.h, layout.g);
    for (int i = 0; i < layout.h; ++i)
      t.gamma.row(i) = x.segment(layout.gamma_offset(i), layout.g);
    return t;
  }

  void check_shape(const ModelSpec& spec) const {
    if (beta.size() != spec.p()) throw std::invalid_argument("beta has wrong length");
    if (lambda.size() != spec.h) throw std::invalid_argument("lambda has wrong length");
    if (gamma.rows() != spec.h || (spec.h > 0 && gamma.cols() != spec.g()))
      throw std::invalid_argument("gamma has wrong shape");
    if (!beta.allFinite() || !std::isfinite(rho) || !lambda.allFinite() || !gamma.allFinite())
      throw std::invalid_argument("parameter vector contains non-finite values");
  }
};

struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // n x q raw covariates
  WeightMatrix w;

  int n() const { return static_cast<int>(y.size()); }

  void validate() const {
    if (y.size() < 1) throw std::invalid_argument("dataset is empty");
    if (x.rows() != y.size()) throw std::invalid_argument("X and y row counts differ");
    if (w.n != y.size()) throw std::invalid_argument("weight matrix dimension mismatch");
    if (!y.allFinite() || !x.allFinite())
      throw std::invalid_argument("dataset contains non-finite values");
  }
};

// Design matrix for the linear part ([1 | X], [1], [X] or empty).
inline Eigen::MatrixXd linear_design(const Eigen::MatrixXd& x, const ModelSpec& spec) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd d(n, spec.p());
  int col = 0;
  if (spec.intercept) d.col(col++).setOnes();
  if (spec.linear) d.rightCols(spec.q) = x;
  return d;
}

namespace detail {

// Neuron input values: z_i(s) = gamma_i . x_s, or with a center,
// z_i(s) = sum_j gamma_ij (x_sj - gamma_i0).
inline void neuron_inputs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                          bool neuron_bias, Eigen::MatrixXd& z) {
  const int h = static_cast<int>(gamma.rows());
  z.resize(x.rows(), h);
  if (h == 0) return;
  if (neuron_bias) {
    Eigen::MatrixXd weights = gamma.rightCols(gamma.cols() - 1);
    z.noalias() = x * weights.transpose();
    for (int i = 0; i < h; ++i) z.col(i).array() -= gamma(i, 0) * weights.row(i).sum();
  } else {
    z.noalias() = x * gamma.transpose();
  }
}

// Sum of per-neuron terms in a neuron-order-independent way: the addends
// are sorted by value first, so permuting neurons cannot change a single
// bit of the result.
inline double stable_neuron_sum(double* buf, int h) {
  if (h == 0) return 0.0;
  if (h == 1) return buf[0];
  if (h == 2) return buf[0] + buf[1];
  std::sort(buf, buf + h);
  double acc = 0.0;
  for (int i = 0; i < h; ++i) acc += buf[i];
  return acc;
}

}  // namespace detail

// sum_i lambda_i F(z_i(s)) per location.
inline Eigen::VectorXd nn_component(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                                    const Eigen::VectorXd& lambda, bool neuron_bias = false) {
  const int h = static_cast<int>(lambda.size());
  if (gamma.rows() != h) throw std::invalid_argument("gamma/lambda neuron counts differ");
  if (h > 0 && gamma.cols() != x.cols() + (neuron_bias ? 1 : 0))
    throw std::invalid_argument("gamma row length does not match the covariates");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  if (h == 0) return out;
  Eigen::MatrixXd z;
  detail::neuron_inputs(x, gamma, neuron_bias, z);
  std::vector<double> buf(h);
  for (int s = 0; s < x.rows(); ++s) {
    for (int i = 0; i < h; ++i) buf[i] = lambda[i] * logistic(z(s, i));
    out[s] = detail::stable_neuron_sum(buf.data(), h);
  }
  return out;
}

// eps(theta) = (I - rho W) Y - X beta - F(Z) lambda. Defined for any rho.
inline Eigen::VectorXd residuals(const ParameterVector& theta, const Dataset& data,
                                 const ModelSpec& spec) {
  data.validate();
  theta.check_shape(spec);
  if (data.x.cols() != spec.q) throw std::invalid_argument("covariate count mismatch");
  Eigen::VectorXd eps = data.y - theta.rho * (data.w.w * data.y);
  if (spec.p() > 0) eps.noalias() -= linear_design(data.x, spec) * theta.beta;
  if (spec.h > 0) eps -= nn_component(data.x, theta.gamma, theta.lambda, spec.neuron_bias);
  return eps;
}

struct CanonicalizeFlags {
  bool reducible = false;       // some lambda_i == 0
  bool sign_violation = false;  // some gamma_i1 <= 0
};

struct CanonicalizeResult {
  ParameterVector theta;
  CanonicalizeFlags flags;
};

// Reorders neurons so lambda_1 >= ... >= lambda_h (ties broken by the
// lexicographically smaller gamma row) and reports identification
// violations. Residuals are untouched by the permutation.
inline CanonicalizeResult canonicalize(const ParameterVector& theta) {
  CanonicalizeResult out;
  out.theta = theta;
  const int h = theta.h();
  std::vector<int> order(h);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (theta.lambda[a] != theta.lambda[b]) return theta.lambda[a] > theta.lambda[b];
    for (int j = 0; j < theta.gamma.cols(); ++j)
      if (theta.gamma(a, j) != theta.gamma(b, j)) return theta.gamma(a, j) < theta.gamma(b, j);
    return a < b;
  });
  for (int i = 0; i < h; ++i) {
    out.theta.lambda[i] = theta.lambda[order[i]];
    if (theta.gamma.cols() > 0) out.theta.gamma.row(i) = theta.gamma.row(order[i]);
    if (theta.lambda[order[i]] == 0.0) out.flags.reducible = true;
  }
  return out;
}

// gamma_i1 (the first non-center weight) per neuron, for Restriction 2 checks.
inline double gamma_first_weight(const ParameterVector& theta, int i, bool neuron_bias) {
  return theta.gamma(i, neuron_bias ? 1 : 0);
}

inline CanonicalizeResult canonicalize(const ParameterVector& theta, bool neuron_bias) {
  CanonicalizeResult out = canonicalize(theta);
  for (int i = 0; i < theta.h(); ++i)
    if (theta.gamma.cols() > 0 && gamma_first_weight(out.theta, i, neuron_bias) <= 0.0)
      out.flags.sign_violation = true;
  return out;
}

}  // namespace psarann
