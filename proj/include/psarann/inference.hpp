// Asymptotic covariance (A-hat, B-hat, Omega-hat), standard errors and
// confidence intervals, Moran's I residual diagnostics, AIC and the
// likelihood-ratio test.
#pragma once

#include "psarann/likelihood.hpp"
#include "psarann/model.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace psarann {

struct CovarianceEstimate {
  Eigen::MatrixXd a_hat;      // -(1/n) sum_s d2 l_s
  Eigen::MatrixXd b_hat;      // (1/n) sum_s (d l_s)(d l_s)'
  Eigen::MatrixXd omega_hat;  // A^-1 B A^-1
  Eigen::MatrixXd omega_info; // A^-1, the inverse-information form
  Eigen::VectorXd se;         // sqrt(diag(omega_hat) / n)
  double a_condition = 0.0;
  bool pseudo_inverse = false;  // A-hat was near singular
};

// Per-location contributions l_s = (1/n) ln|I - rho W| + ln f(eps_s),
// accumulated into the averaged Hessian and outer-product-of-scores
// estimators. The rho derivatives of the shared Jacobian term use the
// spectrum sums.
inline CovarianceEstimate asymptotic_covariance(const ParameterVector& theta,
                                                const Dataset& data, const ModelSpec& spec) {
  if (!spec.family.has_curvature())
    throw std::domain_error(
        "asymptotic covariance is unavailable for the Laplace family (no second "
        "derivative at 0)");
  LikelihoodWorkspace ws(data, spec);
  ws.prepare(theta, 2);
  const ParamLayout& layout = ws.layout();
  const int n = data.n();
  const int dim = layout.dim();
  const int rho_idx = layout.rho_index();

  const double ld_grad_per = log_det_grad(theta.rho, ws.spectrum()) / n;
  const double ld_hess_total = log_det_hess(theta.rho, ws.spectrum());

  const Eigen::MatrixXd deps = ws.depsilon_matrix(theta);
  const Eigen::VectorXd& psi = ws.psi();
  const Eigen::VectorXd& u = ws.curvature();

  // neuron geometry reused at every location
  std::vector<double> wsum(spec.h, 0.0), center(spec.h, 0.0);
  for (int i = 0; i < spec.h; ++i) {
    if (spec.neuron_bias) {
      wsum[i] = theta.gamma.row(i).tail(spec.q).sum();
      center[i] = theta.gamma(i, 0);
    }
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd dls(dim), t(layout.g);
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd d = deps.row(s).transpose();
    dls.noalias() = psi[s] * d;
    dls[rho_idx] += ld_grad_per;
    b.noalias() += dls * dls.transpose();
    a.noalias() -= u[s] * d * d.transpose();
    // -psi * (second derivatives of eps); only the network blocks are nonzero
    for (int i = 0; i < spec.h; ++i) {
      const int li = layout.lambda_offset() + i;
      const int off = layout.gamma_offset(i);
      const double fp = ws.fp()(s, i);
      const double fs = ws.fs()(s, i);
      if (spec.neuron_bias) {
        t[0] = -wsum[i];
        for (int j = 0; j < spec.q; ++j) t[1 + j] = data.x(s, j) - center[i];
      } else {
        for (int j = 0; j < spec.q; ++j) t[j] = data.x(s, j);
      }
      for (int k = 0; k < layout.g; ++k) a(li, off + k) += psi[s] * fp * t[k];
      const double lam = theta.lambda[i];
      for (int j = 0; j < layout.g; ++j)
        for (int k = j; k < layout.g; ++k)
          a(off + j, off + k) += psi[s] * lam * fs * t[j] * t[k];
      if (spec.neuron_bias)
        for (int k = 1; k < layout.g; ++k) a(off, off + k) -= psi[s] * lam * fp;
    }
  }
  a(rho_idx, rho_idx) -= ld_hess_total;
  a /= n;
  b /= n;
  for (int i = 0; i < dim; ++i)  // exact symmetry
    for (int j = i + 1; j < dim; ++j) {
      a(j, i) = a(i, j);
      b(j, i) = b(i, j);
    }

  CovarianceEstimate out;
  out.a_hat = a;
  out.b_hat = b;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double ev_max = ev.cwiseAbs().maxCoeff();
  const double floor = 1e-10 * ev_max;
  Eigen::VectorXd inv_ev(dim);
  double ev_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    ev_min = std::min(ev_min, std::abs(ev[i]));
    if (std::abs(ev[i]) <= floor) {
      inv_ev[i] = 0.0;
      out.pseudo_inverse = true;
    } else {
      inv_ev[i] = 1.0 / ev[i];
    }
  }
  out.a_condition = ev_min > 0.0 ? ev_max / ev_min : std::numeric_limits<double>::infinity();
  Eigen::MatrixXd a_inv =
      eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
  out.omega_info = a_inv;
  out.omega_hat = a_inv * b * a_inv;
  out.se.resize(dim);
  for (int i = 0; i < dim; ++i) {
    const double v = out.omega_hat(i, i);
    out.se[i] = v >= 0.0 ? std::sqrt(v / n) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct Interval {
  double lo = 0.0, hi = 0.0;
};

inline std::vector<Interval> confidence_intervals(const CovarianceEstimate& cov,
                                                  const Eigen::VectorXd& theta_flat,
                                                  double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0,1)");
  boost::math::normal_distribution<double> z;
  const double zq = boost::math::quantile(z, 0.5 * (1.0 + level));
  std::vector<Interval> out(theta_flat.size());
  for (int i = 0; i < theta_flat.size(); ++i)
    out[i] = Interval{theta_flat[i] - zq * cov.se[i], theta_flat[i] + zq * cov.se[i]};
  return out;
}

struct MoranResult {
  double statistic = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// I = (n/S0) (e'We)/(e'e) on the centered values, with the Cliff-Ord
// normality approximation for the z score: E[I] = -1/(n-1) and the usual
// S1/S2 variance expression.
inline MoranResult morans_i(const Eigen::VectorXd& values, const WeightMatrix& w) {
  const int n = static_cast<int>(values.size());
  if (n != w.n) throw std::invalid_argument("value/weight dimensions differ");
  if (n < 3) throw std::invalid_argument("Moran's I needs at least 3 units");
  Eigen::VectorXd e = values.array() - values.mean();
  const double denom = e.squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("Moran's I is undefined for constant input");

  double s0 = 0.0, s1 = 0.0;
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(n), col_sums = Eigen::VectorXd::Zero(n);
  SparseMat wt = SparseMat(w.w.transpose());
  for (int i = 0; i < n; ++i) {
    SparseMat::InnerIterator a(w.w, i);
    for (; a; ++a) {
      s0 += a.value();
      row_sums[i] += a.value();
      col_sums[a.col()] += a.value();
    }
  }
  // S1 = (1/2) sum (w_ij + w_ji)^2 over all pairs; walk union of patterns
  for (int i = 0; i < n; ++i) {
    SparseMat::InnerIterator a(w.w, i), b(wt, i);
    while (a || b) {
      double wij = 0.0, wji = 0.0;
      long ca = a ? a.col() : std::numeric_limits<long>::max();
      long cb = b ? b.col() : std::numeric_limits<long>::max();
      if (ca <= cb) {
        wij = a.value();
      }
      if (cb <= ca) {
        wji = b.value();
      }
      const double t = wij + wji;
      s1 += 0.5 * t * t;
      if (ca <= cb) ++a;
      if (cb <= ca) ++b;
    }
  }
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = row_sums[i] + col_sums[i];
    s2 += t * t;
  }

  const double num = e.dot(w.w * e);
  MoranResult out;
  out.statistic = (n / s0) * (num / denom);
  const double ei = -1.0 / (n - 1.0);
  const double nn = static_cast<double>(n);
  const double var = (nn * nn * s1 - nn * s2 + 3.0 * s0 * s0) /
                         ((nn * nn - 1.0) * s0 * s0) -
                     ei * ei;
  out.z = (out.statistic - ei) / std::sqrt(var);
  out.p = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  return out;
}

inline double aic(double loglik, int k) { return 2.0 * k - 2.0 * loglik; }

struct LrtResult {
  double statistic = 0.0;
  int df = 0;
  double p = 1.0;
  bool nesting_violated = false;
};

inline LrtResult lrt(double loglik_null, double loglik_alt, int df) {
  if (df < 1) throw std::invalid_argument("likelihood-ratio test needs df >= 1");
  LrtResult out;
  out.df = df;
  out.statistic = 2.0 * (loglik_alt - loglik_null);
  if (out.statistic < 0.0) {
    out.nesting_violated = true;
    out.statistic = 0.0;
  }
  boost::math::chi_squared_distribution<double> chi(df);
  out.p = out.statistic > 0.0 ? boost::math::cdf(boost::math::complement(chi, out.statistic))
                              : 1.0;
  return out;
}

}  // namespace psarann
