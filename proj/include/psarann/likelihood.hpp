// Log-likelihood L(theta) = ln|I - rho W| + sum_s ln f(eps_s(theta)) with
// analytic gradient and Hessian. The Jacobian term and its rho derivatives
// come from the cached spectrum: ln|I - rho W| = sum_i ln(1 - rho tau_i),
// tr(W (I - rho W)^-1) = sum_i tau_i / (1 - rho tau_i), and so on.
#pragma once

#include "psarann/density.hpp"
#include "psarann/model.hpp"
#include "psarann/spatial_weights.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace psarann {

constexpr double kRhoGuard = 1e-6;

namespace detail {

inline void check_rho(double rho, double tau) {
  if (tau <= 0.0) return;  // zero matrix: the Jacobian term vanishes identically
  if (!(std::abs(rho) < 1.0 / tau - kRhoGuard))
    throw std::domain_error("rho outside the admissible spectral interval");
}

inline double spectral_tau(const Eigen::VectorXd& spectrum) {
  double tau = 0.0;
  for (int i = 0; i < spectrum.size(); ++i) tau = std::max(tau, std::abs(spectrum[i]));
  return tau;
}

}  // namespace detail

inline double log_det_term(double rho, const Eigen::VectorXd& spectrum) {
  detail::check_rho(rho, detail::spectral_tau(spectrum));
  double acc = 0.0;
  for (int i = 0; i < spectrum.size(); ++i) {
    const double t = 1.0 - rho * spectrum[i];
    if (!(t > 0.0)) throw std::domain_error("1 - rho*tau_i is not positive");
    acc += std::log(t);
  }
  return acc;
}

// d/drho ln|I - rho W| = -tr(W (I - rho W)^-1)
inline double log_det_grad(double rho, const Eigen::VectorXd& spectrum) {
  double acc = 0.0;
  for (int i = 0; i < spectrum.size(); ++i) acc -= spectrum[i] / (1.0 - rho * spectrum[i]);
  return acc;
}

// d^2/drho^2 ln|I - rho W| = -tr((W (I - rho W)^-1)^2)
inline double log_det_hess(double rho, const Eigen::VectorXd& spectrum) {
  double acc = 0.0;
  for (int i = 0; i < spectrum.size(); ++i) {
    const double r = spectrum[i] / (1.0 - rho * spectrum[i]);
    acc -= r * r;
  }
  return acc;
}

// Single-owner scratch for repeated likelihood evaluations over one dataset.
// Caches W*y, the linear design and the spectrum once; everything per-theta
// is computed in one fused pass.
class LikelihoodWorkspace {
 public:
  LikelihoodWorkspace(const Dataset& data, const ModelSpec& spec)
      : data_(data), spec_(spec), layout_(spec) {
    spec.validate();
    data.validate();
    if (data.x.cols() != spec.q)
      throw std::invalid_argument("dataset covariate count does not match the model");
    if (data.w.spectrum) {
      spectrum_ = *data.w.spectrum;
    } else {
      spectrum_ = spectrum_and_bounds(data.w).spectrum;
    }
    tau_ = detail::spectral_tau(spectrum_);
    wy_ = data.w.w * data.y;
    xlin_ = linear_design(data.x, spec);
    buf_.resize(std::max(spec.h, 1));
  }

  const ModelSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  const Dataset& data() const { return data_; }
  const Eigen::VectorXd& spectrum() const { return spectrum_; }
  double tau() const { return tau_; }
  RhoInterval rho_interval() const {
    if (tau_ <= 0.0) return RhoInterval{};
    return RhoInterval{-1.0 / tau_, 1.0 / tau_};
  }
  const Eigen::VectorXd& wy() const { return wy_; }
  const Eigen::MatrixXd& xlin() const { return xlin_; }

  // Fused per-location quantities; order 0 = value, 1 = +score, 2 = +curvature.
  void prepare(const ParameterVector& theta, int order) {
    theta.check_shape(spec_);
    if (order >= 2 && !spec_.family.has_curvature())
      throw std::domain_error(
          "second derivatives are undefined for the Laplace family");
    detail::check_rho(theta.rho, tau_);
    const int n = data_.n();
    const int h = spec_.h;

    detail::neuron_inputs(data_.x, theta.gamma, spec_.neuron_bias, z_);
    fv_.resize(n, h);
    if (order >= 1) fp_.resize(n, h);
    if (order >= 2) fs_.resize(n, h);
    for (int i = 0; i < h; ++i)
      for (int s = 0; s < n; ++s) {
        const double f = logistic(z_(s, i));
        fv_(s, i) = f;
        if (order >= 1) {
          const double f1 = f * (1.0 - f);
          fp_(s, i) = f1;
          if (order >= 2) fs_(s, i) = f1 * (1.0 - 2.0 * f);
        }
      }

    eps_ = data_.y - theta.rho * wy_;
    if (layout_.p > 0) eps_.noalias() -= xlin_ * theta.beta;
    if (h > 0) {
      for (int s = 0; s < n; ++s) {
        for (int i = 0; i < h; ++i) buf_[i] = theta.lambda[i] * fv_(s, i);
        eps_[s] -= detail::stable_neuron_sum(buf_.data(), h);
      }
    }
    if (!eps_.allFinite()) throw std::runtime_error("non-finite residuals");

    logpdf_sum_ = 0.0;
    if (order >= 1) psi_.resize(n);
    if (order >= 2) u_.resize(n);
    const DensityFamily& fam = spec_.family;
    for (int s = 0; s < n; ++s) {
      logpdf_sum_ += fam.logpdf(eps_[s]);
      if (order >= 1) psi_[s] = fam.score(eps_[s]);
      if (order >= 2) u_[s] = fam.curvature(eps_[s]);
    }
  }

  double log_likelihood(const ParameterVector& theta) {
    prepare(theta, 0);
    return log_det_term(theta.rho, spectrum_) + logpdf_sum_;
  }

  double log_likelihood_and_score(const ParameterVector& theta, Eigen::VectorXd& grad) {
    prepare(theta, 1);
    grad.resize(layout_.dim());
    fill_score(theta, grad);
    return log_det_term(theta.rho, spectrum_) + logpdf_sum_;
  }

  Eigen::VectorXd score(const ParameterVector& theta) {
    Eigen::VectorXd g;
    log_likelihood_and_score(theta, g);
    return g;
  }

  Eigen::MatrixXd hessian(const ParameterVector& theta) {
    prepare(theta, 2);
    const int dim = layout_.dim();
    Eigen::MatrixXd d = depsilon_matrix(theta);
    Eigen::MatrixXd hess(dim, dim);
    hess.noalias() = d.transpose() * u_.asDiagonal() * d;
    hess(layout_.rho_index(), layout_.rho_index()) += log_det_hess(theta.rho, spectrum_);
    add_residual_curvature(theta, hess);
    // mirror the upper triangle so the output is exactly symmetric
    for (int a = 0; a < dim; ++a)
      for (int b = a + 1; b < dim; ++b) hess(b, a) = hess(a, b);
    return hess;
  }

  // Accessors for per-location covariance assembly (valid after prepare).
  const Eigen::VectorXd& eps() const { return eps_; }
  const Eigen::VectorXd& psi() const { return psi_; }
  const Eigen::VectorXd& curvature() const { return u_; }
  const Eigen::MatrixXd& fv() const { return fv_; }
  const Eigen::MatrixXd& fp() const { return fp_; }
  const Eigen::MatrixXd& fs() const { return fs_; }

  // d eps / d theta as a dense n x dim matrix (valid after prepare >= 1).
  Eigen::MatrixXd depsilon_matrix(const ParameterVector& theta) const {
    const int n = data_.n();
    const int dim = layout_.dim();
    Eigen::MatrixXd d(n, dim);
    if (layout_.p > 0) d.leftCols(layout_.p) = -xlin_;
    d.col(layout_.rho_index()) = -wy_;
    for (int i = 0; i < spec_.h; ++i) d.col(layout_.lambda_offset() + i) = -fv_.col(i);
    for (int i = 0; i < spec_.h; ++i) {
      const int off = layout_.gamma_offset(i);
      const double li = theta.lambda[i];
      if (spec_.neuron_bias) {
        const double wsum = theta.gamma.row(i).tail(spec_.q).sum();
        d.col(off) = li * wsum * fp_.col(i);
        for (int j = 0; j < spec_.q; ++j)
          d.col(off + 1 + j) =
              (-li * fp_.col(i).array() * (data_.x.col(j).array() - theta.gamma(i, 0)))
                  .matrix();
      } else {
        for (int j = 0; j < spec_.q; ++j)
          d.col(off + j) = -li * fp_.col(i).cwiseProduct(data_.x.col(j));
      }
    }
    return d;
  }

 private:
  void fill_score(const ParameterVector& theta, Eigen::VectorXd& grad) const {
    if (layout_.p > 0) grad.head(layout_.p).noalias() = -xlin_.transpose() * psi_;
    grad[layout_.rho_index()] = log_det_grad(theta.rho, spectrum_) - wy_.dot(psi_);
    for (int i = 0; i < spec_.h; ++i)
      grad[layout_.lambda_offset() + i] = -fv_.col(i).dot(psi_);
    for (int i = 0; i < spec_.h; ++i) {
      const int off = layout_.gamma_offset(i);
      const double li = theta.lambda[i];
      const Eigen::VectorXd fpsi = fp_.col(i).cwiseProduct(psi_);
      if (spec_.neuron_bias) {
        const double wsum = theta.gamma.row(i).tail(spec_.q).sum();
        const double total = fpsi.sum();
        grad[off] = li * wsum * total;
        grad.segment(off + 1, spec_.q).noalias() =
            -li * (data_.x.transpose() * fpsi - theta.gamma(i, 0) * total *
                                                   Eigen::VectorXd::Ones(spec_.q));
      } else {
        grad.segment(off, spec_.q).noalias() = -li * (data_.x.transpose() * fpsi);
      }
    }
  }

  // psi-weighted second derivatives of eps: nonzero only inside the
  // (lambda_i, gamma_i) and (gamma_i, gamma_i) blocks.
  void add_residual_curvature(const ParameterVector& theta, Eigen::MatrixXd& hess) const {
    for (int i = 0; i < spec_.h; ++i) {
      const int li_idx = layout_.lambda_offset() + i;
      const int off = layout_.gamma_offset(i);
      const double li = theta.lambda[i];
      const Eigen::VectorXd psifp = psi_.cwiseProduct(fp_.col(i));
      const Eigen::VectorXd psifs = psi_.cwiseProduct(fs_.col(i));
      if (spec_.neuron_bias) {
        const double c = theta.gamma(i, 0);
        const double wsum = theta.gamma.row(i).tail(spec_.q).sum();
        const double sum_psifp = psifp.sum();
        const double sum_psifs = psifs.sum();
        const Eigen::VectorXd xc_psifs =
            data_.x.transpose() * psifs - c * sum_psifs * Eigen::VectorXd::Ones(spec_.q);
        // (lambda_i, gamma_i): sum_s psi * (-F' t)
        hess(li_idx, off) += wsum * sum_psifp;
        for (int j = 0; j < spec_.q; ++j)
          hess(li_idx, off + 1 + j) -= data_.x.col(j).dot(psifp) - c * sum_psifp;
        // (gamma_i, gamma_i) from F'' t t'
        hess(off, off) += -li * wsum * wsum * sum_psifs;
        for (int j = 0; j < spec_.q; ++j) hess(off, off + 1 + j) += li * wsum * xc_psifs[j];
        for (int j = 0; j < spec_.q; ++j)
          for (int k = j; k < spec_.q; ++k) {
            const double m = (data_.x.col(j).array() - c)
                                 .cwiseProduct(data_.x.col(k).array() - c)
                                 .matrix()
                                 .dot(psifs);
            hess(off + 1 + j, off + 1 + k) += -li * m;
          }
        // (gamma_i, gamma_i) from F' * d2z (center-weight cross terms)
        for (int j = 0; j < spec_.q; ++j) hess(off, off + 1 + j) += li * sum_psifp;
      } else {
        for (int j = 0; j < spec_.q; ++j)
          hess(li_idx, off + j) -= data_.x.col(j).dot(psifp);
        for (int j = 0; j < spec_.q; ++j)
          for (int k = j; k < spec_.q; ++k)
            hess(off + j, off + k) +=
                -li * data_.x.col(j).cwiseProduct(data_.x.col(k)).dot(psifs);
      }
    }
  }

  const Dataset& data_;
  ModelSpec spec_;
  ParamLayout layout_;
  Eigen::VectorXd spectrum_;
  double tau_ = 0.0;
  Eigen::VectorXd wy_;
  Eigen::MatrixXd xlin_;

  Eigen::MatrixXd z_, fv_, fp_, fs_;
  Eigen::VectorXd eps_, psi_, u_;
  double logpdf_sum_ = 0.0;
  std::vector<double> buf_;
};

// Convenience wrappers; a fresh workspace per call.
inline double log_likelihood(const ParameterVector& theta, const Dataset& data,
                             const ModelSpec& spec) {
  LikelihoodWorkspace ws(data, spec);
  return ws.log_likelihood(theta);
}

inline Eigen::VectorXd score_vector(const ParameterVector& theta, const Dataset& data,
                                    const ModelSpec& spec) {
  LikelihoodWorkspace ws(data, spec);
  return ws.score(theta);
}

inline Eigen::MatrixXd hessian_matrix(const ParameterVector& theta, const Dataset& data,
                                      const ModelSpec& spec) {
  LikelihoodWorkspace ws(data, spec);
  return ws.hessian(theta);
}

}  // namespace psarann
