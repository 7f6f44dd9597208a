// Maximum likelihood fitting: a single box-constrained maximization over
// theta, or the alternating linear/nonlinear scheme with randomized
// restarts for the network block.
#pragma once

#include "psarann/lbfgsb.hpp"
#include "psarann/likelihood.hpp"
#include "psarann/model.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace psarann {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

enum class FitMode { joint, alternating };

inline std::string to_string(FitMode m) {
  return m == FitMode::joint ? "joint" : "alternating";
}

inline FitMode fit_mode_from_string(const std::string& s) {
  if (s == "joint") return FitMode::joint;
  if (s == "alternating") return FitMode::alternating;
  throw std::invalid_argument("unknown fit mode: " + s);
}

struct FitOptions {
  FitMode mode = FitMode::joint;
  int max_iterations = 500;       // per inner solve
  double gradient_tol = 1e-5;     // projected-gradient max-norm
  double inner_f_tol = 1e-8;      // loglik increment within an inner solve
  double outer_threshold = 1e-2;  // alternating stopping rule
  int restarts = 5;               // fresh (lambda, gamma) draws per outer step
  int max_outer = 50;
  std::uint64_t seed = 0;
  double rho_margin = 1e-3;       // shrink applied to the spectral interval

  void validate() const {
    if (outer_threshold <= 0.0 || gradient_tol <= 0.0 || inner_f_tol <= 0.0)
      throw std::invalid_argument("tolerances must be positive");
    if (restarts < 0) throw std::invalid_argument("restart count must be nonnegative");
  }
};

struct FitResult {
  ParameterVector theta;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // outer-loop loglik values
  CanonicalizeFlags flags;
  std::uint64_t seed = 0;
};

// Default box: rho confined to the spectral interval shrunk by rho_margin,
// gamma_i1 >= 1e-6 (Restriction 2), everything else free.
inline BoxBounds default_bounds(const ParamLayout& layout, const RhoInterval& interval,
                                double rho_margin) {
  BoxBounds b = BoxBounds::unbounded(layout.dim());
  const int r = layout.rho_index();
  if (std::isfinite(interval.lo)) b.lower[r] = interval.lo + rho_margin;
  if (std::isfinite(interval.hi)) b.upper[r] = interval.hi - rho_margin;
  for (int i = 0; i < layout.h; ++i) b.lower[layout.gamma_first_weight(i)] = 1e-6;
  return b;
}

namespace detail {

// beta from least squares with rho = 0; lambda and gamma drawn from (0, 0.05).
inline Eigen::VectorXd default_start(const LikelihoodWorkspace& ws, std::mt19937_64& rng) {
  const ParamLayout& layout = ws.layout();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.dim());
  if (layout.p > 0) {
    x.head(layout.p) =
        ws.xlin().colPivHouseholderQr().solve(ws.data().y);
  }
  std::uniform_real_distribution<double> small(0.0, 0.05);
  for (int i = 0; i < layout.h; ++i) {
    x[layout.lambda_offset() + i] = small(rng);
    for (int j = 0; j < layout.g; ++j) x[layout.gamma_offset(i) + j] = small(rng);
    int fw = layout.gamma_first_weight(i);
    if (x[fw] < 2e-6) x[fw] = 2e-6;
  }
  return x;
}

inline SolverOptions solver_options(const FitOptions& opt) {
  SolverOptions s;
  s.max_iterations = opt.max_iterations;
  s.pg_tol = opt.gradient_tol;
  s.f_tol_abs = opt.inner_f_tol;
  return s;
}

// Maximize over the coordinates listed in `mask`, holding the rest fixed.
inline SolverResult maximize_subset(LikelihoodWorkspace& ws, Eigen::VectorXd& theta_flat,
                                    const std::vector<int>& mask, const BoxBounds& bounds,
                                    const SolverOptions& sopt) {
  const ParamLayout& layout = ws.layout();
  Eigen::VectorXd full = theta_flat;
  Eigen::VectorXd grad_full;
  auto objective = [&](const Eigen::VectorXd& sub, Eigen::VectorXd& grad) {
    for (size_t k = 0; k < mask.size(); ++k) full[mask[k]] = sub[k];
    const double value =
        ws.log_likelihood_and_score(ParameterVector::from_flat(layout, full), grad_full);
    grad.resize(static_cast<int>(mask.size()));
    for (size_t k = 0; k < mask.size(); ++k) grad[k] = grad_full[mask[k]];
    return value;
  };
  Eigen::VectorXd sub0(static_cast<int>(mask.size()));
  BoxBounds sub_bounds;
  sub_bounds.lower.resize(sub0.size());
  sub_bounds.upper.resize(sub0.size());
  for (size_t k = 0; k < mask.size(); ++k) {
    sub0[static_cast<int>(k)] = theta_flat[mask[k]];
    sub_bounds.lower[static_cast<int>(k)] = bounds.lower[mask[k]];
    sub_bounds.upper[static_cast<int>(k)] = bounds.upper[mask[k]];
  }
  SolverResult res = maximize_box(objective, sub0, sub_bounds, sopt);
  for (size_t k = 0; k < mask.size(); ++k) theta_flat[mask[k]] = res.x[static_cast<int>(k)];
  return res;
}

inline FitResult finish(const LikelihoodWorkspace& ws, const Eigen::VectorXd& flat,
                        double loglik, int iterations, bool converged,
                        std::vector<double> trace, std::uint64_t seed) {
  FitResult out;
  auto canon = canonicalize(ParameterVector::from_flat(ws.layout(), flat),
                            ws.spec().neuron_bias);
  out.theta = std::move(canon.theta);
  out.flags = canon.flags;
  out.loglik = loglik;
  out.iterations = iterations;
  out.converged = converged;
  out.trace = std::move(trace);
  out.seed = seed;
  return out;
}

}  // namespace detail

inline FitResult fit_joint(const Dataset& data, const ModelSpec& spec, const FitOptions& opt) {
  opt.validate();
  LikelihoodWorkspace ws(data, spec);
  const ParamLayout& layout = ws.layout();
  std::mt19937_64 rng(splitmix64(opt.seed));
  Eigen::VectorXd x0 = detail::default_start(ws, rng);
  const BoxBounds bounds = default_bounds(layout, ws.rho_interval(), opt.rho_margin);

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    return ws.log_likelihood_and_score(ParameterVector::from_flat(layout, x), grad);
  };
  SolverResult res = maximize_box(objective, x0, bounds, detail::solver_options(opt));
  return detail::finish(ws, res.x, res.f, res.iterations, res.converged, {res.f}, opt.seed);
}

// Step 1 maximizes over (rho, beta) holding the network; Step 2 redraws the
// network start from (0, 0.05) -- keeping the incumbent as one candidate --
// and maximizes over (lambda, gamma); stops when an outer cycle improves the
// log-likelihood by less than the threshold.
inline FitResult fit_alternating(const Dataset& data, const ModelSpec& spec,
                                 const FitOptions& opt) {
  opt.validate();
  LikelihoodWorkspace ws(data, spec);
  const ParamLayout& layout = ws.layout();
  std::mt19937_64 rng(splitmix64(opt.seed));
  Eigen::VectorXd theta = detail::default_start(ws, rng);
  const BoxBounds bounds = default_bounds(layout, ws.rho_interval(), opt.rho_margin);
  const SolverOptions sopt = detail::solver_options(opt);

  std::vector<int> linear_mask, network_mask;
  for (int i = 0; i < layout.p; ++i) linear_mask.push_back(i);
  linear_mask.push_back(layout.rho_index());
  for (int i = layout.lambda_offset(); i < layout.dim(); ++i) network_mask.push_back(i);

  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  double current = -std::numeric_limits<double>::infinity();
  std::uniform_real_distribution<double> small(0.0, 0.05);

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    SolverResult step1 = detail::maximize_subset(ws, theta, linear_mask, bounds, sopt);
    iterations += step1.iterations;
    trace.push_back(step1.f);

    double step2_value = step1.f;
    if (!network_mask.empty()) {
      Eigen::VectorXd best = theta;
      double best_value = -std::numeric_limits<double>::infinity();
      for (int r = 0; r <= opt.restarts; ++r) {
        Eigen::VectorXd candidate = theta;
        if (r > 0) {  // r == 0 keeps the incumbent network values
          for (int idx : network_mask) candidate[idx] = small(rng);
          for (int i = 0; i < layout.h; ++i) {
            const int fw = layout.gamma_first_weight(i);
            if (candidate[fw] < 2e-6) candidate[fw] = 2e-6;
          }
        }
        SolverResult step2 = detail::maximize_subset(ws, candidate, network_mask, bounds, sopt);
        iterations += step2.iterations;
        if (step2.f > best_value) {
          best_value = step2.f;
          best = candidate;
        }
      }
      if (best_value >= step1.f) {
        theta = best;
        step2_value = best_value;
      }
    }
    trace.push_back(step2_value);
    current = step2_value;

    // Stop once the two half-steps agree to the threshold.
    if (step2_value - step1.f < opt.outer_threshold) {
      converged = true;
      break;
    }
  }
  if (!std::isfinite(current)) {
    ParameterVector t = ParameterVector::from_flat(layout, theta);
    current = ws.log_likelihood(t);
  }
  return detail::finish(ws, theta, current, iterations, converged, std::move(trace), opt.seed);
}

inline FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opt) {
  return opt.mode == FitMode::joint ? fit_joint(data, spec, opt)
                                    : fit_alternating(data, spec, opt);
}

}  // namespace psarann
