// Limited-memory quasi-Newton minimization over a box: gradient projection
// for the active set, two-loop recursion on the free variables, and a
// strong-Wolfe line search along the projected path. Maximization wrappers
// at the bottom.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>

namespace psarann {

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static BoxBounds unbounded(int dim) {
    BoxBounds b;
    b.lower = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
    b.upper = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
    return b;
  }
  void validate() const {
    if (lower.size() != upper.size()) throw std::invalid_argument("bound lengths differ");
    for (int i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i])) throw std::invalid_argument("infeasible bounds");
  }
};

struct SolverOptions {
  int max_iterations = 500;
  double pg_tol = 1e-5;       // projected-gradient max-norm
  double f_tol_abs = 1e-8;    // stop when the objective moves less than this
  int memory = 10;
  int max_line_evals = 40;
  double c1 = 1e-4;           // Armijo constant
  double c2 = 0.9;            // curvature constant
};

struct SolverResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double pg_norm = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Eigen::VectorXd project_box(const Eigen::VectorXd& x, const BoxBounds& b) {
  return x.cwiseMax(b.lower).cwiseMin(b.upper);
}

struct LbfgsMemory {
  std::deque<Eigen::VectorXd> s, y;
  std::deque<double> rho;
  int capacity = 10;

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }
  void push(const Eigen::VectorXd& si, const Eigen::VectorXd& yi) {
    const double sy = si.dot(yi);
    if (!(sy > 1e-10 * si.norm() * yi.norm())) return;  // keep the inverse Hessian PD
    s.push_back(si);
    y.push_back(yi);
    rho.push_back(1.0 / sy);
    while (static_cast<int>(s.size()) > capacity) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }
  // Two-loop recursion: d = -H g.
  Eigen::VectorXd direction(const Eigen::VectorXd& g) const {
    Eigen::VectorXd q = g;
    const int m = static_cast<int>(s.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho[i] * s[i].dot(q);
      q -= alpha[i] * y[i];
    }
    if (m > 0) {
      const double gamma = s[m - 1].dot(y[m - 1]) / y[m - 1].squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho[i] * y[i].dot(q);
      q += (alpha[i] - beta) * s[i];
    }
    return -q;
  }
};

}  // namespace detail

// Minimizes fg(x, grad) subject to lower <= x <= upper. fg must write the
// gradient and return the value. The returned point is always feasible and
// never worse than the (projected) start.
template <class F>
SolverResult minimize_box(F&& fg, Eigen::VectorXd x0, const BoxBounds& bounds,
                          const SolverOptions& opt = {}) {
  bounds.validate();
  if (x0.size() != bounds.lower.size()) throw std::invalid_argument("start has wrong length");
  const int dim = static_cast<int>(x0.size());

  SolverResult res;
  Eigen::VectorXd x = detail::project_box(x0, bounds);
  Eigen::VectorXd g(dim), g_new(dim);
  double f = fg(x, g);
  ++res.evaluations;
  if (!std::isfinite(f)) throw std::runtime_error("objective is not finite at the start");

  detail::LbfgsMemory mem;
  mem.capacity = opt.memory;

  auto projected_gradient_norm = [&](const Eigen::VectorXd& xx, const Eigen::VectorXd& gg) {
    double norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double step = std::min(bounds.upper[i], std::max(bounds.lower[i], xx[i] - gg[i]));
      norm = std::max(norm, std::abs(xx[i] - step));
    }
    return norm;
  };

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.pg_norm = projected_gradient_norm(x, g);
    if (res.pg_norm <= opt.pg_tol) {
      res.converged = true;
      break;
    }
    res.iterations = iter + 1;

    // Freeze variables pinned at a bound with the gradient pushing outward.
    Eigen::VectorXd g_free = g;
    for (int i = 0; i < dim; ++i) {
      const bool at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
      const bool at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
      if (at_lower || at_upper) g_free[i] = 0.0;
    }

    Eigen::VectorXd d = mem.direction(g_free);
    for (int i = 0; i < dim; ++i) {
      if (g_free[i] == 0.0) d[i] = 0.0;
      // clip components that would exit the box immediately, so that the
      // initial slope matches the projected path
      if ((x[i] <= bounds.lower[i] && d[i] < 0.0) || (x[i] >= bounds.upper[i] && d[i] > 0.0))
        d[i] = 0.0;
    }
    double gd = g.dot(d);
    if (!(gd < -1e-14 * std::max(1.0, g_free.norm() * d.norm()))) {
      mem.clear();
      d = -g_free;
      gd = -g_free.squaredNorm();
      if (gd == 0.0) {
        res.converged = true;
        break;
      }
    }

    // Step cap: beyond the last breakpoint the projected path is constant.
    double alpha_cap = 0.0;
    bool capped = true;
    for (int i = 0; i < dim; ++i) {
      if (d[i] == 0.0) continue;
      const double limit = d[i] > 0.0 ? bounds.upper[i] - x[i] : bounds.lower[i] - x[i];
      const double a = limit / d[i];
      if (std::isfinite(a)) {
        alpha_cap = std::max(alpha_cap, a);
      } else {
        capped = false;
      }
    }
    const double alpha_max = capped ? std::max(alpha_cap, 1e-16) : 1e20;

    // Strong-Wolfe search on phi(a) = f(P(x + a d)). The derivative uses the
    // locally active (non-clipped) coordinates only.
    Eigen::VectorXd x_try(dim);
    auto eval_phi = [&](double a, double& dphi) {
      x_try = detail::project_box(x + a * d, bounds);
      const double val = fg(x_try, g_new);
      ++res.evaluations;
      dphi = 0.0;
      for (int i = 0; i < dim; ++i) {
        const bool clipped = (x_try[i] <= bounds.lower[i] && x[i] + a * d[i] < bounds.lower[i]) ||
                             (x_try[i] >= bounds.upper[i] && x[i] + a * d[i] > bounds.upper[i]);
        if (!clipped) dphi += g_new[i] * d[i];
      }
      return val;
    };

    const double phi0 = f;
    const double dphi0 = gd;
    double a_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
    double a = std::min(1.0, alpha_max);
    double a_lo = 0.0, a_hi = 0.0, phi_lo = phi0, dphi_lo = dphi0, phi_hi = 0.0;
    bool bracketed = false, accepted = false;
    double best_a = 0.0, best_phi = phi0;
    Eigen::VectorXd best_x = x, best_g = g;
    int evals = 0;

    while (evals < opt.max_line_evals) {
      double dphi;
      const double phi = eval_phi(a, dphi);
      ++evals;
      if (std::isfinite(phi) && phi < best_phi) {
        best_phi = phi;
        best_a = a;
        best_x = x_try;
        best_g = g_new;
      }
      if (!std::isfinite(phi) || phi > phi0 + opt.c1 * a * dphi0 || (evals > 1 && phi >= phi_prev)) {
        a_lo = a_prev; phi_lo = phi_prev; dphi_lo = dphi_prev;
        a_hi = a; phi_hi = phi;
        bracketed = true;
        break;
      }
      if (std::abs(dphi) <= -opt.c2 * dphi0) {
        accepted = true;
        break;
      }
      if (dphi >= 0.0) {
        a_lo = a; phi_lo = phi; dphi_lo = dphi;
        a_hi = a_prev; phi_hi = phi_prev;
        bracketed = true;
        break;
      }
      if (a >= alpha_max) {
        accepted = best_phi < phi0;  // take the capped step if it helps
        break;
      }
      a_prev = a; phi_prev = phi; dphi_prev = dphi;
      a = std::min(2.0 * a, alpha_max);
    }

    if (bracketed && !accepted) {
      for (int z = 0; z < opt.max_line_evals - evals; ++z) {
        // bisection with a quadratic-interpolation bias
        double mid = 0.5 * (a_lo + a_hi);
        const double denom = phi_hi - phi_lo - dphi_lo * (a_hi - a_lo);
        if (std::isfinite(denom) && std::abs(denom) > 1e-30) {
          const double quad = a_lo - 0.5 * dphi_lo * (a_hi - a_lo) * (a_hi - a_lo) / denom;
          if (std::isfinite(quad) && quad > std::min(a_lo, a_hi) && quad < std::max(a_lo, a_hi))
            mid = quad;
        }
        double dphi;
        const double phi = eval_phi(mid, dphi);
        if (std::isfinite(phi) && phi < best_phi) {
          best_phi = phi;
          best_a = mid;
          best_x = x_try;
          best_g = g_new;
        }
        if (!std::isfinite(phi) || phi > phi0 + opt.c1 * mid * dphi0 || phi >= phi_lo) {
          a_hi = mid; phi_hi = phi;
        } else {
          if (std::abs(dphi) <= -opt.c2 * dphi0) {
            accepted = true;
            break;
          }
          if (dphi * (a_hi - a_lo) >= 0.0) {
            a_hi = a_lo; phi_hi = phi_lo;
          }
          a_lo = mid; phi_lo = phi; dphi_lo = dphi;
        }
        if (std::abs(a_hi - a_lo) < 1e-14 * std::max(1.0, std::abs(a_lo))) break;
      }
    }

    if (best_a == 0.0 || !(best_phi < phi0)) {
      if (!mem.s.empty()) {
        // quasi-Newton direction failed; retry the iteration as steepest descent
        mem.clear();
        continue;
      }
      // No measurable decrease even along steepest descent: the objective
      // change is below f_tol_abs, which counts as converged. This is the
      // normal exit at a kink of the Laplace likelihood.
      res.converged = true;
      break;
    }

    const Eigen::VectorXd x_new = best_x;
    const double f_new = best_phi;
    mem.push(x_new - x, best_g - g);
    const double df = f - f_new;
    x = x_new;
    g = best_g;
    f = f_new;
    if (df < opt.f_tol_abs) {
      res.converged = true;
      res.pg_norm = projected_gradient_norm(x, g);
      break;
    }
  }

  res.pg_norm = projected_gradient_norm(x, g);
  if (res.pg_norm <= opt.pg_tol) res.converged = true;
  res.x = std::move(x);
  res.f = f;
  return res;
}

// Maximizes fg by minimizing its negation; the reported value is the maximum.
template <class F>
SolverResult maximize_box(F&& fg, Eigen::VectorXd x0, const BoxBounds& bounds,
                          const SolverOptions& opt = {}) {
  auto neg = [&fg](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const double v = fg(x, grad);
    grad = -grad;
    return -v;
  };
  SolverResult res = minimize_box(neg, std::move(x0), bounds, opt);
  res.f = -res.f;
  return res;
}

}  // namespace psarann
