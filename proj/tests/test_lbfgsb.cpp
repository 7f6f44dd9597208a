#include "psarann/lbfgsb.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace psarann;

namespace {

BoxBounds box1(double lo, double hi) {
  BoxBounds b;
  b.lower = Eigen::VectorXd::Constant(1, lo);
  b.upper = Eigen::VectorXd::Constant(1, hi);
  return b;
}

}  // namespace

TEST_CASE("interior quadratic maximum", "[lbfgsb]") {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    g[0] = -2.0 * (x[0] - 2.0);
    return -(x[0] - 2.0) * (x[0] - 2.0);
  };
  auto res = maximize_box(fg, Eigen::VectorXd::Constant(1, 0.5), box1(0.0, 5.0));
  REQUIRE(res.converged);
  REQUIRE(res.x[0] == Catch::Approx(2.0).margin(1e-6));
  REQUIRE(res.f == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("bound-active quadratic maximum", "[lbfgsb]") {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    g[0] = -2.0 * (x[0] - 2.0);
    return -(x[0] - 2.0) * (x[0] - 2.0);
  };
  auto res = maximize_box(fg, Eigen::VectorXd::Constant(1, 4.0), box1(3.0, 5.0));
  REQUIRE(res.converged);
  REQUIRE(res.x[0] == Catch::Approx(3.0).margin(1e-9));
}

TEST_CASE("rosenbrock on a box", "[lbfgsb]") {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = x[0], b = x[1];
    g.resize(2);
    g[0] = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
    g[1] = -(200.0 * (b - a * a));
    return -((1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a));
  };
  BoxBounds b;
  b.lower = Eigen::VectorXd::Constant(2, -2.0);
  b.upper = Eigen::VectorXd::Constant(2, 2.0);
  Eigen::VectorXd x0(2);
  x0 << -1.5, 1.5;
  SolverOptions opt;
  opt.max_iterations = 2000;
  opt.pg_tol = 1e-8;
  opt.f_tol_abs = 1e-14;
  auto res = maximize_box(fg, x0, b, opt);
  REQUIRE(res.x[0] == Catch::Approx(1.0).margin(1e-5));
  REQUIRE(res.x[1] == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("rosenbrock with an active bound", "[lbfgsb]") {
  // optimum of the unconstrained problem sits outside the box
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = x[0], b = x[1];
    g.resize(2);
    g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
    g[1] = 200.0 * (b - a * a);
    return (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
  };
  BoxBounds b;
  b.lower = Eigen::VectorXd::Constant(2, -2.0);
  b.upper = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd x0(2);
  x0 << -1.0, 0.0;
  SolverOptions opt;
  opt.max_iterations = 2000;
  opt.pg_tol = 1e-9;
  opt.f_tol_abs = 1e-15;
  auto res = minimize_box(fg, x0, b, opt);
  // known constrained minimum: x = (0.5, 0.25)
  REQUIRE(res.x[0] == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(res.x[1] == Catch::Approx(0.25).margin(1e-5));
}

TEST_CASE("returned value never drops below the start", "[lbfgsb]") {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(2);
    g[0] = std::cos(x[0]) * std::cosh(x[1]);
    g[1] = std::sin(x[0]) * std::sinh(x[1]);
    return std::sin(x[0]) * std::cosh(x[1]);
  };
  BoxBounds b;
  b.lower = Eigen::VectorXd::Constant(2, -3.0);
  b.upper = Eigen::VectorXd::Constant(2, 3.0);
  Eigen::VectorXd x0(2);
  x0 << 0.3, -0.4;
  Eigen::VectorXd g0(2);
  const double f0 = fg(x0, g0);
  auto res = maximize_box(fg, x0, b);
  REQUIRE(res.f >= f0);
  REQUIRE((res.x.array() >= -3.0).all());
  REQUIRE((res.x.array() <= 3.0).all());
}

TEST_CASE("infeasible bounds and bad starts are rejected", "[lbfgsb]") {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  BoxBounds bad;
  bad.lower = Eigen::VectorXd::Constant(1, 2.0);
  bad.upper = Eigen::VectorXd::Constant(1, 1.0);
  REQUIRE_THROWS_AS(minimize_box(fg, Eigen::VectorXd::Zero(1), bad), std::invalid_argument);

  auto nanf = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return std::nan("");
  };
  REQUIRE_THROWS_AS(minimize_box(nanf, Eigen::VectorXd::Zero(1), box1(-1.0, 1.0)),
                    std::runtime_error);
}

TEST_CASE("high-dimensional convex quadratic", "[lbfgsb]") {
  const int d = 30;
  Eigen::VectorXd target = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
  Eigen::VectorXd scale = Eigen::VectorXd::LinSpaced(d, 1.0, 10.0);
  auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = scale.cwiseProduct(x - target);
    return 0.5 * (x - target).cwiseProduct(g).sum();
  };
  BoxBounds b;
  b.lower = Eigen::VectorXd::Constant(d, -0.5);  // clips part of the target
  b.upper = Eigen::VectorXd::Constant(d, 0.5);
  SolverOptions opt;
  opt.pg_tol = 1e-7;
  opt.f_tol_abs = 1e-16;
  auto res = minimize_box(fg, Eigen::VectorXd::Zero(d), b, opt);
  REQUIRE(res.converged);
  for (int i = 0; i < d; ++i) {
    const double expect = std::min(0.5, std::max(-0.5, target[i]));
    REQUIRE(res.x[i] == Catch::Approx(expect).margin(1e-6));
  }
}
