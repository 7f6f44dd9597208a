#include "psarann/fit.hpp"
#include "psarann/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace psarann;

namespace {

// SAR data: y = rho W y + X beta + eps.
GeneratedData sar_data(int n1, int n2, double rho, double beta, std::uint64_t seed) {
  SimConfig config;
  config.lattice = {n1, n2, ContiguityRule::queen};
  config.spec.q = 1;
  config.spec.h = 0;
  config.spec.linear = true;
  config.true_theta.beta.resize(1);
  config.true_theta.beta << beta;
  config.true_theta.rho = rho;
  config.true_theta.lambda.resize(0);
  config.true_theta.gamma.resize(0, 1);
  config.seed = seed;
  return generate_dataset(config, 0);
}

SimConfig net_config(int n1, int n2, std::uint64_t seed) {
  SimConfig config;
  config.lattice = {n1, n2, ContiguityRule::queen};
  config.spec.q = 1;
  config.spec.h = 1;
  config.spec.neuron_bias = true;
  config.spec.linear = false;
  config.true_theta.beta.resize(0);
  config.true_theta.rho = 0.6;
  config.true_theta.lambda.resize(1);
  config.true_theta.lambda << 5.0;
  config.true_theta.gamma.resize(1, 2);
  config.true_theta.gamma << 0.5, 1.0;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("pure SAR recovery at n=2500", "[fit][slow]") {
  GeneratedData gen = sar_data(50, 50, 0.5, 1.0, 11);
  ModelSpec spec;
  spec.q = 1;
  spec.h = 0;
  FitOptions opt;
  FitResult res = fit_joint(gen.data, spec, opt);
  REQUIRE(res.converged);
  REQUIRE(std::abs(res.theta.rho - 0.5) < 0.05);
  REQUIRE(std::abs(res.theta.beta[0] - 1.0) < 0.05);
}

TEST_CASE("NaN input fails before optimization", "[fit]") {
  GeneratedData gen = sar_data(5, 5, 0.4, 1.0, 3);
  gen.data.y[3] = std::nan("");
  ModelSpec spec;
  spec.q = 1;
  spec.h = 0;
  REQUIRE_THROWS_AS(fit_joint(gen.data, spec, FitOptions{}), std::invalid_argument);
}

TEST_CASE("alternating equals joint for h=0", "[fit]") {
  GeneratedData gen = sar_data(12, 12, 0.4, 1.0, 5);
  ModelSpec spec;
  spec.q = 1;
  spec.h = 0;
  FitOptions opt;
  FitResult joint = fit_joint(gen.data, spec, opt);
  opt.mode = FitMode::alternating;
  FitResult alt = fit_alternating(gen.data, spec, opt);
  REQUIRE(alt.converged);
  REQUIRE(std::abs(alt.loglik - joint.loglik) < 1e-6);
}

TEST_CASE("alternating honors the stopping rule", "[fit]") {
  SimConfig config = net_config(12, 12, 9);
  GeneratedData gen = generate_dataset(config, 0);
  FitOptions opt;
  opt.mode = FitMode::alternating;
  FitResult res = fit_alternating(gen.data, config.spec, opt);
  REQUIRE(res.converged);
  REQUIRE(res.trace.size() >= 2);
  const size_t m = res.trace.size();
  REQUIRE(res.trace[m - 1] - res.trace[m - 2] < opt.outer_threshold);
  for (size_t i = 1; i < m; ++i) REQUIRE(res.trace[i] >= res.trace[i - 1] - 1e-9);
}

TEST_CASE("fits are bit-reproducible given the seed", "[fit]") {
  SimConfig config = net_config(10, 10, 17);
  GeneratedData gen = generate_dataset(config, 0);
  for (FitMode mode : {FitMode::joint, FitMode::alternating}) {
    FitOptions opt;
    opt.mode = mode;
    opt.seed = 31337;
    FitResult a = fit(gen.data, config.spec, opt);
    FitResult b = fit(gen.data, config.spec, opt);
    REQUIRE(a.loglik == b.loglik);
    REQUIRE(a.theta.rho == b.theta.rho);
    REQUIRE(a.theta.lambda == b.theta.lambda);
    REQUIRE(a.theta.gamma == b.theta.gamma);
  }
}

TEST_CASE("returned theta satisfies bounds and the ordering restriction", "[fit]") {
  SimConfig config = net_config(10, 10, 23);
  config.spec.h = 2;
  config.true_theta.lambda.resize(2);
  config.true_theta.lambda << 4.0, 2.0;
  config.true_theta.gamma.resize(2, 2);
  config.true_theta.gamma << 0.5, 1.0, -1.0, 0.7;
  GeneratedData gen = generate_dataset(config, 0);
  FitOptions opt;
  opt.seed = 7;
  FitResult res = fit_joint(gen.data, config.spec, opt);
  REQUIRE(std::abs(res.theta.rho) < 1.0);
  for (int i = 0; i < 2; ++i)
    REQUIRE(gamma_first_weight(res.theta, i, true) >= 1e-6);
  REQUIRE(res.theta.lambda[0] >= res.theta.lambda[1]);
}

TEST_CASE("h=1 never fits worse than h=0 on SAR truth", "[fit]") {
  GeneratedData gen = sar_data(12, 12, 0.45, 0.8, 29);
  ModelSpec sar;
  sar.q = 1;
  sar.h = 0;
  ModelSpec ann = sar;
  ann.h = 1;
  FitOptions opt;
  opt.seed = 4;
  const double l0 = fit_joint(gen.data, sar, opt).loglik;
  const double l1 = fit_joint(gen.data, ann, opt).loglik;
  REQUIRE(l1 >= l0 - 1e-6);
}

TEST_CASE("alternating reaches the joint optimum on most seeds", "[fit][slow]") {
  SimConfig config = net_config(20, 20, 1001);
  const WeightMatrix w =
      with_spectrum(row_standardize(build_lattice_adjacency(config.lattice)));
  int good = 0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    GeneratedData gen = generate_dataset(config, w, r);
    FitOptions opt;
    opt.seed = 100 + r;
    FitResult joint = fit_joint(gen.data, config.spec, opt);
    opt.mode = FitMode::alternating;
    FitResult alt = fit_alternating(gen.data, config.spec, opt);
    if (alt.loglik >= joint.loglik - 1.0) ++good;
  }
  REQUIRE(good >= 16);  // >= 80% of seeded runs
}

TEST_CASE("score vanishes at an interior optimum", "[fit]") {
  SimConfig config = net_config(20, 20, 51);
  GeneratedData gen = generate_dataset(config, 0);
  FitOptions opt;
  opt.seed = 2;
  opt.gradient_tol = 1e-6;
  opt.inner_f_tol = 1e-12;  // let the gradient criterion drive convergence
  FitResult res = fit_joint(gen.data, config.spec, opt);
  REQUIRE(res.converged);
  // interior solution: gamma_11 well away from its 1e-6 bound, rho inside
  REQUIRE(gamma_first_weight(res.theta, 0, true) > 0.1);
  LikelihoodWorkspace ws(gen.data, config.spec);
  REQUIRE(ws.score(res.theta).lpNorm<Eigen::Infinity>() <= 1e-4);
}
