#include "psarann/likelihood.hpp"
#include "psarann/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace psarann;

namespace {

Dataset random_dataset(int n1, int n2, int q, std::uint64_t seed) {
  Dataset data;
  data.w = with_spectrum(row_standardize(build_lattice_adjacency({n1, n2, ContiguityRule::queen})));
  const int n = data.w.n;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  data.y.resize(n);
  data.x.resize(n, q);
  for (int i = 0; i < n; ++i) {
    data.y[i] = 2.0 * g(rng);
    for (int j = 0; j < q; ++j) data.x(i, j) = g(rng);
  }
  return data;
}

ParameterVector random_theta(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.7);
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  ParameterVector t;
  t.beta.resize(spec.p());
  for (int i = 0; i < t.beta.size(); ++i) t.beta[i] = g(rng);
  t.rho = u(rng);
  t.lambda.resize(spec.h);
  t.gamma.resize(spec.h, spec.g());
  for (int i = 0; i < spec.h; ++i) {
    t.lambda[i] = g(rng);
    for (int j = 0; j < spec.g(); ++j) t.gamma(i, j) = g(rng);
    double& fw = t.gamma(i, spec.neuron_bias ? 1 : 0);
    fw = std::abs(fw) + 0.1;
  }
  return t;
}

// plain per-location reimplementation of the log-likelihood
double naive_loglik(const ParameterVector& t, const Dataset& data, const ModelSpec& spec) {
  const int n = data.n();
  Eigen::MatrixXd w = Eigen::MatrixXd(data.w.w);
  double loglik = 0.0;
  const Eigen::VectorXd& tau = *data.w.spectrum;
  for (int i = 0; i < n; ++i) loglik += std::log(1.0 - t.rho * tau[i]);
  for (int s = 0; s < n; ++s) {
    double wy = 0.0;
    for (int i = 0; i < n; ++i) wy += w(s, i) * data.y[i];
    double mean = 0.0;
    int col = 0;
    if (spec.intercept) mean += t.beta[col++];
    if (spec.linear)
      for (int j = 0; j < spec.q; ++j) mean += t.beta[col + j] * data.x(s, j);
    double nn = 0.0;
    for (int i = 0; i < spec.h; ++i) {
      double z = 0.0;
      if (spec.neuron_bias) {
        for (int j = 0; j < spec.q; ++j) z += t.gamma(i, 1 + j) * (data.x(s, j) - t.gamma(i, 0));
      } else {
        for (int j = 0; j < spec.q; ++j) z += t.gamma(i, j) * data.x(s, j);
      }
      nn += t.lambda[i] / (1.0 + std::exp(-z));
    }
    const double eps = data.y[s] - t.rho * wy - mean - nn;
    loglik += spec.family.logpdf(eps);
  }
  return loglik;
}

}  // namespace

TEST_CASE("log_det_term", "[likelihood]") {
  SECTION("rho = 0 gives 0") {
    Eigen::VectorXd spec(3);
    spec << -0.5, 0.2, 1.0;
    REQUIRE(log_det_term(0.0, spec) == 0.0);
  }
  SECTION("two-point closed form") {
    Eigen::VectorXd spec(2);
    spec << -1.0, 1.0;
    REQUIRE(log_det_term(0.5, spec) == Catch::Approx(std::log(0.75)));
  }
  SECTION("boundary rho is rejected") {
    Eigen::VectorXd spec(2);
    spec << -1.0, 1.0;
    REQUIRE_THROWS_AS(log_det_term(1.0, spec), std::domain_error);
    REQUIRE_THROWS_AS(log_det_term(-1.0000001, spec), std::domain_error);
  }
  SECTION("matches a dense LU determinant") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::uniform_real_distribution<double> coord(0.0, 8.0);
    for (int rep = 0; rep < 10; ++rep) {
      PointSet p;
      for (int i = 0; i < 60; ++i) p.coordinates.push_back({coord(rng), coord(rng)});
      auto w = with_spectrum(row_standardize(build_minimum_distance(p)));
      const double rho = u(rng);
      Eigen::MatrixXd dense = Eigen::MatrixXd::Identity(w.n, w.n) - rho * Eigen::MatrixXd(w.w);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
      double logdet = 0.0;
      for (int i = 0; i < w.n; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
      REQUIRE(log_det_term(rho, *w.spectrum) == Catch::Approx(logdet).margin(1e-8));
    }
  }
  SECTION("second derivative is negative away from zero") {
    auto w = with_spectrum(row_standardize(build_lattice_adjacency({7, 7, ContiguityRule::queen})));
    for (double rho : {-0.8, -0.3, 0.2, 0.6, 0.9}) {
      REQUIRE(log_det_hess(rho, *w.spectrum) < 0.0);
      const double h = 1e-5;
      const double fd = (log_det_term(rho + h, *w.spectrum) - 2.0 * log_det_term(rho, *w.spectrum) +
                         log_det_term(rho - h, *w.spectrum)) /
                        (h * h);
      REQUIRE(log_det_hess(rho, *w.spectrum) == Catch::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("log-likelihood golden values", "[likelihood]") {
  SECTION("single standard normal point") {
    Dataset data;
    data.y = Eigen::VectorXd::Zero(1);
    data.x = Eigen::MatrixXd::Zero(1, 1);
    AdjacencyMatrix adj;
    adj.n = 1;
    adj.entries = SparseMat(1, 1);
    adj.symmetric = true;
    data.w = as_weight_matrix(adj);
    ModelSpec spec;
    spec.q = 1;
    spec.h = 0;
    ParameterVector t;
    t.beta = Eigen::VectorXd::Zero(1);
    t.rho = 0.0;
    t.lambda.resize(0);
    t.gamma.resize(0, 1);
    REQUIRE(log_likelihood(t, data, spec) == Catch::Approx(-0.9189385).margin(1e-7));
  }
  SECTION("zero residuals reduce to the log-determinant part") {
    Dataset data = random_dataset(5, 5, 1, 4);
    ModelSpec spec;
    spec.q = 1;
    spec.h = 0;
    spec.linear = false;
    ParameterVector t;
    t.beta.resize(0);
    t.rho = 0.37;
    t.lambda.resize(0);
    t.gamma.resize(0, 1);
    Dataset exact = data;
    exact.y = Eigen::VectorXd::Zero(data.n());  // (I - rho W) 0 = 0, so eps = 0
    LikelihoodWorkspace ws(exact, spec);
    const double expect = log_det_term(0.37, ws.spectrum()) -
                          0.5 * exact.n() * std::log(2.0 * 3.14159265358979323846);
    REQUIRE(ws.log_likelihood(t) == Catch::Approx(expect).margin(1e-10));
  }
}

TEST_CASE("log-likelihood matches the naive per-location loop", "[likelihood]") {
  for (auto fam : {DensityFamily::normal(), DensityFamily::scaled_t(4.0), DensityFamily::laplace()}) {
    ModelSpec spec;
    spec.q = 2;
    spec.h = 2;
    spec.intercept = true;
    spec.neuron_bias = true;
    spec.family = fam;
    Dataset data = random_dataset(5, 6, 2, 21);
    LikelihoodWorkspace ws(data, spec);
    for (std::uint64_t seed : {1ull, 9ull, 23ull}) {
      ParameterVector t = random_theta(spec, seed);
      REQUIRE(ws.log_likelihood(t) ==
              Catch::Approx(naive_loglik(t, data, spec)).epsilon(1e-12).margin(1e-12));
    }
  }
}

TEST_CASE("rho outside the interval is rejected", "[likelihood]") {
  Dataset data = random_dataset(4, 4, 1, 2);
  ModelSpec spec;
  spec.q = 1;
  spec.h = 0;
  ParameterVector t;
  t.beta = Eigen::VectorXd::Zero(1);
  t.rho = 1.0;
  t.lambda.resize(0);
  t.gamma.resize(0, 1);
  LikelihoodWorkspace ws(data, spec);
  REQUIRE_THROWS_AS(ws.log_likelihood(t), std::domain_error);
}

TEST_CASE("normal-family beta score reduces to X'eps", "[likelihood]") {
  ModelSpec spec;
  spec.q = 2;
  spec.h = 1;
  Dataset data = random_dataset(4, 5, 2, 8);
  LikelihoodWorkspace ws(data, spec);
  ParameterVector t = random_theta(spec, 3);
  Eigen::VectorXd grad = ws.score(t);
  Eigen::VectorXd eps = residuals(t, data, spec);
  Eigen::VectorXd expect = data.x.transpose() * eps;
  REQUIRE((grad.head(2) - expect).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("score matches central finite differences", "[likelihood]") {
  for (auto fam : {DensityFamily::normal(), DensityFamily::scaled_t(4.0), DensityFamily::laplace()}) {
    for (bool bias : {false, true}) {
      ModelSpec spec;
      spec.q = 2;
      spec.h = 2;
      spec.intercept = true;
      spec.neuron_bias = bias;
      spec.family = fam;
      Dataset data = random_dataset(7, 7, 2, 101);
      LikelihoodWorkspace ws(data, spec);
      ParameterVector t = random_theta(spec, 55);
      if (fam.tag() == Family::laplace) {
        // keep residuals away from the kink
        Eigen::VectorXd eps = residuals(t, data, spec);
        if (eps.cwiseAbs().minCoeff() < 1e-3) t.beta[0] += 0.01234;
      }
      const ParamLayout layout(spec);
      Eigen::VectorXd grad = ws.score(t);
      Eigen::VectorXd flat = t.flatten(layout);
      for (int j = 0; j < layout.dim(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(flat[j]));
        Eigen::VectorXd hi = flat, lo = flat;
        hi[j] += h;
        lo[j] -= h;
        const double fd = (ws.log_likelihood(ParameterVector::from_flat(layout, hi)) -
                           ws.log_likelihood(ParameterVector::from_flat(layout, lo))) /
                          (2.0 * h);
        REQUIRE(grad[j] == Catch::Approx(fd).epsilon(1e-6).margin(1e-6));
      }
    }
  }
}

TEST_CASE("hessian matches finite differences of the score", "[likelihood]") {
  for (auto fam : {DensityFamily::normal(), DensityFamily::scaled_t(4.0)}) {
    ModelSpec spec;
    spec.q = 2;
    spec.h = 2;
    spec.neuron_bias = true;
    spec.family = fam;
    Dataset data = random_dataset(7, 7, 2, 33);
    LikelihoodWorkspace ws(data, spec);
    ParameterVector t = random_theta(spec, 77);
    const ParamLayout layout(spec);
    Eigen::MatrixXd hess = ws.hessian(t);
    REQUIRE(hess == hess.transpose());  // exactly symmetric
    Eigen::VectorXd flat = t.flatten(layout);
    for (int j = 0; j < layout.dim(); ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(flat[j]));
      Eigen::VectorXd hi = flat, lo = flat;
      hi[j] += h;
      lo[j] -= h;
      Eigen::VectorXd fd = (ws.score(ParameterVector::from_flat(layout, hi)) -
                            ws.score(ParameterVector::from_flat(layout, lo))) /
                           (2.0 * h);
      for (int i = 0; i < layout.dim(); ++i)
        REQUIRE(hess(i, j) == Catch::Approx(fd[i]).epsilon(1e-4).margin(1e-4));
    }
  }
}

TEST_CASE("hessian is unavailable for laplace", "[likelihood]") {
  ModelSpec spec;
  spec.q = 1;
  spec.h = 1;
  spec.family = DensityFamily::laplace();
  Dataset data = random_dataset(4, 4, 1, 5);
  ParameterVector t = random_theta(spec, 6);
  REQUIRE_THROWS_AS(hessian_matrix(t, data, spec), std::domain_error);
}

TEST_CASE("generator round trip recovers the injected noise", "[likelihood]") {
  SimConfig config;
  config.lattice = {8, 8, ContiguityRule::queen};
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
  config.seed = 99;
  GeneratedData gen = generate_dataset(config, 0);
  Eigen::VectorXd eps = residuals(config.true_theta, gen.data, config.spec);
  REQUIRE((eps - gen.eps).lpNorm<Eigen::Infinity>() < 1e-10);
}
