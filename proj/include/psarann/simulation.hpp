// Lattice Monte Carlo: dataset generation from the model at a true theta,
// seeded replicate streams, recovery summaries and QQ-plot data.
#pragma once

#include "psarann/fit.hpp"
#include "psarann/likelihood.hpp"
#include "psarann/model.hpp"
#include "psarann/spatial_weights.hpp"

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace psarann {

struct SimConfig {
  LatticeSpec lattice{50, 50, ContiguityRule::queen};
  ModelSpec spec;
  ParameterVector true_theta;
  double x_mean = 0.5;
  double x_sd = 3.0;
  int replicates = 1;
  std::uint64_t seed = 0;

  void validate() const {
    spec.validate();
    true_theta.check_shape(spec);
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (!(x_sd > 0.0)) throw std::invalid_argument("x_sd must be positive");
  }
};

template <class Rng>
Eigen::VectorXd sample_errors(const DensityFamily& family, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) e[i] = family.sample(rng);
  return e;
}

struct GeneratedData {
  Dataset data;
  Eigen::VectorXd eps;  // the injected noise, for round-trip checks
};

inline std::mt19937_64 replicate_rng(std::uint64_t seed, int replicate_index) {
  return std::mt19937_64(splitmix64(seed ^ static_cast<std::uint64_t>(replicate_index)));
}

// X iid N(x_mean, x_sd^2), eps per family, then Y solved from
// (I - rho0 W) Y = X beta0 + F lambda0 + eps by sparse LU.
inline GeneratedData generate_dataset(const SimConfig& config, const WeightMatrix& w,
                                      int replicate_index) {
  config.validate();
  const int n = w.n;
  std::mt19937_64 rng = replicate_rng(config.seed, replicate_index);
  std::normal_distribution<double> xdist(config.x_mean, config.x_sd);

  GeneratedData out;
  out.data.x.resize(n, config.spec.q);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < config.spec.q; ++j) out.data.x(s, j) = xdist(rng);
  out.eps = sample_errors(config.spec.family, n, rng);

  Eigen::VectorXd mean = out.eps;
  if (config.spec.p() > 0)
    mean.noalias() += linear_design(out.data.x, config.spec) * config.true_theta.beta;
  if (config.spec.h > 0)
    mean += nn_component(out.data.x, config.true_theta.gamma, config.true_theta.lambda,
                         config.spec.neuron_bias);

  Eigen::SparseMatrix<double> system(n, n);
  {
    Eigen::SparseMatrix<double> wcol(w.w);
    Eigen::SparseMatrix<double> eye(n, n);
    eye.setIdentity();
    system = eye - config.true_theta.rho * wcol;
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(system);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("(I - rho W) factorization failed; rho outside the interval?");
  out.data.y = lu.solve(mean);
  out.data.w = w;
  return out;
}

inline GeneratedData generate_dataset(const SimConfig& config, int replicate_index) {
  const WeightMatrix w = row_standardize(build_lattice_adjacency(config.lattice));
  return generate_dataset(config, w, replicate_index);
}

struct McRow {
  int replicate = 0;
  bool converged = false;
  double loglik = 0.0;
  Eigen::VectorXd theta;
};

struct McSummary {
  std::vector<std::string> names;  // flat parameter names
  std::vector<McRow> rows;         // in replicate order
  Eigen::VectorXd mean;            // over converged replicates
  Eigen::VectorXd sd;              // NaN when fewer than 2 converged
  int failures = 0;
};

inline std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  if (spec.intercept) names.push_back("beta0");
  if (spec.linear)
    for (int j = 1; j <= spec.q; ++j) names.push_back("beta" + std::to_string(j));
  names.push_back("rho");
  for (int i = 1; i <= spec.h; ++i)
    names.push_back(spec.h == 1 ? "lambda" : "lambda" + std::to_string(i));
  for (int i = 0; i < spec.h; ++i) {
    const std::string stem = spec.h == 1 ? "gamma" : "gamma" + std::to_string(i + 1) + "_";
    if (spec.neuron_bias) names.push_back(stem + "0");
    for (int j = 1; j <= spec.q; ++j) names.push_back(stem + std::to_string(j));
  }
  return names;
}

// Per-replicate seeded generation + fit; deterministic for a given
// (config, options) regardless of the thread count.
inline McSummary monte_carlo(const SimConfig& config, const FitOptions& options,
                             int threads = 1) {
  config.validate();
  const WeightMatrix w = with_spectrum(row_standardize(build_lattice_adjacency(config.lattice)));
  const ParamLayout layout(config.spec);

  McSummary out;
  out.names = parameter_names(config.spec);
  out.rows.resize(config.replicates);

  auto run_one = [&](int r) {
    McRow row;
    row.replicate = r;
    try {
      GeneratedData gen = generate_dataset(config, w, r);
      FitOptions per = options;
      per.seed = splitmix64(config.seed ^ (0x5851F42D4C957F2Dull + static_cast<std::uint64_t>(r)));
      FitResult fit_res = fit(gen.data, config.spec, per);
      row.converged = fit_res.converged;
      row.loglik = fit_res.loglik;
      row.theta = fit_res.theta.flatten(layout);
    } catch (const std::exception&) {
      row.converged = false;
      row.theta = Eigen::VectorXd::Constant(layout.dim(),
                                            std::numeric_limits<double>::quiet_NaN());
      row.loglik = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows[r] = std::move(row);
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (int r = 0; r < config.replicates; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          const int r = next.fetch_add(1);
          if (r >= config.replicates) break;
          run_one(r);
        }
      });
    for (auto& th : pool) th.join();
  }

  const int dim = layout.dim();
  out.mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  int converged = 0;
  for (const McRow& row : out.rows) {
    if (!row.converged) {
      ++out.failures;
      continue;
    }
    ++converged;
    out.mean += row.theta;
  }
  if (converged == 0) throw std::runtime_error("every Monte Carlo replicate failed");
  if (converged > 0) out.mean /= converged;
  for (const McRow& row : out.rows)
    if (row.converged) m2 += (row.theta - out.mean).cwiseAbs2();
  if (converged >= 2) {
    out.sd = (m2 / (converged - 1)).cwiseSqrt();
  } else {
    out.sd = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

// Ordered (normal quantile, sample quantile) pairs; rank i maps to
// Phi^-1((i - 0.5) / m).
inline std::vector<std::array<double, 2>> qq_data(const std::vector<double>& estimates) {
  const int m = static_cast<int>(estimates.size());
  if (m < 3) throw std::invalid_argument("QQ data needs at least 3 values");
  std::vector<double> sorted = estimates;
  std::sort(sorted.begin(), sorted.end());
  boost::math::normal_distribution<double> z;
  std::vector<std::array<double, 2>> out(m);
  for (int i = 0; i < m; ++i)
    out[i] = {boost::math::quantile(z, (i + 0.5) / m), sorted[i]};
  return out;
}

}  // namespace psarann
