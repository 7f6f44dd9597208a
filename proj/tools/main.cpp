// psarann: spatial autoregressive models with a neural-network component.
// Subcommands wire weights construction, simulation, fitting and inference
// into file-based pipelines (GAL / CSV / JSON).
#include "psarann/fit.hpp"
#include "psarann/gal.hpp"
#include "psarann/inference.hpp"
#include "psarann/likelihood.hpp"
#include "psarann/model.hpp"
#include "psarann/serialize.hpp"
#include "psarann/simulation.hpp"
#include "psarann/spatial_weights.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

using namespace psarann;

LatticeSpec parse_lattice(const std::string& text, const std::string& rule) {
  LatticeSpec spec;
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw CLI::ValidationError("--lattice", "expected ROWSxCOLS, e.g. 3x3");
  try {
    spec.rows = std::stoi(text.substr(0, x));
    spec.cols = std::stoi(text.substr(x + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--lattice", "expected ROWSxCOLS, e.g. 3x3");
  }
  if (spec.rows < 1 || spec.cols < 1)
    throw CLI::ValidationError("--lattice", "dimensions must be positive");
  spec.rule = contiguity_from_string(rule);
  return spec;
}

Dataset load_dataset(const std::string& data_path, const std::string& gal_path) {
  TabularData tab;
  {
    std::ifstream is(data_path);
    if (!is) throw std::runtime_error("cannot open " + data_path);
    tab = read_dataset_csv(is);
  }
  AdjacencyMatrix adj = read_gal_file(gal_path);
  Dataset data;
  data.y = std::move(tab.y);
  data.x = std::move(tab.x);
  data.w = row_standardize(adj);
  data.validate();
  return data;
}

int cmd_weights(const std::string& lattice_text, const std::string& rule, bool standardize,
                const std::string& out) {
  const LatticeSpec spec = parse_lattice(lattice_text, rule);
  const AdjacencyMatrix adj = build_lattice_adjacency(spec);
  if (standardize) {
    const WeightMatrix w = row_standardize(adj);  // errors on isolated units
    const SpectrumResult std_spec = spectrum_and_bounds(w);
    const SpectrumResult raw_spec = spectrum_and_bounds(as_weight_matrix(adj));
    std::printf("n=%d rho interval: raw (%.6f, %.6f), standardized (%.6f, %.6f)\n", adj.n,
                raw_spec.rho_interval.lo, raw_spec.rho_interval.hi, std_spec.rho_interval.lo,
                std_spec.rho_interval.hi);
  }
  write_gal_file(adj, out);
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out,
                 const std::string& eps_out, int replicate) {
  const SimConfig config = sim_config_from_json(read_json_file(config_path));
  const GeneratedData gen = generate_dataset(config, replicate);
  {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot open " + out + " for writing");
    write_dataset_csv(gen.data.y, gen.data.x, os);
  }
  if (!eps_out.empty()) {
    std::ofstream os(eps_out);
    if (!os) throw std::runtime_error("cannot open " + eps_out + " for writing");
    os << "eps\n";
    for (int s = 0; s < gen.eps.size(); ++s) os << detail::fmt_double(gen.eps[s]) << "\n";
  }
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& gal_path,
            const std::string& family, double df, int neurons, const std::string& mode,
            std::uint64_t seed, bool intercept, bool neuron_bias, bool no_linear, int restarts,
            const std::string& out) {
  Dataset data = load_dataset(data_path, gal_path);
  ModelSpec spec;
  spec.q = static_cast<int>(data.x.cols());
  spec.h = neurons;
  const Family tag = family_from_string(family);
  spec.family = DensityFamily::make(tag, df);
  spec.intercept = intercept;
  spec.neuron_bias = neuron_bias;
  spec.linear = !no_linear;
  FitOptions opt;
  opt.mode = fit_mode_from_string(mode);
  opt.seed = seed;
  opt.restarts = restarts;
  const FitResult res = fit(data, spec, opt);
  write_text_file(out, fit_to_json(res, spec, opt).dump(2) + "\n");
  std::printf("loglik=%.6f iterations=%d converged=%d\n", res.loglik, res.iterations,
              res.converged ? 1 : 0);
  return 0;
}

int cmd_mc(const std::string& config_path, int replicates, const std::string& mode,
           std::uint64_t seed, bool seed_set, int threads, const std::string& out) {
  SimConfig config = sim_config_from_json(read_json_file(config_path));
  if (replicates > 0) config.replicates = replicates;
  if (seed_set) config.seed = seed;
  FitOptions opt;
  opt.mode = fit_mode_from_string(mode);
  const McSummary mc = monte_carlo(config, opt, threads);
  {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot open " + out + " for writing");
    write_mc_csv(mc, os);
  }
  std::printf("replicates=%d failures=%d\n", static_cast<int>(mc.rows.size()), mc.failures);
  return 0;
}

int cmd_infer(const std::string& fit_path, const std::string& data_path,
              const std::string& gal_path, double level, const std::string& null_fit_path,
              const std::string& out) {
  const LoadedFit loaded = fit_from_json(read_json_file(fit_path));
  Dataset data = load_dataset(data_path, gal_path);
  LikelihoodWorkspace ws(data, loaded.spec);
  const double loglik = ws.log_likelihood(loaded.theta);
  const ParamLayout layout(loaded.spec);
  const Eigen::VectorXd flat = loaded.theta.flatten(layout);

  const Eigen::VectorXd resid = residuals(loaded.theta, data, loaded.spec);
  const MoranResult moran = morans_i(resid, data.w);
  const double aic_value = aic(loglik, layout.dim());

  LrtResult lrt_result;
  bool have_lrt = false;
  if (!null_fit_path.empty()) {
    const LoadedFit null_fit = fit_from_json(read_json_file(null_fit_path));
    const int df = layout.dim() - ParamLayout(null_fit.spec).dim();
    lrt_result = lrt(null_fit.loglik, loglik, df);
    have_lrt = true;
  }

  Json j;
  if (loaded.spec.family.has_curvature()) {
    const CovarianceEstimate cov = asymptotic_covariance(loaded.theta, data, loaded.spec);
    const std::vector<Interval> intervals = confidence_intervals(cov, flat, level);
    j = inference_to_json(parameter_names(loaded.spec), flat, cov, intervals, level, loglik,
                          aic_value, moran, have_lrt ? &lrt_result : nullptr);
  } else {
    // Laplace: no second derivative at 0, so covariance output is disabled
    const std::string note =
        "covariance unavailable for the Laplace family (log-density has no second "
        "derivative at 0); standard errors and intervals are omitted";
    const auto names = parameter_names(loaded.spec);
    Json params = Json::array();
    for (size_t i = 0; i < names.size(); ++i)
      params.push_back({{"name", names[i]},
                        {"estimate", flat[static_cast<int>(i)]},
                        {"se", nullptr},
                        {"ci", nullptr}});
    j["parameters"] = params;
    j["level"] = level;
    j["loglik"] = loglik;
    j["aic"] = aic_value;
    j["moran"] = {{"I", moran.statistic}, {"z", moran.z}, {"p", moran.p}};
    j["covariance_disabled"] = note;
    if (have_lrt) {
      j["lrt"] = {{"statistic", lrt_result.statistic},
                  {"df", lrt_result.df},
                  {"p", lrt_result.p},
                  {"nesting_violated", lrt_result.nesting_violated}};
    } else {
      j["lrt"] = nullptr;
    }
    std::fprintf(stderr, "note: %s\n", note.c_str());
  }
  write_text_file(out, j.dump(2) + "\n");
  std::printf("loglik=%.6f aic=%.4f moran_z=%.4f\n", loglik, aic_value, moran.z);
  return 0;
}

int cmd_qq(const std::string& mc_path, const std::string& param, const std::string& out) {
  std::ifstream is(mc_path);
  if (!is) throw std::runtime_error("cannot open " + mc_path);
  const std::vector<double> values = read_mc_column(is, param);
  const auto pairs = qq_data(values);
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot open " + out + " for writing");
  write_qq_csv(pairs, os);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSAR-ANN: partially specified spatial autoregressive models with a "
               "single-hidden-layer neural network component"};
  app.require_subcommand(1);

  // weights
  auto* weights = app.add_subcommand("weights", "build a lattice contiguity matrix (GAL)");
  std::string lattice_text, rule = "queen", w_out;
  bool standardize = false;
  weights->add_option("--lattice", lattice_text, "grid size ROWSxCOLS, e.g. 50x50")->required();
  weights->add_option("--rule", rule, "queen|rook|bishop");
  weights->add_flag("--standardize", standardize,
                    "validate row standardization and report rho intervals");
  weights->add_option("--out", w_out, "output GAL path")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate one dataset from a sim config");
  std::string sim_config, sim_out, sim_eps;
  int sim_replicate = 0;
  simulate->add_option("--config", sim_config, "sim config JSON")->required();
  simulate->add_option("--out", sim_out, "output dataset CSV")->required();
  simulate->add_option("--eps", sim_eps, "optional CSV of the injected errors");
  simulate->add_option("--replicate", sim_replicate, "replicate stream index (default 0)");

  // fit
  auto* fitc = app.add_subcommand("fit", "maximum likelihood fit");
  std::string fit_data, fit_gal, fit_family = "normal", fit_mode = "joint", fit_out;
  double fit_df = 0.0;
  int fit_neurons = 1, fit_restarts = 5;
  std::uint64_t fit_seed = 0;
  bool fit_intercept = false, fit_neuron_bias = false, fit_no_linear = false;
  fitc->add_option("--data", fit_data, "dataset CSV")->required();
  fitc->add_option("--weights", fit_gal, "GAL weights")->required();
  fitc->add_option("--family", fit_family, "normal|t|laplace");
  auto* df_opt = fitc->add_option("--df", fit_df, "degrees of freedom (t family only)");
  fitc->add_option("--neurons", fit_neurons, "hidden neuron count h");
  fitc->add_option("--mode", fit_mode, "joint|alternating");
  fitc->add_option("--seed", fit_seed, "rng seed for starting values");
  fitc->add_flag("--intercept", fit_intercept, "include an intercept in the linear part");
  fitc->add_flag("--neuron-bias", fit_neuron_bias, "per-neuron centering offset");
  fitc->add_flag("--no-linear", fit_no_linear, "drop the X beta term");
  fitc->add_option("--restarts", fit_restarts, "network restarts per outer step");
  fitc->add_option("--out", fit_out, "output fit JSON")->required();

  // mc
  auto* mcc = app.add_subcommand("mc", "Monte Carlo replication study");
  std::string mc_config, mc_mode = "joint", mc_out;
  int mc_replicates = 0, mc_threads = 1;
  std::uint64_t mc_seed = 0;
  mcc->add_option("--config", mc_config, "sim config JSON")->required();
  mcc->add_option("--replicates", mc_replicates, "override replicate count");
  mcc->add_option("--mode", mc_mode, "joint|alternating");
  auto* mc_seed_opt = mcc->add_option("--seed", mc_seed, "override the config seed");
  mcc->add_option("--threads", mc_threads, "worker threads");
  mcc->add_option("--out", mc_out, "output CSV")->required();

  // infer
  auto* infer = app.add_subcommand("infer", "standard errors, intervals and diagnostics");
  std::string inf_fit, inf_data, inf_gal, inf_null, inf_out;
  double inf_level = 0.95;
  infer->add_option("--fit", inf_fit, "fit JSON")->required();
  infer->add_option("--data", inf_data, "dataset CSV")->required();
  infer->add_option("--weights", inf_gal, "GAL weights")->required();
  infer->add_option("--level", inf_level, "confidence level (default 0.95)");
  infer->add_option("--null-fit", inf_null, "nested fit JSON for the likelihood-ratio test");
  infer->add_option("--out", inf_out, "output JSON")->required();

  // qq
  auto* qqc = app.add_subcommand("qq", "normal QQ data for a Monte Carlo column");
  std::string qq_mc, qq_param = "rho", qq_out;
  qqc->add_option("--mc", qq_mc, "MC summary CSV")->required();
  qqc->add_option("--param", qq_param, "parameter column name");
  qqc->add_option("--out", qq_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  // flag-value validation beyond what CLI11 expresses
  try {
    if (*weights) parse_lattice(lattice_text, rule);
    if (*fitc) {
      const Family tag = family_from_string(fit_family);
      if (tag == Family::scaled_t && df_opt->count() == 0)
        throw std::invalid_argument("--df is required with --family t");
      if (tag != Family::scaled_t && df_opt->count() > 0)
        throw std::invalid_argument("--df is only valid with --family t");
      if (tag == Family::scaled_t && !(fit_df > 2.0))
        throw std::invalid_argument("--df must exceed 2");
    }
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*weights) return cmd_weights(lattice_text, rule, standardize, w_out);
    if (*simulate) return cmd_simulate(sim_config, sim_out, sim_eps, sim_replicate);
    if (*fitc)
      return cmd_fit(fit_data, fit_gal, fit_family, fit_df, fit_neurons, fit_mode, fit_seed,
                     fit_intercept, fit_neuron_bias, fit_no_linear, fit_restarts, fit_out);
    if (*mcc)
      return cmd_mc(mc_config, mc_replicates, mc_mode, mc_seed, mc_seed_opt->count() > 0,
                    mc_threads, mc_out);
    if (*infer) return cmd_infer(inf_fit, inf_data, inf_gal, inf_level, inf_null, inf_out);
    if (*qqc) return cmd_qq(qq_mc, qq_param, qq_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
