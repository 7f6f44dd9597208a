// File formats behind the CLI: dataset CSV ("y,x1,...,xq"), Monte Carlo
// summary CSV, QQ CSV, and JSON for parameter vectors, fit results, sim
// configs and inference reports.
#pragma once

#include "psarann/fit.hpp"
#include "psarann/inference.hpp"
#include "psarann/model.hpp"
#include "psarann/simulation.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace psarann {

using Json = nlohmann::json;

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

// ---- dataset CSV ----

inline void write_dataset_csv(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                              std::ostream& os) {
  os << "y";
  for (int j = 1; j <= x.cols(); ++j) os << ",x" << j;
  os << "\n";
  for (int s = 0; s < y.size(); ++s) {
    os << detail::fmt_double(y[s]);
    for (int j = 0; j < x.cols(); ++j) os << "," << detail::fmt_double(x(s, j));
    os << "\n";
  }
}

struct TabularData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
};

inline TabularData read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset CSV: empty file");
  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "y")
    throw std::runtime_error("dataset CSV: header must start with 'y'");
  const int q = static_cast<int>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != q + 1)
      throw std::runtime_error("dataset CSV: row width mismatch");
    std::vector<double> row(q + 1);
    for (int j = 0; j <= q; ++j) row[j] = std::stod(cells[j]);
    rows.push_back(std::move(row));
  }
  TabularData out;
  const int n = static_cast<int>(rows.size());
  out.y.resize(n);
  out.x.resize(n, q);
  for (int s = 0; s < n; ++s) {
    out.y[s] = rows[s][0];
    for (int j = 0; j < q; ++j) out.x(s, j) = rows[s][1 + j];
  }
  return out;
}

// ---- parameter vector / model spec JSON ----

inline Json theta_to_json(const ParameterVector& theta) {
  Json j;
  j["beta"] = std::vector<double>(theta.beta.data(), theta.beta.data() + theta.beta.size());
  j["rho"] = theta.rho;
  j["lambda"] =
      std::vector<double>(theta.lambda.data(), theta.lambda.data() + theta.lambda.size());
  Json gamma = Json::array();
  for (int i = 0; i < theta.gamma.rows(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < theta.gamma.cols(); ++k) row.push_back(theta.gamma(i, k));
    gamma.push_back(row);
  }
  j["gamma"] = gamma;
  return j;
}

inline ParameterVector theta_from_json(const Json& j) {
  ParameterVector t;
  const auto beta = j.at("beta").get<std::vector<double>>();
  t.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());
  t.rho = j.at("rho").get<double>();
  const auto lambda = j.at("lambda").get<std::vector<double>>();
  t.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.data(), lambda.size());
  const auto& gamma = j.at("gamma");
  const int h = static_cast<int>(gamma.size());
  const int g = h > 0 ? static_cast<int>(gamma[0].size()) : 0;
  t.gamma.resize(h, g);
  for (int i = 0; i < h; ++i)
    for (int k = 0; k < g; ++k) t.gamma(i, k) = gamma[i][k].get<double>();
  return t;
}

inline Json model_to_json(const ModelSpec& spec) {
  Json j;
  j["q"] = spec.q;
  j["h"] = spec.h;
  j["family"] = to_string(spec.family.tag());
  if (spec.family.tag() == Family::scaled_t) j["df"] = spec.family.nu();
  j["intercept"] = spec.intercept;
  j["neuron_bias"] = spec.neuron_bias;
  j["linear"] = spec.linear;
  return j;
}

inline ModelSpec model_from_json(const Json& j) {
  ModelSpec spec;
  spec.q = j.at("q").get<int>();
  spec.h = j.at("h").get<int>();
  const Family tag = family_from_string(j.at("family").get<std::string>());
  spec.family = DensityFamily::make(tag, tag == Family::scaled_t ? j.at("df").get<double>() : 0.0);
  spec.intercept = j.value("intercept", false);
  spec.neuron_bias = j.value("neuron_bias", false);
  spec.linear = j.value("linear", true);
  spec.validate();
  return spec;
}

// ---- fit result JSON ----

inline Json fit_to_json(const FitResult& fit, const ModelSpec& spec, const FitOptions& opt) {
  Json j;
  j["model"] = model_to_json(spec);
  j["theta"] = theta_to_json(fit.theta);
  j["loglik"] = fit.loglik;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["trace"] = fit.trace;
  j["seed"] = fit.seed;
  j["flags"] = {{"reducible", fit.flags.reducible},
                {"sign_violation", fit.flags.sign_violation}};
  j["options"] = {{"mode", to_string(opt.mode)},
                  {"max_iterations", opt.max_iterations},
                  {"gradient_tol", opt.gradient_tol},
                  {"inner_f_tol", opt.inner_f_tol},
                  {"outer_threshold", opt.outer_threshold},
                  {"restarts", opt.restarts}};
  return j;
}

struct LoadedFit {
  ModelSpec spec;
  ParameterVector theta;
  double loglik = 0.0;
  bool converged = false;
};

inline LoadedFit fit_from_json(const Json& j) {
  LoadedFit out;
  out.spec = model_from_json(j.at("model"));
  out.theta = theta_from_json(j.at("theta"));
  out.loglik = j.at("loglik").get<double>();
  out.converged = j.value("converged", false);
  out.theta.check_shape(out.spec);
  return out;
}

// ---- simulation config JSON ----

inline Json sim_config_to_json(const SimConfig& config) {
  Json j;
  j["lattice"] = {{"rows", config.lattice.rows},
                  {"cols", config.lattice.cols},
                  {"rule", to_string(config.lattice.rule)}};
  j["model"] = model_to_json(config.spec);
  j["theta"] = theta_to_json(config.true_theta);
  j["x_mean"] = config.x_mean;
  j["x_sd"] = config.x_sd;
  j["replicates"] = config.replicates;
  j["seed"] = config.seed;
  return j;
}

inline SimConfig sim_config_from_json(const Json& j) {
  SimConfig config;
  const auto& lat = j.at("lattice");
  config.lattice.rows = lat.at("rows").get<int>();
  config.lattice.cols = lat.at("cols").get<int>();
  config.lattice.rule = contiguity_from_string(lat.value("rule", "queen"));
  config.spec = model_from_json(j.at("model"));
  config.true_theta = theta_from_json(j.at("theta"));
  config.x_mean = j.value("x_mean", 0.5);
  config.x_sd = j.value("x_sd", 3.0);
  config.replicates = j.value("replicates", 1);
  config.seed = j.value("seed", std::uint64_t{0});
  config.validate();
  return config;
}

// ---- Monte Carlo CSV ----

inline void write_mc_csv(const McSummary& mc, std::ostream& os) {
  os << "replicate,converged,loglik";
  for (const auto& name : mc.names) os << "," << name;
  os << "\n";
  for (const McRow& row : mc.rows) {
    os << row.replicate << "," << (row.converged ? 1 : 0) << ","
       << detail::fmt_double(row.loglik);
    for (int j = 0; j < row.theta.size(); ++j) os << "," << detail::fmt_double(row.theta[j]);
    os << "\n";
  }
  os << "mean,,";
  for (int j = 0; j < mc.mean.size(); ++j) os << "," << detail::fmt_double(mc.mean[j]);
  os << "\n";
  os << "sd,,";
  for (int j = 0; j < mc.sd.size(); ++j) os << "," << detail::fmt_double(mc.sd[j]);
  os << "\n";
  os << "failures," << mc.failures << ",";
  for (int j = 0; j < mc.mean.size(); ++j) os << ",";
  os << "\n";
}

// Column extraction for the qq command: replicate rows only (numeric first
// field), converged replicates only.
inline std::vector<double> read_mc_column(std::istream& is, const std::string& param) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("MC CSV: empty file");
  auto header = detail::split_csv_line(line);
  int col = -1;
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == param) col = static_cast<int>(j);
  if (col < 0) throw std::runtime_error("MC CSV: no column named '" + param + "'");
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.empty()) continue;
    char* end = nullptr;
    const long rep = std::strtol(cells[0].c_str(), &end, 10);
    (void)rep;
    if (end == cells[0].c_str() || *end != '\0') continue;  // summary footer
    if (cells.size() > 1 && cells[1] == "0") continue;      // non-converged
    if (col >= static_cast<int>(cells.size()))
      throw std::runtime_error("MC CSV: short row");
    out.push_back(std::stod(cells[col]));
  }
  return out;
}

inline void write_qq_csv(const std::vector<std::array<double, 2>>& pairs, std::ostream& os) {
  os << "theoretical,sample\n";
  for (const auto& p : pairs)
    os << detail::fmt_double(p[0]) << "," << detail::fmt_double(p[1]) << "\n";
}

// ---- inference JSON ----

inline Json inference_to_json(const std::vector<std::string>& names,
                              const Eigen::VectorXd& estimates, const CovarianceEstimate& cov,
                              const std::vector<Interval>& intervals, double level,
                              double loglik, double aic_value, const MoranResult& moran,
                              const LrtResult* lrt_result) {
  Json params = Json::array();
  for (size_t i = 0; i < names.size(); ++i) {
    params.push_back({{"name", names[i]},
                      {"estimate", estimates[static_cast<int>(i)]},
                      {"se", cov.se[static_cast<int>(i)]},
                      {"ci", {intervals[i].lo, intervals[i].hi}}});
  }
  Json j;
  j["parameters"] = params;
  j["level"] = level;
  j["loglik"] = loglik;
  j["aic"] = aic_value;
  j["moran"] = {{"I", moran.statistic}, {"z", moran.z}, {"p", moran.p}};
  j["a_condition"] = cov.a_condition;
  j["pseudo_inverse"] = cov.pseudo_inverse;
  if (lrt_result) {
    j["lrt"] = {{"statistic", lrt_result->statistic},
                {"df", lrt_result->df},
                {"p", lrt_result->p},
                {"nesting_violated", lrt_result->nesting_violated}};
  } else {
    j["lrt"] = nullptr;
  }
  return j;
}

// ---- small file helpers ----

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline Json read_json_file(const std::string& path) { return Json::parse(read_text_file(path)); }

}  // namespace psarann
