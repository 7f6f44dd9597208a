// Unit-variance error densities: standard normal, rescaled t(nu), and
// Laplace(0, sqrt(2)/2). Each exposes the log density, the score
// psi = f'/f and the curvature u = d^2 ln f / d eps^2.
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace psarann {

enum class Family { normal, scaled_t, laplace };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::normal: return "normal";
    case Family::scaled_t: return "t";
    default: return "laplace";
  }
}

inline Family family_from_string(const std::string& s) {
  if (s == "normal") return Family::normal;
  if (s == "t" || s == "scaled_t") return Family::scaled_t;
  if (s == "laplace") return Family::laplace;
  throw std::invalid_argument("unknown density family: " + s);
}

struct DensityEval {
  double logpdf = 0.0;
  double score = 0.0;
  double curvature = 0.0;
  bool has_curvature = false;
};

class DensityFamily {
 public:
  static DensityFamily normal() { return DensityFamily(Family::normal, 0.0); }
  static DensityFamily scaled_t(double nu) {
    if (!(nu > 2.0)) throw std::invalid_argument("rescaled t requires nu > 2");
    return DensityFamily(Family::scaled_t, nu);
  }
  static DensityFamily laplace() { return DensityFamily(Family::laplace, 0.0); }
  static DensityFamily make(Family tag, double nu = 0.0) {
    switch (tag) {
      case Family::normal: return normal();
      case Family::scaled_t: return scaled_t(nu);
      default: return laplace();
    }
  }

  Family tag() const { return tag_; }
  double nu() const { return nu_; }
  bool has_curvature() const { return tag_ != Family::laplace; }

  double logpdf(double e) const {
    switch (tag_) {
      case Family::normal:
        return kLogNormConst - 0.5 * e * e;
      case Family::scaled_t:
        return t_const_ - 0.5 * (nu_ + 1.0) * std::log1p(e * e / (nu_ - 2.0));
      default:
        return kLogLaplaceConst - kSqrt2 * std::abs(e);
    }
  }

  // psi(e) = f'(e)/f(e); the Laplace subgradient takes sign(0) = 0.
  double score(double e) const {
    switch (tag_) {
      case Family::normal:
        return -e;
      case Family::scaled_t:
        return -(nu_ + 1.0) * e / (nu_ - 2.0 + e * e);
      default:
        return e > 0.0 ? -kSqrt2 : (e < 0.0 ? kSqrt2 : 0.0);
    }
  }

  double curvature(double e) const {
    switch (tag_) {
      case Family::normal:
        return -1.0;
      case Family::scaled_t: {
        const double denom = nu_ - 2.0 + e * e;
        return -(nu_ + 1.0) * (nu_ - 2.0 - e * e) / (denom * denom);
      }
      default:
        throw std::domain_error("Laplace density has no defined curvature");
    }
  }

  DensityEval evaluate(double e) const {
    DensityEval out;
    out.logpdf = logpdf(e);
    out.score = score(e);
    out.has_curvature = has_curvature();
    if (out.has_curvature) out.curvature = curvature(e);
    return out;
  }

  // Unit-variance draws matching the family.
  template <class Rng>
  double sample(Rng& rng) const {
    switch (tag_) {
      case Family::normal: {
        std::normal_distribution<double> d(0.0, 1.0);
        return d(rng);
      }
      case Family::scaled_t: {
        std::student_t_distribution<double> d(nu_);
        return d(rng) * std::sqrt((nu_ - 2.0) / nu_);
      }
      default: {
        std::uniform_real_distribution<double> d(-0.5, 0.5);
        const double u = d(rng);
        const double b = kSqrt2 / 2.0;
        return u >= 0.0 ? -b * std::log1p(-2.0 * u) : b * std::log1p(2.0 * u);
      }
    }
  }

 private:
  DensityFamily(Family tag, double nu) : tag_(tag), nu_(nu) {
    if (tag_ == Family::scaled_t)
      t_const_ = std::lgamma(0.5 * (nu_ + 1.0)) - std::lgamma(0.5 * nu_) -
                 0.5 * std::log((nu_ - 2.0) * kPi);
  }

  static constexpr double kPi = 3.14159265358979323846;
  static constexpr double kSqrt2 = 1.41421356237309504880;
  static constexpr double kLogNormConst = -0.91893853320467274178;  // -ln(2*pi)/2
  static constexpr double kLogLaplaceConst = -0.34657359027997265471;  // -ln(2)/2

  Family tag_;
  double nu_;
  double t_const_ = 0.0;
};

inline DensityEval density_eval(const DensityFamily& family, double eps) {
  if (!std::isfinite(eps)) throw std::invalid_argument("density argument must be finite");
  return family.evaluate(eps);
}

}  // namespace psarann
