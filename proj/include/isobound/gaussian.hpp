#pragma once

// Standard-normal CDF machinery plus the closed-form tail bounds that the
// fooling-probability evaluations are built on.  Everything here is a pure
// function of its arguments and safe to call concurrently.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace isobound {

// A checked probability value.  Converts implicitly from/to double so bound
// formulas stay readable; construction rejects anything outside [0, 1].
class Probability {
 public:
  Probability(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw std::domain_error("probability outside [0, 1]: " +
                              std::to_string(value));
    }
  }
  operator double() const { return value_; }
  double value() const { return value_; }

 private:
  double value_;
};

// Two-sided envelope around the normal CDF at a nonnegative abscissa.
struct CdfSandwich {
  double lower = 0.0;
  double upper = 0.0;
};

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Phi(x) through the complementary error function; erfc keeps full relative
// accuracy in the lower tail, which matters because several bounds subtract
// nearly-equal CDF values at large arguments.
inline Probability std_normal_cdf(double x) {
  if (!std::isfinite(x)) {
    throw std::domain_error("std_normal_cdf: non-finite input");
  }
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

namespace detail {

// Rational initial guess for the normal quantile (Acklam's coefficients),
// accurate to ~1.2e-9 relative before refinement.
inline double normal_quantile_guess(double p) {
  static constexpr double kA[6] = {
      -3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
      1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double kB[5] = {
      -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double kC[6] = {
      -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double kD[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
  static constexpr double kPLow = 0.02425;

  if (p < kPLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
            kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  if (p > 1.0 - kPLow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
             kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r +
          kA[5]) *
         q /
         (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r +
          1.0);
}

}  // namespace detail

// Inverse normal CDF: rational guess plus two Newton corrections against the
// erfc-based CDF.  The exact endpoints report the unbounded quantile as the
// signed infinity instead of failing.
inline double std_normal_cdf_inv(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("std_normal_cdf_inv: probability outside [0, 1]");
  }
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();

  // Solve on the lower half and mirror; keeps the Newton residual Phi(x) - p
  // free of cancellation when p is close to 1.
  const bool mirrored = p > 0.5;
  const double target = mirrored ? 1.0 - p : p;
  double x = detail::normal_quantile_guess(target);
  for (int step = 0; step < 2; ++step) {
    const double density = std_normal_pdf(x);
    if (density <= 0.0) break;
    x -= (static_cast<double>(std_normal_cdf(x)) - target) / density;
  }
  return mirrored ? -x : x;
}

// Lower/upper envelope of Phi(x) for x >= 0; the lower side is exact at 0.
inline CdfSandwich cdf_sandwich(double x) {
  if (!std::isfinite(x) || x < 0.0) {
    throw std::domain_error("cdf_sandwich: requires finite x >= 0");
  }
  const double mass = std::exp(-0.5 * x * x) *
                      std::sqrt(2.0 / std::numbers::pi);
  CdfSandwich out;
  out.lower = 1.0 - mass / (x + std::sqrt(x * x + 8.0 / std::numbers::pi));
  out.upper = 1.0 - mass / (x + std::sqrt(x * x + 4.0));
  return out;
}

// Lower bound on Phi(Phi^-1(p) + eta) that avoids evaluating the quantile's
// neighborhood directly; clamped at zero so the result stays a probability.
inline Probability tail_shift_lower_bound(Probability p, double eta) {
  if (p < 0.5) {
    throw std::domain_error("tail_shift_lower_bound: requires p >= 1/2");
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw std::domain_error("tail_shift_lower_bound: requires finite eta > 0");
  }
  if (p == 1.0) return 1.0;
  const double quantile = std_normal_cdf_inv(p);
  const double raw = 1.0 - (1.0 - p) * std::sqrt(std::numbers::pi / 2.0) *
                               std::exp(-0.5 * eta * eta) *
                               std::exp(-eta * quantile);
  return std::max(0.0, raw);
}

// Closed-form lower bound on the normal quantile at 1 - 1/K; only valid once
// K is at least 5.
inline double phi_inv_class_lb(int num_classes) {
  if (num_classes < 5) {
    throw std::domain_error("phi_inv_class_lb: requires at least 5 classes");
  }
  const double k = static_cast<double>(num_classes);
  return std::sqrt(
      std::log(k * k / (4.0 * std::numbers::pi * std::log(k))));
}

// E||z||_2 for z ~ N(0, I_d), computed through log-gamma so large dimensions
// neither overflow nor lose precision.
inline double gaussian_norm_mean(int dim) {
  if (dim < 1) {
    throw std::domain_error("gaussian_norm_mean: requires dim >= 1");
  }
  const double d = static_cast<double>(dim);
  return std::exp(0.5 * std::numbers::ln2 + std::lgamma(0.5 * (d + 1.0)) -
                  std::lgamma(0.5 * d));
}

}  // namespace isobound
