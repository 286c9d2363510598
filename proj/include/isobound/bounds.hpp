#pragma once

// Closed-form fooling-probability and expected-robustness bounds driven by
// Gaussian isoperimetry, plus the inversions that turn a target probability
// into a percentile radius.  All functions are pure.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isobound/gaussian.hpp"
#include "isobound/modulus.hpp"

namespace isobound {

// A stated hypothesis of the bound being evaluated does not hold for these
// inputs (class count too small, radius too small, modulus not concave, ...).
struct HypothesisViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// One class holds all the mass, so the complement quantile is undefined.
struct DegenerateDistribution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class ClassDistribution {
 public:
  explicit ClassDistribution(std::vector<Probability> probs)
      : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
      throw std::invalid_argument("class distribution needs K >= 2");
    }
    double sum = 0.0;
    for (const Probability& p : probs_) sum += p.value();
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("class probabilities sum to " +
                                  std::to_string(sum) + ", expected 1");
    }
  }

  static ClassDistribution equiprobable(int k) {
    if (k < 2) throw std::invalid_argument("equiprobable needs K >= 2");
    return ClassDistribution(
        std::vector<Probability>(k, Probability(1.0 / k)));
  }

  int num_classes() const { return static_cast<int>(probs_.size()); }
  double prob(int i) const { return probs_[i].value(); }
  const std::vector<Probability>& probs() const { return probs_; }

  bool balanced() const {
    for (const Probability& p : probs_) {
      if (p.value() > 0.5) return false;
    }
    return true;
  }

 private:
  std::vector<Probability> probs_;
};

namespace detail {

inline void check_eta(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw std::domain_error("eta must be nonnegative and finite");
  }
}

inline void check_no_degenerate_class(const ClassDistribution& dist) {
  for (int i = 0; i < dist.num_classes(); ++i) {
    if (dist.prob(i) >= 1.0) {
      throw DegenerateDistribution(
          "class " + std::to_string(i + 1) +
          " has probability 1; the complement quantile is undefined");
    }
  }
}

// Latent radius matching an image distance, with the below-range signal
// collapsing to the eta = 0 case.
inline double latent_radius_or_zero(const Modulus& omega, double eta) {
  try {
    return omega.inverse(eta);
  } catch (const BelowModulusRange&) {
    return 0.0;
  }
}

inline Probability clamp_probability(double value) {
  return Probability(std::clamp(value, 0.0, 1.0));
}

}  // namespace detail

// Fraction of latent mass within distance-r of a differently-classified cell,
// summed over the class partition: sum_i [Phi(a_i + r) - Phi(a_i)] with
// a_i the complement quantile of class i and r the latent radius for eta.
inline Probability fooling_prob_general(const ClassDistribution& dist,
                                        const Modulus& omega, double eta) {
  detail::check_eta(eta);
  detail::check_no_degenerate_class(dist);
  const double r = detail::latent_radius_or_zero(omega, eta);
  double total = 0.0;
  for (int i = 0; i < dist.num_classes(); ++i) {
    const double p = dist.prob(i);
    if (p <= 0.0) continue;  // empty class, empty boundary neighborhood
    const double a = std_normal_cdf_inv(1.0 - p);
    total += std_normal_cdf(a + r).value() - std_normal_cdf(a).value();
  }
  return detail::clamp_probability(total);
}

// Two-sided isoperimetric form valid once no class holds more than half the
// mass: 1 - sqrt(pi/2) * exp(-r^2 / 2).
inline Probability fooling_prob_balanced(const Modulus& omega, double eta) {
  detail::check_eta(eta);
  const double r = detail::latent_radius_or_zero(omega, eta);
  return detail::clamp_probability(
      1.0 - std::sqrt(std::numbers::pi / 2.0) * std::exp(-0.5 * r * r));
}

enum class EquiprobableVariant {
  // The class-count factor decays in the latent radius, matching the tail
  // lemma the bound is derived from.  Default.
  kInverseRadiusBothFactors,
  // The class-count factor decays in the raw image distance instead, as the
  // displayed closed form reads literally.
  kRawEtaInClassFactor,
};

// Explicit class-count form for K equiprobable classes:
// 1 - sqrt(pi/2) * exp(-r^2/2) * exp(-s * c_K) with c_K the shared class
// quantile lower bound and s the variant-dependent decay argument.
inline Probability fooling_prob_equiprobable(
    int k, const Modulus& omega, double eta,
    EquiprobableVariant variant = EquiprobableVariant::kInverseRadiusBothFactors) {
  detail::check_eta(eta);
  if (k < 5) {
    throw HypothesisViolation("equiprobable bound requires K >= 5, got " +
                              std::to_string(k));
  }
  const double r = detail::latent_radius_or_zero(omega, eta);
  if (r < 1.0) {
    throw HypothesisViolation(
        "equiprobable bound requires a latent radius >= 1, got " +
        std::to_string(r));
  }
  const double decay =
      variant == EquiprobableVariant::kInverseRadiusBothFactors ? r : eta;
  return detail::clamp_probability(
      1.0 - std::sqrt(std::numbers::pi / 2.0) * std::exp(-0.5 * r * r) *
                std::exp(-decay * phi_inv_class_lb(k)));
}

// Smallest image distance whose fooling probability reaches the target
// (bisection to 1e-8).  Throws range_error when even the largest distance
// the modulus covers cannot reach the target.
inline double invert_bound_for_radius(const ClassDistribution& dist,
                                      const Modulus& omega,
                                      Probability target) {
  if (!(target.value() > 0.0) || !(target.value() < 1.0)) {
    throw std::invalid_argument("inversion target must lie strictly in (0, 1)");
  }
  const double cap = omega.form() == Modulus::Form::kTabulated
                         ? omega.table_values().back()
                         : std::numeric_limits<double>::infinity();
  const auto reached = [&](double eta) {
    return fooling_prob_general(dist, omega, eta).value() >= target.value();
  };

  double hi = std::min(1.0, cap);
  while (!reached(hi)) {
    if (hi >= cap) {
      throw std::range_error(
          "target fooling probability unreachable within the modulus range");
    }
    hi = std::min(hi * 2.0, cap);
  }
  double lo = 0.0;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    if (reached(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Upper bound on the expected in-distribution robustness: the modulus of the
// expected latent boundary distance, plus a Wasserstein slack for the data
// distribution mismatch.  Requires a concave modulus.
inline double expected_robustness_bound(const ClassDistribution& dist,
                                        const Modulus& omega,
                                        double wasserstein_delta) {
  if (!(wasserstein_delta >= 0.0) || !std::isfinite(wasserstein_delta)) {
    throw std::invalid_argument("wasserstein delta must be nonnegative");
  }
  if (!omega.concave()) {
    throw HypothesisViolation(
        "expected-robustness bound needs a concave modulus");
  }
  detail::check_no_degenerate_class(dist);
  double sum = 0.0;
  for (int i = 0; i < dist.num_classes(); ++i) {
    const double p = dist.prob(i);
    if (p <= 0.0) continue;  // the a -> inf limit of the term is 0
    const double a = std_normal_cdf_inv(1.0 - p);
    sum += -a * std_normal_cdf(-a).value() + std_normal_pdf(a);
  }
  return omega(sum) + wasserstein_delta;
}

// Closed-form relaxation of the expectation bound for K >= 5 equiprobable
// classes: omega(log(4 pi log K) / sqrt(2 log K)) + delta.
inline double expected_robustness_bound_equiprobable(int k,
                                                     const Modulus& omega,
                                                     double wasserstein_delta) {
  if (k < 5) {
    throw HypothesisViolation(
        "equiprobable expectation bound requires K >= 5, got " +
        std::to_string(k));
  }
  if (!(wasserstein_delta >= 0.0) || !std::isfinite(wasserstein_delta)) {
    throw std::invalid_argument("wasserstein delta must be nonnegative");
  }
  const double log_k = std::log(static_cast<double>(k));
  const double inner =
      std::log(4.0 * std::numbers::pi * log_k) / std::sqrt(2.0 * log_k);
  return omega(inner) + wasserstein_delta;
}

// Fooling probability of the checkerboard partition of latent space at
// per-coordinate distance eta: 1 - (1 - eta)^d, valid for eta <= 1/2.
inline Probability checkerboard_bound(int d, double eta) {
  if (d < 1) throw std::invalid_argument("checkerboard needs d >= 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw std::domain_error("eta must be nonnegative and finite");
  }
  if (eta > 0.5) {
    throw HypothesisViolation("checkerboard bound requires eta <= 1/2, got " +
                              std::to_string(eta));
  }
  return Probability(1.0 - std::pow(1.0 - eta, d));
}

// Failure probability of the estimated-modulus robustness certificate at
// latent radius delta: the estimation miss mass kappa plus the complement of
// the latent-space bound.
inline Probability kappa_adjusted_failure_prob(const ClassDistribution& dist,
                                               double modulus_estimate_value,
                                               double delta, Probability kappa) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("delta must be positive and finite");
  }
  if (!(modulus_estimate_value >= 0.0) ||
      !std::isfinite(modulus_estimate_value)) {
    throw std::invalid_argument("modulus estimate value must be nonnegative");
  }
  const double survive =
      1.0 - fooling_prob_general(dist, Modulus::identity(), delta).value();
  return detail::clamp_probability(kappa.value() + survive);
}

// ---------------------------------------------------------------------------
// Reporting.
// ---------------------------------------------------------------------------

enum class BoundKind {
  kGeneral,
  kBalanced,
  kEquiprobable,
  kCheckerboard,
  kExpectation,
  kExpectationEquiprobable,
  kKappaAdjusted,
  kInvertedRadius,
};

inline const char* bound_kind_name(BoundKind kind) {
  switch (kind) {
    case BoundKind::kGeneral:
      return "general";
    case BoundKind::kBalanced:
      return "balanced";
    case BoundKind::kEquiprobable:
      return "equiprobable";
    case BoundKind::kCheckerboard:
      return "checkerboard";
    case BoundKind::kExpectation:
      return "expectation";
    case BoundKind::kExpectationEquiprobable:
      return "expectation_equiprobable";
    case BoundKind::kKappaAdjusted:
      return "kappa_adjusted";
    case BoundKind::kInvertedRadius:
      return "inverted_radius";
  }
  return "unknown";
}

struct Normalization {
  double latent_norm_mean = 1.0;
  double image_norm_mean = 1.0;
};

struct BoundReport {
  BoundKind kind = BoundKind::kGeneral;
  nlohmann::ordered_json inputs;  // structured echo of the arguments
  double value = 0.0;
  std::optional<Normalization> normalization;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["bound_kind"] = bound_kind_name(kind);
    doc["inputs"] = inputs;
    doc["value"] = value;
    if (normalization) {
      doc["normalization"] = {
          {"latent_norm_mean", normalization->latent_norm_mean},
          {"image_norm_mean", normalization->image_norm_mean}};
    } else {
      doc["normalization"] = nullptr;
    }
    return doc;
  }
};

}  // namespace isobound
