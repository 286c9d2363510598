#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "isobound/bounds.hpp"

namespace {

using isobound::ClassDistribution;
using isobound::Modulus;
using isobound::Probability;

// --- Independent oracles ----------------------------------------------------

double oracle_density(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double oracle_simpson(double lo, double hi, double tol, double whole,
                      double flo, double fmid, double fhi, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lmid = 0.5 * (lo + mid);
  const double rmid = 0.5 * (mid + hi);
  const double fl = oracle_density(lmid);
  const double fr = oracle_density(rmid);
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return oracle_simpson(lo, mid, tol / 2.0, left, flo, fl, fmid, depth - 1) +
         oracle_simpson(mid, hi, tol / 2.0, right, fmid, fr, fhi, depth - 1);
}

// Quadrature normal CDF, sharing nothing with the library implementation.
double oracle_phi(double x) {
  const double flo = oracle_density(0.0);
  const double fhi = oracle_density(x);
  const double fmid = oracle_density(0.5 * x);
  const double whole = x / 6.0 * (flo + 4.0 * fmid + fhi);
  return 0.5 + oracle_simpson(0.0, x, 1e-14, whole, flo, fmid, fhi, 40);
}

double oracle_quantile(double p) {
  double lo = -12.0, hi = 12.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle_phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double oracle_general(const std::vector<double>& probs, double r) {
  double total = 0.0;
  for (double p : probs) {
    if (p <= 0.0) continue;
    const double a = oracle_quantile(1.0 - p);
    total += oracle_phi(a + r) - oracle_phi(a);
  }
  return std::min(1.0, std::max(0.0, total));
}

// Frozen high-precision references.
constexpr double kTwoSided1 = 0.6826894921370859;      // 2 Phi(1) - 1
constexpr double kGeneral10AtQuarterRadius = 0.2500284446;  // K=10, eta=0.158
constexpr double kGeneral10AtOne = 0.8874208549;       // K=10, eta=1
constexpr double kBalancedAtTwo = 0.8303823762;        // 1 - sqrt(pi/2) e^-2
constexpr double kEquiprobable10AtOne = 0.7503792415;
constexpr double kClassLb10 = 1.1136038316;            // shared class quantile lb
constexpr double kInvert10At25 = 0.1579799054;
constexpr double kInvert2At25 = 0.3186393640;
constexpr double kNormMean100 = 9.9750316396;
constexpr double kExpect2 = 0.7978845608;              // sqrt(2/pi)
constexpr double kExpect10 = 0.4734317538;
constexpr double kExpectEqui10 = 1.5680847930;
constexpr double kChecker10AtTenth = 0.6513215599;     // 1 - 0.9^10

}  // namespace

TEST_CASE("class distributions validate their mass") {
  CHECK_THROWS_AS(ClassDistribution({Probability(1.0)}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution({Probability(0.5), Probability(0.4)}),
                  std::invalid_argument);
  const auto equi = ClassDistribution::equiprobable(10);
  CHECK(equi.num_classes() == 10);
  CHECK(equi.prob(3) == Catch::Approx(0.1));
  CHECK(equi.balanced());
  CHECK_FALSE(
      ClassDistribution({Probability(0.6), Probability(0.4)}).balanced());
}

TEST_CASE("general fooling bound matches the quadrature oracle") {
  const std::vector<std::vector<double>> dists = {
      {0.5, 0.5}, {0.7, 0.2, 0.1}, {1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7,
                                    1.0 / 7, 1.0 / 7, 1.0 / 7}};
  const Modulus shifted = Modulus::linear(0.5, 0.25);
  for (const auto& probs : dists) {
    ClassDistribution dist(
        std::vector<Probability>(probs.begin(), probs.end()));
    for (double eta : {0.0, 0.1, 0.3, 1.0, 1.7, 5.0}) {
      const double direct =
          isobound::fooling_prob_general(dist, Modulus::identity(), eta);
      CHECK(direct == Catch::Approx(oracle_general(probs, eta)).margin(1e-9));

      const double r = eta < 0.25 ? 0.0 : (eta - 0.25) / 0.5;
      const double via_modulus =
          isobound::fooling_prob_general(dist, shifted, eta);
      CHECK(via_modulus == Catch::Approx(oracle_general(probs, r)).margin(1e-9));
    }
  }
}

TEST_CASE("general fooling bound hits its frozen reference points") {
  const auto id = Modulus::identity();
  CHECK(isobound::fooling_prob_general(ClassDistribution::equiprobable(4), id,
                                       0.0) == 0.0);
  CHECK(isobound::fooling_prob_general(ClassDistribution::equiprobable(2), id,
                                       1.0) ==
        Catch::Approx(kTwoSided1).margin(1e-9));
  CHECK(isobound::fooling_prob_general(ClassDistribution::equiprobable(10), id,
                                       0.158) ==
        Catch::Approx(kGeneral10AtQuarterRadius).margin(1e-6));
  CHECK(isobound::fooling_prob_general(ClassDistribution::equiprobable(10), id,
                                       0.158) ==
        Catch::Approx(0.250).margin(0.002));
  CHECK(isobound::fooling_prob_general(ClassDistribution::equiprobable(10), id,
                                       1.0) ==
        Catch::Approx(kGeneral10AtOne).margin(1e-6));
}

TEST_CASE("general bound tolerates empty classes but not captive ones") {
  const auto id = Modulus::identity();
  const ClassDistribution with_empty(
      {Probability(0.5), Probability(0.5), Probability(0.0)});
  CHECK(isobound::fooling_prob_general(with_empty, id, 1.0) ==
        Catch::Approx(kTwoSided1).margin(1e-9));

  const ClassDistribution degenerate({Probability(1.0), Probability(0.0)});
  CHECK_THROWS_AS(isobound::fooling_prob_general(degenerate, id, 1.0),
                  isobound::DegenerateDistribution);
  CHECK_THROWS_AS(isobound::fooling_prob_general(with_empty, id, -0.5),
                  std::domain_error);
}

TEST_CASE("balanced fooling bound evaluates its closed form") {
  const auto id = Modulus::identity();
  CHECK(isobound::fooling_prob_balanced(id, 2.0) ==
        Catch::Approx(kBalancedAtTwo).margin(1e-6));
  CHECK(isobound::fooling_prob_balanced(id, 2.0) ==
        Catch::Approx(0.830381).margin(1e-5));
  CHECK(isobound::fooling_prob_balanced(id, 0.0) == 0.0);

  const Modulus doubler = Modulus::linear(2.0, 0.0);
  CHECK(isobound::fooling_prob_balanced(doubler, 4.0) ==
        isobound::fooling_prob_balanced(id, 2.0));

  // Below the modulus floor the bound collapses to its eta = 0 value.
  const Modulus lifted = Modulus::linear(1.0, 0.5);
  CHECK(isobound::fooling_prob_balanced(lifted, 0.2) == 0.0);
}

TEST_CASE("equiprobable bound evaluates and enforces its hypotheses") {
  const auto id = Modulus::identity();
  CHECK(isobound::fooling_prob_equiprobable(10, id, 1.0) ==
        Catch::Approx(kEquiprobable10AtOne).margin(1e-6));
  CHECK(isobound::fooling_prob_equiprobable(10, id, 1.0) ==
        Catch::Approx(0.750384).margin(1e-5));
  CHECK(isobound::fooling_prob_equiprobable(100, id, 1.0).value() >
        isobound::fooling_prob_equiprobable(10, id, 1.0).value());

  CHECK_THROWS_AS(isobound::fooling_prob_equiprobable(4, id, 1.0),
                  isobound::HypothesisViolation);
  CHECK_THROWS_AS(isobound::fooling_prob_equiprobable(10, id, 0.9),
                  isobound::HypothesisViolation);
  const Modulus doubler = Modulus::linear(2.0, 0.0);
  CHECK_THROWS_AS(isobound::fooling_prob_equiprobable(10, doubler, 1.9),
                  isobound::HypothesisViolation);
  CHECK_NOTHROW(isobound::fooling_prob_equiprobable(10, doubler, 2.0));
}

TEST_CASE("equiprobable variants differ exactly in the class decay factor") {
  const Modulus doubler = Modulus::linear(2.0, 0.0);
  const double eta = 2.0;  // latent radius 1
  const double both = isobound::fooling_prob_equiprobable(
      10, doubler, eta, isobound::EquiprobableVariant::kInverseRadiusBothFactors);
  const double raw = isobound::fooling_prob_equiprobable(
      10, doubler, eta, isobound::EquiprobableVariant::kRawEtaInClassFactor);

  const double base = std::sqrt(std::numbers::pi / 2.0) * std::exp(-0.5);
  CHECK(both == Catch::Approx(1.0 - base * std::exp(-kClassLb10)).margin(1e-9));
  CHECK(raw ==
        Catch::Approx(1.0 - base * std::exp(-2.0 * kClassLb10)).margin(1e-9));
  CHECK(raw > both);

  // With the identity modulus the decay arguments coincide.
  const auto id = Modulus::identity();
  CHECK(isobound::fooling_prob_equiprobable(
            10, id, 1.3,
            isobound::EquiprobableVariant::kInverseRadiusBothFactors) ==
        isobound::fooling_prob_equiprobable(
            10, id, 1.3, isobound::EquiprobableVariant::kRawEtaInClassFactor));
}

TEST_CASE("equiprobable form relaxes the general bound") {
  const auto id = Modulus::identity();
  for (int k : {5, 10, 50}) {
    const auto dist = ClassDistribution::equiprobable(k);
    for (double eta : {1.0, 1.5, 2.0, 3.0, 4.0}) {
      CHECK(isobound::fooling_prob_equiprobable(k, id, eta).value() <=
            isobound::fooling_prob_general(dist, id, eta).value() + 1e-12);
    }
  }
  // The balanced form relaxes the general one as well.
  for (double eta : {0.5, 1.0, 2.0, 3.0}) {
    CHECK(isobound::fooling_prob_balanced(id, eta).value() <=
          isobound::fooling_prob_general(ClassDistribution::equiprobable(6), id,
                                         eta)
                  .value() +
              1e-12);
  }
}

TEST_CASE("equiprobable classes share one complement quantile") {
  const auto id = Modulus::identity();
  for (int k : {2, 5, 10}) {
    const double whole =
        isobound::fooling_prob_general(ClassDistribution::equiprobable(k), id,
                                       0.8);
    const double a = isobound::std_normal_cdf_inv(1.0 - 1.0 / k);
    const double one_term = isobound::std_normal_cdf(a + 0.8).value() -
                            isobound::std_normal_cdf(a).value();
    CHECK(whole == Catch::Approx(k * one_term).margin(1e-12));
  }
}

TEST_CASE("probability bounds are nondecreasing in eta") {
  const auto id = Modulus::identity();
  const ClassDistribution skewed(
      {Probability(0.6), Probability(0.3), Probability(0.1)});
  double prev_general = -1.0, prev_balanced = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double eta = 6.0 * i / 1000.0;
    const double g = isobound::fooling_prob_general(skewed, id, eta);
    const double b = isobound::fooling_prob_balanced(id, eta);
    CHECK(g >= prev_general - 1e-12);
    CHECK(b >= prev_balanced - 1e-12);
    prev_general = g;
    prev_balanced = b;
  }
  double prev_equi = -1.0, prev_checker = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double e = isobound::fooling_prob_equiprobable(10, id,
                                                         1.0 + 3.0 * i / 1000.0);
    const double c = isobound::checkerboard_bound(5, 0.5 * i / 1000.0);
    CHECK(e >= prev_equi - 1e-12);
    CHECK(c >= prev_checker - 1e-12);
    prev_equi = e;
    prev_checker = c;
  }
}

TEST_CASE("radius inversion reaches the target and round-trips") {
  const auto id = Modulus::identity();
  const auto ten = ClassDistribution::equiprobable(10);
  const double eta = isobound::invert_bound_for_radius(ten, id, 0.25);
  CHECK(eta == Catch::Approx(kInvert10At25).margin(1e-4));
  CHECK(isobound::fooling_prob_general(ten, id, eta) ==
        Catch::Approx(0.25).margin(1e-6));

  CHECK(eta / isobound::gaussian_norm_mean(100) ==
        Catch::Approx(kInvert10At25 / kNormMean100).margin(1e-6));
  CHECK(eta / isobound::gaussian_norm_mean(100) ==
        Catch::Approx(0.016).margin(5e-4));

  CHECK(isobound::invert_bound_for_radius(ClassDistribution::equiprobable(2),
                                          id, 0.25) ==
        Catch::Approx(kInvert2At25).margin(1e-4));

  const Modulus doubler = Modulus::linear(2.0, 0.0);
  CHECK(isobound::invert_bound_for_radius(ten, doubler, 0.25) ==
        Catch::Approx(2.0 * kInvert10At25).margin(2e-4));

  CHECK_THROWS_AS(isobound::invert_bound_for_radius(ten, id, Probability(0.0)),
                  std::invalid_argument);
}

TEST_CASE("radius inversion reports unreachable targets") {
  // This table tops out at image distance 0.5, i.e. latent radius 1, where
  // the two-class bound is only ~0.68.
  const Modulus table = Modulus::tabulated({0.0, 1.0}, {0.0, 0.5});
  const auto two = ClassDistribution::equiprobable(2);
  CHECK_THROWS_AS(isobound::invert_bound_for_radius(two, table, 0.9),
                  std::range_error);
  CHECK(isobound::invert_bound_for_radius(two, table, 0.5) > 0.0);
}

TEST_CASE("expected robustness bound evaluates and respects concavity") {
  const auto id = Modulus::identity();
  const auto two = ClassDistribution::equiprobable(2);
  CHECK(isobound::expected_robustness_bound(two, id, 0.0) ==
        Catch::Approx(kExpect2).margin(1e-6));
  CHECK(isobound::expected_robustness_bound(two, id, 0.1) ==
        Catch::Approx(isobound::expected_robustness_bound(two, id, 0.0) + 0.1)
            .margin(1e-12));
  CHECK(isobound::expected_robustness_bound(ClassDistribution::equiprobable(10),
                                            id, 0.0) ==
        Catch::Approx(kExpect10).margin(1e-6));

  const Modulus concave_table =
      Modulus::tabulated({0.0, 1.0, 3.0}, {0.0, 2.0, 3.0});
  CHECK(isobound::expected_robustness_bound(two, concave_table, 0.0) ==
        Catch::Approx(2.0 * kExpect2).margin(1e-6));

  const Modulus convex_table =
      Modulus::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 3.0});
  CHECK_THROWS_AS(isobound::expected_robustness_bound(two, convex_table, 0.0),
                  isobound::HypothesisViolation);
  CHECK_THROWS_AS(isobound::expected_robustness_bound(two, id, -0.1),
                  std::invalid_argument);
}

TEST_CASE("equiprobable expectation form dominates the general one") {
  const auto id = Modulus::identity();
  CHECK(isobound::expected_robustness_bound_equiprobable(10, id, 0.0) ==
        Catch::Approx(kExpectEqui10).margin(1e-6));
  CHECK(isobound::expected_robustness_bound_equiprobable(10, id, 0.0) ==
        Catch::Approx(1.56811).margin(1e-4));

  for (int k : {5, 10, 100, 1000}) {
    CHECK(isobound::expected_robustness_bound(ClassDistribution::equiprobable(k),
                                              id, 0.0) <=
          isobound::expected_robustness_bound_equiprobable(k, id, 0.0) + 1e-12);
  }
  CHECK(isobound::expected_robustness_bound_equiprobable(1000000, id, 0.0) <
        isobound::expected_robustness_bound_equiprobable(10, id, 0.0));
  CHECK_THROWS_AS(isobound::expected_robustness_bound_equiprobable(4, id, 0.0),
                  isobound::HypothesisViolation);
}

TEST_CASE("checkerboard bound follows the per-coordinate survival form") {
  CHECK(isobound::checkerboard_bound(1, 0.25) == Catch::Approx(0.25));
  CHECK(isobound::checkerboard_bound(10, 0.1) ==
        Catch::Approx(kChecker10AtTenth).margin(1e-6));
  CHECK(isobound::checkerboard_bound(7, 0.0) == 0.0);
  CHECK(isobound::checkerboard_bound(3, 0.5) ==
        Catch::Approx(1.0 - 0.125).margin(1e-12));
  CHECK_THROWS_AS(isobound::checkerboard_bound(3, 0.6),
                  isobound::HypothesisViolation);
  CHECK_THROWS_AS(isobound::checkerboard_bound(0, 0.1), std::invalid_argument);
}

TEST_CASE("kappa-adjusted failure probability adds the miss mass") {
  const auto ten = ClassDistribution::equiprobable(10);
  for (double delta : {0.1, 0.5, 1.0}) {
    const double plain = isobound::kappa_adjusted_failure_prob(
        ten, 1.0, delta, Probability(0.0));
    const double survive =
        1.0 -
        isobound::fooling_prob_general(ten, Modulus::identity(), delta).value();
    CHECK(plain == Catch::Approx(survive).margin(1e-12));
  }
  CHECK(isobound::kappa_adjusted_failure_prob(ten, 0.3, 0.158,
                                              Probability(0.05)) ==
        Catch::Approx(0.7999715554).margin(1e-6));
  CHECK(isobound::kappa_adjusted_failure_prob(ten, 0.3, 0.158,
                                              Probability(1.0)) == 1.0);
  CHECK_THROWS_AS(
      isobound::kappa_adjusted_failure_prob(ten, 0.3, 0.0, Probability(0.1)),
      std::invalid_argument);
}

TEST_CASE("bound reports serialize with a fixed shape") {
  isobound::BoundReport report;
  report.kind = isobound::BoundKind::kInvertedRadius;
  report.inputs = {{"classes", 10}, {"target", 0.25}};
  report.value = kInvert10At25;
  report.normalization =
      isobound::Normalization{kNormMean100, kNormMean100};

  const auto doc = report.to_json();
  REQUIRE(doc.size() == 4);
  CHECK(doc.at("bound_kind") == "inverted_radius");
  CHECK(doc.at("inputs").at("classes") == 10);
  CHECK(doc.at("value").get<double>() == Catch::Approx(kInvert10At25));
  CHECK(doc.at("normalization").at("latent_norm_mean").get<double>() ==
        Catch::Approx(kNormMean100));

  isobound::BoundReport bare;
  bare.kind = isobound::BoundKind::kBalanced;
  bare.value = kBalancedAtTwo;
  CHECK(bare.to_json().at("normalization").is_null());
  CHECK(std::string(isobound::bound_kind_name(
            isobound::BoundKind::kExpectationEquiprobable)) ==
        "expectation_equiprobable");
}
