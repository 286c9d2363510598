#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "isobound/models.hpp"
#include "isobound/modulus.hpp"
#include "isobound/modulus_estimate.hpp"

namespace {

using isobound::Modulus;
using isobound::ModulusEstimate;
using isobound::Vec;

// --- Independent oracles ----------------------------------------------------

// Top singular value by power iteration on A^T A, touching none of the
// production linear algebra.
double top_singular_value(const std::vector<std::vector<double>>& a,
                          int iters = 2000) {
  const std::size_t cols = a.front().size();
  std::vector<double> v(cols, 0.0);
  v[0] = 1.0;
  double estimate = 0.0;
  for (int it = 0; it < iters; ++it) {
    // w = A^T (A v)
    std::vector<double> av(a.size(), 0.0);
    for (std::size_t r = 0; r < a.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) av[r] += a[r][c] * v[c];
    }
    std::vector<double> w(cols, 0.0);
    for (std::size_t r = 0; r < a.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) w[c] += a[r][c] * av[r];
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    estimate = norm;  // converges to sigma_max^2
    for (auto& x : w) x /= norm;
    v = w;
  }
  return std::sqrt(estimate);
}

// Least-squares nondecreasing fit by the classical max-min characterization:
// fit[i] = max_{j<=i} min_{k>=j} mean(y[j..k]).  Cubic, fine for test sizes.
std::vector<double> isotonic_max_min(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> fit(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j <= i; ++j) {
      double worst = 1e300;
      for (std::size_t k = j; k < n; ++k) {
        double sum = 0.0;
        for (std::size_t t = j; t <= k; ++t) sum += y[t];
        worst = std::min(worst, sum / static_cast<double>(k - j + 1));
      }
      best = std::max(best, worst);
    }
    fit[i] = best;
  }
  return fit;
}

// Largest image displacement of the unit-circle map at latent radius r is the
// chord length 2*sin(pi*r) for r in [0, 1/2], reached at the sphere endpoints.
constexpr double kChordAtTenth = 0.6180339887498949;    // 2 sin(0.1 pi)
constexpr double kChordAtQuarter = 1.4142135623730951;  // 2 sin(0.25 pi)
constexpr double kChordAtHalf = 2.0;                    // 2 sin(0.5 pi)

struct OpaqueScaleGenerator final : isobound::Generator {
  int dim;
  double factor;
  OpaqueScaleGenerator(int d, double f) : dim(d), factor(f) {}
  int latent_dim() const override { return dim; }
  int image_dim() const override { return dim; }
  std::string kind() const override { return "opaque-scale"; }
  Vec forward(const Vec& z) const override {
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = factor * z[i];
    return out;
  }
  nlohmann::ordered_json to_json() const override {
    return {{"kind", "opaque-scale"}};
  }
};

}  // namespace

TEST_CASE("modulus evaluation matches the three closed forms") {
  const Modulus id = Modulus::identity();
  CHECK(id(0.7) == 0.7);
  CHECK(id(0.0) == 0.0);

  const Modulus affine = Modulus::linear(2.0, 0.0);
  CHECK(affine(4.0) == 8.0);
  const Modulus shifted = Modulus::linear(3.0, 0.5);
  CHECK(shifted(1.0) == 3.5);
  CHECK(shifted.value_at_zero() == 0.5);

  const Modulus table = Modulus::tabulated({0.0, 1.0}, {0.0, 3.0});
  CHECK(table(0.5) == Catch::Approx(1.5).margin(1e-12));
  CHECK(table(0.0) == 0.0);
  CHECK(table(1.0) == 3.0);
}

TEST_CASE("tabulated modulus never extrapolates") {
  const Modulus table = Modulus::tabulated({0.5, 1.0}, {1.0, 2.0});
  CHECK_THROWS_AS(table(0.2), std::range_error);
  CHECK_THROWS_AS(table(1.2), std::range_error);
  CHECK_THROWS_AS(table.inverse(2.5), std::range_error);
  // Below the covered values with a nonzero first knot the gap is uncovered
  // rather than unreachable, so this is a range error, not a below-range
  // signal.
  CHECK_THROWS_AS(table.inverse(0.5), std::range_error);
  CHECK(table.max_delta() == 1.0);

  CHECK_THROWS_AS(table(-0.1), std::domain_error);
  CHECK_THROWS_AS(table(std::nan("")), std::domain_error);
}

TEST_CASE("modulus inverse returns the smallest latent radius") {
  const Modulus table = Modulus::tabulated({0.0, 1.0, 2.0}, {0.0, 3.0, 4.0});
  CHECK(table.inverse(3.5) == Catch::Approx(1.5).margin(1e-9));
  CHECK(table.inverse(0.0) == Catch::Approx(0.0).margin(1e-9));

  const Modulus affine = Modulus::linear(2.0, 1.0);
  CHECK(affine.inverse(5.0) == 2.0);
  CHECK_THROWS_AS(affine.inverse(0.5), isobound::BelowModulusRange);

  const Modulus bumped = Modulus::tabulated({0.0, 1.0}, {0.5, 2.0});
  CHECK_THROWS_AS(bumped.inverse(0.2), isobound::BelowModulusRange);

  CHECK(Modulus::identity().inverse(0.7) == 0.7);
}

TEST_CASE("inverse after evaluation is the identity on covered radii") {
  const Modulus table =
      Modulus::tabulated({0.0, 0.5, 1.3, 2.0}, {0.0, 1.0, 1.8, 2.5});
  for (double delta : {0.1, 0.25, 0.5, 0.77, 1.0, 1.3, 1.9, 2.0}) {
    const double eta = table(delta);
    CHECK(table.inverse(eta) == Catch::Approx(delta).epsilon(1e-9));
  }
  const Modulus affine = Modulus::linear(0.4, 0.2);
  for (double delta : {0.0, 0.3, 2.5}) {
    CHECK(affine.inverse(affine(delta)) == Catch::Approx(delta).margin(1e-12));
  }
}

TEST_CASE("concavity check accepts flattening tables and rejects steepening") {
  CHECK(Modulus::identity().concave());
  CHECK(Modulus::linear(5.0, 0.1).concave());
  CHECK(Modulus::tabulated({0.0, 1.0, 2.0}, {0.0, 2.0, 3.0}).concave());
  CHECK_FALSE(Modulus::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 3.0}).concave());
}

TEST_CASE("tabulated construction rejects non-monotone or bad input") {
  CHECK_THROWS_AS(Modulus::tabulated({0.0}, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(Modulus::tabulated({0.0, 1.0}, {1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Modulus::tabulated({1.0, 0.5}, {1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Modulus::tabulated({0.0, 1.0}, {-0.5, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Modulus::linear(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Modulus::linear(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("isotonic pooling matches the max-min characterization") {
  const std::vector<double> simple = {3.0, 1.0, 2.0};
  CHECK(isobound::detail::isotonic_nondecreasing(simple) ==
        std::vector<double>{2.0, 2.0, 2.0});

  std::mt19937_64 rng(20240818);
  std::uniform_real_distribution<double> value(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y(1 + rng() % 10);
    for (auto& v : y) v = value(rng);
    const auto fast = isobound::detail::isotonic_nondecreasing(y);
    const auto slow = isotonic_max_min(y);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(fast[i] == Catch::Approx(slow[i]).margin(1e-9));
      if (i > 0) CHECK(fast[i] >= fast[i - 1]);
    }
  }
}

TEST_CASE("upper quantile uses the smallest covering order statistic") {
  const std::vector<double> values = {40.0, 10.0, 30.0, 20.0};
  CHECK(isobound::detail::upper_quantile(values, 0.0) == 40.0);
  CHECK(isobound::detail::upper_quantile(values, 0.2) == 40.0);
  CHECK(isobound::detail::upper_quantile(values, 0.25) == 30.0);
  CHECK(isobound::detail::upper_quantile(values, 0.5) == 20.0);
  CHECK(isobound::detail::upper_quantile(values, 0.75) == 10.0);
  CHECK(isobound::detail::upper_quantile(values, 0.9) == 10.0);
}

TEST_CASE("modulus estimate document round-trips with a fixed key set") {
  ModulusEstimate estimate;
  estimate.delta_grid = {0.1, 0.25, 0.5};
  estimate.kappa = 0.05;
  estimate.values = {0.2, 0.45, 0.8};
  estimate.samples_per_point = 50;
  estimate.inner_opt_steps = 200;

  const auto doc = estimate.to_json();
  REQUIRE(doc.size() == 4);
  CHECK(doc.contains("delta_grid"));
  CHECK(doc.contains("kappa"));
  CHECK(doc.contains("values"));
  CHECK(doc.contains("samples_per_point"));

  const auto back = ModulusEstimate::from_json(doc);
  CHECK(back.delta_grid == estimate.delta_grid);
  CHECK(back.kappa == estimate.kappa);
  CHECK(back.values == estimate.values);
  CHECK(back.samples_per_point == estimate.samples_per_point);

  ModulusEstimate bad = estimate;
  bad.values = {0.2, 0.1, 0.8};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("estimate with tied quantiles still yields an invertible table") {
  ModulusEstimate estimate;
  estimate.delta_grid = {0.5, 1.0, 2.0};
  estimate.kappa = 0.0;
  estimate.values = {1.0, 1.0, 2.0};
  estimate.samples_per_point = 10;

  const Modulus table = estimate.to_modulus();
  CHECK(table(0.5) == 1.0);
  CHECK(table(2.0) == 2.0);
  CHECK(table.inverse(1.5) > 1.0);
  CHECK(table.inverse(1.5) < 2.0);
}

TEST_CASE("estimated modulus of the scaled identity is exact") {
  const isobound::IdentityGenerator gen(5, 1.0);
  isobound::InnerOptConfig opt;
  opt.steps = 50;
  const double estimate =
      isobound::estimate_modulus(gen, 0.7, 0.0, 12, opt, 11);
  CHECK(estimate == Catch::Approx(0.7).margin(1e-6));
}

TEST_CASE("estimated modulus of a linear map finds the top singular value") {
  const std::vector<std::vector<double>> rows = {
      {0.9, -0.3, 0.2}, {0.1, 1.4, -0.5}, {-0.7, 0.2, 0.8}, {0.3, 0.6, 1.1}};
  const double sigma = top_singular_value(rows);

  Vec flat;
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  const isobound::LinearGenerator gen(isobound::Matrix(4, 3, flat),
                                      Vec(4, 0.0));

  const double delta = 0.8;
  isobound::InnerOptConfig opt;
  const double estimate =
      isobound::estimate_modulus(gen, delta, 0.0, 12, opt, 3);
  CHECK(estimate >= 0.99 * sigma * delta);
  CHECK(estimate <= sigma * delta * (1.0 + 1e-9));

  // Every per-sample supremum is an achieved displacement, so none can pass
  // the true Lipschitz value.
  for (double s : isobound::displacement_suprema(gen, delta, 12, opt, 3)) {
    CHECK(s <= sigma * delta * (1.0 + 1e-9));
  }
}

TEST_CASE("estimated modulus of the circle map matches the chord length") {
  const isobound::CircleGenerator gen;
  isobound::InnerOptConfig opt;
  const double estimate =
      isobound::estimate_modulus(gen, 0.25, 0.0, 10, opt, 5);
  CHECK(estimate == Catch::Approx(kChordAtQuarter).margin(1e-3));
}

TEST_CASE("gradient-free generators fall back to finite differences") {
  const OpaqueScaleGenerator gen(3, 1.7);
  isobound::InnerOptConfig opt;
  opt.steps = 50;
  const double estimate =
      isobound::estimate_modulus(gen, 0.4, 0.0, 10, opt, 9);
  CHECK(estimate == Catch::Approx(1.7 * 0.4).margin(1e-3));

  opt.allow_finite_difference = false;
  CHECK_THROWS_AS(isobound::estimate_modulus(gen, 0.4, 0.0, 10, opt, 9),
                  isobound::CapabilityError);
}

TEST_CASE("estimation is bit-identical under different thread counts") {
  const isobound::CircleGenerator gen;
  isobound::InnerOptConfig serial;
  serial.threads = 1;
  isobound::InnerOptConfig wide;
  wide.threads = 4;
  const auto a = isobound::displacement_suprema(gen, 0.3, 16, serial, 77);
  const auto b = isobound::displacement_suprema(gen, 0.3, 16, wide, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("fitted modulus table tracks the circle chord profile") {
  const isobound::CircleGenerator gen;
  isobound::InnerOptConfig opt;
  const ModulusEstimate estimate = isobound::fit_modulus_table(
      gen, {0.1, 0.25, 0.5}, 0.0, 10, opt, 21);

  REQUIRE(estimate.values.size() == 3);
  CHECK(estimate.values[0] == Catch::Approx(kChordAtTenth).margin(1e-3));
  CHECK(estimate.values[1] == Catch::Approx(kChordAtQuarter).margin(1e-3));
  CHECK(estimate.values[2] == Catch::Approx(kChordAtHalf).margin(1e-3));

  const Modulus table = estimate.to_modulus();
  const double eta = table(0.25);
  CHECK(table.inverse(eta) == Catch::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("estimation rejects unusable parameters") {
  const isobound::IdentityGenerator gen(2);
  isobound::InnerOptConfig opt;
  CHECK_THROWS_AS(isobound::estimate_modulus(gen, 0.5, 0.0, 5, opt, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(isobound::estimate_modulus(gen, 0.5, 1.0, 10, opt, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(isobound::estimate_modulus(gen, 0.0, 0.0, 10, opt, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      isobound::fit_modulus_table(gen, {0.5, 0.25}, 0.0, 10, opt, 1),
      std::invalid_argument);
}
