#pragma once

// Independent ground truth for small instances: exhaustive grid scans in one
// or two latent dimensions, the exact half-space fooling CDF, and Monte Carlo
// fooling fractions driven by per-sample distance oracles.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "isobound/gaussian.hpp"
#include "isobound/models.hpp"
#include "isobound/rng.hpp"

namespace isobound {

struct GridSpec {
  double extent = 2.0;    // scan window [-extent, extent] per dimension
  int resolution = 256;   // points per dimension

  void validate(int dim) const {
    if (resolution < 16) {
      throw std::invalid_argument("grid resolution must be >= 16");
    }
    if (!(extent > 0.0)) {
      throw std::invalid_argument("grid extent must be positive");
    }
    double points = 1.0;
    for (int i = 0; i < dim; ++i) points *= resolution;
    if (points > 1e7) {
      throw std::invalid_argument("grid would exceed 1e7 points");
    }
  }

  double spacing() const { return 2.0 * extent / (resolution - 1); }
};

struct GridOracleResult {
  double radius = std::numeric_limits<double>::infinity();
  double grid_error = 0.0;  // cell diagonal; true minimum lies within it
};

// Exhaustive minimum of ||r|| over grid offsets with f(g(z+r)) != f(g(z)).
// Infinity means no flip inside the window.
inline GridOracleResult brute_force_latent_robustness(const Classifier& f,
                                                      const Generator& g,
                                                      const Vec& z,
                                                      const GridSpec& grid) {
  const int dim = g.latent_dim();
  if (dim > 2) {
    throw CapabilityError("grid oracle supports latent dimension <= 2");
  }
  grid.validate(dim);
  const int original = f.classify(g.forward(z));
  const double h = grid.spacing();

  GridOracleResult result;
  result.grid_error = h * std::sqrt(static_cast<double>(dim));
  double best_sq = std::numeric_limits<double>::infinity();

  Vec probe = z;
  if (dim == 1) {
    for (int i = 0; i < grid.resolution; ++i) {
      const double r = -grid.extent + i * h;
      if (r * r >= best_sq) continue;
      probe[0] = z[0] + r;
      if (f.classify(g.forward(probe)) != original) best_sq = r * r;
    }
  } else {
    for (int i = 0; i < grid.resolution; ++i) {
      const double r0 = -grid.extent + i * h;
      if (r0 * r0 >= best_sq) continue;
      for (int j = 0; j < grid.resolution; ++j) {
        const double r1 = -grid.extent + j * h;
        const double sq = r0 * r0 + r1 * r1;
        if (sq >= best_sq) continue;
        probe[0] = z[0] + r0;
        probe[1] = z[1] + r1;
        if (f.classify(g.forward(probe)) != original) best_sq = sq;
      }
    }
  }
  if (best_sq < std::numeric_limits<double>::infinity()) {
    result.radius = std::sqrt(best_sq);
  }
  return result;
}

// Exact P(r_Z <= eta) for a half-space latent partition with identity
// modulus: both sides fool by crossing the single boundary.
inline double exact_fooling_cdf_halfspace(double eta) {
  if (!(eta >= 0.0)) {
    throw std::invalid_argument("eta must be nonnegative");
  }
  return 2.0 * (std_normal_cdf(eta) - 0.5);
}

struct McFraction {
  double fraction = 0.0;
  double std_error = 0.0;  // binomial
};

// Fraction of sampled latents whose oracle distance-to-opposite-class is at
// most eta.  The oracle may be exact or an upper bound on the distance.
template <typename DistanceOracle>
McFraction mc_fooling_fraction(const Classifier& f, const Generator& g,
                               double eta, int n, DistanceOracle&& oracle,
                               std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("mc_fooling_fraction needs n >= 1");
  if (!(eta >= 0.0)) {
    throw std::invalid_argument("eta must be nonnegative");
  }
  int count = 0;
  for (int i = 0; i < n; ++i) {
    SubstreamRng rng(seed, Stream::kOracle, static_cast<std::uint64_t>(i));
    const Vec z = rng.normal_vector(g.latent_dim());
    if (oracle(f, g, z) <= eta) ++count;
  }
  McFraction out;
  out.fraction = static_cast<double>(count) / n;
  out.std_error = std::sqrt(out.fraction * (1.0 - out.fraction) / n);
  return out;
}

// Exact distance from z to the opposite checkerboard class: the nearest
// coordinate wall flips the floor-sum parity.
inline double checkerboard_latent_distance(const Vec& z) {
  double best = std::numeric_limits<double>::infinity();
  for (const double v : z) {
    best = std::min(best, std::abs(v - std::round(v)));
  }
  return best;
}

// Exact distance from z to the opposite side of a latent half-space.
inline double halfspace_latent_distance(const Vec& normal, double threshold,
                                        const Vec& z) {
  const double n = detail::norm2(normal);
  if (n < 1e-300) throw std::invalid_argument("half-space normal is zero");
  return std::abs(detail::dot(normal, z) - threshold) / n;
}

}  // namespace isobound
