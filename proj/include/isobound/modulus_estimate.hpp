#pragma once

// Empirical modulus-of-continuity estimation: for each base latent z, find
// (from below) the largest image displacement reachable on the sphere
// ||z' - z|| = delta by projected gradient ascent, then take an upper
// quantile across base points.  Sample i depends only on (seed, i), so the
// estimate is bit-identical under any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "isobound/detail/parallel.hpp"
#include "isobound/models.hpp"
#include "isobound/modulus.hpp"
#include "isobound/rng.hpp"

namespace isobound {

struct InnerOptConfig {
  int steps = 200;
  int restarts = 3;
  double step_size = 0.1;  // ascent step as a fraction of delta
  bool allow_finite_difference = true;
  double finite_difference_scale = 1e-4;  // FD step as a fraction of delta
  int threads = 1;                        // 0 = hardware concurrency

  void validate() const {
    if (steps < 1) throw std::invalid_argument("inner steps must be >= 1");
    if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
    if (!(step_size > 0.0)) {
      throw std::invalid_argument("step_size must be positive");
    }
    if (!(finite_difference_scale > 0.0)) {
      throw std::invalid_argument("finite_difference_scale must be positive");
    }
    if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  }
};

namespace detail {

// Gradient of u -> ||g(z + u) - g(z)|| given the unit residual direction.
inline Vec displacement_gradient(const Generator& generator, const Vec& z,
                                 const Vec& u, const Vec& unit_residual,
                                 const Vec& base_image, double fd_step,
                                 bool use_fd) {
  Vec point = detail::add(z, u);
  if (!use_fd) return generator.vjp(point, unit_residual);
  Vec grad(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double keep = point[i];
    point[i] = keep + fd_step;
    const double up = detail::distance(generator.forward(point), base_image);
    point[i] = keep - fd_step;
    const double down = detail::distance(generator.forward(point), base_image);
    point[i] = keep;
    grad[i] = (up - down) / (2.0 * fd_step);
  }
  return grad;
}

inline double sample_supremum(const Generator& generator, const Vec& z,
                              double delta, const InnerOptConfig& opt,
                              SubstreamRng& inner, bool use_fd) {
  const int d = generator.latent_dim();
  const Vec base_image = generator.forward(z);
  const double fd_step = opt.finite_difference_scale * delta;
  double best = 0.0;
  for (int restart = 0; restart < opt.restarts; ++restart) {
    Vec u = detail::scaled(inner.unit_vector(d), delta);
    for (int step = 0; step < opt.steps; ++step) {
      const Vec diff =
          detail::sub(generator.forward(detail::add(z, u)), base_image);
      const double value = detail::norm2(diff);
      best = std::max(best, value);
      Vec grad;
      if (value > 1e-300) {
        grad = displacement_gradient(generator, z, u,
                                     detail::scaled(diff, 1.0 / value),
                                     base_image, fd_step, use_fd);
      } else {
        grad = inner.unit_vector(d);  // flat start; move somewhere
      }
      const double grad_norm = detail::norm2(grad);
      if (grad_norm < 1e-15) break;
      // Normalized ascent with a mild decay, then project back to the sphere.
      const double stride =
          opt.step_size * delta / (1.0 + 4.0 * step / opt.steps);
      detail::axpy(u, stride / grad_norm, grad);
      const double radius = detail::norm2(u);
      if (radius < 1e-300) {
        u = detail::scaled(inner.unit_vector(d), delta);
      } else {
        u = detail::scaled(u, delta / radius);
      }
    }
    best = std::max(best, detail::distance(
                              generator.forward(detail::add(z, u)), base_image));
  }
  return best;
}

// Upper (1 - kappa)-quantile with "higher" interpolation: the smallest order
// statistic with at least a (1 - kappa) fraction at or below it.
inline double upper_quantile(std::vector<double> values, double kappa) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto index = static_cast<std::size_t>(
      std::ceil((1.0 - kappa) * n - 1e-9));
  index = std::min(std::max<std::size_t>(index, 1), values.size());
  return values[index - 1];
}

}  // namespace detail

// Per-sample suprema of the image displacement at latent radius delta; shared
// by the quantile estimate and the latent-sampling calibration loop.
inline std::vector<double> displacement_suprema(const Generator& generator,
                                                double delta, int samples,
                                                const InnerOptConfig& opt,
                                                std::uint64_t seed) {
  opt.validate();
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("delta must be positive and finite");
  }
  if (samples < 10) {
    throw std::invalid_argument("modulus estimation needs at least 10 samples");
  }
  const bool use_fd = !generator.has_analytic_gradient();
  if (use_fd && !opt.allow_finite_difference) {
    throw CapabilityError(
        "generator kind '" + generator.kind() +
        "' has no analytic gradient and finite differences are disabled");
  }
  std::vector<double> suprema(samples, 0.0);
  detail::parallel_for(
      static_cast<std::size_t>(samples), opt.threads, [&](std::size_t i) {
        SubstreamRng base_rng(seed, Stream::kModulus, 2 * i);
        SubstreamRng inner_rng(seed, Stream::kModulus, 2 * i + 1);
        const Vec z = base_rng.normal_vector(generator.latent_dim());
        suprema[i] =
            detail::sample_supremum(generator, z, delta, opt, inner_rng, use_fd);
      });
  return suprema;
}

// (1 - kappa)-quantile of the per-sample displacement suprema at one radius.
inline double estimate_modulus(const Generator& generator, double delta,
                               double kappa, int samples,
                               const InnerOptConfig& opt, std::uint64_t seed) {
  if (kappa < 0.0 || kappa >= 1.0) {
    throw std::invalid_argument("kappa must lie in [0, 1)");
  }
  return detail::upper_quantile(
      displacement_suprema(generator, delta, samples, opt, seed), kappa);
}

// Estimate the modulus on a grid of radii and pool the raw quantiles into a
// nondecreasing table by isotonic regression.
inline ModulusEstimate fit_modulus_table(const Generator& generator,
                                         const std::vector<double>& delta_grid,
                                         double kappa, int samples_per_point,
                                         const InnerOptConfig& opt,
                                         std::uint64_t seed) {
  if (delta_grid.empty()) {
    throw std::invalid_argument("delta grid must be nonempty");
  }
  for (std::size_t i = 0; i < delta_grid.size(); ++i) {
    if (!(delta_grid[i] > 0.0)) {
      throw std::invalid_argument("delta grid entries must be positive");
    }
    if (i > 0 && delta_grid[i] <= delta_grid[i - 1]) {
      throw std::invalid_argument("delta grid must be strictly increasing");
    }
  }
  std::vector<double> raw(delta_grid.size());
  for (std::size_t j = 0; j < delta_grid.size(); ++j) {
    raw[j] = estimate_modulus(generator, delta_grid[j], kappa,
                              samples_per_point, opt, seed);
  }
  ModulusEstimate estimate;
  estimate.delta_grid = delta_grid;
  estimate.kappa = kappa;
  estimate.values = detail::isotonic_nondecreasing(raw);
  estimate.samples_per_point = samples_per_point;
  estimate.inner_opt_steps = opt.steps;
  estimate.validate();
  return estimate;
}

}  // namespace isobound
