#pragma once

// Modulus of continuity of a generator: how far an image can move when the
// latent moves by delta.  Three forms cover the artifact's needs: the
// identity map, an affine bound (Lipschitz slope plus an optional jump for
// disconnected supports), and a tabulated piecewise-linear estimate.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isobound/gaussian.hpp"

namespace isobound {

// Thrown by Modulus::inverse when the requested image distance sits below
// everything the modulus can produce (eta < omega(0)): no latent radius
// achieves it, and bound formulas fall back to their eta = 0 case.
struct BelowModulusRange : std::range_error {
  using std::range_error::range_error;
};

class Modulus {
 public:
  enum class Form { kIdentity, kLinear, kTabulated };

  static Modulus identity() { return Modulus(Form::kIdentity); }

  static Modulus linear(double slope, double offset = 0.0) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      throw std::invalid_argument("modulus slope must be positive and finite");
    }
    if (!(offset >= 0.0) || !std::isfinite(offset)) {
      throw std::invalid_argument("modulus offset must be nonnegative");
    }
    Modulus m(Form::kLinear);
    m.slope_ = slope;
    m.offset_ = offset;
    return m;
  }

  static Modulus tabulated(std::vector<double> deltas,
                           std::vector<double> values) {
    if (deltas.size() != values.size() || deltas.size() < 2) {
      throw std::invalid_argument(
          "tabulated modulus needs at least two (delta, value) points");
    }
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (!std::isfinite(deltas[i]) || !std::isfinite(values[i]) ||
          deltas[i] < 0.0 || values[i] < 0.0) {
        throw std::invalid_argument(
            "tabulated modulus points must be finite and nonnegative");
      }
      if (i > 0 && (deltas[i] <= deltas[i - 1] || values[i] <= values[i - 1])) {
        throw std::invalid_argument(
            "tabulated modulus points must be strictly increasing in both "
            "coordinates");
      }
    }
    Modulus m(Form::kTabulated);
    m.deltas_ = std::move(deltas);
    m.values_ = std::move(values);
    return m;
  }

  Form form() const { return form_; }
  double slope() const { return slope_; }
  double offset() const { return offset_; }
  const std::vector<double>& table_deltas() const { return deltas_; }
  const std::vector<double>& table_values() const { return values_; }

  // Largest latent radius the modulus is defined for.
  double max_delta() const {
    return form_ == Form::kTabulated
               ? deltas_.back()
               : std::numeric_limits<double>::infinity();
  }

  // Image distance produced by a zero latent step.
  double value_at_zero() const {
    switch (form_) {
      case Form::kIdentity:
        return 0.0;
      case Form::kLinear:
        return offset_;
      case Form::kTabulated:
        return deltas_.front() == 0.0 ? values_.front() : 0.0;
    }
    return 0.0;
  }

  double operator()(double delta) const {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
      throw std::domain_error("modulus evaluated at negative or non-finite delta");
    }
    switch (form_) {
      case Form::kIdentity:
        return delta;
      case Form::kLinear:
        return slope_ * delta + offset_;
      case Form::kTabulated: {
        if (delta < deltas_.front() || delta > deltas_.back()) {
          throw std::range_error(
              "modulus table covers [" + std::to_string(deltas_.front()) +
              ", " + std::to_string(deltas_.back()) + "], got delta = " +
              std::to_string(delta) + " (no extrapolation)");
        }
        const auto it =
            std::upper_bound(deltas_.begin(), deltas_.end(), delta);
        const std::size_t hi = std::min<std::size_t>(
            static_cast<std::size_t>(it - deltas_.begin()),
            deltas_.size() - 1);
        const std::size_t lo = hi - 1;
        const double t =
            (delta - deltas_[lo]) / (deltas_[hi] - deltas_[lo]);
        return values_[lo] + t * (values_[hi] - values_[lo]);
      }
    }
    return delta;
  }

  // Smallest latent radius whose image distance reaches eta.  Closed form
  // for the identity/affine cases, monotone bisection on the interpolant for
  // tables.  Throws BelowModulusRange when eta < omega(0) and range_error
  // when eta exceeds the covered values.
  double inverse(double eta) const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
      throw std::domain_error("modulus inverse of negative or non-finite eta");
    }
    switch (form_) {
      case Form::kIdentity:
        return eta;
      case Form::kLinear:
        if (eta < offset_) {
          throw BelowModulusRange(
              "image distance below the modulus offset: no latent radius "
              "achieves it");
        }
        return (eta - offset_) / slope_;
      case Form::kTabulated: {
        if (eta < values_.front()) {
          if (deltas_.front() == 0.0) {
            throw BelowModulusRange(
                "image distance below the modulus value at zero");
          }
          // The table starts past zero; anything below its first value is
          // reachable within the first (uncovered) latent gap.
          throw std::range_error(
              "modulus table values start at " +
              std::to_string(values_.front()) +
              "; eta below covered range");
        }
        if (eta > values_.back()) {
          throw std::range_error(
              "eta above the largest tabulated modulus value");
        }
        double lo = deltas_.front();
        double hi = deltas_.back();
        for (int i = 0; i < 200; ++i) {
          const double mid = 0.5 * (lo + hi);
          if ((*this)(mid) < eta) {
            lo = mid;
          } else {
            hi = mid;
          }
        }
        return 0.5 * (lo + hi);
      }
    }
    return eta;
  }

  // A piecewise-linear modulus is concave iff its segment slopes never
  // increase; the identity and affine forms are trivially concave.
  bool concave() const {
    if (form_ != Form::kTabulated) return true;
    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < deltas_.size(); ++i) {
      const double slope =
          (values_[i] - values_[i - 1]) / (deltas_[i] - deltas_[i - 1]);
      if (slope > prev_slope * (1.0 + 1e-12) + 1e-15) return false;
      prev_slope = slope;
    }
    return true;
  }

 private:
  explicit Modulus(Form form) : form_(form) {}

  Form form_;
  double slope_ = 1.0;
  double offset_ = 0.0;
  std::vector<double> deltas_;
  std::vector<double> values_;
};

// Empirical probabilistic modulus: per-grid-point (1-kappa)-quantiles of
// sampled image-distance suprema.
struct ModulusEstimate {
  std::vector<double> delta_grid;
  double kappa = 0.0;
  std::vector<double> values;
  int samples_per_point = 0;
  int inner_opt_steps = 0;

  void validate() const {
    if (delta_grid.size() != values.size() || delta_grid.empty()) {
      throw std::invalid_argument("modulus estimate grid/value size mismatch");
    }
    if (!(kappa >= 0.0 && kappa < 1.0)) {
      throw std::invalid_argument("modulus estimate kappa outside [0, 1)");
    }
    if (samples_per_point < 1) {
      throw std::invalid_argument("modulus estimate needs samples_per_point >= 1");
    }
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] < values[i - 1] || delta_grid[i] <= delta_grid[i - 1]) {
        throw std::invalid_argument(
            "modulus estimate must be monotone along an increasing grid");
      }
    }
  }

  // Tabulated modulus over the estimated grid.  Equal adjacent quantiles
  // (possible after isotonic pooling) are separated by a relative epsilon so
  // the table stays strictly increasing and invertible.
  Modulus to_modulus() const {
    validate();
    std::vector<double> v = values;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double floor_value =
          v[i - 1] + 1e-12 * std::max(1.0, std::abs(v[i - 1]));
      if (v[i] < floor_value) v[i] = floor_value;
    }
    return Modulus::tabulated(delta_grid, v);
  }

  nlohmann::ordered_json to_json() const {
    return nlohmann::ordered_json{{"delta_grid", delta_grid},
                                  {"kappa", kappa},
                                  {"values", values},
                                  {"samples_per_point", samples_per_point}};
  }

  static ModulusEstimate from_json(const nlohmann::json& doc) {
    ModulusEstimate out;
    out.delta_grid = doc.at("delta_grid").get<std::vector<double>>();
    out.kappa = doc.at("kappa").get<double>();
    out.values = doc.at("values").get<std::vector<double>>();
    out.samples_per_point = doc.at("samples_per_point").get<int>();
    out.validate();
    return out;
  }
};

namespace detail {

// Pool-adjacent-violators: least-squares nondecreasing fit.
inline std::vector<double> isotonic_nondecreasing(const std::vector<double>& y) {
  struct Block {
    double mean;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (double value : y) {
    blocks.push_back({value, 1});
    while (blocks.size() >= 2 &&
           blocks[blocks.size() - 2].mean > blocks.back().mean) {
      const Block last = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      prev.mean = (prev.mean * prev.count + last.mean * last.count) /
                  (prev.count + last.count);
      prev.count += last.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const Block& b : blocks) {
    out.insert(out.end(), b.count, b.mean);
  }
  return out;
}

}  // namespace detail
}  // namespace isobound
