#pragma once

// Generator and classifier zoo: analytic maps (identity, affine, circle),
// small tanh MLPs with built-in forward/reverse differentiation, latent
// partition classifiers, and the nearest-neighbor robustified wrapper.
// Models are immutable after construction and safe to share across threads.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isobound/detail/linalg.hpp"
#include "isobound/rng.hpp"

namespace isobound {

// A model was asked for something its kind cannot provide (analytic
// gradients, latent recovery, ...).
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multi-start projection onto the generator range failed to converge; the
// best iterate found is preserved for diagnostics.
struct ProjectionError : std::runtime_error {
  ProjectionError(std::string message, Vec iterate, double distance)
      : std::runtime_error(std::move(message)),
        best_iterate(std::move(iterate)),
        best_distance(distance) {}
  Vec best_iterate;
  double best_distance;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared MLP machinery (tanh hidden layers, linear output).
// ---------------------------------------------------------------------------

struct MlpNet {
  std::vector<int> widths;      // layer sizes, input first
  std::vector<Matrix> weight;   // weight[l]: widths[l+1] x widths[l]
  std::vector<Vec> bias;        // bias[l]: widths[l+1]

  static MlpNet random(const std::vector<int>& widths, SubstreamRng& rng) {
    if (widths.size() < 2) {
      throw std::invalid_argument("mlp needs at least input and output layers");
    }
    MlpNet net;
    net.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int fan_in = widths[l];
      const int fan_out = widths[l + 1];
      if (fan_in < 1 || fan_out < 1) {
        throw std::invalid_argument("mlp layer widths must be positive");
      }
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Vec values(static_cast<std::size_t>(fan_out) * fan_in);
      for (auto& v : values) v = scale * rng.normal();
      net.weight.emplace_back(fan_out, fan_in, std::move(values));
      net.bias.emplace_back(fan_out, 0.0);
    }
    return net;
  }

  std::size_t layer_count() const { return weight.size(); }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }

  // Post-activation values per layer; index 0 is the input itself.
  struct Trace {
    std::vector<Vec> post;
  };

  Vec forward(const Vec& x, Trace* trace = nullptr) const {
    Vec a = x;
    if (trace) trace->post.assign(1, a);
    for (std::size_t l = 0; l < weight.size(); ++l) {
      Vec pre = weight[l].apply(a);
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += bias[l][i];
      if (l + 1 < weight.size()) {
        for (auto& v : pre) v = std::tanh(v);
      }
      a = std::move(pre);
      if (trace) trace->post.push_back(a);
    }
    return a;
  }

  // Forward-mode directional derivative J(x) * dir.
  Vec jvp(const Vec& x, const Vec& dir) const {
    Vec a = x;
    Vec da = dir;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      Vec pre = weight[l].apply(a);
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += bias[l][i];
      Vec dpre = weight[l].apply(da);
      if (l + 1 < weight.size()) {
        for (std::size_t i = 0; i < pre.size(); ++i) {
          const double t = std::tanh(pre[i]);
          pre[i] = t;
          dpre[i] *= 1.0 - t * t;
        }
      }
      a = std::move(pre);
      da = std::move(dpre);
    }
    return da;
  }

  // Reverse-mode: J(x)^T * cotangent, using a stored forward trace.
  Vec vjp(const Trace& trace, const Vec& cotangent) const {
    Vec grad = cotangent;
    for (std::size_t l = weight.size(); l-- > 0;) {
      if (l + 1 < weight.size()) {
        // Undo the tanh: trace stores post-activation values.
        const Vec& post = trace.post[l + 1];
        for (std::size_t i = 0; i < grad.size(); ++i) {
          grad[i] *= 1.0 - post[i] * post[i];
        }
      }
      grad = weight[l].apply_transpose(grad);
    }
    return grad;
  }

  Vec vjp_at(const Vec& x, const Vec& cotangent) const {
    Trace trace;
    forward(x, &trace);
    return vjp(trace, cotangent);
  }
};

// ---------------------------------------------------------------------------
// Generators.
// ---------------------------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;

  virtual int latent_dim() const = 0;
  virtual int image_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual Vec forward(const Vec& z) const = 0;
  virtual bool has_analytic_gradient() const { return false; }

  virtual Vec jvp(const Vec& z, const Vec& direction) const {
    return fd_jvp(z, direction);
  }
  virtual Vec vjp(const Vec& z, const Vec& cotangent) const {
    return fd_vjp(z, cotangent);
  }

  // Latent preimage of an on-manifold point, for kinds that support it.
  virtual std::optional<Vec> recover_latent(const Vec&) const {
    return std::nullopt;
  }

  virtual nlohmann::ordered_json to_json() const = 0;

 protected:
  void check_latent(const Vec& z) const {
    if (static_cast<int>(z.size()) != latent_dim()) {
      throw std::invalid_argument("latent dimension mismatch: expected " +
                                  std::to_string(latent_dim()) + ", got " +
                                  std::to_string(z.size()));
    }
  }

  Vec fd_jvp(const Vec& z, const Vec& direction, double step = 1e-5) const {
    Vec plus = z, minus = z;
    detail::axpy(plus, step, direction);
    detail::axpy(minus, -step, direction);
    Vec out = detail::sub(forward(plus), forward(minus));
    for (auto& v : out) v /= 2.0 * step;
    return out;
  }

  Vec fd_vjp(const Vec& z, const Vec& cotangent, double step = 1e-5) const {
    Vec out(z.size(), 0.0);
    Vec probe = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
      probe[i] = z[i] + step;
      const double up = detail::dot(forward(probe), cotangent);
      probe[i] = z[i] - step;
      const double down = detail::dot(forward(probe), cotangent);
      probe[i] = z[i];
      out[i] = (up - down) / (2.0 * step);
    }
    return out;
  }
};

class IdentityGenerator final : public Generator {
 public:
  explicit IdentityGenerator(int dim, double scale = 1.0)
      : dim_(dim), scale_(scale) {
    if (dim < 1) throw std::invalid_argument("identity generator needs dim >= 1");
    if (!(scale != 0.0) || !std::isfinite(scale)) {
      throw std::invalid_argument("identity generator scale must be nonzero");
    }
  }

  int latent_dim() const override { return dim_; }
  int image_dim() const override { return dim_; }
  std::string kind() const override { return "identity"; }
  bool has_analytic_gradient() const override { return true; }
  double scale() const { return scale_; }

  Vec forward(const Vec& z) const override {
    check_latent(z);
    return detail::scaled(z, scale_);
  }
  Vec jvp(const Vec& z, const Vec& direction) const override {
    check_latent(z);
    return detail::scaled(direction, scale_);
  }
  Vec vjp(const Vec& z, const Vec& cotangent) const override {
    check_latent(z);
    return detail::scaled(cotangent, scale_);
  }
  std::optional<Vec> recover_latent(const Vec& x) const override {
    return detail::scaled(x, 1.0 / scale_);
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "identity"},
            {"latent_dim", dim_},
            {"image_dim", dim_},
            {"scale", scale_},
            {"version", 1}};
  }

 private:
  int dim_;
  double scale_;
};

class LinearGenerator final : public Generator {
 public:
  LinearGenerator(Matrix a, Vec b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows != b_.size() || a_.rows < 1 || a_.cols < 1) {
      throw std::invalid_argument("linear generator shape mismatch");
    }
    // Gram matrix for least-squares latent recovery.
    gram_ = Matrix(a_.cols, a_.cols, Vec(a_.cols * a_.cols, 0.0));
    for (std::size_t i = 0; i < a_.cols; ++i) {
      for (std::size_t j = 0; j < a_.cols; ++j) {
        double sum = 0.0;
        for (std::size_t r = 0; r < a_.rows; ++r) sum += a_(r, i) * a_(r, j);
        gram_(i, j) = sum;
      }
    }
  }

  int latent_dim() const override { return static_cast<int>(a_.cols); }
  int image_dim() const override { return static_cast<int>(a_.rows); }
  std::string kind() const override { return "linear"; }
  bool has_analytic_gradient() const override { return true; }
  const Matrix& matrix() const { return a_; }
  const Vec& offset() const { return b_; }

  Vec forward(const Vec& z) const override {
    check_latent(z);
    Vec out = a_.apply(z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b_[i];
    return out;
  }
  Vec jvp(const Vec& z, const Vec& direction) const override {
    check_latent(z);
    return a_.apply(direction);
  }
  Vec vjp(const Vec& z, const Vec& cotangent) const override {
    check_latent(z);
    return a_.apply_transpose(cotangent);
  }

  // Least-squares preimage through the normal equations; exact on the range.
  std::optional<Vec> recover_latent(const Vec& x) const override {
    Vec rhs = a_.apply_transpose(detail::sub(x, b_));
    try {
      return detail::spd_solve(gram_, std::move(rhs));
    } catch (const std::runtime_error&) {
      return std::nullopt;  // rank-deficient map
    }
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "linear"},
            {"latent_dim", latent_dim()},
            {"image_dim", image_dim()},
            {"matrix", a_.data},
            {"offset", b_},
            {"version", 1}};
  }

 private:
  Matrix a_;
  Vec b_;
  Matrix gram_;
};

// One-dimensional latent wrapped onto the unit circle; the canonical smooth
// generator with a curved range.
class CircleGenerator final : public Generator {
 public:
  int latent_dim() const override { return 1; }
  int image_dim() const override { return 2; }
  std::string kind() const override { return "circle"; }
  bool has_analytic_gradient() const override { return true; }

  Vec forward(const Vec& z) const override {
    check_latent(z);
    const double angle = 2.0 * std::numbers::pi * z[0];
    return {std::cos(angle), std::sin(angle)};
  }
  Vec jvp(const Vec& z, const Vec& direction) const override {
    check_latent(z);
    const double angle = 2.0 * std::numbers::pi * z[0];
    const double speed = 2.0 * std::numbers::pi * direction[0];
    return {-std::sin(angle) * speed, std::cos(angle) * speed};
  }
  Vec vjp(const Vec& z, const Vec& cotangent) const override {
    check_latent(z);
    const double angle = 2.0 * std::numbers::pi * z[0];
    return {2.0 * std::numbers::pi *
            (-std::sin(angle) * cotangent[0] + std::cos(angle) * cotangent[1])};
  }

  // Principal angle in (-1/2, 1/2]; the origin maps to 0 by atan2 convention.
  std::optional<Vec> recover_latent(const Vec& x) const override {
    return Vec{std::atan2(x[1], x[0]) / (2.0 * std::numbers::pi)};
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "circle"},
            {"latent_dim", 1},
            {"image_dim", 2},
            {"version", 1}};
  }
};

class MlpGenerator final : public Generator {
 public:
  explicit MlpGenerator(MlpNet net) : net_(std::move(net)) {
    for (const auto& w : net_.weight) {
      for (double v : w.data) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("mlp generator weights must be finite");
        }
      }
    }
  }

  int latent_dim() const override { return net_.input_dim(); }
  int image_dim() const override { return net_.output_dim(); }
  std::string kind() const override { return "mlp"; }
  bool has_analytic_gradient() const override { return true; }
  const MlpNet& net() const { return net_; }

  Vec forward(const Vec& z) const override {
    check_latent(z);
    return net_.forward(z);
  }
  Vec jvp(const Vec& z, const Vec& direction) const override {
    check_latent(z);
    return net_.jvp(z, direction);
  }
  Vec vjp(const Vec& z, const Vec& cotangent) const override {
    check_latent(z);
    return net_.vjp_at(z, cotangent);
  }

  nlohmann::ordered_json to_json() const override {
    nlohmann::ordered_json weights = nlohmann::ordered_json::array();
    nlohmann::ordered_json biases = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < net_.layer_count(); ++l) {
      weights.push_back(net_.weight[l].data);
      biases.push_back(net_.bias[l]);
    }
    return {{"kind", "mlp"},
            {"widths", net_.widths},
            {"weights", weights},
            {"biases", biases},
            {"activation", "tanh"},
            {"version", 1}};
  }

 private:
  MlpNet net_;
};

// ---------------------------------------------------------------------------
// Classifiers.  Labels are 1-based; scores are per-class margins whose argmax
// (lowest index on ties) is the prediction.
// ---------------------------------------------------------------------------

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int num_classes() const = 0;
  virtual int input_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual Vec scores(const Vec& x) const = 0;
  virtual bool has_analytic_gradient() const { return false; }

  virtual Vec score_gradient(const Vec& x, int class_index) const {
    return fd_score_gradient(x, class_index);
  }

  virtual nlohmann::ordered_json to_json() const = 0;

  int classify(const Vec& x) const {
    const Vec s = scores(x);
    int best = 0;
    for (int k = 1; k < static_cast<int>(s.size()); ++k) {
      if (s[k] > s[best]) best = k;
    }
    return best + 1;
  }

 protected:
  void check_input(const Vec& x) const {
    if (static_cast<int>(x.size()) != input_dim()) {
      throw std::invalid_argument("classifier input dimension mismatch: expected " +
                                  std::to_string(input_dim()) + ", got " +
                                  std::to_string(x.size()));
    }
  }

  Vec fd_score_gradient(const Vec& x, int class_index) const {
    const double step = 1e-6 * (1.0 + detail::norm2(x));
    Vec grad(x.size(), 0.0);
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      probe[i] = x[i] + step;
      const double up = scores(probe)[class_index];
      probe[i] = x[i] - step;
      const double down = scores(probe)[class_index];
      probe[i] = x[i];
      grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
  }
};

// Binary partition by a half-space in latent space, evaluated on images by
// recovering the latent through the (known) generator.
class HalfSpaceLatentClassifier final : public Classifier {
 public:
  HalfSpaceLatentClassifier(Vec normal, double threshold,
                            std::shared_ptr<const Generator> generator)
      : normal_(std::move(normal)),
        threshold_(threshold),
        generator_(std::move(generator)) {
    if (!generator_) {
      throw std::invalid_argument("half-space classifier needs a generator");
    }
    if (static_cast<int>(normal_.size()) != generator_->latent_dim()) {
      throw std::invalid_argument(
          "half-space normal dimension must match the generator latent dim");
    }
    if (detail::norm2(normal_) == 0.0) {
      throw std::invalid_argument("half-space normal must be nonzero");
    }
  }

  int num_classes() const override { return 2; }
  int input_dim() const override { return generator_->image_dim(); }
  std::string kind() const override { return "halfspace-latent"; }
  bool has_analytic_gradient() const override {
    return generator_->kind() == "identity" || generator_->kind() == "linear";
  }
  const Vec& normal() const { return normal_; }
  double threshold() const { return threshold_; }
  const Generator& generator() const { return *generator_; }

  Vec scores(const Vec& x) const override {
    check_input(x);
    const auto z = generator_->recover_latent(x);
    if (!z) {
      throw CapabilityError(
          "half-space classifier needs latent recovery, which generator kind '" +
          generator_->kind() + "' does not provide");
    }
    const double margin = detail::dot(normal_, *z) - threshold_;
    return {margin, -margin};
  }

  Vec score_gradient(const Vec& x, int class_index) const override {
    check_input(x);
    if (!has_analytic_gradient()) return fd_score_gradient(x, class_index);
    // d(w . z(x))/dx for the affine recoveries.
    Vec grad;
    if (generator_->kind() == "identity") {
      const auto& id = static_cast<const IdentityGenerator&>(*generator_);
      grad = detail::scaled(normal_, 1.0 / id.scale());
    } else {
      const auto& lin = static_cast<const LinearGenerator&>(*generator_);
      // z(x) = G^-1 A^T (x - b)  =>  grad = A G^-1 w.
      const auto& a = lin.matrix();
      Matrix gram(a.cols, a.cols, Vec(a.cols * a.cols, 0.0));
      for (std::size_t i = 0; i < a.cols; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
          double sum = 0.0;
          for (std::size_t r = 0; r < a.rows; ++r) sum += a(r, i) * a(r, j);
          gram(i, j) = sum;
        }
      }
      grad = a.apply(detail::spd_solve(gram, normal_));
    }
    return class_index == 0 ? grad : detail::scaled(grad, -1.0);
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "halfspace-latent"},
            {"normal", normal_},
            {"threshold", threshold_},
            {"generator", generator_->to_json()},
            {"version", 1}};
  }

 private:
  Vec normal_;
  double threshold_;
  std::shared_ptr<const Generator> generator_;
};

// Two-class partition of latent space by unit-cell parity.
class CheckerboardLatentClassifier final : public Classifier {
 public:
  explicit CheckerboardLatentClassifier(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("checkerboard needs dim >= 1");
  }

  int num_classes() const override { return 2; }
  int input_dim() const override { return dim_; }
  std::string kind() const override { return "checkerboard-latent"; }
  bool has_analytic_gradient() const override { return true; }

  static int parity(const Vec& z) {
    long long sum = 0;
    for (double v : z) sum += static_cast<long long>(std::floor(v));
    return static_cast<int>(((sum % 2) + 2) % 2);
  }

  Vec scores(const Vec& x) const override {
    check_input(x);
    // Margin: distance to the nearest cell wall, signed toward the
    // predicted class.
    double margin = std::numeric_limits<double>::infinity();
    for (double v : x) {
      margin = std::min(margin, std::abs(v - std::round(v)));
    }
    const int own = parity(x);  // 0 -> class 1, 1 -> class 2
    Vec s(2, -margin);
    s[own] = margin;
    return s;
  }

  Vec score_gradient(const Vec& x, int class_index) const override {
    check_input(x);
    std::size_t closest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dist = std::abs(x[i] - std::round(x[i]));
      if (dist < best) {
        best = dist;
        closest = i;
      }
    }
    Vec grad(x.size(), 0.0);
    const double toward = x[closest] - std::round(x[closest]);
    double sign = toward > 0.0 ? 1.0 : (toward < 0.0 ? -1.0 : 0.0);
    if (class_index != parity(x)) sign = -sign;
    grad[closest] = sign;
    return grad;
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "checkerboard-latent"},
            {"latent_dim", dim_},
            {"version", 1}};
  }

 private:
  int dim_;
};

// Partition of the plane into angular sectors; the class of a point is the
// arc its angle falls in, independent of radius.
class ArcClassifier final : public Classifier {
 public:
  explicit ArcClassifier(std::vector<double> thresholds)
      : thresholds_(std::move(thresholds)) {
    if (thresholds_.size() < 2) {
      throw std::invalid_argument("arc classifier needs at least two thresholds");
    }
    for (std::size_t i = 0; i < thresholds_.size(); ++i) {
      if (thresholds_[i] < 0.0 || thresholds_[i] >= 2.0 * std::numbers::pi) {
        throw std::invalid_argument("arc thresholds must lie in [0, 2*pi)");
      }
      if (i > 0 && thresholds_[i] <= thresholds_[i - 1]) {
        throw std::invalid_argument("arc thresholds must be strictly increasing");
      }
    }
  }

  int num_classes() const override { return static_cast<int>(thresholds_.size()); }
  int input_dim() const override { return 2; }
  std::string kind() const override { return "arc"; }
  bool has_analytic_gradient() const override { return true; }
  const std::vector<double>& thresholds() const { return thresholds_; }

  Vec scores(const Vec& x) const override {
    check_input(x);
    const double theta = angle_of(x);
    const int k = static_cast<int>(thresholds_.size());
    Vec s(k);
    for (int i = 0; i < k; ++i) {
      s[i] = arc_margin(theta, i).first;
    }
    return s;
  }

  Vec score_gradient(const Vec& x, int class_index) const override {
    check_input(x);
    const double theta = angle_of(x);
    const double slope = arc_margin(theta, class_index).second;
    const double radius_sq = x[0] * x[0] + x[1] * x[1];
    if (radius_sq == 0.0) return Vec(2, 0.0);
    // d theta / dx = (-y, x) / r^2.
    return {-x[1] / radius_sq * slope, x[0] / radius_sq * slope};
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "arc"}, {"thresholds", thresholds_}, {"version", 1}};
  }

 private:
  static double angle_of(const Vec& x) {
    double theta = std::atan2(x[1], x[0]);
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
    return theta;
  }

  // Signed angular margin of theta for arc i (positive inside), and its
  // derivative with respect to theta.
  std::pair<double, double> arc_margin(double theta, int i) const {
    const double lo = thresholds_[i];
    const double hi = i + 1 < static_cast<int>(thresholds_.size())
                          ? thresholds_[i + 1]
                          : thresholds_.front() + 2.0 * std::numbers::pi;
    // Lift theta into [lo, lo + 2*pi).
    double lifted = theta;
    while (lifted < lo) lifted += 2.0 * std::numbers::pi;
    while (lifted >= lo + 2.0 * std::numbers::pi) {
      lifted -= 2.0 * std::numbers::pi;
    }
    if (lifted < hi) {
      const double to_lo = lifted - lo;
      const double to_hi = hi - lifted;
      return to_lo <= to_hi ? std::make_pair(to_lo, 1.0)
                            : std::make_pair(to_hi, -1.0);
    }
    const double past_hi = lifted - hi;
    const double before_lo = lo + 2.0 * std::numbers::pi - lifted;
    return past_hi <= before_lo ? std::make_pair(-past_hi, -1.0)
                                : std::make_pair(-before_lo, 1.0);
  }

  std::vector<double> thresholds_;
};

class MlpClassifier final : public Classifier {
 public:
  explicit MlpClassifier(MlpNet net) : net_(std::move(net)) {
    if (net_.output_dim() < 2) {
      throw std::invalid_argument("mlp classifier needs at least 2 outputs");
    }
  }

  int num_classes() const override { return net_.output_dim(); }
  int input_dim() const override { return net_.input_dim(); }
  std::string kind() const override { return "mlp"; }
  bool has_analytic_gradient() const override { return true; }
  const MlpNet& net() const { return net_; }

  Vec scores(const Vec& x) const override {
    check_input(x);
    return net_.forward(x);
  }

  Vec score_gradient(const Vec& x, int class_index) const override {
    check_input(x);
    Vec seed(net_.output_dim(), 0.0);
    seed[class_index] = 1.0;
    return net_.vjp_at(x, seed);
  }

  nlohmann::ordered_json to_json() const override {
    nlohmann::ordered_json weights = nlohmann::ordered_json::array();
    nlohmann::ordered_json biases = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < net_.layer_count(); ++l) {
      weights.push_back(net_.weight[l].data);
      biases.push_back(net_.bias[l]);
    }
    return {{"kind", "mlp"},
            {"widths", net_.widths},
            {"weights", weights},
            {"biases", biases},
            {"activation", "tanh"},
            {"version", 1}};
  }

 private:
  MlpNet net_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor robustified wrapper: classify any point by the class of
// the nearest point in the generator range.
// ---------------------------------------------------------------------------

struct ProjectionConfig {
  int restarts = 8;
  int steps = 500;
  double step_size = 0.05;
  double grad_tolerance = 1e-7;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const {
    return {{"restarts", restarts},
            {"steps", steps},
            {"step_size", step_size},
            {"grad_tolerance", grad_tolerance},
            {"seed", seed}};
  }
  static ProjectionConfig from_json(const nlohmann::json& doc) {
    ProjectionConfig cfg;
    cfg.restarts = doc.value("restarts", cfg.restarts);
    cfg.steps = doc.value("steps", cfg.steps);
    cfg.step_size = doc.value("step_size", cfg.step_size);
    cfg.grad_tolerance = doc.value("grad_tolerance", cfg.grad_tolerance);
    cfg.seed = doc.value("seed", cfg.seed);
    return cfg;
  }
};

class NearestNeighborWrappedClassifier final : public Classifier {
 public:
  NearestNeighborWrappedClassifier(std::shared_ptr<const Classifier> inner,
                                   std::shared_ptr<const Generator> generator,
                                   ProjectionConfig projection)
      : inner_(std::move(inner)),
        generator_(std::move(generator)),
        projection_(projection) {
    if (!inner_ || !generator_) {
      throw std::invalid_argument("wrapped classifier needs inner and generator");
    }
    if (inner_->input_dim() != generator_->image_dim()) {
      throw std::invalid_argument(
          "wrapped classifier: inner input dim must match generator image dim");
    }
  }

  int num_classes() const override { return inner_->num_classes(); }
  int input_dim() const override { return generator_->image_dim(); }
  std::string kind() const override { return "nearest-neighbor"; }
  const Classifier& inner() const { return *inner_; }
  const Generator& generator() const { return *generator_; }

  // Latent of (approximately) the closest point in the generator range.
  Vec project(const Vec& x) const {
    check_input(x);
    if (auto direct = generator_->recover_latent(x)) {
      return *direct;
    }
    return descend_projection(x);
  }

  Vec scores(const Vec& x) const override {
    return inner_->scores(generator_->forward(project(x)));
  }

  nlohmann::ordered_json to_json() const override {
    return {{"kind", "nearest-neighbor"},
            {"inner", inner_->to_json()},
            {"generator", generator_->to_json()},
            {"projection", projection_.to_json()},
            {"version", 1}};
  }

 private:
  Vec descend_projection(const Vec& x) const {
    const int d = generator_->latent_dim();
    Vec best_z;
    double best_dist = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int restart = 0; restart < std::max(1, projection_.restarts);
         ++restart) {
      SubstreamRng rng(projection_.seed, Stream::kProjection,
                       static_cast<std::uint64_t>(restart));
      Vec z = restart == 0 ? Vec(d, 0.0) : rng.normal_vector(d);
      for (int step = 0; step < projection_.steps; ++step) {
        const Vec residual = detail::sub(generator_->forward(z), x);
        const Vec grad = generator_->vjp(z, residual);
        if (detail::norm2(grad) < projection_.grad_tolerance) {
          converged = true;
          break;
        }
        detail::axpy(z, -projection_.step_size, grad);
      }
      const double dist = detail::distance(generator_->forward(z), x);
      if (dist < best_dist) {
        best_dist = dist;
        best_z = z;
      }
    }
    if (!converged) {
      throw ProjectionError(
          "projection onto the generator range did not converge (best "
          "residual distance " +
              std::to_string(best_dist) + ")",
          best_z, best_dist);
    }
    return best_z;
  }

  std::shared_ptr<const Classifier> inner_;
  std::shared_ptr<const Generator> generator_;
  ProjectionConfig projection_;
};

inline std::shared_ptr<Classifier> nearest_neighbor_wrap(
    std::shared_ptr<const Classifier> inner,
    std::shared_ptr<const Generator> generator,
    ProjectionConfig projection = {}) {
  return std::make_shared<NearestNeighborWrappedClassifier>(
      std::move(inner), std::move(generator), projection);
}

// ---------------------------------------------------------------------------
// Latent sampling.
// ---------------------------------------------------------------------------

// n independent draws from N(0, I_d); draw i depends only on (seed, i), so
// any parallel consumption order reproduces the same list.
inline std::vector<Vec> sample_latent(int dim, int count, std::uint64_t seed) {
  if (dim < 1 || count < 1) {
    throw std::invalid_argument("sample_latent needs dim >= 1 and count >= 1");
  }
  std::vector<Vec> out(count);
  for (int i = 0; i < count; ++i) {
    SubstreamRng rng(seed, Stream::kLatent, static_cast<std::uint64_t>(i));
    out[i] = rng.normal_vector(dim);
  }
  return out;
}

inline Vec sample_latent_point(int dim, std::uint64_t seed, Stream stream,
                               std::uint64_t index) {
  SubstreamRng rng(seed, stream, index);
  return rng.normal_vector(dim);
}

inline Vec sample_latent_point(int dim, std::uint64_t seed, std::uint64_t index) {
  return sample_latent_point(dim, seed, Stream::kLatent, index);
}

// ---------------------------------------------------------------------------
// Serialization factories.
// ---------------------------------------------------------------------------

inline std::shared_ptr<Generator> generator_from_json(const nlohmann::json& doc);

inline std::shared_ptr<Classifier> classifier_from_json(const nlohmann::json& doc);

namespace detail {

inline MlpNet mlp_from_json(const nlohmann::json& doc) {
  MlpNet net;
  net.widths = doc.at("widths").get<std::vector<int>>();
  const auto& weights = doc.at("weights");
  const auto& biases = doc.at("biases");
  if (weights.size() + 1 != net.widths.size() ||
      biases.size() != weights.size()) {
    throw std::invalid_argument("mlp document layer count mismatch");
  }
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    net.weight.emplace_back(net.widths[l + 1], net.widths[l],
                            weights[l].get<Vec>());
    net.bias.push_back(biases[l].get<Vec>());
    if (net.bias.back().size() != static_cast<std::size_t>(net.widths[l + 1])) {
      throw std::invalid_argument("mlp document bias size mismatch");
    }
  }
  if (doc.value("activation", "tanh") != std::string("tanh")) {
    throw std::invalid_argument("only tanh mlp documents are supported");
  }
  return net;
}

}  // namespace detail

inline std::shared_ptr<Generator> generator_from_json(
    const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "identity") {
    return std::make_shared<IdentityGenerator>(doc.at("latent_dim").get<int>(),
                                               doc.value("scale", 1.0));
  }
  if (kind == "linear") {
    Matrix a(doc.at("image_dim").get<int>(), doc.at("latent_dim").get<int>(),
             doc.at("matrix").get<Vec>());
    return std::make_shared<LinearGenerator>(std::move(a),
                                             doc.at("offset").get<Vec>());
  }
  if (kind == "circle") {
    return std::make_shared<CircleGenerator>();
  }
  if (kind == "mlp") {
    return std::make_shared<MlpGenerator>(detail::mlp_from_json(doc));
  }
  throw std::invalid_argument("unknown generator kind: " + kind);
}

inline std::shared_ptr<Classifier> classifier_from_json(
    const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "halfspace-latent") {
    return std::make_shared<HalfSpaceLatentClassifier>(
        doc.at("normal").get<Vec>(), doc.at("threshold").get<double>(),
        generator_from_json(doc.at("generator")));
  }
  if (kind == "checkerboard-latent") {
    return std::make_shared<CheckerboardLatentClassifier>(
        doc.at("latent_dim").get<int>());
  }
  if (kind == "arc") {
    return std::make_shared<ArcClassifier>(
        doc.at("thresholds").get<std::vector<double>>());
  }
  if (kind == "mlp") {
    return std::make_shared<MlpClassifier>(detail::mlp_from_json(doc));
  }
  if (kind == "nearest-neighbor") {
    return std::make_shared<NearestNeighborWrappedClassifier>(
        classifier_from_json(doc.at("inner")),
        generator_from_json(doc.at("generator")),
        ProjectionConfig::from_json(doc.at("projection")));
  }
  throw std::invalid_argument("unknown classifier kind: " + kind);
}

}  // namespace isobound
