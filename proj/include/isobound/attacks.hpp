#pragma once

// Minimal-perturbation searches for the three robustness notions (latent,
// in-distribution, unconstrained) plus the joint two-classifier perturbation
// search.  Every returned radius is an upper estimate backed by a replayable
// witness that changes the label.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "isobound/detail/parallel.hpp"
#include "isobound/gaussian.hpp"
#include "isobound/models.hpp"
#include "isobound/rng.hpp"

namespace isobound {

struct AttackConfig {
  int max_iters = 50;
  double overshoot = 0.02;
  double bisection_tol = 1e-6;  // relative to the final segment
  int restarts = 2;             // penalty-refinement restarts
  double step_size = 0.1;       // penalty descent scale
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(bisection_tol > 0.0)) {
      throw std::invalid_argument("bisection_tol must be positive");
    }
    if (!(overshoot >= 0.0)) {
      throw std::invalid_argument("overshoot must be nonnegative");
    }
    if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
    if (!(step_size > 0.0)) {
      throw std::invalid_argument("step_size must be positive");
    }
  }
};

struct AttackOutcome {
  bool converged = false;
  int iterations = 0;
  double radius = std::numeric_limits<double>::quiet_NaN();
  Vec witness;  // label-changing endpoint (latent or image space per search)
};

namespace detail {

inline int argmax_lowest(const Vec& scores) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

// One linearized boundary-step proposal: the nearest class boundary under a
// first-order model of the margins at p.
struct BoundaryStep {
  bool usable = false;
  double distance = std::numeric_limits<double>::infinity();
  Vec direction;  // unnormalized w_l, step = distance / ||w_l||^2 * w_l
};

template <typename GradFn>
BoundaryStep nearest_boundary_step(const Vec& p, const Vec& s, int current,
                                   int num_classes, GradFn&& gradient) {
  BoundaryStep best;
  const Vec grad_cur = gradient(p, current);
  for (int k = 0; k < num_classes; ++k) {
    if (k == current) continue;
    Vec w = gradient(p, k);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= grad_cur[i];
    const double w_norm = norm2(w);
    if (w_norm < 1e-14) continue;
    const double margin = s[current] - s[k];  // >= 0 at the current point
    const double dist = std::abs(margin) / w_norm;
    if (dist < best.distance) {
      best.usable = true;
      best.distance = dist;
      best.direction = std::move(w);
    }
  }
  return best;
}

// Shrink a label-flipping endpoint back toward the start until the boundary
// is localized within the relative tolerance; returns the flipped endpoint.
template <typename ClassifyFn>
Vec bisect_to_boundary(const Vec& start, const Vec& flipped, int original,
                       double tol, ClassifyFn&& classify) {
  double lo = 0.0, hi = 1.0;
  Vec probe(start.size());
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < start.size(); ++i) {
      probe[i] = start[i] + mid * (flipped[i] - start[i]);
    }
    (classify(probe) == original ? lo : hi) = mid;
  }
  for (std::size_t i = 0; i < start.size(); ++i) {
    probe[i] = start[i] + hi * (flipped[i] - start[i]);
  }
  return probe;
}

// Iterative linearization toward the nearest score boundary with overshoot,
// then bisection refinement along the travelled segment.
template <typename ScoresFn, typename GradFn>
AttackOutcome deepfool(const Vec& start, int num_classes, ScoresFn&& scores,
                       GradFn&& gradient, const AttackConfig& cfg) {
  cfg.validate();
  const auto classify = [&](const Vec& p) {
    return argmax_lowest(scores(p));
  };
  const int original = classify(start);

  AttackOutcome outcome;
  Vec p = start;
  bool flipped = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Vec s = scores(p);
    if (argmax_lowest(s) != original) {
      flipped = true;
      break;
    }
    const BoundaryStep step =
        nearest_boundary_step(p, s, original, num_classes, gradient);
    if (!step.usable) break;
    const double w_norm = norm2(step.direction);
    // The margin to class l closes along +w_l = grad(s_l - s_cur).
    axpy(p, (1.0 + cfg.overshoot) * step.distance / w_norm, step.direction);
    outcome.iterations = iter + 1;
  }
  if (!flipped && classify(p) == original) {
    return outcome;  // converged stays false, radius NaN
  }
  outcome.witness =
      bisect_to_boundary(start, p, original, cfg.bisection_tol, classify);
  outcome.radius = distance(start, outcome.witness);
  outcome.converged = true;

  // Perpendicular-foot polish: the bisected segment may cross the boundary
  // obliquely, so re-aim at the foot of the locally linearized boundary
  // through the current witness.  Exact in one round for affine boundaries.
  for (int round = 0; round < 8; ++round) {
    const int flipped_class = classify(outcome.witness);
    Vec w = gradient(outcome.witness, flipped_class);
    const Vec grad_orig = gradient(outcome.witness, original);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= grad_orig[i];
    const double w_norm = norm2(w);
    if (w_norm < 1e-14) break;
    for (auto& v : w) v /= w_norm;
    const double side = dot(sub(start, outcome.witness), w);
    Vec foot = start;
    axpy(foot, -side, w);
    const double push_sign = side >= 0.0 ? -1.0 : 1.0;
    Vec probe;
    bool found = false;
    double push = std::max(cfg.bisection_tol * outcome.radius, 1e-12);
    for (int attempt = 0; attempt < 30 && push <= outcome.radius; ++attempt) {
      probe = foot;
      axpy(probe, push_sign * push, w);
      if (classify(probe) != original) {
        found = true;
        break;
      }
      push *= 2.0;
    }
    if (!found) break;
    const Vec refined =
        bisect_to_boundary(start, probe, original, cfg.bisection_tol, classify);
    const double refined_radius = distance(start, refined);
    const double gain = outcome.radius - refined_radius;
    if (gain <= 0.0) break;
    outcome.witness = refined;
    outcome.radius = refined_radius;
    if (gain <= cfg.bisection_tol * std::max(outcome.radius, 1e-12)) break;
  }
  return outcome;
}

}  // namespace detail

// Smallest found latent step flipping the composed classifier f(g(.)).
inline AttackOutcome latent_robustness(const Classifier& f, const Generator& g,
                                       const Vec& z, const AttackConfig& cfg) {
  const auto scores = [&](const Vec& u) { return f.scores(g.forward(u)); };
  const auto gradient = [&](const Vec& u, int k) {
    return g.vjp(u, f.score_gradient(g.forward(u), k));
  };
  return detail::deepfool(z, f.num_classes(), scores, gradient, cfg);
}

// Smallest found image-space step flipping f directly.
inline AttackOutcome unconstrained_robustness(const Classifier& f, const Vec& x,
                                              const AttackConfig& cfg) {
  const auto scores = [&](const Vec& p) { return f.scores(p); };
  const auto gradient = [&](const Vec& p, int k) {
    return f.score_gradient(p, k);
  };
  return detail::deepfool(x, f.num_classes(), scores, gradient, cfg);
}

// Smallest found on-manifold image displacement flipping f: seed with the
// latent search, polish with penalty descent on image distance, localize the
// boundary by latent bisection.  The radius is the image-space distance; the
// witness is the flipped latent point.
inline AttackOutcome in_distribution_robustness(const Classifier& f,
                                                const Generator& g,
                                                const Vec& z,
                                                const AttackConfig& cfg) {
  AttackOutcome seed = latent_robustness(f, g, z, cfg);
  if (!seed.converged) return seed;

  const Vec x0 = g.forward(z);
  const int original = f.classify(x0);
  const auto flips = [&](const Vec& u) {
    return f.classify(g.forward(u)) != original;
  };

  std::vector<Vec> candidates = {seed.witness};
  const double seed_scale = std::max(detail::distance(seed.witness, z), 1e-9);
  static constexpr double kPenaltySchedule[] = {4.0, 2.0, 1.0, 0.5, 0.25};

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    SubstreamRng rng(cfg.seed, Stream::kAttack,
                     static_cast<std::uint64_t>(restart));
    Vec u = seed.witness;
    if (restart > 0) {
      for (auto& v : u) v += 0.2 * seed_scale * rng.normal();
    }
    Vec best_flipped;
    double best_dist = std::numeric_limits<double>::infinity();
    int stage = 0;
    for (const double lambda : kPenaltySchedule) {
      for (int step = 0; step < 40; ++step) {
        const Vec image = g.forward(u);
        const Vec s = f.scores(image);
        const int cur = detail::argmax_lowest(s) + 1;
        const double dist = detail::distance(image, x0);
        if (cur != original && dist < best_dist) {
          best_dist = dist;
          best_flipped = u;
        }

        Vec grad(u.size(), 0.0);
        if (dist > 1e-12) {
          Vec residual = detail::sub(image, x0);
          for (auto& v : residual) v /= dist;
          grad = g.vjp(u, residual);
        }
        if (cur == original) {
          // Still on the original side: push the leading margin down.
          const int orig_idx = original - 1;
          int runner = orig_idx == 0 ? 1 : 0;
          for (int k = 0; k < f.num_classes(); ++k) {
            if (k != orig_idx && s[k] > s[runner]) runner = k;
          }
          const Vec go = f.score_gradient(image, orig_idx);
          const Vec gr = f.score_gradient(image, runner);
          Vec violation = detail::sub(go, gr);
          const Vec pulled = g.vjp(u, violation);
          detail::axpy(grad, lambda, pulled);
        }
        const double g_norm = detail::norm2(grad);
        if (g_norm < 1e-14) break;
        const double stride =
            cfg.step_size * seed_scale / ((1.0 + stage) * (1.0 + step / 20.0));
        detail::axpy(u, -stride / g_norm, grad);
      }
      ++stage;
    }
    if (flips(u)) candidates.push_back(u);
    if (!best_flipped.empty()) candidates.push_back(std::move(best_flipped));
  }

  AttackOutcome outcome;
  outcome.iterations = seed.iterations;
  outcome.converged = true;
  outcome.radius = std::numeric_limits<double>::infinity();
  for (const Vec& candidate : candidates) {
    const Vec witness = detail::bisect_to_boundary(
        z, candidate, original, cfg.bisection_tol,
        [&](const Vec& u) { return f.classify(g.forward(u)); });
    const double dist = detail::distance(g.forward(witness), x0);
    if (dist < outcome.radius) {
      outcome.radius = dist;
      outcome.witness = witness;
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Joint transferable perturbation.
// ---------------------------------------------------------------------------

struct TransferResult {
  Vec v;  // image-space perturbation
  double norm = std::numeric_limits<double>::infinity();
  bool fools_f = false;
  bool fools_h = false;

  bool success(double eta) const { return fools_f && fools_h && norm <= eta; }
};

// Search for one image-space perturbation that flips both classifiers at
// g(z), preferring the smallest norm found.  Failure (flags false) is a
// valid outcome.
inline TransferResult find_transfer_perturbation(const Classifier& f,
                                                 const Classifier& h,
                                                 const Generator& g,
                                                 const Vec& z, double eta,
                                                 const AttackConfig& cfg) {
  cfg.validate();
  if (f.input_dim() != h.input_dim()) {
    throw std::invalid_argument(
        "joint search needs classifiers over the same image space");
  }
  const Vec x0 = g.forward(z);
  const int label_f = f.classify(x0);
  const int label_h = h.classify(x0);

  const auto both_flipped = [&](const Vec& x) {
    return f.classify(x) != label_f && h.classify(x) != label_h;
  };

  Vec x = x0;
  bool joint = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const bool ff = f.classify(x) != label_f;
    const bool hh = h.classify(x) != label_h;
    if (ff && hh) {
      joint = true;
      break;
    }
    // Step for the unflipped classifier whose linearized boundary is
    // farther; the nearer one tends to be crossed on the way.
    detail::BoundaryStep chosen;
    bool have = false;
    const auto consider = [&](const Classifier& c, int label, bool is_flipped) {
      if (is_flipped) return;
      const Vec s = c.scores(x);
      const auto step = detail::nearest_boundary_step(
          x, s, label - 1, c.num_classes(),
          [&](const Vec& p, int k) { return c.score_gradient(p, k); });
      if (!step.usable) return;
      if (!have || step.distance > chosen.distance) {
        chosen = step;
        have = true;
      }
    };
    consider(f, label_f, ff);
    consider(h, label_h, hh);
    if (!have) break;
    const double w_norm = detail::norm2(chosen.direction);
    detail::axpy(x, (1.0 + cfg.overshoot) * chosen.distance / w_norm,
                 chosen.direction);
  }

  TransferResult result;
  if (joint) {
    // Smallest prefix of the travelled segment keeping both labels flipped.
    double lo = 0.0, hi = 1.0;
    Vec probe(x0.size());
    while (hi - lo > cfg.bisection_tol) {
      const double mid = 0.5 * (lo + hi);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        probe[i] = x0[i] + mid * (x[i] - x0[i]);
      }
      (both_flipped(probe) ? hi : lo) = mid;
    }
    for (std::size_t i = 0; i < x0.size(); ++i) {
      probe[i] = x0[i] + hi * (x[i] - x0[i]);
    }
    x = probe;
  }
  result.v = detail::sub(x, x0);
  result.norm = detail::norm2(result.v);
  const Vec replay = detail::add(x0, result.v);
  result.fools_f = f.classify(replay) != label_f;
  result.fools_h = h.classify(replay) != label_h;
  (void)eta;  // success threshold is the caller's judgment via success(eta)
  return result;
}

// ---------------------------------------------------------------------------
// Survey over sampled latents.
// ---------------------------------------------------------------------------

struct SurveySelection {
  bool latent = true;
  bool in_distribution = false;
  bool unconstrained = false;
};

struct RobustnessRecord {
  int sample_index = 0;
  Vec z;
  int label = 0;
  std::optional<double> r_z;
  std::optional<double> r_in;
  std::optional<double> r_unc;
  int iterations = 0;
  bool converged = true;
};

struct Percentiles {
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

struct RadiusSummary {
  Percentiles raw;
  Percentiles normalized;
  int converged_count = 0;
};

struct SurveyResult {
  std::vector<RobustnessRecord> records;
  int non_converged = 0;
  double latent_norm_mean = 1.0;  // exact E||z||
  double image_norm_mean = 1.0;   // Monte Carlo E||g(z)||
  std::optional<RadiusSummary> latent;
  std::optional<RadiusSummary> in_distribution;
  std::optional<RadiusSummary> unconstrained;

  std::string to_csv() const;
  nlohmann::ordered_json summary_json() const;
};

namespace detail {

// Order statistic covering fraction q of the sorted sample (smallest index
// with at least q*n mass at or below it).
inline double percentile(const std::vector<double>& sorted, double q) {
  const double n = static_cast<double>(sorted.size());
  auto index =
      static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  index = std::min(std::max<std::size_t>(index, 1), sorted.size());
  return sorted[index - 1];
}

inline std::optional<RadiusSummary> summarize_radii(
    const std::vector<RobustnessRecord>& records,
    std::optional<double> RobustnessRecord::*field, bool requested,
    double norm_mean) {
  if (!requested) return std::nullopt;
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& record : records) {
    if (const auto& v = record.*field) values.push_back(*v);
  }
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  RadiusSummary summary;
  summary.converged_count = static_cast<int>(values.size());
  summary.raw = {percentile(values, 0.25), percentile(values, 0.50),
                 percentile(values, 0.75)};
  summary.normalized = {summary.raw.p25 / norm_mean, summary.raw.p50 / norm_mean,
                        summary.raw.p75 / norm_mean};
  return summary;
}

inline std::string format_number(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6g", v);
  return buffer;
}

}  // namespace detail

// Monte Carlo estimate of E||g(z)|| over the dedicated norm stream.
inline double estimate_image_norm_mean(const Generator& g, int samples,
                                       std::uint64_t seed) {
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    SubstreamRng rng(seed, Stream::kNormEstimate,
                     static_cast<std::uint64_t>(i));
    total += detail::norm2(g.forward(rng.normal_vector(g.latent_dim())));
  }
  return total / samples;
}

inline SurveyResult robustness_survey(const Classifier& f, const Generator& g,
                                      int n, const SurveySelection& which,
                                      const AttackConfig& cfg,
                                      std::uint64_t seed, int threads = 1) {
  if (n < 1) throw std::invalid_argument("survey needs n >= 1");
  cfg.validate();

  SurveyResult result;
  result.records.resize(n);
  result.latent_norm_mean = gaussian_norm_mean(g.latent_dim());
  result.image_norm_mean = estimate_image_norm_mean(g, 10000, seed);

  detail::parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    RobustnessRecord record;
    record.sample_index = static_cast<int>(i);
    record.z = sample_latent_point(g.latent_dim(), seed, Stream::kLatent, i);
    const Vec x = g.forward(record.z);
    record.label = f.classify(x);

    AttackConfig local = cfg;
    local.seed = SubstreamRng(seed, Stream::kAttack, i).next_u64();

    if (which.latent) {
      const AttackOutcome out = latent_robustness(f, g, record.z, local);
      record.iterations = std::max(record.iterations, out.iterations);
      if (out.converged) {
        record.r_z = out.radius;
      } else {
        record.converged = false;
      }
    }
    if (which.in_distribution) {
      const AttackOutcome out = in_distribution_robustness(f, g, record.z, local);
      record.iterations = std::max(record.iterations, out.iterations);
      if (out.converged) {
        record.r_in = out.radius;
      } else {
        record.converged = false;
      }
    }
    if (which.unconstrained) {
      const AttackOutcome out = unconstrained_robustness(f, x, local);
      record.iterations = std::max(record.iterations, out.iterations);
      if (out.converged) {
        record.r_unc = out.radius;
      } else {
        record.converged = false;
      }
    }
    result.records[i] = std::move(record);
  });

  for (const auto& record : result.records) {
    if (!record.converged) ++result.non_converged;
  }
  result.latent = detail::summarize_radii(result.records, &RobustnessRecord::r_z,
                                          which.latent,
                                          result.latent_norm_mean);
  result.in_distribution =
      detail::summarize_radii(result.records, &RobustnessRecord::r_in,
                              which.in_distribution, result.image_norm_mean);
  result.unconstrained =
      detail::summarize_radii(result.records, &RobustnessRecord::r_unc,
                              which.unconstrained, result.image_norm_mean);
  return result;
}

inline std::string SurveyResult::to_csv() const {
  std::string out = "sample_index,label,r_z,r_in,r_unc,iterations,converged\n";
  for (const auto& record : records) {
    out += std::to_string(record.sample_index);
    out += ',';
    out += std::to_string(record.label);
    out += ',';
    if (record.r_z) out += detail::format_number(*record.r_z);
    out += ',';
    if (record.r_in) out += detail::format_number(*record.r_in);
    out += ',';
    if (record.r_unc) out += detail::format_number(*record.r_unc);
    out += ',';
    out += std::to_string(record.iterations);
    out += ',';
    out += record.converged ? "true" : "false";
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json SurveyResult::summary_json() const {
  const auto block = [](const std::optional<RadiusSummary>& summary) {
    nlohmann::ordered_json doc;
    if (!summary) return doc = nullptr, doc;
    doc["raw"] = {{"p25", summary->raw.p25},
                  {"p50", summary->raw.p50},
                  {"p75", summary->raw.p75}};
    doc["normalized"] = {{"p25", summary->normalized.p25},
                         {"p50", summary->normalized.p50},
                         {"p75", summary->normalized.p75}};
    doc["converged_count"] = summary->converged_count;
    return doc;
  };
  nlohmann::ordered_json doc;
  doc["samples"] = records.size();
  doc["non_converged"] = non_converged;
  doc["latent_norm_mean"] = latent_norm_mean;
  doc["image_norm_mean"] = image_norm_mean;
  doc["r_z"] = block(latent);
  doc["r_in"] = block(in_distribution);
  doc["r_unc"] = block(unconstrained);
  return doc;
}

}  // namespace isobound
