#pragma once

// Experiment orchestration: JSON experiment configs, the delta-grid
// certificate search for an image-space robustness radius, full report
// assembly, and the plot-ready CSV tables.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "isobound/attacks.hpp"
#include "isobound/bounds.hpp"
#include "isobound/models.hpp"
#include "isobound/modulus_estimate.hpp"
#include "isobound/oracle.hpp"

namespace isobound {

class InfeasibleTargetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Certificate search over a delta grid.
//
// For each latent radius delta, the general fooling bound caps how much
// probability mass can resist a delta-sized latent move; whatever remains of
// the target percentile becomes the failure budget for the empirical
// displacement suprema, and the smallest image radius honoring that budget
// wins.  Any grid point yields a valid certificate, so the minimum over the
// grid is reported.
// ---------------------------------------------------------------------------

struct CertificateConfig {
  std::vector<double> delta_grid;
  double target_percentile = 0.25;
  int suprema_samples = 100;
  InnerOptConfig inner_opt;
  std::uint64_t seed = 0;

  void validate() const {
    if (delta_grid.empty()) {
      throw std::invalid_argument("certificate delta grid is empty");
    }
    for (std::size_t i = 0; i < delta_grid.size(); ++i) {
      if (!(delta_grid[i] > 0.0)) {
        throw std::invalid_argument("certificate deltas must be positive");
      }
      if (i > 0 && !(delta_grid[i] > delta_grid[i - 1])) {
        throw std::invalid_argument(
            "certificate delta grid must be strictly increasing");
      }
    }
    if (!(target_percentile > 0.0 && target_percentile < 1.0)) {
      throw std::invalid_argument("target percentile must lie in (0, 1)");
    }
    if (suprema_samples < 10) {
      throw std::invalid_argument("certificate needs >= 10 suprema samples");
    }
    inner_opt.validate();
  }
};

struct CertificateGridPoint {
  double delta = 0.0;
  double unaffected_mass = 0.0;  // 1 - general fooling bound at delta
  double budget = 0.0;           // target percentile minus unaffected mass
  bool feasible = false;
  double alpha = std::numeric_limits<double>::infinity();
};

struct CertificateResult {
  double alpha = std::numeric_limits<double>::infinity();
  double chosen_delta = std::numeric_limits<double>::quiet_NaN();
  std::vector<CertificateGridPoint> grid;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["alpha"] = alpha;
    doc["chosen_delta"] = chosen_delta;
    doc["grid"] = nlohmann::ordered_json::array();
    for (const auto& point : grid) {
      doc["grid"].push_back({{"delta", point.delta},
                             {"unaffected_mass", point.unaffected_mass},
                             {"budget", point.budget},
                             {"feasible", point.feasible},
                             {"alpha", point.alpha}});
    }
    return doc;
  }
};

inline CertificateResult certified_radius_search(const Generator& generator,
                                                 const ClassDistribution& dist,
                                                 const CertificateConfig& cfg) {
  cfg.validate();
  const Modulus identity = Modulus::identity();
  CertificateResult result;
  for (const double delta : cfg.delta_grid) {
    CertificateGridPoint point;
    point.delta = delta;
    point.unaffected_mass =
        1.0 - fooling_prob_general(dist, identity, delta);
    point.budget = cfg.target_percentile - point.unaffected_mass;
    if (point.budget > 0.0) {
      std::vector<double> suprema = displacement_suprema(
          generator, delta, cfg.suprema_samples, cfg.inner_opt, cfg.seed);
      std::sort(suprema.begin(), suprema.end());
      const double cap = point.budget * suprema.size();
      // Smallest observed supremum whose upper tail fits in the budget.
      double alpha =
          std::nextafter(suprema.back(), std::numeric_limits<double>::infinity());
      for (std::size_t j = 0; j < suprema.size(); ++j) {
        const auto first =
            std::lower_bound(suprema.begin(), suprema.end(), suprema[j]);
        const auto count_ge = suprema.end() - first;
        if (static_cast<double>(count_ge) <= cap) {
          alpha = suprema[j];
          break;
        }
      }
      point.feasible = true;
      point.alpha = alpha;
      if (alpha < result.alpha) {
        result.alpha = alpha;
        result.chosen_delta = delta;
      }
    }
    result.grid.push_back(point);
  }
  if (!std::isfinite(result.chosen_delta)) {
    throw InfeasibleTargetError(
        "no delta in the grid leaves a positive failure budget for the "
        "target percentile");
  }
  return result;
}

inline ClassDistribution distribution_from_doubles(
    const std::vector<double>& values) {
  std::vector<Probability> probs;
  probs.reserve(values.size());
  for (const double v : values) probs.emplace_back(v);
  return ClassDistribution(std::move(probs));
}

// Empirical class-mass estimate for the composed classifier, used when a
// config does not state the distribution explicitly.
inline ClassDistribution mc_class_distribution(const Classifier& f,
                                               const Generator& g, int samples,
                                               std::uint64_t seed) {
  if (samples < 1) {
    throw std::invalid_argument("class-mass estimate needs samples >= 1");
  }
  std::vector<double> mass(f.num_classes(), 0.0);
  for (int i = 0; i < samples; ++i) {
    SubstreamRng rng(seed, Stream::kEval, static_cast<std::uint64_t>(i));
    const Vec z = rng.normal_vector(g.latent_dim());
    mass[f.classify(g.forward(z)) - 1] += 1.0;
  }
  for (auto& m : mass) m /= samples;
  return distribution_from_doubles(mass);
}

// ---------------------------------------------------------------------------
// Bound requests: one schema shared by the CLI flags and experiment configs.
// ---------------------------------------------------------------------------

struct BoundRequest {
  std::string kind;  // general | balanced | equiprobable | checkerboard |
                     // expectation | expectation-equiprobable | invert
  std::vector<double> probabilities;
  int classes = 0;
  double eta = std::numeric_limits<double>::quiet_NaN();
  double target = std::numeric_limits<double>::quiet_NaN();
  double delta_w = 0.0;
  int dim = 0;            // checkerboard lattice dimension
  int normalize_dim = 0;  // divide radius-valued results by E||z|| in this d
  bool raw_eta_decay = false;
  std::string omega_kind = "identity";  // identity | linear | estimated
  double omega_scale = 1.0;
  double omega_offset = 0.0;

  static BoundRequest from_json(const nlohmann::json& doc) {
    BoundRequest req;
    req.kind = doc.at("kind").get<std::string>();
    req.probabilities =
        doc.value("probabilities", std::vector<double>{});
    req.classes = doc.value("classes", 0);
    req.eta = doc.value("eta", req.eta);
    req.target = doc.value("target", req.target);
    req.delta_w = doc.value("delta_w", 0.0);
    req.dim = doc.value("dim", 0);
    req.normalize_dim = doc.value("normalize_dim", 0);
    req.raw_eta_decay = doc.value("raw_eta_decay", false);
    req.omega_kind = doc.value("omega", std::string("identity"));
    req.omega_scale = doc.value("omega_scale", 1.0);
    req.omega_offset = doc.value("omega_offset", 0.0);
    return req;
  }
};

namespace detail {

inline ClassDistribution distribution_for(const BoundRequest& req) {
  if (!req.probabilities.empty()) {
    return distribution_from_doubles(req.probabilities);
  }
  return ClassDistribution::equiprobable(req.classes > 0 ? req.classes : 2);
}

inline Modulus modulus_for(const BoundRequest& req,
                           const std::optional<ModulusEstimate>& estimate) {
  if (req.omega_kind == "identity") return Modulus::identity();
  if (req.omega_kind == "linear") {
    return Modulus::linear(req.omega_scale, req.omega_offset);
  }
  if (req.omega_kind == "estimated") {
    if (!estimate) {
      throw std::invalid_argument(
          "omega=estimated needs a modulus estimation stage");
    }
    return estimate->to_modulus();
  }
  throw std::invalid_argument("unknown omega kind: " + req.omega_kind);
}

inline double require_eta(const BoundRequest& req) {
  if (!std::isfinite(req.eta)) {
    throw std::invalid_argument("bound kind '" + req.kind +
                                "' needs --eta / \"eta\"");
  }
  return req.eta;
}

}  // namespace detail

inline BoundReport evaluate_bound_request(
    const BoundRequest& req,
    const std::optional<ModulusEstimate>& estimate = std::nullopt) {
  const auto variant = req.raw_eta_decay
                           ? EquiprobableVariant::kRawEtaInClassFactor
                           : EquiprobableVariant::kInverseRadiusBothFactors;
  BoundReport report;
  bool radius_valued = false;

  if (req.kind == "general") {
    report.kind = BoundKind::kGeneral;
    report.value = fooling_prob_general(detail::distribution_for(req),
                                        detail::modulus_for(req, estimate),
                                        detail::require_eta(req));
  } else if (req.kind == "balanced") {
    report.kind = BoundKind::kBalanced;
    report.value = fooling_prob_balanced(detail::modulus_for(req, estimate),
                                         detail::require_eta(req));
  } else if (req.kind == "equiprobable") {
    report.kind = BoundKind::kEquiprobable;
    report.value = fooling_prob_equiprobable(
        req.classes, detail::modulus_for(req, estimate),
        detail::require_eta(req), variant);
  } else if (req.kind == "checkerboard") {
    report.kind = BoundKind::kCheckerboard;
    report.value = checkerboard_bound(req.dim, detail::require_eta(req));
  } else if (req.kind == "expectation") {
    report.kind = BoundKind::kExpectation;
    report.value = expected_robustness_bound(
        detail::distribution_for(req), detail::modulus_for(req, estimate),
        req.delta_w);
    radius_valued = true;
  } else if (req.kind == "expectation-equiprobable") {
    report.kind = BoundKind::kExpectationEquiprobable;
    report.value = expected_robustness_bound_equiprobable(
        req.classes, detail::modulus_for(req, estimate), req.delta_w);
    radius_valued = true;
  } else if (req.kind == "invert") {
    report.kind = BoundKind::kInvertedRadius;
    if (!std::isfinite(req.target)) {
      throw std::invalid_argument("bound kind 'invert' needs a target");
    }
    report.value = invert_bound_for_radius(detail::distribution_for(req),
                                           detail::modulus_for(req, estimate),
                                           req.target);
    radius_valued = true;
  } else {
    throw std::invalid_argument("unknown bound kind: " + req.kind);
  }

  if (req.normalize_dim > 0) {
    if (!radius_valued) {
      throw std::invalid_argument(
          "only radius-valued bounds can be normalized by E||z||");
    }
    const double mean = gaussian_norm_mean(req.normalize_dim);
    report.value = report.value / mean;
    report.normalization = Normalization{mean, mean};
  }

  nlohmann::ordered_json inputs;
  inputs["kind"] = req.kind;
  if (!req.probabilities.empty()) inputs["probabilities"] = req.probabilities;
  if (req.classes > 0) inputs["classes"] = req.classes;
  if (std::isfinite(req.eta)) inputs["eta"] = req.eta;
  if (std::isfinite(req.target)) inputs["target"] = req.target;
  if (req.delta_w != 0.0) inputs["delta_w"] = req.delta_w;
  if (req.dim > 0) inputs["dim"] = req.dim;
  if (req.normalize_dim > 0) inputs["normalize_dim"] = req.normalize_dim;
  if (req.raw_eta_decay) inputs["raw_eta_decay"] = true;
  inputs["omega"] = req.omega_kind;
  if (req.omega_kind == "linear") {
    inputs["omega_scale"] = req.omega_scale;
    inputs["omega_offset"] = req.omega_offset;
  }
  report.inputs = std::move(inputs);
  return report;
}

// ---------------------------------------------------------------------------
// Experiment configs and reports.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::shared_ptr<Generator> generator;
  std::shared_ptr<Classifier> classifier;
  std::vector<BoundRequest> bounds;

  struct AttackRequest {
    bool enabled = false;
    SurveySelection which;
    int samples = 100;
    AttackConfig config;
  } attack;

  struct ModulusRequest {
    bool enabled = false;
    std::vector<double> delta_grid;
    double kappa = 0.05;
    int samples_per_point = 50;
    InnerOptConfig inner_opt;
  } modulus;

  struct CertificateRequest {
    bool enabled = false;
    std::vector<double> delta_grid;
    int suprema_samples = 100;
    std::vector<double> probabilities;  // empty: estimate from the classifier
    InnerOptConfig inner_opt;
  } certificate;

  double target_percentile = 0.25;
  std::uint64_t seed = 0;
  int threads = 1;
  nlohmann::ordered_json echo;

  static ExperimentConfig from_json(
      const nlohmann::json& doc,
      const std::filesystem::path& base_dir = ".");
};

namespace detail {

inline nlohmann::json resolve_model_doc(const nlohmann::json& node,
                                        const std::filesystem::path& base_dir) {
  if (node.is_object() && node.contains("file")) {
    const std::filesystem::path path =
        base_dir / node.at("file").get<std::string>();
    if (!std::filesystem::exists(path)) {
      throw std::invalid_argument("model file not found: " + path.string());
    }
    std::ifstream in(path);
    nlohmann::json doc;
    in >> doc;
    return doc;
  }
  return node;
}

inline InnerOptConfig inner_opt_from_json(const nlohmann::json& doc) {
  InnerOptConfig opt;
  opt.steps = doc.value("steps", opt.steps);
  opt.restarts = doc.value("restarts", opt.restarts);
  opt.step_size = doc.value("step_size", opt.step_size);
  opt.allow_finite_difference =
      doc.value("allow_finite_difference", opt.allow_finite_difference);
  opt.finite_difference_scale =
      doc.value("finite_difference_scale", opt.finite_difference_scale);
  opt.threads = doc.value("threads", opt.threads);
  return opt;
}

inline AttackConfig attack_config_from_json(const nlohmann::json& doc) {
  AttackConfig cfg;
  cfg.max_iters = doc.value("max_iters", cfg.max_iters);
  cfg.overshoot = doc.value("overshoot", cfg.overshoot);
  cfg.bisection_tol = doc.value("bisection_tol", cfg.bisection_tol);
  cfg.restarts = doc.value("restarts", cfg.restarts);
  cfg.step_size = doc.value("step_size", cfg.step_size);
  return cfg;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(
    const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  cfg.echo = doc;
  if (!doc.contains("seed")) {
    throw std::invalid_argument("experiment config must state a seed");
  }
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.target_percentile = doc.value("target_percentile", 0.25);
  if (!(cfg.target_percentile > 0.0 && cfg.target_percentile < 1.0)) {
    throw std::invalid_argument("target_percentile must lie in (0, 1)");
  }
  cfg.threads = doc.value("threads", 1);

  cfg.generator =
      generator_from_json(detail::resolve_model_doc(doc.at("generator"), base_dir));
  if (doc.contains("classifier")) {
    cfg.classifier = classifier_from_json(
        detail::resolve_model_doc(doc.at("classifier"), base_dir));
  }

  for (const auto& entry : doc.value("bounds", nlohmann::json::array())) {
    cfg.bounds.push_back(BoundRequest::from_json(entry));
  }

  if (doc.contains("attack")) {
    const auto& node = doc.at("attack");
    cfg.attack.enabled = true;
    cfg.attack.samples = node.value("samples", 100);
    const auto radii =
        node.value("radii", std::vector<std::string>{"latent"});
    cfg.attack.which = SurveySelection{false, false, false};
    for (const auto& name : radii) {
      if (name == "latent") {
        cfg.attack.which.latent = true;
      } else if (name == "in_distribution") {
        cfg.attack.which.in_distribution = true;
      } else if (name == "unconstrained") {
        cfg.attack.which.unconstrained = true;
      } else {
        throw std::invalid_argument("unknown attack radius: " + name);
      }
    }
    cfg.attack.config = detail::attack_config_from_json(node);
  }

  if (doc.contains("modulus")) {
    const auto& node = doc.at("modulus");
    cfg.modulus.enabled = true;
    cfg.modulus.delta_grid = node.at("delta_grid").get<std::vector<double>>();
    cfg.modulus.kappa = node.value("kappa", 0.05);
    cfg.modulus.samples_per_point = node.value("samples_per_point", 50);
    cfg.modulus.inner_opt = detail::inner_opt_from_json(
        node.value("inner_opt", nlohmann::json::object()));
  }

  if (doc.contains("certificate")) {
    const auto& node = doc.at("certificate");
    cfg.certificate.enabled = true;
    cfg.certificate.delta_grid =
        node.at("delta_grid").get<std::vector<double>>();
    cfg.certificate.suprema_samples = node.value("suprema_samples", 100);
    cfg.certificate.probabilities =
        node.value("probabilities", std::vector<double>{});
    cfg.certificate.inner_opt = detail::inner_opt_from_json(
        node.value("inner_opt", nlohmann::json::object()));
  }
  return cfg;
}

struct ComparisonRow {
  std::string bound_label;
  double bound_value = 0.0;
  std::string empirical_label;
  double empirical_value = 0.0;
  double percentile = 0.0;
};

struct ExperimentReport {
  nlohmann::ordered_json config_echo;
  Normalization normalization{1.0, 1.0};
  std::vector<BoundReport> bound_rows;
  std::optional<ModulusEstimate> modulus;
  std::optional<SurveyResult> survey;
  std::optional<CertificateResult> certificate;
  std::vector<ComparisonRow> comparisons;
  int non_converged = 0;
  double wall_clock_seconds = 0.0;

  // Timing is reported but excluded when comparing reports for bit-identical
  // reproducibility.
  nlohmann::ordered_json to_json(bool include_timing = true) const {
    nlohmann::ordered_json doc;
    doc["config"] = config_echo;
    doc["normalization"] = {{"latent_norm_mean", normalization.latent_norm_mean},
                            {"image_norm_mean", normalization.image_norm_mean}};
    doc["bounds"] = nlohmann::ordered_json::array();
    for (const auto& row : bound_rows) doc["bounds"].push_back(row.to_json());
    doc["modulus"] = modulus ? modulus->to_json()
                             : nlohmann::ordered_json(nullptr);
    doc["survey"] = survey ? survey->summary_json()
                           : nlohmann::ordered_json(nullptr);
    doc["certificate"] = certificate ? certificate->to_json()
                                     : nlohmann::ordered_json(nullptr);
    doc["comparisons"] = nlohmann::ordered_json::array();
    for (const auto& row : comparisons) {
      doc["comparisons"].push_back({{"bound", row.bound_label},
                                    {"bound_value", row.bound_value},
                                    {"empirical", row.empirical_label},
                                    {"empirical_value", row.empirical_value},
                                    {"percentile", row.percentile}});
    }
    doc["non_converged"] = non_converged;
    if (include_timing) doc["wall_clock_seconds"] = wall_clock_seconds;
    return doc;
  }
};

// Percentile of one radius column of a survey at an arbitrary level,
// optionally divided by the matching normalization constant.
inline std::optional<double> survey_radius_percentile(
    const SurveyResult& survey, std::optional<double> RobustnessRecord::*field,
    double q, bool normalized, double norm_mean) {
  std::vector<double> values;
  for (const auto& record : survey.records) {
    if (const auto& v = record.*field) values.push_back(*v);
  }
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const double raw = detail::percentile(values, q);
  return normalized ? raw / norm_mean : raw;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config_echo = cfg.echo;
  std::vector<std::string> failures;
  const auto stage = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      failures.push_back(name + ": " + e.what());
    }
  };

  const Generator& g = *cfg.generator;

  stage("normalization", [&] {
    report.normalization.latent_norm_mean = gaussian_norm_mean(g.latent_dim());
    report.normalization.image_norm_mean =
        estimate_image_norm_mean(g, 10000, cfg.seed);
  });

  if (cfg.modulus.enabled) {
    stage("modulus", [&] {
      report.modulus = fit_modulus_table(
          g, cfg.modulus.delta_grid, cfg.modulus.kappa,
          cfg.modulus.samples_per_point, cfg.modulus.inner_opt, cfg.seed);
    });
  }

  stage("bounds", [&] {
    for (const auto& request : cfg.bounds) {
      report.bound_rows.push_back(
          evaluate_bound_request(request, report.modulus));
    }
  });

  if (cfg.attack.enabled) {
    stage("survey", [&] {
      if (!cfg.classifier) {
        throw std::invalid_argument("attack stage needs a classifier");
      }
      AttackConfig attack_cfg = cfg.attack.config;
      attack_cfg.seed = cfg.seed;
      report.survey = robustness_survey(*cfg.classifier, g,
                                        cfg.attack.samples, cfg.attack.which,
                                        attack_cfg, cfg.seed, cfg.threads);
      report.non_converged = report.survey->non_converged;
    });
  }

  if (cfg.certificate.enabled) {
    stage("certificate", [&] {
      CertificateConfig cert;
      cert.delta_grid = cfg.certificate.delta_grid;
      cert.target_percentile = cfg.target_percentile;
      cert.suprema_samples = cfg.certificate.suprema_samples;
      cert.inner_opt = cfg.certificate.inner_opt;
      cert.seed = cfg.seed;
      const ClassDistribution dist =
          cfg.certificate.probabilities.empty()
              ? [&] {
                  if (!cfg.classifier) {
                    throw std::invalid_argument(
                        "certificate stage needs a classifier or explicit "
                        "probabilities");
                  }
                  return mc_class_distribution(*cfg.classifier, g, 10000,
                                               cfg.seed);
                }()
              : distribution_from_doubles(cfg.certificate.probabilities);
      report.certificate = certified_radius_search(g, dist, cert);
    });
  }

  stage("comparisons", [&] {
    if (!report.survey) return;
    const auto& survey = *report.survey;
    for (const auto& row : report.bound_rows) {
      if (row.kind != BoundKind::kInvertedRadius) continue;
      const bool normalized = row.normalization.has_value();
      const auto empirical = survey_radius_percentile(
          survey, &RobustnessRecord::r_z, cfg.target_percentile, normalized,
          survey.latent_norm_mean);
      if (!empirical) continue;
      ComparisonRow pair;
      pair.bound_label = bound_kind_name(row.kind);
      pair.bound_value = row.value;
      pair.empirical_label = normalized ? "r_z_normalized" : "r_z";
      pair.empirical_value = *empirical;
      pair.percentile = cfg.target_percentile;
      report.comparisons.push_back(pair);
    }
    if (report.certificate) {
      const auto empirical = survey_radius_percentile(
          survey, &RobustnessRecord::r_in, cfg.target_percentile, false, 1.0);
      if (empirical) {
        ComparisonRow pair;
        pair.bound_label = "certified_radius";
        pair.bound_value = report.certificate->alpha;
        pair.empirical_label = "r_in";
        pair.empirical_value = *empirical;
        pair.percentile = cfg.target_percentile;
        report.comparisons.push_back(pair);
      }
    }
  });

  if (!failures.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (i) joined += "; ";
      joined += failures[i];
    }
    throw ExperimentError(joined);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Plot-ready checkerboard comparison table.
// ---------------------------------------------------------------------------

struct CheckerboardTable {
  struct Row {
    double eta = 0.0;
    double general_bound = 0.0;
    double checkerboard_bound = 0.0;
    double mc_fraction = 0.0;
  };
  std::vector<Row> rows;

  std::string to_csv() const {
    std::string out = "eta,general_bound,checkerboard_bound,mc_fraction\n";
    for (const auto& row : rows) {
      out += detail::format_number(row.eta);
      out += ',';
      out += detail::format_number(row.general_bound);
      out += ',';
      out += detail::format_number(row.checkerboard_bound);
      out += ',';
      out += detail::format_number(row.mc_fraction);
      out += '\n';
    }
    return out;
  }
};

// The two-class general bound, the lattice-specific lower bound, and the
// Monte Carlo fooling fraction under the exact per-coordinate distance, per
// eta.  Samples are shared across rows so the fractions are monotone.
inline CheckerboardTable checkerboard_table(int dim,
                                            const std::vector<double>& etas,
                                            int samples, std::uint64_t seed) {
  const IdentityGenerator generator(dim);
  const CheckerboardLatentClassifier classifier(dim);
  const auto dist = ClassDistribution::equiprobable(2);
  const auto identity = Modulus::identity();
  CheckerboardTable table;
  for (const double eta : etas) {
    CheckerboardTable::Row row;
    row.eta = eta;
    row.general_bound = fooling_prob_general(dist, identity, eta);
    row.checkerboard_bound = checkerboard_bound(dim, eta);
    row.mc_fraction =
        mc_fooling_fraction(
            classifier, generator, eta, samples,
            [](const Classifier&, const Generator&, const Vec& z) {
              return checkerboard_latent_distance(z);
            },
            seed)
            .fraction;
    table.rows.push_back(row);
  }
  return table;
}

// "start:stop:step" (inclusive stop) or a comma-separated list.
inline std::vector<double> parse_value_grid(const std::string& spec) {
  std::vector<double> values;
  const auto parse_one = [](const std::string& text) {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument("bad number in grid spec: " + text);
    }
    return v;
  };
  if (spec.find(':') != std::string::npos) {
    std::istringstream in(spec);
    std::string start_s, stop_s, step_s;
    if (!std::getline(in, start_s, ':') || !std::getline(in, stop_s, ':') ||
        !std::getline(in, step_s)) {
      throw std::invalid_argument("grid spec must be start:stop:step");
    }
    const double start = parse_one(start_s);
    const double stop = parse_one(stop_s);
    const double step = parse_one(step_s);
    if (!(step > 0.0) || stop < start) {
      throw std::invalid_argument("grid spec needs step > 0 and stop >= start");
    }
    for (int i = 0;; ++i) {
      const double v = start + i * step;
      if (v > stop + 1e-9 * std::max(1.0, std::abs(stop))) break;
      values.push_back(v);
    }
  } else {
    std::istringstream in(spec);
    std::string token;
    while (std::getline(in, token, ',')) {
      if (!token.empty()) values.push_back(parse_one(token));
    }
  }
  if (values.empty()) {
    throw std::invalid_argument("empty grid spec: " + spec);
  }
  return values;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open output file: " + path.string());
  }
  out << content;
  if (!out) {
    throw std::runtime_error("failed writing output file: " + path.string());
  }
}

}  // namespace isobound
