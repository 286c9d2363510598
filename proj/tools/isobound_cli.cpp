// Command-line front end: evaluate or invert fooling bounds, estimate a
// modulus of continuity, run attack surveys, execute full experiment
// configs, emit the checkerboard comparison table, and self-check against
// built-in oracles.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "isobound/harness.hpp"

namespace {

using isobound::Vec;

nlohmann::json load_json_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw std::invalid_argument("file not found: " + path);
  }
  std::ifstream in(path);
  nlohmann::json doc;
  in >> doc;
  return doc;
}

std::shared_ptr<isobound::Generator> load_generator(const std::string& path) {
  return isobound::generator_from_json(load_json_file(path));
}

std::shared_ptr<isobound::Classifier> load_classifier(const std::string& path) {
  return isobound::classifier_from_json(load_json_file(path));
}

isobound::SurveySelection parse_radii(const std::vector<std::string>& names) {
  isobound::SurveySelection which{false, false, false};
  for (const auto& name : names) {
    if (name == "latent") {
      which.latent = true;
    } else if (name == "in_distribution") {
      which.in_distribution = true;
    } else if (name == "unconstrained") {
      which.unconstrained = true;
    } else {
      throw std::invalid_argument("unknown radius kind: " + name);
    }
  }
  if (!which.latent && !which.in_distribution && !which.unconstrained) {
    throw std::invalid_argument("no radius kind selected");
  }
  return which;
}

// --- bound ------------------------------------------------------------------

struct BoundArgs {
  isobound::BoundRequest request;
  std::string out;
};

void run_bound(const BoundArgs& args) {
  const auto report = isobound::evaluate_bound_request(args.request);
  std::printf("%.6g\n", report.value);
  if (!args.out.empty()) {
    isobound::write_text_file(args.out, report.to_json().dump(2) + "\n");
  }
}

// --- estimate-omega ---------------------------------------------------------

struct EstimateArgs {
  std::string generator_path;
  std::string deltas;
  double kappa = 0.05;
  int samples = 50;
  std::uint64_t seed = 0;
  isobound::InnerOptConfig inner_opt;
  std::string out;
};

void run_estimate(const EstimateArgs& args) {
  const auto generator = load_generator(args.generator_path);
  const auto grid = isobound::parse_value_grid(args.deltas);
  const auto estimate = isobound::fit_modulus_table(
      *generator, grid, args.kappa, args.samples, args.inner_opt, args.seed);
  std::printf("delta,omega\n");
  for (std::size_t i = 0; i < estimate.delta_grid.size(); ++i) {
    std::printf("%.6g,%.6g\n", estimate.delta_grid[i], estimate.values[i]);
  }
  if (!args.out.empty()) {
    isobound::write_text_file(args.out, estimate.to_json().dump(2) + "\n");
  }
}

// --- attack -----------------------------------------------------------------

struct AttackArgs {
  std::string generator_path;
  std::string classifier_path;
  int samples = 100;
  std::vector<std::string> radii = {"latent"};
  std::uint64_t seed = 0;
  int threads = 1;
  isobound::AttackConfig config;
  std::string out;
};

void run_attack(const AttackArgs& args) {
  const auto generator = load_generator(args.generator_path);
  const auto classifier = load_classifier(args.classifier_path);
  const auto which = parse_radii(args.radii);
  const auto survey =
      isobound::robustness_survey(*classifier, *generator, args.samples, which,
                                  args.config, args.seed, args.threads);
  std::printf("%s\n", survey.summary_json().dump(2).c_str());
  if (!args.out.empty()) {
    isobound::write_text_file(args.out, survey.to_csv());
  }
}

// --- experiment -------------------------------------------------------------

struct ExperimentArgs {
  std::string config_path;
  std::string out;
};

void run_experiment_command(const ExperimentArgs& args) {
  const auto doc = load_json_file(args.config_path);
  const auto base_dir =
      std::filesystem::path(args.config_path).parent_path();
  const auto cfg = isobound::ExperimentConfig::from_json(
      doc, base_dir.empty() ? "." : base_dir);
  const auto report = isobound::run_experiment(cfg);
  std::printf("%s\n", report.to_json().dump(2).c_str());
  if (!args.out.empty()) {
    isobound::write_text_file(args.out, report.to_json().dump(2) + "\n");
  }
}

// --- checkerboard -----------------------------------------------------------

struct CheckerboardArgs {
  int dim = 0;
  std::string etas;
  int samples = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

void run_checkerboard(const CheckerboardArgs& args) {
  const auto etas = isobound::parse_value_grid(args.etas);
  const auto table =
      isobound::checkerboard_table(args.dim, etas, args.samples, args.seed);
  const std::string csv = table.to_csv();
  if (args.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    isobound::write_text_file(args.out, csv);
  }
}

// --- selftest ---------------------------------------------------------------

int run_selftest(std::uint64_t seed) {
  int failures = 0;
  const auto check = [&](const std::string& name,
                         const std::function<bool()>& body) {
    bool ok = false;
    std::string detail;
    try {
      ok = body();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    if (ok) {
      std::printf("PASS %s\n", name.c_str());
    } else {
      ++failures;
      std::printf("FAIL %s%s%s\n", name.c_str(), detail.empty() ? "" : ": ",
                  detail.c_str());
    }
  };

  check("balanced bound frozen value", [] {
    return std::abs(isobound::fooling_prob_balanced(
               isobound::Modulus::identity(), 2.0) -
                    0.8303823762) < 1e-9;
  });

  check("half-space CDF is the tight two-class bound", [] {
    const auto dist = isobound::ClassDistribution::equiprobable(2);
    const auto identity = isobound::Modulus::identity();
    for (const double eta : {0.2, 0.7, 1.3, 2.4}) {
      const double exact = isobound::exact_fooling_cdf_halfspace(eta);
      const double bound = isobound::fooling_prob_general(dist, identity, eta);
      if (std::abs(exact - bound) > 1e-9) return false;
    }
    return true;
  });

  check("CDF sandwich brackets the CDF", [] {
    for (double x = 0.0; x <= 6.0; x += 0.25) {
      const auto envelope = isobound::cdf_sandwich(x);
      const double phi = isobound::std_normal_cdf(x);
      if (envelope.lower > phi + 1e-12) return false;
      if (envelope.upper < phi - 1e-12) return false;
    }
    return std::abs(isobound::cdf_sandwich(0.0).lower - 0.5) < 1e-12;
  });

  check("checkerboard Monte Carlo dominates the lattice bound", [seed] {
    const auto mc = isobound::mc_fooling_fraction(
        isobound::CheckerboardLatentClassifier(5),
        isobound::IdentityGenerator(5), 0.2, 4000,
        [](const isobound::Classifier&, const isobound::Generator&,
           const Vec& z) { return isobound::checkerboard_latent_distance(z); },
        seed);
    const double bound = isobound::checkerboard_bound(5, 0.2);
    return mc.fraction >= bound - 3.0 * mc.std_error;
  });

  check("grid oracle recovers the half-space distance", [] {
    auto gen = std::make_shared<isobound::IdentityGenerator>(1);
    const isobound::HalfSpaceLatentClassifier f({1.0}, 0.0, gen);
    isobound::GridSpec grid;
    grid.extent = 2.0;
    grid.resolution = 512;
    const auto result =
        isobound::brute_force_latent_robustness(f, *gen, {0.7}, grid);
    return std::abs(result.radius - 0.7) <= result.grid_error + 1e-12;
  });

  check("latent attack matches the analytic half-space radius", [seed] {
    auto gen = std::make_shared<isobound::IdentityGenerator>(10);
    Vec e1(10, 0.0);
    e1[0] = 1.0;
    const isobound::HalfSpaceLatentClassifier f(e1, 0.0, gen);
    isobound::AttackConfig cfg;
    for (int i = 0; i < 5; ++i) {
      const Vec z = isobound::sample_latent_point(10, seed, i);
      if (std::abs(z[0]) < 1e-3) continue;
      const auto out = isobound::latent_robustness(f, *gen, z, cfg);
      if (!out.converged) return false;
      if (std::abs(out.radius - std::abs(z[0])) > 1e-4 * std::abs(z[0])) {
        return false;
      }
    }
    return true;
  });

  check("survey is thread-count invariant", [seed] {
    auto gen = std::make_shared<isobound::IdentityGenerator>(2);
    const isobound::CheckerboardLatentClassifier f(2);
    isobound::SurveySelection which;
    const auto a =
        isobound::robustness_survey(f, *gen, 8, which, {}, seed, 1);
    const auto b =
        isobound::robustness_survey(f, *gen, 8, which, {}, seed, 2);
    return a.to_csv() == b.to_csv();
  });

  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Robustness upper bounds from Gaussian isoperimetry, with empirical "
      "attack surveys"};
  app.require_subcommand(1);
  int exit_code = 0;

  // bound ---------------------------------------------------------------
  auto bound_args = std::make_shared<BoundArgs>();
  {
    CLI::App* sub = app.add_subcommand(
        "bound", "Evaluate or invert a fooling/robustness bound");
    sub->add_option("--kind", bound_args->request.kind,
                    "general|balanced|equiprobable|checkerboard|expectation|"
                    "expectation-equiprobable|invert")
        ->required();
    sub->add_option("--eta", bound_args->request.eta, "perturbation budget");
    sub->add_option("--classes", bound_args->request.classes,
                    "equiprobable class count");
    sub->add_option("--probabilities", bound_args->request.probabilities,
                    "explicit class probabilities")
        ->delimiter(',');
    sub->add_option("--target", bound_args->request.target,
                    "fooling probability to invert for");
    sub->add_option("--delta-w", bound_args->request.delta_w,
                    "Wasserstein slack for expectation bounds");
    sub->add_option("--d,--dim", bound_args->request.dim,
                    "checkerboard lattice dimension");
    sub->add_option("--normalize-d,--normalize-dim",
                    bound_args->request.normalize_dim,
                    "divide radius results by E||z|| in this dimension");
    sub->add_flag("--raw-eta-decay", bound_args->request.raw_eta_decay,
                  "use the raw-budget decay factor in the equiprobable bound");
    sub->add_option("--omega", bound_args->request.omega_kind,
                    "identity|linear");
    sub->add_option("--omega-scale", bound_args->request.omega_scale,
                    "linear modulus slope");
    sub->add_option("--omega-offset", bound_args->request.omega_offset,
                    "linear modulus offset");
    sub->add_option("--out", bound_args->out, "write the report JSON here");
    sub->callback([bound_args] { run_bound(*bound_args); });
  }

  // estimate-omega ------------------------------------------------------
  auto estimate_args = std::make_shared<EstimateArgs>();
  {
    CLI::App* sub = app.add_subcommand(
        "estimate-omega",
        "Estimate a probabilistic modulus of continuity for a generator");
    sub->add_option("--generator", estimate_args->generator_path,
                    "generator model JSON file")
        ->required();
    sub->add_option("--deltas", estimate_args->deltas,
                    "latent radii: start:stop:step or comma list")
        ->required();
    sub->add_option("--kappa", estimate_args->kappa,
                    "allowed failure probability");
    sub->add_option("--samples", estimate_args->samples,
                    "latent samples per grid point");
    sub->add_option("--seed", estimate_args->seed, "master seed")->required();
    sub->add_option("--inner-steps", estimate_args->inner_opt.steps,
                    "ascent steps per sample");
    sub->add_option("--inner-restarts", estimate_args->inner_opt.restarts,
                    "ascent restarts per sample");
    sub->add_option("--threads", estimate_args->inner_opt.threads,
                    "worker threads (0 = hardware)");
    sub->add_option("--out", estimate_args->out,
                    "write the estimate JSON here");
    sub->callback([estimate_args] { run_estimate(*estimate_args); });
  }

  // attack --------------------------------------------------------------
  auto attack_args = std::make_shared<AttackArgs>();
  {
    CLI::App* sub = app.add_subcommand(
        "attack", "Survey adversarial radii over sampled latents");
    sub->add_option("--generator", attack_args->generator_path,
                    "generator model JSON file")
        ->required();
    sub->add_option("--classifier", attack_args->classifier_path,
                    "classifier model JSON file")
        ->required();
    sub->add_option("--n,--samples", attack_args->samples, "latent samples");
    sub->add_option("--radii", attack_args->radii,
                    "latent,in_distribution,unconstrained")
        ->delimiter(',');
    sub->add_option("--seed", attack_args->seed, "master seed")->required();
    sub->add_option("--threads", attack_args->threads, "worker threads");
    sub->add_option("--max-iters", attack_args->config.max_iters,
                    "linearization iterations");
    sub->add_option("--restarts", attack_args->config.restarts,
                    "refinement restarts");
    sub->add_option("--overshoot", attack_args->config.overshoot,
                    "boundary overshoot factor");
    sub->add_option("--bisection-tol", attack_args->config.bisection_tol,
                    "relative bisection tolerance");
    sub->add_option("--step-size", attack_args->config.step_size,
                    "refinement step scale");
    sub->add_option("--out", attack_args->out, "write the record CSV here");
    sub->callback([attack_args] { run_attack(*attack_args); });
  }

  // experiment ----------------------------------------------------------
  auto experiment_args = std::make_shared<ExperimentArgs>();
  {
    CLI::App* sub = app.add_subcommand(
        "experiment", "Run a full experiment config and emit its report");
    sub->add_option("--config", experiment_args->config_path,
                    "experiment config JSON file")
        ->required();
    sub->add_option("--out", experiment_args->out,
                    "write the report JSON here");
    sub->callback(
        [experiment_args] { run_experiment_command(*experiment_args); });
  }

  // checkerboard --------------------------------------------------------
  auto checkerboard_args = std::make_shared<CheckerboardArgs>();
  {
    CLI::App* sub = app.add_subcommand(
        "checkerboard",
        "Emit the lattice-partition comparison table (bounds vs Monte Carlo)");
    sub->add_option("--d,--dim", checkerboard_args->dim,
                    "lattice dimension")
        ->required();
    sub->add_option("--etas", checkerboard_args->etas,
                    "eta grid: start:stop:step or comma list")
        ->required();
    sub->add_option("--n,--samples", checkerboard_args->samples,
                    "Monte Carlo samples per eta");
    sub->add_option("--seed", checkerboard_args->seed, "master seed")
        ->required();
    sub->add_option("--out", checkerboard_args->out, "write the CSV here");
    sub->callback(
        [checkerboard_args] { run_checkerboard(*checkerboard_args); });
  }

  // selftest ------------------------------------------------------------
  auto selftest_seed = std::make_shared<std::uint64_t>(7);
  {
    CLI::App* sub = app.add_subcommand(
        "selftest", "Cross-check the library against built-in oracles");
    sub->add_option("--seed", *selftest_seed, "seed for the sampled checks");
    sub->callback([selftest_seed, &exit_code] {
      exit_code = run_selftest(*selftest_seed);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "Run with --help for usage.\n");
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  }
  return exit_code;
}
