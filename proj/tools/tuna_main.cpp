// SPDX-License-Identifier: Apache-2.0
//
// tuna: noise-aware configuration tuning over a simulated or external cluster.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tuna/analysis.hpp"
#include "tuna/error.hpp"
#include "tuna/tuner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;
constexpr int kExitInvariant = 4;

using nlohmann::json;

int cmd_tune(tuna::RunConfig config, const std::string& mode, const std::string& optimizer,
             const std::optional<std::string>& match) {
  config.mode = tuna::mode_from_string(mode);
  config.optimizer = tuna::proposer_from_string(optimizer);
  if (config.mode == tuna::Mode::ExtendedTraditional) {
    if (!match) throw tuna::UsageError("extended-traditional needs --match DIR (a reference tuna run)");
    config.trials = tuna::Catalog::open(*match).size();
    if (config.trials == 0) throw tuna::UsageError("reference run has no trials");
  } else if (match) {
    throw tuna::UsageError("--match only applies to extended-traditional");
  }
  if (!config.out_dir) throw tuna::UsageError("--out is required");

  tuna::RunResult r = tuna::run_tune(config);
  std::cout << "trials " << r.trials << ", evaluations " << r.evaluations << ", crashed " << r.crashed << '\n';
  if (r.best) {
    std::cout << "best " << r.best->id().hex() << " score " << *r.best_summary->reported_score << " budget "
              << r.best_summary->max_budget_reached << '\n'
              << r.best->to_json().dump() << '\n';
  }
  if (r.invariant_violation) {
    std::cerr << "error: a configuration ran twice on one worker\n";
    return kExitInvariant;
  }
  if (r.trials > 0 && static_cast<double>(r.crashed) > 0.2 * static_cast<double>(r.trials)) {
    std::cerr << "error: " << r.crashed << " of " << r.trials << " trials failed\n";
    return kExitBackend;
  }
  return kExitOk;
}

int cmd_analyze(const std::string& dir) {
  json summary = tuna::analyze_run(dir);
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_simulate(const std::string& env_name, std::optional<std::string> env_file, std::uint64_t seed,
                 const std::string& config_file, std::size_t workers, std::size_t replicates,
                 std::optional<double> noise) {
  tuna::RunConfig rc;
  rc.env_name = env_name;
  rc.env_file = std::move(env_file);
  rc.seed = seed;
  rc.noise = noise;
  tuna::Environment env = tuna::resolve_environment(rc);
  std::ifstream in(config_file);
  if (!in) throw tuna::UsageError("cannot read " + config_file);
  json body = json::parse(in);
  if (body.contains("config") && body["config"].is_object()) body = body["config"];
  const tuna::Configuration config = env.space.parse(body);
  const auto population = tuna::deployment_population(env, seed, workers);
  const auto report = tuna::deployment_eval(env, config, population, replicates, tuna::derive_seed(seed, "deploy-trials"));
  json out = report.to_json();
  out["noise_free_worst"] = env.noise_free_worst(config, population);
  out["in_unstable_region"] = env.landscape.region_of(env.space, config) != nullptr;
  json samples = json::array();
  for (const auto& [w, p] : report.performances) samples.push_back({{"worker", w}, {"performance", p}});
  out["performances"] = samples;
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_cluster_size(const std::vector<double>& fractions, int unstable, double confidence, std::uint64_t seed,
                     std::size_t replicates) {
  const auto mc = tuna::min_cluster_size(fractions, unstable, confidence, seed, replicates);
  const auto exact = tuna::min_cluster_size_exact(fractions, unstable, confidence);
  json out;
  out["monte_carlo"] = mc.size ? json(*mc.size) : json("unachievable");
  out["monte_carlo_estimate"] = mc.estimate;
  out["exact"] = exact ? json(*exact) : json("unachievable");
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_replay(const std::string& dir, const tuna::ReplayOptions& options, const std::optional<std::string>& out_path) {
  const auto evaluations = tuna::replay(dir, options);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (out_path) {
    file.open(*out_path);
    if (!file) throw tuna::UsageError("cannot write " + *out_path);
    out = &file;
  }
  for (const auto& e : evaluations) *out << e.to_json().dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-aware configuration tuning"};
  app.require_subcommand(1);

  tuna::RunConfig rc;
  std::string mode = "tuna";
  std::string optimizer = "forest-bo";
  std::string out_dir;
  std::optional<std::string> match;
  bool no_model = false, no_detector = false;
  std::string direction = "maximize";

  auto* tune = app.add_subcommand("tune", "Run a tuning session");
  tune->add_option("--mode", mode, "tuna, traditional, extended-traditional, naive")
      ->check(CLI::IsMember({"tuna", "traditional", "extended-traditional", "naive"}));
  auto* env_opt = tune->add_option("--env", rc.env_name, "Built-in environment: smooth, planted-unstable, learnable-noise");
  tune->add_option("--env-file", rc.env_file, "Environment JSON overriding the built-in scenarios");
  auto* exec_opt = tune->add_option("--exec", rc.exec_command, "External benchmark command");
  env_opt->excludes(exec_opt);
  tune->add_option("--space", rc.space_file, "Config space JSON (required with --exec)");
  tune->add_option("--seed", rc.seed, "Run seed");
  tune->add_option("--trials", rc.trials, "Trial budget");
  tune->add_option("--pool", rc.pool, "Worker pool size");
  tune->add_option("--threshold", rc.threshold, "Relative-range threshold")->check(CLI::Range(0.15, 0.30));
  tune->add_flag("--no-model", no_model, "Disable the noise adjuster");
  tune->add_flag("--no-detector", no_detector, "Disable unstable-config detection");
  tune->add_option("--out", out_dir, "Output directory")->required();
  tune->add_option("--optimizer", optimizer, "forest-bo or random")->check(CLI::IsMember({"forest-bo", "random"}));
  tune->add_option("--noise", rc.noise, "Override simulated worker noise (CoV)");
  tune->add_option("--guardrail", rc.guardrail, "Clamp predicted relative error to [-g, g]");
  tune->add_option("--timeout", rc.timeout_s, "Per-trial timeout for --exec, seconds");
  tune->add_option("--direction", direction, "maximize or minimize")->check(CLI::IsMember({"maximize", "minimize"}));
  tune->add_option("--match", match, "Reference tuna run whose trial count extended-traditional matches");

  auto* analyze = app.add_subcommand("analyze", "Write curve.csv, deploy.csv and summary.json for a run");
  std::string analyze_dir;
  analyze->add_option("dir", analyze_dir, "Run directory")->required();

  auto* simulate = app.add_subcommand("simulate", "Deploy one configuration to fresh simulated workers");
  std::string sim_env = "smooth", sim_config;
  std::optional<std::string> sim_env_file;
  std::uint64_t sim_seed = 1;
  std::size_t sim_workers = 10, sim_replicates = 1;
  std::optional<double> sim_noise;
  simulate->add_option("--env", sim_env, "Built-in environment");
  simulate->add_option("--env-file", sim_env_file, "Environment JSON");
  simulate->add_option("--seed", sim_seed, "Environment and deployment seed");
  simulate->add_option("--config", sim_config, "Configuration JSON (a best.json also works)")->required();
  simulate->add_option("--workers", sim_workers, "Fresh workers");
  simulate->add_option("--replicates", sim_replicates, "Runs per worker");
  simulate->add_option("--noise", sim_noise, "Override worker noise (CoV)");

  auto* cluster = app.add_subcommand("cluster-size", "Smallest pool that detects unstable configs with a confidence");
  std::vector<double> fractions{0.5};
  int unstable = 1;
  double confidence = 0.95;
  std::uint64_t cs_seed = 1;
  std::size_t cs_replicates = 100000;
  cluster->add_option("--fractions", fractions, "Bad-worker fraction per unstable profile");
  cluster->add_option("--unstable", unstable, "Unstable configs encountered per run");
  cluster->add_option("--confidence", confidence, "Target detection probability");
  cluster->add_option("--seed", cs_seed, "Monte Carlo seed");
  cluster->add_option("--replicates", cs_replicates, "Monte Carlo replicates");

  auto* replay = app.add_subcommand("replay", "Re-run detector and model over a catalog");
  std::string replay_dir;
  std::optional<std::string> replay_out;
  tuna::ReplayOptions ropt;
  bool r_no_model = false, r_no_detector = false;
  replay->add_option("dir", replay_dir, "Run directory")->required();
  replay->add_flag("--no-model", r_no_model, "Disable the noise adjuster");
  replay->add_flag("--no-detector", r_no_detector, "Disable detection");
  replay->add_option("--threshold", ropt.threshold, "Relative-range threshold")->check(CLI::Range(0.15, 0.30));
  replay->add_option("--guardrail", ropt.guardrail, "Clamp predicted relative error");
  replay->add_option("--out", replay_out, "Write evaluations JSONL here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_code = app.exit(e);
    return rc_code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*tune) {
      rc.model = !no_model;
      rc.detector = !no_detector;
      rc.out_dir = out_dir;
      rc.direction = tuna::direction_from_string(direction);
      return cmd_tune(rc, mode, optimizer, match);
    }
    if (*analyze) return cmd_analyze(analyze_dir);
    if (*simulate) return cmd_simulate(sim_env, sim_env_file, sim_seed, sim_config, sim_workers, sim_replicates, sim_noise);
    if (*cluster) return cmd_cluster_size(fractions, unstable, confidence, cs_seed, cs_replicates);
    if (*replay) {
      ropt.model = !r_no_model;
      ropt.detector = !r_no_detector;
      return cmd_replay(replay_dir, ropt, replay_out);
    }
  } catch (const tuna::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const tuna::ExclusionViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const tuna::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitUsage;
}
