// SPDX-License-Identifier: Apache-2.0
//
// The tuning loop: ask -> schedule -> execute -> catalog -> detect ->
// adjust -> aggregate -> tell -> retrain, plus offline replay of a catalog.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuna/analysis.hpp"
#include "tuna/catalog.hpp"
#include "tuna/cluster.hpp"
#include "tuna/noisemodel.hpp"
#include "tuna/optimizer.hpp"
#include "tuna/simulator.hpp"

namespace tuna {

struct RunConfig {
  Mode mode = Mode::Tuna;
  std::string env_name = "smooth";
  std::optional<std::string> env_file;
  std::optional<std::string> exec_command;
  std::optional<std::string> space_file;
  std::uint64_t seed = 1;
  std::size_t trials = 200;
  int pool = 10;
  double threshold = kDefaultThreshold;
  bool model = true;
  bool detector = true;
  Direction direction = Direction::Maximize;
  Proposer optimizer = Proposer::ForestBo;
  /// Replaces every simulated worker's noise level.
  std::optional<double> noise;
  std::optional<double> guardrail;
  double timeout_s = 600.0;
  std::optional<std::filesystem::path> out_dir;
  /// Fresh workers used for deployment truth and deployment reports.
  std::size_t deploy_workers = 10;
  /// EI candidates per ask; tests shrink this.
  std::size_t ei_candidates = 5000;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  /// Throws UsageError for inconsistent settings.
  void check() const;
};

/// A reported score next to the simulator's noise-free expectation for it.
struct ScorePoint {
  std::uint64_t trials_completed = 0;
  ConfigId config_id;
  int budget = 1;
  double reported = 0.0;
  double truth = 0.0;
};

struct RunResult {
  Catalog catalog;
  std::optional<Configuration> best;
  std::optional<ConfigSummary> best_summary;
  std::size_t trials = 0;
  std::size_t crashed = 0;
  std::size_t evaluations = 0;
  /// Running best of the incumbent's deployment truth (reported score without a simulator).
  ConvergenceCurve curve;
  std::vector<ScorePoint> scores;
  /// One line per ask and tell, for determinism checks.
  std::vector<std::string> transcript;
  std::size_t adjustment_overflows = 0;
  bool invariant_violation = false;
};

/// Resolves the simulated environment a config refers to (name or file, seed, pool, noise).
Environment resolve_environment(const RunConfig& config);
/// Fresh workers, disjoint from the tuning pool, used for deployment truth.
std::vector<WorkerProfile> deployment_population(const Environment& env, std::uint64_t seed, std::size_t count);

RunResult run_tune(const RunConfig& config);

/// Shared per-evaluation pipeline: detection, adjustment, aggregation.
struct EvaluationOutcome {
  EvaluationRecord record;
  std::vector<double> adjusted;
  std::size_t overflows = 0;
};

struct PipelineSettings {
  bool detector = true;
  double threshold = kDefaultThreshold;
  AggregationPolicy policy{};
};

/// Crash substitute: worst default-config sample, else worst sample in the catalog.
std::optional<double> crash_value(const Catalog& catalog, ConfigId default_id, Direction direction);

/// Processes one completed (config, budget). Fresh records are appended to the
/// catalog with their adjusted values, then the evaluation is recorded.
EvaluationOutcome process_evaluation(Catalog& catalog, const NoiseModel* model, const PipelineSettings& settings,
                                     const Configuration& config, ConfigId default_id, int budget,
                                     std::vector<TrialRecord> fresh, std::uint64_t trials_started);

struct ReplayOptions {
  bool detector = true;
  bool model = true;
  double threshold = kDefaultThreshold;
  std::optional<double> guardrail;
};

/// Re-runs detector, model, and aggregation over a finished catalog without re-evaluating.
std::vector<EvaluationRecord> replay(const std::filesystem::path& dir, const ReplayOptions& options);

/// Convergence of the incumbent (best at the top budget) over trials.
ConvergenceCurve convergence_from_catalog(const Catalog& catalog, Direction direction, const Environment* env,
                                          const std::vector<WorkerProfile>* population, std::uint64_t seed,
                                          const std::string& mode);

/// Writes curve.csv, deploy.csv and summary.json for a run directory.
nlohmann::json analyze_run(const std::filesystem::path& dir);

}  // namespace tuna
