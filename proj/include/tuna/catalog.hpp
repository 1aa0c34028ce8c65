// SPDX-License-Identifier: Apache-2.0
//
// Append-only store of trial results and per-configuration state.
//
// On disk a catalog directory holds:
//   trials.jsonl       one TrialRecord per line, in trial_id order
//   evaluations.jsonl  one EvaluationRecord per completed (config, budget)
//   run.json           the run manifest (written by the tuner)
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuna/configspace.hpp"
#include "tuna/stability.hpp"

namespace tuna {

using WorkerId = int;

enum class TrialStatus { Ok, Crashed, Timeout };

std::string_view to_string(TrialStatus s);
TrialStatus trial_status_from_string(std::string_view s);

struct TrialRecord {
  std::uint64_t trial_id = 0;
  ConfigId config_id;
  WorkerId worker_id = 0;
  int budget = 1;
  double performance = 0.0;
  std::optional<double> adjusted_performance;
  std::map<std::string, double> metrics;
  double wall_time_s = 0.0;
  TrialStatus status = TrialStatus::Ok;

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);

  /// Field-wise equality; NaN performances compare equal to each other.
  bool operator==(const TrialRecord& o) const;
};

/// One completed evaluation of a configuration at a budget: the detector
/// verdict over all of its samples and the score told to the optimizer.
struct EvaluationRecord {
  std::uint64_t evaluation_id = 0;
  ConfigId config_id;
  Configuration config;
  int budget = 1;
  std::vector<std::uint64_t> trial_ids;
  StabilityVerdict verdict;
  bool detector_enabled = true;
  /// Absent when every sample failed and no crash value was available.
  std::optional<double> reported_score;
  /// Trials started in the run when this evaluation completed.
  std::uint64_t trials_started = 0;

  nlohmann::json to_json() const;
  static EvaluationRecord from_json(const nlohmann::json& j);
};

struct ConfigSummary {
  ConfigId config_id;
  std::vector<std::uint64_t> samples;
  int max_budget_reached = 0;
  std::optional<StabilityVerdict> verdict;
  std::optional<double> reported_score;
};

struct TrainingRow {
  std::map<std::string, double> metrics;
  WorkerId worker_id = 0;
  double performance = 0.0;
  ConfigId config_id;
  std::uint64_t trial_id = 0;
};

class Catalog {
 public:
  /// In-memory catalog.
  Catalog();
  ~Catalog();
  Catalog(Catalog&&) noexcept;
  Catalog& operator=(Catalog&&) noexcept;

  /// Opens (creating if needed) a catalog directory and loads any existing records.
  static Catalog open(const std::filesystem::path& dir);

  /// Validates, assigns the next trial_id, and persists the record before returning it.
  std::uint64_t append(TrialRecord record);
  void record_evaluation(EvaluationRecord evaluation);

  std::vector<TrialRecord> samples_for(ConfigId id) const;
  std::vector<TrainingRow> training_rows(int max_budget) const;
  /// Extremal reported score, ties to the lower config id. With min_budget set,
  /// only configurations evaluated at that budget or higher compete.
  ConfigId best_config(Direction direction, std::optional<int> min_budget = std::nullopt) const;
  /// best_config restricted to the highest budget any configuration has reached.
  ConfigId best_config_at_top_budget(Direction direction) const;

  std::optional<ConfigSummary> summary(ConfigId id) const;
  std::vector<TrialRecord> records() const;
  std::vector<EvaluationRecord> evaluations() const;
  std::optional<Configuration> configuration(ConfigId id) const;
  std::size_t size() const;
  std::uint64_t last_trial_id() const;
  const std::optional<std::filesystem::path>& directory() const;

  void write_manifest(const nlohmann::json& manifest) const;
  static nlohmann::json read_manifest(const std::filesystem::path& dir);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

}  // namespace tuna
