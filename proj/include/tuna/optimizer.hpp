// SPDX-License-Identifier: Apache-2.0
//
// Ask/tell optimizer with Successive Halving over worker-count budgets.
//
// New configurations enter at the lowest rung. Once a rung has collected
// enough results, the best of them are promoted to the next rung, where they
// are re-measured on more workers. Fresh proposals come from either a forest
// surrogate maximizing Expected Improvement or plain random search.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tuna/configspace.hpp"
#include "tuna/forest.hpp"
#include "tuna/stability.hpp"

namespace tuna {

struct Suggestion {
  Configuration config;
  int budget = 1;
  bool is_initialization = false;
  std::size_t rung = 0;
};

struct ObjectiveSpec {
  Direction direction = Direction::Maximize;
  std::string name = "performance";
};

/// Rung bookkeeping for one Successive Halving bracket.
class SuccessiveHalving {
 public:
  explicit SuccessiveHalving(std::vector<int> rung_budgets = {1, 3, 10}, int eta = 3);

  const std::vector<int>& rung_budgets() const { return budgets_; }
  int eta() const { return eta_; }
  int max_budget() const { return budgets_.back(); }
  /// Index of a budget in the rung list; throws ProtocolError for unknown budgets.
  std::size_t rung_of(int budget) const;

  void record(std::size_t rung, ConfigId id, double score);
  /// Next promotion, if any rung has an unmet quota. Higher rungs go first.
  /// The chosen config is marked promoted.
  std::optional<std::pair<ConfigId, std::size_t>> next_promotion(Direction direction);

  const std::vector<std::pair<ConfigId, double>>& completed(std::size_t rung) const { return completed_.at(rung); }
  std::size_t promoted_count(std::size_t rung) const { return promoted_.at(rung).size(); }
  /// floor(completed / eta), the number of configs rung r may send upward.
  std::size_t quota(std::size_t rung) const;

 private:
  std::vector<int> budgets_;
  int eta_;
  std::vector<std::vector<std::pair<ConfigId, double>>> completed_;
  std::vector<std::set<ConfigId>> promoted_;
};

/// Rungs 1, 3, ... up to the pool size (so [1, 3, 10] for ten workers).
std::vector<int> default_rungs(int pool_size);

enum class Proposer { ForestBo, Random };

std::string_view to_string(Proposer p);
Proposer proposer_from_string(std::string_view s);

struct OptimizerOptions {
  Proposer proposer = Proposer::ForestBo;
  std::vector<int> rung_budgets{1, 3, 10};
  int eta = 3;
  /// Default config plus (init_count - 1) random ones.
  std::size_t init_count = 10;
  std::size_t ei_candidates = 5000;
  /// max_features 0 here means 5/6 of the surrogate's inputs.
  ForestParams surrogate{10, 3, 0, true, 0};
};

/// EI of a prediction against the incumbent: sigma * (z Phi(z) + phi(z)).
double expected_improvement(double mean, double stddev, double best, Direction direction);

class Optimizer {
 public:
  Optimizer(ConfigSpace space, ObjectiveSpec objective, OptimizerOptions options, std::uint64_t seed);

  Suggestion ask();
  /// Records a completed (config, budget). Out-of-order tells are fine.
  void tell(const Configuration& config, int budget, double score);
  /// Releases an asked (config, budget) that produced no usable score.
  void tell_failure(const Configuration& config, int budget);

  void stop() { stopped_ = true; }
  bool stopped() const { return stopped_; }

  std::size_t ask_count() const { return asks_; }
  std::size_t outstanding() const { return pending_.size(); }
  std::size_t observation_count() const { return observed_.size(); }
  const SuccessiveHalving& rungs() const { return rungs_; }
  const ConfigSpace& space() const { return space_; }
  const ObjectiveSpec& objective() const { return objective_; }
  int max_budget() const { return rungs_.max_budget(); }
  /// Whether the last fresh proposal came from the surrogate.
  bool surrogate_active() const { return surrogate_.has_value(); }

 private:
  Configuration propose(Rng& rng);
  void refit();

  ConfigSpace space_;
  ObjectiveSpec objective_;
  OptimizerOptions options_;
  std::uint64_t seed_;
  SuccessiveHalving rungs_;

  std::vector<Configuration> init_queue_;
  std::map<ConfigId, Configuration> configs_;
  std::set<std::pair<ConfigId, int>> pending_;
  std::set<std::pair<ConfigId, int>> observed_;
  std::set<ConfigId> proposed_;

  Matrix x_;
  std::vector<double> y_;
  std::vector<double> budget_of_row_;
  std::optional<ForestModel> surrogate_;
  std::size_t asks_ = 0;
  std::size_t fits_ = 0;
  bool stopped_ = false;
};

enum class Mode { Tuna, Traditional, Naive, ExtendedTraditional };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

/// Scheduling policy implied by a mode.
struct ModePolicy {
  Mode mode = Mode::Tuna;
  std::vector<int> rung_budgets;
  int pool_size = 10;
  bool detector = true;
  bool model = true;
  /// Trials always go to this worker when set.
  std::optional<int> pinned_worker;
};

/// Traditional modes run every suggestion once on worker 0; naive runs every
/// suggestion on the whole pool with detector and model off; tuna uses the
/// full rung ladder.
ModePolicy run_mode(Mode mode, int pool_size = 10);

}  // namespace tuna
