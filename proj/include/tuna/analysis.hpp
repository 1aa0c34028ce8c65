// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc statistics: convergence curves, time-to-optimal, dispersion
// summaries, detection probability, and deployment reports.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tuna/catalog.hpp"
#include "tuna/simulator.hpp"
#include "tuna/stability.hpp"

namespace tuna {

double mean(std::span<const double> xs);
/// Population standard deviation.
double stddev(std::span<const double> xs);
/// stddev / mean; throws DegenerateInputError when the mean is ~0.
double cov(std::span<const double> xs);

/// Best-so-far score per iteration (1-based); NaN before the first observation.
class ConvergenceCurve {
 public:
  ConvergenceCurve() = default;
  ConvergenceCurve(Direction direction, std::uint64_t seed = 0, std::string mode = {});

  /// Records a value observed at an iteration; the curve keeps the running best.
  void observe(std::uint64_t iteration, double value);
  /// Extends the curve flat up to the given iteration.
  void extend_to(std::uint64_t iteration);

  std::uint64_t length() const { return values_.size(); }
  /// Value after the given iteration; clamps to the last point.
  double at(std::uint64_t iteration) const;
  std::optional<std::uint64_t> first_hit(double target) const;
  const std::vector<double>& values() const { return values_; }
  Direction direction() const { return direction_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& mode() const { return mode_; }

  static ConvergenceCurve from_values(Direction direction, std::vector<double> values);

 private:
  Direction direction_ = Direction::Maximize;
  std::uint64_t seed_ = 0;
  std::string mode_;
  std::vector<double> values_;
};

/// Seed-averaged curve over the common prefix length.
std::vector<double> mean_curve(std::span<const ConvergenceCurve> curves);

struct TimeToOptimal {
  /// hit_b / hit_a; absent when either curve never reaches the target.
  std::optional<double> ratio;
  std::optional<std::uint64_t> hit_a;
  std::optional<std::uint64_t> hit_b;
  std::uint64_t max_iteration = 0;
  bool unbounded() const { return !ratio; }
};

/// Target is fraction * optimum when maximizing, optimum / fraction when minimizing.
TimeToOptimal time_to_optimal(const ConvergenceCurve& a, const ConvergenceCurve& b, double target_fraction,
                              double optimum);

/// Exact binomial coefficient (throws CapacityError on overflow).
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Chance that n distinct workers drawn from the pool include at least one
/// bad and one good worker, i.e. that both behaviors are observed.
double detection_probability(int n_sampled, int pool, int bad_workers);

struct ClusterSizeResult {
  std::optional<int> size;
  /// Monte Carlo detection estimate at the returned size.
  double estimate = 0.0;
  bool achievable = false;
};

/// Smallest pool N such that sampling every worker detects each of
/// n_unstable_per_run unstable configs with the given confidence. Each
/// config's profile is drawn uniformly from bad_fractions and each worker's
/// bad bit is Bernoulli(frac).
ClusterSizeResult min_cluster_size(std::span<const double> bad_fractions, int n_unstable_per_run, double confidence,
                                   std::uint64_t seed = 0, std::size_t replicates = 100000, int max_pool = 256);

/// Closed form of the same quantity: (mean_f [1 - f^N - (1-f)^N])^k.
double cluster_detection_exact(std::span<const double> bad_fractions, int n_unstable_per_run, int pool);
std::optional<int> min_cluster_size_exact(std::span<const double> bad_fractions, int n_unstable_per_run,
                                          double confidence, int max_pool = 256);

struct DeploymentReport {
  ConfigId config_id;
  std::vector<std::pair<WorkerId, double>> performances;
  double mean = 0.0;
  double stddev = 0.0;
  double cov = 0.0;
  double relative_range = 0.0;
  std::size_t crashed = 0;

  nlohmann::json to_json() const;
};

/// Runs the configuration `replicates` times on each fresh worker.
DeploymentReport deployment_eval(const Environment& env, const Configuration& config,
                                 const std::vector<WorkerProfile>& fresh_workers, std::size_t replicates,
                                 std::uint64_t seed);

/// Summary of a finished deployment's samples.
DeploymentReport summarize_deployment(ConfigId id, std::vector<std::pair<WorkerId, double>> performances);

/// Mean of |value - truth| / |truth|.
double mean_abs_relative_error(std::span<const double> values, std::span<const double> truths);

void write_curve_csv(const std::filesystem::path& path, std::span<const ConvergenceCurve> curves);
void write_deploy_csv(const std::filesystem::path& path, std::span<const DeploymentReport> reports);

}  // namespace tuna
