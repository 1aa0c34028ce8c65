// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic systems under test.
//
// A simulated measurement is
//
//   performance = f(config) * baseline_w * delta * slow_path
//
// where f is a seeded landscape, baseline_w a per-worker hardware skew,
// delta ~ N(1, cov^2) truncated to [0.1, 1.9], and slow_path the class's
// degrade factor when the configuration falls in an unstable region and the
// worker's latent bit for that class is set. Emitted metrics are linear in the
// realized deviation (delta * slow_path), in the worker baseline, or pure
// distractors, so a metrics-based model can learn the noise.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuna/catalog.hpp"
#include "tuna/configspace.hpp"

namespace tuna {

inline constexpr double kDeltaLow = 0.1;
inline constexpr double kDeltaHigh = 1.9;

/// Metric layout: channel counts per group.
inline constexpr std::size_t kNoiseChannels = 5;
inline constexpr std::size_t kWorkerChannels = 5;
inline constexpr std::size_t kDistractorChannels = 10;

struct WorkerProfile {
  WorkerId worker_id = 0;
  double baseline_multiplier = 1.0;
  double noise_cov = 0.0;
  /// Weights of the realized deviation on each noise channel.
  std::vector<double> metric_mixing;
  /// Weights of the baseline skew on each worker channel.
  std::vector<double> baseline_mixing;
  /// class id -> takes the slow path.
  std::map<int, bool> unstable_path_bits;

  nlohmann::json to_json() const;
  static WorkerProfile from_json(const nlohmann::json& j);
};

struct DimensionTerm {
  std::string parameter;
  double amplitude = 0.0;
  double center = 0.5;  // unit coordinate
  double width = 0.25;
};

struct InteractionTerm {
  std::string a;
  std::string b;
  double weight = 0.0;
};

struct UnstableRegion {
  int class_id = 0;
  /// parameter -> unit-coordinate center; the region is the box of half_width around it.
  std::map<std::string, double> center;
  double half_width = 0.12;
  /// Peak bump added to f at the region center, in units of scale.
  double bonus = 0.0;
  double degrade_factor = 0.25;
  double worker_bad_fraction = 0.5;
};

struct LandscapeSpec {
  double scale = 1000.0;
  double base = 0.35;
  std::vector<DimensionTerm> terms;
  std::vector<InteractionTerm> interactions;
  /// categorical parameter -> per-choice bonus (units of scale).
  std::map<std::string, std::vector<double>> categorical_bonus;
  std::vector<UnstableRegion> regions;

  /// Noise-free f(config) > 0.
  double performance(const ConfigSpace& space, const Configuration& config) const;
  /// Region the configuration falls in (the strongest one where boxes overlap), if any.
  const UnstableRegion* region_of(const ConfigSpace& space, const Configuration& config) const;
  /// Best f outside every unstable region.
  double stable_optimum() const;
  /// The configuration attaining stable_optimum().
  Configuration stable_optimum_config(const ConfigSpace& space) const;

  nlohmann::json to_json() const;
  static LandscapeSpec from_json(const nlohmann::json& j);
};

/// How fresh worker profiles are drawn.
struct WorkerModel {
  double baseline_sd = 0.0;
  double noise_cov_min = 0.0;
  double noise_cov_max = 0.0;

  nlohmann::json to_json() const;
  static WorkerModel from_json(const nlohmann::json& j);
};

struct NoiseInjectorSpec {
  double cov = 0.0;
};

struct SimOutcome {
  double performance = 0.0;
  std::map<std::string, double> metrics;
  /// Debug channel: quantities a real system would not expose.
  double delta = 1.0;
  bool slow_path = false;
  double noise_free = 0.0;
};

struct Environment {
  std::string name;
  ConfigSpace space;
  LandscapeSpec landscape;
  WorkerModel worker_model;
  std::vector<WorkerProfile> workers;

  /// Fresh profiles 0..count-1 drawn from the worker model; disjoint seeds give disjoint populations.
  std::vector<WorkerProfile> make_workers(std::uint64_t seed, std::size_t count) const;
  /// Replaces every worker's noise level (the injected-noise knob).
  void set_noise(double cov);

  /// Worst-case noise-free performance over a worker population.
  double noise_free_worst(const Configuration& config, const std::vector<WorkerProfile>& population) const;
  /// Mean noise-free performance over a worker population.
  double noise_free_mean(const Configuration& config, const std::vector<WorkerProfile>& population) const;

  nlohmann::json to_json() const;
  static Environment from_json(const nlohmann::json& j);
  static Environment load(const std::string& path);
};

std::vector<std::string> metric_names();

/// Truncated N(1, sigma^2) factor; sigma == 0 gives exactly 1.
double draw_delta(double sigma, Rng& rng);
double inject_noise(double performance, double sigma, std::uint64_t seed);

/// Stream seed for one simulated trial.
std::uint64_t trial_seed(std::uint64_t run_seed, WorkerId worker, ConfigId config, std::uint64_t ordinal);

SimOutcome evaluate_sim(const WorkerProfile& profile, const ConfigSpace& space, const LandscapeSpec& landscape,
                        const Configuration& config, std::uint64_t seed);

/// Built-in scenarios: "smooth", "planted-unstable", "learnable-noise".
Environment make_environment(const std::string& env_name, std::uint64_t seed, std::size_t pool_size = 10);

}  // namespace tuna
