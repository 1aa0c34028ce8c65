// SPDX-License-Identifier: Apache-2.0
//
// Noise adjuster: learns each sample's relative error from system metrics and
// the worker it ran on, then de-noises stable samples as p / (s + 1).
//
// Training rows come from stable configurations that completed the highest
// budget. Each row's target is P / mean(P of its config) - 1, the features are
// the metric values followed by a one-hot block over the worker vocabulary.
// The model stays cold (identity) until it has seen enough data.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tuna/catalog.hpp"
#include "tuna/forest.hpp"

namespace tuna {

struct NoiseModelOptions {
  ForestParams forest{};
  /// Activation rule: at least this many distinct configurations and rows.
  std::size_t min_configs = 2;
  std::size_t min_rows = 20;
  /// Optional bound on the predicted relative error.
  std::optional<double> guardrail;
};

class NoiseModel {
 public:
  NoiseModel(std::vector<WorkerId> worker_vocabulary, std::uint64_t seed, NoiseModelOptions options = {});

  /// Fixes the metric layout; later calls are ignored. Called with the first trial's metrics.
  void freeze_metrics(const std::map<std::string, double>& metrics);
  const std::vector<std::string>& metric_vocabulary() const { return metric_vocabulary_; }
  const std::vector<WorkerId>& worker_vocabulary() const { return worker_vocabulary_; }

  /// Rebuilds the model from scratch on the given rows (may stay cold).
  void train(const std::vector<TrainingRow>& rows);

  bool active() const { return fitted_ != nullptr; }
  std::size_t trained_row_count() const { return trained_rows_; }
  /// Metric names seen after the vocabulary was frozen (ignored for modelling).
  const std::vector<std::string>& ignored_metrics() const { return ignored_metrics_; }

  /// Predicted relative error s for one sample (0 while cold).
  double predict_error(const std::map<std::string, double>& metrics, WorkerId worker) const;
  /// Bypass for unstable configurations and while cold, p / (s + 1) otherwise.
  double adjust(const std::map<std::string, double>& metrics, WorkerId worker, double performance,
                bool is_unstable) const;

  std::vector<double> features(const std::map<std::string, double>& metrics, WorkerId worker) const;

  /// Relative-error targets for a row set, in row order; rows whose
  /// config has fewer than two samples are dropped (returned as nullopt).
  static std::vector<std::optional<double>> targets(const std::vector<TrainingRow>& rows);

 private:
  struct Fitted {
    Standardizer standardizer;
    ForestModel forest;
  };

  std::vector<WorkerId> worker_vocabulary_;
  std::vector<std::string> metric_vocabulary_;
  std::vector<std::string> ignored_metrics_;
  std::uint64_t seed_;
  NoiseModelOptions options_;
  std::shared_ptr<const Fitted> fitted_;
  std::size_t trained_rows_ = 0;
  std::uint64_t generation_ = 0;
};

/// p if the configuration is unstable, else p / (s + 1).
double apply_adjustment(double s, double performance, bool is_unstable);

}  // namespace tuna
