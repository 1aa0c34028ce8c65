// SPDX-License-Identifier: Apache-2.0
//
// Unstable-configuration detection and sample aggregation.
//
// A configuration is unstable when the relative range (max - min) / mean of
// its samples strictly exceeds the threshold. The score reported to the
// optimizer is the worst sample, penalized when the configuration is unstable.
#pragma once

#include <span>

#include "tuna/configspace.hpp"

namespace tuna {

enum class Direction { Maximize, Minimize };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// True when a is strictly better than b.
inline bool better(Direction d, double a, double b) { return d == Direction::Maximize ? a > b : a < b; }

inline constexpr double kDefaultThreshold = 0.30;
inline constexpr double kMinThreshold = 0.15;
inline constexpr double kMaxThreshold = 0.30;

struct StabilityVerdict {
  ConfigId config_id;
  double relative_range = 0.0;
  bool is_unstable = false;
  double threshold_used = kDefaultThreshold;
};

struct AggregationPolicy {
  Direction direction = Direction::Maximize;
  /// Multiplier applied to an unstable configuration's worst sample.
  double penalty_factor = 0.5;

  static AggregationPolicy worst_case(Direction d) {
    return AggregationPolicy{d, d == Direction::Maximize ? 0.5 : 2.0};
  }
};

/// (max - min) / mean. Samples must be finite, non-empty, and of one sign.
double relative_range(std::span<const double> samples);

StabilityVerdict classify(std::span<const double> samples, double threshold = kDefaultThreshold,
                          ConfigId id = {});

/// Halves a throughput-like score, doubles a latency-like one.
double apply_penalty(double score, Direction direction);
double apply_penalty(double score, const AggregationPolicy& policy);

/// Worst sample w.r.t. the direction, penalized when the verdict is unstable.
double aggregate(std::span<const double> samples, const StabilityVerdict& verdict, const AggregationPolicy& policy);

}  // namespace tuna
