// SPDX-License-Identifier: Apache-2.0
#include "tuna/stability.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tuna/error.hpp"

namespace tuna {

std::string_view to_string(Direction d) { return d == Direction::Maximize ? "maximize" : "minimize"; }

Direction direction_from_string(std::string_view s) {
  if (s == "maximize" || s == "max") return Direction::Maximize;
  if (s == "minimize" || s == "min") return Direction::Minimize;
  throw ValidationError("unknown objective direction '" + std::string(s) + "'");
}

double relative_range(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("relative_range of an empty sample set");
  double lo = samples.front(), hi = samples.front(), sum = 0.0, max_abs = 0.0;
  for (double x : samples) {
    if (!std::isfinite(x)) throw ValidationError("relative_range: non-finite sample");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
    max_abs = std::max(max_abs, std::abs(x));
  }
  if (lo < 0.0 && hi > 0.0) throw DegenerateInputError("relative_range: samples straddle zero");
  const double mean = sum / static_cast<double>(samples.size());
  if (max_abs == 0.0 || std::abs(mean) < 1e-12 * max_abs)
    throw DegenerateInputError("relative_range: mean is (numerically) zero");
  return (hi - lo) / std::abs(mean);
}

StabilityVerdict classify(std::span<const double> samples, double threshold, ConfigId id) {
  StabilityVerdict v;
  v.config_id = id;
  v.threshold_used = threshold;
  v.relative_range = relative_range(samples);
  v.is_unstable = v.relative_range > threshold;
  return v;
}

double apply_penalty(double score, Direction direction) {
  return direction == Direction::Maximize ? score / 2.0 : score * 2.0;
}

double apply_penalty(double score, const AggregationPolicy& policy) { return score * policy.penalty_factor; }

double aggregate(std::span<const double> samples, const StabilityVerdict& verdict, const AggregationPolicy& policy) {
  if (samples.empty()) throw DomainError("aggregate of an empty sample set");
  const double worst = policy.direction == Direction::Maximize ? *std::min_element(samples.begin(), samples.end())
                                                               : *std::max_element(samples.begin(), samples.end());
  return verdict.is_unstable ? apply_penalty(worst, policy) : worst;
}

}  // namespace tuna
