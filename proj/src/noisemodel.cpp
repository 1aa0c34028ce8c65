// SPDX-License-Identifier: Apache-2.0
#include "tuna/noisemodel.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <unordered_map>

#include "tuna/error.hpp"
#include "tuna/random.hpp"

namespace tuna {

double apply_adjustment(double s, double performance, bool is_unstable) {
  if (!std::isfinite(performance)) throw ValidationError("adjust: non-finite performance");
  if (is_unstable) return performance;
  if (!(s > -1.0)) throw AdjustmentOverflow("predicted relative error " + std::to_string(s) + " <= -1");
  return performance / (s + 1.0);
}

NoiseModel::NoiseModel(std::vector<WorkerId> worker_vocabulary, std::uint64_t seed, NoiseModelOptions options)
    : worker_vocabulary_(std::move(worker_vocabulary)), seed_(seed), options_(std::move(options)) {}

void NoiseModel::freeze_metrics(const std::map<std::string, double>& metrics) {
  if (!metric_vocabulary_.empty()) {
    for (const auto& [name, value] : metrics) {
      if (std::binary_search(metric_vocabulary_.begin(), metric_vocabulary_.end(), name)) continue;
      if (std::find(ignored_metrics_.begin(), ignored_metrics_.end(), name) != ignored_metrics_.end()) continue;
      std::cerr << "warning: metric '" << name << "' appeared after the metric set was fixed; ignoring it\n";
      ignored_metrics_.push_back(name);
    }
    return;
  }
  for (const auto& [name, value] : metrics) metric_vocabulary_.push_back(name);
}

std::vector<double> NoiseModel::features(const std::map<std::string, double>& metrics, WorkerId worker) const {
  std::vector<double> x;
  x.reserve(metric_vocabulary_.size() + worker_vocabulary_.size());
  for (const auto& name : metric_vocabulary_) {
    auto it = metrics.find(name);
    x.push_back(it == metrics.end() || !std::isfinite(it->second) ? 0.0 : it->second);
  }
  // Workers outside the vocabulary get an all-zero block.
  for (WorkerId w : worker_vocabulary_) x.push_back(w == worker ? 1.0 : 0.0);
  return x;
}

std::vector<std::optional<double>> NoiseModel::targets(const std::vector<TrainingRow>& rows) {
  std::unordered_map<ConfigId, std::pair<double, std::size_t>> sums;
  for (const auto& r : rows) {
    auto& s = sums[r.config_id];
    s.first += r.performance;
    ++s.second;
  }
  std::vector<std::optional<double>> y;
  y.reserve(rows.size());
  for (const auto& r : rows) {
    const auto& [sum, count] = sums.at(r.config_id);
    const double mean = sum / static_cast<double>(count);
    if (count < 2 || mean == 0.0) y.push_back(std::nullopt);
    else y.push_back(r.performance / mean - 1.0);
  }
  return y;
}

void NoiseModel::train(const std::vector<TrainingRow>& rows) {
  if (metric_vocabulary_.empty() && !rows.empty()) freeze_metrics(rows.front().metrics);
  const auto y_opt = targets(rows);

  Matrix x;
  std::vector<double> y;
  std::vector<std::uint64_t> ids;
  std::set<ConfigId> configs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!y_opt[i]) continue;
    x.append_row(features(rows[i].metrics, rows[i].worker_id));
    y.push_back(*y_opt[i]);
    ids.push_back(rows[i].trial_id);
    configs.insert(rows[i].config_id);
  }

  ++generation_;
  if (configs.size() < options_.min_configs || y.size() < options_.min_rows) {
    fitted_.reset();
    trained_rows_ = 0;
    return;
  }
  auto fitted = std::make_shared<Fitted>();
  fitted->standardizer = Standardizer::fit(x);
  fitted->forest = ForestModel::fit(fitted->standardizer.transform(x), y, options_.forest,
                                    derive_seed(seed_, {generation_}), ids);
  // Swap in the new model only once it is complete.
  fitted_ = std::move(fitted);
  trained_rows_ = y.size();
}

double NoiseModel::predict_error(const std::map<std::string, double>& metrics, WorkerId worker) const {
  auto fitted = fitted_;
  if (!fitted) return 0.0;
  auto x = features(metrics, worker);
  fitted->standardizer.transform_in_place(x);
  double s = fitted->forest.predict(x);
  if (options_.guardrail) s = std::clamp(s, -*options_.guardrail, *options_.guardrail);
  return s;
}

double NoiseModel::adjust(const std::map<std::string, double>& metrics, WorkerId worker, double performance,
                          bool is_unstable) const {
  if (is_unstable || !fitted_) return apply_adjustment(0.0, performance, is_unstable);
  return apply_adjustment(predict_error(metrics, worker), performance, false);
}

}  // namespace tuna
