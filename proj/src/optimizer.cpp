// SPDX-License-Identifier: Apache-2.0
#include "tuna/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tuna/error.hpp"

namespace tuna {

// ---------------------------------------------------------------------------
// Successive Halving

SuccessiveHalving::SuccessiveHalving(std::vector<int> rung_budgets, int eta)
    : budgets_(std::move(rung_budgets)), eta_(eta) {
  if (budgets_.empty()) throw DomainError("at least one rung budget is required");
  if (eta_ < 2) throw DomainError("eta must be >= 2");
  if (budgets_.front() < 1) throw DomainError("rung budgets must be >= 1");
  for (std::size_t i = 1; i < budgets_.size(); ++i)
    if (budgets_[i] <= budgets_[i - 1]) throw DomainError("rung budgets must strictly increase");
  completed_.resize(budgets_.size());
  promoted_.resize(budgets_.size());
}

std::size_t SuccessiveHalving::rung_of(int budget) const {
  auto it = std::find(budgets_.begin(), budgets_.end(), budget);
  if (it == budgets_.end()) throw ProtocolError("budget " + std::to_string(budget) + " is not a rung budget");
  return static_cast<std::size_t>(it - budgets_.begin());
}

void SuccessiveHalving::record(std::size_t rung, ConfigId id, double score) {
  completed_.at(rung).emplace_back(id, score);
}

std::size_t SuccessiveHalving::quota(std::size_t rung) const {
  return completed_.at(rung).size() / static_cast<std::size_t>(eta_);
}

std::optional<std::pair<ConfigId, std::size_t>> SuccessiveHalving::next_promotion(Direction direction) {
  for (std::size_t r = budgets_.size() - 1; r-- > 0;) {
    const std::size_t q = quota(r);
    if (promoted_[r].size() >= q) continue;
    auto ranked = completed_[r];
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.second != b.second) return better(direction, a.second, b.second);
      return a.first < b.first;
    });
    for (std::size_t i = 0; i < q; ++i) {
      if (promoted_[r].count(ranked[i].first)) continue;
      promoted_[r].insert(ranked[i].first);
      return std::make_pair(ranked[i].first, r + 1);
    }
  }
  return std::nullopt;
}

std::vector<int> default_rungs(int pool_size) {
  if (pool_size < 1) throw DomainError("pool size must be >= 1");
  std::vector<int> rungs;
  for (int b : {1, 3})
    if (b < pool_size) rungs.push_back(b);
  rungs.push_back(pool_size);
  return rungs;
}

std::string_view to_string(Proposer p) { return p == Proposer::ForestBo ? "forest-bo" : "random"; }

Proposer proposer_from_string(std::string_view s) {
  if (s == "forest-bo") return Proposer::ForestBo;
  if (s == "random") return Proposer::Random;
  throw UsageError("unknown optimizer '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Acquisition

double expected_improvement(double mean, double stddev, double best, Direction direction) {
  if (stddev < 0.0) throw DomainError("stddev must be >= 0");
  const double improvement = direction == Direction::Maximize ? mean - best : best - mean;
  if (stddev == 0.0) return std::max(0.0, improvement);
  const double z = improvement / stddev;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return std::max(0.0, stddev * (z * cdf + pdf));
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(ConfigSpace space, ObjectiveSpec objective, OptimizerOptions options, std::uint64_t seed)
    : space_(std::move(space)),
      objective_(std::move(objective)),
      options_(std::move(options)),
      seed_(seed),
      rungs_(options_.rung_budgets, options_.eta) {
  if (space_.empty()) throw DomainError("optimizer needs a non-empty space");
  if (options_.init_count >= 1) {
    init_queue_.push_back(space_.default_config());
    if (options_.init_count > 1) {
      for (auto& c : space_.sample_random(derive_seed(seed_, "init"), options_.init_count - 1))
        init_queue_.push_back(std::move(c));
    }
  }
  std::reverse(init_queue_.begin(), init_queue_.end());
  if (options_.surrogate.max_features == 0) {
    // 5/6 of the inputs per split, as in SMAC's forest.
    const double d = static_cast<double>(space_.encoded_width() + 1);
    options_.surrogate.max_features = static_cast<std::size_t>(std::ceil(d * 5.0 / 6.0));
  }
}

Suggestion Optimizer::ask() {
  if (stopped_) throw StateError("ask after the optimizer was stopped");
  Rng rng(derive_seed(seed_, {fnv1a64("ask"), asks_}));
  ++asks_;

  Suggestion s;
  while (!init_queue_.empty()) {
    Configuration c = std::move(init_queue_.back());
    init_queue_.pop_back();
    if (!proposed_.insert(c.id()).second) continue;
    s.config = std::move(c);
    s.is_initialization = true;
    break;
  }
  if (!s.is_initialization) {
    if (auto promo = rungs_.next_promotion(objective_.direction)) {
      s.config = configs_.at(promo->first);
      s.rung = promo->second;
    } else {
      s.config = propose(rng);
    }
  }
  s.budget = rungs_.rung_budgets()[s.rung];
  configs_.emplace(s.config.id(), s.config);
  pending_.emplace(s.config.id(), s.budget);
  return s;
}

Configuration Optimizer::propose(Rng& rng) {
  if (options_.proposer == Proposer::Random || !surrogate_) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Configuration c = space_.sample(rng);
      if (proposed_.insert(c.id()).second) return c;
    }
    throw StateError("could not find an unseen configuration");
  }

  // Incumbent: best score among configs measured at the highest budget so far.
  const double top_budget = *std::max_element(budget_of_row_.begin(), budget_of_row_.end());
  double best = 0.0;
  bool have_best = false;
  for (std::size_t i = 0; i < y_.size(); ++i) {
    if (budget_of_row_[i] != top_budget) continue;
    if (!have_best || better(objective_.direction, y_[i], best)) best = y_[i];
    have_best = true;
  }

  const std::size_t n = std::max<std::size_t>(1, options_.ei_candidates);
  std::vector<double> best_x;
  double best_ei = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> x = space_.sample_encoded(rng);
    x.push_back(1.0);
    const auto [mu, sd] = surrogate_->predict_with_uncertainty(x);
    const double ei = expected_improvement(mu, sd, best, objective_.direction);
    if (ei > best_ei) {
      best_ei = ei;
      best_x = std::move(x);
    }
  }
  best_x.pop_back();
  Configuration c = space_.decode(best_x);
  if (proposed_.insert(c.id()).second) return c;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Configuration r = space_.sample(rng);
    if (proposed_.insert(r.id()).second) return r;
  }
  throw StateError("could not find an unseen configuration");
}

void Optimizer::tell(const Configuration& config, int budget, double score) {
  const auto key = std::make_pair(config.id(), budget);
  if (!pending_.count(key)) throw ProtocolError("tell for a (config, budget) that is not outstanding");
  if (!std::isfinite(score)) throw ValidationError("told score must be finite");
  pending_.erase(key);
  observed_.insert(key);
  rungs_.record(rungs_.rung_of(budget), config.id(), score);

  std::vector<double> row = space_.encode(config);
  row.push_back(static_cast<double>(budget) / static_cast<double>(rungs_.max_budget()));
  x_.append_row(row);
  y_.push_back(score);
  budget_of_row_.push_back(row.back());
  if (options_.proposer == Proposer::ForestBo) refit();
}

void Optimizer::tell_failure(const Configuration& config, int budget) {
  const auto key = std::make_pair(config.id(), budget);
  if (!pending_.erase(key)) throw ProtocolError("tell_failure for a (config, budget) that is not outstanding");
}

void Optimizer::refit() {
  std::vector<std::uint64_t> ids(y_.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  surrogate_ = ForestModel::fit(x_, y_, options_.surrogate, derive_seed(seed_, {fnv1a64("surrogate"), fits_++}), ids);
}

// ---------------------------------------------------------------------------
// Modes

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Tuna: return "tuna";
    case Mode::Traditional: return "traditional";
    case Mode::Naive: return "naive";
    case Mode::ExtendedTraditional: return "extended-traditional";
  }
  return "tuna";
}

Mode mode_from_string(std::string_view s) {
  if (s == "tuna") return Mode::Tuna;
  if (s == "traditional") return Mode::Traditional;
  if (s == "naive" || s == "naive_distributed" || s == "naive-distributed") return Mode::Naive;
  if (s == "extended-traditional" || s == "extended_traditional") return Mode::ExtendedTraditional;
  throw UsageError("unknown mode '" + std::string(s) + "'");
}

ModePolicy run_mode(Mode mode, int pool_size) {
  if (pool_size < 1) throw DomainError("pool size must be >= 1");
  ModePolicy p;
  p.mode = mode;
  switch (mode) {
    case Mode::Tuna:
      p.pool_size = pool_size;
      p.rung_budgets = default_rungs(pool_size);
      break;
    case Mode::Traditional:
    case Mode::ExtendedTraditional:
      p.pool_size = 1;
      p.rung_budgets = {1};
      p.pinned_worker = 0;
      p.detector = false;
      p.model = false;
      break;
    case Mode::Naive:
      p.pool_size = pool_size;
      p.rung_budgets = {pool_size};
      p.detector = false;
      p.model = false;
      break;
  }
  return p;
}

}  // namespace tuna
