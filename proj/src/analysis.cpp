// SPDX-License-Identifier: Apache-2.0
#include "tuna/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tuna/error.hpp"

namespace tuna {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  const double m = mean(xs);
  // Rounding in the mean would otherwise leave a tiny spread for constant input.
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

double cov(std::span<const double> xs) {
  const double m = mean(xs);
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x));
  if (std::abs(m) < 1e-12 * scale || m == 0.0) throw DegenerateInputError("coefficient of variation with ~0 mean");
  return stddev(xs) / std::abs(m);
}

// ---------------------------------------------------------------------------
// Convergence

ConvergenceCurve::ConvergenceCurve(Direction direction, std::uint64_t seed, std::string mode)
    : direction_(direction), seed_(seed), mode_(std::move(mode)) {}

void ConvergenceCurve::extend_to(std::uint64_t iteration) {
  const double last = values_.empty() ? std::nan("") : values_.back();
  while (values_.size() < iteration) values_.push_back(last);
}

void ConvergenceCurve::observe(std::uint64_t iteration, double value) {
  if (iteration == 0) throw DomainError("iterations are 1-based");
  if (iteration < values_.size()) throw DomainError("curve observations must not go back in time");
  extend_to(iteration);
  double& slot = values_[iteration - 1];
  if (std::isnan(slot) || better(direction_, value, slot)) slot = value;
}

double ConvergenceCurve::at(std::uint64_t iteration) const {
  if (values_.empty() || iteration == 0) return std::nan("");
  return values_[std::min<std::uint64_t>(iteration, values_.size()) - 1];
}

std::optional<std::uint64_t> ConvergenceCurve::first_hit(double target) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (std::isnan(v)) continue;
    if (direction_ == Direction::Maximize ? v >= target : v <= target) return i + 1;
  }
  return std::nullopt;
}

ConvergenceCurve ConvergenceCurve::from_values(Direction direction, std::vector<double> values) {
  ConvergenceCurve c(direction);
  for (std::size_t i = 0; i < values.size(); ++i) {
    c.extend_to(i + 1);
    if (!std::isnan(values[i])) c.observe(i + 1, values[i]);
  }
  return c;
}

std::vector<double> mean_curve(std::span<const ConvergenceCurve> curves) {
  if (curves.empty()) return {};
  std::size_t len = curves.front().length();
  for (const auto& c : curves) len = std::min<std::size_t>(len, c.length());
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    for (const auto& c : curves) out[i] += c.values()[i];
    out[i] /= static_cast<double>(curves.size());
  }
  return out;
}

TimeToOptimal time_to_optimal(const ConvergenceCurve& a, const ConvergenceCurve& b, double target_fraction,
                              double optimum) {
  if (!(target_fraction > 0.0)) throw DomainError("target fraction must be positive");
  const double target = a.direction() == Direction::Maximize ? target_fraction * optimum : optimum / target_fraction;
  TimeToOptimal r;
  r.hit_a = a.first_hit(target);
  r.hit_b = b.first_hit(target);
  r.max_iteration = std::max(a.length(), b.length());
  if (r.hit_a && r.hit_b) r.ratio = static_cast<double>(*r.hit_b) / static_cast<double>(*r.hit_a);
  return r;
}

// ---------------------------------------------------------------------------
// Detection

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) is divisible by i at every step.
    const unsigned __int128 next = static_cast<unsigned __int128>(r) * (n - k + i) / i;
    if (next > std::numeric_limits<std::uint64_t>::max()) throw CapacityError("binomial overflow");
    r = static_cast<std::uint64_t>(next);
  }
  return r;
}

double detection_probability(int n_sampled, int pool, int bad_workers) {
  if (pool < 1 || n_sampled < 1 || n_sampled > pool) throw DomainError("need 1 <= n_sampled <= pool");
  if (bad_workers < 0 || bad_workers > pool) throw DomainError("need 0 <= bad_workers <= pool");
  const auto n = static_cast<std::uint64_t>(n_sampled);
  const std::uint64_t total = binomial(static_cast<std::uint64_t>(pool), n);
  const std::uint64_t all_bad = binomial(static_cast<std::uint64_t>(bad_workers), n);
  const std::uint64_t all_good = binomial(static_cast<std::uint64_t>(pool - bad_workers), n);
  return static_cast<double>(total - all_bad - all_good) / static_cast<double>(total);
}

namespace {

void check_profiles(std::span<const double> fractions, int n_unstable, double confidence) {
  if (fractions.empty()) throw DomainError("no instability profiles given");
  if (n_unstable < 1) throw DomainError("need at least one unstable config per run");
  if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("confidence must be in (0, 1)");
  for (double f : fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("bad fraction must be in [0, 1]");
}

bool any_degenerate(std::span<const double> fractions) {
  return std::any_of(fractions.begin(), fractions.end(), [](double f) { return f <= 0.0 || f >= 1.0; });
}

}  // namespace

double cluster_detection_exact(std::span<const double> bad_fractions, int n_unstable_per_run, int pool) {
  double per_config = 0.0;
  for (double f : bad_fractions) per_config += 1.0 - std::pow(f, pool) - std::pow(1.0 - f, pool);
  per_config /= static_cast<double>(bad_fractions.size());
  return std::pow(per_config, n_unstable_per_run);
}

std::optional<int> min_cluster_size_exact(std::span<const double> bad_fractions, int n_unstable_per_run,
                                          double confidence, int max_pool) {
  check_profiles(bad_fractions, n_unstable_per_run, confidence);
  if (any_degenerate(bad_fractions)) return std::nullopt;
  for (int n = 1; n <= max_pool; ++n)
    if (cluster_detection_exact(bad_fractions, n_unstable_per_run, n) >= confidence) return n;
  return std::nullopt;
}

ClusterSizeResult min_cluster_size(std::span<const double> bad_fractions, int n_unstable_per_run, double confidence,
                                   std::uint64_t seed, std::size_t replicates, int max_pool) {
  check_profiles(bad_fractions, n_unstable_per_run, confidence);
  ClusterSizeResult result;
  if (any_degenerate(bad_fractions)) return result;
  if (replicates == 0) throw DomainError("replicates must be positive");
  for (int n = 1; n <= max_pool; ++n) {
    Rng rng(derive_seed(seed, {fnv1a64("cluster-size"), static_cast<std::uint64_t>(n)}));
    std::size_t detected = 0;
    for (std::size_t r = 0; r < replicates; ++r) {
      double p = 1.0;
      for (int k = 0; k < n_unstable_per_run && p > 0.0; ++k) {
        const double f = bad_fractions[rng.index(bad_fractions.size())];
        int bad = 0;
        for (int w = 0; w < n; ++w) bad += rng.uniform() < f ? 1 : 0;
        p *= detection_probability(n, n, bad);
      }
      detected += p > 0.5 ? 1 : 0;
    }
    const double estimate = static_cast<double>(detected) / static_cast<double>(replicates);
    if (estimate >= confidence) {
      result.size = n;
      result.estimate = estimate;
      result.achievable = true;
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Deployment

nlohmann::json DeploymentReport::to_json() const {
  nlohmann::json j;
  j["config_id"] = config_id.hex();
  j["mean"] = mean;
  j["stddev"] = stddev;
  j["cov"] = cov;
  j["relative_range"] = relative_range;
  j["crashed"] = crashed;
  j["samples"] = performances.size();
  return j;
}

DeploymentReport summarize_deployment(ConfigId id, std::vector<std::pair<WorkerId, double>> performances) {
  DeploymentReport r;
  r.config_id = id;
  r.performances = std::move(performances);
  std::vector<double> ok;
  for (const auto& [w, p] : r.performances) {
    if (std::isfinite(p)) ok.push_back(p);
    else ++r.crashed;
  }
  if (ok.empty()) return r;
  r.mean = tuna::mean(ok);
  r.stddev = tuna::stddev(ok);
  r.cov = r.mean != 0.0 ? r.stddev / std::abs(r.mean) : 0.0;
  r.relative_range = relative_range(ok);
  return r;
}

DeploymentReport deployment_eval(const Environment& env, const Configuration& config,
                                 const std::vector<WorkerProfile>& fresh_workers, std::size_t replicates,
                                 std::uint64_t seed) {
  if (fresh_workers.empty()) throw DomainError("no deployment workers");
  if (replicates == 0) throw DomainError("replicates must be positive");
  std::vector<std::pair<WorkerId, double>> perf;
  for (const auto& w : fresh_workers)
    for (std::size_t r = 0; r < replicates; ++r)
      perf.emplace_back(w.worker_id,
                        evaluate_sim(w, env.space, env.landscape, config, trial_seed(seed, w.worker_id, config.id(), r))
                            .performance);
  return summarize_deployment(config.id(), std::move(perf));
}

double mean_abs_relative_error(std::span<const double> values, std::span<const double> truths) {
  if (values.size() != truths.size()) throw ValidationError("value/truth length mismatch");
  if (values.empty()) throw DomainError("no values");
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += std::abs(values[i] - truths[i]) / std::abs(truths[i]);
  return s / static_cast<double>(values.size());
}

void write_curve_csv(const std::filesystem::path& path, std::span<const ConvergenceCurve> curves) {
  std::ofstream out(path);
  out << "iteration,best_so_far,seed,mode\n";
  out.precision(17);
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.values().size(); ++i) {
      if (std::isnan(c.values()[i])) continue;
      out << i + 1 << ',' << c.values()[i] << ',' << c.seed() << ',' << c.mode() << '\n';
    }
  if (!out) throw StateError("cannot write " + path.string());
}

void write_deploy_csv(const std::filesystem::path& path, std::span<const DeploymentReport> reports) {
  std::ofstream out(path);
  out << "config_id,worker,performance\n";
  out.precision(17);
  for (const auto& r : reports)
    for (const auto& [w, p] : r.performances) out << r.config_id.hex() << ',' << w << ',' << p << '\n';
  if (!out) throw StateError("cannot write " + path.string());
}

}  // namespace tuna
