#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tuna/error.hpp"
#include "tuna/simulator.hpp"
#include "tuna/stability.hpp"

using namespace tuna;

namespace {

// Configuration at the center of a planted region, other parameters at the stable optimum.
Configuration region_center(const Environment& env, const UnstableRegion& r) {
  auto x = env.space.encode(env.landscape.stable_optimum_config(env.space));
  std::size_t offset = 0;
  for (const auto& p : env.space.parameters()) {
    auto it = r.center.find(p.name);
    if (it != r.center.end()) x[offset] = it->second;
    offset += p.encoded_width();
  }
  return env.space.decode(x);
}

// Ordinary least squares R^2 via the normal equations (Gauss-Jordan with pivoting).
double ols_r2(const std::vector<std::vector<double>>& xs, const std::vector<double>& y) {
  const std::size_t n = xs.size(), d = xs[0].size() + 1;
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{1.0};
    row.insert(row.end(), xs[i].begin(), xs[i].end());
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += row[r] * row[c];
      a[r][d] += row[r] * y[i];
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= d; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(d);
  for (std::size_t c = 0; c < d; ++c) beta[c] = a[c][d] / a[c][c];
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = beta[0];
    for (std::size_t k = 0; k + 1 < d; ++k) pred += beta[k + 1] * xs[i][k];
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  return 1.0 - ss_res / ss_tot;
}

}  // namespace

TEST_CASE("noise-free unit worker reproduces the landscape") {
  const Environment env = make_environment("smooth", 4);
  WorkerProfile w = env.workers[0];
  CHECK(w.baseline_multiplier == 1.0);
  CHECK(w.noise_cov == 0.0);
  for (const auto& c : env.space.sample_random(1, 50)) {
    const auto out = evaluate_sim(w, env.space, env.landscape, c, 99);
    CHECK(out.performance == env.landscape.performance(env.space, c));
    CHECK(out.delta == 1.0);
  }
}

TEST_CASE("smooth environment is constant across repeats and workers") {
  const Environment env = make_environment("smooth", 4);
  const auto c = env.space.sample_random(2, 1)[0];
  const double f = env.landscape.performance(env.space, c);
  for (const auto& w : env.workers)
    for (std::uint64_t t = 0; t < 5; ++t) CHECK(evaluate_sim(w, env.space, env.landscape, c, t).performance == f);
}

TEST_CASE("slow path on a bad-bit worker scales by the degrade factor") {
  Environment env = make_environment("planted-unstable", 5);
  env.set_noise(0.0);
  const auto& region = env.landscape.regions[0];
  CHECK(region.degrade_factor == 0.25);
  const auto c = region_center(env, region);
  REQUIRE(env.landscape.region_of(env.space, c) != nullptr);
  REQUIRE(env.landscape.region_of(env.space, c)->class_id == region.class_id);
  WorkerProfile bad = env.workers[0];
  bad.baseline_multiplier = 1.0;
  bad.unstable_path_bits[region.class_id] = true;
  WorkerProfile good = bad;
  good.unstable_path_bits[region.class_id] = false;
  const double f = env.landscape.performance(env.space, c);
  CHECK(evaluate_sim(bad, env.space, env.landscape, c, 1).performance == doctest::Approx(0.25 * f));
  CHECK(evaluate_sim(good, env.space, env.landscape, c, 1).performance == doctest::Approx(f));
}

TEST_CASE("planted regions tempt the optimizer") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Environment env = make_environment("planted-unstable", seed);
    REQUIRE(env.landscape.regions.size() >= 3);
    const double stable = env.landscape.stable_optimum();
    for (const auto& r : env.landscape.regions) {
      CHECK(r.worker_bad_fraction == 0.5);
      CHECK(env.landscape.performance(env.space, region_center(env, r)) > stable);
    }
    CHECK(env.landscape.region_of(env.space, env.landscape.stable_optimum_config(env.space)) == nullptr);
  }
}

TEST_CASE("about half the workers take the slow path") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Environment env = make_environment("planted-unstable", seed);
    const auto& r = env.landscape.regions[0];
    const auto c = region_center(env, r);
    int bad = 0;
    for (const auto& w : env.workers) bad += evaluate_sim(w, env.space, env.landscape, c, 0).slow_path ? 1 : 0;
    total += bad;
  }
  CHECK(std::abs(total / 100.0 - 5.0) < 0.6);
}

TEST_CASE("mixed good and bad workers trip the detector") {
  int flagged = 0, mixed = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const Environment env = make_environment("planted-unstable", seed);
    const auto& r = env.landscape.regions[0];
    const auto c = region_center(env, r);
    std::vector<double> samples;
    int bad = 0;
    for (const auto& w : env.workers) {
      const auto out = evaluate_sim(w, env.space, env.landscape, c, seed);
      samples.push_back(out.performance);
      bad += out.slow_path ? 1 : 0;
    }
    if (bad == 0 || bad == 10) continue;
    ++mixed;
    flagged += classify(samples).is_unstable ? 1 : 0;
  }
  REQUIRE(mixed > 150);
  CHECK(flagged >= 0.99 * mixed);
}

TEST_CASE("inject_noise moments and truncation") {
  CHECK(inject_noise(100.0, 0.0, 1) == 100.0);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = inject_noise(100.0, 0.05, static_cast<std::uint64_t>(i));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(mean >= 99.8);
  CHECK(mean <= 100.2);
  CHECK(sd / mean >= 0.048);
  CHECK(sd / mean <= 0.052);

  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 1000000; ++i) {
    const double v = inject_noise(100.0, 0.5, static_cast<std::uint64_t>(i) + 7777777);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 10.0);
  CHECK(hi <= 190.0);
}

TEST_CASE("metrics explain the realized noise") {
  const Environment env = make_environment("learnable-noise", 8);
  std::vector<std::vector<double>> xs;
  std::vector<double> deltas;
  const auto configs = env.space.sample_random(3, 100);
  for (int t = 0; t < 1000; ++t) {
    const auto& w = env.workers[static_cast<std::size_t>(t) % env.workers.size()];
    const auto out = evaluate_sim(w, env.space, env.landscape, configs[static_cast<std::size_t>(t) % 100],
                                  static_cast<std::uint64_t>(t));
    std::vector<double> row;
    for (const auto& [name, v] : out.metrics) row.push_back(v);
    REQUIRE(row.size() == 20);
    xs.push_back(row);
    deltas.push_back(out.delta);
  }
  CHECK(ols_r2(xs, deltas) >= 0.9);
  CHECK(metric_names().size() == 20);
}

TEST_CASE("trial seeds separate every input") {
  const ConfigId a{1}, b{2};
  const auto base = trial_seed(1, 0, a, 0);
  CHECK(trial_seed(1, 0, a, 0) == base);
  CHECK(trial_seed(2, 0, a, 0) != base);
  CHECK(trial_seed(1, 1, a, 0) != base);
  CHECK(trial_seed(1, 0, b, 0) != base);
  CHECK(trial_seed(1, 0, a, 1) != base);
}

TEST_CASE("environment JSON round trip") {
  const Environment env = make_environment("planted-unstable", 12);
  const Environment back = Environment::from_json(env.to_json());
  CHECK(back.to_json() == env.to_json());
  const auto c = env.space.sample_random(5, 1)[0];
  CHECK(back.landscape.performance(back.space, c) == env.landscape.performance(env.space, c));
}

TEST_CASE("fresh worker populations differ by seed") {
  const Environment env = make_environment("learnable-noise", 1);
  const auto a = env.make_workers(10, 10), b = env.make_workers(11, 10), c = env.make_workers(10, 10);
  CHECK(a[0].baseline_multiplier != b[0].baseline_multiplier);
  CHECK(a[0].baseline_multiplier == c[0].baseline_multiplier);
}

TEST_CASE("scenario errors") {
  CHECK_THROWS_AS(make_environment("volcano", 1), UsageError);
  Environment env = make_environment("smooth", 1);
  CHECK_THROWS_AS(env.set_noise(0.6), ValidationError);
}
