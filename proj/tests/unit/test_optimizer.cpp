#include <doctest.h>

#include <cmath>
#include <set>

#include "tuna/error.hpp"
#include "tuna/optimizer.hpp"
#include "tuna/random.hpp"

using namespace tuna;

namespace {

ConfigSpace space() {
  return ConfigSpace({
      ParameterDef::continuous("x", 0.0, 1.0, false, 0.5),
      ParameterDef::integer("k", 1, 16, false, 4),
      ParameterDef::categorical("mode", {"a", "b"}, "a"),
  });
}

Configuration cfg(double x) { return Configuration({{"x", x}}); }

double phi0() { return 1.0 / std::sqrt(2.0 * M_PI); }

// Independent EI for maximize via the textbook formula with std::erf.
double ei_oracle(double mu, double sd, double best) {
  if (sd == 0.0) return std::max(0.0, mu - best);
  const double z = (mu - best) / sd;
  const double cdf = 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return (mu - best) * cdf + sd * pdf;
}

}  // namespace

TEST_CASE("rung promotion picks the best of three") {
  SuccessiveHalving sh({1, 3, 10}, 3);
  sh.record(0, cfg(0.1).id(), 5);
  CHECK_FALSE(sh.next_promotion(Direction::Maximize));
  sh.record(0, cfg(0.2).id(), 9);
  sh.record(0, cfg(0.3).id(), 7);
  const auto p = sh.next_promotion(Direction::Maximize);
  REQUIRE(p);
  CHECK(p->first == cfg(0.2).id());
  CHECK(p->second == 1);
  CHECK_FALSE(sh.next_promotion(Direction::Maximize));
}

TEST_CASE("minimize promotes the lowest score") {
  SuccessiveHalving sh({1, 3, 10}, 3);
  sh.record(0, cfg(0.1).id(), 5);
  sh.record(0, cfg(0.2).id(), 9);
  sh.record(0, cfg(0.3).id(), 7);
  CHECK(sh.next_promotion(Direction::Minimize)->first == cfg(0.1).id());
}

TEST_CASE("nine completions at the middle rung promote three") {
  SuccessiveHalving sh({1, 3, 10}, 3);
  std::vector<ConfigId> ids;
  for (int i = 0; i < 9; ++i) ids.push_back(cfg(i / 10.0).id());
  for (int i = 0; i < 9; ++i) sh.record(1, ids[i], i);
  CHECK(sh.quota(1) == 3);
  std::set<ConfigId> promoted;
  while (auto p = sh.next_promotion(Direction::Maximize)) {
    CHECK(p->second == 2);
    promoted.insert(p->first);
  }
  CHECK(promoted == std::set<ConfigId>{ids[6], ids[7], ids[8]});
  CHECK(sh.promoted_count(1) == 3);
}

TEST_CASE("higher rungs are served first") {
  SuccessiveHalving sh({1, 3, 10}, 3);
  for (int i = 0; i < 3; ++i) sh.record(0, cfg(0.1 * i).id(), i);
  for (int i = 0; i < 3; ++i) sh.record(1, cfg(0.5 + 0.1 * i).id(), i);
  CHECK(sh.next_promotion(Direction::Maximize)->second == 2);
  CHECK(sh.next_promotion(Direction::Maximize)->second == 1);
}

TEST_CASE("rung helpers") {
  CHECK(default_rungs(10) == std::vector<int>{1, 3, 10});
  CHECK(default_rungs(3) == std::vector<int>{1, 3});
  CHECK(default_rungs(1) == std::vector<int>{1});
  SuccessiveHalving sh;
  CHECK(sh.rung_of(3) == 1);
  CHECK_THROWS_AS(sh.rung_of(4), ProtocolError);
}

TEST_CASE("expected improvement closed forms") {
  CHECK(expected_improvement(5.0, 0.0, 5.0, Direction::Maximize) == 0.0);
  CHECK(expected_improvement(7.0, 0.0, 5.0, Direction::Maximize) == 2.0);
  CHECK(expected_improvement(3.0, 0.0, 5.0, Direction::Minimize) == 2.0);
  CHECK(expected_improvement(5.0, 1.0, 5.0, Direction::Maximize) == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(expected_improvement(5.0, 1.0, 5.0, Direction::Maximize) == doctest::Approx(phi0()));
}

TEST_CASE("expected improvement properties over random triples") {
  Rng rng(31);
  for (int t = 0; t < 10000; ++t) {
    const double mu = rng.uniform(-10, 10), best = rng.uniform(-10, 10);
    const double sd = t % 10 == 0 ? 0.0 : rng.uniform(0, 5);
    const double e = expected_improvement(mu, sd, best, Direction::Maximize);
    CHECK(e >= 0.0);
    CHECK(e == doctest::Approx(ei_oracle(mu, sd, best)).epsilon(1e-9).scale(1.0));
    // Minimization is maximization of the negated objective.
    CHECK(expected_improvement(-mu, sd, -best, Direction::Minimize) == doctest::Approx(e).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("first ask is the default configuration at budget 1") {
  Optimizer opt(space(), {}, {}, 1);
  const auto s = opt.ask();
  CHECK(s.config == space().default_config());
  CHECK(s.budget == 1);
  CHECK(s.is_initialization);
}

TEST_CASE("initialization yields ten distinct configs before anything else") {
  Optimizer opt(space(), {}, {}, 2);
  std::set<ConfigId> ids;
  for (int i = 0; i < 10; ++i) {
    const auto s = opt.ask();
    CHECK(s.is_initialization);
    CHECK(s.budget == 1);
    ids.insert(s.config.id());
  }
  CHECK(ids.size() == 10);
  CHECK_FALSE(opt.ask().is_initialization);
}

TEST_CASE("tell protocol") {
  Optimizer opt(space(), {}, {}, 3);
  const auto s = opt.ask();
  CHECK_THROWS_AS(opt.tell(s.config, 3, 1.0), ProtocolError);
  CHECK_THROWS_AS(opt.tell(s.config, s.budget, NAN), ValidationError);
  opt.tell(s.config, s.budget, 1.0);
  CHECK_THROWS_AS(opt.tell(s.config, s.budget, 1.0), ProtocolError);
  CHECK(opt.surrogate_active());
  const auto f = opt.ask();
  opt.tell_failure(f.config, f.budget);
  CHECK(opt.outstanding() == 0);
  CHECK_THROWS_AS(opt.tell_failure(f.config, f.budget), ProtocolError);
}

TEST_CASE("ask after stop is a state error") {
  Optimizer opt(space(), {}, {}, 3);
  opt.stop();
  CHECK_THROWS_AS(opt.ask(), StateError);
}

TEST_CASE("full loop: valid suggestions, budgets climb rung by rung, out-of-order tells") {
  OptimizerOptions o;
  o.ei_candidates = 200;
  Optimizer opt(space(), {}, o, 4);
  std::map<ConfigId, std::vector<int>> told;
  std::vector<Suggestion> outstanding;
  for (int round = 0; round < 40; ++round) {
    for (int i = 0; i < 3; ++i) {
      const auto s = opt.ask();
      CHECK(space().contains(s.config));
      outstanding.push_back(s);
    }
    // Tell newest first.
    while (!outstanding.empty()) {
      const auto s = outstanding.back();
      outstanding.pop_back();
      const double score = 1.0 + s.config.number("x") + 0.01 * static_cast<double>(s.config.number("k"));
      opt.tell(s.config, s.budget, score);
      told[s.config.id()].push_back(s.budget);
    }
  }
  const std::vector<int> ladder{1, 3, 10};
  bool reached_top = false;
  for (const auto& [id, budgets] : told) {
    REQUIRE(budgets.size() <= 3);
    for (std::size_t i = 0; i < budgets.size(); ++i) CHECK(budgets[i] == ladder[i]);
    reached_top |= budgets.size() == 3;
  }
  CHECK(reached_top);
}

TEST_CASE("equal scores do not break proposal") {
  OptimizerOptions o;
  o.ei_candidates = 100;
  o.init_count = 2;
  Optimizer opt(space(), {}, o, 5);
  for (int i = 0; i < 20; ++i) {
    const auto s = opt.ask();
    CHECK(space().contains(s.config));
    opt.tell(s.config, s.budget, 1.0);
  }
}

TEST_CASE("identical seeds give identical transcripts") {
  auto run = [](std::uint64_t seed) {
    OptimizerOptions o;
    o.ei_candidates = 300;
    Optimizer opt(space(), {}, o, seed);
    std::vector<std::pair<ConfigId, int>> t;
    for (int i = 0; i < 30; ++i) {
      const auto s = opt.ask();
      t.emplace_back(s.config.id(), s.budget);
      opt.tell(s.config, s.budget, std::sin(10 * s.config.number("x")) + 2);
    }
    return t;
  };
  CHECK(run(9) == run(9));
  CHECK(run(9) != run(10));
}

TEST_CASE("random proposer never fits a surrogate") {
  OptimizerOptions o;
  o.proposer = Proposer::Random;
  Optimizer opt(space(), {}, o, 6);
  for (int i = 0; i < 15; ++i) {
    const auto s = opt.ask();
    opt.tell(s.config, s.budget, 1.0 + i);
  }
  CHECK_FALSE(opt.surrogate_active());
  CHECK(proposer_from_string("random") == Proposer::Random);
  CHECK(proposer_from_string(to_string(Proposer::ForestBo)) == Proposer::ForestBo);
}

TEST_CASE("mode policies") {
  const auto trad = run_mode(Mode::Traditional, 10);
  CHECK(trad.rung_budgets == std::vector<int>{1});
  CHECK(trad.pinned_worker == 0);
  CHECK_FALSE(trad.detector);
  CHECK_FALSE(trad.model);

  const auto naive = run_mode(Mode::Naive, 10);
  CHECK(naive.rung_budgets == std::vector<int>{10});
  CHECK_FALSE(naive.pinned_worker);

  const auto tuna = run_mode(Mode::Tuna, 10);
  CHECK(tuna.rung_budgets == std::vector<int>{1, 3, 10});
  CHECK(tuna.detector);
  CHECK(tuna.model);

  CHECK(run_mode(Mode::ExtendedTraditional, 10).pinned_worker == 0);
  CHECK(mode_from_string("naive_distributed") == Mode::Naive);
  CHECK(mode_from_string("extended-traditional") == Mode::ExtendedTraditional);
  CHECK_THROWS_AS(mode_from_string("chaos"), UsageError);
}
