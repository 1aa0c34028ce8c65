#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "tuna/cluster.hpp"
#include "tuna/error.hpp"
#include "tuna/simulator.hpp"

using namespace tuna;

namespace {

Configuration cfg(double x) { return Configuration({{"x", x}}); }

std::string fixture(const std::string& name) { return std::string(TUNA_FIXTURES) + "/" + name; }

std::set<WorkerId> workers_of(const std::vector<Assignment>& as, std::uint64_t evaluation) {
  std::set<WorkerId> out;
  for (const auto& a : as)
    if (a.evaluation_id == evaluation) out.insert(a.worker_id);
  return out;
}

}  // namespace

TEST_CASE("enqueue reuses prior samples") {
  Scheduler s(10);
  const auto e = s.enqueue(cfg(1), 3, {1});
  REQUIRE(e);
  CHECK(e->remaining() == 2);
  CHECK_FALSE(e->eligible(1));
  CHECK(e->eligible(0));

  const auto fresh = s.enqueue(cfg(2), 1, {});
  REQUIRE(fresh);
  CHECK(fresh->remaining() == 1);
  CHECK(fresh->already_sampled_workers.empty());
}

TEST_CASE("enqueue at the full pool requires exactly the unused workers") {
  Scheduler s(10);
  const auto e = s.enqueue(cfg(1), 10, {2, 5, 8});
  REQUIRE(e);
  CHECK(e->remaining() == 7);
  const auto as = s.dispatch();
  CHECK(workers_of(as, e->evaluation_id) == std::set<WorkerId>{0, 1, 3, 4, 6, 7, 9});
  CHECK(s.idle_count() == 3);
  CHECK(s.queue_empty());
}

TEST_CASE("enqueue errors and no-op") {
  Scheduler s(10);
  CHECK_THROWS_AS(s.enqueue(cfg(1), 11, {}), CapacityError);
  CHECK_THROWS_AS(s.enqueue(cfg(1), 3, {12}), ValidationError);
  CHECK_FALSE(s.enqueue(cfg(1), 3, {0, 1, 2}));
  Scheduler pinned(3);
  CHECK_THROWS_AS(pinned.enqueue(cfg(1), 2, {}, 0), CapacityError);
  CHECK_THROWS_AS(pinned.enqueue(cfg(1), 2, {0}, 0), CapacityError);
}

TEST_CASE("a later entry overtakes one whose eligible workers are busy") {
  Scheduler t(3);
  // Occupy workers 0 and 2.
  t.enqueue(cfg(10), 1, {}, 0);
  t.enqueue(cfg(11), 1, {}, 2);
  REQUIRE(t.dispatch().size() == 2);
  const auto blocked = t.enqueue(cfg(1), 2, {1});  // needs a worker other than 1; 0 and 2 are busy
  const auto free = t.enqueue(cfg(2), 1, {});
  const auto as = t.dispatch();
  REQUIRE(as.size() == 1);
  CHECK(as[0].evaluation_id == free->evaluation_id);
  CHECK(as[0].worker_id == 1);
  CHECK(t.queue().front().evaluation_id == blocked->evaluation_id);
}

TEST_CASE("all workers busy gives an empty dispatch") {
  Scheduler s(2);
  s.enqueue(cfg(1), 2, {});
  CHECK(s.dispatch().size() == 2);
  s.enqueue(cfg(2), 1, {});
  CHECK(s.dispatch().empty());
  CHECK(s.queued_demand() == 1);
  s.release(1);
  const auto as = s.dispatch();
  REQUIRE(as.size() == 1);
  CHECK(as[0].worker_id == 1);
  s.release(1);
  CHECK_THROWS_AS(s.release(1), StateError);
}

TEST_CASE("dispatch is work conserving and never double-books") {
  Scheduler s(10);
  Rng rng(8);
  std::set<std::pair<std::uint64_t, WorkerId>> placed;
  std::vector<WorkerId> running;
  for (int round = 0; round < 300; ++round) {
    if (rng.uniform() < 0.6) {
      const int budget = rng.uniform() < 0.5 ? 1 : 3;
      std::set<WorkerId> prior;
      if (budget == 3) prior.insert(static_cast<WorkerId>(rng.index(10)));
      s.enqueue(cfg(round), budget, prior);
      for (WorkerId w : prior) placed.insert({cfg(round).id().value, w});
    }
    for (const auto& a : s.dispatch()) {
      CHECK(placed.insert({a.config.id().value, a.worker_id}).second);
      running.push_back(a.worker_id);
    }
    // Work conservation: nothing left that an idle worker could take.
    for (const auto& e : s.queue())
      for (WorkerId w = 0; w < 10; ++w) CHECK_FALSE((!s.busy(w) && e.eligible(w) && e.undispatched() > 0));
    CHECK(s.in_flight() == running.size());
    if (!running.empty() && rng.uniform() < 0.7) {
      const std::size_t i = rng.index(running.size());
      s.release(running[i]);
      running.erase(running.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
}

TEST_CASE("simulated backend is deterministic in its inputs") {
  const Environment env = make_environment("learnable-noise", 3);
  const SimulatedBackend a(env, 42), b(env, 42), c(env, 43);
  const auto config = env.space.default_config();
  const auto ra = a.run(2, config, 7);
  const auto rb = b.run(2, config, 7);
  CHECK(ra.performance == rb.performance);
  CHECK(ra.metrics == rb.metrics);
  CHECK(ra.wall_time_s == rb.wall_time_s);
  CHECK(c.run(2, config, 7).performance != ra.performance);
  CHECK(a.run(2, config, 8).performance != ra.performance);
}

TEST_CASE("virtual clock releases completions in time order") {
  const Environment env = make_environment("smooth", 1);
  const SimulatedBackend backend(env, 5);
  VirtualClockExecutor ex(backend);
  for (WorkerId w = 0; w < 5; ++w) ex.start(Assignment{1, w, env.space.default_config()}, w);
  CHECK(ex.in_flight() == 5);
  double last = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto c = ex.wait();
    CHECK(c.finished_at >= last);
    last = c.finished_at;
  }
  CHECK(ex.in_flight() == 0);
}

TEST_CASE("parse_trial_output") {
  const auto r = parse_trial_output("noise\n{\"performance\": 12.5, \"metrics\": {\"a\": 1, \"b\": \"x\"}}\n\n");
  CHECK(r.status == TrialStatus::Ok);
  CHECK(r.performance == 12.5);
  CHECK(r.metrics == std::map<std::string, double>{{"a", 1.0}});
  CHECK(parse_trial_output("not json").status == TrialStatus::Crashed);
  CHECK(parse_trial_output("{\"metrics\": {}}").status == TrialStatus::Crashed);
  CHECK(parse_trial_output("").status == TrialStatus::Crashed);
}

TEST_CASE("command backend echoes the fixture payload") {
  const CommandBackend backend("python3 " + fixture("quadratic.py"), 30);
  const Configuration c({{"x", 0.5}, {"mode", std::string("a")}});
  const auto r = backend.run(4, c, 1);
  REQUIRE(r.status == TrialStatus::Ok);
  CHECK(r.performance == doctest::Approx(1000.0 - 800.0 * 0.04));
  CHECK(r.metrics.at("x_echo") == 0.5);
  CHECK(r.metrics.at("worker") == 4.0);
  CHECK(r.wall_time_s > 0.0);
  CHECK(backend.run(3, c, 1).performance == doctest::Approx(0.9 * (1000.0 - 800.0 * 0.04)));
}

TEST_CASE("command backend maps failures to statuses") {
  const Configuration crash({{"x", 0.95}, {"mode", std::string("b")}});
  CHECK(CommandBackend("python3 " + fixture("quadratic.py"), 30).run(0, crash, 1).status == TrialStatus::Crashed);
  CHECK(CommandBackend("exit 3").run(0, crash, 1).status == TrialStatus::Crashed);
  const auto slow = CommandBackend("sleep 5; echo '{\"performance\": 1}'", 0.3).run(0, crash, 1);
  CHECK(slow.status == TrialStatus::Timeout);
  CHECK(slow.wall_time_s < 3.0);
}

TEST_CASE("threaded executor runs trials concurrently") {
  const CommandBackend backend("sleep 0.3; echo '{\"performance\": '$TUNA_WORKER_ID'}'", 10);
  ThreadedExecutor ex(backend);
  const auto t0 = std::chrono::steady_clock::now();
  for (WorkerId w = 0; w < 4; ++w) ex.start(Assignment{1, w, cfg(0)}, w);
  std::set<double> seen;
  for (int i = 0; i < 4; ++i) {
    const auto c = ex.wait();
    CHECK(c.result.performance == c.assignment.worker_id);
    seen.insert(c.result.performance);
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seen.size() == 4);
  CHECK(elapsed < 1.0);
  CHECK(ex.in_flight() == 0);
}
