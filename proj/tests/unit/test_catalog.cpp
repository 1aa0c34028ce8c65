#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "tuna/catalog.hpp"
#include "tuna/error.hpp"

using namespace tuna;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tuna_catalog_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Configuration cfg(double x) { return Configuration({{"x", x}}); }

TrialRecord trial(const Configuration& c, WorkerId w, double perf, int budget = 1) {
  TrialRecord r;
  r.config_id = c.id();
  r.worker_id = w;
  r.budget = budget;
  r.performance = perf;
  r.metrics = {{"ipc", perf / 100.0}};
  return r;
}

void evaluate(Catalog& cat, const Configuration& c, int budget, double score, bool unstable = false) {
  EvaluationRecord e;
  e.config_id = c.id();
  e.config = c;
  e.budget = budget;
  e.verdict.config_id = c.id();
  e.verdict.is_unstable = unstable;
  e.reported_score = score;
  cat.record_evaluation(e);
}

}  // namespace

TEST_CASE("first append gets trial id 1 and ids increase") {
  Catalog cat;
  const auto c = cfg(1);
  CHECK(cat.append(trial(c, 0, 10)) == 1);
  CHECK(cat.append(trial(c, 1, 11)) == 2);
  CHECK(cat.last_trial_id() == 2);
  CHECK(cat.size() == 2);
}

TEST_CASE("same configuration on the same worker is rejected") {
  Catalog cat;
  const auto c = cfg(1);
  cat.append(trial(c, 3, 10));
  CHECK_THROWS_AS(cat.append(trial(c, 3, 12)), ExclusionViolation);
  CHECK(cat.size() == 1);
  CHECK_NOTHROW(cat.append(trial(cfg(2), 3, 12)));
}

TEST_CASE("append validation") {
  Catalog cat;
  auto r = trial(cfg(1), 0, NAN);
  CHECK_THROWS_AS(cat.append(r), ValidationError);
  r.status = TrialStatus::Crashed;
  CHECK_NOTHROW(cat.append(r));
  auto b = trial(cfg(2), 0, 1.0, 0);
  CHECK_THROWS_AS(cat.append(b), ValidationError);
}

TEST_CASE("samples_for returns records in trial order") {
  Catalog cat;
  const auto a = cfg(1), b = cfg(2);
  cat.append(trial(a, 0, 10));
  cat.append(trial(b, 0, 20));
  cat.append(trial(a, 1, 30));
  const auto s = cat.samples_for(a.id());
  REQUIRE(s.size() == 2);
  CHECK(s[0].trial_id == 1);
  CHECK(s[1].trial_id == 3);
  CHECK(cat.samples_for(cfg(9).id()).empty());
}

TEST_CASE("records survive reopening") {
  TempDir tmp("roundtrip");
  const auto a = cfg(1), b = cfg(2);
  std::vector<TrialRecord> written;
  {
    auto cat = Catalog::open(tmp.path);
    auto r = trial(a, 0, 123.456789012345);
    r.adjusted_performance = 120.0;
    r.wall_time_s = 61.5;
    cat.append(r);
    auto crashed = trial(b, 2, NAN);
    crashed.status = TrialStatus::Crashed;
    cat.append(crashed);
    evaluate(cat, a, 1, 123.0);
    written = cat.records();
  }
  auto cat = Catalog::open(tmp.path);
  CHECK(cat.records() == written);
  CHECK(cat.evaluations().size() == 1);
  CHECK(cat.configuration(a.id()) == a);
  CHECK(cat.append(trial(a, 1, 5)) == 3);
  CHECK_THROWS_AS(cat.append(trial(a, 0, 5)), ExclusionViolation);
}

TEST_CASE("reopen rejects non-increasing trial ids") {
  TempDir tmp("order");
  {
    auto cat = Catalog::open(tmp.path);
    cat.append(trial(cfg(1), 0, 1));
    cat.append(trial(cfg(1), 1, 1));
  }
  std::ifstream in(tmp.path / "trials.jsonl");
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  in.close();
  std::ofstream out(tmp.path / "trials.jsonl", std::ios::trunc);
  out << l2 << '\n' << l1 << '\n';
  out.close();
  CHECK_THROWS_AS(Catalog::open(tmp.path), ValidationError);
}

TEST_CASE("summary tracks the highest budget evaluation") {
  Catalog cat;
  const auto a = cfg(1);
  cat.append(trial(a, 0, 10));
  evaluate(cat, a, 1, 10);
  cat.append(trial(a, 1, 12));
  cat.append(trial(a, 2, 14));
  evaluate(cat, a, 3, 10);
  const auto s = cat.summary(a.id());
  REQUIRE(s);
  CHECK(s->max_budget_reached == 3);
  CHECK(s->samples.size() == 3);
  CHECK(*s->reported_score == 10);
}

TEST_CASE("training rows exclude unstable, failed and lower-budget configurations") {
  Catalog cat;
  const auto full = cfg(1), shaky = cfg(2), partial = cfg(3);
  for (int w = 0; w < 3; ++w) cat.append(trial(full, w, 100 + w, 3));
  evaluate(cat, full, 3, 100);
  for (int w = 0; w < 3; ++w) cat.append(trial(shaky, w, 50 + 40 * w, 3));
  evaluate(cat, shaky, 3, 25, true);
  cat.append(trial(partial, 0, 70));
  evaluate(cat, partial, 1, 70);
  auto dead = trial(full, 5, NAN, 3);
  dead.status = TrialStatus::Timeout;
  cat.append(dead);

  const auto rows = cat.training_rows(3);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.config_id == full.id());
  CHECK(rows[1].worker_id == 1);
  CHECK(rows[1].performance == 101);
  CHECK(rows[1].metrics.at("ipc") == doctest::Approx(1.01));
}

TEST_CASE("best_config respects direction and breaks ties on lower id") {
  Catalog cat;
  const auto a = cfg(1), b = cfg(2);
  cat.append(trial(a, 0, 70.3));
  cat.append(trial(b, 0, 94.5));
  evaluate(cat, a, 1, 70.3);
  evaluate(cat, b, 1, 94.5);
  CHECK(cat.best_config(Direction::Minimize) == a.id());
  CHECK(cat.best_config(Direction::Maximize) == b.id());

  Catalog tie;
  tie.append(trial(a, 0, 5));
  tie.append(trial(b, 0, 5));
  evaluate(tie, a, 1, 5);
  evaluate(tie, b, 1, 5);
  CHECK(tie.best_config(Direction::Maximize) == std::min(a.id(), b.id()));
}

TEST_CASE("best_config at the top budget ignores better low-budget scores") {
  Catalog cat;
  const auto low = cfg(1), high = cfg(2);
  cat.append(trial(low, 0, 999));
  evaluate(cat, low, 1, 999);
  for (int w = 0; w < 3; ++w) cat.append(trial(high, w, 500, 3));
  evaluate(cat, high, 3, 500);
  CHECK(cat.best_config(Direction::Maximize) == low.id());
  CHECK(cat.best_config_at_top_budget(Direction::Maximize) == high.id());
  CHECK(cat.best_config(Direction::Maximize, 3) == high.id());
  CHECK_THROWS_AS(Catalog{}.best_config(Direction::Maximize), StateError);
}

TEST_CASE("manifest round trip") {
  TempDir tmp("manifest");
  auto cat = Catalog::open(tmp.path);
  cat.write_manifest({{"seed", 7}});
  CHECK(Catalog::read_manifest(tmp.path)["seed"] == 7);
  CHECK_THROWS_AS(Catalog::read_manifest(tmp.path / "missing"), StateError);
}

TEST_CASE("status strings") {
  CHECK(trial_status_from_string("timeout") == TrialStatus::Timeout);
  CHECK(to_string(TrialStatus::Crashed) == "crashed");
  CHECK_THROWS_AS(trial_status_from_string("exploded"), ValidationError);
}
