// SPDX-License-Identifier: Apache-2.0
#include "tuna/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "tuna/error.hpp"

namespace tuna {

using nlohmann::json;

// ---------------------------------------------------------------------------
// RunConfig

json RunConfig::to_json() const {
  json j;
  j["mode"] = std::string(to_string(mode));
  j["env"] = env_name;
  j["env_file"] = env_file ? json(*env_file) : json(nullptr);
  j["exec"] = exec_command ? json(*exec_command) : json(nullptr);
  j["space_file"] = space_file ? json(*space_file) : json(nullptr);
  j["seed"] = seed;
  j["trials"] = trials;
  j["pool"] = pool;
  j["threshold"] = threshold;
  j["model"] = model;
  j["detector"] = detector;
  j["direction"] = std::string(to_string(direction));
  j["optimizer"] = std::string(to_string(optimizer));
  j["noise"] = noise ? json(*noise) : json(nullptr);
  j["guardrail"] = guardrail ? json(*guardrail) : json(nullptr);
  j["timeout_s"] = timeout_s;
  j["deploy_workers"] = deploy_workers;
  j["ei_candidates"] = ei_candidates;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  auto opt_string = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  auto opt_double = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  RunConfig c;
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.env_name = j.value("env", std::string("smooth"));
  c.env_file = opt_string("env_file");
  c.exec_command = opt_string("exec");
  c.space_file = opt_string("space_file");
  c.seed = j.at("seed").get<std::uint64_t>();
  c.trials = j.at("trials").get<std::size_t>();
  c.pool = j.value("pool", 10);
  c.threshold = j.value("threshold", kDefaultThreshold);
  c.model = j.value("model", true);
  c.detector = j.value("detector", true);
  c.direction = direction_from_string(j.value("direction", std::string("maximize")));
  c.optimizer = proposer_from_string(j.value("optimizer", std::string("forest-bo")));
  c.noise = opt_double("noise");
  c.guardrail = opt_double("guardrail");
  c.timeout_s = j.value("timeout_s", 600.0);
  c.deploy_workers = j.value("deploy_workers", std::size_t{10});
  c.ei_candidates = j.value("ei_candidates", std::size_t{5000});
  return c;
}

void RunConfig::check() const {
  if (trials < 1) throw UsageError("--trials must be >= 1");
  if (pool < 1) throw UsageError("--pool must be >= 1");
  if (threshold < kMinThreshold || threshold > kMaxThreshold)
    throw UsageError("--threshold must be in [0.15, 0.30]");
  if (noise && (*noise < 0.0 || *noise > 0.5)) throw UsageError("--noise must be in [0, 0.5]");
  if (exec_command && !space_file) throw UsageError("--exec requires --space");
  if (exec_command && noise) throw UsageError("--noise applies to simulated environments only");
  if (guardrail && !(*guardrail > 0.0 && *guardrail < 1.0)) throw UsageError("--guardrail must be in (0, 1)");
  if (!exec_command && direction != Direction::Maximize)
    throw UsageError("simulated environments are throughput-style (maximize)");
}

// ---------------------------------------------------------------------------
// Environment helpers

Environment resolve_environment(const RunConfig& config) {
  Environment env;
  if (config.env_file) {
    env = Environment::load(*config.env_file);
    if (env.workers.size() < static_cast<std::size_t>(config.pool))
      env.workers = env.make_workers(derive_seed(config.seed, "workers"), static_cast<std::size_t>(config.pool));
  } else {
    env = make_environment(config.env_name, config.seed, static_cast<std::size_t>(config.pool));
  }
  if (config.noise) env.set_noise(*config.noise);
  return env;
}

std::vector<WorkerProfile> deployment_population(const Environment& env, std::uint64_t seed, std::size_t count) {
  auto workers = env.make_workers(derive_seed(seed, "deployment"), count);
  if (!env.workers.empty()) {
    // Deployment workers keep the tuning pool's noise level.
    const double cov = env.workers.front().noise_cov;
    bool uniform = std::all_of(env.workers.begin(), env.workers.end(),
                               [&](const WorkerProfile& w) { return w.noise_cov == cov; });
    if (uniform)
      for (auto& w : workers) w.noise_cov = cov;
  }
  return workers;
}

// ---------------------------------------------------------------------------
// Evaluation pipeline

std::optional<double> crash_value(const Catalog& catalog, ConfigId default_id, Direction direction) {
  auto worst_of = [&](const std::vector<TrialRecord>& records) -> std::optional<double> {
    std::optional<double> worst;
    for (const auto& r : records) {
      if (r.status != TrialStatus::Ok) continue;
      if (!worst || better(direction, *worst, r.performance)) worst = r.performance;
    }
    return worst;
  };
  if (auto v = worst_of(catalog.samples_for(default_id))) return v;
  return worst_of(catalog.records());
}

EvaluationOutcome process_evaluation(Catalog& catalog, const NoiseModel* model, const PipelineSettings& settings,
                                     const Configuration& config, ConfigId default_id, int budget,
                                     std::vector<TrialRecord> fresh, std::uint64_t trials_started) {
  const Direction direction = settings.policy.direction;
  std::vector<TrialRecord> samples = catalog.samples_for(config.id());
  const std::size_t prior = samples.size();
  samples.insert(samples.end(), fresh.begin(), fresh.end());

  std::optional<double> crash;
  bool crash_looked_up = false;
  std::vector<double> raw;
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].status == TrialStatus::Ok) {
      raw.push_back(samples[i].performance);
      used.push_back(i);
      continue;
    }
    if (!crash_looked_up) {
      crash = crash_value(catalog, default_id, direction);
      crash_looked_up = true;
    }
    if (crash) {
      raw.push_back(*crash);
      used.push_back(i);
    }
  }

  EvaluationOutcome out;
  EvaluationRecord& e = out.record;
  e.config_id = config.id();
  e.config = config;
  e.budget = budget;
  e.detector_enabled = settings.detector;
  e.trials_started = trials_started;
  e.verdict.config_id = config.id();
  for (std::size_t i = 0; i < prior; ++i) e.trial_ids.push_back(samples[i].trial_id);

  if (!raw.empty()) {
    double rr = std::nan("");
    try {
      rr = relative_range(raw);
    } catch (const DegenerateInputError&) {
    }
    e.verdict.relative_range = rr;
    if (settings.detector) {
      e.verdict.threshold_used = settings.threshold;
      e.verdict.is_unstable = std::isnan(rr) || rr > settings.threshold;
    } else {
      e.verdict.threshold_used = std::numeric_limits<double>::infinity();
      e.verdict.is_unstable = false;
    }

    std::vector<std::optional<double>> adjusted(samples.size());
    for (std::size_t k = 0; k < used.size(); ++k) {
      const std::size_t i = used[k];
      const TrialRecord& r = samples[i];
      double v = raw[k];
      if (r.status == TrialStatus::Ok && model) {
        try {
          v = model->adjust(r.metrics, r.worker_id, r.performance, e.verdict.is_unstable);
        } catch (const AdjustmentOverflow& ex) {
          std::cerr << "warning: " << ex.what() << "; keeping the raw sample\n";
          ++out.overflows;
        }
      }
      adjusted[i] = v;
      out.adjusted.push_back(v);
    }
    e.reported_score = aggregate(out.adjusted, e.verdict, settings.policy);
    // Every sample crashed: the substitute alone must not tie a working default.
    const bool all_crashed = std::none_of(used.begin(), used.end(),
                                          [&](std::size_t i) { return samples[i].status == TrialStatus::Ok; });
    if (all_crashed && !e.verdict.is_unstable) e.reported_score = apply_penalty(*e.reported_score, settings.policy);

    for (std::size_t i = prior; i < samples.size(); ++i) {
      TrialRecord r = samples[i];
      r.adjusted_performance = r.status == TrialStatus::Ok ? adjusted[i] : std::nullopt;
      e.trial_ids.push_back(catalog.append(std::move(r)));
    }
  } else {
    e.verdict.relative_range = std::nan("");
    e.verdict.threshold_used =
        settings.detector ? settings.threshold : std::numeric_limits<double>::infinity();
    for (std::size_t i = prior; i < samples.size(); ++i) e.trial_ids.push_back(catalog.append(samples[i]));
  }
  catalog.record_evaluation(e);
  return out;
}

// ---------------------------------------------------------------------------
// Convergence

ConvergenceCurve convergence_from_catalog(const Catalog& catalog, Direction direction, const Environment* env,
                                          const std::vector<WorkerProfile>* population, std::uint64_t seed,
                                          const std::string& mode) {
  ConvergenceCurve curve(direction, seed, mode);
  struct State {
    int budget = 0;
    double score = 0.0;
    Configuration config;
  };
  std::map<ConfigId, State> state;
  std::map<ConfigId, double> truth_cache;
  std::uint64_t trials = 0;
  for (const auto& e : catalog.evaluations()) {
    for (auto id : e.trial_ids) trials = std::max(trials, id);
    if (e.reported_score) {
      auto& s = state[e.config_id];
      if (e.budget >= s.budget) s = State{e.budget, *e.reported_score, e.config};
    }
    if (state.empty() || trials == 0) continue;
    int top = 0;
    for (const auto& [id, s] : state) top = std::max(top, s.budget);
    const std::pair<const ConfigId, State>* best = nullptr;
    for (const auto& kv : state) {
      if (kv.second.budget != top) continue;
      if (!best || better(direction, kv.second.score, best->second.score)) best = &kv;
    }
    double value = best->second.score;
    if (env && population) {
      auto it = truth_cache.find(best->first);
      if (it == truth_cache.end())
        it = truth_cache.emplace(best->first, env->noise_free_worst(best->second.config, *population)).first;
      value = it->second;
    }
    curve.observe(trials, value);
  }
  curve.extend_to(trials);
  return curve;
}

// ---------------------------------------------------------------------------
// Tuning loop

namespace {

struct ActiveEvaluation {
  Suggestion suggestion;
  int remaining = 0;
  std::vector<TrialRecord> fresh;
};

std::string describe(const Suggestion& s) {
  std::ostringstream o;
  o << "ask " << s.config.id().hex() << " budget=" << s.budget << (s.is_initialization ? " init" : "");
  return o.str();
}

}  // namespace

RunResult run_tune(const RunConfig& config) {
  config.check();
  const ModePolicy policy = run_mode(config.mode, config.pool);
  const bool detector = policy.detector && config.detector;
  const bool use_model = policy.model && config.model;

  std::optional<Environment> env;
  std::unique_ptr<Backend> backend;
  ConfigSpace space;
  if (config.exec_command) {
    space = ConfigSpace::load(*config.space_file);
    backend = std::make_unique<CommandBackend>(*config.exec_command, config.timeout_s);
  } else {
    env = resolve_environment(config);
    if (env->workers.size() < static_cast<std::size_t>(policy.pool_size))
      throw UsageError("environment has fewer workers than the pool");
    space = env->space;
    backend = std::make_unique<SimulatedBackend>(*env, derive_seed(config.seed, "trials"));
  }
  std::unique_ptr<Executor> executor;
  if (config.exec_command) executor = std::make_unique<ThreadedExecutor>(*backend);
  else executor = std::make_unique<VirtualClockExecutor>(*backend);

  RunResult result;
  result.catalog = config.out_dir ? Catalog::open(*config.out_dir) : Catalog();
  if (result.catalog.size() > 0) throw UsageError("output directory already holds a catalog");
  Catalog& catalog = result.catalog;

  json manifest;
  manifest["run"] = config.to_json();
  manifest["space"] = space.to_json();
  if (env) manifest["environment"] = env->to_json();
  catalog.write_manifest(manifest);

  OptimizerOptions oopt;
  oopt.proposer = config.optimizer;
  oopt.rung_budgets = policy.rung_budgets;
  oopt.ei_candidates = config.ei_candidates;
  Optimizer optimizer(space, ObjectiveSpec{config.direction, "performance"}, oopt, derive_seed(config.seed, "optimizer"));
  const ConfigId default_id = space.default_config().id();

  std::vector<WorkerId> vocabulary;
  for (int w = 0; w < policy.pool_size; ++w) vocabulary.push_back(w);
  NoiseModelOptions nopt;
  nopt.guardrail = config.guardrail;
  NoiseModel model(vocabulary, derive_seed(config.seed, "noise-model"), nopt);

  PipelineSettings settings{detector, config.threshold, AggregationPolicy::worst_case(config.direction)};
  Scheduler scheduler(policy.pool_size);
  std::map<std::uint64_t, ActiveEvaluation> active;
  std::map<std::pair<ConfigId, WorkerId>, std::uint64_t> attempts;
  std::uint64_t started = 0;

  auto finish = [&](const Suggestion& s, std::vector<TrialRecord> fresh) {
    for (const auto& r : fresh)
      if (r.status == TrialStatus::Ok && use_model) model.freeze_metrics(r.metrics);
    auto outcome = process_evaluation(catalog, use_model ? &model : nullptr, settings, s.config, default_id, s.budget,
                                      std::move(fresh), started);
    result.adjustment_overflows += outcome.overflows;
    ++result.evaluations;
    const auto& e = outcome.record;
    if (e.reported_score) {
      optimizer.tell(s.config, s.budget, *e.reported_score);
      result.transcript.push_back("tell " + s.config.id().hex() + " budget=" + std::to_string(s.budget) +
                                  " score=" + json(*e.reported_score).dump());
      if (env) {
        result.scores.push_back(ScorePoint{catalog.last_trial_id(), s.config.id(), s.budget, *e.reported_score,
                                           env->noise_free_mean(s.config, std::vector<WorkerProfile>(
                                                                              env->workers.begin(),
                                                                              env->workers.begin() + policy.pool_size))});
      }
    } else {
      optimizer.tell_failure(s.config, s.budget);
      result.transcript.push_back("fail " + s.config.id().hex() + " budget=" + std::to_string(s.budget));
    }
    if (use_model && s.budget == optimizer.max_budget()) model.train(catalog.training_rows(optimizer.max_budget()));
  };

  auto dispatch = [&] {
    for (const auto& a : scheduler.dispatch()) {
      ++started;
      executor->start(a, attempts[{a.config.id(), a.worker_id}]++);
    }
  };

  auto fill = [&] {
    dispatch();
    for (int round = 0; round < policy.pool_size && !optimizer.stopped() && scheduler.idle_count() > 0; ++round) {
      Suggestion s = optimizer.ask();
      result.transcript.push_back(describe(s));
      std::set<WorkerId> prior;
      for (const auto& r : catalog.samples_for(s.config.id())) prior.insert(r.worker_id);
      const int demand = std::max(0, s.budget - static_cast<int>(prior.size()));
      if (started + scheduler.queued_demand() + static_cast<std::size_t>(demand) > config.trials) {
        optimizer.tell_failure(s.config, s.budget);
        optimizer.stop();
        result.transcript.push_back("stop");
        break;
      }
      auto pending = scheduler.enqueue(s.config, s.budget, prior, policy.pinned_worker);
      if (!pending) {
        finish(s, {});
        continue;
      }
      active.emplace(pending->evaluation_id, ActiveEvaluation{s, pending->remaining(), {}});
      dispatch();
    }
  };

  fill();
  while (executor->in_flight() > 0) {
    Completion c = executor->wait();
    scheduler.release(c.assignment.worker_id);
    auto it = active.find(c.assignment.evaluation_id);
    if (it == active.end()) throw StateError("completion for an unknown evaluation");
    TrialRecord r;
    r.config_id = c.assignment.config.id();
    r.worker_id = c.assignment.worker_id;
    r.budget = it->second.suggestion.budget;
    r.performance = c.result.status == TrialStatus::Ok ? c.result.performance : std::nan("");
    r.metrics = std::move(c.result.metrics);
    r.wall_time_s = c.result.wall_time_s;
    r.status = c.result.status;
    if (r.status != TrialStatus::Ok) ++result.crashed;
    it->second.fresh.push_back(std::move(r));
    if (static_cast<int>(it->second.fresh.size()) == it->second.remaining) {
      ActiveEvaluation done = std::move(it->second);
      active.erase(it);
      finish(done.suggestion, std::move(done.fresh));
    }
    fill();
  }
  if (!active.empty()) throw StateError("evaluations left unfinished");

  result.trials = catalog.size();
  // Post-hoc exclusion check over the whole catalog.
  std::set<std::pair<ConfigId, WorkerId>> seen;
  for (const auto& r : catalog.records())
    if (!seen.insert({r.config_id, r.worker_id}).second) result.invariant_violation = true;

  try {
    const ConfigId best = catalog.best_config_at_top_budget(config.direction);
    result.best = catalog.configuration(best);
    result.best_summary = catalog.summary(best);
  } catch (const StateError&) {
  }

  std::vector<WorkerProfile> population;
  if (env) population = deployment_population(*env, config.seed, config.deploy_workers);
  result.curve = convergence_from_catalog(catalog, config.direction, env ? &*env : nullptr, env ? &population : nullptr,
                                          config.seed, std::string(to_string(config.mode)));

  if (config.out_dir) {
    json best_json;
    if (result.best) {
      best_json["config_id"] = result.best->id().hex();
      best_json["config"] = result.best->to_json();
      const auto& v = result.best_summary->verdict;
      best_json["budget"] = result.best_summary->max_budget_reached;
      best_json["reported_score"] = *result.best_summary->reported_score;
      best_json["is_unstable"] = v && v->is_unstable;
      best_json["relative_range"] = v && std::isfinite(v->relative_range) ? json(v->relative_range) : json(nullptr);
    }
    std::ofstream(*config.out_dir / "best.json") << best_json.dump(2) << '\n';
    manifest["result"] = {{"trials", result.trials},
                          {"crashed", result.crashed},
                          {"evaluations", result.evaluations},
                          {"best_config_id", result.best ? json(result.best->id().hex()) : json(nullptr)}};
    catalog.write_manifest(manifest);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Replay and analysis

std::vector<EvaluationRecord> replay(const std::filesystem::path& dir, const ReplayOptions& options) {
  const json manifest = Catalog::read_manifest(dir);
  const RunConfig run = RunConfig::from_json(manifest.at("run"));
  const ConfigSpace space = ConfigSpace::from_json(manifest.at("space"));
  const ModePolicy policy = run_mode(run.mode, run.pool);
  const Catalog source = Catalog::open(dir);

  std::map<std::uint64_t, TrialRecord> by_id;
  for (const auto& r : source.records()) by_id.emplace(r.trial_id, r);

  std::vector<WorkerId> vocabulary;
  for (int w = 0; w < policy.pool_size; ++w) vocabulary.push_back(w);
  NoiseModelOptions nopt;
  nopt.guardrail = options.guardrail;
  NoiseModel model(vocabulary, derive_seed(run.seed, "noise-model"), nopt);
  const bool use_model = options.model && policy.model;
  const int max_budget = policy.rung_budgets.back();
  PipelineSettings settings{options.detector, options.threshold, AggregationPolicy::worst_case(run.direction)};
  const ConfigId default_id = space.default_config().id();

  Catalog shadow;
  std::vector<EvaluationRecord> out;
  for (const auto& e : source.evaluations()) {
    std::vector<TrialRecord> fresh;
    for (auto id : e.trial_ids) {
      if (id <= shadow.last_trial_id()) continue;
      TrialRecord r = by_id.at(id);
      r.adjusted_performance.reset();
      if (r.status == TrialStatus::Ok && use_model) model.freeze_metrics(r.metrics);
      fresh.push_back(std::move(r));
    }
    auto outcome = process_evaluation(shadow, use_model ? &model : nullptr, settings, e.config, default_id, e.budget,
                                      std::move(fresh), e.trials_started);
    outcome.record.evaluation_id = out.size() + 1;
    out.push_back(outcome.record);
    if (use_model && e.budget == max_budget) model.train(shadow.training_rows(max_budget));
  }
  return out;
}

json analyze_run(const std::filesystem::path& dir) {
  const json manifest = Catalog::read_manifest(dir);
  const RunConfig run = RunConfig::from_json(manifest.at("run"));
  const Catalog catalog = Catalog::open(dir);

  std::optional<Environment> env;
  if (manifest.contains("environment")) env = Environment::from_json(manifest["environment"]);
  std::vector<WorkerProfile> population;
  if (env) population = deployment_population(*env, run.seed, run.deploy_workers);

  ConvergenceCurve curve = convergence_from_catalog(catalog, run.direction, env ? &*env : nullptr,
                                                    env ? &population : nullptr, run.seed, std::string(to_string(run.mode)));
  std::vector<ConvergenceCurve> curves{curve};
  write_curve_csv(dir / "curve.csv", curves);

  json summary;
  summary["mode"] = std::string(to_string(run.mode));
  summary["seed"] = run.seed;
  summary["trials"] = catalog.size();
  std::size_t crashed = 0;
  for (const auto& r : catalog.records()) crashed += r.status == TrialStatus::Ok ? 0 : 1;
  summary["crashed"] = crashed;
  summary["evaluations"] = catalog.evaluations().size();
  summary["final_best_so_far"] = curve.length() ? json(curve.values().back()) : json(nullptr);

  std::vector<DeploymentReport> reports;
  try {
    const ConfigId best = catalog.best_config_at_top_budget(run.direction);
    const Configuration config = *catalog.configuration(best);
    summary["best_config_id"] = best.hex();
    summary["best_config"] = config.to_json();
    summary["best_reported_score"] = *catalog.summary(best)->reported_score;
    if (env) {
      reports.push_back(deployment_eval(*env, config, population, 1, derive_seed(run.seed, "deploy-trials")));
      summary["deployment"] = reports.back().to_json();
      summary["best_in_unstable_region"] = env->landscape.region_of(env->space, config) != nullptr;
    }
  } catch (const StateError&) {
    summary["best_config_id"] = nullptr;
  }
  write_deploy_csv(dir / "deploy.csv", reports);
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

}  // namespace tuna
