// SPDX-License-Identifier: Apache-2.0
#include "tuna/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <unordered_map>

#include "tuna/error.hpp"

namespace tuna {

using nlohmann::json;

std::string_view to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::Ok: return "ok";
    case TrialStatus::Crashed: return "crashed";
    case TrialStatus::Timeout: return "timeout";
  }
  return "ok";
}

TrialStatus trial_status_from_string(std::string_view s) {
  if (s == "ok") return TrialStatus::Ok;
  if (s == "crashed") return TrialStatus::Crashed;
  if (s == "timeout") return TrialStatus::Timeout;
  throw ValidationError("unknown trial status '" + std::string(s) + "'");
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

bool same_number(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

}  // namespace

// ---------------------------------------------------------------------------
// Records

json TrialRecord::to_json() const {
  json j;
  j["trial_id"] = trial_id;
  j["config_id"] = config_id.hex();
  j["worker_id"] = worker_id;
  j["budget"] = budget;
  j["performance"] = number_or_null(performance);
  j["adjusted_performance"] = adjusted_performance ? number_or_null(*adjusted_performance) : json(nullptr);
  json m = json::object();
  for (const auto& [name, v] : metrics) m[name] = number_or_null(v);
  j["metrics"] = std::move(m);
  j["wall_time_s"] = wall_time_s;
  j["status"] = std::string(to_string(status));
  return j;
}

TrialRecord TrialRecord::from_json(const json& j) {
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<std::uint64_t>();
  r.config_id = ConfigId::from_hex(j.at("config_id").get<std::string>());
  r.worker_id = j.at("worker_id").get<WorkerId>();
  r.budget = j.at("budget").get<int>();
  r.performance = number_or_nan(j.at("performance"));
  if (j.contains("adjusted_performance") && !j["adjusted_performance"].is_null())
    r.adjusted_performance = j["adjusted_performance"].get<double>();
  if (j.contains("metrics"))
    for (const auto& [name, v] : j["metrics"].items()) r.metrics[name] = number_or_nan(v);
  r.wall_time_s = j.value("wall_time_s", 0.0);
  r.status = trial_status_from_string(j.value("status", std::string("ok")));
  return r;
}

bool TrialRecord::operator==(const TrialRecord& o) const {
  return trial_id == o.trial_id && config_id == o.config_id && worker_id == o.worker_id && budget == o.budget &&
         same_number(performance, o.performance) && adjusted_performance == o.adjusted_performance &&
         std::equal(metrics.begin(), metrics.end(), o.metrics.begin(), o.metrics.end(),
                    [](const auto& a, const auto& b) { return a.first == b.first && same_number(a.second, b.second); }) &&
         wall_time_s == o.wall_time_s && status == o.status;
}

json EvaluationRecord::to_json() const {
  json j;
  j["evaluation_id"] = evaluation_id;
  j["config_id"] = config_id.hex();
  j["config"] = config.to_json();
  j["budget"] = budget;
  j["trial_ids"] = trial_ids;
  j["relative_range"] = number_or_null(verdict.relative_range);
  j["is_unstable"] = verdict.is_unstable;
  j["threshold"] = number_or_null(verdict.threshold_used);
  j["detector_enabled"] = detector_enabled;
  j["reported_score"] = reported_score ? json(*reported_score) : json(nullptr);
  j["trials_started"] = trials_started;
  return j;
}

EvaluationRecord EvaluationRecord::from_json(const json& j) {
  EvaluationRecord e;
  e.evaluation_id = j.at("evaluation_id").get<std::uint64_t>();
  e.config_id = ConfigId::from_hex(j.at("config_id").get<std::string>());
  e.config = Configuration::from_json(j.at("config"));
  e.budget = j.at("budget").get<int>();
  e.trial_ids = j.at("trial_ids").get<std::vector<std::uint64_t>>();
  e.verdict.config_id = e.config_id;
  e.verdict.relative_range = number_or_nan(j.at("relative_range"));
  e.verdict.is_unstable = j.at("is_unstable").get<bool>();
  // A disabled detector records an infinite threshold, written as null.
  const json threshold = j.value("threshold", json(kDefaultThreshold));
  e.verdict.threshold_used = threshold.is_null() ? std::numeric_limits<double>::infinity() : threshold.get<double>();
  e.detector_enabled = j.value("detector_enabled", true);
  if (!j.at("reported_score").is_null()) e.reported_score = j.at("reported_score").get<double>();
  e.trials_started = j.value("trials_started", std::uint64_t{0});
  return e;
}

// ---------------------------------------------------------------------------
// Catalog

struct Catalog::State {
  mutable std::shared_mutex mutex;
  std::optional<std::filesystem::path> dir;
  std::ofstream trials_out;
  std::ofstream evaluations_out;

  std::vector<TrialRecord> records;
  std::unordered_map<ConfigId, std::vector<std::size_t>> by_config;
  std::set<std::pair<std::uint64_t, WorkerId>> placed;
  std::vector<EvaluationRecord> evaluations;
  std::unordered_map<ConfigId, ConfigSummary> summaries;
  std::unordered_map<ConfigId, Configuration> configs;

  void check(const TrialRecord& r) const {
    if (r.budget < 1) throw ValidationError("trial budget must be >= 1");
    if (r.status == TrialStatus::Ok && !std::isfinite(r.performance))
      throw ValidationError("trial with status ok has non-finite performance");
    if (placed.count({r.config_id.value, r.worker_id}))
      throw ExclusionViolation("config " + r.config_id.hex() + " already measured on worker " +
                               std::to_string(r.worker_id));
  }

  void insert(const TrialRecord& r) {
    placed.insert({r.config_id.value, r.worker_id});
    by_config[r.config_id].push_back(records.size());
    records.push_back(r);
    summaries[r.config_id].config_id = r.config_id;
    summaries[r.config_id].samples.push_back(r.trial_id);
  }

  void apply(const EvaluationRecord& e) {
    auto& s = summaries[e.config_id];
    s.config_id = e.config_id;
    if (e.budget >= s.max_budget_reached) {
      s.max_budget_reached = e.budget;
      s.verdict = e.verdict;
      s.reported_score = e.reported_score;
    }
    configs.insert_or_assign(e.config_id, e.config);
    evaluations.push_back(e);
  }
};

Catalog::Catalog() : state_(std::make_unique<State>()) {}
Catalog::~Catalog() = default;
Catalog::Catalog(Catalog&&) noexcept = default;
Catalog& Catalog::operator=(Catalog&&) noexcept = default;

Catalog Catalog::open(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Catalog c;
  auto& st = *c.state_;
  st.dir = dir;
  {
    std::ifstream in(dir / "trials.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      TrialRecord r = TrialRecord::from_json(json::parse(line));
      if (!st.records.empty() && r.trial_id <= st.records.back().trial_id)
        throw ValidationError("trials.jsonl: trial ids not increasing");
      st.check(r);
      st.insert(r);
    }
  }
  {
    std::ifstream in(dir / "evaluations.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      st.apply(EvaluationRecord::from_json(json::parse(line)));
    }
  }
  st.trials_out.open(dir / "trials.jsonl", std::ios::app);
  st.evaluations_out.open(dir / "evaluations.jsonl", std::ios::app);
  if (!st.trials_out || !st.evaluations_out) throw StateError("cannot open catalog files in " + dir.string());
  return c;
}

std::uint64_t Catalog::append(TrialRecord record) {
  std::unique_lock lock(state_->mutex);
  auto& st = *state_;
  st.check(record);
  record.trial_id = st.records.empty() ? 1 : st.records.back().trial_id + 1;
  if (st.dir) {
    st.trials_out << record.to_json().dump() << '\n';
    st.trials_out.flush();
    if (!st.trials_out) throw StateError("catalog write failed");
  }
  st.insert(record);
  return record.trial_id;
}

void Catalog::record_evaluation(EvaluationRecord evaluation) {
  std::unique_lock lock(state_->mutex);
  auto& st = *state_;
  evaluation.evaluation_id = st.evaluations.size() + 1;
  if (st.dir) {
    st.evaluations_out << evaluation.to_json().dump() << '\n';
    st.evaluations_out.flush();
    if (!st.evaluations_out) throw StateError("catalog write failed");
  }
  st.apply(evaluation);
}

std::vector<TrialRecord> Catalog::samples_for(ConfigId id) const {
  std::shared_lock lock(state_->mutex);
  std::vector<TrialRecord> out;
  auto it = state_->by_config.find(id);
  if (it == state_->by_config.end()) return out;
  for (std::size_t i : it->second) out.push_back(state_->records[i]);
  return out;
}

std::vector<TrainingRow> Catalog::training_rows(int max_budget) const {
  std::shared_lock lock(state_->mutex);
  std::vector<TrainingRow> rows;
  for (const auto& r : state_->records) {
    if (r.status != TrialStatus::Ok) continue;
    const auto& s = state_->summaries.at(r.config_id);
    if (s.max_budget_reached != max_budget || !s.verdict || s.verdict->is_unstable) continue;
    rows.push_back(TrainingRow{r.metrics, r.worker_id, r.performance, r.config_id, r.trial_id});
  }
  return rows;
}

ConfigId Catalog::best_config(Direction direction, std::optional<int> min_budget) const {
  std::shared_lock lock(state_->mutex);
  std::optional<ConfigId> best;
  double best_score = 0.0;
  for (const auto& [id, s] : state_->summaries) {
    if (!s.reported_score) continue;
    if (min_budget && s.max_budget_reached < *min_budget) continue;
    const double v = *s.reported_score;
    if (!best || better(direction, v, best_score) || (v == best_score && id < *best)) {
      best = id;
      best_score = v;
    }
  }
  if (!best) throw StateError("no configuration has a reported score");
  return *best;
}

ConfigId Catalog::best_config_at_top_budget(Direction direction) const {
  int top = 0;
  {
    std::shared_lock lock(state_->mutex);
    for (const auto& [id, s] : state_->summaries)
      if (s.reported_score) top = std::max(top, s.max_budget_reached);
  }
  return best_config(direction, top);
}

std::optional<ConfigSummary> Catalog::summary(ConfigId id) const {
  std::shared_lock lock(state_->mutex);
  auto it = state_->summaries.find(id);
  if (it == state_->summaries.end()) return std::nullopt;
  return it->second;
}

std::vector<TrialRecord> Catalog::records() const {
  std::shared_lock lock(state_->mutex);
  return state_->records;
}

std::vector<EvaluationRecord> Catalog::evaluations() const {
  std::shared_lock lock(state_->mutex);
  return state_->evaluations;
}

std::optional<Configuration> Catalog::configuration(ConfigId id) const {
  std::shared_lock lock(state_->mutex);
  auto it = state_->configs.find(id);
  if (it == state_->configs.end()) return std::nullopt;
  return it->second;
}

std::size_t Catalog::size() const {
  std::shared_lock lock(state_->mutex);
  return state_->records.size();
}

std::uint64_t Catalog::last_trial_id() const {
  std::shared_lock lock(state_->mutex);
  return state_->records.empty() ? 0 : state_->records.back().trial_id;
}

const std::optional<std::filesystem::path>& Catalog::directory() const { return state_->dir; }

void Catalog::write_manifest(const json& manifest) const {
  if (!state_->dir) return;
  std::ofstream out(*state_->dir / "run.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw StateError("cannot write run manifest");
}

json Catalog::read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) throw StateError("missing run manifest in " + dir.string());
  return json::parse(in);
}

}  // namespace tuna
