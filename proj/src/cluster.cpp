// SPDX-License-Identifier: Apache-2.0
#include "tuna/cluster.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tuna/error.hpp"

extern char** environ;

namespace tuna {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scheduler

bool PendingEvaluation::eligible(WorkerId w) const {
  if (pinned_worker && w != *pinned_worker) return false;
  return !already_sampled_workers.count(w) && !dispatched_workers.count(w);
}

Scheduler::Scheduler(int pool_size) {
  if (pool_size < 1) throw DomainError("pool size must be >= 1");
  busy_.assign(static_cast<std::size_t>(pool_size), false);
}

std::optional<PendingEvaluation> Scheduler::enqueue(const Configuration& config, int target_budget,
                                                    const std::set<WorkerId>& prior_workers,
                                                    std::optional<WorkerId> pinned_worker) {
  if (target_budget < 1) throw DomainError("target budget must be >= 1");
  if (target_budget > pool_size())
    throw CapacityError("budget " + std::to_string(target_budget) + " exceeds pool size " +
                        std::to_string(pool_size()));
  for (WorkerId w : prior_workers)
    if (w < 0 || w >= pool_size()) throw ValidationError("prior worker " + std::to_string(w) + " not in pool");
  if (static_cast<int>(prior_workers.size()) >= target_budget) return std::nullopt;

  PendingEvaluation e;
  e.evaluation_id = next_id_++;
  e.config = config;
  e.target_budget = target_budget;
  e.already_sampled_workers = prior_workers;
  e.pinned_worker = pinned_worker;

  int eligible = 0;
  for (WorkerId w = 0; w < pool_size(); ++w) eligible += e.eligible(w) ? 1 : 0;
  if (eligible < e.remaining())
    throw CapacityError("only " + std::to_string(eligible) + " eligible workers for " +
                        std::to_string(e.remaining()) + " remaining samples");
  queue_.push_back(e);
  return e;
}

std::vector<Assignment> Scheduler::dispatch() {
  std::vector<Assignment> out;
  for (auto& e : queue_) {
    for (WorkerId w = 0; w < pool_size() && e.undispatched() > 0; ++w) {
      if (busy_[static_cast<std::size_t>(w)] || !e.eligible(w)) continue;
      busy_[static_cast<std::size_t>(w)] = true;
      e.dispatched_workers.insert(w);
      out.push_back(Assignment{e.evaluation_id, w, e.config});
    }
  }
  std::erase_if(queue_, [](const PendingEvaluation& e) { return e.undispatched() == 0; });
  return out;
}

void Scheduler::release(WorkerId worker) {
  if (!busy_.at(static_cast<std::size_t>(worker))) throw StateError("worker " + std::to_string(worker) + " is not busy");
  busy_[static_cast<std::size_t>(worker)] = false;
}

std::size_t Scheduler::idle_count() const { return static_cast<std::size_t>(std::count(busy_.begin(), busy_.end(), false)); }

std::size_t Scheduler::in_flight() const { return busy_.size() - idle_count(); }

std::size_t Scheduler::queued_demand() const {
  std::size_t n = 0;
  for (const auto& e : queue_) n += static_cast<std::size_t>(e.undispatched());
  return n;
}

// ---------------------------------------------------------------------------
// Backends

SimulatedBackend::SimulatedBackend(Environment env, std::uint64_t run_seed) : env_(std::move(env)), run_seed_(run_seed) {}

SimOutcome SimulatedBackend::simulate(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const {
  if (worker < 0 || static_cast<std::size_t>(worker) >= env_.workers.size())
    throw ValidationError("no simulated worker " + std::to_string(worker));
  return evaluate_sim(env_.workers[static_cast<std::size_t>(worker)], env_.space, env_.landscape, config,
                      trial_seed(run_seed_, worker, config.id(), ordinal));
}

TrialResult SimulatedBackend::run(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const {
  SimOutcome o = simulate(worker, config, ordinal);
  // Jittered durations make completions arrive out of submission order.
  Rng rng(derive_seed(trial_seed(run_seed_, worker, config.id(), ordinal), "duration"));
  return TrialResult{o.performance, std::move(o.metrics), TrialStatus::Ok, 60.0 * (1.0 + 0.5 * rng.uniform())};
}

CommandBackend::CommandBackend(std::string command, double timeout_s) : command_(std::move(command)), timeout_s_(timeout_s) {
  if (command_.empty()) throw UsageError("empty backend command");
  if (!(timeout_s_ > 0.0)) throw UsageError("timeout must be positive");
}

TrialResult parse_trial_output(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
  TrialResult r;
  json j = json::parse(last, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("performance") || !j["performance"].is_number()) {
    r.status = TrialStatus::Crashed;
    r.performance = std::nan("");
    return r;
  }
  r.performance = j["performance"].get<double>();
  if (j.contains("metrics") && j["metrics"].is_object())
    for (const auto& [k, v] : j["metrics"].items())
      if (v.is_number()) r.metrics[k] = v.get<double>();
  if (!std::isfinite(r.performance)) r.status = TrialStatus::Crashed;
  return r;
}

TrialResult CommandBackend::run(WorkerId worker, const Configuration& config, std::uint64_t) const {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  // Build argv/envp before fork; the child only calls async-signal-safe functions.
  std::vector<std::string> env_strings;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    if (kv.starts_with("TUNA_CONFIG_JSON=") || kv.starts_with("TUNA_WORKER_ID=")) continue;
    env_strings.emplace_back(kv);
  }
  env_strings.push_back("TUNA_CONFIG_JSON=" + config.to_json().dump());
  env_strings.push_back("TUNA_WORKER_ID=" + std::to_string(worker));
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh", dash_c = "-c", cmd = command_;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};

  int fds[2];
  if (pipe(fds) != 0) throw StateError(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw StateError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    setpgid(0, 0);
    execve(argv[0], argv, envp.data());
    _exit(127);
  }
  close(fds[1]);

  std::string out;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    const double left = timeout_s_ - elapsed;
    if (left <= 0) {
      timed_out = true;
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    const int rc = poll(&p, 1, static_cast<int>(std::min(left * 1000.0, 1000.0)) + 1);
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) continue;
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n > 0) out.append(buf, static_cast<std::size_t>(n));
    else if (n == 0 || errno != EINTR) break;
  }
  close(fds[0]);
  if (timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }

  TrialResult r;
  r.wall_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  if (timed_out) {
    r.status = TrialStatus::Timeout;
    r.performance = std::nan("");
    return r;
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    r.status = TrialStatus::Crashed;
    r.performance = std::nan("");
    return r;
  }
  const double wall = r.wall_time_s;
  r = parse_trial_output(out);
  r.wall_time_s = wall;
  return r;
}

// ---------------------------------------------------------------------------
// Executors

void VirtualClockExecutor::start(const Assignment& assignment, std::uint64_t ordinal) {
  TrialResult result = backend_.run(assignment.worker_id, assignment.config, ordinal);
  const double finish = now_ + result.wall_time_s;
  events_.push(Event{finish, seq_++, Completion{assignment, std::move(result), finish}});
}

Completion VirtualClockExecutor::wait() {
  if (events_.empty()) throw StateError("wait with no trial in flight");
  Event e = events_.top();
  events_.pop();
  now_ = e.time;
  return std::move(e.completion);
}

ThreadedExecutor::~ThreadedExecutor() {
  for (auto& [w, t] : threads_)
    if (t.joinable()) t.join();
}

void ThreadedExecutor::start(const Assignment& assignment, std::uint64_t ordinal) {
  std::lock_guard lock(mutex_);
  auto it = threads_.find(assignment.worker_id);
  if (it != threads_.end() && it->second.joinable()) it->second.join();
  ++running_;
  threads_[assignment.worker_id] = std::thread([this, assignment, ordinal] {
    TrialResult r;
    try {
      r = backend_.run(assignment.worker_id, assignment.config, ordinal);
    } catch (const std::exception&) {
      r.status = TrialStatus::Crashed;
      r.performance = std::nan("");
    }
    const double wall = r.wall_time_s;
    std::lock_guard inner(mutex_);
    done_.push_back(Completion{assignment, std::move(r), wall});
    cv_.notify_all();
  });
}

Completion ThreadedExecutor::wait() {
  std::unique_lock lock(mutex_);
  if (running_ == 0 && done_.empty()) throw StateError("wait with no trial in flight");
  cv_.wait(lock, [this] { return !done_.empty(); });
  Completion c = std::move(done_.front());
  done_.pop_front();
  --running_;
  return c;
}

std::size_t ThreadedExecutor::in_flight() const {
  std::lock_guard lock(mutex_);
  return running_;
}

}  // namespace tuna
