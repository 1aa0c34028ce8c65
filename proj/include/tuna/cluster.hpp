// SPDX-License-Identifier: Apache-2.0
//
// Worker pool, eligibility-constrained queue, and trial executors.
//
// The scheduler holds evaluations that still need trials. A configuration
// never runs twice on the same worker, so each queued evaluation carries the
// set of workers it has already used. Dispatch walks the queue in FIFO order
// and hands idle, eligible workers to each entry; an entry whose eligible
// workers are all busy is skipped, letting later entries overtake it.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tuna/catalog.hpp"
#include "tuna/configspace.hpp"
#include "tuna/simulator.hpp"

namespace tuna {

struct PendingEvaluation {
  std::uint64_t evaluation_id = 0;
  Configuration config;
  int target_budget = 1;
  std::set<WorkerId> already_sampled_workers;
  std::set<WorkerId> dispatched_workers;
  std::optional<WorkerId> pinned_worker;

  int remaining() const { return target_budget - static_cast<int>(already_sampled_workers.size()); }
  int undispatched() const { return remaining() - static_cast<int>(dispatched_workers.size()); }
  bool eligible(WorkerId w) const;
};

struct Assignment {
  std::uint64_t evaluation_id = 0;
  WorkerId worker_id = 0;
  Configuration config;
};

class Scheduler {
 public:
  explicit Scheduler(int pool_size);

  /// Queues the trials a configuration still needs to reach target_budget.
  /// Returns nullopt when the prior samples already cover the budget.
  std::optional<PendingEvaluation> enqueue(const Configuration& config, int target_budget,
                                           const std::set<WorkerId>& prior_workers,
                                           std::optional<WorkerId> pinned_worker = std::nullopt);

  std::vector<Assignment> dispatch();
  /// Marks a worker idle again after its trial finished.
  void release(WorkerId worker);

  int pool_size() const { return static_cast<int>(busy_.size()); }
  bool busy(WorkerId w) const { return busy_.at(static_cast<std::size_t>(w)); }
  std::size_t idle_count() const;
  std::size_t in_flight() const;
  /// Trials queued but not yet dispatched.
  std::size_t queued_demand() const;
  bool queue_empty() const { return queue_.empty(); }
  const std::deque<PendingEvaluation>& queue() const { return queue_; }

 private:
  std::vector<bool> busy_;
  std::deque<PendingEvaluation> queue_;
  std::uint64_t next_id_ = 1;
};

struct TrialResult {
  double performance = 0.0;
  std::map<std::string, double> metrics;
  TrialStatus status = TrialStatus::Ok;
  double wall_time_s = 0.0;
};

/// Runs one trial. Implementations must be safe to call concurrently for different workers.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual TrialResult run(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const = 0;
};

class SimulatedBackend : public Backend {
 public:
  SimulatedBackend(Environment env, std::uint64_t run_seed);

  TrialResult run(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const override;
  /// Same draw as run(), with the debug channel.
  SimOutcome simulate(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const;

  const Environment& environment() const { return env_; }

 private:
  Environment env_;
  std::uint64_t run_seed_;
};

/// Runs an external program per trial. The configuration is passed in
/// TUNA_CONFIG_JSON and the worker in TUNA_WORKER_ID; the last stdout line
/// must be {"performance": x, "metrics": {...}}.
class CommandBackend : public Backend {
 public:
  explicit CommandBackend(std::string command, double timeout_s = 600.0);

  TrialResult run(WorkerId worker, const Configuration& config, std::uint64_t ordinal) const override;

 private:
  std::string command_;
  double timeout_s_;
};

/// Parses the command protocol's result line.
TrialResult parse_trial_output(const std::string& stdout_text);

struct Completion {
  Assignment assignment;
  TrialResult result;
  double finished_at = 0.0;
};

class Executor {
 public:
  virtual ~Executor() = default;
  virtual void start(const Assignment& assignment, std::uint64_t ordinal) = 0;
  /// Blocks until some in-flight trial finishes.
  virtual Completion wait() = 0;
  virtual std::size_t in_flight() const = 0;
};

/// Runs trials inline and releases them in simulated-time order, so a
/// parallel cluster can be replayed deterministically on one thread.
class VirtualClockExecutor : public Executor {
 public:
  explicit VirtualClockExecutor(const Backend& backend) : backend_(backend) {}

  void start(const Assignment& assignment, std::uint64_t ordinal) override;
  Completion wait() override;
  std::size_t in_flight() const override { return events_.size(); }
  double now() const { return now_; }

 private:
  struct Event {
    double time;
    std::uint64_t seq;
    Completion completion;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  const Backend& backend_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
};

/// One thread per running trial; completions arrive in real finishing order.
class ThreadedExecutor : public Executor {
 public:
  explicit ThreadedExecutor(const Backend& backend) : backend_(backend) {}
  ~ThreadedExecutor() override;

  void start(const Assignment& assignment, std::uint64_t ordinal) override;
  Completion wait() override;
  std::size_t in_flight() const override;

 private:
  const Backend& backend_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Completion> done_;
  std::map<WorkerId, std::thread> threads_;
  std::size_t running_ = 0;
};

}  // namespace tuna
