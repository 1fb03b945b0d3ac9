#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pegsim/env.hpp"
#include "pegsim/procgen.hpp"

namespace pegsim {

// Row-major batches so that row i is worker i's contiguous slice.
using ObsBatch =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ActionBatch =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct VecEnvConfig {
  GenConfig generator;
  EnvConfig env;
  PhysicsConfig physics;
  int n_workers = 64;
  // Stepping threads; 0 picks hardware concurrency, 1 runs inline. The result
  // of a batch step does not depend on this value.
  int n_threads = 1;
};

// Result of one synchronized tick across all workers. Workers whose episode
// ended this tick are reset in place: `statuses` / `final_observations` hold
// the terminal outcome while `observations` already shows the first
// observation of the fresh episode (the next policy input).
struct BatchStep {
  ObsBatch observations;        // N x 18
  ObsBatch final_observations;  // N x 18, row i meaningful only where reset[i]
  Eigen::VectorXd rewards;      // N
  std::vector<EpisodeStatus> statuses;  // status at the end of this tick
  std::vector<uint8_t> reset;           // 1 where the worker auto-reset
  std::vector<uint8_t> diverged;        // 1 where physics divergence ended it
};

// Summary of one finished episode, emitted at the tick it terminated.
struct EpisodeRecord {
  int worker = 0;
  uint64_t module_seed = 0;
  EpisodeStatus outcome = EpisodeStatus::running;
  int steps = 0;
  double sim_time = 0.0;  // steps / control_hz, seconds
  double cumulative_reward = 0.0;
  uint64_t end_global_step = 0;  // WorkerSet::total_env_steps() at termination
};

// Module seed for worker stream `stream` under `master_seed`. A pure function
// of the pair, so a worker's module does not depend on how many workers exist.
uint64_t worker_module_seed(uint64_t master_seed, uint64_t stream);

// Builds the module for a worker seed. If generation fails the seed is
// replaced by seed + 2^63 (and further derived retries after that), with a
// note on stderr; `used_seed`, if given, receives the seed that succeeded.
AssemblyModule generate_worker_module(const GenConfig& config,
                                      uint64_t module_seed,
                                      uint64_t* used_seed = nullptr);

// A fixed set of env workers, each owning a unique procedurally generated
// module, stepped in lock-step. Worker i is fully determined by
// (master_seed, stream_offset + i): its module comes from
// worker_module_seed(master_seed, stream_offset + i) and its env randomness
// from a stream derived from that module seed. Training uses streams
// 0..N-1, held-out evaluation N..2N-1.
class WorkerSet {
 public:
  WorkerSet(const VecEnvConfig& config, uint64_t master_seed,
            uint64_t stream_offset = 0);
  // Explicit per-worker module seeds (tests probing cross-worker isolation).
  WorkerSet(const VecEnvConfig& config, const std::vector<uint64_t>& seeds);
  ~WorkerSet();

  WorkerSet(const WorkerSet&) = delete;
  WorkerSet& operator=(const WorkerSet&) = delete;

  int n_workers() const { return static_cast<int>(envs_.size()); }
  Env& env(int worker) { return *envs_[worker]; }
  const AssemblyModule& module(int worker) const;
  uint64_t module_seed(int worker) const { return module_seeds_[worker]; }

  // Spawn spread for new episodes, in [0, 1]; applies from the next reset.
  void set_curriculum(double progress);
  double curriculum() const { return curriculum_; }

  // Restarts every worker's episode. Returns the N x 18 observation batch.
  ObsBatch reset();

  // Steps every worker once with its row of `actions` (N x 6, entries are
  // clamped to [-1, 1] by the env). Workers may execute concurrently; the
  // result is identical to sequential worker-by-worker execution.
  BatchStep step(const ActionBatch& actions);

  // Observations the next step() call will act on (set by reset()/step()).
  const ObsBatch& observations() const { return observations_; }
  // True until the first reset(); step() resets implicitly in that case.
  bool needs_reset() const { return needs_reset_; }

  // Env steps summed over all workers since construction.
  uint64_t total_env_steps() const { return total_env_steps_; }

  // Finished episodes since the last drain, ordered by termination tick and
  // worker index within a tick.
  std::vector<EpisodeRecord> drain_episode_records();

 private:
  struct Pool;
  void init_workers(const std::vector<uint64_t>& seeds);
  void parallel_for_workers(const std::function<void(int)>& fn);

  VecEnvConfig config_;
  std::vector<uint64_t> module_seeds_;
  std::vector<std::unique_ptr<Env>> envs_;
  std::unique_ptr<Pool> pool_;

  double curriculum_ = 1.0;
  bool needs_reset_ = true;
  ObsBatch observations_;
  uint64_t total_env_steps_ = 0;
  std::vector<int> episode_steps_;
  std::vector<double> episode_rewards_;
  std::vector<std::vector<EpisodeRecord>> pending_records_;
};

// Batched policy for rollout collection: maps the current observation batch
// (N rows; the column count is whatever the caller feeds, e.g. stacked
// observations) to N x 6 actions in [-1, 1].
class BatchPolicy {
 public:
  virtual ~BatchPolicy() = default;
  virtual ActionBatch act(const ObsBatch& observations) = 0;
  // Invoked when worker `i` auto-resets, with the first observation of its
  // new episode, so stateful wrappers (observation stacks) can clear.
  virtual void notify_reset(int worker, const ObsVec& observation) { (void)worker, (void)observation; }
};

// One environment transition as stored by collect_rollouts.
struct Transition {
  int worker = 0;
  ObsVec observation = ObsVec::Zero();
  ActionVec action = ActionVec::Zero();
  double reward = 0.0;
  ObsVec next_observation = ObsVec::Zero();  // terminal obs when `terminal`
  bool terminal = false;                     // episode ended on this step
  EpisodeStatus status = EpisodeStatus::running;
};

struct RolloutResult {
  std::vector<Transition> transitions;  // n_steps * N, worker-major per tick
  std::vector<EpisodeRecord> episodes;  // completed during the rollout
};

// Drives `set` with `policy` for n_steps synchronized ticks.
RolloutResult collect_rollouts(WorkerSet& set, BatchPolicy& policy,
                               int n_steps);

}  // namespace pegsim
