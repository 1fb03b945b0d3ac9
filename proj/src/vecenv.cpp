#include "pegsim/vecenv.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "pegsim/rng.hpp"

namespace pegsim {

uint64_t worker_module_seed(uint64_t master_seed, uint64_t stream) {
  // One splitmix64 draw per (seed, counter) pair; see Rng::derive.
  return Rng::derive(master_seed, stream).next_u64();
}

AssemblyModule generate_worker_module(const GenConfig& config,
                                      uint64_t module_seed,
                                      uint64_t* used_seed) {
  uint64_t seed = module_seed;
  for (int attempt = 0; attempt < 16; ++attempt) {
    try {
      AssemblyModule module = generate_module(config, seed);
      if (used_seed) *used_seed = seed;
      return module;
    } catch (const std::exception& e) {
      const uint64_t next = attempt == 0
                                ? module_seed + (1ULL << 63)
                                : Rng::derive(module_seed, 0x7e5eedULL + attempt).next_u64();
      std::fprintf(stderr,
                   "pegsim: module seed %llu failed (%s); reseeding to %llu\n",
                   static_cast<unsigned long long>(seed), e.what(),
                   static_cast<unsigned long long>(next));
      seed = next;
    }
  }
  throw std::runtime_error("module generation kept failing after reseeding");
}

// Lock-step fork/join pool. The orchestrator publishes a job and joins the
// work itself; threads pull indices from the job's counter so uneven step
// costs balance. Per-job heap state keeps a late-waking thread harmless: it
// sees an exhausted counter and never touches the (finished) callable.
struct WorkerSet::Pool {
  explicit Pool(int n_threads) {
    for (int t = 0; t < n_threads - 1; ++t)
      threads_.emplace_back([this] { run(); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
      ++epoch_;
    }
    start_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void parallel_for(int n, const std::function<void(int)>& fn) {
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->count = n;
    job->remaining.store(n, std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      job_ = job;
      ++epoch_;
    }
    start_cv_.notify_all();
    drain(*job);
    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [&] {
      return job->remaining.load(std::memory_order_acquire) == 0;
    });
  }

 private:
  struct Job {
    const std::function<void(int)>* fn = nullptr;
    int count = 0;
    std::atomic<int> next{0};
    std::atomic<int> remaining{0};
  };

  void drain(Job& job) {
    for (;;) {
      const int i = job.next.fetch_add(1, std::memory_order_relaxed);
      if (i >= job.count) return;
      (*job.fn)(i);
      if (job.remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lock(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  void run() {
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        start_cv_.wait(lock, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
        job = job_;
      }
      if (job) drain(*job);
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_, done_cv_;
  std::shared_ptr<Job> job_;
  uint64_t epoch_ = 0;
  bool stop_ = false;
};

WorkerSet::WorkerSet(const VecEnvConfig& config, uint64_t master_seed,
                     uint64_t stream_offset)
    : config_(config) {
  if (config.n_workers < 1)
    throw std::invalid_argument("worker set needs at least one worker");
  std::vector<uint64_t> seeds(config.n_workers);
  for (int i = 0; i < config.n_workers; ++i)
    seeds[i] = worker_module_seed(master_seed, stream_offset + i);
  init_workers(seeds);
}

WorkerSet::WorkerSet(const VecEnvConfig& config,
                     const std::vector<uint64_t>& seeds)
    : config_(config) {
  if (seeds.empty())
    throw std::invalid_argument("worker set needs at least one worker");
  config_.n_workers = static_cast<int>(seeds.size());
  init_workers(seeds);
}

WorkerSet::~WorkerSet() = default;

void WorkerSet::init_workers(const std::vector<uint64_t>& seeds) {
  module_seeds_ = seeds;
  const int n = static_cast<int>(seeds.size());
  envs_.reserve(n);
  for (int i = 0; i < n; ++i) {
    AssemblyModule module =
        generate_worker_module(config_.generator, seeds[i], &module_seeds_[i]);
    // The env stream is split off the module seed so that a worker's whole
    // trajectory is a function of its own seed alone.
    const uint64_t env_seed = Rng::derive(module_seeds_[i], 1).next_u64();
    envs_.push_back(std::make_unique<Env>(std::move(module), config_.env,
                                          config_.physics, env_seed));
  }

  int threads = config_.n_threads;
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads > 1) pool_ = std::make_unique<Pool>(threads);

  observations_.setZero(n, kObservationDim);
  episode_steps_.assign(n, 0);
  episode_rewards_.assign(n, 0.0);
  pending_records_.resize(n);
}

const AssemblyModule& WorkerSet::module(int worker) const {
  return envs_[worker]->module();
}

void WorkerSet::set_curriculum(double progress) {
  curriculum_ = std::clamp(progress, 0.0, 1.0);
}

void WorkerSet::parallel_for_workers(const std::function<void(int)>& fn) {
  if (pool_) {
    pool_->parallel_for(n_workers(), fn);
  } else {
    for (int i = 0; i < n_workers(); ++i) fn(i);
  }
}

ObsBatch WorkerSet::reset() {
  parallel_for_workers([&](int i) {
    observations_.row(i) = envs_[i]->reset(curriculum_).transpose();
    episode_steps_[i] = 0;
    episode_rewards_[i] = 0.0;
  });
  needs_reset_ = false;
  return observations_;
}

BatchStep WorkerSet::step(const ActionBatch& actions) {
  const int n = n_workers();
  if (actions.rows() != n || actions.cols() != kActionDim)
    throw std::invalid_argument("action batch must be n_workers x 6");
  if (needs_reset_) reset();

  BatchStep out;
  out.observations.setZero(n, kObservationDim);
  out.final_observations.setZero(n, kObservationDim);
  out.rewards.setZero(n);
  out.statuses.assign(n, EpisodeStatus::running);
  out.reset.assign(n, 0);
  out.diverged.assign(n, 0);

  total_env_steps_ += static_cast<uint64_t>(n);
  const uint64_t global = total_env_steps_;

  parallel_for_workers([&](int i) {
    Env& env = *envs_[i];
    const StepResult r = env.step(actions.row(i).transpose());
    ++episode_steps_[i];
    episode_rewards_[i] += r.reward;
    out.rewards(i) = r.reward;
    out.statuses[i] = r.status;
    out.diverged[i] = r.diverged ? 1 : 0;
    if (r.status == EpisodeStatus::running) {
      out.observations.row(i) = r.observation.transpose();
    } else {
      out.reset[i] = 1;
      out.final_observations.row(i) = r.observation.transpose();
      EpisodeRecord rec;
      rec.worker = i;
      rec.module_seed = module_seeds_[i];
      rec.outcome = r.status;
      rec.steps = episode_steps_[i];
      rec.sim_time = episode_steps_[i] * (1.0 / config_.env.control_hz);
      rec.cumulative_reward = episode_rewards_[i];
      rec.end_global_step = global;
      pending_records_[i].push_back(rec);
      out.observations.row(i) = env.reset(curriculum_).transpose();
      episode_steps_[i] = 0;
      episode_rewards_[i] = 0.0;
    }
  });

  observations_ = out.observations;
  return out;
}

std::vector<EpisodeRecord> WorkerSet::drain_episode_records() {
  std::vector<EpisodeRecord> merged;
  for (auto& per_worker : pending_records_) {
    merged.insert(merged.end(), per_worker.begin(), per_worker.end());
    per_worker.clear();
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const EpisodeRecord& a, const EpisodeRecord& b) {
                     if (a.end_global_step != b.end_global_step)
                       return a.end_global_step < b.end_global_step;
                     return a.worker < b.worker;
                   });
  return merged;
}

RolloutResult collect_rollouts(WorkerSet& set, BatchPolicy& policy,
                               int n_steps) {
  RolloutResult out;
  const int n = set.n_workers();
  if (set.needs_reset()) {
    const ObsBatch first = set.reset();
    for (int i = 0; i < n; ++i)
      policy.notify_reset(i, first.row(i).transpose());
  }
  out.transitions.reserve(static_cast<size_t>(n_steps) * n);
  for (int t = 0; t < n_steps; ++t) {
    const ObsBatch obs = set.observations();
    const ActionBatch actions = policy.act(obs);
    const BatchStep batch = set.step(actions);
    for (int i = 0; i < n; ++i) {
      Transition tr;
      tr.worker = i;
      tr.observation = obs.row(i).transpose();
      tr.action = actions.row(i).transpose();
      tr.reward = batch.rewards(i);
      tr.terminal = batch.reset[i] != 0;
      tr.status = batch.statuses[i];
      tr.next_observation = tr.terminal
                                ? ObsVec(batch.final_observations.row(i).transpose())
                                : ObsVec(batch.observations.row(i).transpose());
      out.transitions.push_back(tr);
      if (tr.terminal)
        policy.notify_reset(i, batch.observations.row(i).transpose());
    }
  }
  out.episodes = set.drain_episode_records();
  return out;
}

}  // namespace pegsim
