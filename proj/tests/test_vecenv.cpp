#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <set>
#include <thread>
#include <utility>
#include <vector>

#include "pegsim/rng.hpp"
#include "pegsim/vecenv.hpp"

using namespace pegsim;

namespace {

VecEnvConfig small_config(int n_workers, int n_threads = 1) {
  VecEnvConfig cfg;
  cfg.n_workers = n_workers;
  cfg.n_threads = n_threads;
  return cfg;
}

// Deterministic per-(tick, worker) action, independent of the set size, so
// the same worker sees the same inputs in differently sized sets.
ActionVec action_for(uint64_t tick, int worker) {
  Rng r = Rng::derive(0xac7104 ^ (tick * 1000003ULL), worker);
  ActionVec a;
  for (int j = 0; j < kActionDim; ++j) a[j] = r.uniform(-1.0, 1.0);
  return a;
}

ActionBatch actions_for(uint64_t tick, int n) {
  ActionBatch a(n, kActionDim);
  for (int i = 0; i < n; ++i) a.row(i) = action_for(tick, i).transpose();
  return a;
}

// Module metadata with the seed line blanked, to compare geometry only.
std::string geometry_digest(const AssemblyModule& m) {
  std::string meta = module_metadata(m);
  const size_t pos = meta.find("\"seed\"");
  if (pos != std::string::npos) {
    const size_t end = meta.find('\n', pos);
    meta.erase(pos, end - pos);
  }
  return meta;
}

struct ZeroPolicy : BatchPolicy {
  ActionBatch act(const ObsBatch& obs) override {
    return ActionBatch::Zero(obs.rows(), kActionDim);
  }
};

struct RandomPolicy : BatchPolicy {
  Rng rng{99};
  ActionBatch act(const ObsBatch& obs) override {
    ActionBatch a(obs.rows(), kActionDim);
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < kActionDim; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    return a;
  }
};

struct ResetLog : ZeroPolicy {
  std::vector<std::pair<int, ObsVec>> resets;
  void notify_reset(int worker, const ObsVec& obs) override {
    resets.emplace_back(worker, obs);
  }
};

}  // namespace

TEST_CASE("same master seed and size reproduce the modules exactly") {
  const WorkerSet a(small_config(6), 42);
  const WorkerSet b(small_config(6), 42);
  for (int i = 0; i < 6; ++i) {
    CHECK(a.module_seed(i) == b.module_seed(i));
    CHECK(module_metadata(a.module(i)) == module_metadata(b.module(i)));
  }
  const WorkerSet c(small_config(6), 43);
  CHECK(module_metadata(a.module(0)) != module_metadata(c.module(0)));
}

TEST_CASE("1024 worker streams give 1024 distinct modules") {
  GenConfig gen;
  std::set<uint64_t> seeds;
  std::set<std::string> digests;
  for (int i = 0; i < 1024; ++i) {
    uint64_t used = 0;
    const AssemblyModule m =
        generate_worker_module(gen, worker_module_seed(2024, i), &used);
    seeds.insert(used);
    digests.insert(geometry_digest(m));
  }
  CHECK(seeds.size() == 1024);
  CHECK(digests.size() == 1024);
}

TEST_CASE("a worker's stream does not depend on the size of its set") {
  // Module seeds are a pure function of (master seed, stream index)...
  CHECK(worker_module_seed(7, 3) == worker_module_seed(7, 3));
  CHECK(worker_module_seed(7, 3) != worker_module_seed(8, 3));

  // ...so worker 7 of a 64-set matches worker 7 of an 8-set: same module and,
  // under the same per-worker actions, the same trajectory bit for bit.
  WorkerSet big(small_config(64), 7);
  WorkerSet small(small_config(8), 7);
  CHECK(big.module_seed(7) == small.module_seed(7));
  CHECK(big.module_seed(7) == worker_module_seed(7, 7));
  CHECK(module_metadata(big.module(7)) == module_metadata(small.module(7)));

  const ObsBatch ob = big.reset();
  const ObsBatch os = small.reset();
  CHECK(ob.row(7) == os.row(7));
  for (uint64_t t = 0; t < 25; ++t) {
    const BatchStep sb = big.step(actions_for(t, 64));
    const BatchStep ss = small.step(actions_for(t, 8));
    REQUIRE(sb.observations.row(7) == ss.observations.row(7));
    REQUIRE(sb.rewards(7) == ss.rewards(7));
    REQUIRE(sb.statuses[7] == ss.statuses[7]);
  }
}

TEST_CASE("evaluation streams are disjoint from training streams") {
  const int n = 16;
  std::set<uint64_t> train, test;
  for (int i = 0; i < n; ++i) {
    train.insert(worker_module_seed(5, i));
    test.insert(worker_module_seed(5, n + i));
  }
  CHECK(train.size() == n);
  CHECK(test.size() == n);
  for (uint64_t s : test) CHECK(train.count(s) == 0);

  // The offset constructor exposes exactly those held-out streams.
  const WorkerSet eval_set(small_config(4), 5, n);
  for (int i = 0; i < 4; ++i)
    CHECK(eval_set.module_seed(i) == worker_module_seed(5, n + i));
}

TEST_CASE("parallel and sequential execution are bit-identical") {
  VecEnvConfig sequential = small_config(12, 1);
  VecEnvConfig parallel = small_config(12, 4);
  // Short episodes so the comparison crosses auto-reset boundaries too.
  sequential.env.max_steps = parallel.env.max_steps = 25;
  WorkerSet seq(sequential, 31);
  WorkerSet par(parallel, 31);
  const ObsBatch o1 = seq.reset();
  const ObsBatch o2 = par.reset();
  REQUIRE(o1 == o2);
  for (uint64_t t = 0; t < 60; ++t) {
    const ActionBatch actions = actions_for(t, 12);
    const BatchStep a = seq.step(actions);
    const BatchStep b = par.step(actions);
    REQUIRE(a.observations == b.observations);
    REQUIRE(a.final_observations == b.final_observations);
    REQUIRE(a.rewards == b.rewards);
    REQUIRE(a.statuses == b.statuses);
    REQUIRE(a.reset == b.reset);
    REQUIRE(a.diverged == b.diverged);
  }
  const auto ra = seq.drain_episode_records();
  const auto rb = par.drain_episode_records();
  REQUIRE(!ra.empty());
  REQUIRE(ra.size() == rb.size());
  for (size_t k = 0; k < ra.size(); ++k) {
    CHECK(ra[k].worker == rb[k].worker);
    CHECK(ra[k].outcome == rb[k].outcome);
    CHECK(ra[k].steps == rb[k].steps);
    CHECK(ra[k].cumulative_reward == rb[k].cumulative_reward);
    CHECK(ra[k].end_global_step == rb[k].end_global_step);
  }
}

TEST_CASE("a terminated worker reports the terminal tick and restarts") {
  VecEnvConfig cfg = small_config(4);
  cfg.env.max_steps = 5;
  WorkerSet set(cfg, 11);
  set.reset();
  ZeroPolicy zero;
  for (int t = 0; t < 4; ++t) {
    const BatchStep s = set.step(zero.act(set.observations()));
    for (int i = 0; i < 4; ++i) {
      CHECK(s.statuses[i] == EpisodeStatus::running);
      CHECK(s.reset[i] == 0);
    }
  }
  // Tick 5: every episode hits the step limit and auto-resets.
  const BatchStep s5 = set.step(zero.act(set.observations()));
  for (int i = 0; i < 4; ++i) {
    CHECK(s5.statuses[i] == EpisodeStatus::timeout);
    CHECK(s5.reset[i] == 1);
    CHECK(s5.final_observations.row(i).cwiseAbs().sum() > 0.0);
    // The reported observation already belongs to the fresh episode.
    CHECK(s5.observations.row(i) != s5.final_observations.row(i));
  }
  // Tick 6: fresh episodes are running again.
  const BatchStep s6 = set.step(zero.act(set.observations()));
  for (int i = 0; i < 4; ++i) {
    CHECK(s6.statuses[i] == EpisodeStatus::running);
    CHECK(s6.reset[i] == 0);
  }

  const auto records = set.drain_episode_records();
  REQUIRE(records.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(records[i].worker == i);
    CHECK(records[i].outcome == EpisodeStatus::timeout);
    CHECK(records[i].steps == 5);
    CHECK(records[i].sim_time == 5 * 0.02);  // fixed 50 Hz control period
    CHECK(records[i].end_global_step == 5 * 4);
    CHECK(records[i].module_seed == set.module_seed(i));
  }
  CHECK(set.drain_episode_records().empty());
  CHECK(set.total_env_steps() == 6 * 4);
}

TEST_CASE("perturbing one worker's seed changes only that row") {
  std::vector<uint64_t> seeds;
  for (int i = 0; i < 6; ++i) seeds.push_back(worker_module_seed(17, i));
  std::vector<uint64_t> tweaked = seeds;
  tweaked[3] = worker_module_seed(17, 100);

  WorkerSet a(small_config(6), seeds);
  WorkerSet b(small_config(6), tweaked);
  for (int i = 0; i < 6; ++i) {
    if (i == 3) continue;
    CHECK(module_metadata(a.module(i)) == module_metadata(b.module(i)));
  }
  CHECK(module_metadata(a.module(3)) != module_metadata(b.module(3)));

  const ObsBatch oa = a.reset();
  const ObsBatch ob = b.reset();
  bool row3_differs = (oa.row(3) != ob.row(3));
  for (uint64_t t = 0; t < 20; ++t) {
    const BatchStep sa = a.step(actions_for(t, 6));
    const BatchStep sb = b.step(actions_for(t, 6));
    for (int i = 0; i < 6; ++i) {
      if (i == 3) continue;
      REQUIRE(sa.observations.row(i) == sb.observations.row(i));
      REQUIRE(sa.rewards(i) == sb.rewards(i));
    }
    row3_differs = row3_differs || (sa.observations.row(3) != sb.observations.row(3));
  }
  CHECK(row3_differs);
}

TEST_CASE("mis-shaped action batches are rejected") {
  WorkerSet set(small_config(3), 1);
  set.reset();
  CHECK_THROWS_AS(set.step(ActionBatch::Zero(2, 6)), std::invalid_argument);
  CHECK_THROWS_AS(set.step(ActionBatch::Zero(3, 5)), std::invalid_argument);
  CHECK_THROWS_AS(WorkerSet(small_config(0), 1), std::invalid_argument);
  CHECK_THROWS_AS(WorkerSet(small_config(3), std::vector<uint64_t>{}),
                  std::invalid_argument);
}

TEST_CASE("collect_rollouts yields one transition per worker-step") {
  VecEnvConfig cfg = small_config(8);
  cfg.env.max_steps = 40;
  WorkerSet set(cfg, 21);
  RandomPolicy policy;
  const RolloutResult r = collect_rollouts(set, policy, 100);
  REQUIRE(r.transitions.size() == 800);

  // Worker-major within each tick, and consecutive transitions of a worker
  // chain together: next_observation feeds the following observation unless
  // the episode ended there.
  for (int t = 0; t < 100; ++t)
    for (int i = 0; i < 8; ++i)
      CHECK(r.transitions[t * 8 + i].worker == i);
  int checked = 0;
  for (int t = 0; t + 1 < 100; ++t) {
    for (int i = 0; i < 8; ++i) {
      const Transition& cur = r.transitions[t * 8 + i];
      const Transition& nxt = r.transitions[(t + 1) * 8 + i];
      if (!cur.terminal) {
        REQUIRE(cur.next_observation == nxt.observation);
        ++checked;
      } else {
        CHECK(cur.status != EpisodeStatus::running);
      }
    }
  }
  CHECK(checked > 500);

  // Each 40-step timeout produced a record with the exact simulated time.
  CHECK(!r.episodes.empty());
  for (const EpisodeRecord& rec : r.episodes) {
    CHECK(rec.steps <= 40);
    CHECK(rec.sim_time == rec.steps * 0.02);
  }
  const int terminals = static_cast<int>(
      std::count_if(r.transitions.begin(), r.transitions.end(),
                    [](const Transition& tr) { return tr.terminal; }));
  CHECK(terminals == static_cast<int>(r.episodes.size()));
}

TEST_CASE("collect_rollouts resets the set and notifies the policy") {
  VecEnvConfig cfg = small_config(4);
  cfg.env.max_steps = 6;
  WorkerSet set(cfg, 33);
  ResetLog policy;
  CHECK(set.needs_reset());
  const RolloutResult r = collect_rollouts(set, policy, 6);
  CHECK_FALSE(set.needs_reset());
  // 4 initial notifications plus one per auto-reset at the final tick.
  REQUIRE(policy.resets.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(policy.resets[i].first == i);
    CHECK(policy.resets[4 + i].first == i);
    // The notified observation is the fresh episode's first observation,
    // not the terminal one.
    const Transition& last = r.transitions[5 * 4 + i];
    CHECK(last.terminal);
    CHECK(policy.resets[4 + i].second != last.next_observation);
  }
}

TEST_CASE("random policy at full difficulty never succeeds") {
  VecEnvConfig cfg = small_config(6);
  cfg.env.max_steps = 60;
  WorkerSet set(cfg, 77);
  set.set_curriculum(1.0);
  RandomPolicy policy;
  const RolloutResult r = collect_rollouts(set, policy, 120);
  REQUIRE(!r.episodes.empty());
  for (const EpisodeRecord& rec : r.episodes)
    CHECK(rec.outcome != EpisodeStatus::success);
}

TEST_CASE("worker throughput scales with the worker count") {
  if (std::thread::hardware_concurrency() < 8) {
    MESSAGE("fewer than 8 cores; skipping the scaling check");
    return;
  }
  auto steps_per_sec = [](int workers) {
    WorkerSet set(small_config(workers, 0), 13);
    set.reset();
    const ActionBatch zero = ActionBatch::Zero(workers, kActionDim);
    const auto start = std::chrono::steady_clock::now();
    int ticks = 0;
    while (std::chrono::steady_clock::now() - start < std::chrono::seconds(2)) {
      set.step(zero);
      ++ticks;
    }
    const double dt = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    return ticks * workers / dt;
  };
  CHECK(steps_per_sec(64) >= 4.0 * steps_per_sec(8));
}
