#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include "pegsim/env.hpp"
#include "pegsim/net.hpp"

namespace pegsim {

// Fixed-scale normalization: the two translation blocks are divided by
// 0.5 m; the 6D rotation entries are already order one. Keeping the scales
// constant (instead of running statistics) makes evaluation deterministic.
ObsVec normalize_observation(const ObsVec& obs, double translation_scale = 0.5);

// Keeps the K most recent observations, concatenated oldest-first into a
// 18K-dimensional vector. The first push after a reset pre-fills all K slots
// with that observation.
class ObservationStacker {
 public:
  explicit ObservationStacker(int k);
  int depth() const { return k_; }
  int dim() const { return k_ * kObservationDim; }
  void reset() { history_.clear(); }
  VectorXd push(const ObsVec& obs);
  VectorXd stacked() const;

 private:
  int k_;
  std::deque<ObsVec> history_;
};

// Env adapter exposing stacked observations; reward and termination pass
// through untouched.
class StackedEnv {
 public:
  StackedEnv(Env& env, int k) : env_(env), stacker_(k) {}

  struct Result {
    VectorXd observation;
    double reward = 0.0;
    EpisodeStatus status = EpisodeStatus::running;
    bool diverged = false;
  };

  int dim() const { return stacker_.dim(); }
  VectorXd reset(double curriculum = 1.0);
  Result step(const ActionVec& action);

 private:
  Env& env_;
  ObservationStacker stacker_;
};

// Proportional phase controller on the decoded observation: fly to a hover
// point above the entrance, align the rotation, then descend along the hole
// axis onto the bottom target. Used to validate environments and as the
// success-rate oracle.
ActionVec scripted_act(const ObsVec& obs);

// Episode-scoped policy: begin_episode() at reset, then act() on each raw
// observation. Stateful wrappers (stacking) live behind this interface.
class EpisodePolicy {
 public:
  virtual ~EpisodePolicy() = default;
  virtual void begin_episode(const ObsVec& first) { (void)first; }
  virtual ActionVec act(const ObsVec& obs) = 0;
};

class ScriptedPolicy : public EpisodePolicy {
 public:
  ActionVec act(const ObsVec& obs) override { return scripted_act(obs); }
};

class RandomPolicy : public EpisodePolicy {
 public:
  explicit RandomPolicy(uint64_t seed) : rng_(seed) {}
  ActionVec act(const ObsVec&) override {
    ActionVec a;
    for (int i = 0; i < kActionDim; ++i) a[i] = rng_.uniform(-1.0, 1.0);
    return a;
  }

 private:
  Rng rng_;
};

// One sampled training batch, rows aligned across fields. `mask` is the
// discount multiplier: 0 where the episode truly ended (success or failure),
// 1 where it continues or was merely truncated by the step limit.
struct SacBatch {
  MatrixXd obs, actions, next_obs;
  VectorXd rewards, mask;
};

// FIFO ring of transitions in float32 storage, uniform sampling with
// replacement. Refuses to sample before the warm-up threshold.
class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, int obs_dim, size_t warmup);

  void add(const VectorXd& obs, const ActionVec& action, double reward,
           const VectorXd& next_obs, bool done);
  bool ready() const { return size_ >= warmup_; }
  size_t size() const { return size_; }
  size_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  SacBatch sample(int batch_size, Rng& rng) const;

 private:
  size_t capacity_, warmup_;
  int obs_dim_, row_;
  size_t size_ = 0, head_ = 0;
  std::vector<float> data_;
};

struct SacConfig {
  std::vector<int> hidden{512, 512};
  double learning_rate = 8e-5;
  double discount = 0.997;
  int batch_size = 4096;
  double entropy_coef = 3e-4;
  // Gradient updates per environment batch tick.
  int train_ratio = 8;
  double tau = 0.005;   // target network smoothing
  size_t replay_capacity = 20000000;
  size_t replay_warmup = 500000;
  int stack = 10;
  double translation_scale = 0.5;

  void validate() const;
};

// Scaled-down configuration for runs on a single desktop core: smaller
// networks, batch and buffer; the learning dynamics are otherwise identical.
SacConfig desk_sac_config();

struct LossSummary {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;  // mean of -log pi(a|s) for the sampled actions
  double q_mean = 0.0;
};

// Soft actor-critic with twin critics, Polyak-averaged targets, a
// tanh-squashed Gaussian policy and a fixed entropy coefficient.
class SacLearner {
 public:
  SacLearner(const SacConfig& config, int obs_dim, uint64_t seed);

  const SacConfig& config() const { return config_; }
  int obs_dim() const { return obs_dim_; }
  long updates() const { return updates_; }

  // Actions for a batch of normalized, stacked observations (rows). The
  // deterministic mode returns tanh of the policy mean; the stochastic mode
  // draws exploration noise from the learner's own stream.
  MatrixXd act(const MatrixXd& obs, bool deterministic);
  // Same, with caller-supplied standard normal noise (rows x 6).
  MatrixXd act_with_noise(const MatrixXd& obs, const MatrixXd& eps) const;

  LossSummary update(const SacBatch& batch);

  // Pieces of the update, exposed for verification. `next_eps` / `eps` are
  // the standard normal draws that update() would take internally.
  VectorXd td_target(const SacBatch& batch, const MatrixXd& next_eps) const;
  double critic_loss(const SacBatch& batch, const VectorXd& target) const;
  VectorXd critic_grad(const SacBatch& batch, const VectorXd& target) const;
  double actor_loss(const MatrixXd& obs, const MatrixXd& eps) const;
  VectorXd actor_grad(const MatrixXd& obs, const MatrixXd& eps) const;

  Mlp& actor_net() { return actor_; }
  Mlp& critic1_net() { return critic1_; }
  Mlp& critic2_net() { return critic2_; }
  const Mlp& target1_net() const { return target1_; }
  const Mlp& target2_net() const { return target2_; }

  void save(std::ostream& out) const;
  static SacLearner load(std::istream& in);

 private:
  struct PolicySample {
    MatrixXd mean, log_std, u, actions;
    VectorXd log_prob;
  };
  PolicySample sample_policy(const MatrixXd& obs, const MatrixXd& eps,
                             Mlp::Cache* cache) const;
  MatrixXd gaussian(int rows, int cols);

  struct CriticEval {
    double loss = 0.0;
    MlpGrads g1, g2;
  };
  CriticEval critic_eval(const SacBatch& batch, const VectorXd& y,
                         bool want_grads) const;

  struct ActorEval {
    double loss = 0.0, entropy = 0.0, q_mean = 0.0;
    MlpGrads grads;
  };
  ActorEval actor_eval(const MatrixXd& obs, const MatrixXd& eps,
                       bool want_grads) const;

  SacConfig config_;
  int obs_dim_ = 0;
  Mlp actor_, critic1_, critic2_, target1_, target2_;
  AdamState opt_actor_, opt_critic1_, opt_critic2_;
  Rng rng_;
  long updates_ = 0;
};

// Action for a single stacked observation through the loaded policy.
ActionVec sac_act(SacLearner& learner, const VectorXd& stacked_obs,
                  bool deterministic);

// Versioned policy checkpoint; load(save(x)) reproduces actions bit-exactly.
void save_policy(const SacLearner& learner, std::ostream& out);
SacLearner load_policy(std::istream& in);

// Episode adapter for a trained policy: normalizes, stacks, acts.
class SacPolicy : public EpisodePolicy {
 public:
  SacPolicy(SacLearner& learner, bool deterministic)
      : learner_(learner), stacker_(learner.config().stack), deterministic_(deterministic) {}
  void begin_episode(const ObsVec&) override { stacker_.reset(); }
  ActionVec act(const ObsVec& obs) override;

 private:
  SacLearner& learner_;
  ObservationStacker stacker_;
  bool deterministic_;
};

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  std::vector<double> per_module;        // success fraction per module
  std::vector<double> completion_times;  // seconds, successful episodes only
  double time_median = 0.0, time_q25 = 0.0, time_q75 = 0.0;  // NaN if none
};

// Runs attempts-per-module episodes at full difficulty with the configured
// noise and reports success statistics. Deterministic in (policy, seed).
EvalResult evaluate_policy(EpisodePolicy& policy,
                           const std::vector<AssemblyModule>& modules,
                           int attempts_per_module, const EnvConfig& env_config,
                           const PhysicsConfig& physics_config, uint64_t seed);

// Reference hyperparameters of the two algorithms this project does not
// implement; kept alongside the SAC values they were tuned against.
namespace reference {
// PPO: on-policy, clipped surrogate objective.
inline constexpr double ppo_learning_rate = 3e-4;
inline constexpr double ppo_discount = 0.997;
inline constexpr int ppo_batch_size = 8192;
inline constexpr int ppo_horizon = 128;
inline constexpr double ppo_entropy_coef = 3e-4;
inline constexpr int ppo_train_ratio = 8;
// DreamerV3: model-based, learned world model with imagined rollouts.
inline constexpr double dreamer_world_lr = 1e-4;
inline constexpr double dreamer_actor_critic_lr = 3e-5;
inline constexpr double dreamer_discount = 0.997;
inline constexpr int dreamer_batch_size = 16;
inline constexpr int dreamer_batch_length = 64;
inline constexpr int dreamer_imagination_horizon = 25;
inline constexpr double dreamer_entropy_coef = 3e-4;
inline constexpr int dreamer_train_ratio = 8;
inline constexpr double dreamer_replay_capacity = 2e7;
inline constexpr double dreamer_replay_warmup = 5e5;
// All three algorithms share the [512, 512] layer architecture.
inline constexpr int network_hidden = 512;
}  // namespace reference

}  // namespace pegsim
