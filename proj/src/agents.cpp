#include "pegsim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace pegsim {

namespace {

constexpr double kLogStdMin = -5.0, kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Rotation log map: axis * angle, robust near 0 and near pi.
Vec3 rotation_vector(const Mat3& r) {
  const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sn = 0.5 * s.norm();
  const double cs = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sn, cs);
  if (sn > 1e-6) return s * (theta / (2.0 * sn));
  if (cs > 0.0) return 0.5 * s;
  // Angle near pi: the axis survives in the symmetric part.
  const Mat3 m = 0.5 * (r + r.transpose());
  Vec3 v;
  for (int i = 0; i < 3; ++i)
    v[i] = std::sqrt(std::max(0.0, (m(i, i) - cs) / (1.0 - cs)));
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (v[i] > v[k]) k = i;
  for (int i = 0; i < 3; ++i)
    if (i != k && m(k, i) < 0.0) v[i] = -v[i];
  return theta * v.normalized();
}

// Linear-interpolation quantile of an already sorted sample.
double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void save_adam(std::ostream& out, const AdamState& s) {
  bio::write_i64(out, s.steps);
  bio::write_u32(out, static_cast<uint32_t>(s.mw.size()));
  for (size_t l = 0; l < s.mw.size(); ++l) {
    bio::write_vec(out, Eigen::Map<const VectorXd>(s.mw[l].data(), s.mw[l].size()));
    bio::write_vec(out, Eigen::Map<const VectorXd>(s.vw[l].data(), s.vw[l].size()));
    bio::write_vec(out, s.mb[l]);
    bio::write_vec(out, s.vb[l]);
  }
}

void load_adam(std::istream& in, AdamState& s) {
  s.steps = bio::read_i64(in);
  const uint32_t layers = bio::read_u32(in);
  if (layers != s.mw.size()) throw std::runtime_error("optimizer state shape mismatch");
  for (size_t l = 0; l < s.mw.size(); ++l) {
    const VectorXd mw = bio::read_vec(in), vw = bio::read_vec(in);
    if (mw.size() != s.mw[l].size() || vw.size() != s.vw[l].size())
      throw std::runtime_error("optimizer state shape mismatch");
    Eigen::Map<VectorXd>(s.mw[l].data(), s.mw[l].size()) = mw;
    Eigen::Map<VectorXd>(s.vw[l].data(), s.vw[l].size()) = vw;
    s.mb[l] = bio::read_vec(in);
    s.vb[l] = bio::read_vec(in);
    if (s.mb[l].size() != s.vb[l].size()) throw std::runtime_error("optimizer state shape mismatch");
  }
}

}  // namespace

ObsVec normalize_observation(const ObsVec& obs, double translation_scale) {
  ObsVec n = obs;
  n.segment<3>(0) /= translation_scale;
  n.segment<3>(9) /= translation_scale;
  return n;
}

ObservationStacker::ObservationStacker(int k) : k_(k) {
  if (k < 1) throw std::invalid_argument("stack depth must be at least 1");
}

VectorXd ObservationStacker::push(const ObsVec& obs) {
  if (history_.empty()) {
    for (int i = 0; i < k_; ++i) history_.push_back(obs);
  } else {
    history_.push_back(obs);
    history_.pop_front();
  }
  return stacked();
}

VectorXd ObservationStacker::stacked() const {
  if (history_.empty()) throw std::logic_error("stacker read before the first observation");
  VectorXd out(dim());
  for (int i = 0; i < k_; ++i) out.segment(i * kObservationDim, kObservationDim) = history_[i];
  return out;
}

VectorXd StackedEnv::reset(double curriculum) {
  stacker_.reset();
  return stacker_.push(env_.reset(curriculum));
}

StackedEnv::Result StackedEnv::step(const ActionVec& action) {
  const StepResult r = env_.step(action);
  return {stacker_.push(r.observation), r.reward, r.status, r.diverged};
}

ActionVec scripted_act(const ObsVec& obs) {
  Rotation6D six;
  const Vec3 t_ent = obs.segment<3>(0);
  six.values = obs.segment<6>(3);
  const Mat3 r_peg = rot6d_decode(six);  // entrance frame is world-aligned
  const Vec3 t_bot = obs.segment<3>(9);
  six.values = obs.segment<6>(12);
  const Mat3 r_rel = rot6d_decode(six);  // peg rotation in the bottom frame

  const Mat3 r_hole = r_peg * r_rel.transpose();
  const Vec3 axis = r_hole.col(2);
  // World-frame rotation needed to reach the canonical insert rotation.
  const Vec3 rot_err = r_peg * rotation_vector(r_rel.transpose());
  // Peg origin relative to the bottom target, world axes.
  const Vec3 w_bot = r_hole * t_bot;
  // Entrance-to-bottom distance recovered from the two translation blocks.
  const double depth = axis.dot(w_bot - t_ent);
  const double above_entrance = t_bot.z() - depth;
  const double lateral = t_bot.head<2>().norm();

  constexpr double hover = 0.02;         // approach point above the entrance, m
  constexpr double k_lin = 4.0;          // 1/s
  constexpr double k_rot = 4.0;
  constexpr double align_tol = 0.12;     // rad
  constexpr double center_tol = 0.002;   // m
  constexpr double insert_speed = 0.08;  // m/s cap while descending
  constexpr double max_lin = 0.25, max_ang = M_PI / 2.0;

  const bool aligned = rot_err.norm() < align_tol;
  const bool centered = lateral < center_tol;
  const bool inside = above_entrance < 0.0;

  Vec3 v;
  if ((aligned && centered) || (inside && lateral < 3.0 * center_tol)) {
    // Descend onto the bottom target, axial speed capped, lateral free.
    const Vec3 raw = -k_lin * w_bot;
    const double vax = std::clamp(raw.dot(axis), -insert_speed, insert_speed);
    v = (raw - raw.dot(axis) * axis) + vax * axis;
  } else {
    v = k_lin * (hover * axis - t_ent);
  }
  const Vec3 w = k_rot * rot_err;

  ActionVec a;
  a.head<3>() = v / max_lin;
  a.tail<3>() = w / max_ang;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

ReplayBuffer::ReplayBuffer(size_t capacity, int obs_dim, size_t warmup)
    : capacity_(capacity),
      warmup_(warmup),
      obs_dim_(obs_dim),
      row_(2 * obs_dim + kActionDim + 2) {
  if (capacity < 1 || warmup < 1 || warmup > capacity || obs_dim < 1)
    throw std::invalid_argument("bad replay buffer shape");
}

void ReplayBuffer::add(const VectorXd& obs, const ActionVec& action, double reward,
                       const VectorXd& next_obs, bool done) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
    throw std::invalid_argument("transition dimension mismatch");
  size_t slot;
  if (size_ < capacity_) {
    slot = size_++;
    data_.resize(size_ * static_cast<size_t>(row_));
  } else {
    slot = head_;
    head_ = (head_ + 1) % capacity_;  // overwrite the oldest
  }
  float* p = &data_[slot * static_cast<size_t>(row_)];
  for (int i = 0; i < obs_dim_; ++i) *p++ = static_cast<float>(obs[i]);
  for (int i = 0; i < kActionDim; ++i) *p++ = static_cast<float>(action[i]);
  *p++ = static_cast<float>(reward);
  for (int i = 0; i < obs_dim_; ++i) *p++ = static_cast<float>(next_obs[i]);
  *p = done ? 0.0f : 1.0f;  // discount mask
}

SacBatch ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (!ready()) throw std::logic_error("replay buffer sampled before warm-up");
  SacBatch b;
  b.obs.resize(batch_size, obs_dim_);
  b.actions.resize(batch_size, kActionDim);
  b.next_obs.resize(batch_size, obs_dim_);
  b.rewards.resize(batch_size);
  b.mask.resize(batch_size);
  for (int r = 0; r < batch_size; ++r) {
    const size_t idx = rng.next_u64() % size_;
    const float* p = &data_[idx * static_cast<size_t>(row_)];
    for (int i = 0; i < obs_dim_; ++i) b.obs(r, i) = *p++;
    for (int i = 0; i < kActionDim; ++i) b.actions(r, i) = *p++;
    b.rewards(r) = *p++;
    for (int i = 0; i < obs_dim_; ++i) b.next_obs(r, i) = *p++;
    b.mask(r) = *p;
  }
  return b;
}

void SacConfig::validate() const {
  bool ok = learning_rate > 0 && discount >= 0 && discount < 1 && batch_size > 0 &&
            entropy_coef >= 0 && train_ratio > 0 && tau > 0 && tau <= 1 &&
            replay_capacity > 0 && replay_warmup > 0 && replay_warmup <= replay_capacity &&
            stack > 0 && translation_scale > 0 && !hidden.empty();
  for (int h : hidden) ok = ok && h > 0;
  if (!ok) throw std::invalid_argument("invalid learner configuration");
}

SacConfig desk_sac_config() {
  SacConfig c;
  c.hidden = {128, 128};
  c.learning_rate = 3e-4;
  c.batch_size = 256;
  c.replay_capacity = 1000000;
  c.replay_warmup = 10000;
  return c;
}

SacLearner::SacLearner(const SacConfig& config, int obs_dim, uint64_t seed)
    : config_(config), obs_dim_(obs_dim), rng_(Rng::derive(seed, 0x5ac).next_u64()) {
  config_.validate();
  if (obs_dim < 1) throw std::invalid_argument("bad observation dimension");
  Rng init = Rng::derive(seed, 1);
  actor_ = Mlp(obs_dim, config_.hidden, 2 * kActionDim, init);
  critic1_ = Mlp(obs_dim + kActionDim, config_.hidden, 1, init);
  critic2_ = Mlp(obs_dim + kActionDim, config_.hidden, 1, init);
  target1_ = critic1_;
  target2_ = critic2_;
  opt_actor_ = actor_.zero_adam();
  opt_critic1_ = critic1_.zero_adam();
  opt_critic2_ = critic2_.zero_adam();
}

MatrixXd SacLearner::gaussian(int rows, int cols) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng_.normal();
  return m;
}

SacLearner::PolicySample SacLearner::sample_policy(const MatrixXd& obs, const MatrixXd& eps,
                                                   Mlp::Cache* cache) const {
  PolicySample ps;
  const MatrixXd out = actor_.forward(obs, cache);
  ps.mean = out.leftCols(kActionDim);
  ps.log_std = out.rightCols(kActionDim).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  ps.u = ps.mean + ps.log_std.array().exp().matrix().cwiseProduct(eps);
  ps.actions = ps.u.array().tanh().matrix();
  ps.log_prob.setZero(obs.rows());
  for (int r = 0; r < obs.rows(); ++r) {
    double lp = 0.0;
    for (int j = 0; j < kActionDim; ++j) {
      const double u = ps.u(r, j);
      lp += -0.5 * eps(r, j) * eps(r, j) - kHalfLog2Pi - ps.log_std(r, j);
      lp -= 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));  // log(1 - tanh(u)^2)
    }
    ps.log_prob(r) = lp;
  }
  return ps;
}

MatrixXd SacLearner::act(const MatrixXd& obs, bool deterministic) {
  if (deterministic) {
    const MatrixXd out = actor_.forward(obs);
    return out.leftCols(kActionDim).array().tanh().matrix();
  }
  return act_with_noise(obs, gaussian(static_cast<int>(obs.rows()), kActionDim));
}

MatrixXd SacLearner::act_with_noise(const MatrixXd& obs, const MatrixXd& eps) const {
  return sample_policy(obs, eps, nullptr).actions;
}

VectorXd SacLearner::td_target(const SacBatch& batch, const MatrixXd& next_eps) const {
  const PolicySample ps = sample_policy(batch.next_obs, next_eps, nullptr);
  MatrixXd xin(batch.next_obs.rows(), obs_dim_ + kActionDim);
  xin.leftCols(obs_dim_) = batch.next_obs;
  xin.rightCols(kActionDim) = ps.actions;
  const VectorXd q1 = target1_.forward(xin).col(0);
  const VectorXd q2 = target2_.forward(xin).col(0);
  const VectorXd qmin = q1.cwiseMin(q2);
  // Soft backup: value bootstrap discounted, next-step entropy bonus masked
  // with it, so gamma = 0 leaves reward plus the entropy term.
  return batch.rewards.array() +
         batch.mask.array() *
             (config_.discount * qmin.array() - config_.entropy_coef * ps.log_prob.array());
}

SacLearner::CriticEval SacLearner::critic_eval(const SacBatch& batch, const VectorXd& y,
                                               bool want_grads) const {
  const int n = static_cast<int>(batch.obs.rows());
  MatrixXd xin(n, obs_dim_ + kActionDim);
  xin.leftCols(obs_dim_) = batch.obs;
  xin.rightCols(kActionDim) = batch.actions;

  CriticEval ev;
  Mlp::Cache c1, c2;
  const VectorXd q1 = critic1_.forward(xin, want_grads ? &c1 : nullptr).col(0);
  const VectorXd q2 = critic2_.forward(xin, want_grads ? &c2 : nullptr).col(0);
  const VectorXd d1 = q1 - y, d2 = q2 - y;
  ev.loss = 0.5 * (d1.squaredNorm() + d2.squaredNorm()) / n;
  if (want_grads) {
    ev.g1 = critic1_.zero_grads();
    ev.g2 = critic2_.zero_grads();
    critic1_.backward(c1, d1 / n, &ev.g1);
    critic2_.backward(c2, d2 / n, &ev.g2);
  }
  return ev;
}

double SacLearner::critic_loss(const SacBatch& batch, const VectorXd& target) const {
  return critic_eval(batch, target, false).loss;
}

VectorXd SacLearner::critic_grad(const SacBatch& batch, const VectorXd& target) const {
  const CriticEval ev = critic_eval(batch, target, true);
  const VectorXd f1 = flat_grads(ev.g1), f2 = flat_grads(ev.g2);
  VectorXd g(f1.size() + f2.size());
  g << f1, f2;
  return g;
}

SacLearner::ActorEval SacLearner::actor_eval(const MatrixXd& obs, const MatrixXd& eps,
                                             bool want_grads) const {
  const int n = static_cast<int>(obs.rows());
  Mlp::Cache ca;
  const PolicySample ps = sample_policy(obs, eps, want_grads ? &ca : nullptr);

  MatrixXd xin(n, obs_dim_ + kActionDim);
  xin.leftCols(obs_dim_) = obs;
  xin.rightCols(kActionDim) = ps.actions;
  Mlp::Cache c1, c2;
  const VectorXd q1 = critic1_.forward(xin, want_grads ? &c1 : nullptr).col(0);
  const VectorXd q2 = critic2_.forward(xin, want_grads ? &c2 : nullptr).col(0);
  const VectorXd qmin = q1.cwiseMin(q2);

  ActorEval ev;
  ev.loss = (config_.entropy_coef * ps.log_prob - qmin).mean();
  ev.entropy = -ps.log_prob.mean();
  ev.q_mean = qmin.mean();
  if (!want_grads) return ev;

  // dL/d(min q) = -1/n, routed to whichever critic attains the minimum.
  MatrixXd gq1 = MatrixXd::Zero(n, 1), gq2 = MatrixXd::Zero(n, 1);
  for (int r = 0; r < n; ++r) {
    if (q1(r) <= q2(r)) gq1(r, 0) = -1.0 / n;
    else gq2(r, 0) = -1.0 / n;
  }
  const MatrixXd gin = critic1_.backward(c1, gq1, nullptr) + critic2_.backward(c2, gq2, nullptr);
  const MatrixXd dl_da = gin.rightCols(kActionDim);

  const MatrixXd one_m_a2 =
      (1.0 - ps.actions.array().square()).matrix();  // dtanh
  const MatrixXd dl_du = dl_da.cwiseProduct(one_m_a2) +
                         (2.0 * config_.entropy_coef / n) * ps.actions;
  const MatrixXd sigma_eps = ps.log_std.array().exp().matrix().cwiseProduct(eps);
  MatrixXd dl_dlogstd = dl_du.cwiseProduct(sigma_eps);
  dl_dlogstd.array() -= config_.entropy_coef / n;
  // Clamp subgradient: zero where the raw log-std was clipped.
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < kActionDim; ++j)
      if (ps.log_std(r, j) <= kLogStdMin || ps.log_std(r, j) >= kLogStdMax)
        dl_dlogstd(r, j) = 0.0;

  MatrixXd gout(n, 2 * kActionDim);
  gout.leftCols(kActionDim) = dl_du;
  gout.rightCols(kActionDim) = dl_dlogstd;
  ev.grads = actor_.zero_grads();
  actor_.backward(ca, gout, &ev.grads);
  return ev;
}

double SacLearner::actor_loss(const MatrixXd& obs, const MatrixXd& eps) const {
  return actor_eval(obs, eps, false).loss;
}

VectorXd SacLearner::actor_grad(const MatrixXd& obs, const MatrixXd& eps) const {
  return flat_grads(actor_eval(obs, eps, true).grads);
}

LossSummary SacLearner::update(const SacBatch& batch) {
  const int n = static_cast<int>(batch.obs.rows());
  if (batch.obs.cols() != obs_dim_ || batch.next_obs.cols() != obs_dim_ ||
      batch.actions.cols() != kActionDim || batch.rewards.size() != n ||
      batch.mask.size() != n)
    throw std::invalid_argument("batch shape mismatch");

  const MatrixXd next_eps = gaussian(n, kActionDim);
  const VectorXd y = td_target(batch, next_eps);
  const CriticEval ce = critic_eval(batch, y, true);
  critic1_.adam_step(ce.g1, opt_critic1_, config_.learning_rate);
  critic2_.adam_step(ce.g2, opt_critic2_, config_.learning_rate);

  const MatrixXd eps = gaussian(n, kActionDim);
  const ActorEval ae = actor_eval(batch.obs, eps, true);
  actor_.adam_step(ae.grads, opt_actor_, config_.learning_rate);

  target1_.blend_from(critic1_, config_.tau);
  target2_.blend_from(critic2_, config_.tau);
  ++updates_;

  LossSummary s{ce.loss, ae.loss, ae.entropy, ae.q_mean};
  if (!std::isfinite(s.critic_loss) || !std::isfinite(s.actor_loss) ||
      !std::isfinite(s.entropy)) {
    std::ostringstream what;
    what << "non-finite learner loss (critic " << s.critic_loss << ", actor " << s.actor_loss
         << ", entropy " << s.entropy << "; rewards [" << batch.rewards.minCoeff() << ", "
         << batch.rewards.maxCoeff() << "], target [" << y.minCoeff() << ", " << y.maxCoeff()
         << "], update " << updates_ << ")";
    throw std::runtime_error(what.str());
  }
  return s;
}

ActionVec sac_act(SacLearner& learner, const VectorXd& stacked_obs, bool deterministic) {
  if (stacked_obs.size() != learner.obs_dim())
    throw std::invalid_argument("observation dimension mismatch");
  const MatrixXd a = learner.act(stacked_obs.transpose(), deterministic);
  return a.row(0).transpose();
}

void SacLearner::save(std::ostream& out) const {
  bio::write_u32(out, 0x50534143u);  // "CASP" magic
  bio::write_u32(out, 1u);           // format version
  bio::write_u32(out, static_cast<uint32_t>(config_.hidden.size()));
  for (int h : config_.hidden) bio::write_i64(out, h);
  bio::write_f64(out, config_.learning_rate);
  bio::write_f64(out, config_.discount);
  bio::write_i64(out, config_.batch_size);
  bio::write_f64(out, config_.entropy_coef);
  bio::write_i64(out, config_.train_ratio);
  bio::write_f64(out, config_.tau);
  bio::write_i64(out, static_cast<int64_t>(config_.replay_capacity));
  bio::write_i64(out, static_cast<int64_t>(config_.replay_warmup));
  bio::write_i64(out, config_.stack);
  bio::write_f64(out, config_.translation_scale);
  bio::write_i64(out, obs_dim_);
  bio::write_i64(out, updates_);
  const Rng::Snapshot snap = rng_.snapshot();
  bio::write_i64(out, static_cast<int64_t>(snap.state));
  bio::write_u32(out, snap.have_spare ? 1 : 0);
  bio::write_f64(out, snap.spare);
  actor_.save(out);
  critic1_.save(out);
  critic2_.save(out);
  target1_.save(out);
  target2_.save(out);
  save_adam(out, opt_actor_);
  save_adam(out, opt_critic1_);
  save_adam(out, opt_critic2_);
}

SacLearner SacLearner::load(std::istream& in) {
  if (bio::read_u32(in) != 0x50534143u) throw std::runtime_error("not a policy checkpoint");
  if (bio::read_u32(in) != 1u) throw std::runtime_error("unsupported checkpoint version");
  SacConfig cfg;
  cfg.hidden.resize(bio::read_u32(in));
  for (int& h : cfg.hidden) h = static_cast<int>(bio::read_i64(in));
  cfg.learning_rate = bio::read_f64(in);
  cfg.discount = bio::read_f64(in);
  cfg.batch_size = static_cast<int>(bio::read_i64(in));
  cfg.entropy_coef = bio::read_f64(in);
  cfg.train_ratio = static_cast<int>(bio::read_i64(in));
  cfg.tau = bio::read_f64(in);
  cfg.replay_capacity = static_cast<size_t>(bio::read_i64(in));
  cfg.replay_warmup = static_cast<size_t>(bio::read_i64(in));
  cfg.stack = static_cast<int>(bio::read_i64(in));
  cfg.translation_scale = bio::read_f64(in);
  const int obs_dim = static_cast<int>(bio::read_i64(in));
  const int64_t updates = bio::read_i64(in);
  Rng::Snapshot snap;
  snap.state = static_cast<uint64_t>(bio::read_i64(in));
  snap.have_spare = bio::read_u32(in) != 0;
  snap.spare = bio::read_f64(in);

  SacLearner learner(cfg, obs_dim, 0);
  learner.updates_ = updates;
  learner.rng_.restore(snap);
  learner.actor_ = Mlp::load(in);
  learner.critic1_ = Mlp::load(in);
  learner.critic2_ = Mlp::load(in);
  learner.target1_ = Mlp::load(in);
  learner.target2_ = Mlp::load(in);
  load_adam(in, learner.opt_actor_);
  load_adam(in, learner.opt_critic1_);
  load_adam(in, learner.opt_critic2_);
  return learner;
}

void save_policy(const SacLearner& learner, std::ostream& out) { learner.save(out); }

SacLearner load_policy(std::istream& in) { return SacLearner::load(in); }

ActionVec SacPolicy::act(const ObsVec& obs) {
  const VectorXd stacked =
      stacker_.push(normalize_observation(obs, learner_.config().translation_scale));
  return sac_act(learner_, stacked, deterministic_);
}

EvalResult evaluate_policy(EpisodePolicy& policy, const std::vector<AssemblyModule>& modules,
                           int attempts_per_module, const EnvConfig& env_config,
                           const PhysicsConfig& physics_config, uint64_t seed) {
  EvalResult res;
  res.per_module.reserve(modules.size());
  for (size_t m = 0; m < modules.size(); ++m) {
    Env env(modules[m], env_config, physics_config, Rng::derive(seed, m).next_u64());
    int wins = 0;
    for (int attempt = 0; attempt < attempts_per_module; ++attempt) {
      ObsVec obs = env.reset(1.0);
      policy.begin_episode(obs);
      EpisodeStatus status = EpisodeStatus::running;
      while (status == EpisodeStatus::running) {
        const StepResult r = env.step(policy.act(obs));
        obs = r.observation;
        status = r.status;
      }
      ++res.episodes;
      if (status == EpisodeStatus::success) {
        ++wins;
        res.completion_times.push_back(env.steps() * (1.0 / env_config.control_hz));
      }
    }
    res.successes += wins;
    res.per_module.push_back(static_cast<double>(wins) / attempts_per_module);
  }
  res.success_rate = res.episodes ? static_cast<double>(res.successes) / res.episodes : 0.0;
  std::vector<double> sorted = res.completion_times;
  std::sort(sorted.begin(), sorted.end());
  res.time_median = quantile(sorted, 0.5);
  res.time_q25 = quantile(sorted, 0.25);
  res.time_q75 = quantile(sorted, 0.75);
  return res;
}

}  // namespace pegsim
