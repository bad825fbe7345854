#include "tlc/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "tlc/errors.hpp"

namespace tlc {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigInvalid("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++inserted_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t m, Rng& rng) const {
  const std::size_t n = data_.size();
  if (m > n) {
    throw InsufficientSamples("asked for " + std::to_string(m) + " transitions, buffer holds " +
                              std::to_string(n));
  }
  // Floyd's algorithm picks m distinct slots in O(m); the shuffle removes its
  // ordering bias.
  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = n - m; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j)));
    if (seen.insert(t).second) {
      picked.push_back(t);
    } else {
      seen.insert(j);
      picked.push_back(j);
    }
  }
  std::shuffle(picked.begin(), picked.end(), rng.engine());
  std::vector<Transition> out;
  out.reserve(m);
  for (auto i : picked) out.push_back(data_[i]);
  return out;
}

// ---------------------------------------------------------------------------

NoiseProcess::NoiseProcess(int dim, NoiseKind kind, double theta, double sigma, double dt)
    : kind_(kind), theta_(theta), sigma_(sigma), dt_(dt), x_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 1) throw std::invalid_argument("noise dimension must be positive");
  if (!(sigma >= 0.0)) throw ConfigInvalid("noise sigma must be non-negative");
  if (!(dt > 0.0)) throw ConfigInvalid("noise timestep must be positive");
  if (!(theta >= 0.0)) throw ConfigInvalid("noise mean reversion must be non-negative");
}

const Eigen::VectorXd& NoiseProcess::sample(Rng& rng) {
  const double diffusion = sigma_ * std::sqrt(dt_);
  for (Eigen::Index i = 0; i < x_.size(); ++i) {
    const double z = rng.normal();
    if (kind_ == NoiseKind::Gaussian) {
      x_(i) = sigma_ * z;
    } else {
      x_(i) += -theta_ * x_(i) * dt_ + diffusion * z;
    }
  }
  return x_;
}

void NoiseProcess::reset() { x_.setZero(); }

void NoiseProcess::set_state(const Eigen::VectorXd& x) {
  if (x.size() != x_.size()) throw DimensionMismatch("noise state has the wrong dimension");
  x_ = x;
}

void NoiseProcess::set_sigma(double sigma) {
  if (!(sigma >= 0.0)) throw ConfigInvalid("noise sigma must be non-negative");
  sigma_ = sigma;
}

// ---------------------------------------------------------------------------

namespace {

void clip_gradients(Gradients& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = std::sqrt(g.squared_norm());
  if (norm > max_norm) g.scale(max_norm / norm);
}

Eigen::MatrixXd stack_columns(const std::vector<Transition>& batch,
                              const Eigen::VectorXd Transition::*field) {
  const auto rows = (batch.front().*field).size();
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& v = batch[j].*field;
    if (v.size() != rows) throw DimensionMismatch("ragged transition batch");
    out.col(static_cast<Eigen::Index>(j)) = v;
  }
  return out;
}

}  // namespace

void DqnConfig::validate() const {
  if (hidden_width < 1 || hidden_layers < 0) throw ConfigInvalid("bad DQN network shape");
  if (!(lr > 0.0)) throw ConfigInvalid("DQN learning rate must be positive");
  if (lr_final > lr) throw ConfigInvalid("final DQN learning rate cannot exceed the initial one");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigInvalid("gamma must lie in [0, 1)");
  if (batch < 1 || capacity < batch) throw ConfigInvalid("DQN batch must be in [1, capacity]");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
        epsilon_end <= 1.0)) {
    throw ConfigInvalid("epsilon must lie in [0, 1]");
  }
  if (target_period < 1) throw ConfigInvalid("target period must be at least 1");
  if (!(obs_scale > 0.0) || !(reward_scale > 0.0)) throw ConfigInvalid("scales must be positive");
  if (queue_levels < 0) throw ConfigInvalid("queue levels must be non-negative");
  if (!(reward_centering >= 0.0 && reward_centering <= 1.0)) {
    throw ConfigInvalid("reward centering rate must lie in [0, 1]");
  }
}

double linear_epsilon(double start, double end, long step, long total_steps) {
  const double half = 0.5 * static_cast<double>(std::max(total_steps, 1L));
  const double frac = std::min(1.0, static_cast<double>(step) / half);
  return start + (end - start) * frac;
}

DqnAgent::DqnAgent(DqnConfig config, Rng& init_rng) : config_(config) {
  config_.validate();
  online_ = Mlp(Mlp::stack(config_.observation_dim(), config_.hidden_width, config_.hidden_layers, 2,
                           config_.hidden, Activation::Identity),
                init_rng);
  target_ = online_;
  adam_ = AdamState(online_, AdamConfig{config_.lr});
}

Eigen::VectorXd DqnAgent::encode(const SingleState& s) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(config_.observation_dim());
  v(0) = static_cast<double>(s.x1) / config_.obs_scale;
  v(1) = static_cast<double>(s.x2) / config_.obs_scale;
  v(2 + to_int(s.phase)) = 1.0;
  const int levels = config_.queue_levels;
  for (int k = 0; k < levels; ++k) {
    v(6 + k) = s.x1 > k ? 1.0 : 0.0;
    v(6 + levels + k) = s.x2 > k ? 1.0 : 0.0;
  }
  return v;
}

Eigen::Vector2d DqnAgent::q_values(const Eigen::VectorXd& observation) const {
  return online_.predict(observation);
}

Eigen::Vector2d DqnAgent::q_values(const SingleState& s) const { return q_values(encode(s)); }

int DqnAgent::greedy(const SingleState& s) const {
  const Eigen::Vector2d q = q_values(s);
  return q(1) > q(0) ? 1 : 0;
}

int DqnAgent::select(const SingleState& s, double epsilon, Rng& rng) const {
  if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.bernoulli(0.5) ? 1 : 0;
  return greedy(s);
}

double DqnAgent::update(const std::vector<Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty minibatch");
  if (updates_ % config_.target_period == 0) target_ = online_;
  ++updates_;

  const auto m = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd s = stack_columns(batch, &Transition::s);
  const Eigen::MatrixXd s_next = stack_columns(batch, &Transition::s_next);

  const Eigen::MatrixXd q_next = target_.forward(s_next);
  ForwardCache cache;
  const Eigen::MatrixXd q = online_.forward(s, &cache);

  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(2, m);
  double loss = 0.0;
  double batch_reward = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& t = batch[static_cast<std::size_t>(j)];
    if (t.a.size() != 1) throw DimensionMismatch("DQN transitions carry a single action bit");
    const int a = t.a(0) >= 0.5 ? 1 : 0;
    const double r = config_.reward_scale * t.r;
    batch_reward += r;
    const double y = r - reward_mean_ + config_.gamma * q_next.col(j).maxCoeff();
    const double err = q(a, j) - y;
    loss += err * err;
    upstream(a, j) = 2.0 * err / static_cast<double>(m);
  }
  if (config_.reward_centering > 0.0) {
    reward_mean_ += config_.reward_centering * (batch_reward / static_cast<double>(m) - reward_mean_);
  }
  Gradients g = online_.backward(cache, upstream);
  clip_gradients(g, config_.grad_clip);
  adam_step(adam_, online_, g);
  return loss / static_cast<double>(m);
}

// ---------------------------------------------------------------------------

void DdpgConfig::validate() const {
  if (hidden_width < 1 || hidden_layers < 0) throw ConfigInvalid("bad DDPG network shape");
  if (!(alpha > 0.0)) throw ConfigInvalid("steepening ratio must be positive");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigInvalid("learning rates must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigInvalid("gamma must lie in [0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigInvalid("tau must lie in [0, 1]");
  if (batch < 1 || capacity < batch) throw ConfigInvalid("DDPG batch must be in [1, capacity]");
  if (!(noise_sigma >= 0.0)) throw ConfigInvalid("noise sigma must be non-negative");
  if (!(obs_scale > 0.0) || !(reward_scale > 0.0)) throw ConfigInvalid("scales must be positive");
  if (!(actor_final_init >= 0.0)) throw ConfigInvalid("actor output init must be non-negative");
  if (!(actor_preact_penalty >= 0.0)) throw ConfigInvalid("actor penalty must be non-negative");
}

Action binarize(const Eigen::VectorXd& raw) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(raw.size()));
  for (Eigen::Index i = 0; i < raw.size(); ++i) bits[static_cast<std::size_t>(i)] = raw(i) >= 0.5;
  return Action(std::move(bits));
}

DdpgAgent::DdpgAgent(GridTopology topology, DdpgConfig config, Rng& init_rng)
    : topology_(topology),
      config_(config),
      noise_(topology.size(), config.noise, config.noise_theta, config.noise_sigma,
             config.noise_dt) {
  config_.validate();
  const int n = topology_.size();
  actor_ = Mlp(Mlp::stack(observation_dim(), config_.hidden_width, config_.hidden_layers, n, config_.hidden,
                          Activation::SteepenedSigmoid, config_.alpha),
               init_rng);
  if (config_.actor_final_init > 0.0) {
    auto& last = actor_.layers().back();
    const double r = config_.actor_final_init;
    last.weight = last.weight.unaryExpr([&](double) { return r * (2.0 * init_rng.uniform() - 1.0); });
    last.bias = last.bias.unaryExpr([&](double) { return r * (2.0 * init_rng.uniform() - 1.0); });
  }
  critic_ = Mlp(Mlp::stack(observation_dim() + n, config_.hidden_width, config_.hidden_layers, 1, config_.hidden,
                           Activation::Identity),
                init_rng);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_adam_ = AdamState(actor_, AdamConfig{config_.actor_lr});
  critic_adam_ = AdamState(critic_, AdamConfig{config_.critic_lr});
}

Eigen::VectorXd DdpgAgent::encode(const GridState& s) const {
  if (!(s.topology == topology_)) throw DimensionMismatch("state topology does not match agent");
  const int n = topology_.size();
  const int k = config_.features_per_node();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(k * n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 4; ++d) v(k * i + d) = static_cast<double>(s.queues[i][d]) / config_.obs_scale;
    if (config_.phase_onehot) {
      v(k * i + 4 + to_int(s.phases[i])) = 1.0;
    } else {
      v(k * i + 4) = to_int(s.phases[i]) / 3.0;
    }
  }
  return v;
}

DdpgSelection DdpgAgent::select(const Eigen::VectorXd& observation, bool explore, Rng& rng) {
  DdpgSelection out;
  out.raw = actor_.predict(observation);
  if (explore) out.raw = (out.raw + noise_.sample(rng)).cwiseMax(0.0).cwiseMin(1.0);
  out.action = binarize(out.raw);
  return out;
}

DdpgSelection DdpgAgent::select(const GridState& s, bool explore, Rng& rng) {
  return select(encode(s), explore, rng);
}

DdpgLosses DdpgAgent::update(const std::vector<Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty minibatch");
  const int n = topology_.size();
  const auto m = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd s = stack_columns(batch, &Transition::s);
  const Eigen::MatrixXd a = stack_columns(batch, &Transition::a);
  const Eigen::MatrixXd s_next = stack_columns(batch, &Transition::s_next);
  const int obs = observation_dim();
  if (s.rows() != obs || a.rows() != n) throw DimensionMismatch("transition shape mismatch");

  Eigen::MatrixXd next_input(obs + n, m);
  next_input.topRows(obs) = s_next;
  next_input.bottomRows(n) = target_actor_.forward(s_next);
  if (config_.binarize_target) {
    next_input.bottomRows(n) = (next_input.bottomRows(n).array() >= 0.5).cast<double>().matrix();
  }
  const Eigen::MatrixXd q_next = target_critic_.forward(next_input);

  Eigen::MatrixXd input(obs + n, m);
  input.topRows(obs) = s;
  input.bottomRows(n) = a;
  ForwardCache cache;
  const Eigen::MatrixXd q = critic_.forward(input, &cache);

  Eigen::MatrixXd upstream(1, m);
  DdpgLosses out;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double y = config_.reward_scale * batch[static_cast<std::size_t>(j)].r +
                     config_.gamma * q_next(0, j);
    const double err = q(0, j) - y;
    out.critic_loss += err * err;
    upstream(0, j) = 2.0 * err / static_cast<double>(m);
  }
  out.critic_loss /= static_cast<double>(m);
  Gradients cg = critic_.backward(cache, upstream);
  clip_gradients(cg, config_.grad_clip);
  adam_step(critic_adam_, critic_, cg);

  ActorGradient ag = chain_critic_to_actor(critic_, actor_, s);
  ag.grads.scale(-1.0);  // ascend Q
  if (config_.actor_preact_penalty > 0.0) {
    ForwardCache actor_cache;
    actor_.forward(s, &actor_cache);
    const Eigen::MatrixXd z = actor_.output_preactivation(actor_cache);
    const Eigen::MatrixXd dz = (2.0 * config_.actor_preact_penalty / static_cast<double>(m)) * z;
    ag.grads.add(actor_.backward(actor_cache, Eigen::MatrixXd::Zero(z.rows(), z.cols()), &dz));
  }
  clip_gradients(ag.grads, config_.grad_clip);
  adam_step(actor_adam_, actor_, ag.grads);
  out.actor_objective = ag.objective;

  target_critic_.soft_update(critic_, config_.tau);
  target_actor_.soft_update(actor_, config_.tau);
  return out;
}

// ---------------------------------------------------------------------------

void train_dqn(DqnAgent& agent, SingleIntersectionEnv& env, const TrainOptions& options,
               Rng& rng, const EpisodeCallback& on_episode) {
  const auto& cfg = agent.config();
  ReplayBuffer buffer(cfg.capacity);
  const long total = options.episodes * options.episode_length;
  const std::size_t warmup = std::max(options.warmup, cfg.batch);
  long step = 0;
  for (long ep = 0; ep < options.episodes; ++ep) {
    SingleState s = env.reset();
    EpisodeLog log;
    log.episode = ep;
    long n_updates = 0;
    for (int t = 0; t < options.episode_length; ++t, ++step) {
      const double eps = linear_epsilon(cfg.epsilon_start, cfg.epsilon_end, step, total);
      if (cfg.lr_final >= 0.0) {
        const double frac = static_cast<double>(step) / static_cast<double>(std::max(total, 1L));
        agent.set_learning_rate(cfg.lr + (cfg.lr_final - cfg.lr) * frac);
      }
      const int bit = agent.select(s, eps, rng);
      const auto result = env.step(bit);
      buffer.push({agent.encode(s), Eigen::VectorXd::Constant(1, bit), result.reward,
                   agent.encode(result.next)});
      s = result.next;
      log.mean_reward += result.reward;
      log.mean_queue += static_cast<double>(s.x1 + s.x2);
      log.exploration = eps;
      if (buffer.size() >= warmup) {
        for (int u = 0; u < options.updates_per_step; ++u, ++n_updates) {
          log.loss += agent.update(buffer.sample(cfg.batch, rng));
        }
      }
    }
    log.steps = options.episode_length;
    log.mean_reward /= options.episode_length;
    log.mean_queue /= options.episode_length;
    if (n_updates > 0) log.loss /= static_cast<double>(n_updates);
    if (on_episode) on_episode(log);
  }
}

void train_ddpg(DdpgAgent& agent, GridEnv& env, const TrainOptions& options, Rng& rng,
                const EpisodeCallback& on_episode) {
  const auto& cfg = agent.config();
  ReplayBuffer buffer(cfg.capacity);
  const std::size_t warmup = std::max(options.warmup, cfg.batch);
  for (long ep = 0; ep < options.episodes; ++ep) {
    GridState s = env.reset();
    agent.reset_noise();
    EpisodeLog log;
    log.episode = ep;
    log.exploration = agent.noise().sigma();
    long n_updates = 0;
    Eigen::VectorXd obs = agent.encode(s);
    for (int t = 0; t < options.episode_length; ++t) {
      const auto sel = agent.select(obs, true, rng);
      const auto result = env.step(sel.action);
      Eigen::VectorXd stored = sel.raw;
      if (!cfg.replay_raw) {
        for (std::size_t i = 0; i < sel.action.size(); ++i) stored(static_cast<Eigen::Index>(i)) = sel.action[i];
      }
      Eigen::VectorXd obs_next = agent.encode(result.next);
      buffer.push({obs, std::move(stored), result.reward, obs_next});
      obs = std::move(obs_next);
      log.mean_reward += result.reward;
      log.mean_queue += static_cast<double>(total_queued(result.next));
      if (buffer.size() >= warmup) {
        for (int u = 0; u < options.updates_per_step; ++u, ++n_updates) {
          const auto losses = agent.update(buffer.sample(cfg.batch, rng));
          log.loss += losses.critic_loss;
          log.actor_objective += losses.actor_objective;
        }
      }
    }
    log.steps = options.episode_length;
    log.mean_reward /= options.episode_length;
    log.mean_queue /= options.episode_length;
    if (n_updates > 0) {
      log.loss /= static_cast<double>(n_updates);
      log.actor_objective /= static_cast<double>(n_updates);
    }
    if (on_episode) on_episode(log);
  }
}

}  // namespace tlc
