#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <vector>

#include "tlc/env.hpp"
#include "tlc/nn.hpp"
#include "tlc/rng.hpp"

namespace tlc {

/// One (s, a, r, s') record. `r` is the raw environment reward; agents apply
/// their own reward scaling when they learn from it.
struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
};

/// Fixed-capacity ring buffer; pushing at capacity evicts the oldest record.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000);

  void push(Transition t);
  /// `m` distinct records drawn uniformly, in random order. Throws
  /// InsufficientSamples when fewer than `m` are stored.
  std::vector<Transition> sample(std::size_t m, Rng& rng) const;

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t inserted() const { return inserted_; }
  /// i-th record in insertion order among those still stored.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t inserted_ = 0;
  std::size_t head_ = 0;  // slot the next push overwrites once full
  std::vector<Transition> data_;
};

enum class NoiseKind { OrnsteinUhlenbeck, Gaussian };

/// Exploration noise. OU: x <- x - theta * x * dt + sigma * sqrt(dt) * N(0, 1);
/// Gaussian: independent sigma * N(0, 1) draws.
class NoiseProcess {
 public:
  NoiseProcess(int dim, NoiseKind kind = NoiseKind::OrnsteinUhlenbeck, double theta = 0.15,
               double sigma = 0.3, double dt = 1.0);

  const Eigen::VectorXd& sample(Rng& rng);
  void reset();

  const Eigen::VectorXd& state() const { return x_; }
  void set_state(const Eigen::VectorXd& x);
  NoiseKind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  void set_sigma(double sigma);

 private:
  NoiseKind kind_;
  double theta_, sigma_, dt_;
  Eigen::VectorXd x_;
};

// ---------------------------------------------------------------------------

struct DqnConfig {
  int hidden_width = 400;
  int hidden_layers = 2;
  Activation hidden = Activation::Tanh;
  double lr = 1e-3;
  // Learning rate reached at the end of training (linear schedule); a
  // negative value keeps `lr` fixed.
  double lr_final = -1.0;
  double gamma = 0.99;
  std::size_t batch = 64;
  std::size_t capacity = 100'000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  // Updates between target snapshots; 1 means the target is the online
  // network as it was right before the current update.
  long target_period = 1;
  // Queue lengths are divided by this before entering the network.
  double obs_scale = 10.0;
  // Adds indicators [x > k] for k < queue_levels per queue to the
  // observation; 0 disables them.
  int queue_levels = 0;
  // Rewards are multiplied by this inside the TD target.
  double reward_scale = 1.0;
  // Step size of the running reward mean subtracted inside the TD target;
  // 0 disables centering. A constant shift leaves the greedy policy unchanged.
  double reward_centering = 0.0;
  double grad_clip = 0.0;  // max gradient norm, 0 = off

  int observation_dim() const { return 6 + 2 * queue_levels; }
  void validate() const;
};

/// Linear decay from `start` to `end` over the first half of `total_steps`,
/// flat afterwards.
double linear_epsilon(double start, double end, long step, long total_steps);

class DqnAgent {
 public:
  DqnAgent(DqnConfig config, Rng& init_rng);

  /// [x1 / scale, x2 / scale, one-hot(phase), level indicators of x1, of x2]
  Eigen::VectorXd encode(const SingleState& s) const;

  Eigen::Vector2d q_values(const SingleState& s) const;
  Eigen::Vector2d q_values(const Eigen::VectorXd& observation) const;
  /// argmax of the Q outputs; ties go to 0.
  int greedy(const SingleState& s) const;
  /// Uniform random bit with probability epsilon, greedy otherwise.
  int select(const SingleState& s, double epsilon, Rng& rng) const;

  /// One Adam step on the mean squared TD error of `batch`; returns that loss
  /// (in scaled reward units).
  double update(const std::vector<Transition>& batch);

  void set_learning_rate(double lr) { adam_.config.lr = lr; }
  double learning_rate() const { return adam_.config.lr; }

  const DqnConfig& config() const { return config_; }
  const Mlp& online() const { return online_; }
  Mlp& online() { return online_; }
  const Mlp& target() const { return target_; }
  long updates() const { return updates_; }
  double reward_mean() const { return reward_mean_; }

 private:
  DqnConfig config_;
  Mlp online_;
  Mlp target_;
  AdamState adam_;
  long updates_ = 0;
  double reward_mean_ = 0.0;
};

// ---------------------------------------------------------------------------

struct DdpgConfig {
  int hidden_width = 600;
  int hidden_layers = 4;
  Activation hidden = Activation::Tanh;
  double alpha = 10.0;  // steepening ratio of the actor output
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double tau = 0.001;
  std::size_t batch = 64;
  std::size_t capacity = 100'000;
  NoiseKind noise = NoiseKind::OrnsteinUhlenbeck;
  double noise_theta = 0.15;
  double noise_sigma = 0.3;
  double noise_dt = 1.0;
  double obs_scale = 10.0;
  double reward_scale = 1.0;
  double grad_clip = 0.0;
  // Store the clipped noisy actor output in replay instead of the executed bits.
  bool replay_raw = false;
  // Phase as one scalar L/3 (5 features per node) or as a one-hot block (8 per node).
  bool phase_onehot = false;
  // Redraw the actor's output layer from U(-x, x) so the sigmoid starts unsaturated; 0 keeps
  // the default fan-in init.
  double actor_final_init = 0.0;
  // Weight of mean(z^2) on the actor's output pre-activation z; keeps the
  // steepened sigmoid off its flat tails so the critic can still flip a bit.
  double actor_preact_penalty = 0.0;
  // Bootstrap the TD target at the bits the target actor would execute rather
  // than at its continuous output, which the critic never sees when replay
  // holds binary actions.
  bool binarize_target = false;

  int features_per_node() const { return phase_onehot ? 8 : 5; }

  void validate() const;
};

/// Node-wise binarization: bit_n = 1 iff raw_n >= 0.5.
Action binarize(const Eigen::VectorXd& raw);

struct DdpgSelection {
  Eigen::VectorXd raw;  // actor output (+ clipped noise when exploring)
  Action action;
};

struct DdpgLosses {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
};

class DdpgAgent {
 public:
  DdpgAgent(GridTopology topology, DdpgConfig config, Rng& init_rng);

  /// Per intersection [x1..x4 / scale, phase / 3].
  Eigen::VectorXd encode(const GridState& s) const;

  DdpgSelection select(const GridState& s, bool explore, Rng& rng);
  DdpgSelection select(const Eigen::VectorXd& observation, bool explore, Rng& rng);

  DdpgLosses update(const std::vector<Transition>& batch);

  void reset_noise() { noise_.reset(); }
  NoiseProcess& noise() { return noise_; }

  int nodes() const { return topology_.size(); }
  int observation_dim() const { return config_.features_per_node() * topology_.size(); }
  const DdpgConfig& config() const { return config_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& target_actor() const { return target_actor_; }
  const Mlp& target_critic() const { return target_critic_; }
  Mlp& target_actor() { return target_actor_; }
  Mlp& target_critic() { return target_critic_; }

 private:
  GridTopology topology_;
  DdpgConfig config_;
  Mlp actor_, critic_, target_actor_, target_critic_;
  AdamState actor_adam_, critic_adam_;
  NoiseProcess noise_;
};

// ---------------------------------------------------------------------------

struct EpisodeLog {
  long episode = 0;
  long steps = 0;
  double mean_reward = 0.0;
  double mean_queue = 0.0;  // mean over the episode of the total queued vehicles
  double exploration = 0.0;  // epsilon (DQN) or noise sigma (DDPG)
  double loss = 0.0;         // mean TD / critic loss over the episode's updates
  double actor_objective = 0.0;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

struct TrainOptions {
  long episodes = 200;
  int episode_length = 150;
  // No updates until the buffer holds this many transitions (at least the batch).
  std::size_t warmup = 1'000;
  int updates_per_step = 1;
};

/// Episodic DQN training from the empty intersection. The environment supplies
/// arrivals; `rng` drives exploration and minibatch sampling.
void train_dqn(DqnAgent& agent, SingleIntersectionEnv& env, const TrainOptions& options,
               Rng& rng, const EpisodeCallback& on_episode = {});

/// Episodic DDPG training from the empty grid. The buffer stores the
/// binarized action that was actually executed.
void train_ddpg(DdpgAgent& agent, GridEnv& env, const TrainOptions& options, Rng& rng,
                const EpisodeCallback& on_episode = {});

}  // namespace tlc
