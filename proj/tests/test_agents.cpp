#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "tlc/agents.hpp"
#include "tlc/errors.hpp"
#include "tlc/mdp.hpp"

using namespace tlc;

namespace {

Transition scalar_transition(double id) {
  return {Eigen::VectorXd::Constant(1, id), Eigen::VectorXd::Zero(1), -id,
          Eigen::VectorXd::Zero(1)};
}

DqnConfig small_dqn() {
  DqnConfig c;
  c.hidden_width = 8;
  c.hidden_layers = 1;
  return c;
}

DdpgConfig small_ddpg() {
  DdpgConfig c;
  c.hidden_width = 16;
  c.hidden_layers = 2;
  return c;
}

// Forces the Q network to output `q` everywhere.
void set_constant_output(Mlp& net, const Eigen::VectorXd& q) {
  auto& last = net.layers().back();
  last.weight.setZero();
  last.bias = q;
}

}  // namespace

TEST(ReplayBuffer, EvictsOldestAtCapacity) {
  ReplayBuffer b(3);
  for (int i = 1; i <= 4; ++i) b.push(scalar_transition(i));
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.inserted(), 4u);
  EXPECT_EQ(b.at(0).s(0), 2.0);
  EXPECT_EQ(b.at(2).s(0), 4.0);
}

TEST(ReplayBuffer, FullSampleIsAPermutation) {
  ReplayBuffer b(10);
  for (int i = 0; i < 7; ++i) b.push(scalar_transition(i));
  Rng rng(1);
  const auto batch = b.sample(7, rng);
  std::multiset<double> ids;
  for (const auto& t : batch) ids.insert(t.s(0));
  EXPECT_EQ(ids, (std::multiset<double>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(b.sample(8, rng), InsufficientSamples);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer b(10);
  for (int i = 0; i < 10; ++i) b.push(scalar_transition(i));
  Rng rng(2);
  std::array<int, 10> count{};
  const int n = 100'000;
  for (int k = 0; k < n; ++k) ++count[static_cast<int>(b.sample(1, rng)[0].s(0))];
  for (int c : count) EXPECT_NEAR(static_cast<double>(c) / n, 0.1, 0.01);
  // Multi-element draws are without replacement.
  for (int k = 0; k < 1000; ++k) {
    const auto batch = b.sample(5, rng);
    std::set<double> ids;
    for (const auto& t : batch) ids.insert(t.s(0));
    ASSERT_EQ(ids.size(), 5u);
  }
}

TEST(Noise, ZeroSigmaStaysAtZero) {
  NoiseProcess ou(3, NoiseKind::OrnsteinUhlenbeck, 0.15, 0.0);
  Rng rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(ou.sample(rng), Eigen::VectorXd::Zero(3));
}

TEST(Noise, NoReversionIsARandomWalk) {
  NoiseProcess ou(1, NoiseKind::OrnsteinUhlenbeck, 0.0, 0.3, 1.0);
  Rng rng(2);
  const int n = 100'000;
  double prev = 0.0, sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = ou.sample(rng)(0);
    const double d = x - prev;
    sum += d;
    sum2 += d * d;
    prev = x;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, 0.09, 0.05 * 0.09);
}

TEST(Noise, StationaryVariance) {
  const double theta = 0.15, sigma = 0.3, dt = 0.01;
  NoiseProcess ou(1, NoiseKind::OrnsteinUhlenbeck, theta, sigma, dt);
  Rng rng(3);
  for (int k = 0; k < 20'000; ++k) ou.sample(rng);
  const long n = 4'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (long k = 0; k < n; ++k) {
    const double x = ou.sample(rng)(0);
    sum += x;
    sum2 += x * x;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, sigma * sigma / (2 * theta), 0.08 * sigma * sigma / (2 * theta));
}

TEST(Noise, GaussianHasSigma) {
  NoiseProcess g(1, NoiseKind::Gaussian, 0.15, 0.3);
  Rng rng(4);
  const int n = 100'000;
  double sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = g.sample(rng)(0);
    sum2 += x * x;
  }
  EXPECT_NEAR(sum2 / n, 0.09, 0.003);
}

TEST(DqnSelect, EpsilonOneIsAFairCoin) {
  Rng init(1);
  const DqnAgent agent(small_dqn(), init);
  Rng rng(2);
  int ones = 0;
  for (int k = 0; k < 10'000; ++k) ones += agent.select({3, 1, Phase::Green}, 1.0, rng);
  EXPECT_NEAR(ones / 10'000.0, 0.5, 0.02);
}

TEST(DqnSelect, GreedyArgmaxWithTiesToContinue) {
  Rng init(1);
  DqnAgent agent(small_dqn(), init);
  Rng rng(3);
  set_constant_output(agent.online(), Eigen::Vector2d(-1, -5));
  EXPECT_EQ(agent.select({2, 2, Phase::Red}, 0.0, rng), 0);
  set_constant_output(agent.online(), Eigen::Vector2d(-5, -1));
  EXPECT_EQ(agent.select({2, 2, Phase::Red}, 0.0, rng), 1);
  set_constant_output(agent.online(), Eigen::Vector2d(-2, -2));
  EXPECT_EQ(agent.select({2, 2, Phase::Red}, 0.0, rng), 0);
}

TEST(DqnUpdate, MyopicLossIsSquaredRewardError) {
  auto cfg = small_dqn();
  cfg.gamma = 0.0;
  Rng init(5);
  DqnAgent agent(cfg, init);
  const SingleState s{2, 1, Phase::Green}, s2{2, 2, Phase::Green};
  const double q_before = agent.q_values(s)(1);
  const Transition t{agent.encode(s), Eigen::VectorXd::Constant(1, 1.0), -5.0, agent.encode(s2)};
  const double loss = agent.update({t});
  EXPECT_NEAR(loss, (-5.0 - q_before) * (-5.0 - q_before), 1e-12);
  EXPECT_EQ(agent.updates(), 1);
}

TEST(DqnUpdate, ExactTargetsLeaveParametersAlone) {
  auto cfg = small_dqn();
  cfg.gamma = 0.5;
  Rng init(6);
  DqnAgent agent(cfg, init);
  // Constant Q = c solves c = r + gamma c for r = c (1 - gamma).
  set_constant_output(agent.online(), Eigen::Vector2d(-4, -4));
  const auto before = agent.online().flat_parameters();
  const Transition t{agent.encode({1, 0, Phase::Green}), Eigen::VectorXd::Constant(1, 0.0), -2.0,
                     agent.encode({0, 0, Phase::Green})};
  EXPECT_EQ(agent.update({t, t}), 0.0);
  EXPECT_EQ(agent.online().flat_parameters(), before);
}

TEST(DqnUpdate, TargetSnapshotSchedule) {
  auto cfg = small_dqn();
  cfg.target_period = 3;
  Rng init(7);
  DqnAgent agent(cfg, init);
  const Transition t{agent.encode({1, 2, Phase::Green}), Eigen::VectorXd::Constant(1, 1.0), -5.0,
                     agent.encode({1, 3, Phase::Green})};
  std::vector<Eigen::VectorXd> online_before;
  for (int k = 0; k < 7; ++k) {
    online_before.push_back(agent.online().flat_parameters());
    agent.update({t});
  }
  // Snapshots are taken before updates 0, 3 and 6.
  EXPECT_EQ(agent.target().flat_parameters(), online_before[6]);

  cfg.target_period = 1;
  DqnAgent literal(cfg, init);
  const auto pre = literal.online().flat_parameters();
  literal.update({t});
  EXPECT_EQ(literal.target().flat_parameters(), pre);
}

TEST(DqnEncode, LayoutAndLevels) {
  auto cfg = small_dqn();
  cfg.queue_levels = 3;
  Rng init(1);
  const DqnAgent agent(cfg, init);
  const auto v = agent.encode({2, 5, Phase::Red});
  ASSERT_EQ(v.size(), 12);
  EXPECT_DOUBLE_EQ(v(0), 0.2);
  EXPECT_DOUBLE_EQ(v(1), 0.5);
  EXPECT_EQ(v.segment(2, 4), Eigen::Vector4d(0, 0, 1, 0));
  EXPECT_EQ(v.segment(6, 3), Eigen::Vector3d(1, 1, 0));
  EXPECT_EQ(v.segment(9, 3), Eigen::Vector3d(1, 1, 1));
}

TEST(DqnTargets, ExactQHasZeroExpectedTdError) {
  // The agent learns from post-step rewards -|X(t+1)|^2, the solver scores
  // -|X(t)|^2. Q_env(s, a) = E[V(s') | s, a] satisfies the agent's Bellman
  // equation exactly, with the solver's greedy actions.
  const TruncatedSpace space{20};
  const double gamma = 0.99;
  const auto model = build_transitions(space, 0.25, 0.25);
  const auto solved = policy_iteration(model, gamma);
  auto q_env = [&](std::size_t s, int a) {
    double e = 0.0;
    for (const auto& o : model.outcomes(s, a)) e += o.prob * solved.values[o.next];
    return e;
  };
  double worst = 0.0;
  for (std::size_t s = 0; s < space.size(); ++s) {
    const auto st = space.state(s);
    if (st.x1 > 15 || st.x2 > 15) continue;
    for (int a = 0; a < 2; ++a) {
      double target = 0.0;
      for (const auto& o : model.outcomes(s, a)) {
        const double r = model.reward(o.next);
        target += o.prob * (r + gamma * std::max(q_env(o.next, 0), q_env(o.next, 1)));
      }
      worst = std::max(worst, std::abs(target - q_env(s, a)) / std::abs(q_env(s, a)));
    }
    const int env_greedy = q_env(s, 1) > q_env(s, 0) ? 1 : 0;
    if (std::abs(q_env(s, 1) - q_env(s, 0)) > 1e-6) {
      ASSERT_EQ(env_greedy, solved.policy.actions[s]);
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Binarize, ThresholdAtHalf) {
  EXPECT_EQ(binarize(Eigen::Vector2d(0.5, 0.4999)), Action({1, 0}));
  EXPECT_EQ(binarize(Eigen::Vector2d(0.91, 0.02)), Action({1, 0}));
  const Eigen::Vector3d raw(0.7, 0.1, 0.5);
  const auto once = binarize(raw);
  Eigen::Vector3d as_raw(once[0], once[1], once[2]);
  EXPECT_EQ(binarize(as_raw), once);
}

TEST(DdpgSelect, TestModeIsDeterministicAndExploreIsClipped) {
  Rng init(1);
  DdpgAgent agent(GridTopology(1, 3), small_ddpg(), init);
  GridState s(GridTopology(1, 3));
  s.queues[1] = {3, 1, 0, 2};
  Rng rng(2);
  const auto a = agent.select(s, false, rng);
  const auto b = agent.select(s, false, rng);
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.action, binarize(a.raw));
  for (int k = 0; k < 200; ++k) {
    const auto e = agent.select(s, true, rng);
    ASSERT_GE(e.raw.minCoeff(), 0.0);
    ASSERT_LE(e.raw.maxCoeff(), 1.0);
    ASSERT_EQ(e.action, binarize(e.raw));
  }
}

namespace {

std::vector<Transition> toy_batch(const DdpgAgent& agent) {
  std::vector<Transition> batch;
  const GridTopology topo(1, 2);
  for (int k = 0; k < 4; ++k) {
    GridState s(topo);
    s.queues[0][0] = k;
    s.queues[1][1] = 3 - k;
    Eigen::Vector2d a(k % 2, (k / 2) % 2);
    batch.push_back({agent.encode(s), a, -0.25 * (k + 1), agent.encode(s)});
  }
  return batch;
}

}  // namespace

TEST(DdpgUpdate, TauOneCopiesTauZeroFreezes) {
  auto cfg = small_ddpg();
  cfg.tau = 1.0;
  Rng init(3);
  DdpgAgent copy(GridTopology(1, 2), cfg, init);
  copy.update(toy_batch(copy));
  EXPECT_EQ(copy.target_actor().flat_parameters(), copy.actor().flat_parameters());
  EXPECT_EQ(copy.target_critic().flat_parameters(), copy.critic().flat_parameters());

  cfg.tau = 0.0;
  DdpgAgent frozen(GridTopology(1, 2), cfg, init);
  const auto ta = frozen.target_actor().flat_parameters();
  const auto tc = frozen.target_critic().flat_parameters();
  frozen.update(toy_batch(frozen));
  EXPECT_EQ(frozen.target_actor().flat_parameters(), ta);
  EXPECT_EQ(frozen.target_critic().flat_parameters(), tc);
  EXPECT_NE(frozen.critic().flat_parameters(), tc);
}

TEST(DdpgUpdate, MyopicCriticRegressesOntoRewards) {
  auto cfg = small_ddpg();
  cfg.gamma = 0.0;
  Rng init(4);
  DdpgAgent agent(GridTopology(1, 2), cfg, init);
  const auto batch = toy_batch(agent);
  for (int k = 0; k < 10'000; ++k) agent.update(batch);
  for (const auto& t : batch) {
    Eigen::VectorXd in(12);
    in << t.s, t.a;
    EXPECT_NEAR(agent.critic().predict(in)(0), t.r, 1e-3);
  }
}

TEST(DdpgConfig, ActorOutputInitIsBounded) {
  auto cfg = small_ddpg();
  cfg.actor_final_init = 3e-3;
  Rng init(5);
  DdpgAgent agent(GridTopology(1, 2), cfg, init);
  const auto& last = agent.actor().layers().back();
  EXPECT_LE(last.weight.cwiseAbs().maxCoeff(), 3e-3);
  EXPECT_LE(last.bias.cwiseAbs().maxCoeff(), 3e-3);
  EXPECT_GT(last.weight.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(agent.target_actor().flat_parameters(), agent.actor().flat_parameters());
}

TEST(DdpgConfig, OneHotPhaseLayout) {
  auto cfg = small_ddpg();
  cfg.phase_onehot = true;
  Rng init(6);
  DdpgAgent agent(GridTopology(1, 2), cfg, init);
  ASSERT_EQ(agent.observation_dim(), 16);
  GridState s(GridTopology(1, 2));
  s.queues[1] = {10, 0, 20, 0};
  s.phases[1] = Phase::Red;
  const auto v = agent.encode(s);
  ASSERT_EQ(v.size(), 16);
  EXPECT_DOUBLE_EQ(v(4), 1.0);  // node 0 green
  EXPECT_DOUBLE_EQ(v(8), 1.0);
  EXPECT_DOUBLE_EQ(v(10), 2.0);
  EXPECT_DOUBLE_EQ(v(14), 1.0);  // node 1 red
  EXPECT_DOUBLE_EQ(v.sum(), 1.0 + 1.0 + 1.0 + 2.0);
}

TEST(DdpgUpdate, BinarizedTargetBootstrapsAtExecutedBits) {
  // Critic Q(s, a) = a_0 + a_1 and a target actor that outputs 0.7 everywhere.
  // With a binarized target the bootstrap is Q(s', (1, 1)) = 2, not 1.4.
  auto cfg = small_ddpg();
  cfg.hidden_layers = 0;
  cfg.gamma = 0.5;
  cfg.tau = 0.0;
  cfg.critic_lr = 1e-12;
  cfg.actor_lr = 1e-12;
  for (const bool binary : {false, true}) {
    cfg.binarize_target = binary;
    Rng init(7);
    DdpgAgent agent(GridTopology(1, 2), cfg, init);
    auto& critic = agent.target_critic();
    critic.layers()[0].weight.setZero();
    critic.layers()[0].weight(0, 10) = 1.0;
    critic.layers()[0].weight(0, 11) = 1.0;
    critic.layers()[0].bias.setZero();
    agent.critic() = critic;
    auto& actor = agent.target_actor();
    actor.layers()[0].weight.setZero();
    actor.layers()[0].bias.setConstant(std::log(0.7 / 0.3) / cfg.alpha);
    const GridState s(GridTopology(1, 2));
    const Transition t{agent.encode(s), Eigen::Vector2d(1, 1), -1.0, agent.encode(s)};
    // Q(s, a) = 2, target = -1 + 0.5 * bootstrap.
    const double bootstrap = binary ? 2.0 : 1.4;
    const double err = 2.0 - (-1.0 + 0.5 * bootstrap);
    EXPECT_NEAR(agent.update({t}).critic_loss, err * err, 1e-9) << binary;
  }
}

TEST(SoftUpdate, DistanceShrinksGeometrically) {
  Rng rng(9);
  const Mlp online(Mlp::stack(3, 4, 1, 2, Activation::Tanh, Activation::Identity), rng);
  Mlp target(Mlp::stack(3, 4, 1, 2, Activation::Tanh, Activation::Identity), rng);
  const Eigen::VectorXd d0 = target.flat_parameters() - online.flat_parameters();
  const double tau = 0.05;
  for (int k = 1; k <= 30; ++k) {
    target.soft_update(online, tau);
    const Eigen::VectorXd dk = target.flat_parameters() - online.flat_parameters();
    const Eigen::VectorXd expected = std::pow(1 - tau, k) * d0;
    ASSERT_LT((dk - expected).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Training, DqnLoopLogsEveryEpisodeAndStaysFinite) {
  Rng init(1);
  DqnAgent agent(small_dqn(), init);
  SingleIntersectionEnv env({}, {}, Rng(2));
  Rng rng(3);
  TrainOptions opt;
  opt.episodes = 6;
  opt.episode_length = 50;
  opt.warmup = 100;
  std::vector<EpisodeLog> logs;
  train_dqn(agent, env, opt, rng, [&](const EpisodeLog& l) { logs.push_back(l); });
  ASSERT_EQ(logs.size(), 6u);
  EXPECT_DOUBLE_EQ(logs.front().exploration > logs.back().exploration, true);
  EXPECT_GT(agent.updates(), 0);
  EXPECT_TRUE(agent.online().all_finite());
  for (const auto& l : logs) EXPECT_LE(l.mean_reward, 0.0);
}

TEST(Training, DdpgLoopRunsAndIsReproducible) {
  auto run = [] {
    Rng init(1);
    DdpgAgent agent(GridTopology(1, 2), small_ddpg(), init);
    GridEnv env(GridTopology(1, 2), {}, {}, Rng(2));
    Rng rng(3);
    TrainOptions opt;
    opt.episodes = 3;
    opt.episode_length = 40;
    opt.warmup = 64;
    train_ddpg(agent, env, opt, rng);
    return agent.actor().flat_parameters();
  };
  const auto a = run();
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, run());
}
