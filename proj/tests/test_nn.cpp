#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/gradcheck.hpp"
#include "tlc/errors.hpp"
#include "tlc/nn.hpp"

using namespace tlc;
using tlc::testing::flatten;
using tlc::testing::max_relative_error;
using tlc::testing::numeric_gradient;

namespace {

Mlp single_layer(int in, int out, Activation act, const Eigen::MatrixXd& w,
                 const Eigen::VectorXd& b) {
  Mlp net(std::vector<LayerSpec>{{in, out, act, 10.0}});
  net.layers()[0].weight = w;
  net.layers()[0].bias = b;
  return net;
}

}  // namespace

TEST(Forward, HandEvaluatedCases) {
  const Mlp id = single_layer(3, 3, Activation::Identity, Eigen::MatrixXd::Identity(3, 3),
                              Eigen::VectorXd::Zero(3));
  const Eigen::Vector3d x(0.5, -2.0, 7.0);
  EXPECT_EQ(id.predict(x), x);

  const Mlp zero(std::vector<LayerSpec>{{3, 4, Activation::Tanh, 10.0}});
  EXPECT_EQ(zero.predict(x), Eigen::VectorXd::Zero(4));

  const Mlp scalar = single_layer(1, 1, Activation::Tanh, Eigen::MatrixXd::Constant(1, 1, 2.0),
                                  Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_NEAR(scalar.predict(Eigen::VectorXd::Zero(1))(0), 0.76159, 1e-5);
  EXPECT_DOUBLE_EQ(scalar.predict(Eigen::VectorXd::Zero(1))(0), std::tanh(1.0));
}

TEST(Forward, RejectsWrongInputSize) {
  const Mlp net(std::vector<LayerSpec>{{3, 2, Activation::Tanh, 10.0}});
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(4, 2)), DimensionMismatch);
}

TEST(Forward, LayerChainMustMatch) {
  std::vector<LayerSpec> specs{{3, 2, Activation::Tanh, 10.0}, {3, 1, Activation::Identity, 1.0}};
  EXPECT_THROW((Mlp(specs)), DimensionMismatch);
}

TEST(SteepenedSigmoid, ValuesLimitsMonotonicity) {
  EXPECT_DOUBLE_EQ(steepened_sigmoid(0.0, 3.0), 0.5);
  EXPECT_NEAR(steepened_sigmoid(0.5, 10.0), 0.99331, 1e-5);
  EXPECT_DOUBLE_EQ(steepened_sigmoid(0.5, 10.0), 1.0 / (1.0 + std::exp(-5.0)));
  EXPECT_NEAR(steepened_sigmoid(50.0, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(steepened_sigmoid(-50.0, 10.0), 0.0, 1e-15);
  for (double x : {-0.3, -0.01, 0.01, 0.3}) {
    EXPECT_NEAR(steepened_sigmoid(x, 1e5), x > 0 ? 1.0 : 0.0, 1e-12);
  }
  for (double alpha : {0.1, 1.0, 10.0, 100.0}) {
    double prev = -1.0;
    for (double x = -3.0; x <= 3.0; x += 0.01) {
      const double y = steepened_sigmoid(x, alpha);
      ASSERT_GE(y, prev);
      prev = y;
    }
  }
}

TEST(Backward, LinearScalarCase) {
  const Mlp net = single_layer(1, 1, Activation::Identity, Eigen::MatrixXd::Constant(1, 1, 0.7),
                               Eigen::VectorXd::Constant(1, -0.2));
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Constant(1, 1, 3.0), &cache);
  const auto g = net.backward(cache, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.weight[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g.bias[0](0), 1.0);
  EXPECT_DOUBLE_EQ(g.input(0, 0), 0.7);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(1);
  const Mlp net(Mlp::stack(4, 6, 2, 3, Activation::Tanh, Activation::Identity), rng);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Random(4, 5), &cache);
  const auto g = net.backward(cache, Eigen::MatrixXd::Zero(3, 5));
  EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Backward, NeedsAMatchingCache) {
  Rng rng(2);
  const Mlp net(Mlp::stack(2, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  EXPECT_THROW(net.backward(ForwardCache{}, Eigen::MatrixXd::Ones(1, 1)), MissingCache);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Ones(2, 4), &cache);
  EXPECT_THROW(net.backward(cache, Eigen::MatrixXd::Ones(1, 3)), MissingCache);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomTinyNets) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 40) {
    const int in = static_cast<int>(rng.uniform_int(1, 5));
    const int out = static_cast<int>(rng.uniform_int(1, 4));
    const Mlp net = tlc::testing::random_tiny_mlp(rng, in, out);
    Eigen::MatrixXd x(in, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 2 * rng.uniform() - 1;
    if (!tlc::testing::away_from_kinks(net, x)) continue;
    Eigen::MatrixXd up(out, 3);
    for (Eigen::Index i = 0; i < up.size(); ++i) up(i) = 2 * rng.uniform() - 1;
    // loss = sum(up .* net(x)), whose output gradient is `up`.
    auto loss = [&](const Mlp& n) { return (n.forward(x).array() * up.array()).sum(); };
    ForwardCache cache;
    net.forward(x, &cache);
    const auto g = net.backward(cache, up);
    EXPECT_LT(max_relative_error(flatten(g), numeric_gradient(net, loss)), 1e-4);
    ++checked;
  }
}

TEST(Backward, OutputPreactivationTermMatchesFiniteDifferences) {
  Rng rng(77);
  int checked = 0;
  while (checked < 20) {
    const int in = static_cast<int>(rng.uniform_int(1, 4));
    const int out = static_cast<int>(rng.uniform_int(1, 3));
    const Mlp net = tlc::testing::random_tiny_mlp(rng, in, out);
    Eigen::MatrixXd x(in, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 2 * rng.uniform() - 1;
    if (!tlc::testing::away_from_kinks(net, x)) continue;
    Eigen::MatrixXd up(out, 3);
    for (Eigen::Index i = 0; i < up.size(); ++i) up(i) = 2 * rng.uniform() - 1;
    // loss = sum(up .* y) + sum(z^2), z the output pre-activation.
    auto loss = [&](const Mlp& n) {
      ForwardCache c;
      const Eigen::MatrixXd y = n.forward(x, &c);
      return (y.array() * up.array()).sum() + n.output_preactivation(c).squaredNorm();
    };
    ForwardCache cache;
    net.forward(x, &cache);
    const Eigen::MatrixXd dz = 2.0 * net.output_preactivation(cache);
    const auto g = net.backward(cache, up, &dz);
    EXPECT_LT(max_relative_error(flatten(g), numeric_gradient(net, loss)), 1e-4);
    ++checked;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(3);
  Mlp net(Mlp::stack(3, 4, 1, 2, Activation::Tanh, Activation::Identity), rng);
  const auto before = net.flat_parameters();
  AdamState st(net, {});
  adam_step(st, net, net.zero_gradients());
  EXPECT_EQ(net.flat_parameters(), before);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, ConstantGradientMovesByTheLearningRate) {
  // Scalar oracle: with a constant gradient the bias-corrected moments are
  // exactly g and g^2, so every step moves lr * g / (|g| + eps).
  Mlp net(std::vector<LayerSpec>{{1, 1, Activation::Identity, 1.0}});
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st(net, cfg);
  auto g = net.zero_gradients();
  g.weight[0](0, 0) = 0.37;
  g.bias[0](0) = -2.0;
  double prev_w = 0.0;
  for (int k = 0; k < 200; ++k) {
    adam_step(st, net, g);
    const double w = net.layers()[0].weight(0, 0);
    EXPECT_NEAR(prev_w - w, 0.01 * 0.37 / (0.37 + 1e-8), 1e-12);
    prev_w = w;
  }
  EXPECT_NEAR(net.layers()[0].bias(0), 200 * 0.01 * 2.0 / (2.0 + 1e-8), 1e-12);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Rng rng(5);
    Mlp net(Mlp::stack(3, 5, 2, 1, Activation::Tanh, Activation::Identity), rng);
    AdamState st(net, {});
    const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 4, 0.3);
    for (int k = 0; k < 20; ++k) {
      ForwardCache cache;
      const Eigen::MatrixXd y = net.forward(x, &cache);
      adam_step(st, net, net.backward(cache, y));
    }
    return net.flat_parameters();
  };
  EXPECT_EQ(run(), run());
}

TEST(ChainCriticToActor, LinearHandCase) {
  // Q(s, a) = a and mu(s) = w s, so d/dw mean_j Q = mean_j s_j.
  Mlp critic = single_layer(2, 1, Activation::Identity, (Eigen::MatrixXd(1, 2) << 0.0, 1.0).finished(),
                            Eigen::VectorXd::Zero(1));
  Mlp actor = single_layer(1, 1, Activation::Identity, Eigen::MatrixXd::Constant(1, 1, 0.4),
                           Eigen::VectorXd::Zero(1));
  const Eigen::MatrixXd states = (Eigen::MatrixXd(1, 4) << 1.0, 2.0, -0.5, 3.5).finished();
  const auto r = chain_critic_to_actor(critic, actor, states);
  EXPECT_NEAR(r.grads.weight[0](0, 0), 1.5, 1e-15);
  EXPECT_NEAR(r.grads.bias[0](0), 1.0, 1e-15);
  EXPECT_NEAR(r.objective, 0.4 * 1.5, 1e-15);
}

TEST(ChainCriticToActor, CriticBlindToActionGivesZero) {
  Rng rng(8);
  Mlp critic(Mlp::stack(3, 5, 1, 1, Activation::Tanh, Activation::Identity), rng);
  critic.layers()[0].weight.col(2).setZero();  // the action column
  const Mlp actor(Mlp::stack(2, 4, 1, 1, Activation::Tanh, Activation::SteepenedSigmoid), rng);
  const auto r = chain_critic_to_actor(critic, actor, Eigen::MatrixXd::Random(2, 6));
  EXPECT_EQ(r.grads.squared_norm(), 0.0);
}

TEST(ChainCriticToActor, MatchesFiniteDifferences) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int sdim = static_cast<int>(rng.uniform_int(1, 4));
    const int adim = static_cast<int>(rng.uniform_int(1, 3));
    const Mlp actor = tlc::testing::random_tiny_mlp(rng, sdim, adim, false);
    const Mlp critic = tlc::testing::random_tiny_mlp(rng, sdim + adim, 1, false);
    Eigen::MatrixXd s(sdim, 5);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = 2 * rng.uniform() - 1;
    auto objective = [&](const Mlp& a) {
      Eigen::MatrixXd in(sdim + adim, s.cols());
      in << s, a.forward(s);
      return critic.forward(in).mean();
    };
    const auto r = chain_critic_to_actor(critic, actor, s);
    EXPECT_NEAR(r.objective, objective(actor), 1e-14);
    EXPECT_LT(max_relative_error(flatten(r.grads), numeric_gradient(actor, objective)), 1e-4);
  }
}

TEST(ChainCriticToActor, ShapeMismatch) {
  Rng rng(1);
  const Mlp critic(Mlp::stack(4, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  const Mlp actor(Mlp::stack(2, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  EXPECT_THROW(chain_critic_to_actor(critic, actor, Eigen::MatrixXd::Ones(2, 3)),
               DimensionMismatch);
}

TEST(SoftUpdate, BlendsParameters) {
  Rng rng(4);
  const Mlp online(Mlp::stack(2, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  Mlp target(Mlp::stack(2, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  const auto before = target.flat_parameters();
  target.soft_update(online, 0.1);
  const Eigen::VectorXd expected = 0.1 * online.flat_parameters() + 0.9 * before;
  EXPECT_LT((target.flat_parameters() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  Rng rng(6);
  const Mlp net(Mlp::stack(5, 7, 3, 2, Activation::Tanh, Activation::SteepenedSigmoid, 10.0), rng);
  const auto path = (std::filesystem::temp_directory_path() / "tlc_ckpt_rt.tlc").string();
  save_checkpoint(path, net);
  const Mlp back = load_checkpoint(path);
  EXPECT_EQ(back.specs(), net.specs());
  EXPECT_EQ(back.flat_parameters(), net.flat_parameters());
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 9);
  EXPECT_EQ(back.forward(x), net.forward(x));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionIsDetected) {
  Rng rng(7);
  const Mlp net(Mlp::stack(2, 3, 1, 1, Activation::Tanh, Activation::Identity), rng);
  auto bytes = serialize(net);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize(flipped), CheckpointIncompatible);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(deserialize(truncated), CheckpointIncompatible);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), CheckpointIncompatible);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.tlc"), CheckpointIncompatible);
}
