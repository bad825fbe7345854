#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tlc/rng.hpp"

namespace tlc {

enum class Activation { Identity, Tanh, Relu, SteepenedSigmoid };

const char* to_string(Activation a);

/// Logistic sigmoid with its input scaled by `alpha`; approaches a unit step
/// at zero as alpha grows.
double steepened_sigmoid(double x, double alpha);

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::Identity;
  double alpha = 10.0;  // steepening ratio, SteepenedSigmoid only

  bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
  LayerSpec spec;
  Eigen::MatrixXd weight;  // out_dim x in_dim
  Eigen::VectorXd bias;    // out_dim
};

/// Activations kept by forward() for the matching backward() call. Samples are
/// columns.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;   // input to layer i
  std::vector<Eigen::MatrixXd> outputs;  // activated output of layer i
  bool empty() const { return inputs.empty(); }
};

/// Gradients shaped like the network's parameters, plus d(loss)/d(input).
struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;

  void scale(double factor);
  void add(const Gradients& other);
  double squared_norm() const;
};

class Mlp {
 public:
  Mlp() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  Mlp(std::vector<LayerSpec> specs, Rng& rng);
  /// All parameters zero.
  explicit Mlp(std::vector<LayerSpec> specs);

  /// Hidden layers of `width` with `hidden` activation, then an output layer.
  static std::vector<LayerSpec> stack(int in_dim, int width, int hidden_layers, int out_dim,
                                      Activation hidden, Activation output, double alpha = 10.0);

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::vector<LayerSpec> specs() const;

  /// Batched forward pass; each column of `input` is one sample. Throws
  /// DimensionMismatch on a wrong row count.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache* cache = nullptr) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& input) const;

  /// Reverse-mode pass for d(loss)/d(output) = `upstream`. Throws MissingCache
  /// when `cache` does not come from a forward pass over this network with the
  /// same batch. `output_preactivation` optionally adds d(loss)/d(z) for the
  /// last layer's pre-activation z, for penalties that act on z directly.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                     const Eigen::MatrixXd* output_preactivation = nullptr) const;

  /// Pre-activation of the last layer, recomputed from a forward cache.
  Eigen::MatrixXd output_preactivation(const ForwardCache& cache) const;

  Gradients zero_gradients() const;

  Eigen::VectorXd flat_parameters() const;
  void set_flat_parameters(const Eigen::VectorXd& flat);

  /// theta <- tau * online + (1 - tau) * theta
  void soft_update(const Mlp& online, double tau);

  bool all_finite() const;

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Eigen::MatrixXd> m_weight, v_weight;
  std::vector<Eigen::VectorXd> m_bias, v_bias;

  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg);
};

/// One bias-corrected Adam descent step on `net`.
void adam_step(AdamState& state, Mlp& net, const Gradients& grads);

struct ActorGradient {
  Gradients grads;   // d/d(theta_actor) of mean_j Q(s_j, mu(s_j))
  double objective;  // mean_j Q(s_j, mu(s_j))
};

/// Deterministic policy gradient through the critic: the critic's input is the
/// state stacked on top of the action. Throws DimensionMismatch when the
/// networks do not fit together.
ActorGradient chain_critic_to_actor(const Mlp& critic, const Mlp& actor,
                                    const Eigen::MatrixXd& states);

/// Self-describing little-endian binary checkpoint with a CRC32 trailer.
void save_checkpoint(const std::string& path, const Mlp& net);
/// Throws CheckpointIncompatible on a bad magic, version or checksum.
Mlp load_checkpoint(const std::string& path);

std::vector<unsigned char> serialize(const Mlp& net);
Mlp deserialize(const std::vector<unsigned char>& bytes);

}  // namespace tlc
