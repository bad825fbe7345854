#include "tlc/nn.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "tlc/errors.hpp"

namespace tlc {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::SteepenedSigmoid:
      return "steepened_sigmoid";
  }
  return "?";
}

double steepened_sigmoid(double x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("steepening ratio must be positive");
  return 1.0 / (1.0 + std::exp(-alpha * x));
}

namespace {

void activate(const LayerSpec& spec, Eigen::MatrixXd& z) {
  switch (spec.activation) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::Relu:
      z = z.array().max(0.0);
      break;
    case Activation::SteepenedSigmoid:
      z = (1.0 + (-spec.alpha * z.array()).exp()).inverse();
      break;
  }
}

// d(activation)/d(pre-activation), expressed through the activated output.
Eigen::MatrixXd activation_slope(const LayerSpec& spec, const Eigen::MatrixXd& y) {
  switch (spec.activation) {
    case Activation::Identity:
      return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::Tanh:
      return 1.0 - y.array().square();
    case Activation::Relu:
      return (y.array() > 0.0).cast<double>();
    case Activation::SteepenedSigmoid:
      return spec.alpha * y.array() * (1.0 - y.array());
  }
  return {};
}

void check_specs(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim < 1 || specs[i].out_dim < 1) {
      throw std::invalid_argument("layer dimensions must be positive");
    }
    if (specs[i].activation == Activation::SteepenedSigmoid && !(specs[i].alpha > 0.0)) {
      throw std::invalid_argument("steepening ratio must be positive");
    }
    if (i > 0 && specs[i].in_dim != specs[i - 1].out_dim) {
      throw DimensionMismatch("layer " + std::to_string(i) + " input does not chain");
    }
  }
}

}  // namespace

void Gradients::scale(double factor) {
  for (auto& w : weight) w *= factor;
  for (auto& b : bias) b *= factor;
  input *= factor;
}

void Gradients::add(const Gradients& other) {
  if (other.weight.size() != weight.size()) throw DimensionMismatch("gradient shapes differ");
  for (std::size_t k = 0; k < weight.size(); ++k) {
    weight[k] += other.weight[k];
    bias[k] += other.bias[k];
  }
  if (other.input.size() == input.size()) input += other.input;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weight) total += w.squaredNorm();
  for (const auto& b : bias) total += b.squaredNorm();
  return total;
}

Mlp::Mlp(std::vector<LayerSpec> specs, Rng& rng) {
  check_specs(specs);
  for (const auto& spec : specs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
    DenseLayer layer{spec, Eigen::MatrixXd(spec.out_dim, spec.in_dim),
                     Eigen::VectorXd(spec.out_dim)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        layer.weight(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias(i) = (2.0 * rng.uniform() - 1.0) * bound;
    }
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<LayerSpec> specs) {
  check_specs(specs);
  for (const auto& spec : specs) {
    layers_.push_back({spec, Eigen::MatrixXd::Zero(spec.out_dim, spec.in_dim),
                       Eigen::VectorXd::Zero(spec.out_dim)});
  }
}

std::vector<LayerSpec> Mlp::stack(int in_dim, int width, int hidden_layers, int out_dim,
                                  Activation hidden, Activation output, double alpha) {
  std::vector<LayerSpec> specs;
  int prev = in_dim;
  for (int i = 0; i < hidden_layers; ++i) {
    specs.push_back({prev, width, hidden, alpha});
    prev = width;
  }
  specs.push_back({prev, out_dim, output, alpha});
  return specs;
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().spec.in_dim; }
int Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().spec.out_dim; }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<LayerSpec> Mlp::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, ForwardCache* cache) const {
  if (input.rows() != input_dim()) {
    throw DimensionMismatch("expected input dimension " + std::to_string(input_dim()) + ", got " +
                            std::to_string(input.rows()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Eigen::MatrixXd x = input;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    activate(layer.spec, z);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(z);
    }
    x = std::move(z);
  }
  return x;
}

Eigen::VectorXd Mlp::predict(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Gradients Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                        const Eigen::MatrixXd* output_preactivation) const {
  if (cache.empty() || cache.inputs.size() != layers_.size()) {
    throw MissingCache("backward() needs the cache of a forward() pass through this network");
  }
  if (upstream.rows() != output_dim() || upstream.cols() != cache.outputs.back().cols()) {
    throw MissingCache("upstream gradient does not match the cached forward pass");
  }
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    delta.array() *= activation_slope(layer.spec, cache.outputs[k]).array();
    if (output_preactivation && k + 1 == layers_.size()) delta += *output_preactivation;
    g.weight[k] = delta * cache.inputs[k].transpose();
    g.bias[k] = delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

Eigen::MatrixXd Mlp::output_preactivation(const ForwardCache& cache) const {
  if (cache.empty() || cache.inputs.size() != layers_.size()) {
    throw MissingCache("output_preactivation() needs the cache of a forward() pass");
  }
  Eigen::MatrixXd z = layers_.back().weight * cache.inputs.back();
  z.colwise() += layers_.back().bias;
  return z;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  g.input = Eigen::MatrixXd::Zero(input_dim(), 1);
  return g;
}

Eigen::VectorXd Mlp::flat_parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) flat(at++) = l.weight(i, j);
    }
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

void Mlp::set_flat_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw DimensionMismatch("flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat(at++);
    }
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

void Mlp::soft_update(const Mlp& online, double tau) {
  if (online.layers_.size() != layers_.size()) {
    throw DimensionMismatch("soft update between differently shaped networks");
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (!(online.layers_[k].spec == layers_[k].spec)) {
      throw DimensionMismatch("soft update between differently shaped networks");
    }
    layers_[k].weight = tau * online.layers_[k].weight + (1.0 - tau) * layers_[k].weight;
    layers_[k].bias = tau * online.layers_[k].bias + (1.0 - tau) * layers_[k].bias;
  }
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

AdamState::AdamState(const Mlp& net, AdamConfig cfg) : config(cfg) {
  for (const auto& l : net.layers()) {
    m_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    v_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    m_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    v_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
}

namespace {

template <typename Param, typename Moment>
void adam_update(Param& p, Moment& m, Moment& v, const Moment& g, const AdamConfig& c,
                 double correction1, double correction2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  p.array() -= c.lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.eps);
}

}  // namespace

void adam_step(AdamState& state, Mlp& net, const Gradients& grads) {
  auto& layers = net.layers();
  if (state.m_weight.size() != layers.size() || grads.weight.size() != layers.size()) {
    throw DimensionMismatch("optimizer state does not match the network");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < layers.size(); ++k) {
    adam_update(layers[k].weight, state.m_weight[k], state.v_weight[k], grads.weight[k],
                state.config, c1, c2);
    adam_update(layers[k].bias, state.m_bias[k], state.v_bias[k], grads.bias[k], state.config,
                c1, c2);
  }
}

ActorGradient chain_critic_to_actor(const Mlp& critic, const Mlp& actor,
                                    const Eigen::MatrixXd& states) {
  const int state_dim = actor.input_dim();
  const int action_dim = actor.output_dim();
  if (states.rows() != state_dim || critic.input_dim() != state_dim + action_dim ||
      critic.output_dim() != 1) {
    throw DimensionMismatch("critic input must be [state; action] with a scalar output");
  }
  const auto batch = states.cols();

  ForwardCache actor_cache;
  const Eigen::MatrixXd actions = actor.forward(states, &actor_cache);

  Eigen::MatrixXd critic_input(state_dim + action_dim, batch);
  critic_input.topRows(state_dim) = states;
  critic_input.bottomRows(action_dim) = actions;
  ForwardCache critic_cache;
  const Eigen::MatrixXd q = critic.forward(critic_input, &critic_cache);

  const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, batch, 1.0 / static_cast<double>(batch));
  const Gradients critic_grads = critic.backward(critic_cache, dq);
  const Eigen::MatrixXd dq_da = critic_grads.input.bottomRows(action_dim);

  return {actor.backward(actor_cache, dq_da), q.mean()};
}

// ---------------------------------------------------------------------------
// Checkpoint layout (all integers and doubles little-endian):
//   "TLCMLP\0\0" | u32 version | u32 layer count
//   per layer: u32 in | u32 out | u32 activation | f64 alpha
//   u64 parameter count | f64 parameters (per layer: weight row-major, bias)
//   u32 CRC32 of every preceding byte

namespace {

constexpr char kMagic[8] = {'T', 'L', 'C', 'M', 'L', 'P', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes, std::size_t end)
      : bytes_(bytes), end_(end) {}
  std::uint64_t get(int width) {
    if (pos_ + static_cast<std::size_t>(width) > end_) {
      throw CheckpointIncompatible("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<unsigned char> serialize(const Mlp& net) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put_u32(out, static_cast<std::uint32_t>(l.spec.in_dim));
    put_u32(out, static_cast<std::uint32_t>(l.spec.out_dim));
    put_u32(out, static_cast<std::uint32_t>(l.spec.activation));
    put_f64(out, l.spec.alpha);
  }
  const Eigen::VectorXd flat = net.flat_parameters();
  put_u64(out, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_f64(out, flat(i));
  put_u32(out, checksum(out.data(), out.size()));
  return out;
}

Mlp deserialize(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointIncompatible("not a network checkpoint");
  }
  const std::size_t body = bytes.size() - 4;
  Reader trailer(bytes, bytes.size());
  trailer.skip(body);
  if (trailer.u32() != checksum(bytes.data(), body)) {
    throw CheckpointIncompatible("checkpoint checksum mismatch");
  }
  Reader r(bytes, body);
  r.skip(sizeof(kMagic));
  if (const auto version = r.u32(); version != kVersion) {
    throw CheckpointIncompatible("unsupported checkpoint version " + std::to_string(version));
  }
  const auto n_layers = r.u32();
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec s;
    s.in_dim = static_cast<int>(r.u32());
    s.out_dim = static_cast<int>(r.u32());
    const auto act = r.u32();
    if (act > static_cast<std::uint32_t>(Activation::SteepenedSigmoid)) {
      throw CheckpointIncompatible("unknown activation code");
    }
    s.activation = static_cast<Activation>(act);
    s.alpha = r.f64();
    specs.push_back(s);
  }
  Mlp net(specs);
  const auto count = r.u64();
  if (count != net.parameter_count()) throw CheckpointIncompatible("parameter count mismatch");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = r.f64();
  if (r.pos() != body) throw CheckpointIncompatible("trailing bytes in checkpoint");
  net.set_flat_parameters(flat);
  return net;
}

void save_checkpoint(const std::string& path, const Mlp& net) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointIncompatible("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace tlc
