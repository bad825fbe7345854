#include "tlc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "tlc/errors.hpp"

namespace tlc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigInvalid("'" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

// Shortest decimal that round-trips, so describe() output is stable.
std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

Activation parse_activation(const std::string& key, const std::string& text) {
  if (text == "tanh") return Activation::Tanh;
  if (text == "relu") return Activation::Relu;
  if (text == "identity") return Activation::Identity;
  throw ConfigInvalid("'" + key + "': unknown hidden activation '" + text + "'");
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Field number(const std::string& key, T& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_number<T>(key, v); },
          [&ref]() {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(ref);
            } else {
              return std::to_string(ref);
            }
          }};
}

Field doubles(const std::string& key, std::vector<double>& ref) {
  return {key,
          [&ref, key](const std::string& v) {
            ref.clear();
            for (const auto& item : split_list(v)) ref.push_back(parse_number<double>(key, item));
          },
          [&ref]() {
            std::string out;
            for (std::size_t i = 0; i < ref.size(); ++i) {
              if (i) out += ",";
              out += format_double(ref[i]);
            }
            return out;
          }};
}

Field activation(const std::string& key, Activation& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_activation(key, v); },
          [&ref]() { return std::string(to_string(ref)); }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  f.push_back({"scenario", [&c](const std::string& v) { c.scenario = Scenario::parse(v); },
               [&c]() { return c.scenario.to_string(); }});
  f.push_back({"arrivals.kind",
               [&c](const std::string& v) {
                 if (v == "bernoulli") {
                   c.arrivals.kind = ArrivalKind::Bernoulli;
                 } else if (v == "uniform") {
                   c.arrivals.kind = ArrivalKind::BoundedUniform;
                 } else {
                   throw ConfigInvalid("'arrivals.kind': expected bernoulli or uniform, got '" +
                                       v + "'");
                 }
               },
               [&c]() {
                 return std::string(c.arrivals.kind == ArrivalKind::Bernoulli ? "bernoulli"
                                                                              : "uniform");
               }});
  f.push_back(number("arrivals.avenue_p", c.arrivals.avenue_p));
  f.push_back(number("arrivals.cross_p", c.arrivals.cross_p));
  f.push_back(number("arrivals.avenue_cap", c.arrivals.avenue_cap));
  f.push_back(number("arrivals.cross_cap", c.arrivals.cross_cap));
  f.push_back({"arrivals.mode",
               [&c](const std::string& v) {
                 if (v == "chained") {
                   c.arrivals.mode = ArrivalMode::BoundaryChained;
                 } else if (v == "per-intersection") {
                   c.arrivals.mode = ArrivalMode::PerIntersection;
                 } else {
                   throw ConfigInvalid(
                       "'arrivals.mode': expected chained or per-intersection, got '" + v + "'");
                 }
               },
               [&c]() {
                 return std::string(c.arrivals.mode == ArrivalMode::BoundaryChained
                                        ? "chained"
                                        : "per-intersection");
               }});
  f.push_back(number("rates.avenue", c.rates.avenue));
  f.push_back(number("rates.cross", c.rates.cross));

  f.push_back({"policy", [&c](const std::string& v) { c.policy = parse_policy(v); },
               [&c]() { return to_string(c.policy); }});
  f.push_back(number("fixed.green", c.fixed_cycle.green));
  f.push_back(number("fixed.yellow", c.fixed_cycle.yellow));
  f.push_back(number("fixed.red", c.fixed_cycle.red));
  f.push_back(number("fixed.orange", c.fixed_cycle.orange));
  f.push_back({"fixed.offsets",
               [&c](const std::string& v) {
                 c.fixed_cycle.offsets.clear();
                 for (const auto& item : split_list(v)) {
                   c.fixed_cycle.offsets.push_back(parse_number<int>("fixed.offsets", item));
                 }
               },
               [&c]() {
                 std::string out;
                 for (std::size_t i = 0; i < c.fixed_cycle.offsets.size(); ++i) {
                   if (i) out += ",";
                   out += std::to_string(c.fixed_cycle.offsets[i]);
                 }
                 return out;
               }});
  f.push_back(number("threshold.tau0", c.threshold.tau0));
  f.push_back(number("threshold.tau2", c.threshold.tau2));
  f.push_back({"greenwave.mode",
               [&c](const std::string& v) {
                 if (v == "aggregate") {
                   c.greenwave.mode = GreenwaveMode::Aggregate;
                 } else if (v == "scheduled") {
                   c.greenwave.mode = GreenwaveMode::Scheduled;
                 } else {
                   throw ConfigInvalid(
                       "'greenwave.mode': expected aggregate or scheduled, got '" + v + "'");
                 }
               },
               [&c]() {
                 return std::string(c.greenwave.mode == GreenwaveMode::Aggregate ? "aggregate"
                                                                                 : "scheduled");
               }});
  f.push_back(number("greenwave.critical", c.greenwave.critical));
  f.push_back(number("greenwave.green", c.greenwave.green));
  f.push_back(number("greenwave.yellow", c.greenwave.yellow));
  f.push_back(number("greenwave.red", c.greenwave.red));
  f.push_back(number("greenwave.orange", c.greenwave.orange));

  f.push_back(number("dqn.hidden_width", c.dqn.hidden_width));
  f.push_back(number("dqn.hidden_layers", c.dqn.hidden_layers));
  f.push_back(activation("dqn.activation", c.dqn.hidden));
  f.push_back(number("dqn.lr", c.dqn.lr));
  f.push_back(number("dqn.lr_final", c.dqn.lr_final));
  f.push_back(number("dqn.gamma", c.dqn.gamma));
  f.push_back(number("dqn.batch", c.dqn.batch));
  f.push_back(number("dqn.capacity", c.dqn.capacity));
  f.push_back(number("dqn.epsilon_start", c.dqn.epsilon_start));
  f.push_back(number("dqn.epsilon_end", c.dqn.epsilon_end));
  f.push_back(number("dqn.target_period", c.dqn.target_period));
  f.push_back(number("dqn.obs_scale", c.dqn.obs_scale));
  f.push_back(number("dqn.queue_levels", c.dqn.queue_levels));
  f.push_back(number("dqn.reward_scale", c.dqn.reward_scale));
  f.push_back(number("dqn.reward_centering", c.dqn.reward_centering));
  f.push_back(number("dqn.grad_clip", c.dqn.grad_clip));

  f.push_back(number("ddpg.hidden_width", c.ddpg.hidden_width));
  f.push_back(number("ddpg.hidden_layers", c.ddpg.hidden_layers));
  f.push_back(activation("ddpg.activation", c.ddpg.hidden));
  f.push_back(number("ddpg.alpha", c.ddpg.alpha));
  f.push_back(number("ddpg.actor_lr", c.ddpg.actor_lr));
  f.push_back(number("ddpg.critic_lr", c.ddpg.critic_lr));
  f.push_back(number("ddpg.gamma", c.ddpg.gamma));
  f.push_back(number("ddpg.tau", c.ddpg.tau));
  f.push_back(number("ddpg.batch", c.ddpg.batch));
  f.push_back(number("ddpg.capacity", c.ddpg.capacity));
  f.push_back({"ddpg.noise",
               [&c](const std::string& v) {
                 if (v == "ou") {
                   c.ddpg.noise = NoiseKind::OrnsteinUhlenbeck;
                 } else if (v == "gaussian") {
                   c.ddpg.noise = NoiseKind::Gaussian;
                 } else {
                   throw ConfigInvalid("'ddpg.noise': expected ou or gaussian, got '" + v + "'");
                 }
               },
               [&c]() {
                 return std::string(c.ddpg.noise == NoiseKind::OrnsteinUhlenbeck ? "ou"
                                                                                 : "gaussian");
               }});
  f.push_back(number("ddpg.noise_theta", c.ddpg.noise_theta));
  f.push_back(number("ddpg.noise_sigma", c.ddpg.noise_sigma));
  f.push_back(number("ddpg.noise_dt", c.ddpg.noise_dt));
  f.push_back(number("ddpg.obs_scale", c.ddpg.obs_scale));
  f.push_back(number("ddpg.reward_scale", c.ddpg.reward_scale));
  f.push_back(number("ddpg.grad_clip", c.ddpg.grad_clip));
  f.push_back(number("ddpg.actor_final_init", c.ddpg.actor_final_init));
  f.push_back(number("ddpg.actor_preact_penalty", c.ddpg.actor_preact_penalty));
  f.push_back({"ddpg.target_action",
               [&c](const std::string& v) {
                 if (v != "continuous" && v != "binary") {
                   throw ConfigInvalid("'ddpg.target_action': expected continuous or binary, got '" +
                                       v + "'");
                 }
                 c.ddpg.binarize_target = v == "binary";
               },
               [&c]() { return std::string(c.ddpg.binarize_target ? "binary" : "continuous"); }});
  f.push_back({"ddpg.replay_action",
               [&c](const std::string& v) {
                 if (v != "binary" && v != "raw") {
                   throw ConfigInvalid("'ddpg.replay_action': expected binary or raw, got '" + v +
                                       "'");
                 }
                 c.ddpg.replay_raw = v == "raw";
               },
               [&c]() { return std::string(c.ddpg.replay_raw ? "raw" : "binary"); }});
  f.push_back({"ddpg.phase_encoding",
               [&c](const std::string& v) {
                 if (v != "scalar" && v != "onehot") {
                   throw ConfigInvalid("'ddpg.phase_encoding': expected scalar or onehot, got '" +
                                       v + "'");
                 }
                 c.ddpg.phase_onehot = v == "onehot";
               },
               [&c]() { return std::string(c.ddpg.phase_onehot ? "onehot" : "scalar"); }});

  f.push_back(number("train.episodes", c.train.episodes));
  f.push_back(number("train.episode_length", c.train.episode_length));
  f.push_back(number("train.warmup", c.train.warmup));
  f.push_back(number("train.updates_per_step", c.train.updates_per_step));
  f.push_back(number("mdp.x_max", c.mdp_x_max));
  f.push_back({"compare",
               [&c](const std::string& v) {
                 c.compare.clear();
                 for (const auto& item : split_list(v)) c.compare.push_back(parse_policy(item));
               },
               [&c]() {
                 std::string out;
                 for (std::size_t i = 0; i < c.compare.size(); ++i) {
                   if (i) out += ",";
                   out += to_string(c.compare[i]);
                 }
                 return out;
               }});

  f.push_back(number("horizon", c.horizon));
  f.push_back(number("eval.episodes", c.eval_episodes));
  f.push_back(number("eval.long_run_steps", c.long_run_steps));
  f.push_back(number("gamma", c.gamma));
  f.push_back(number("detect.window", c.detect_window));
  f.push_back(number("detect.threshold", c.detect_threshold));
  f.push_back(number("detect.max_lag", c.detect_max_lag));
  f.push_back(number("fluid.lambda0", c.fluid.lambda0));
  f.push_back(doubles("fluid.lambda", c.fluid.lambda));
  f.push_back(number("fluid.yellow", c.fluid.yellow));
  f.push_back(number("fluid.orange", c.fluid.orange));
  f.push_back(doubles("fluid.deltas", c.fluid_deltas));
  f.push_back(number("fluid.horizon_cycles", c.fluid_horizon_cycles));
  f.push_back({"seed",
               [&c](const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
               [&c]() { return c.seed ? std::to_string(*c.seed) : std::string(); }});
  f.push_back({"out", [&c](const std::string& v) { c.out_dir = v; },
               [&c]() { return c.out_dir; }});
  f.push_back({"checkpoint", [&c](const std::string& v) { c.checkpoint = v; },
               [&c]() { return c.checkpoint; }});
  f.push_back({"trajectory", [&c](const std::string& v) { c.trajectory = v; },
               [&c]() { return c.trajectory; }});
  return f;
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text, const std::string& origin) {
  ConfigMap map;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigInvalid(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    const auto key = trim(stripped.substr(0, eq));
    if (key.empty()) {
      throw ConfigInvalid(origin + ":" + std::to_string(number) + ": empty key");
    }
    map.values_[key] = trim(stripped.substr(eq + 1));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigInvalid("override '" + assignment + "' is not key=value");
  }
  const auto key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigInvalid("override '" + assignment + "' has an empty key");
  values_[key] = trim(assignment.substr(eq + 1));
}

Scenario Scenario::parse(const std::string& text) {
  Scenario s;
  auto positive = [&](const std::string& digits) {
    const int v = parse_number<int>("scenario", digits);
    if (v < 1) throw ConfigInvalid("scenario '" + text + "' needs positive sizes");
    return v;
  };
  if (text == "single") return s;
  if (text.rfind("avenue-", 0) == 0) {
    s.kind = ScenarioKind::Grid;
    s.topology = GridTopology(1, positive(text.substr(7)));
    return s;
  }
  if (text.rfind("grid-", 0) == 0) {
    const auto x = text.find('x', 5);
    if (x == std::string::npos) throw ConfigInvalid("scenario '" + text + "' is not grid-RxC");
    s.kind = ScenarioKind::Grid;
    s.topology = GridTopology(positive(text.substr(5, x - 5)), positive(text.substr(x + 1)));
    return s;
  }
  throw ConfigInvalid("unknown scenario '" + text + "' (single, avenue-N, grid-RxC)");
}

std::string Scenario::to_string() const {
  if (kind == ScenarioKind::Single) return "single";
  if (topology.avenues == 1) return "avenue-" + std::to_string(topology.cross_streets);
  return "grid-" + std::to_string(topology.avenues) + "x" + std::to_string(topology.cross_streets);
}

PolicyKind parse_policy(const std::string& text) {
  if (text == "fixed_cycle") return PolicyKind::FixedCycle;
  if (text == "threshold") return PolicyKind::Threshold;
  if (text == "greenwave") return PolicyKind::Greenwave;
  if (text == "random") return PolicyKind::Random;
  if (text == "mdp") return PolicyKind::Mdp;
  if (text == "dqn") return PolicyKind::Dqn;
  if (text == "ddpg") return PolicyKind::Ddpg;
  throw ConfigInvalid("unknown policy '" + text +
                      "' (fixed_cycle, threshold, greenwave, random, mdp, dqn, ddpg)");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FixedCycle: return "fixed_cycle";
    case PolicyKind::Threshold: return "threshold";
    case PolicyKind::Greenwave: return "greenwave";
    case PolicyKind::Random: return "random";
    case PolicyKind::Mdp: return "mdp";
    case PolicyKind::Dqn: return "dqn";
    case PolicyKind::Ddpg: return "ddpg";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (!seed) throw ConfigInvalid("a seed is required (config key 'seed' or --seed)");
  arrivals.validate();
  if (rates.avenue < 1 || rates.cross < 1) throw ConfigInvalid("passing rates must be >= 1");
  fixed_cycle.validate();
  if (!fixed_cycle.offsets.empty() &&
      static_cast<int>(fixed_cycle.offsets.size()) != scenario.nodes()) {
    throw ConfigInvalid("fixed.offsets needs one entry per intersection");
  }
  threshold.validate();
  greenwave.validate();
  dqn.validate();
  ddpg.validate();
  if (train.episodes < 1 || train.episode_length < 1 || train.updates_per_step < 1) {
    throw ConfigInvalid("train.episodes, train.episode_length, train.updates_per_step must be >= 1");
  }
  if (mdp_x_max < 1) throw ConfigInvalid("mdp.x_max must be >= 1");
  if (horizon < 1) throw ConfigInvalid("horizon must be >= 1");
  if (eval_episodes < 1) throw ConfigInvalid("eval.episodes must be >= 1");
  if (long_run_steps < 0) throw ConfigInvalid("eval.long_run_steps must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigInvalid("gamma must lie in (0, 1]");
  if (detect_window < 1 || detect_window > horizon) {
    throw ConfigInvalid("detect.window must lie in [1, horizon]");
  }
  if (!(detect_threshold >= 0.0 && detect_threshold <= 1.0)) {
    throw ConfigInvalid("detect.threshold must lie in [0, 1]");
  }
  if (fluid_deltas.empty()) throw ConfigInvalid("fluid.deltas must not be empty");
  for (double d : fluid_deltas) {
    if (!(d >= 0.0)) throw ConfigInvalid("fluid.deltas must be >= 0");
  }
  if (!(fluid_horizon_cycles >= 10.0)) throw ConfigInvalid("fluid.horizon_cycles must be >= 10");
  if (detect_max_lag < 0) throw ConfigInvalid("detect.max_lag must be >= 0");
  auto single_only = [&](PolicyKind k) {
    if ((k == PolicyKind::Mdp || k == PolicyKind::Dqn) && scenario.kind != ScenarioKind::Single) {
      throw ConfigInvalid("policy " + to_string(k) + " needs scenario = single");
    }
  };
  single_only(policy);
  for (auto k : compare) single_only(k);
}

ExperimentConfig make_config(const ConfigMap& map) {
  ExperimentConfig config;
  auto table = fields(config);
  if (map.has("preset")) {
    const auto& preset = map.values().at("preset");
    if (preset == "experiment") {
      config.rates = {16, 4};
      config.arrivals.kind = ArrivalKind::BoundedUniform;
    } else if (preset != "model") {
      throw ConfigInvalid("unknown preset '" + preset + "' (model, experiment)");
    }
  }
  for (const auto& [key, value] : map.values()) {
    if (key == "preset") continue;
    bool found = false;
    for (auto& field : table) {
      if (field.key == key) {
        field.set(value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigInvalid("unknown config key '" + key + "'");
  }
  return config;
}

std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& field : fields(copy)) out.emplace_back(field.key, field.get());
  return out;
}

}  // namespace tlc
