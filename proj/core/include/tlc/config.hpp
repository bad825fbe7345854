#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tlc/agents.hpp"
#include "tlc/baselines.hpp"
#include "tlc/env.hpp"
#include "tlc/fluid.hpp"

namespace tlc {

/// Flat `key = value` settings. Lines starting with '#' and blank lines are
/// ignored; later assignments win.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigMap load(const std::string& path);

  /// `key=value`; throws ConfigInvalid when there is no '='.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class ScenarioKind { Single, Grid };

struct Scenario {
  ScenarioKind kind = ScenarioKind::Single;
  GridTopology topology{1, 1};

  /// "single", "avenue-N" (one avenue, N cross streets) or "grid-RxC".
  static Scenario parse(const std::string& text);
  std::string to_string() const;
  int nodes() const { return topology.size(); }
};

enum class PolicyKind { FixedCycle, Threshold, Greenwave, Random, Mdp, Dqn, Ddpg };

PolicyKind parse_policy(const std::string& text);
std::string to_string(PolicyKind kind);

struct ExperimentConfig {
  Scenario scenario;
  ArrivalModel arrivals;
  PassingRates rates;

  PolicyKind policy = PolicyKind::FixedCycle;
  FixedCycleSpec fixed_cycle;
  ThresholdSpec threshold;
  GreenwaveSpec greenwave;
  DqnConfig dqn;
  DdpgConfig ddpg;
  TrainOptions train;
  int mdp_x_max = 30;
  // Policies compared side by side by `compare`.
  std::vector<PolicyKind> compare;

  // Evaluation: `episodes` runs of `horizon` slots from the empty network,
  // plus an optional single long run for steady-state averages.
  int horizon = 150;
  int eval_episodes = 10;
  long long_run_steps = 0;
  double gamma = 0.99;  // discount of the reported cost

  int detect_window = 50;
  double detect_threshold = 0.9;
  int detect_max_lag = 5;

  fluid::Params fluid;
  std::vector<double> fluid_deltas{0.0, 0.1, 0.5, 1.0};
  double fluid_horizon_cycles = 400.0;

  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string checkpoint;  // network to evaluate instead of training
  std::string trajectory;  // CSV read by detect-greenwave

  /// Throws ConfigInvalid on any inconsistent or missing setting.
  void validate() const;
};

/// Builds a config from defaults plus `map`. Unknown keys are rejected.
/// `preset = experiment` switches to passing rates 16/4 with bounded-uniform
/// arrivals before the remaining keys are applied.
ExperimentConfig make_config(const ConfigMap& map);

/// Canonical key/value listing of every setting, in a fixed order.
std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& config);

}  // namespace tlc
