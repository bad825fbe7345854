#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tlc/agents.hpp"
#include "tlc/baselines.hpp"
#include "tlc/config.hpp"
#include "tlc/mdp.hpp"
#include "tlc/metrics.hpp"

namespace tlc {

enum class Command {
  Simulate,
  SolveMdp,
  TrainDqn,
  TrainDdpg,
  Eval,
  AnalyzeFluid,
  DetectGreenwave,
  Compare,
};

std::string to_string(Command command);

/// Trained or solved controllers a policy factory may draw on.
struct PolicyContext {
  std::shared_ptr<const DqnAgent> dqn;
  std::shared_ptr<DdpgAgent> ddpg;
  std::optional<PolicyTable> mdp;
};

/// Exact optimal policy of the configured single intersection.
PolicyIterationResult solve_single(const ExperimentConfig& config);

/// Builds the requested controller. Learned and solved policies must already
/// be present in `context`; the MDP policy is solved on demand otherwise.
std::unique_ptr<Policy> make_policy(PolicyKind kind, const ExperimentConfig& config,
                                    PolicyContext& context, std::uint64_t seed);

/// `episodes` runs of `horizon` slots from the empty network. Episode e draws
/// its arrivals from `arrivals.split(e)`, so two policies evaluated with the
/// same stream see identical traffic.
std::vector<EpisodeTrace> evaluate(Policy& policy, const ExperimentConfig& config,
                                   int episodes, int horizon, const Rng& arrivals);

/// Mean queued vehicles per slot over one run of `steps` slots.
double long_run_queue(Policy& policy, const ExperimentConfig& config, long steps, Rng arrivals);

struct RunResult {
  std::string metrics_json;  // exactly what was written to metrics.json
  std::vector<PolicyMetrics> policies;
  std::vector<std::string> artifacts;  // files written, relative to out_dir
};

/// Executes one CLI command end to end and writes its artifacts below
/// config.out_dir. Deterministic in (config, seed).
RunResult run_experiment(const ExperimentConfig& config, Command command);

}  // namespace tlc
