#include "tlc/experiment.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tlc/errors.hpp"
#include "tlc/fluid.hpp"
#include "tlc/nn.hpp"
#include "tlc/trajectory_io.hpp"

namespace tlc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string to_string(Command command) {
  switch (command) {
    case Command::Simulate: return "simulate";
    case Command::SolveMdp: return "solve-mdp";
    case Command::TrainDqn: return "train-dqn";
    case Command::TrainDdpg: return "train-ddpg";
    case Command::Eval: return "eval";
    case Command::AnalyzeFluid: return "analyze-fluid";
    case Command::DetectGreenwave: return "detect-greenwave";
    case Command::Compare: return "compare";
  }
  return "?";
}

PolicyIterationResult solve_single(const ExperimentConfig& config) {
  if (config.arrivals.kind != ArrivalKind::Bernoulli) {
    throw ConfigInvalid("the exact solver needs Bernoulli arrivals");
  }
  const TruncatedSpace space{config.mdp_x_max};
  const auto model =
      build_transitions(space, config.arrivals.avenue_p, config.arrivals.cross_p, config.rates);
  return policy_iteration(model, config.gamma);
}

std::unique_ptr<Policy> make_policy(PolicyKind kind, const ExperimentConfig& config,
                                    PolicyContext& context, std::uint64_t seed) {
  switch (kind) {
    case PolicyKind::FixedCycle:
      return std::make_unique<FixedCyclePolicy>(config.fixed_cycle);
    case PolicyKind::Threshold:
      return std::make_unique<ThresholdPolicy>(config.threshold);
    case PolicyKind::Greenwave:
      return std::make_unique<GreenwavePolicy>(config.greenwave);
    case PolicyKind::Random:
      return std::make_unique<RandomPolicy>(Rng(seed).split("random-policy"));
    case PolicyKind::Mdp:
      if (!context.mdp) context.mdp = solve_single(config).policy;
      return std::make_unique<TablePolicy>(*context.mdp);
    case PolicyKind::Dqn:
      if (!context.dqn) throw ConfigInvalid("policy dqn needs a trained agent or a checkpoint");
      return std::make_unique<DqnPolicy>(context.dqn);
    case PolicyKind::Ddpg:
      if (!context.ddpg) throw ConfigInvalid("policy ddpg needs a trained agent or a checkpoint");
      return std::make_unique<DdpgPolicy>(context.ddpg);
  }
  throw ConfigInvalid("unknown policy");
}

std::vector<EpisodeTrace> evaluate(Policy& policy, const ExperimentConfig& config,
                                   int episodes, int horizon, const Rng& arrivals) {
  std::vector<EpisodeTrace> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    const Rng stream = arrivals.split(std::to_string(e));
    policy.reset();
    EpisodeTrace trace;
    trace.steps.reserve(static_cast<std::size_t>(horizon));
    if (config.scenario.kind == ScenarioKind::Single) {
      SingleIntersectionEnv env(config.arrivals, config.rates, stream);
      env.reset();
      for (int t = 0; t < horizon; ++t) {
        GridState g = to_grid(env.state());
        Action a = policy.act(g);
        if (a.size() != 1) throw ActionLengthMismatch("single intersection needs one bit");
        const auto r = env.step(a[0]);
        trace.exits += r.departures[0] + r.departures[1];
        trace.steps.push_back({std::move(g), std::move(a), r.reward});
      }
      trace.final_state = to_grid(env.state());
    } else {
      GridEnv env(config.scenario.topology, config.arrivals, config.rates, stream);
      env.reset();
      for (int t = 0; t < horizon; ++t) {
        GridState g = env.state();
        Action a = policy.act(g);
        const auto r = env.step(a);
        trace.exits += r.exits;
        trace.steps.push_back({std::move(g), std::move(a), r.reward});
      }
      trace.final_state = env.state();
    }
    out.push_back(std::move(trace));
  }
  return out;
}

double long_run_queue(Policy& policy, const ExperimentConfig& config, long steps, Rng arrivals) {
  policy.reset();
  double sum = 0.0;
  if (config.scenario.kind == ScenarioKind::Single) {
    SingleIntersectionEnv env(config.arrivals, config.rates, std::move(arrivals));
    env.reset();
    for (long t = 0; t < steps; ++t) {
      const auto a = policy.act(to_grid(env.state()));
      const auto r = env.step(a[0]);
      sum += static_cast<double>(r.next.x1 + r.next.x2);
    }
  } else {
    GridEnv env(config.scenario.topology, config.arrivals, config.rates, std::move(arrivals));
    env.reset();
    for (long t = 0; t < steps; ++t) {
      const auto r = env.step(policy.act(env.state()));
      sum += static_cast<double>(total_queued(r.next));
    }
  }
  return sum / static_cast<double>(steps);
}

namespace {

json to_json(const GreenwaveReport& g) {
  json j;
  j["flag"] = g.flag;
  j["best_synchrony"] = g.best_synchrony;
  j["best_window_start"] = g.best_window_start;
  j["window"] = g.window;
  j["threshold"] = g.threshold;
  json lags = json::array();
  for (const auto& l : g.lags) {
    lags.push_back({{"from", l.from}, {"to", l.to}, {"lag", l.lag}, {"correlation", l.correlation}});
  }
  j["lags"] = lags;
  return j;
}

json to_json(const PolicyMetrics& m) {
  json j;
  j["policy"] = m.policy;
  j["average_queue"] = m.average_queue;
  j["discounted_cost"] = m.discounted_cost;
  j["episode_rewards"] = m.episode_rewards;
  j["throughput"] = m.throughput;
  if (m.has_synchrony) {
    j["synchrony"] = m.synchrony;
    j["greenwave"] = to_json(m.greenwave);
  }
  if (m.steady_state_queue >= 0.0) j["steady_state_queue"] = m.steady_state_queue;
  return j;
}

json to_json(const ThresholdCurve& c) {
  json j;
  j["phase"] = to_int(c.phase);
  json tau = json::array();
  for (const auto& t : c.tau) {
    if (t) {
      tau.push_back(*t);
    } else {
      tau.push_back(nullptr);
    }
  }
  j["tau"] = tau;
  j["monotone"] = c.monotone;
  j["violations"] = c.violations;
  return j;
}

class Runner {
 public:
  explicit Runner(const ExperimentConfig& config)
      : config_(config), seed_(*config.seed), master_(seed_), out_(config.out_dir) {
    fs::create_directories(out_);
    root_["command"] = nullptr;
    root_["seed"] = seed_;
    json settings;
    for (const auto& [k, v] : describe(config_)) {
      // Output locations do not change any result.
      if (k == "out") continue;
      settings[k] = v;
    }
    root_["config"] = settings;
  }

  RunResult run(Command command) {
    root_["command"] = to_string(command);
    switch (command) {
      case Command::Simulate: simulate(config_.policy); break;
      case Command::Eval: eval(); break;
      case Command::Compare: compare(); break;
      case Command::SolveMdp: solve_mdp(); break;
      case Command::TrainDqn: train_dqn_cmd(); break;
      case Command::TrainDdpg: train_ddpg_cmd(); break;
      case Command::AnalyzeFluid: analyze_fluid(); break;
      case Command::DetectGreenwave: detect(); break;
    }
    result_.metrics_json = root_.dump(2) + "\n";
    write_text("metrics.json", result_.metrics_json);
    return result_;
  }

 private:
  const ExperimentConfig& config_;
  std::uint64_t seed_;
  Rng master_;
  fs::path out_;
  json root_;
  RunResult result_;
  PolicyContext context_;

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream f(out_ / name, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigInvalid("cannot write '" + (out_ / name).string() + "'");
    f << text;
    result_.artifacts.push_back(name);
  }

  Rng eval_stream() const { return master_.split("eval"); }

  PolicyMetrics evaluate_policy(PolicyKind kind, const std::string& trajectory_name) {
    auto policy = make_policy(kind, config_, context_, seed_);
    const auto traces =
        evaluate(*policy, config_, config_.eval_episodes, config_.horizon, eval_stream());
    auto m = summarize(policy->name(), traces, config_.gamma, config_.detect_window,
                       config_.detect_threshold, config_.detect_max_lag);
    if (config_.long_run_steps > 0) {
      m.steady_state_queue =
          long_run_queue(*policy, config_, config_.long_run_steps, master_.split("long-run"));
    }
    if (auto* gw = dynamic_cast<GreenwavePolicy*>(policy.get())) {
      desync_events_ = gw->desync_events();
    }
    if (!trajectory_name.empty()) {
      write_trajectory_csv((out_ / trajectory_name).string(), traces);
      result_.artifacts.push_back(trajectory_name);
    }
    result_.policies.push_back(m);
    return m;
  }

  long desync_events_ = -1;

  void simulate(PolicyKind kind) {
    const auto m = evaluate_policy(kind, "trajectory.csv");
    root_["metrics"] = to_json(m);
    if (desync_events_ >= 0) root_["greenwave_desync_events"] = desync_events_;
  }

  void load_checkpoint_into_context(PolicyKind kind) {
    if (config_.checkpoint.empty()) return;
    const Mlp net = load_checkpoint(config_.checkpoint);
    Rng init = master_.split("agent-init");
    if (kind == PolicyKind::Dqn) {
      auto agent = std::make_shared<DqnAgent>(config_.dqn, init);
      if (net.specs() != agent->online().specs()) {
        throw CheckpointIncompatible("checkpoint layers do not match the configured DQN");
      }
      agent->online() = net;
      context_.dqn = agent;
    } else if (kind == PolicyKind::Ddpg) {
      auto agent = std::make_shared<DdpgAgent>(config_.scenario.topology, config_.ddpg, init);
      if (net.specs() != agent->actor().specs()) {
        throw CheckpointIncompatible("checkpoint layers do not match the configured DDPG actor");
      }
      agent->actor() = net;
      context_.ddpg = agent;
    }
  }

  void eval() {
    const auto kind = config_.policy;
    if ((kind == PolicyKind::Dqn || kind == PolicyKind::Ddpg) && config_.checkpoint.empty()) {
      throw ConfigInvalid("eval of a learned policy needs 'checkpoint'");
    }
    load_checkpoint_into_context(kind);
    simulate(kind);
  }

  void compare() {
    std::vector<PolicyKind> kinds = config_.compare;
    if (kinds.empty()) {
      kinds = {PolicyKind::FixedCycle, PolicyKind::Threshold, PolicyKind::Greenwave};
      if (config_.scenario.kind == ScenarioKind::Single) kinds.push_back(PolicyKind::Mdp);
    }
    json list = json::array();
    for (auto kind : kinds) {
      load_checkpoint_into_context(kind);
      const auto m = evaluate_policy(kind, "trajectory_" + to_string(kind) + ".csv");
      list.push_back(to_json(m));
    }
    root_["policies"] = list;
  }

  void solve_mdp() {
    const auto solved = solve_single(config_);
    const TruncatedSpace space{config_.mdp_x_max};
    write_policy_csv((out_ / "policy.csv").string(), solved.policy, solved.values);
    result_.artifacts.push_back("policy.csv");
    json j;
    j["states"] = space.size();
    j["iterations"] = solved.iterations;
    j["eval_sweeps"] = solved.eval_sweeps;
    const auto model = build_transitions(space, config_.arrivals.avenue_p,
                                         config_.arrivals.cross_p, config_.rates);
    j["bellman_residual"] = bellman_residual(model, solved.values, config_.gamma);
    j["value_empty_green"] = solved.values[space.index({})];
    j["threshold_green"] = to_json(extract_threshold_curve(solved.policy, Phase::Green));
    j["threshold_red"] = to_json(extract_threshold_curve(solved.policy, Phase::Red));
    root_["mdp"] = j;
    context_.mdp = solved.policy;
    if (config_.scenario.kind == ScenarioKind::Single) {
      root_["metrics"] = to_json(evaluate_policy(PolicyKind::Mdp, "trajectory.csv"));
    }
  }

  void train_dqn_cmd() {
    if (config_.scenario.kind != ScenarioKind::Single) {
      throw ConfigInvalid("train-dqn needs scenario = single");
    }
    Rng init = master_.split("agent-init");
    auto agent = std::make_shared<DqnAgent>(config_.dqn, init);
    SingleIntersectionEnv env(config_.arrivals, config_.rates, master_.split("env-train"));
    Rng explore = master_.split("explore");
    TrainingLog log((out_ / "training_log.jsonl").string());
    result_.artifacts.push_back("training_log.jsonl");
    train_dqn(*agent, env, config_.train, explore,
              [&](const EpisodeLog& e) { log.write(e, true); });
    if (!agent->online().all_finite()) throw NonConvergence("DQN training diverged");
    fs::create_directories(out_ / "ckpt");
    save_checkpoint((out_ / "ckpt" / "dqn.tlc").string(), agent->online());
    result_.artifacts.push_back("ckpt/dqn.tlc");
    context_.dqn = agent;

    const auto dqn = evaluate_policy(PolicyKind::Dqn, "trajectory.csv");
    const auto exact = evaluate_policy(PolicyKind::Mdp, "");
    const TruncatedSpace space{config_.mdp_x_max};
    const auto weights = visitation_weights(*context_.mdp, config_.arrivals, config_.rates,
                                            100'000, master_.split("visitation"));
    const double agreement = policy_agreement(tabulate(*agent, space), *context_.mdp, weights);
    root_["metrics"] = to_json(dqn);
    root_["optimal"] = to_json(exact);
    root_["agreement_with_optimal"] = agreement;
  }

  void train_ddpg_cmd() {
    if (config_.scenario.kind != ScenarioKind::Grid) {
      throw ConfigInvalid("train-ddpg needs an avenue-N or grid-RxC scenario");
    }
    Rng init = master_.split("agent-init");
    auto agent = std::make_shared<DdpgAgent>(config_.scenario.topology, config_.ddpg, init);
    GridEnv env(config_.scenario.topology, config_.arrivals, config_.rates,
                master_.split("env-train"));
    Rng explore = master_.split("explore");
    TrainingLog log((out_ / "training_log.jsonl").string());
    result_.artifacts.push_back("training_log.jsonl");
    train_ddpg(*agent, env, config_.train, explore,
               [&](const EpisodeLog& e) { log.write(e, false); });
    if (!agent->actor().all_finite() || !agent->critic().all_finite()) {
      throw NonConvergence("DDPG training diverged");
    }
    fs::create_directories(out_ / "ckpt");
    save_checkpoint((out_ / "ckpt" / "ddpg_actor.tlc").string(), agent->actor());
    save_checkpoint((out_ / "ckpt" / "ddpg_critic.tlc").string(), agent->critic());
    result_.artifacts.push_back("ckpt/ddpg_actor.tlc");
    result_.artifacts.push_back("ckpt/ddpg_critic.tlc");
    context_.ddpg = agent;

    const auto ddpg = evaluate_policy(PolicyKind::Ddpg, "trajectory.csv");
    const auto fixed = evaluate_policy(PolicyKind::FixedCycle, "");
    root_["metrics"] = to_json(ddpg);
    root_["fixed_cycle"] = to_json(fixed);
    root_["beats_fixed_cycle"] = ddpg.average_queue < fixed.average_queue;
  }

  void analyze_fluid() {
    const auto& p = config_.fluid;
    p.validate();
    const auto rows = fluid::sweep(p, config_.fluid_deltas, config_.fluid_horizon_cycles);
    fluid::write_sweep_csv((out_ / "fluid_sweep.csv").string(), rows);
    result_.artifacts.push_back("fluid_sweep.csv");

    json j;
    const auto floor = fluid::schedule_free_bounds(p);
    j["schedule_free_phi1"] = floor.phi1;
    j["schedule_free_psi"] = floor.psi;
    json sweep = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const auto derived = fluid::greenwave_averages(p, r.delta);
      const auto gaps = fluid::optimality_gap(p, r.delta);
      json row;
      row["delta"] = r.delta;
      row["green"] = derived.green;
      row["red"] = derived.red;
      row["phi1_closed"] = r.phi1_closed;
      row["phi1_sim"] = r.phi1_sim;
      row["psi_closed"] = derived.psi;
      row["psi1_sim"] = r.psi1_sim;
      row["phi_downstream_max"] = r.phi_downstream_max;
      row["phi1_gap"] = gaps.phi1;
      row["psi_gap"] = gaps.psi;
      sweep.push_back(row);
    }
    j["sweep"] = sweep;
    root_["fluid"] = j;
  }

  void detect() {
    if (config_.trajectory.empty()) throw ConfigInvalid("detect-greenwave needs 'trajectory'");
    if (config_.scenario.nodes() < 2) {
      throw ConfigInvalid("detect-greenwave needs at least two intersections");
    }
    const auto episodes = read_trajectory_csv(config_.trajectory, config_.scenario.topology);
    json list = json::array();
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const auto phases = episodes[e].phases();
      const auto report = detect_greenwave(phases, config_.scenario.topology,
                                           config_.detect_window, config_.detect_threshold,
                                           config_.detect_max_lag);
      json row = to_json(report);
      row["episode"] = e;
      row["synchrony"] = synchrony_index(phases);
      list.push_back(row);
    }
    root_["episodes"] = list;
  }
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, Command command) {
  config.validate();
  Runner runner(config);
  return runner.run(command);
}

}  // namespace tlc
