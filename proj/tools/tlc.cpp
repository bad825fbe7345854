// Command-line front end: one subcommand per experiment kind.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlc/config.hpp"
#include "tlc/errors.hpp"
#include "tlc/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNonConvergence = 3;

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::vector<std::string> overrides;
};

tlc::ExperimentConfig build_config(const CommonFlags& flags) {
  tlc::ConfigMap map;
  if (!flags.config_path.empty()) map = tlc::ConfigMap::load(flags.config_path);
  for (const auto& o : flags.overrides) map.apply_override(o);
  if (flags.seed_given) map.set("seed", std::to_string(flags.seed));
  if (!flags.out.empty()) map.set("out", flags.out);
  return tlc::make_config(map);
}

void print_summary(const tlc::RunResult& result, const std::string& out_dir) {
  for (const auto& m : result.policies) {
    std::cout << m.policy << ": average_queue=" << m.average_queue
              << " discounted_cost=" << m.discounted_cost << " throughput=" << m.throughput;
    if (m.has_synchrony) {
      std::cout << " synchrony=" << m.synchrony
                << " greenwave=" << (m.greenwave.flag ? "yes" : "no");
    }
    std::cout << "\n";
  }
  for (const auto& a : result.artifacts) std::cout << "wrote " << out_dir << "/" << a << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic light control experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  struct Entry {
    tlc::Command command;
    const char* name;
    const char* help;
  };
  const std::vector<Entry> entries = {
      {tlc::Command::Simulate, "simulate", "Evaluate the configured policy"},
      {tlc::Command::SolveMdp, "solve-mdp", "Solve the single-intersection MDP exactly"},
      {tlc::Command::TrainDqn, "train-dqn", "Train DQN on the single intersection"},
      {tlc::Command::TrainDdpg, "train-ddpg", "Train DDPG on an avenue or grid"},
      {tlc::Command::Eval, "eval", "Evaluate a policy, loading 'checkpoint' for learned ones"},
      {tlc::Command::AnalyzeFluid, "analyze-fluid", "Greenwave closed forms vs fluid simulation"},
      {tlc::Command::DetectGreenwave, "detect-greenwave", "Scan a trajectory CSV for greenwaves"},
      {tlc::Command::Compare, "compare", "Evaluate several policies on the same traffic"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", flags.config_path, "key = value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed (overrides the config)")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
    sub->add_option("--out", flags.out, "output directory (overrides the config)");
    sub->add_option("--override", flags.overrides, "key=value, repeatable")->take_all();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  std::size_t chosen = 0;
  for (; chosen < subs.size(); ++chosen) {
    if (subs[chosen]->parsed()) break;
  }

  try {
    const auto config = build_config(flags);
    const auto result = tlc::run_experiment(config, entries[chosen].command);
    print_summary(result, config.out_dir);
    return 0;
  } catch (const tlc::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tlc::CheckpointIncompatible& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tlc::NonConvergence& e) {
    std::cerr << "did not converge: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const tlc::UnstableSchedule& e) {
    std::cerr << "unstable: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const tlc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
