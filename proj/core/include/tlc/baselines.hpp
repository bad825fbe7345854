#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tlc/agents.hpp"
#include "tlc/env.hpp"
#include "tlc/mdp.hpp"
#include "tlc/rng.hpp"

namespace tlc {

/// Controller interface shared by baselines and trained agents. Policies are
/// state machines: act() may advance internal counters, reset() rewinds them.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const GridState& state) = 0;
  virtual void reset() {}
  virtual std::string name() const = 0;
};

struct FixedCycleSpec {
  int green = 5;
  int yellow = 1;
  int red = 5;
  int orange = 1;
  // Extra slots node n holds its first phase; empty means no offsets.
  std::vector<int> offsets;

  int period() const { return green + yellow + red + orange; }
  int dwell(Phase p) const;
  void validate() const;
};

/// Switches exactly when the observed phase has been held for its configured
/// number of slots. Ignores queues.
class FixedCyclePolicy : public Policy {
 public:
  explicit FixedCyclePolicy(FixedCycleSpec spec);
  Action act(const GridState& state) override;
  void reset() override;
  std::string name() const override { return "fixed_cycle"; }

 private:
  FixedCycleSpec spec_;
  std::vector<int> held_;
};

struct ThresholdSpec {
  int tau0 = 3;  // in green: switch once x2 - x1 >= tau0
  int tau2 = 3;  // in red: switch once x1 - x2 >= tau2
  void validate() const;
};

/// Per-node queue-difference rule; x1 is the node's total avenue queue and x2
/// its total cross queue. Transitional phases are always cleared.
int threshold_bit(const ThresholdSpec& spec, Count x1, Count x2, Phase phase);

class ThresholdPolicy : public Policy {
 public:
  explicit ThresholdPolicy(ThresholdSpec spec);
  Action act(const GridState& state) override;
  std::string name() const override { return "threshold"; }

 private:
  ThresholdSpec spec_;
};

enum class GreenwaveMode { Aggregate, Scheduled };

struct GreenwaveSpec {
  GreenwaveMode mode = GreenwaveMode::Aggregate;
  // Aggregate mode: switch once the waiting side's total queue exceeds the
  // served side's by at least this much.
  int critical = 5;
  // Scheduled mode dwells.
  int green = 1;
  int yellow = 1;
  int red = 1;
  int orange = 1;
  void validate() const;
};

/// Every node gets the same bit. If the phases are found out of step, all
/// nodes are told to switch and the event is counted.
class GreenwavePolicy : public Policy {
 public:
  explicit GreenwavePolicy(GreenwaveSpec spec);
  Action act(const GridState& state) override;
  void reset() override;
  std::string name() const override { return "greenwave"; }
  long desync_events() const { return desync_events_; }

 private:
  GreenwaveSpec spec_;
  int held_ = 0;
  long desync_events_ = 0;
};

/// Looks up a solved table at node 0 (x1 = west->east, x2 = north->south).
class TablePolicy : public Policy {
 public:
  explicit TablePolicy(PolicyTable table);
  Action act(const GridState& state) override;
  std::string name() const override { return "mdp"; }
  const PolicyTable& table() const { return table_; }

 private:
  PolicyTable table_;
};

/// Greedy DQN on a single intersection.
class DqnPolicy : public Policy {
 public:
  explicit DqnPolicy(std::shared_ptr<const DqnAgent> agent);
  Action act(const GridState& state) override;
  std::string name() const override { return "dqn"; }

 private:
  std::shared_ptr<const DqnAgent> agent_;
};

/// Noise-free DDPG actor with node-wise binarization.
class DdpgPolicy : public Policy {
 public:
  explicit DdpgPolicy(std::shared_ptr<DdpgAgent> agent);
  Action act(const GridState& state) override;
  std::string name() const override { return "ddpg"; }

 private:
  std::shared_ptr<DdpgAgent> agent_;
  Rng unused_{0};
};

/// Independent fair coin per node.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(Rng rng);
  Action act(const GridState& state) override;
  void reset() override;
  std::string name() const override { return "random"; }

 private:
  Rng initial_;
  Rng rng_;
};

/// Greedy table of a trained DQN over a truncated space.
PolicyTable tabulate(const DqnAgent& agent, const TruncatedSpace& space);

}  // namespace tlc
