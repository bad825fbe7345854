#include "tlc/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "tlc/errors.hpp"

namespace tlc {

int FixedCycleSpec::dwell(Phase p) const {
  switch (p) {
    case Phase::Green:
      return green;
    case Phase::Yellow:
      return yellow;
    case Phase::Red:
      return red;
    case Phase::Orange:
      return orange;
  }
  return 1;
}

void FixedCycleSpec::validate() const {
  if (green < 1 || yellow < 1 || red < 1 || orange < 1) {
    throw ConfigInvalid("fixed-cycle dwells must all be at least one slot");
  }
  for (int o : offsets) {
    if (o < 0) throw ConfigInvalid("fixed-cycle offsets must be non-negative");
  }
}

FixedCyclePolicy::FixedCyclePolicy(FixedCycleSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

void FixedCyclePolicy::reset() { held_.clear(); }

Action FixedCyclePolicy::act(const GridState& state) {
  const auto n = static_cast<std::size_t>(state.size());
  if (held_.empty()) {
    held_.assign(n, 0);
    for (std::size_t i = 0; i < n && i < spec_.offsets.size(); ++i) held_[i] = -spec_.offsets[i];
  } else if (held_.size() != n) {
    throw ActionLengthMismatch("fixed-cycle policy was started on a different topology");
  }
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (++held_[i] >= spec_.dwell(state.phases[i])) {
      bits[i] = 1;
      held_[i] = 0;
    }
  }
  return Action(std::move(bits));
}

// ---------------------------------------------------------------------------

void ThresholdSpec::validate() const {
  if (tau0 < 0 || tau2 < 0) throw ConfigInvalid("thresholds must be non-negative");
}

int threshold_bit(const ThresholdSpec& spec, Count x1, Count x2, Phase phase) {
  switch (phase) {
    case Phase::Green:
      return x2 - x1 >= spec.tau0 ? 1 : 0;
    case Phase::Red:
      return x1 - x2 >= spec.tau2 ? 1 : 0;
    default:
      return 1;
  }
}

ThresholdPolicy::ThresholdPolicy(ThresholdSpec spec) : spec_(spec) { spec_.validate(); }

Action ThresholdPolicy::act(const GridState& state) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(state.size()));
  for (int n = 0; n < state.size(); ++n) {
    const auto& q = state.queues[n];
    bits[n] = static_cast<std::uint8_t>(
        threshold_bit(spec_, q[WestEast] + q[EastWest], q[NorthSouth] + q[SouthNorth], state.phases[n]));
  }
  return Action(std::move(bits));
}

// ---------------------------------------------------------------------------

void GreenwaveSpec::validate() const {
  if (critical < 0) throw ConfigInvalid("greenwave critical value must be non-negative");
  if (green < 1 || yellow < 1 || red < 1 || orange < 1) {
    throw ConfigInvalid("greenwave dwells must all be at least one slot");
  }
}

GreenwavePolicy::GreenwavePolicy(GreenwaveSpec spec) : spec_(spec) { spec_.validate(); }

void GreenwavePolicy::reset() {
  held_ = 0;
  desync_events_ = 0;
}

Action GreenwavePolicy::act(const GridState& state) {
  const auto n = static_cast<std::size_t>(state.size());
  const Phase phase = state.phases.front();
  const bool in_step = std::all_of(state.phases.begin(), state.phases.end(),
                                   [&](Phase p) { return p == phase; });
  if (!in_step) {
    ++desync_events_;
    held_ = 0;
    return Action(std::vector<std::uint8_t>(n, 1));
  }

  int bit = 0;
  if (spec_.mode == GreenwaveMode::Scheduled) {
    const FixedCycleSpec dwells{spec_.green, spec_.yellow, spec_.red, spec_.orange, {}};
    if (++held_ >= dwells.dwell(phase)) {
      bit = 1;
      held_ = 0;
    }
  } else {
    Count avenue = 0, cross = 0;
    for (const auto& q : state.queues) {
      avenue += q[WestEast] + q[EastWest];
      cross += q[NorthSouth] + q[SouthNorth];
    }
    bit = threshold_bit({spec_.critical, spec_.critical}, avenue, cross, phase);
  }
  return Action(std::vector<std::uint8_t>(n, static_cast<std::uint8_t>(bit)));
}

// ---------------------------------------------------------------------------

namespace {

SingleState node_zero(const GridState& state) {
  if (state.size() != 1) {
    throw ActionLengthMismatch("single-intersection policy driven on a " +
                               std::to_string(state.size()) + "-node network");
  }
  const auto& q = state.queues[0];
  return {q[WestEast], q[NorthSouth], state.phases[0]};
}

}  // namespace

TablePolicy::TablePolicy(PolicyTable table) : table_(std::move(table)) {}

Action TablePolicy::act(const GridState& state) {
  return Action::single(table_.action(node_zero(state)));
}

DqnPolicy::DqnPolicy(std::shared_ptr<const DqnAgent> agent) : agent_(std::move(agent)) {
  if (!agent_) throw std::invalid_argument("null agent");
}

Action DqnPolicy::act(const GridState& state) {
  return Action::single(agent_->greedy(node_zero(state)));
}

DdpgPolicy::DdpgPolicy(std::shared_ptr<DdpgAgent> agent) : agent_(std::move(agent)) {
  if (!agent_) throw std::invalid_argument("null agent");
}

Action DdpgPolicy::act(const GridState& state) {
  return agent_->select(state, false, unused_).action;
}

RandomPolicy::RandomPolicy(Rng rng) : initial_(rng), rng_(std::move(rng)) {}

void RandomPolicy::reset() { rng_ = initial_; }

Action RandomPolicy::act(const GridState& state) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(state.size()));
  for (auto& b : bits) b = rng_.bernoulli(0.5) ? 1 : 0;
  return Action(std::move(bits));
}

PolicyTable tabulate(const DqnAgent& agent, const TruncatedSpace& space) {
  std::vector<std::uint8_t> actions(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    actions[i] = static_cast<std::uint8_t>(agent.greedy(space.state(i)));
  }
  return PolicyTable(space, std::move(actions));
}

}  // namespace tlc
