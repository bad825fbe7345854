#include "tlc/env.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "tlc/errors.hpp"

namespace tlc {

Phase phase_from_int(int value) {
  if (value < 0 || value > 3) {
    throw std::invalid_argument("phase must be in 0..3, got " + std::to_string(value));
  }
  return static_cast<Phase>(value);
}

Phase advance_phase(Phase phase, int bit) {
  if (bit != 0 && bit != 1) {
    throw std::invalid_argument("action bit must be 0 or 1, got " + std::to_string(bit));
  }
  return static_cast<Phase>((to_int(phase) + bit) % 4);
}

Action::Action(std::vector<std::uint8_t> b) : bits(std::move(b)) {
  for (auto v : bits) {
    if (v > 1) throw std::invalid_argument("action bits must be 0 or 1");
  }
}

// ---------------------------------------------------------------------------

std::array<Count, 2> departures_single(const SingleState& state, const PassingRates& rates) {
  switch (state.phase) {
    case Phase::Green:
      return {std::min(rates.avenue, state.x1), 0};
    case Phase::Red:
      return {0, std::min(rates.cross, state.x2)};
    default:
      return {0, 0};
  }
}

double congestion_cost(const SingleState& state) {
  return static_cast<double>(state.x1 * state.x1 + state.x2 * state.x2);
}

SingleStepResult step_single(const SingleState& state, int bit, std::array<Count, 2> arrivals,
                             const PassingRates& rates) {
  if (arrivals[0] < 0 || arrivals[1] < 0) {
    throw std::invalid_argument("arrivals must be non-negative");
  }
  SingleStepResult out;
  out.departures = departures_single(state, rates);
  out.next.x1 = state.x1 + arrivals[0] - out.departures[0];
  out.next.x2 = state.x2 + arrivals[1] - out.departures[1];
  out.next.phase = advance_phase(state.phase, bit);
  out.reward = -congestion_cost(out.next);
  return out;
}

// ---------------------------------------------------------------------------

GridTopology::GridTopology(int avenues_, int cross_streets_)
    : avenues(avenues_), cross_streets(cross_streets_) {
  if (avenues < 1 || cross_streets < 1) {
    throw ConfigInvalid("grid topology needs at least one avenue and one cross street");
  }
}

GridState::GridState(GridTopology topo)
    : topology(topo),
      queues(static_cast<std::size_t>(topo.size()), Queues{}),
      phases(static_cast<std::size_t>(topo.size()), Phase::Green) {}

GridState to_grid(const SingleState& state) {
  GridState g(GridTopology(1, 1));
  g.queues[0] = {state.x1, state.x2, 0, 0};
  g.phases[0] = state.phase;
  return g;
}

double congestion_cost(const GridState& state) {
  Count total = 0;
  for (const auto& q : state.queues) {
    for (Count x : q) total += x * x;
  }
  return static_cast<double>(total);
}

Count total_queued(const GridState& state) {
  Count total = 0;
  for (const auto& q : state.queues) {
    for (Count x : q) total += x;
  }
  return total;
}

void ArrivalModel::validate() const {
  if (kind == ArrivalKind::Bernoulli) {
    if (!(avenue_p >= 0.0 && avenue_p <= 1.0) || !(cross_p >= 0.0 && cross_p <= 1.0)) {
      throw ConfigInvalid("Bernoulli arrival probabilities must lie in [0, 1]");
    }
  } else if (avenue_cap < 0 || cross_cap < 0) {
    throw ConfigInvalid("arrival caps must be non-negative");
  }
}

namespace {

Count draw(const ArrivalModel& model, bool avenue, Rng& rng) {
  if (model.kind == ArrivalKind::Bernoulli) {
    return rng.bernoulli(avenue ? model.avenue_p : model.cross_p) ? 1 : 0;
  }
  return rng.uniform_int(0, avenue ? model.avenue_cap : model.cross_cap);
}

bool is_entry(const GridTopology& topo, int n, int dir) {
  switch (dir) {
    case WestEast:
      return topo.col(n) == 0;
    case EastWest:
      return topo.col(n) == topo.cross_streets - 1;
    case NorthSouth:
      return topo.row(n) == 0;
    default:
      return topo.row(n) == topo.avenues - 1;
  }
}

// Downstream intersection for traffic leaving `n` in direction `dir`, or -1
// when it exits the network.
int downstream(const GridTopology& topo, int n, int dir) {
  const int r = topo.row(n);
  const int c = topo.col(n);
  switch (dir) {
    case WestEast:
      return c + 1 < topo.cross_streets ? topo.index(r, c + 1) : -1;
    case EastWest:
      return c > 0 ? topo.index(r, c - 1) : -1;
    case NorthSouth:
      return r + 1 < topo.avenues ? topo.index(r + 1, c) : -1;
    default:
      return r > 0 ? topo.index(r - 1, c) : -1;
  }
}

}  // namespace

std::array<Count, 2> sample_arrivals(const ArrivalModel& model, Rng& rng) {
  const Count c1 = draw(model, true, rng);
  const Count c2 = draw(model, false, rng);
  return {c1, c2};
}

std::vector<Queues> sample_arrivals(const ArrivalModel& model, const GridTopology& topology,
                                    Rng& rng) {
  std::vector<Queues> out(static_cast<std::size_t>(topology.size()), Queues{});
  for (int n = 0; n < topology.size(); ++n) {
    for (int dir = 0; dir < 4; ++dir) {
      if (model.mode == ArrivalMode::BoundaryChained && !is_entry(topology, n, dir)) continue;
      out[n][dir] = draw(model, is_avenue(dir), rng);
    }
  }
  return out;
}

GridStepResult step_grid(const GridState& state, const Action& action,
                         const std::vector<Queues>& external_arrivals, const PassingRates& rates,
                         ArrivalMode mode) {
  const int n_nodes = state.size();
  if (static_cast<int>(action.size()) != n_nodes) {
    throw ActionLengthMismatch("action has " + std::to_string(action.size()) +
                               " bits for " + std::to_string(n_nodes) + " intersections");
  }
  if (static_cast<int>(external_arrivals.size()) != n_nodes) {
    throw std::invalid_argument("arrival draw does not match the topology");
  }

  GridStepResult out;
  out.departures.assign(static_cast<std::size_t>(n_nodes), Queues{});
  for (int n = 0; n < n_nodes; ++n) {
    const auto& q = state.queues[n];
    auto& d = out.departures[n];
    if (state.phases[n] == Phase::Green) {
      d[WestEast] = std::min(rates.avenue, q[WestEast]);
      d[EastWest] = std::min(rates.avenue, q[EastWest]);
    } else if (state.phases[n] == Phase::Red) {
      d[NorthSouth] = std::min(rates.cross, q[NorthSouth]);
      d[SouthNorth] = std::min(rates.cross, q[SouthNorth]);
    }
  }

  out.next = state;
  for (int n = 0; n < n_nodes; ++n) {
    for (int dir = 0; dir < 4; ++dir) {
      const Count arrived = external_arrivals[n][dir];
      if (arrived < 0) throw std::invalid_argument("arrivals must be non-negative");
      out.next.queues[n][dir] += arrived - out.departures[n][dir];
    }
    out.next.phases[n] = advance_phase(state.phases[n], action[n]);
  }

  // Departures reach the next intersection at the start of the next slot,
  // i.e. they are part of its queue in the returned state.
  for (int n = 0; n < n_nodes; ++n) {
    for (int dir = 0; dir < 4; ++dir) {
      const Count d = out.departures[n][dir];
      if (d == 0) continue;
      const int next = mode == ArrivalMode::BoundaryChained ? downstream(state.topology, n, dir) : -1;
      if (next < 0) {
        out.exits += d;
      } else {
        out.next.queues[next][dir] += d;
      }
    }
  }
  out.reward = -congestion_cost(out.next);
  return out;
}

// ---------------------------------------------------------------------------

SingleIntersectionEnv::SingleIntersectionEnv(ArrivalModel arrivals, PassingRates rates, Rng rng)
    : arrivals_(arrivals), rates_(rates), rng_(std::move(rng)) {
  arrivals_.validate();
}

const SingleState& SingleIntersectionEnv::reset(const SingleState& initial) {
  state_ = initial;
  return state_;
}

SingleStepResult SingleIntersectionEnv::step(int bit) {
  auto result = step_single(state_, bit, sample_arrivals(arrivals_, rng_), rates_);
  state_ = result.next;
  return result;
}

GridEnv::GridEnv(GridTopology topology, ArrivalModel arrivals, PassingRates rates, Rng rng)
    : topology_(topology),
      arrivals_(arrivals),
      rates_(rates),
      rng_(std::move(rng)),
      state_(topology) {
  arrivals_.validate();
}

const GridState& GridEnv::reset() {
  state_ = GridState(topology_);
  return state_;
}

const GridState& GridEnv::reset(const GridState& initial) {
  if (!(initial.topology == topology_)) {
    throw std::invalid_argument("initial state topology does not match the environment");
  }
  state_ = initial;
  return state_;
}

GridStepResult GridEnv::step(const Action& action) {
  auto result = step_grid(state_, action, sample_arrivals(arrivals_, topology_, rng_), rates_,
                          arrivals_.mode);
  state_ = result.next;
  return result;
}

}  // namespace tlc
