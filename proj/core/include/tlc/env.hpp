#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tlc/rng.hpp"

namespace tlc {

using Count = std::int64_t;

/// Light configuration at one intersection. The only legal moves are
/// "stay" and "advance to the next value mod 4".
enum class Phase : std::uint8_t {
  Green = 0,   // avenue green, cross red
  Yellow = 1,  // avenue yellow, cross red
  Red = 2,     // avenue red, cross green
  Orange = 3,  // avenue red, cross yellow
};

inline int to_int(Phase p) { return static_cast<int>(p); }
Phase phase_from_int(int value);

/// (phase + bit) mod 4. `bit` must be 0 (continue) or 1 (switch).
Phase advance_phase(Phase phase, int bit);

/// One continue/switch bit per controlled intersection.
struct Action {
  std::vector<std::uint8_t> bits;

  Action() = default;
  explicit Action(std::vector<std::uint8_t> b);
  static Action single(int bit) { return Action({static_cast<std::uint8_t>(bit)}); }

  std::size_t size() const { return bits.size(); }
  int operator[](std::size_t i) const { return bits[i]; }
  bool operator==(const Action&) const = default;
};

struct PassingRates {
  Count avenue = 1;
  Count cross = 1;
};

// ---------------------------------------------------------------------------
// Single intersection: flow 1 is the avenue (west->east), flow 2 the cross
// street (north->south).

struct SingleState {
  Count x1 = 0;
  Count x2 = 0;
  Phase phase = Phase::Green;

  bool operator==(const SingleState&) const = default;
};

struct SingleStepResult {
  SingleState next;
  double reward = 0.0;
  std::array<Count, 2> departures{};
};

/// Vehicles served this slot under the current light (computed before the
/// slot's arrivals join the queue).
std::array<Count, 2> departures_single(const SingleState& state, const PassingRates& rates);

/// One slot of the single-intersection dynamics for a given arrival draw.
SingleStepResult step_single(const SingleState& state, int bit, std::array<Count, 2> arrivals,
                             const PassingRates& rates = {});

double congestion_cost(const SingleState& state);

// ---------------------------------------------------------------------------
// Grid of `avenues` horizontal roads crossing `cross_streets` vertical roads.
// Intersections are indexed row-major; a linear avenue is avenues == 1.

struct GridTopology {
  int avenues = 1;
  int cross_streets = 1;

  GridTopology() = default;
  GridTopology(int avenues_, int cross_streets_);

  int size() const { return avenues * cross_streets; }
  int index(int row, int col) const { return row * cross_streets + col; }
  int row(int n) const { return n / cross_streets; }
  int col(int n) const { return n % cross_streets; }
  bool operator==(const GridTopology&) const = default;
};

/// Queue directions at an intersection.
enum Direction : int {
  WestEast = 0,    // avenue
  NorthSouth = 1,  // cross street
  EastWest = 2,    // avenue
  SouthNorth = 3,  // cross street
};

inline bool is_avenue(int dir) { return dir == WestEast || dir == EastWest; }

using Queues = std::array<Count, 4>;

struct GridState {
  GridTopology topology;
  std::vector<Queues> queues;
  std::vector<Phase> phases;

  GridState() = default;
  explicit GridState(GridTopology topo);

  int size() const { return topology.size(); }
  bool operator==(const GridState&) const = default;
};

/// Lift a single intersection into the grid representation (x1 on the
/// west->east queue, x2 on the north->south queue) so the same policies can
/// drive both scenarios.
GridState to_grid(const SingleState& state);

double congestion_cost(const GridState& state);
Count total_queued(const GridState& state);

enum class ArrivalMode {
  // External traffic enters only at the network boundary; departures travel
  // one slot to the next intersection in the same direction.
  BoundaryChained,
  // Every intersection draws its own external arrivals; departures leave.
  PerIntersection,
};

enum class ArrivalKind { Bernoulli, BoundedUniform };

struct ArrivalModel {
  ArrivalKind kind = ArrivalKind::Bernoulli;
  double avenue_p = 0.25;
  double cross_p = 0.25;
  Count avenue_cap = 8;
  Count cross_cap = 2;
  ArrivalMode mode = ArrivalMode::BoundaryChained;

  void validate() const;
};

/// Draws for flows (avenue, cross) of a single intersection.
std::array<Count, 2> sample_arrivals(const ArrivalModel& model, Rng& rng);

/// External arrivals for every (intersection, direction). In boundary-chained
/// mode interior entries are zero.
std::vector<Queues> sample_arrivals(const ArrivalModel& model, const GridTopology& topology,
                                    Rng& rng);

struct GridStepResult {
  GridState next;
  double reward = 0.0;
  std::vector<Queues> departures;
  // Vehicles that left the network this slot.
  Count exits = 0;
};

/// One slot of the grid dynamics. Throws ActionLengthMismatch when the action
/// does not carry exactly one bit per intersection.
GridStepResult step_grid(const GridState& state, const Action& action,
                         const std::vector<Queues>& external_arrivals, const PassingRates& rates,
                         ArrivalMode mode);

// ---------------------------------------------------------------------------

class SingleIntersectionEnv {
 public:
  SingleIntersectionEnv(ArrivalModel arrivals, PassingRates rates, Rng rng);

  const SingleState& reset(const SingleState& initial = {});
  SingleStepResult step(int bit);

  const SingleState& state() const { return state_; }
  const PassingRates& rates() const { return rates_; }

 private:
  ArrivalModel arrivals_;
  PassingRates rates_;
  Rng rng_;
  SingleState state_;
};

class GridEnv {
 public:
  GridEnv(GridTopology topology, ArrivalModel arrivals, PassingRates rates, Rng rng);

  const GridState& reset();
  const GridState& reset(const GridState& initial);
  GridStepResult step(const Action& action);

  const GridState& state() const { return state_; }
  const GridTopology& topology() const { return topology_; }
  const ArrivalModel& arrivals() const { return arrivals_; }

 private:
  GridTopology topology_;
  ArrivalModel arrivals_;
  PassingRates rates_;
  Rng rng_;
  GridState state_;
};

}  // namespace tlc
