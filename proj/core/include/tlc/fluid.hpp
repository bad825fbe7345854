#pragma once

#include <string>
#include <vector>

namespace tlc::fluid {

/// Deterministic fluid avenue: traffic enters node 0 at rate lambda0 and
/// crosses every node in order; cross traffic at node n arrives at lambda[n]
/// and leaves after that node. Service runs at unit rate.
struct Params {
  double lambda0 = 0.25;
  std::vector<double> lambda{0.25};
  double yellow = 1.0;
  double orange = 1.0;

  int nodes() const { return static_cast<int>(lambda.size()); }
  double lambda_max() const;
  double transition() const { return yellow + orange; }
  /// Throws ConfigInvalid unless every lambda0 + lambda_n < 1, all rates are
  /// non-negative and yellow, orange > 0.
  void validate() const;
};

/// Constant per-node cycle Yellow -> Red -> Orange -> Green. Node n starts its
/// first full cycle at time offset[n]; before that it is part-way through a
/// cycle.
struct Schedule {
  std::vector<double> green;
  std::vector<double> red;
  std::vector<double> offset;

  double cycle(const Params& p, int n) const { return green[n] + red[n] + p.transition(); }
  /// Throws ConfigInvalid on size mismatch, non-positive durations or offsets
  /// outside [0, cycle).
  void validate(const Params& p) const;
};

struct Stability {
  std::vector<bool> stable;           // both conditions hold at node n
  std::vector<double> avenue_margin;  // G_n / U_n - lambda0
  std::vector<double> cross_margin;   // R_n / U_n - lambda_n
  std::vector<double> min_cycle;      // (Y + O) / (1 - lambda0 - lambda_n)
  bool all() const;
};

Stability check_stability(const Params& p, const Schedule& s);

struct CycleBounds {
  double p = 1.0;
  double q = 1.0;
  double avenue = 0.0;  // lower bound on (G_n + Y + O)^2 / U_n
  double cross = 0.0;   // lower bound on (R_n + Y + O)^2 / U_n
  // False when the schedule sits at the equality point G_n = p (Y + O)
  // (resp. R_n = q (Y + O)).
  bool avenue_strict = true;
  bool cross_strict = true;
};

/// Throws UnstableSchedule when node n violates the stability conditions.
CycleBounds cycle_bounds(const Params& p, const Schedule& s, int n);

struct Bounds {
  double phi1 = 0.0;
  std::vector<double> psi;
};

/// Schedule-dependent lower bounds on the long-run averages:
///   phi1  >= lambda0 (R_1 + Y + O)^2 / (2 (1 - lambda0) U_1)
///   psi_n >= lambda_n (G_n + Y + O)^2 / (2 (1 - lambda_n) U_n)
Bounds schedule_lower_bounds(const Params& p, const Schedule& s);

/// Bounds valid for every stable schedule, obtained by minimising the
/// schedule-dependent ones over the stability region: phi1 pairs with the red
/// period of node 0 (q_0), psi_n with the green period of node n (p_n).
Bounds schedule_free_bounds(const Params& p);

/// Synchronised schedule with common G = lambda0 (1 + delta) (Y + O) / D and
/// R = lambda_max (1 + delta) (Y + O) / D, D = 1 - lambda0 - lambda_max.
Schedule greenwave_schedule(const Params& p, double delta);

struct GreenwaveDerived {
  double delta = 0.0;
  double green = 0.0;
  double red = 0.0;
  double cycle = 0.0;
  double phi1 = 0.0;
  std::vector<double> phi;  // phi[0] == phi1, zero downstream
  std::vector<double> psi;
  std::vector<double> p, q;
};

GreenwaveDerived greenwave_averages(const Params& p, double delta);

struct Gaps {
  double phi1 = 0.0;
  std::vector<double> psi;
};

/// Relative excess of the greenwave averages at `delta` over their delta = 0
/// values.
Gaps optimality_gap(const Params& p, double delta);

// ---------------------------------------------------------------------------

struct Breakpoint {
  double t;
  double value;
};

struct SimOptions {
  double horizon = 0.0;  // 0 picks 400 of the longest cycles
  bool keep_breakpoints = true;
  // A queue whose values at successive cycle starts rise strictly across the
  // whole averaging window, by more than this in total, is reported unstable.
  double divergence_bound = 1e-6;
  // Residual queues below this are treated as empty.
  double snap = 1e-12;
};

struct Trajectory {
  // Piecewise-linear queue paths (only when keep_breakpoints).
  std::vector<std::vector<Breakpoint>> avenue;
  std::vector<std::vector<Breakpoint>> cross;
  std::vector<double> avenue_average;
  std::vector<double> cross_average;
  // Largest avenue queue per node after the first cycle of that node.
  std::vector<double> avenue_peak_after_first_cycle;
  std::vector<double> window_start, window_end;  // averaging window per node
  double horizon = 0.0;
  long events = 0;
};

/// Exact event-driven integration from empty queues. Averages are taken over
/// a whole number of each node's cycles after dropping max(horizon / 10, two
/// cycles). Throws UnstableSchedule when a queue diverges.
Trajectory simulate(const Params& p, const Schedule& s, const SimOptions& options = {});

/// Integral of a piecewise-linear path over [a, b].
double integrate(const std::vector<Breakpoint>& path, double a, double b);

struct SweepRow {
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  double transition = 0.0;
  double delta = 0.0;
  double phi1_closed = 0.0;
  double psi1_closed = 0.0;
  double phi1_sim = 0.0;
  double psi1_sim = 0.0;
  double phi_downstream_max = 0.0;
  double phi1_gap = 0.0;
  double psi1_gap = 0.0;
};

/// Closed forms vs simulation of the greenwave schedule over `deltas`.
std::vector<SweepRow> sweep(const Params& p, const std::vector<double>& deltas,
                            double horizon_cycles = 400.0);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_breakpoints_csv(const std::string& path, const Trajectory& trajectory);

}  // namespace tlc::fluid
