#include "tlc/fluid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tlc/errors.hpp"

namespace tlc::fluid {

double Params::lambda_max() const {
  return lambda.empty() ? 0.0 : *std::max_element(lambda.begin(), lambda.end());
}

void Params::validate() const {
  if (lambda.empty()) throw ConfigInvalid("fluid model needs at least one node");
  if (!(lambda0 >= 0.0)) throw ConfigInvalid("avenue rate must be non-negative");
  if (!(yellow > 0.0) || !(orange > 0.0)) {
    throw ConfigInvalid("yellow and orange durations must be positive");
  }
  for (std::size_t n = 0; n < lambda.size(); ++n) {
    if (!(lambda[n] >= 0.0)) throw ConfigInvalid("cross rates must be non-negative");
    if (!(lambda0 + lambda[n] < 1.0)) {
      throw ConfigInvalid("lambda0 + lambda_" + std::to_string(n + 1) + " = " +
                          std::to_string(lambda0 + lambda[n]) + " must be below 1");
    }
  }
}

void Schedule::validate(const Params& p) const {
  const auto n = static_cast<std::size_t>(p.nodes());
  if (green.size() != n || red.size() != n || offset.size() != n) {
    throw ConfigInvalid("schedule size does not match the number of nodes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(green[i] > 0.0) || !(red[i] > 0.0)) {
      throw ConfigInvalid("green and red durations must be positive");
    }
    if (!(offset[i] >= 0.0 && offset[i] < cycle(p, static_cast<int>(i)))) {
      throw ConfigInvalid("offsets must lie in [0, cycle)");
    }
  }
}

bool Stability::all() const {
  return std::all_of(stable.begin(), stable.end(), [](bool b) { return b; });
}

namespace {

constexpr double kRatioTol = 1e-12;

double dwell_factor(double rate, double other, double transition, double& k) {
  k = std::max(1.0, rate / (1.0 - rate - other));
  return rate * (k + 1.0) * (k + 1.0) * transition / k;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(b)); }

}  // namespace

Stability check_stability(const Params& p, const Schedule& s) {
  p.validate();
  s.validate(p);
  Stability out;
  for (int n = 0; n < p.nodes(); ++n) {
    const double u = s.cycle(p, n);
    out.avenue_margin.push_back(s.green[n] / u - p.lambda0);
    out.cross_margin.push_back(s.red[n] / u - p.lambda[n]);
    out.min_cycle.push_back(p.transition() / (1.0 - p.lambda0 - p.lambda[n]));
    out.stable.push_back(out.avenue_margin.back() >= -kRatioTol &&
                         out.cross_margin.back() >= -kRatioTol);
  }
  return out;
}

CycleBounds cycle_bounds(const Params& p, const Schedule& s, int n) {
  const auto st = check_stability(p, s);
  if (n < 0 || n >= p.nodes()) throw std::out_of_range("node index out of range");
  if (!st.stable[n]) throw UnstableSchedule("node " + std::to_string(n) + " is not stable");
  CycleBounds out;
  const double t = p.transition();
  out.avenue = dwell_factor(p.lambda0, p.lambda[n], t, out.p);
  out.cross = dwell_factor(p.lambda[n], p.lambda0, t, out.q);
  out.avenue_strict = !near(s.green[n], out.p * t);
  out.cross_strict = !near(s.red[n], out.q * t);
  return out;
}

Bounds schedule_lower_bounds(const Params& p, const Schedule& s) {
  const auto st = check_stability(p, s);
  if (!st.all()) throw UnstableSchedule("lower bounds need a stable schedule");
  const double t = p.transition();
  Bounds out;
  const double non_green = s.red[0] + t;
  out.phi1 = p.lambda0 * non_green * non_green / (2.0 * (1.0 - p.lambda0) * s.cycle(p, 0));
  for (int n = 0; n < p.nodes(); ++n) {
    const double non_red = s.green[n] + t;
    out.psi.push_back(p.lambda[n] * non_red * non_red /
                      (2.0 * (1.0 - p.lambda[n]) * s.cycle(p, n)));
  }
  return out;
}

Bounds schedule_free_bounds(const Params& p) {
  p.validate();
  const double t = p.transition();
  Bounds out;
  double k = 1.0;
  out.phi1 = p.lambda0 / (2.0 * (1.0 - p.lambda0)) * dwell_factor(p.lambda[0], p.lambda0, t, k);
  for (int n = 0; n < p.nodes(); ++n) {
    out.psi.push_back(p.lambda[n] / (2.0 * (1.0 - p.lambda[n])) *
                      dwell_factor(p.lambda0, p.lambda[n], t, k));
  }
  return out;
}

Schedule greenwave_schedule(const Params& p, double delta) {
  p.validate();
  if (!(delta >= 0.0)) throw ConfigInvalid("delta must be non-negative");
  const double d = 1.0 - p.lambda0 - p.lambda_max();
  const double g = p.lambda0 * (1.0 + delta) * p.transition() / d;
  const double r = p.lambda_max() * (1.0 + delta) * p.transition() / d;
  if (!(g > 0.0) || !(r > 0.0)) {
    throw ConfigInvalid("greenwave schedule needs positive avenue and cross rates");
  }
  const auto n = static_cast<std::size_t>(p.nodes());
  return {std::vector<double>(n, g), std::vector<double>(n, r), std::vector<double>(n, 0.0)};
}

GreenwaveDerived greenwave_averages(const Params& p, double delta) {
  const Schedule s = greenwave_schedule(p, delta);
  const double t = p.transition();
  GreenwaveDerived out;
  out.delta = delta;
  out.green = s.green[0];
  out.red = s.red[0];
  out.cycle = s.cycle(p, 0);
  out.phi1 = p.lambda0 * (out.red + t) * (out.red + t) / (2.0 * (1.0 - p.lambda0) * out.cycle);
  out.phi.assign(static_cast<std::size_t>(p.nodes()), 0.0);
  out.phi[0] = out.phi1;
  for (int n = 0; n < p.nodes(); ++n) {
    out.psi.push_back(p.lambda[n] * (out.green + t) * (out.green + t) /
                      (2.0 * (1.0 - p.lambda[n]) * out.cycle));
    double k = 1.0;
    dwell_factor(p.lambda0, p.lambda[n], t, k);
    out.p.push_back(k);
    dwell_factor(p.lambda[n], p.lambda0, t, k);
    out.q.push_back(k);
  }
  return out;
}

Gaps optimality_gap(const Params& p, double delta) {
  const auto at = greenwave_averages(p, delta);
  const auto base = greenwave_averages(p, 0.0);
  auto rel = [](double x, double x0) { return x0 > 0.0 ? (x - x0) / x0 : 0.0; };
  Gaps out;
  out.phi1 = rel(at.phi1, base.phi1);
  for (std::size_t n = 0; n < at.psi.size(); ++n) out.psi.push_back(rel(at.psi[n], base.psi[n]));
  return out;
}

// ---------------------------------------------------------------------------

double integrate(const std::vector<Breakpoint>& path, double a, double b) {
  if (b < a) throw std::invalid_argument("integration bounds reversed");
  if (path.empty() || a < path.front().t || b > path.back().t + 1e-9 * (1.0 + path.back().t)) {
    throw std::out_of_range("integration window outside the recorded path");
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const auto& p0 = path[i];
    const auto& p1 = path[i + 1];
    const double lo = std::max(a, p0.t);
    const double hi = std::min(b, p1.t);
    if (hi <= lo) continue;
    const double span = p1.t - p0.t;
    auto at = [&](double x) { return p0.value + (p1.value - p0.value) * (x - p0.t) / span; };
    total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
  }
  return total;
}

namespace {

enum Light { kYellow = 0, kRed = 1, kOrange = 2, kGreen = 3 };

struct NodeClock {
  std::array<double, 4> duration{};
  int light = kYellow;
  double next = 0.0;  // time of the next light change
};

class Recorder {
 public:
  void record(double t, double value, double slope, bool force) {
    if (force || points_.empty() || slope != last_slope_) {
      if (!points_.empty() && points_.back().t == t) {
        points_.back().value = value;
      } else {
        points_.push_back({t, value});
      }
    }
    last_slope_ = slope;
  }
  std::vector<Breakpoint>& points() { return points_; }

 private:
  std::vector<Breakpoint> points_;
  double last_slope_ = std::numeric_limits<double>::quiet_NaN();
};

double peak_after(const std::vector<Breakpoint>& path, double from) {
  double peak = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i].t >= from) {
      peak = std::max(peak, path[i].value);
    } else if (i + 1 < path.size() && path[i + 1].t > from) {
      const auto& p0 = path[i];
      const auto& p1 = path[i + 1];
      peak = std::max(peak, p0.value + (p1.value - p0.value) * (from - p0.t) / (p1.t - p0.t));
    }
  }
  return peak;
}

void check_divergence(const std::vector<std::pair<double, double>>& starts, double a, double b,
                      double bound, const std::string& what) {
  std::vector<double> values;
  for (const auto& [t, v] : starts) {
    if (t >= a - 1e-9 && t <= b + 1e-9) values.push_back(v);
  }
  if (values.size() < 3) return;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) return;
  }
  if (values.back() - values.front() > bound) {
    throw UnstableSchedule(what + " grows every cycle (" + std::to_string(values.front()) +
                           " -> " + std::to_string(values.back()) + ")");
  }
}

}  // namespace

Trajectory simulate(const Params& p, const Schedule& s, const SimOptions& options) {
  p.validate();
  s.validate(p);
  const int n_nodes = p.nodes();
  double max_cycle = 0.0;
  for (int n = 0; n < n_nodes; ++n) max_cycle = std::max(max_cycle, s.cycle(p, n));
  const double horizon = options.horizon > 0.0 ? options.horizon : 400.0 * max_cycle;
  if (horizon < 3.0 * max_cycle) {
    throw ConfigInvalid("fluid horizon must cover at least three of the longest cycles");
  }

  std::vector<NodeClock> clocks(static_cast<std::size_t>(n_nodes));
  for (int n = 0; n < n_nodes; ++n) {
    auto& c = clocks[n];
    c.duration = {p.yellow, s.red[n], p.orange, s.green[n]};
    const double u = s.cycle(p, n);
    const double pos = s.offset[n] > 0.0 ? u - s.offset[n] : 0.0;
    double edge = 0.0;
    for (int k = 0; k < 4; ++k) {
      edge += c.duration[k];
      if (pos < edge || k == 3) {
        c.light = k;
        c.next = edge - pos;
        break;
      }
    }
  }

  std::vector<double> phi(n_nodes, 0.0), psi(n_nodes, 0.0);
  std::vector<double> phi_slope(n_nodes, 0.0), psi_slope(n_nodes, 0.0);
  std::vector<Recorder> phi_path(n_nodes), psi_path(n_nodes);
  std::vector<bool> phi_snapped(n_nodes, false), psi_snapped(n_nodes, false);
  std::vector<std::vector<std::pair<double, double>>> phi_starts(n_nodes), psi_starts(n_nodes);
  for (int n = 0; n < n_nodes; ++n) {
    if (s.offset[n] == 0.0) {
      phi_starts[n].push_back({0.0, 0.0});
      psi_starts[n].push_back({0.0, 0.0});
    }
  }

  Trajectory out;
  out.horizon = horizon;
  double t = 0.0;
  while (true) {
    double inflow = p.lambda0;
    for (int n = 0; n < n_nodes; ++n) {
      const int light = clocks[n].light;
      const double served = light == kGreen ? (phi[n] > 0.0 ? 1.0 : inflow) : 0.0;
      phi_slope[n] = inflow - served;
      inflow = served;
      const double cleared = light == kRed ? (psi[n] > 0.0 ? 1.0 : p.lambda[n]) : 0.0;
      psi_slope[n] = p.lambda[n] - cleared;
      const bool last = t >= horizon;
      phi_path[n].record(t, phi[n], phi_slope[n], phi_snapped[n] || last);
      psi_path[n].record(t, psi[n], psi_slope[n], psi_snapped[n] || last);
      if (phi[n] > 1e12 || psi[n] > 1e12) throw UnstableSchedule("fluid queue diverged");
    }
    if (t >= horizon) break;

    double t_next = horizon;
    for (const auto& c : clocks) t_next = std::min(t_next, c.next);
    for (int n = 0; n < n_nodes; ++n) {
      if (phi_slope[n] < 0.0) t_next = std::min(t_next, t + phi[n] / -phi_slope[n]);
      if (psi_slope[n] < 0.0) t_next = std::min(t_next, t + psi[n] / -psi_slope[n]);
    }
    const double tol = 1e-11 * std::max(1.0, t_next);
    const double dt = t_next - t;

    auto advance = [&](double& x, double slope, bool& snapped) {
      snapped = false;
      if (slope < 0.0 && (t + x / -slope <= t_next + tol || x + slope * dt <= options.snap)) {
        x = 0.0;
        snapped = true;
      } else {
        x = std::max(0.0, x + slope * dt);
      }
    };
    for (int n = 0; n < n_nodes; ++n) {
      bool snapped = false;
      advance(phi[n], phi_slope[n], snapped);
      phi_snapped[n] = snapped;
      advance(psi[n], psi_slope[n], snapped);
      psi_snapped[n] = snapped;
    }
    t = t_next;

    for (int n = 0; n < n_nodes; ++n) {
      auto& c = clocks[n];
      if (c.next <= t + tol) {
        c.light = (c.light + 1) % 4;
        c.next += c.duration[c.light];
        phi_snapped[n] = true;  // keep a breakpoint at every light change
        psi_snapped[n] = true;
        if (c.light == kYellow) {
          phi_starts[n].push_back({t, phi[n]});
          psi_starts[n].push_back({t, psi[n]});
        }
      }
    }
    ++out.events;
  }

  const double warm = std::ceil(horizon / 10.0);
  for (int n = 0; n < n_nodes; ++n) {
    const double u = s.cycle(p, n);
    const double lead = std::max(warm, 2.0 * u);
    const double a = s.offset[n] + std::ceil((lead - s.offset[n]) / u) * u;
    const double cycles = std::floor((horizon - a) / u + 1e-9);
    if (cycles < 1.0) throw ConfigInvalid("fluid horizon leaves no full averaging cycle");
    const double b = a + cycles * u;
    out.window_start.push_back(a);
    out.window_end.push_back(b);
    const auto& ap = phi_path[n].points();
    const auto& cp = psi_path[n].points();
    out.avenue_average.push_back(integrate(ap, a, b) / (b - a));
    out.cross_average.push_back(integrate(cp, a, b) / (b - a));
    out.avenue_peak_after_first_cycle.push_back(peak_after(ap, s.offset[n] + u));
    check_divergence(phi_starts[n], a, b, options.divergence_bound,
                     "avenue queue at node " + std::to_string(n));
    check_divergence(psi_starts[n], a, b, options.divergence_bound,
                     "cross queue at node " + std::to_string(n));
  }
  if (options.keep_breakpoints) {
    for (int n = 0; n < n_nodes; ++n) {
      out.avenue.push_back(std::move(phi_path[n].points()));
      out.cross.push_back(std::move(psi_path[n].points()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep(const Params& p, const std::vector<double>& deltas,
                            double horizon_cycles) {
  std::vector<SweepRow> rows;
  for (double delta : deltas) {
    const auto closed = greenwave_averages(p, delta);
    const auto gaps = optimality_gap(p, delta);
    SimOptions opt;
    opt.horizon = horizon_cycles * closed.cycle;
    opt.keep_breakpoints = false;
    const auto sim = simulate(p, greenwave_schedule(p, delta), opt);
    SweepRow row;
    row.lambda0 = p.lambda0;
    row.lambda1 = p.lambda[0];
    row.transition = p.transition();
    row.delta = delta;
    row.phi1_closed = closed.phi1;
    row.psi1_closed = closed.psi[0];
    row.phi1_sim = sim.avenue_average[0];
    row.psi1_sim = sim.cross_average[0];
    for (std::size_t n = 1; n < sim.avenue_peak_after_first_cycle.size(); ++n) {
      row.phi_downstream_max = std::max(row.phi_downstream_max, sim.avenue_peak_after_first_cycle[n]);
    }
    row.phi1_gap = gaps.phi1;
    row.psi1_gap = gaps.psi[0];
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "lambda0,lambda1,transition,delta,phi1_closed,psi1_closed,phi1_sim,psi1_sim,"
         "phi_downstream_max,phi1_gap,psi1_gap\n";
  for (const auto& r : rows) {
    out << r.lambda0 << ',' << r.lambda1 << ',' << r.transition << ',' << r.delta << ','
        << r.phi1_closed << ',' << r.psi1_closed << ',' << r.phi1_sim << ',' << r.psi1_sim << ','
        << r.phi_downstream_max << ',' << r.phi1_gap << ',' << r.psi1_gap << '\n';
  }
}

void write_breakpoints_csv(const std::string& path, const Trajectory& trajectory) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "queue,node,t,value\n";
  for (std::size_t n = 0; n < trajectory.avenue.size(); ++n) {
    for (const auto& b : trajectory.avenue[n]) out << "avenue," << n << ',' << b.t << ',' << b.value << '\n';
  }
  for (std::size_t n = 0; n < trajectory.cross.size(); ++n) {
    for (const auto& b : trajectory.cross[n]) out << "cross," << n << ',' << b.t << ',' << b.value << '\n';
  }
}

}  // namespace tlc::fluid
