#include "tlc/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tlc/errors.hpp"

namespace tlc {

std::size_t TruncatedSpace::index(const SingleState& s) const {
  if (!contains(s)) throw std::out_of_range("state outside truncated space");
  const auto side = static_cast<std::size_t>(x_max + 1);
  return ((static_cast<std::size_t>(s.x1) * side) + static_cast<std::size_t>(s.x2)) * 4 +
         static_cast<std::size_t>(to_int(s.phase));
}

SingleState TruncatedSpace::state(std::size_t i) const {
  const auto side = static_cast<std::size_t>(x_max + 1);
  SingleState s;
  s.phase = static_cast<Phase>(i % 4);
  i /= 4;
  s.x2 = static_cast<Count>(i % side);
  s.x1 = static_cast<Count>(i / side);
  return s;
}

SingleState TruncatedSpace::clamp(SingleState s) const {
  s.x1 = std::min<Count>(s.x1, x_max);
  s.x2 = std::min<Count>(s.x2, x_max);
  return s;
}

bool TruncatedSpace::contains(const SingleState& s) const {
  return s.x1 >= 0 && s.x2 >= 0 && s.x1 <= x_max && s.x2 <= x_max;
}

TransitionModel::TransitionModel(TruncatedSpace space, std::vector<std::size_t> offsets,
                                 std::vector<Outcome> outcomes, std::vector<double> reward)
    : space_(space),
      offsets_(std::move(offsets)),
      outcomes_(std::move(outcomes)),
      reward_(std::move(reward)) {}

std::span<const TransitionModel::Outcome> TransitionModel::outcomes(std::size_t s, int a) const {
  const std::size_t row = 2 * s + static_cast<std::size_t>(a);
  return {outcomes_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
}

TransitionModel build_transitions(const TruncatedSpace& space, double p1, double p2,
                                  const PassingRates& rates) {
  if (!(p1 >= 0 && p1 <= 1 && p2 >= 0 && p2 <= 1)) {
    throw std::invalid_argument("arrival probabilities must lie in [0, 1]");
  }
  const std::size_t n = space.size();
  std::vector<std::size_t> offsets;
  offsets.reserve(2 * n + 1);
  offsets.push_back(0);
  std::vector<TransitionModel::Outcome> outcomes;
  outcomes.reserve(8 * n);
  std::vector<double> reward(n);

  for (std::size_t s = 0; s < n; ++s) {
    const SingleState state = space.state(s);
    reward[s] = -congestion_cost(state);
    for (int a = 0; a < 2; ++a) {
      const std::size_t row_begin = outcomes.size();
      for (Count c1 = 0; c1 <= 1; ++c1) {
        for (Count c2 = 0; c2 <= 1; ++c2) {
          const double prob = (c1 ? p1 : 1 - p1) * (c2 ? p2 : 1 - p2);
          if (prob == 0.0) continue;
          const auto next = space.clamp(step_single(state, a, {c1, c2}, rates).next);
          const auto next_index = static_cast<std::uint32_t>(space.index(next));
          auto it = std::find_if(outcomes.begin() + static_cast<std::ptrdiff_t>(row_begin),
                                 outcomes.end(),
                                 [&](const auto& o) { return o.next == next_index; });
          if (it != outcomes.end()) {
            it->prob += prob;
          } else {
            outcomes.push_back({next_index, prob});
          }
        }
      }
      offsets.push_back(outcomes.size());
    }
  }
  return TransitionModel(space, std::move(offsets), std::move(outcomes), std::move(reward));
}

PolicyTable::PolicyTable(TruncatedSpace s, std::vector<std::uint8_t> a)
    : space(s), actions(std::move(a)) {
  if (actions.size() != space.size()) {
    throw std::invalid_argument("policy table size does not match the state space");
  }
  for (auto v : actions) {
    if (v > 1) throw std::invalid_argument("policy entries must be 0 or 1");
  }
}

PolicyTable PolicyTable::constant(TruncatedSpace s, int bit) {
  return PolicyTable(s, std::vector<std::uint8_t>(s.size(), static_cast<std::uint8_t>(bit)));
}

int PolicyTable::action(const SingleState& s) const { return actions[space.index(space.clamp(s))]; }

double q_value(const TransitionModel& model, const ValueTable& values, double gamma,
               std::size_t s, int a) {
  double expected = 0.0;
  for (const auto& o : model.outcomes(s, a)) expected += o.prob * values[o.next];
  return model.reward(s) + gamma * expected;
}

PolicyTable greedy_policy(const TransitionModel& model, const ValueTable& values, double gamma) {
  std::vector<std::uint8_t> actions(model.size());
  for (std::size_t s = 0; s < model.size(); ++s) {
    actions[s] = q_value(model, values, gamma, s, 1) > q_value(model, values, gamma, s, 0) ? 1 : 0;
  }
  return PolicyTable(model.space(), std::move(actions));
}

double bellman_residual(const TransitionModel& model, const ValueTable& values, double gamma) {
  double worst = 0.0;
  for (std::size_t s = 0; s < model.size(); ++s) {
    const double best =
        std::max(q_value(model, values, gamma, s, 0), q_value(model, values, gamma, s, 1));
    worst = std::max(worst, std::abs(best - values[s]));
  }
  return worst;
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("discount factor must lie in (0, 1)");
  }
}

// Gauss-Seidel sweeps of V <- r + gamma P_pi V until the largest update in a
// sweep is below tol. Returns the number of sweeps used.
long evaluate_policy(const TransitionModel& model, const std::vector<std::uint8_t>& actions,
                     double gamma, ValueTable& values, double tol, int max_sweeps) {
  for (long sweep = 1; sweep <= max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < model.size(); ++s) {
      const double v = q_value(model, values, gamma, s, actions[s]);
      delta = std::max(delta, std::abs(v - values[s]));
      values[s] = v;
    }
    if (delta < tol) return sweep;
  }
  throw NonConvergence("policy evaluation did not reach tolerance within " +
                       std::to_string(max_sweeps) + " sweeps");
}

}  // namespace

PolicyIterationResult policy_iteration(const TransitionModel& model, double gamma,
                                       const PolicyIterationOptions& options) {
  check_gamma(gamma);
  PolicyIterationResult out;
  std::vector<std::uint8_t> actions(model.size(), 0);
  out.values.assign(model.size(), 0.0);

  for (int it = 1; it <= options.max_iterations; ++it) {
    out.eval_sweeps += evaluate_policy(model, actions, gamma, out.values, options.eval_tolerance,
                                       options.max_eval_sweeps);
    bool stable = true;
    for (std::size_t s = 0; s < model.size(); ++s) {
      const double q0 = q_value(model, out.values, gamma, s, 0);
      const double q1 = q_value(model, out.values, gamma, s, 1);
      // Numerical ties resolve to continue.
      const std::uint8_t wanted = q1 > q0 + options.improvement_tolerance ? 1 : 0;
      if (wanted != actions[s]) {
        actions[s] = wanted;
        stable = false;
      }
    }
    out.iterations = it;
    if (stable) {
      out.policy = PolicyTable(model.space(), std::move(actions));
      return out;
    }
  }
  throw NonConvergence("policy iteration did not stabilise within " +
                       std::to_string(options.max_iterations) + " improvements");
}

ValueIterationResult value_iteration(const TransitionModel& model, double gamma, double tol,
                                     int max_sweeps) {
  check_gamma(gamma);
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  ValueIterationResult out;
  ValueTable current(model.size(), 0.0);
  ValueTable next(model.size(), 0.0);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < model.size(); ++s) {
      next[s] = std::max(q_value(model, current, gamma, s, 0), q_value(model, current, gamma, s, 1));
      delta = std::max(delta, std::abs(next[s] - current[s]));
    }
    if (sweep == 1) out.initial_residual = delta;
    current.swap(next);
    if (delta < tol) {
      out.sweeps = sweep;
      out.residual = bellman_residual(model, current, gamma);
      out.values = std::move(current);
      return out;
    }
  }
  throw NonConvergence("value iteration did not reach tolerance within " +
                       std::to_string(max_sweeps) + " sweeps");
}

ThresholdCurve extract_threshold_curve(const PolicyTable& policy, Phase phase) {
  const auto& space = policy.space;
  const bool avenue_served = phase == Phase::Green || phase == Phase::Yellow;
  ThresholdCurve curve;
  curve.phase = phase;
  curve.tau.assign(static_cast<std::size_t>(space.x_max + 1), std::nullopt);
  for (int served = 0; served <= space.x_max; ++served) {
    bool seen_switch = false;
    bool row_monotone = true;
    for (int competing = 0; competing <= space.x_max; ++competing) {
      SingleState s;
      s.phase = phase;
      s.x1 = avenue_served ? served : competing;
      s.x2 = avenue_served ? competing : served;
      const int a = policy.actions[space.index(s)];
      if (a == 1 && !seen_switch) {
        seen_switch = true;
        curve.tau[served] = competing;
      } else if (a == 0 && seen_switch) {
        row_monotone = false;
      }
    }
    if (!row_monotone) {
      curve.monotone = false;
      curve.violations.push_back(served);
    }
  }
  return curve;
}

double policy_agreement(const PolicyTable& a, const PolicyTable& b,
                        std::span<const double> weights) {
  if (!(a.space == b.space)) throw std::invalid_argument("policies live on different spaces");
  if (!weights.empty() && weights.size() != a.actions.size()) {
    throw std::invalid_argument("weight vector does not match the state space");
  }
  double agree = 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < a.actions.size(); ++s) {
    const double w = weights.empty() ? 1.0 : weights[s];
    total += w;
    if (a.actions[s] == b.actions[s]) agree += w;
  }
  return total > 0.0 ? agree / total : 1.0;
}

std::vector<double> visitation_weights(const PolicyTable& policy, const ArrivalModel& arrivals,
                                       const PassingRates& rates, long steps, Rng rng) {
  SingleIntersectionEnv env(arrivals, rates, std::move(rng));
  std::vector<double> counts(policy.space.size(), 0.0);
  env.reset();
  for (long t = 0; t < steps; ++t) {
    const auto& s = env.state();
    counts[policy.space.index(policy.space.clamp(s))] += 1.0;
    env.step(policy.action(s));
  }
  for (auto& c : counts) c /= static_cast<double>(steps);
  return counts;
}

void write_policy_csv(const std::string& path, const PolicyTable& policy,
                      const ValueTable& values) {
  if (values.size() != policy.actions.size()) {
    throw std::invalid_argument("value table size does not match the policy");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "x1,x2,phase,action,value\n";
  out.precision(17);
  for (std::size_t s = 0; s < policy.actions.size(); ++s) {
    const auto st = policy.space.state(s);
    out << st.x1 << ',' << st.x2 << ',' << to_int(st.phase) << ','
        << static_cast<int>(policy.actions[s]) << ',' << values[s] << '\n';
  }
}

PolicyFile read_policy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("x1,x2,phase,action", 0) != 0) {
    throw std::runtime_error(path + ": unexpected policy CSV header");
  }
  struct Row {
    int x1, x2, phase, action;
    double value;
  };
  std::vector<Row> rows;
  int x_max = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    char comma;
    ss >> r.x1 >> comma >> r.x2 >> comma >> r.phase >> comma >> r.action >> comma >> r.value;
    if (!ss) throw std::runtime_error(path + ": malformed row '" + line + "'");
    x_max = std::max({x_max, r.x1, r.x2});
    rows.push_back(r);
  }
  TruncatedSpace space{x_max};
  if (rows.size() != space.size()) {
    throw std::runtime_error(path + ": expected " + std::to_string(space.size()) + " rows");
  }
  std::vector<std::uint8_t> actions(space.size());
  ValueTable values(space.size());
  for (const auto& r : rows) {
    const auto i = space.index({r.x1, r.x2, phase_from_int(r.phase)});
    actions[i] = static_cast<std::uint8_t>(r.action);
    values[i] = r.value;
  }
  return {PolicyTable(space, std::move(actions)), std::move(values)};
}

}  // namespace tlc
