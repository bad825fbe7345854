#include "tlc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "tlc/errors.hpp"

namespace tlc {

std::vector<double> EpisodeTrace::squared_norms() const {
  std::vector<double> out;
  out.reserve(steps.size() + 1);
  for (const auto& step : steps) out.push_back(congestion_cost(step.state));
  out.push_back(congestion_cost(final_state));
  return out;
}

std::vector<std::vector<Phase>> EpisodeTrace::phases() const {
  std::vector<std::vector<Phase>> out;
  out.reserve(steps.size());
  for (const auto& step : steps) out.push_back(step.state.phases);
  return out;
}

double discounted_cost(const std::vector<double>& squared_norms, double gamma, int T) {
  if (T < 1 || squared_norms.size() < static_cast<std::size_t>(T) + 1) {
    throw DimensionMismatch("discounted_cost needs T >= 1 and T + 1 states");
  }
  double sum = 0.0;
  double discount = 1.0;
  for (int t = 0; t <= T; ++t) {
    sum += discount * squared_norms[t];
    discount *= gamma;
  }
  return -sum / T;
}

namespace {

double pair_fraction(const std::vector<Phase>& row) {
  const std::size_t n = row.size();
  long equal = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) equal += row[i] == row[j];
  }
  return static_cast<double>(equal) / static_cast<double>(n * (n - 1) / 2);
}

double green_correlation(const std::vector<std::vector<Phase>>& phases, int a, int b, int lag) {
  // Pearson correlation of g_a(t) and g_b(t + lag) over the overlap.
  const int T = static_cast<int>(phases.size());
  const int t0 = std::max(0, -lag);
  const int t1 = std::min(T, T - lag);
  const int n = t1 - t0;
  if (n < 2) return 0.0;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int t = t0; t < t1; ++t) {
    const double x = phases[t][a] == Phase::Green;
    const double y = phases[t + lag][b] == Phase::Green;
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
  }
  const double cov = sab - sa * sb / n;
  const double va = saa - sa * sa / n;
  const double vb = sbb - sb * sb / n;
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

double synchrony_index(const std::vector<std::vector<Phase>>& phases) {
  if (phases.empty() || phases.front().size() < 2) {
    throw DimensionMismatch("synchrony_index needs at least two intersections and one slot");
  }
  double sum = 0.0;
  for (const auto& row : phases) sum += pair_fraction(row);
  return sum / static_cast<double>(phases.size());
}

GreenwaveReport detect_greenwave(const std::vector<std::vector<Phase>>& phases,
                                 const GridTopology& topology, int window, double threshold,
                                 int max_lag) {
  const int T = static_cast<int>(phases.size());
  if (window < 1 || T < window) {
    throw DimensionMismatch("detect_greenwave needs a trajectory at least one window long");
  }
  if (topology.size() < 2) {
    throw DimensionMismatch("detect_greenwave needs at least two intersections");
  }
  GreenwaveReport report;
  report.window = window;
  report.threshold = threshold;

  std::vector<double> per_slot(T);
  for (int t = 0; t < T; ++t) per_slot[t] = pair_fraction(phases[t]);
  double running = 0.0;
  for (int t = 0; t < window; ++t) running += per_slot[t];
  report.best_synchrony = -1.0;
  for (int start = 0; start + window <= T; ++start) {
    if (start > 0) running += per_slot[start + window - 1] - per_slot[start - 1];
    const double value = running / window;
    if (value > report.best_synchrony + 1e-12) {
      report.best_synchrony = value;
      report.best_window_start = start;
    }
  }
  report.flag = report.best_synchrony >= threshold;

  for (int r = 0; r < topology.avenues; ++r) {
    for (int c = 0; c + 1 < topology.cross_streets; ++c) {
      PairLag pair;
      pair.from = topology.index(r, c);
      pair.to = topology.index(r, c + 1);
      pair.correlation = -2.0;
      for (int d = 0; d <= max_lag; ++d) {
        for (int lag : {-d, d}) {
          const double corr = green_correlation(phases, pair.from, pair.to, lag);
          if (corr > pair.correlation + 1e-12) {
            pair.correlation = corr;
            pair.lag = lag;
          }
          if (d == 0) break;
        }
      }
      report.lags.push_back(pair);
    }
  }
  return report;
}

PolicyMetrics summarize(const std::string& policy, const std::vector<EpisodeTrace>& episodes,
                        double gamma, int window, double threshold, int max_lag) {
  if (episodes.empty()) throw DimensionMismatch("summarize needs at least one episode");
  PolicyMetrics m;
  m.policy = policy;
  double queue_sum = 0.0;
  double exits = 0.0;
  long slots = 0;
  std::vector<std::vector<Phase>> all_phases;
  for (const auto& ep : episodes) {
    const int T = static_cast<int>(ep.length());
    m.discounted_cost += discounted_cost(ep.squared_norms(), gamma, T);
    double reward = 0.0;
    for (int t = 0; t < T; ++t) {
      reward += ep.steps[t].reward;
      const GridState& after = t + 1 < T ? ep.steps[t + 1].state : ep.final_state;
      queue_sum += static_cast<double>(total_queued(after));
    }
    m.episode_rewards.push_back(reward);
    exits += static_cast<double>(ep.exits);
    slots += T;
    if (ep.final_state.size() >= 2) {
      const auto ph = ep.phases();
      all_phases.insert(all_phases.end(), ph.begin(), ph.end());
    }
  }
  m.discounted_cost /= static_cast<double>(episodes.size());
  m.average_queue = queue_sum / static_cast<double>(slots);
  m.throughput = exits / static_cast<double>(slots);
  if (!all_phases.empty()) {
    m.has_synchrony = true;
    m.synchrony = synchrony_index(all_phases);
    m.greenwave = detect_greenwave(episodes.front().phases(), episodes.front().final_state.topology,
                                   window, threshold, max_lag);
  }
  return m;
}

}  // namespace tlc
