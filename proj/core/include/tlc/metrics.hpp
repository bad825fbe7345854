#pragma once

#include <string>
#include <vector>

#include "tlc/env.hpp"

namespace tlc {

/// One evaluated slot: the state before acting, the action taken and the
/// reward it earned. The final state of an episode has no action.
struct StepRecord {
  GridState state;
  Action action;
  double reward = 0.0;
};

/// Episode as recorded by the runner: `steps` + 1 states, `steps` actions.
struct EpisodeTrace {
  std::vector<StepRecord> steps;
  GridState final_state;
  long exits = 0;

  std::size_t length() const { return steps.size(); }
  /// |X(t)|^2 for t = 0..length().
  std::vector<double> squared_norms() const;
  /// Phases of every intersection for t = 0..length() - 1.
  std::vector<std::vector<Phase>> phases() const;
};

/// -(1/T) sum_{t=0}^{T} gamma^t |X(t)|^2. Needs at least T + 1 entries.
double discounted_cost(const std::vector<double>& squared_norms, double gamma, int T);

/// Time average of the fraction of intersection pairs showing the same phase.
/// Needs at least two intersections and one slot.
double synchrony_index(const std::vector<std::vector<Phase>>& phases);

struct PairLag {
  int from = 0;  // upstream intersection
  int to = 0;    // next intersection along the same avenue
  int lag = 0;   // slots by which `to` follows `from`
  double correlation = 0.0;
};

struct GreenwaveReport {
  bool flag = false;
  double best_synchrony = 0.0;
  int best_window_start = 0;
  int window = 0;
  double threshold = 0.0;
  std::vector<PairLag> lags;
};

/// Slides a window over the phase history; the flag is raised when some
/// window's synchrony index reaches `threshold`. For each adjacent pair on an
/// avenue, reports the lag in [-max_lag, max_lag] maximising the
/// cross-correlation of the two green indicators (ties prefer the smallest
/// |lag|, then the negative one).
GreenwaveReport detect_greenwave(const std::vector<std::vector<Phase>>& phases,
                                 const GridTopology& topology, int window, double threshold,
                                 int max_lag = 5);

struct PolicyMetrics {
  std::string policy;
  double average_queue = 0.0;    // mean over slots 1..T of all queued vehicles
  double discounted_cost = 0.0;  // mean over episodes
  std::vector<double> episode_rewards;
  double throughput = 0.0;  // vehicles leaving the network per slot
  bool has_synchrony = false;
  double synchrony = 0.0;  // over all evaluation episodes
  GreenwaveReport greenwave;  // on the first evaluation episode
  double steady_state_queue = -1.0;  // long-run average, negative when not run
};

/// Aggregates evaluation episodes of one policy.
PolicyMetrics summarize(const std::string& policy, const std::vector<EpisodeTrace>& episodes,
                        double gamma, int window, double threshold, int max_lag);

}  // namespace tlc
