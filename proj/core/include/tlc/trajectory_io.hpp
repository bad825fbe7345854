#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tlc/agents.hpp"
#include "tlc/metrics.hpp"

namespace tlc {

/// CSV header: episode,t,intersection,x1,x2,x3,x4,phase,action,reward. The
/// closing state of each episode is written with empty action and reward.
/// x1..x4 follow the direction order W->E, N->S, E->W, S->N.
void write_trajectory_csv(std::ostream& out, const std::vector<EpisodeTrace>& episodes);
void write_trajectory_csv(const std::string& path, const std::vector<EpisodeTrace>& episodes);

/// Inverse of write_trajectory_csv. Exits are not stored and read back as 0.
std::vector<EpisodeTrace> read_trajectory_csv(const std::string& path,
                                              const GridTopology& topology);

/// Appends one JSON object per line.
class TrainingLog {
 public:
  explicit TrainingLog(const std::string& path);
  void write(const EpisodeLog& log, bool dqn);

 private:
  std::string path_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

}  // namespace tlc
