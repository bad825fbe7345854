#include "tlc/trajectory_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tlc/errors.hpp"

namespace tlc {

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

void write_row(std::ostream& out, std::size_t episode, std::size_t t, const GridState& s,
               const Action* action, double reward) {
  for (int n = 0; n < s.size(); ++n) {
    const auto& q = s.queues[n];
    out << episode << ',' << t << ',' << n << ',' << q[0] << ',' << q[1] << ',' << q[2] << ','
        << q[3] << ',' << to_int(s.phases[n]) << ',';
    if (action) out << (*action)[n];
    out << ',';
    // The reward belongs to the whole network; it is repeated on each row.
    if (action) out << format_number(reward);
    out << '\n';
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_cell(const std::string& cell, const std::string& path, long line) {
  T value{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ConfigInvalid(path + ":" + std::to_string(line) + ": bad value '" + cell + "'");
  }
  return value;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const std::vector<EpisodeTrace>& episodes) {
  out << "episode,t,intersection,x1,x2,x3,x4,phase,action,reward\n";
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      write_row(out, e, t, ep.steps[t].state, &ep.steps[t].action, ep.steps[t].reward);
    }
    write_row(out, e, ep.steps.size(), ep.final_state, nullptr, 0.0);
  }
}

void write_trajectory_csv(const std::string& path, const std::vector<EpisodeTrace>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigInvalid("cannot write '" + path + "'");
  write_trajectory_csv(out, episodes);
}

std::vector<EpisodeTrace> read_trajectory_csv(const std::string& path,
                                              const GridTopology& topology) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open trajectory '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("episode,t,intersection", 0) != 0) {
    throw ConfigInvalid(path + ": missing trajectory header");
  }
  const int nodes = topology.size();
  // (episode, t) -> partially filled step
  std::map<std::pair<long, long>, StepRecord> rows;
  std::map<std::pair<long, long>, bool> terminal;
  long number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) throw ConfigInvalid(path + ":" + std::to_string(number) + ": need 10 columns");
    const long e = parse_cell<long>(cells[0], path, number);
    const long t = parse_cell<long>(cells[1], path, number);
    const int n = parse_cell<int>(cells[2], path, number);
    if (n < 0 || n >= nodes) {
      throw ConfigInvalid(path + ":" + std::to_string(number) +
                          ": intersection outside the configured scenario");
    }
    auto& rec = rows[{e, t}];
    if (rec.state.queues.empty()) {
      rec.state = GridState(topology);
      rec.action.bits.assign(nodes, 0);
    }
    for (int k = 0; k < 4; ++k) rec.state.queues[n][k] = parse_cell<Count>(cells[3 + k], path, number);
    rec.state.phases[n] = phase_from_int(parse_cell<int>(cells[7], path, number));
    const bool last = cells[8].empty();
    terminal[{e, t}] = last;
    if (!last) {
      rec.action.bits[n] = static_cast<std::uint8_t>(parse_cell<int>(cells[8], path, number));
      rec.reward = parse_cell<double>(cells[9], path, number);
    }
  }
  std::vector<EpisodeTrace> episodes;
  for (auto& [key, rec] : rows) {
    const auto [e, t] = key;
    if (static_cast<long>(episodes.size()) <= e) episodes.resize(e + 1);
    auto& ep = episodes[e];
    if (terminal[key]) {
      ep.final_state = rec.state;
    } else {
      if (static_cast<long>(ep.steps.size()) != t) {
        throw ConfigInvalid(path + ": episode " + std::to_string(e) + " skips slot " +
                            std::to_string(ep.steps.size()));
      }
      ep.steps.push_back(std::move(rec));
    }
  }
  for (const auto& ep : episodes) {
    if (ep.final_state.queues.empty()) throw ConfigInvalid(path + ": episode without closing state");
  }
  return episodes;
}

TrainingLog::TrainingLog(const std::string& path) : path_(path) {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigInvalid("cannot write '" + path_ + "'");
}

void TrainingLog::write(const EpisodeLog& log, bool dqn) {
  nlohmann::ordered_json j;
  j["episode"] = log.episode;
  j["steps"] = log.steps;
  j["mean_reward"] = log.mean_reward;
  j["mean_queue"] = log.mean_queue;
  j[dqn ? "epsilon" : "noise_sigma"] = log.exploration;
  j["loss"] = log.loss;
  if (!dqn) j["actor_objective"] = log.actor_objective;
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << j.dump() << '\n';
}

}  // namespace tlc
