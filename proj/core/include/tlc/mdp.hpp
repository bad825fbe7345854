#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlc/env.hpp"
#include "tlc/rng.hpp"

namespace tlc {

/// Single-intersection states with both queues truncated at `x_max`.
/// Ordering: index = ((x1 * (x_max + 1)) + x2) * 4 + phase.
struct TruncatedSpace {
  int x_max = 30;

  std::size_t size() const {
    const auto side = static_cast<std::size_t>(x_max + 1);
    return side * side * 4;
  }
  std::size_t index(const SingleState& s) const;
  SingleState state(std::size_t index) const;
  /// Saturate both queues at x_max.
  SingleState clamp(SingleState s) const;
  bool contains(const SingleState& s) const;
  bool operator==(const TruncatedSpace&) const = default;
};

/// Sparse p(s, s'; a) plus the per-state reward r(s) = -(x1^2 + x2^2).
class TransitionModel {
 public:
  struct Outcome {
    std::uint32_t next;
    double prob;
  };

  TransitionModel(TruncatedSpace space, std::vector<std::size_t> offsets,
                  std::vector<Outcome> outcomes, std::vector<double> reward);

  const TruncatedSpace& space() const { return space_; }
  std::size_t size() const { return space_.size(); }
  std::span<const Outcome> outcomes(std::size_t s, int a) const;
  double reward(std::size_t s) const { return reward_[s]; }

 private:
  TruncatedSpace space_;
  std::vector<std::size_t> offsets_;  // size 2 * |S| + 1
  std::vector<Outcome> outcomes_;
  std::vector<double> reward_;
};

/// Enumerates the four Bernoulli arrival outcomes for every (state, action)
/// and pushes them through step_single. Queues that would exceed x_max are
/// clamped to x_max, so every row still sums to one.
TransitionModel build_transitions(const TruncatedSpace& space, double p1, double p2,
                                  const PassingRates& rates = {});

struct PolicyTable {
  TruncatedSpace space;
  std::vector<std::uint8_t> actions;

  PolicyTable() = default;
  PolicyTable(TruncatedSpace s, std::vector<std::uint8_t> a);
  static PolicyTable constant(TruncatedSpace s, int bit);

  /// States outside the space are looked up at their clamped image.
  int action(const SingleState& s) const;
};

using ValueTable = std::vector<double>;

double q_value(const TransitionModel& model, const ValueTable& values, double gamma,
               std::size_t s, int a);

/// argmax_a Q(s, a); exact ties go to 0 (continue).
PolicyTable greedy_policy(const TransitionModel& model, const ValueTable& values, double gamma);

/// sup_s | max_a Q(s, a) - V(s) |
double bellman_residual(const TransitionModel& model, const ValueTable& values, double gamma);

struct PolicyIterationOptions {
  double eval_tolerance = 1e-10;
  int max_eval_sweeps = 1'000'000;
  int max_iterations = 10'000;
  // Switch is chosen only when it beats continue by more than this.
  double improvement_tolerance = 1e-10;
};

struct PolicyIterationResult {
  PolicyTable policy;
  ValueTable values;
  int iterations = 0;
  long eval_sweeps = 0;
};

/// Howard policy iteration with Gauss-Seidel policy evaluation. Throws
/// NonConvergence if either loop exhausts its budget.
PolicyIterationResult policy_iteration(const TransitionModel& model, double gamma,
                                       const PolicyIterationOptions& options = {});

struct ValueIterationResult {
  ValueTable values;
  int sweeps = 0;
  double residual = 0.0;
  // || T V0 - V0 || for the zero initial guess; bounds the sweep count.
  double initial_residual = 0.0;
};

/// Jacobi value iteration from V = 0 until the sup-norm Bellman residual is
/// below `tol`.
ValueIterationResult value_iteration(const TransitionModel& model, double gamma, double tol,
                                     int max_sweeps = 1'000'000);

/// Switching threshold per served-queue length. For phases Green and Yellow
/// the index is x1 and the threshold is on x2; for Red and Orange the roles
/// swap. `nullopt` means the light never switches on that row.
struct ThresholdCurve {
  Phase phase = Phase::Green;
  std::vector<std::optional<int>> tau;
  // True iff on every row the switch region is upward-closed in the
  // competing queue.
  bool monotone = true;
  // Rows whose switch region is not upward-closed.
  std::vector<int> violations;
};

ThresholdCurve extract_threshold_curve(const PolicyTable& policy, Phase phase = Phase::Green);

/// Weighted fraction of states on which the two policies choose the same
/// action. Weights need not be normalised; an empty span means uniform.
double policy_agreement(const PolicyTable& a, const PolicyTable& b,
                        std::span<const double> weights = {});

/// Empirical state-visitation frequencies of `policy` over one long run of
/// the untruncated environment (states beyond x_max count at their clamp).
std::vector<double> visitation_weights(const PolicyTable& policy, const ArrivalModel& arrivals,
                                       const PassingRates& rates, long steps, Rng rng);

/// CSV with header x1,x2,phase,action,value.
void write_policy_csv(const std::string& path, const PolicyTable& policy,
                      const ValueTable& values);

struct PolicyFile {
  PolicyTable policy;
  ValueTable values;
};
PolicyFile read_policy_csv(const std::string& path);

}  // namespace tlc
