#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "tlc/errors.hpp"
#include "tlc/mdp.hpp"

using namespace tlc;

namespace {

std::map<std::size_t, double> outcome_map(const TransitionModel& m, std::size_t s, int a) {
  std::map<std::size_t, double> out;
  for (const auto& o : m.outcomes(s, a)) out[o.next] += o.prob;
  return out;
}

// Independent enumeration: four arrival outcomes pushed through the env step.
std::map<std::size_t, double> enumerate(const TruncatedSpace& space, const SingleState& s, int a,
                                        double p1, double p2) {
  std::map<std::size_t, double> out;
  for (int c1 = 0; c1 <= 1; ++c1) {
    for (int c2 = 0; c2 <= 1; ++c2) {
      const double w = (c1 ? p1 : 1 - p1) * (c2 ? p2 : 1 - p2);
      if (w == 0.0) continue;
      auto next = step_single(s, a, {c1, c2}).next;
      next.x1 = std::min<Count>(next.x1, space.x_max);
      next.x2 = std::min<Count>(next.x2, space.x_max);
      out[space.index(next)] += w;
    }
  }
  return out;
}

}  // namespace

TEST(TruncatedSpace, IndexIsABijection) {
  const TruncatedSpace space{7};
  EXPECT_EQ(space.size(), 8u * 8u * 4u);
  for (std::size_t i = 0; i < space.size(); ++i) EXPECT_EQ(space.index(space.state(i)), i);
  EXPECT_EQ(space.index({1, 2, Phase::Red}), ((1u * 8u) + 2u) * 4u + 2u);
}

TEST(BuildTransitions, EmptyGreenSplitsFourWays) {
  // Departures are computed before the slot's arrivals, so an arriving
  // avenue vehicle waits at least one slot.
  const TruncatedSpace space{5};
  const auto m = build_transitions(space, 0.25, 0.25);
  const auto got = outcome_map(m, space.index({0, 0, Phase::Green}), 0);
  ASSERT_EQ(got.size(), 4u);
  EXPECT_DOUBLE_EQ(got.at(space.index({0, 0, Phase::Green})), 0.5625);
  EXPECT_DOUBLE_EQ(got.at(space.index({0, 1, Phase::Green})), 0.1875);
  EXPECT_DOUBLE_EQ(got.at(space.index({1, 0, Phase::Green})), 0.1875);
  EXPECT_DOUBLE_EQ(got.at(space.index({1, 1, Phase::Green})), 0.0625);
}

TEST(BuildTransitions, MatchesEnvEnumerationAndNormalises) {
  const TruncatedSpace space{6};
  const double p1 = 0.3, p2 = 0.15;
  const auto m = build_transitions(space, p1, p2);
  for (std::size_t s = 0; s < space.size(); ++s) {
    EXPECT_DOUBLE_EQ(m.reward(s), -congestion_cost(space.state(s)));
    for (int a = 0; a < 2; ++a) {
      double total = 0.0;
      for (const auto& o : m.outcomes(s, a)) total += o.prob;
      ASSERT_NEAR(total, 1.0, 1e-12);
      const auto expected = enumerate(space, space.state(s), a, p1, p2);
      const auto got = outcome_map(m, s, a);
      ASSERT_EQ(got.size(), expected.size());
      for (const auto& [k, v] : expected) ASSERT_NEAR(got.at(k), v, 1e-15);
    }
  }
}

TEST(BuildTransitions, SaturatedStateIsAbsorbing) {
  const TruncatedSpace space{4};
  const auto m = build_transitions(space, 1.0, 1.0);
  const auto s = space.index({4, 4, Phase::Yellow});
  const auto got = outcome_map(m, s, 0);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got.begin()->first, s);
  EXPECT_DOUBLE_EQ(got.begin()->second, 1.0);
}

TEST(PolicyIteration, AgreesWithValueIterationGreedyPolicy) {
  const TruncatedSpace space{12};
  const auto m = build_transitions(space, 0.25, 0.25);
  const double gamma = 0.99;
  const auto pi = policy_iteration(m, gamma);
  const auto vi = value_iteration(m, gamma, 1e-9);
  const auto greedy = greedy_policy(m, vi.values, gamma);
  double worst = 0.0;
  for (std::size_t s = 0; s < space.size(); ++s) {
    worst = std::max(worst, std::abs(pi.values[s] - vi.values[s]));
    const double gap = std::abs(q_value(m, pi.values, gamma, s, 0) - q_value(m, pi.values, gamma, s, 1));
    if (gap > 1e-6) EXPECT_EQ(pi.policy.actions[s], greedy.actions[s]) << s;
  }
  // Value iteration stops at residual tol, so its error is below
  // tol * gamma / (1 - gamma); iterative policy evaluation adds up to
  // eval_tolerance / (1 - gamma).
  const double eval_tol = PolicyIterationOptions{}.eval_tolerance;
  EXPECT_LT(worst, (1e-9 * gamma + eval_tol) / (1 - gamma));
  EXPECT_LT(bellman_residual(m, pi.values, gamma), 1e-8);
}

TEST(PolicyIteration, NoArrivalsMeansEmptyStatesAreFree) {
  const TruncatedSpace space{5};
  const auto m = build_transitions(space, 0.0, 0.0);
  const auto r = policy_iteration(m, 0.9);
  for (int ph = 0; ph < 4; ++ph) {
    EXPECT_NEAR(r.values[space.index({0, 0, static_cast<Phase>(ph)})], 0.0, 1e-12);
  }
  for (double v : r.values) EXPECT_LE(v, 1e-12);
}

TEST(PolicyIteration, SymmetricArrivalsGiveSymmetricValues) {
  const TruncatedSpace space{10};
  const auto m = build_transitions(space, 0.25, 0.25);
  const auto r = policy_iteration(m, 0.95);
  for (std::size_t s = 0; s < space.size(); ++s) {
    const auto st = space.state(s);
    const SingleState mirror{st.x2, st.x1, static_cast<Phase>((to_int(st.phase) + 2) % 4)};
    ASSERT_NEAR(r.values[s], r.values[space.index(mirror)], 1e-8 * (1 + std::abs(r.values[s])));
  }
}

TEST(PolicyIteration, BudgetExhaustionThrows) {
  const TruncatedSpace space{5};
  const auto m = build_transitions(space, 0.25, 0.25);
  PolicyIterationOptions opts;
  opts.max_eval_sweeps = 2;
  EXPECT_THROW(policy_iteration(m, 0.99, opts), NonConvergence);
}

TEST(ValueIteration, NoArrivalsDrainsGeometrically) {
  // With no arrivals and an "always continue" light the avenue drains one
  // vehicle per slot under green; the optimum can only be better.
  const TruncatedSpace space{6};
  const auto m = build_transitions(space, 0.0, 0.0);
  const double gamma = 0.9;
  const auto r = value_iteration(m, gamma, 1e-10);
  EXPECT_NEAR(r.values[space.index({0, 0, Phase::Orange})], 0.0, 1e-9);
  // (x1 = 3, green): serve 3 slots, costs 9, 4, 1.
  const double drain = -(9 + gamma * 4 + gamma * gamma * 1);
  EXPECT_NEAR(r.values[space.index({3, 0, Phase::Green})], drain, 1e-8);
}

TEST(ValueIteration, SweepCountFollowsContractionRate) {
  const TruncatedSpace space{10};
  const auto m = build_transitions(space, 0.25, 0.25);
  const double gamma = 0.99, tol = 1e-8;
  const auto r = value_iteration(m, gamma, tol);
  EXPECT_LT(r.residual, tol);
  const double bound = std::ceil(std::log(tol / r.initial_residual) / std::log(gamma)) + 1;
  EXPECT_LE(r.sweeps, bound);
  EXPECT_GT(r.sweeps, 0);
}

TEST(ThresholdCurve, ConstantAndConstructedPolicies) {
  const TruncatedSpace space{10};
  const auto never = extract_threshold_curve(PolicyTable::constant(space, 0));
  EXPECT_TRUE(never.monotone);
  for (const auto& t : never.tau) EXPECT_FALSE(t.has_value());

  std::vector<std::uint8_t> actions(space.size(), 1);
  for (std::size_t s = 0; s < space.size(); ++s) {
    const auto st = space.state(s);
    if (st.phase == Phase::Green) actions[s] = (st.x2 - st.x1 >= 3) ? 1 : 0;
  }
  const auto curve = extract_threshold_curve(PolicyTable(space, actions));
  EXPECT_TRUE(curve.monotone);
  for (int x1 = 0; x1 <= space.x_max; ++x1) {
    if (x1 + 3 <= space.x_max) {
      EXPECT_EQ(curve.tau[x1], x1 + 3);
    } else {
      EXPECT_FALSE(curve.tau[x1].has_value());
    }
  }

  actions[space.index({2, 9, Phase::Green})] = 0;  // hole above the threshold
  const auto broken = extract_threshold_curve(PolicyTable(space, actions));
  EXPECT_FALSE(broken.monotone);
  EXPECT_EQ(broken.violations, std::vector<int>{2});
}

TEST(ThresholdCurve, SolvedPolicyIsMonotone) {
  // Far enough from the truncation boundary that the cap does not bend the
  // switch region.
  const TruncatedSpace space{60};
  const auto m = build_transitions(space, 0.25, 0.25);
  const auto r = policy_iteration(m, 0.99);
  const auto curve = extract_threshold_curve(r.policy, Phase::Green);
  for (int x1 = 0; x1 <= 15; ++x1) {
    EXPECT_TRUE(std::find(curve.violations.begin(), curve.violations.end(), x1) ==
                curve.violations.end())
        << x1;
  }
}

TEST(PolicyAgreement, IdenticalComplementaryWeighted) {
  const TruncatedSpace space{4};
  const auto zero = PolicyTable::constant(space, 0);
  const auto one = PolicyTable::constant(space, 1);
  EXPECT_DOUBLE_EQ(policy_agreement(zero, zero), 1.0);
  EXPECT_DOUBLE_EQ(policy_agreement(zero, one), 0.0);
  std::vector<double> w(space.size(), 0.0);
  auto half = zero;
  half.actions[0] = 1;
  w[0] = 1.0;
  w[1] = 3.0;
  EXPECT_DOUBLE_EQ(policy_agreement(zero, half, w), 0.75);
}

TEST(VisitationWeights, SumToOneAndFollowThePolicy) {
  const TruncatedSpace space{20};
  const auto m = build_transitions(space, 0.25, 0.25);
  const auto r = policy_iteration(m, 0.99);
  const auto w = visitation_weights(r.policy, {}, {}, 20'000, Rng(4));
  double total = 0.0;
  for (double x : w) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(w[space.index({0, 0, Phase::Green})], 0.05);
}

TEST(PolicyCsv, RoundTrip) {
  const TruncatedSpace space{5};
  const auto m = build_transitions(space, 0.25, 0.25);
  const auto r = policy_iteration(m, 0.9);
  const auto path = (std::filesystem::temp_directory_path() / "tlc_policy_rt.csv").string();
  write_policy_csv(path, r.policy, r.values);
  const auto back = read_policy_csv(path);
  EXPECT_EQ(back.policy.space, space);
  EXPECT_EQ(back.policy.actions, r.policy.actions);
  EXPECT_EQ(back.values, r.values);
  std::filesystem::remove(path);
}

TEST(Truncation, ValuesNearTheOriginBarelyMove) {
  const auto solve = [](int x_max) {
    const TruncatedSpace space{x_max};
    return std::make_pair(space, policy_iteration(build_transitions(space, 0.25, 0.25), 0.99));
  };
  const auto [s30, r30] = solve(30);
  const auto [s40, r40] = solve(40);
  double worst = 0.0;
  for (int x1 = 0; x1 <= 15; ++x1) {
    for (int x2 = 0; x2 <= 15; ++x2) {
      for (int ph = 0; ph < 4; ++ph) {
        const SingleState st{x1, x2, static_cast<Phase>(ph)};
        const double a = r30.values[s30.index(st)];
        const double b = r40.values[s40.index(st)];
        worst = std::max(worst, std::abs(a - b) / std::abs(b));
      }
    }
  }
  EXPECT_LT(worst, 1e-6);
}
