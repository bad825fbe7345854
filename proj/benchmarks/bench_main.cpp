#include <benchmark/benchmark.h>

#include "tlc/agents.hpp"
#include "tlc/env.hpp"
#include "tlc/fluid.hpp"
#include "tlc/mdp.hpp"
#include "tlc/nn.hpp"

using namespace tlc;

static void BM_GridStep(benchmark::State& state) {
  const int cols = static_cast<int>(state.range(0));
  const GridTopology topo(5, cols);
  GridEnv env(topo, {}, {}, Rng(1));
  env.reset();
  Rng rng(2);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(topo.size()));
  for (auto _ : state) {
    for (auto& b : bits) b = rng.bernoulli(0.2) ? 1 : 0;
    benchmark::DoNotOptimize(env.step(Action(bits)));
  }
  state.SetItemsProcessed(state.iterations() * topo.size());
}
BENCHMARK(BM_GridStep)->Arg(1)->Arg(10);

static void BM_PolicyIteration(benchmark::State& state) {
  const TruncatedSpace space{static_cast<int>(state.range(0))};
  const auto model = build_transitions(space, 0.25, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(policy_iteration(model, 0.99));
  state.counters["states"] = static_cast<double>(space.size());
}
BENCHMARK(BM_PolicyIteration)->Arg(15)->Arg(30)->Unit(benchmark::kMillisecond);

static void BM_MlpForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(3);
  const Mlp net(Mlp::stack(20, width, 2, 1, Activation::Tanh, Activation::Identity), rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 64);
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, 64);
  for (auto _ : state) {
    ForwardCache cache;
    net.forward(x, &cache);
    benchmark::DoNotOptimize(net.backward(cache, up));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(400);

static void BM_DqnUpdate(benchmark::State& state) {
  DqnConfig cfg;
  cfg.hidden_width = static_cast<int>(state.range(0));
  Rng rng(4);
  DqnAgent agent(cfg, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 64; ++i) {
    const SingleState s{i % 7, i % 5, static_cast<Phase>(i % 4)};
    batch.push_back({agent.encode(s), Eigen::VectorXd::Constant(1, i % 2), -1.0, agent.encode(s)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(agent.update(batch));
}
BENCHMARK(BM_DqnUpdate)->Arg(64)->Arg(400);

static void BM_FluidSimulate(benchmark::State& state) {
  const fluid::Params p{0.25, std::vector<double>(static_cast<std::size_t>(state.range(0)), 0.25),
                        1.0, 1.0};
  const auto schedule = fluid::greenwave_schedule(p, 0.1);
  fluid::SimOptions opts;
  opts.keep_breakpoints = false;
  for (auto _ : state) benchmark::DoNotOptimize(fluid::simulate(p, schedule, opts));
}
BENCHMARK(BM_FluidSimulate)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
