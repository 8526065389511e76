#include <random>

#include <benchmark/benchmark.h>

#include "scope/cmaes.hpp"
#include "scope/environment.hpp"
#include "scope/policy.hpp"
#include "scope/sparsity.hpp"
#include "scope/trainer.hpp"
#include "scope/transform.hpp"

namespace {

scope::Frame game_frame() {
  scope::ShooterGame game;
  game.reset(1);
  scope::StepResult r;
  for (int i = 0; i < 40; ++i) r = game.step(i % 6);
  return r.frame;
}

void BM_DctFull(benchmark::State& state) {
  const auto frame = game_frame();
  for (auto _ : state) benchmark::DoNotOptimize(scope::dct2_full(frame));
}
BENCHMARK(BM_DctFull);

void BM_DctTruncated(benchmark::State& state) {
  const auto frame = game_frame();
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(scope::dct2_truncated(frame, k));
}
BENCHMARK(BM_DctTruncated)->Arg(16)->Arg(32)->Arg(50)->Arg(125)->Arg(150);

void BM_Sparsify(benchmark::State& state) {
  const auto block = scope::dct2_truncated(game_frame(), static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scope::sparsify(block, 25.0));
}
BENCHMARK(BM_Sparsify)->Arg(32)->Arg(125);

void BM_PipelineAct(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const scope::PolicyShape shape{k, 1, 6, false};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.5);
  Eigen::VectorXd v(static_cast<Eigen::Index>(shape.param_count()));
  for (auto& x : v) x = nd(rng);
  const auto params = scope::unflatten(v, shape);
  const scope::Pipeline pipeline(params, 25.0);
  const auto frame = game_frame();
  for (auto _ : state) benchmark::DoNotOptimize(pipeline.act(frame));
}
BENCHMARK(BM_PipelineAct)->Arg(32)->Arg(125);

void BM_EnvStep(benchmark::State& state) {
  auto env = scope::make_builtin_env({});
  env->reset(1);
  int t = 0;
  for (auto _ : state) {
    if (env->step(t++ % 6).terminated) env->reset(static_cast<std::uint64_t>(t));
  }
}
BENCHMARK(BM_EnvStep);

void BM_CmaGeneration(benchmark::State& state) {
  scope::cma::CmaConfig config;
  config.dimension = static_cast<std::size_t>(state.range(0));
  config.seed = 1;
  auto s = scope::cma::init(config);
  std::vector<double> fitness;
  for (auto _ : state) {
    const auto xs = scope::cma::ask(s);
    fitness.clear();
    for (const auto& x : xs) fitness.push_back(-x.squaredNorm());
    scope::cma::tell(s, xs, fitness);
  }
}
BENCHMARK(BM_CmaGeneration)->Arg(224)->Arg(875);

}  // namespace

BENCHMARK_MAIN();
