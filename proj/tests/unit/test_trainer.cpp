#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "scope/error.hpp"
#include "scope/seeds.hpp"
#include "scope/trainer.hpp"

namespace fs = std::filesystem;

namespace {

// Small, fast configuration: 8x8 coefficients, 60 agent steps per episode.
scope::TrainConfig small_config(std::uint64_t seed = 1) {
  scope::TrainConfig c;
  c.k = 8;
  c.p = 25.0;
  c.generations = 4;
  c.env.max_steps = 60;
  c.master_seed = seed;
  c.checkpoint_every = 2;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scope_test_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

scope::PolicyParams random_policy(std::uint64_t seed, scope::PolicyShape shape) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  Eigen::VectorXd v(static_cast<Eigen::Index>(shape.param_count()));
  for (auto& x : v) x = nd(rng);
  return scope::unflatten(v, shape);
}

}  // namespace

TEST(Pipeline, ZeroPolicyPlaysNoop) {
  const auto params = scope::PolicyParams::zeros({16, 1, 6, false});
  const scope::Pipeline pipeline(params, 25.0);
  scope::ShooterGame game;
  EXPECT_EQ(pipeline.act(game.reset(0)), 0);
  scope::EnvConfig env;
  env.max_steps = 300;
  EXPECT_EQ(scope::evaluate_policy(params, env, 25.0, 1), 0.0);
  EXPECT_EQ(scope::evaluate_policy(params, env, 25.0, 2), 0.0);
}

TEST(Pipeline, RejectsNonFiniteLogits) {
  auto params = scope::PolicyParams::zeros({4, 1, 6, false});
  params.w1(0, 0) = std::numeric_limits<double>::quiet_NaN();
  params.w2(0, 0) = 1.0;
  scope::ShooterGame game;
  EXPECT_THROW(scope::Pipeline(params, 0.0).act(game.reset(0)), scope::EvaluationError);
}

TEST(Episode, ScoreEqualsReplayedRewardSum) {
  const auto params = random_policy(3, {8, 1, 6, false});
  scope::EnvConfig env;
  env.max_steps = 400;
  auto recorder = std::make_unique<oracle::Recorder>(scope::make_builtin_env(env));
  oracle::Recorder* rec = recorder.get();
  scope::EnvStack stack(std::move(recorder), 0.25, env.max_steps);
  std::vector<int> chosen;
  const auto result = scope::run_episode(scope::Pipeline(params, 10.0), stack, 11, 12,
                                         [&](int a, const scope::StepResult&) { chosen.push_back(a); });
  ASSERT_EQ(result.steps, static_cast<int>(rec->actions.size()));
  double sum = 0.0;
  for (double r : rec->rewards) sum += r;
  EXPECT_EQ(result.score, sum);

  // Replaying the executed actions open-loop on a fresh game reproduces the score.
  auto fresh = scope::make_builtin_env(env);
  fresh->reset(11);
  double replayed = 0.0;
  for (int a : rec->actions) replayed += fresh->step(a).reward;
  EXPECT_EQ(replayed, result.score);

  // Sticky repeats are visible as executed != chosen.
  int differ = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) differ += chosen[i] != rec->actions[i];
  EXPECT_LE(static_cast<std::uint64_t>(differ), stack.sticky().repeats());
}

TEST(Episode, Deterministic) {
  const auto params = random_policy(4, {8, 1, 6, false});
  scope::EnvConfig env;
  env.max_steps = 300;
  const double a = scope::evaluate_policy(params, env, 5.0, 77);
  const double b = scope::evaluate_policy(params, env, 5.0, 77);
  EXPECT_EQ(a, b);
}

TEST(Evaluator, ResultsIndependentOfParallelism) {
  const auto shape = scope::PolicyShape{8, 1, 6, false};
  std::vector<scope::PolicyParams> policies;
  for (int i = 0; i < 12; ++i) policies.push_back(random_policy(100 + i, shape));
  std::vector<scope::EpisodeJob> jobs;
  for (int i = 0; i < 12; ++i) {
    jobs.push_back({&policies[static_cast<std::size_t>(i)], scope::derive_seed(5, 0, i),
                    scope::derive_seed(6, 0, i)});
  }
  scope::EnvConfig env;
  env.max_steps = 80;
  scope::Evaluator one(scope::builtin_factory(env), env, 1);
  scope::Evaluator many(scope::builtin_factory(env), env, 8);
  const auto a = one.run(jobs, 25.0, 0.25);
  const auto b = many.run(jobs, 25.0, 0.25);
  EXPECT_EQ(a, b);
  EXPECT_EQ(one.run(jobs, 25.0, 0.25), a);  // reused stacks carry no state over
}

TEST(Evaluator, ReportsFailingJob) {
  auto bad = scope::PolicyParams::zeros({4, 1, 6, false});
  bad.w1(0, 0) = std::numeric_limits<double>::infinity();
  bad.w2(0, 0) = 1.0;
  const auto good = scope::PolicyParams::zeros({4, 1, 6, false});
  std::vector<scope::EpisodeJob> jobs = {{&good, 1, 1}, {&bad, 2, 2}, {&good, 3, 3}};
  scope::EnvConfig env;
  env.max_steps = 10;
  scope::Evaluator ev(scope::builtin_factory(env), env, 2);
  try {
    ev.run(jobs, 0.0, 0.0);
    FAIL() << "expected EvaluationError";
  } catch (const scope::EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("episode 1"), std::string::npos) << e.what();
  }
}

TEST(Seeds, DistinctAcrossGenerationsCandidatesAndStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t g = 0; g < 200; ++g) {
    for (std::uint64_t i = 0; i < 30; ++i) {
      ASSERT_TRUE(seen.insert(scope::episode_seed(7, g, i)).second);
      ASSERT_TRUE(seen.insert(scope::sticky_seed(7, g, i)).second);
    }
  }
  EXPECT_NE(scope::episode_seed(7, 0, 0), scope::episode_seed(8, 0, 0));
}

TEST(Train, SameSeedSameRun) {
  const auto c = small_config(3);
  const auto a = scope::train(c);
  const auto b = scope::train(c);
  EXPECT_TRUE(a.same_result(b));
  EXPECT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.stop_reason, "budget");
  auto other = c;
  other.master_seed = 4;
  EXPECT_FALSE(scope::train(other).same_result(a));
}

TEST(Train, ParallelismDoesNotChangeResults) {
  auto c = small_config(5);
  const auto serial = scope::train(c);
  c.parallelism = 4;
  EXPECT_TRUE(scope::train(c).same_result(serial));
}

TEST(Train, HistoryInvariants) {
  const auto r = scope::train(small_config(6));
  double running = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < r.history.size(); ++g) {
    const auto& h = r.history[g];
    EXPECT_EQ(h.generation, g);  // index of the generation, as used for its seeds
    running = std::max(running, h.generation_best);
    EXPECT_EQ(h.best, running);
    EXPECT_LE(h.mean, h.generation_best);
    EXPECT_GE(h.std, 0.0);
    EXPECT_GT(h.sigma, 0.0);
  }
  EXPECT_EQ(r.best_fitness, running);
}

TEST(Train, BestPolicyReproducesBestFitness) {
  const auto c = small_config(8);
  const auto r = scope::train(c);
  // Find the generation and candidate that achieved the best score.
  const auto it = std::find_if(r.history.begin(), r.history.end(),
                               [&](const auto& h) { return h.generation_best == r.best_fitness; });
  ASSERT_NE(it, r.history.end());
  const std::uint64_t g = it->generation;
  bool matched = false;
  for (std::uint64_t i = 0; i < r.state.population && !matched; ++i) {
    scope::EnvStack stack(scope::make_builtin_env(c.env), c.env.sticky_prob, c.env.max_steps);
    const auto e = scope::run_episode(scope::Pipeline(r.best, c.p), stack,
                                      scope::episode_seed(c.master_seed, g, i),
                                      scope::sticky_seed(c.master_seed, g, i));
    matched = e.score == r.best_fitness;
  }
  EXPECT_TRUE(matched);
}

TEST(Train, ZeroGenerations) {
  auto c = small_config();
  c.generations = 0;
  const auto r = scope::train(c);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.stop_reason, "budget");
  EXPECT_TRUE(r.best == scope::PolicyParams::zeros(c.shape()));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto dir = temp_dir("resume");
  const auto c = small_config(9);
  const auto full = scope::train(c);

  scope::TrainOptions first;
  first.checkpoint = dir / "ck.json";
  first.stop_after = 3;
  const auto partial = scope::train(c, first);
  EXPECT_EQ(partial.stop_reason, "interrupted");
  EXPECT_EQ(partial.history.size(), 3u);

  scope::TrainOptions second;
  second.checkpoint = dir / "ck.json";
  second.resume = true;
  const auto resumed = scope::train(c, second);
  EXPECT_TRUE(resumed.same_result(full));
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const auto dir = temp_dir("checkpoint");
  auto c = small_config(10);
  c.generations = 2;
  const auto r = scope::train(c);
  scope::save_checkpoint(dir / "ck.json", c, r);
  EXPECT_TRUE(scope::load_checkpoint(dir / "ck.json", c).same_result(r));

  auto longer = c;
  longer.generations = 50;
  longer.parallelism = 3;
  EXPECT_NO_THROW(scope::load_checkpoint(dir / "ck.json", longer));

  auto different = c;
  different.p = 10.0;
  EXPECT_THROW(scope::load_checkpoint(dir / "ck.json", different), scope::ConfigError);
  different = c;
  different.env.max_steps = 61;
  EXPECT_THROW(scope::load_checkpoint(dir / "ck.json", different), scope::ConfigError);
}

TEST(Checkpoint, NeverImprovedRunStoresNullFitness) {
  auto c = small_config();
  c.generations = 0;
  const auto r = scope::train(c);
  const auto j = scope::checkpoint_json(c, r);
  EXPECT_TRUE(j["best"]["fitness"].is_null());
}

TEST(History, CsvLayout) {
  const auto dir = temp_dir("csv");
  scope::TrainHistory h(2);
  h[0] = {0, 10, 10, 5, 2.5, 0.5, 12.0};
  h[1] = {1, 30, 30, 12.5, 7.25, 0.45, 11.0};
  scope::write_history_csv(dir / "h.csv", h);
  std::ifstream in(dir / "h.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(),
            "generation,best,mean,std,sigma,wall_ms\n"
            "0,10,5,2.5,0.5,12\n"
            "1,30,12.5,7.25,0.45,11\n");
}

TEST(TrainConfig, Validation) {
  auto c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.k = 161;
  EXPECT_THROW(c.validate(), scope::ConfigError);
  c = small_config();
  c.p = 100.0;
  EXPECT_THROW(c.validate(), scope::ConfigError);
  c = small_config();
  c.sigma0 = 0.0;
  EXPECT_THROW(c.validate(), scope::ConfigError);
  c = small_config();
  c.n = 5;
  EXPECT_THROW(c.validate(), scope::ConfigError);
}

TEST(TrainConfig, JsonRoundTrip) {
  auto c = small_config(42);
  c.include_bias = true;
  c.env.sticky_prob = 0.1;
  scope::TrainConfig back;
  scope::apply_json(scope::to_json(c), back);
  EXPECT_EQ(scope::to_json(back), scope::to_json(c));
  EXPECT_THROW(scope::apply_json(scope::Json::parse(R"({"kk": 3})"), back), scope::ConfigError);
}

TEST(Robustness, StickyZeroGivesIdenticalEpisodes) {
  const auto c = small_config();
  const auto params = random_policy(11, c.shape());
  const auto report = scope::robustness_eval(params, c, {.episodes = 5, .sticky_prob = 0.0, .seed = 3});
  for (double s : report.stochastic.scores) EXPECT_EQ(s, report.deterministic);
  EXPECT_EQ(report.stochastic.summary.std, 0.0);
}

TEST(Robustness, StickyEpisodesAreReproducible) {
  auto c = small_config();
  c.env.max_steps = 200;
  const auto params = random_policy(12, c.shape());
  const auto a = scope::evaluate_episodes(params, c, 6, 0.25, 4);
  const auto b = scope::evaluate_episodes(params, c, 6, 0.25, 4);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.episodes(), 6u);
  EXPECT_THROW(scope::evaluate_episodes(params, c, 0, 0.25, 4), scope::InvalidArgument);
}

TEST(Robustness, TableRowLayout) {
  scope::Summary det{1, 1290, 0, 1290, 1290, std::nullopt};
  scope::Summary sto{10, 1034.5, 181.25, 1390, 700, std::nullopt};
  EXPECT_EQ(scope::paired_table_row("K=125, P=25", det, sto, 875),
            "K=125, P=25 | 1290 | 1290.0 ± 0.0 | 1390 | 1034.5 ± 181.2 | 875");
  EXPECT_EQ(scope::paired_table_header(),
            "SCOPE Parameters | Best | Average ± σ | Best (Sto.) | Average ± σ (Sto.) | Parameter Count");
}
