#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "scope/serialize.hpp"
#include "scope/sweep.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`, capturing stdout; stderr is discarded.
Run cli(const std::string& args) {
  const std::string cmd = std::string(SCOPE_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scope_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains(const std::string& s, const std::string& needle) {
  return s.find(needle) != std::string::npos;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("train --help").code, 0);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("train --no-such-flag").code, 2);
  EXPECT_EQ(cli("train --k 0").code, 2);
  EXPECT_EQ(cli("train --p 100 --generations 0 --out /tmp/scope_cli_bad").code, 2);
  EXPECT_EQ(cli("train --k 200 --generations 0 --out /tmp/scope_cli_bad").code, 2);
  EXPECT_EQ(cli("eval").code, 2);
  EXPECT_EQ(cli("eval --params /nonexistent/params.json").code, 2);
  EXPECT_EQ(cli("serve-env --stdio --listen 127.0.0.1:0").code, 2);
}

TEST(Cli, TrainWritesArtifactsAndEvalReadsThem) {
  const auto dir = temp_dir("train");
  const auto run = cli("train --k 8 --p 10 --generations 2 --seed 3 --max-steps 40 --out " +
                       dir.string());
  ASSERT_EQ(run.code, 0) << run.out;
  EXPECT_TRUE(contains(run.out, "# effective configuration (master_seed 3)"));
  EXPECT_TRUE(contains(run.out, "# policy parameters: 56"));
  EXPECT_TRUE(contains(run.out, "gen 0 "));
  EXPECT_TRUE(contains(run.out, "gen 1 "));
  for (const char* f : {"config.json", "checkpoint.json", "history.csv", "best_params.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto policy = scope::load_policy(dir / "best_params.json");
  EXPECT_EQ(policy.params.shape.k, 8);
  EXPECT_EQ(policy.p, 10.0);
  EXPECT_EQ(slurp(dir / "history.csv").rfind("generation,best,mean,std,sigma,wall_ms\n", 0), 0u);

  const auto eval = cli("eval --params " + (dir / "best_params.json").string() +
                        " --episodes 3 --max-steps 40");
  ASSERT_EQ(eval.code, 0) << eval.out;
  EXPECT_TRUE(contains(eval.out, "episodes,mean,std,best,top5_mean\n3,"));
  EXPECT_TRUE(contains(eval.out, "\"p\": 10.0"));
  // Deterministic evaluation: three identical episodes.
  EXPECT_TRUE(contains(eval.out, ",0,")) << eval.out;

  const auto robust = cli("robust --params " + (dir / "best_params.json").string() +
                          " --episodes 4 --max-steps 40");
  ASSERT_EQ(robust.code, 0) << robust.out;
  EXPECT_TRUE(contains(robust.out, "SCOPE Parameters | Best | Average"));
  EXPECT_TRUE(contains(robust.out, "K=8, P=10 | "));
  EXPECT_TRUE(contains(robust.out, "| 56\n"));

  // Resuming a finished run with a larger budget continues where it stopped.
  const auto more = cli("train --k 8 --p 10 --generations 3 --seed 3 --max-steps 40 --resume --out " +
                        dir.string());
  ASSERT_EQ(more.code, 0) << more.out;
  EXPECT_TRUE(contains(more.out, "gen 2 "));
  EXPECT_FALSE(contains(more.out, "gen 1 "));

  // Resuming with a different run identity is refused.
  EXPECT_EQ(cli("train --k 8 --p 25 --generations 3 --seed 3 --max-steps 40 --resume --out " +
                dir.string())
                .code,
            2);
}

TEST(Cli, ConfigFileAndOverrides) {
  const auto dir = temp_dir("config");
  std::ofstream(dir / "c.json") << R"({"k": 6, "p": 5, "generations": 0, "env": {"max_steps": 9}})";
  const auto run = cli("train --config " + (dir / "c.json").string() + " --p 0.9 --out " +
                       (dir / "out").string());
  ASSERT_EQ(run.code, 0) << run.out;
  EXPECT_TRUE(contains(run.out, "\"k\": 6"));
  EXPECT_TRUE(contains(run.out, "\"p\": 0.9"));
  EXPECT_TRUE(contains(run.out, "\"max_steps\": 9"));

  std::ofstream(dir / "bad.json") << R"({"k": 6, "typo": 1})";
  EXPECT_EQ(cli("train --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string()).code, 2);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(cli("train --config " + (dir / "broken.json").string()).code, 2);
}

TEST(Cli, SweepWritesHeatmap) {
  const auto dir = temp_dir("sweep");
  std::ofstream(dir / "grid.json")
      << R"({"k_values": [4, 6], "p_values": [25], "trials_per_cell": 2,)"
      << R"( "generations_per_trial": 1, "base": {"population": 4, "env": {"max_steps": 15}}})";
  const auto run = cli("sweep --grid " + (dir / "grid.json").string() + " --out " +
                       (dir / "out").string());
  ASSERT_EQ(run.code, 0) << run.out;
  const auto rows = scope::load_heatmap(dir / "out" / "heatmap.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].k, 4);
  EXPECT_EQ(rows[1].k, 6);
  ASSERT_TRUE(rows[0].stats.has_value());
  EXPECT_EQ(rows[0].stats->trials, 2u);
  const auto raw = slurp(dir / "out" / "raw_scores.csv");
  EXPECT_EQ(std::count(raw.begin(), raw.end(), '\n'), 5);

  std::ofstream(dir / "bad.json") << R"({"k_values": [4, 4]})";
  EXPECT_EQ(cli("sweep --grid " + (dir / "bad.json").string() + " --out " + (dir / "o2").string()).code, 2);
}

TEST(Cli, InspectDumpsIntermediates) {
  const auto dir = temp_dir("inspect");
  const auto run = cli("inspect --env-step 10 --k 16 --p 25 --out " + dir.string());
  ASSERT_EQ(run.code, 0) << run.out;
  EXPECT_TRUE(contains(run.out, "coefficients 256"));
  for (const char* f : {"frame.pgm", "full.csv", "truncated.csv", "sparse.csv", "mask.csv", "energy.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto truncated = slurp(dir / "truncated.csv");
  EXPECT_EQ(std::count(truncated.begin(), truncated.end(), '\n'), 16);

  // Reading the dumped frame back gives the same report.
  const auto again = cli("inspect --frame " + (dir / "frame.pgm").string() + " --k 16 --p 25 --out " +
                         (dir / "again").string());
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(dir / "again" / "energy.csv"), slurp(dir / "energy.csv"));
  EXPECT_EQ(cli("inspect --env-step 1 --k 500 --out " + (dir / "x").string()).code, 2);
}

TEST(Cli, ProtocolEnvironmentMatchesBuiltin) {
  const auto dir = temp_dir("proto");
  const std::string common = "train --k 6 --generations 2 --seed 4 --max-steps 30 --quiet ";
  const auto local = cli(common + "--out " + (dir / "a").string());
  const std::string server = std::string("'proto:exec:") + SCOPE_CLI_PATH + " serve-env --stdio'";
  const auto remote = cli(common + "--env " + server + " --out " + (dir / "b").string());
  ASSERT_EQ(local.code, 0);
  ASSERT_EQ(remote.code, 0) << remote.out;
  auto strip_wall = [](const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  EXPECT_EQ(strip_wall(slurp(dir / "a" / "history.csv")), strip_wall(slurp(dir / "b" / "history.csv")));
  EXPECT_EQ(cli(common + "--env proto:nowhere --out " + (dir / "c").string()).code, 2);
}
