#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scope/cmaes.hpp"
#include "scope/environment.hpp"
#include "scope/policy.hpp"
#include "scope/serialize.hpp"
#include "scope/stats.hpp"

namespace scope {

/// Makes a fresh environment at agent granularity (frame skip already
/// applied). Called once per evaluator thread.
using EnvFactory = std::function<std::unique_ptr<Environment>()>;

/// FrameSkip(ShooterGame) built from `env`.
EnvFactory builtin_factory(const EnvConfig& env);

/// Opens a new protocol connection per call; see proto::open_transport for
/// the address syntax. The remote side is expected to apply its own frame
/// skip, so EnvConfig::frame_skip does not apply.
EnvFactory protocol_factory(std::string address);

struct TrainConfig {
  int k = 32;
  double p = 25.0;
  int m = 1;
  int n = 6;
  bool include_bias = false;
  std::uint64_t generations = 200;
  EnvConfig env;
  std::string env_address;  // empty: built-in game; otherwise a protocol address

  std::size_t population = 0;  // 0: standard default for the dimension
  std::size_t parents = 0;     // 0: population / 2
  double sigma0 = 0.5;

  int parallelism = 1;
  std::uint64_t checkpoint_every = 10;
  std::uint64_t master_seed = 0;

  PolicyShape shape() const { return {k, m, n, include_bias}; }
  /// Resolved optimizer config; dimension = shape().param_count().
  cma::CmaConfig cma_config() const;
  EnvFactory factory() const;
  void validate() const;
};

Json to_json(const TrainConfig& config);
void apply_json(const Json& j, TrainConfig& config);

/// Per-frame SCOPE pipeline: truncated DCT, sparsification, bilinear map,
/// argmax.
class Pipeline {
 public:
  Pipeline(const PolicyParams& params, double p);

  int act(const Frame& frame) const;

 private:
  const PolicyParams* params_;
  double p_;
};

struct EpisodeResult {
  double score = 0.0;
  int steps = 0;
};

/// Plays one episode on a stack prepared by the caller. `observer`, when
/// set, sees every step result in order.
EpisodeResult run_episode(const Pipeline& pipeline, EnvStack& stack, std::uint64_t game_seed,
                          std::uint64_t sticky_seed,
                          const std::function<void(int action, const StepResult&)>& observer = {});

/// One deterministic episode on a freshly built environment.
double evaluate_policy(const PolicyParams& params, const EnvConfig& env, double p,
                       std::uint64_t episode_seed, const EnvFactory& factory = {});

struct EpisodeJob {
  const PolicyParams* params = nullptr;
  std::uint64_t game_seed = 0;
  std::uint64_t sticky_seed = 0;
};

/// Runs episodes on a fixed pool of environment stacks, one per worker.
/// Results come back in job order whatever the schedule.
class Evaluator {
 public:
  Evaluator(EnvFactory factory, const EnvConfig& env, int parallelism);
  ~Evaluator();

  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;

  /// Throws EvaluationError naming the first failing job (by index).
  std::vector<double> run(std::span<const EpisodeJob> jobs, double p, double sticky_prob);

  int parallelism() const { return parallelism_; }

 private:
  EnvStack& stack(int worker, double sticky_prob);

  EnvFactory factory_;
  EnvConfig env_;
  int parallelism_;
  std::vector<std::unique_ptr<EnvStack>> stacks_;
};

struct GenerationRecord {
  std::uint64_t generation = 0;
  double best = 0.0;             // best fitness seen so far, this generation included
  double generation_best = 0.0;  // best fitness of this generation alone
  double mean = 0.0;
  double std = 0.0;
  double sigma = 0.0;  // step size after the update
  double wall_ms = 0.0;

  /// Equality ignoring wall_ms.
  bool same_result(const GenerationRecord& other) const;
};

using TrainHistory = std::vector<GenerationRecord>;

/// CSV with header generation,best,mean,std,sigma,wall_ms.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Seeds of candidate `index` in generation `generation`.
std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t generation, std::uint64_t index);
std::uint64_t sticky_seed(std::uint64_t master_seed, std::uint64_t generation, std::uint64_t index);

struct GenerationOutcome {
  GenerationRecord record;
  std::vector<Eigen::VectorXd> candidates;
  std::vector<double> fitness;
};

/// ask, one episode per candidate, tell.
GenerationOutcome run_generation(cma::CmaState& state, const TrainConfig& config,
                                 Evaluator& evaluator);

struct TrainResult {
  PolicyParams best;
  double best_fitness = 0.0;  // -inf until a generation completes
  TrainHistory history;
  cma::CmaState state;
  std::string stop_reason;

  /// Bitwise comparison of everything but wall-clock times.
  bool same_result(const TrainResult& other) const;
};

inline constexpr int kCheckpointVersion = 1;

Json checkpoint_json(const TrainConfig& config, const TrainResult& progress);
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     const TrainResult& progress);
/// Throws ConfigError if the checkpoint was written for a different run
/// (anything but generations, parallelism and checkpoint_every differs).
TrainResult load_checkpoint(const std::filesystem::path& path, const TrainConfig& config);

struct TrainOptions {
  std::filesystem::path checkpoint;  // empty: no checkpoints
  bool resume = false;               // continue from `checkpoint` if it exists
  EnvFactory factory;                // overrides config.factory()
  std::function<void(const GenerationRecord&)> on_generation;
  /// Stop after this many generations in this call (for interruption tests).
  std::optional<std::uint64_t> stop_after;
};

TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

/// Statistics of a set of evaluation episodes.
struct EvalReport {
  std::vector<double> scores;
  Summary summary;

  static EvalReport from_scores(std::vector<double> scores);
  std::size_t episodes() const { return scores.size(); }
};

struct RobustnessConfig {
  std::size_t episodes = 10;
  double sticky_prob = 0.25;
  std::uint64_t seed = 0;  // game seed shared by every episode
};

/// Deterministic score next to the sticky-action distribution, as in the
/// paired deterministic / "(Sto.)" columns of the results table.
struct RobustnessReport {
  double deterministic = 0.0;
  double sticky_prob = 0.0;
  EvalReport stochastic;
};

/// `episodes` episodes from game seed `seed`, episode i using sticky seed
/// derive_seed(derive_seed(seed, kStickyStream), 0, i). With sticky_prob 0
/// every score is the same. Throws InvalidArgument for zero episodes.
EvalReport evaluate_episodes(const PolicyParams& params, const TrainConfig& config,
                             std::size_t episodes, double sticky_prob, std::uint64_t seed,
                             const TrainOptions& options = {});

/// Plays `rc.episodes` episodes from the same game seed, each with its own
/// sticky-action seed. Throws InvalidArgument for zero episodes.
RobustnessReport robustness_eval(const PolicyParams& params, const TrainConfig& config,
                                 const RobustnessConfig& rc, const TrainOptions& options = {});

/// Header and row in the layout
/// "params | Best | Average ± σ | Best (Sto.) | Average ± σ (Sto.) | Parameter Count".
std::string paired_table_header();
std::string paired_table_row(const std::string& label, const Summary& deterministic,
                             const Summary& stochastic, std::size_t param_count);

}  // namespace scope
