#include "scope/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

#include "scope/envproto.hpp"
#include "scope/error.hpp"
#include "scope/seeds.hpp"
#include "scope/sparsity.hpp"
#include "scope/transform.hpp"

namespace scope {

using json_detail::check_keys;
using json_detail::read;

// ---------------------------------------------------------------------------
// Configuration

EnvFactory builtin_factory(const EnvConfig& env) {
  return [env] { return make_builtin_env(env); };
}

EnvFactory protocol_factory(std::string address) {
  return [address] { return proto::connect(proto::open_transport(address)); };
}

cma::CmaConfig TrainConfig::cma_config() const {
  cma::CmaConfig c;
  c.dimension = shape().param_count();
  c.population = population;
  c.parents = parents;
  c.initial_sigma = sigma0;
  c.seed = derive_seed(master_seed, kOptimizerStream);
  return c.resolved();
}

EnvFactory TrainConfig::factory() const {
  return env_address.empty() ? builtin_factory(env) : protocol_factory(env_address);
}

void TrainConfig::validate() const {
  env.validate();
  try {
    shape().validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!env_address.empty()) proto::validate_address(env_address);
  if (env_address.empty()) {
    if (k > std::min(env.height, env.width)) {
      throw ConfigError("k=" + std::to_string(k) + " exceeds min(height, width) = " +
                        std::to_string(std::min(env.height, env.width)));
    }
    if (m * n != kActionCount) {
      throw ConfigError("m*n must equal the built-in game's " + std::to_string(kActionCount) +
                        " actions");
    }
  }
  if (!(p >= 0.0 && p < 100.0)) throw ConfigError("p must lie in [0, 100)");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw ConfigError("sigma0 must be positive");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  cma_config().validate();
}

Json to_json(const TrainConfig& c) {
  return {{"k", c.k},
          {"p", c.p},
          {"m", c.m},
          {"n", c.n},
          {"include_bias", c.include_bias},
          {"generations", c.generations},
          {"env", to_json(c.env)},
          {"env_address", c.env_address},
          {"population", c.population},
          {"parents", c.parents},
          {"sigma0", c.sigma0},
          {"parallelism", c.parallelism},
          {"checkpoint_every", c.checkpoint_every},
          {"master_seed", c.master_seed}};
}

void apply_json(const Json& j, TrainConfig& c) {
  check_keys(j,
             {"k", "p", "m", "n", "include_bias", "generations", "env", "env_address",
              "population", "parents", "sigma0", "parallelism", "checkpoint_every",
              "master_seed"},
             "train config");
  read(j, "k", c.k);
  read(j, "p", c.p);
  read(j, "m", c.m);
  read(j, "n", c.n);
  read(j, "include_bias", c.include_bias);
  read(j, "generations", c.generations);
  if (auto it = j.find("env"); it != j.end()) apply_json(*it, c.env);
  read(j, "env_address", c.env_address);
  read(j, "population", c.population);
  read(j, "parents", c.parents);
  read(j, "sigma0", c.sigma0);
  read(j, "parallelism", c.parallelism);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "master_seed", c.master_seed);
}

// ---------------------------------------------------------------------------
// Episodes

Pipeline::Pipeline(const PolicyParams& params, double p) : params_(&params), p_(p) {}

int Pipeline::act(const Frame& frame) const {
  const SparseBlock input = sparsify(dct2_truncated(frame, params_->shape.k), p_);
  const ActionLogits logits = forward(*params_, input);
  if (!logits.values.allFinite()) throw EvaluationError("policy produced non-finite logits");
  return select_action(logits);
}

EpisodeResult run_episode(const Pipeline& pipeline, EnvStack& stack, std::uint64_t game_seed,
                          std::uint64_t sticky_seed,
                          const std::function<void(int, const StepResult&)>& observer) {
  Frame frame = stack.begin_episode(game_seed, sticky_seed);
  EpisodeResult result;
  for (;;) {
    const int action = pipeline.act(frame);
    StepResult r = stack.env().step(action);
    result.score += r.reward;
    ++result.steps;
    if (observer) observer(action, r);
    if (r.terminated) break;
    frame = std::move(r.frame);
  }
  return result;
}

double evaluate_policy(const PolicyParams& params, const EnvConfig& env, double p,
                       std::uint64_t episode_seed, const EnvFactory& factory) {
  EnvStack stack(factory ? factory() : make_builtin_env(env), env.sticky_prob, env.max_steps);
  return run_episode(Pipeline(params, p), stack, episode_seed,
                     derive_seed(episode_seed, kStickyStream))
      .score;
}

Evaluator::Evaluator(EnvFactory factory, const EnvConfig& env, int parallelism)
    : factory_(std::move(factory)), env_(env), parallelism_(parallelism) {
  if (!factory_) throw InvalidArgument("evaluator needs an environment factory");
  if (parallelism_ < 1) throw InvalidArgument("parallelism must be >= 1");
  stacks_.resize(static_cast<std::size_t>(parallelism_));
}

Evaluator::~Evaluator() = default;

EnvStack& Evaluator::stack(int worker, double sticky_prob) {
  auto& slot = stacks_[static_cast<std::size_t>(worker)];
  if (!slot) {
    auto env = factory_();
    if (env->action_count() < 1) throw EvaluationError("environment has no actions");
    slot = std::make_unique<EnvStack>(std::move(env), sticky_prob, env_.max_steps);
  }
  slot->sticky().set_probability(sticky_prob);
  return *slot;
}

std::vector<double> Evaluator::run(std::span<const EpisodeJob> jobs, double p, double sticky_prob) {
  std::vector<double> scores(jobs.size(), 0.0);
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};

  auto work = [&](int worker) {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        EnvStack& s = stack(worker, sticky_prob);
        const Pipeline pipeline(*jobs[i].params, p);
        scores[i] = run_episode(pipeline, s, jobs[i].game_seed, jobs[i].sticky_seed).score;
      } catch (...) {
        errors[i] = std::current_exception();
        // A failed stack may be mid-episode or disconnected; rebuild it.
        stacks_[static_cast<std::size_t>(worker)].reset();
      }
    }
  };

  const int workers = static_cast<int>(std::min<std::size_t>(parallelism_, jobs.size()));
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw EvaluationError("episode " + std::to_string(i) + " failed: " + e.what());
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Generations

bool GenerationRecord::same_result(const GenerationRecord& o) const {
  return generation == o.generation && best == o.best && generation_best == o.generation_best &&
         mean == o.mean && std == o.std && sigma == o.sigma;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::string out = "generation,best,mean,std,sigma,wall_ms\n";
  for (const auto& r : history) {
    out += std::to_string(r.generation) + "," + format_double(r.best) + "," +
           format_double(r.mean) + "," + format_double(r.std) + "," + format_double(r.sigma) +
           "," + format_double(r.wall_ms) + "\n";
  }
  write_file_atomic(path, out);
}

std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t generation, std::uint64_t index) {
  return derive_seed(derive_seed(master_seed, kEpisodeStream), generation, index);
}

std::uint64_t sticky_seed(std::uint64_t master_seed, std::uint64_t generation, std::uint64_t index) {
  return derive_seed(derive_seed(master_seed, kStickyStream), generation, index);
}

GenerationOutcome run_generation(cma::CmaState& state, const TrainConfig& config,
                                 Evaluator& evaluator) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t gen = state.generation;
  const PolicyShape shape = config.shape();

  GenerationOutcome out;
  out.candidates = cma::ask(state);

  std::vector<PolicyParams> policies;
  policies.reserve(out.candidates.size());
  for (const auto& c : out.candidates) policies.push_back(unflatten(c, shape));

  std::vector<EpisodeJob> jobs(policies.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    jobs[i] = {&policies[i], episode_seed(config.master_seed, gen, i),
               sticky_seed(config.master_seed, gen, i)};
  }
  try {
    out.fitness = evaluator.run(jobs, config.p, config.env.sticky_prob);
  } catch (const EvaluationError& e) {
    throw EvaluationError("generation " + std::to_string(gen) + ": " + e.what());
  }

  cma::tell(state, out.candidates, out.fitness);

  const Summary s = aggregate(out.fitness);
  out.record.generation = gen;
  out.record.generation_best = s.best;
  out.record.best = s.best;
  out.record.mean = s.mean;
  out.record.std = s.std;
  out.record.sigma = state.sigma;
  out.record.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Training

bool TrainResult::same_result(const TrainResult& o) const {
  if (!(best == o.best) || !(state == o.state) || history.size() != o.history.size()) return false;
  if (std::memcmp(&best_fitness, &o.best_fitness, sizeof(double)) != 0) return false;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!history[i].same_result(o.history[i])) return false;
  }
  return true;
}

namespace {

Json record_json(const GenerationRecord& r) {
  return {{"generation", r.generation}, {"best", r.best},   {"generation_best", r.generation_best},
          {"mean", r.mean},             {"std", r.std},     {"sigma", r.sigma},
          {"wall_ms", r.wall_ms}};
}

GenerationRecord record_from_json(const Json& j) {
  check_keys(j, {"generation", "best", "generation_best", "mean", "std", "sigma", "wall_ms"},
             "history record");
  GenerationRecord r;
  read(j, "generation", r.generation);
  read(j, "best", r.best);
  read(j, "generation_best", r.generation_best);
  read(j, "mean", r.mean);
  read(j, "std", r.std);
  read(j, "sigma", r.sigma);
  read(j, "wall_ms", r.wall_ms);
  return r;
}

// Keys that may change between an interrupted run and its continuation.
Json run_identity(Json config) {
  config.erase("generations");
  config.erase("parallelism");
  config.erase("checkpoint_every");
  return config;
}

}  // namespace

Json checkpoint_json(const TrainConfig& config, const TrainResult& progress) {
  Json history = Json::array();
  for (const auto& r : progress.history) history.push_back(record_json(r));
  Json best_fitness = std::isfinite(progress.best_fitness) ? Json(progress.best_fitness) : Json();
  return {{"format", "scope-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", to_json(config)},
          {"best", {{"fitness", best_fitness}, {"policy", to_json(progress.best)}}},
          {"state", to_json(progress.state)},
          {"history", history}};
}

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     const TrainResult& progress) {
  write_file_atomic(path, checkpoint_json(config, progress).dump() + "\n");
}

TrainResult load_checkpoint(const std::filesystem::path& path, const TrainConfig& config) {
  const Json j = read_json_file(path);
  check_keys(j, {"format", "version", "config", "best", "state", "history"}, "checkpoint");
  if (!j.contains("format") || j["format"] != "scope-checkpoint") {
    throw ConfigError(path.string() + " is not a checkpoint");
  }
  if (!j.contains("version") || j["version"] != kCheckpointVersion) {
    throw ConfigError(path.string() + " has an unsupported checkpoint version");
  }
  if (!j.contains("config") || run_identity(j["config"]) != run_identity(to_json(config))) {
    throw ConfigError("checkpoint " + path.string() +
                      " was written for a different configuration");
  }
  TrainResult r;
  const Json& best = j.at("best");
  r.best_fitness = best.at("fitness").is_null() ? -std::numeric_limits<double>::infinity()
                                                : best.at("fitness").get<double>();
  r.best = policy_from_json(best.at("policy"));
  r.state = cma_state_from_json(j.at("state"));
  for (const auto& rec : j.at("history")) r.history.push_back(record_from_json(rec));
  if (r.state.dimension != config.shape().param_count() || !(r.best.shape == config.shape())) {
    throw ConfigError("checkpoint dimensions do not match the configuration");
  }
  if (r.history.size() != r.state.generation) {
    throw ConfigError("checkpoint history does not match its optimizer generation");
  }
  return r;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const PolicyShape shape = config.shape();

  TrainResult r;
  if (options.resume && !options.checkpoint.empty() && std::filesystem::exists(options.checkpoint)) {
    try {
      r = load_checkpoint(options.checkpoint, config);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("corrupt checkpoint " + options.checkpoint.string() + ": " + e.what());
    }
  } else {
    r.state = cma::init(config.cma_config());
    r.best = unflatten(r.state.mean, shape);
    r.best_fitness = -std::numeric_limits<double>::infinity();
  }

  Evaluator evaluator(options.factory ? options.factory : config.factory(), config.env,
                      config.parallelism);
  std::uint64_t done = 0;
  for (;;) {
    if (const cma::StopDecision stop = cma::should_stop(r.state, config.generations)) {
      r.stop_reason = stop.reason;
      break;
    }
    if (options.stop_after && done >= *options.stop_after) {
      r.stop_reason = "interrupted";
      break;
    }
    GenerationOutcome g = run_generation(r.state, config, evaluator);
    if (g.record.generation_best > r.best_fitness) {
      const auto winner = std::max_element(g.fitness.begin(), g.fitness.end()) - g.fitness.begin();
      r.best = unflatten(g.candidates[static_cast<std::size_t>(winner)], shape);
      r.best_fitness = g.record.generation_best;
    }
    g.record.best = r.best_fitness;
    r.history.push_back(g.record);
    if (options.on_generation) options.on_generation(g.record);
    ++done;
    if (!options.checkpoint.empty() && r.state.generation % config.checkpoint_every == 0) {
      save_checkpoint(options.checkpoint, config, r);
    }
  }
  if (!options.checkpoint.empty()) save_checkpoint(options.checkpoint, config, r);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport EvalReport::from_scores(std::vector<double> scores) {
  EvalReport r;
  r.summary = aggregate(scores);
  r.scores = std::move(scores);
  return r;
}

EvalReport evaluate_episodes(const PolicyParams& params, const TrainConfig& config,
                             std::size_t episodes, double sticky_prob, std::uint64_t seed,
                             const TrainOptions& options) {
  if (episodes == 0) throw InvalidArgument("evaluation needs at least one episode");
  if (!(sticky_prob >= 0.0 && sticky_prob <= 1.0)) {
    throw InvalidArgument("sticky probability must lie in [0, 1]");
  }
  params.validate();
  Evaluator evaluator(options.factory ? options.factory : config.factory(), config.env,
                      config.parallelism);
  const std::uint64_t sticky_base = derive_seed(seed, kStickyStream);
  std::vector<EpisodeJob> jobs(episodes);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    jobs[i] = {&params, seed, derive_seed(sticky_base, 0, i)};
  }
  return EvalReport::from_scores(evaluator.run(jobs, config.p, sticky_prob));
}

RobustnessReport robustness_eval(const PolicyParams& params, const TrainConfig& config,
                                 const RobustnessConfig& rc, const TrainOptions& options) {
  if (rc.episodes == 0) throw InvalidArgument("robustness evaluation needs at least one episode");
  RobustnessReport report;
  report.sticky_prob = rc.sticky_prob;
  report.deterministic = evaluate_episodes(params, config, 1, 0.0, rc.seed, options).scores.front();
  report.stochastic =
      evaluate_episodes(params, config, rc.episodes, rc.sticky_prob, rc.seed, options);
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string paired_table_header() {
  return "SCOPE Parameters | Best | Average ± σ | Best (Sto.) | Average ± σ (Sto.) | "
         "Parameter Count";
}

std::string paired_table_row(const std::string& label, const Summary& det, const Summary& sto,
                             std::size_t param_count) {
  return label + " | " + fixed(det.best, 0) + " | " + fixed(det.mean, 1) + " ± " +
         fixed(det.std, 1) + " | " + fixed(sto.best, 0) + " | " + fixed(sto.mean, 1) + " ± " +
         fixed(sto.std, 1) + " | " + std::to_string(param_count);
}

}  // namespace scope
