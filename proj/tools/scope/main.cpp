// scope: train, evaluate, sweep and inspect frequency-domain policies.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "scope/envproto.hpp"
#include "scope/error.hpp"
#include "scope/inspect.hpp"
#include "scope/serialize.hpp"
#include "scope/sweep.hpp"
#include "scope/trainer.hpp"

namespace fs = std::filesystem;
using namespace scope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Bad user input: exits with kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto load_input(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FileError& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(e.what());
  }
}

// Flags shared by every subcommand that builds a TrainConfig.
struct ConfigFlags {
  std::string config_file;
  std::optional<int> k;
  std::optional<double> p;
  std::optional<std::uint64_t> generations;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::optional<std::size_t> population;
  std::optional<double> sigma0;
  std::optional<int> max_steps;
  std::optional<std::uint64_t> checkpoint_every;
  std::string env;
  bool bias = false;
};

void add_env_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file (flags override it)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--env", f.env, "builtin or proto:ADDR (tcp:HOST:PORT, HOST:PORT, exec:CMD)");
  cmd->add_option("--parallelism", f.parallelism, "concurrent episode evaluators")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-steps", f.max_steps, "agent steps per episode")
      ->check(CLI::PositiveNumber);
}

TrainConfig resolve(const ConfigFlags& f) {
  TrainConfig c;
  if (!f.config_file.empty()) {
    load_input([&] {
      apply_json(read_json_file(f.config_file), c);
      return 0;
    });
  }
  if (f.k) c.k = *f.k;
  if (f.p) c.p = *f.p;
  if (f.generations) c.generations = *f.generations;
  if (f.seed) c.master_seed = *f.seed;
  if (f.parallelism) c.parallelism = *f.parallelism;
  if (f.population) c.population = *f.population;
  if (f.sigma0) c.sigma0 = *f.sigma0;
  if (f.max_steps) c.env.max_steps = *f.max_steps;
  if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
  if (f.bias) c.include_bias = true;
  if (!f.env.empty()) {
    if (f.env == "builtin") {
      c.env_address.clear();
    } else if (f.env.rfind("proto:", 0) == 0 && f.env.size() > 6) {
      c.env_address = f.env.substr(6);
    } else {
      throw UsageError("--env must be \"builtin\" or \"proto:ADDR\", got \"" + f.env + "\"");
    }
  }
  return c;
}

void echo_config(std::ostream& out, const TrainConfig& c) {
  Json j = to_json(c);
  j["dimension"] = c.shape().param_count();
  j["population_resolved"] = c.cma_config().population;
  out << "# effective configuration (master_seed " << c.master_seed << ")\n"
      << j.dump(2) << "\n"
      << "# policy parameters: " << c.shape().param_count() << "\n";
}

std::string fmt(double v) { return format_double(v); }

void print_report(const EvalReport& r) {
  const Summary& s = r.summary;
  std::cout << "episodes " << r.episodes() << "  mean " << fmt(s.mean) << "  std " << fmt(s.std)
            << "  best " << fmt(s.best) << "  top5_mean "
            << (s.top5_mean ? fmt(*s.top5_mean) : std::string("n/a")) << "\n";
  std::cout << "episodes,mean,std,best,top5_mean\n"
            << r.episodes() << "," << fmt(s.mean) << "," << fmt(s.std) << "," << fmt(s.best)
            << "," << (s.top5_mean ? fmt(*s.top5_mean) : std::string()) << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  ConfigFlags flags;
  std::string out = "scope-run";
  bool resume = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig config = resolve(a.flags);
  config.validate();
  echo_config(std::cout, config);

  const fs::path out = a.out;
  fs::create_directories(out);
  write_file_atomic(out / "config.json", to_json(config).dump(2) + "\n");

  TrainOptions options;
  options.checkpoint = out / "checkpoint.json";
  options.resume = a.resume;
  if (!a.quiet) {
    options.on_generation = [](const GenerationRecord& r) {
      std::printf("gen %llu  best %s  gen_best %s  mean %s  std %s  sigma %.6g  %.0f ms\n",
                  static_cast<unsigned long long>(r.generation), fmt(r.best).c_str(),
                  fmt(r.generation_best).c_str(), fmt(r.mean).c_str(), fmt(r.std).c_str(),
                  r.sigma, r.wall_ms);
      std::fflush(stdout);
    };
  }
  const TrainResult result = train(config, options);
  write_history_csv(out / "history.csv", result.history);
  save_policy(out / "best_params.json", result.best, config.p);
  std::cout << "generations " << result.history.size() << "  stop " << result.stop_reason
            << "  best " << (result.history.empty() ? std::string("n/a") : fmt(result.best_fitness))
            << "\n"
            << "wrote " << (out / "best_params.json").string() << ", "
            << (out / "history.csv").string() << ", " << options.checkpoint.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  ConfigFlags flags;
  std::string params;
  std::size_t episodes = 10;
  double sticky = 0.0;
  std::uint64_t seed = 0;
  bool robust = false;
};

int cmd_eval(const EvalArgs& a) {
  TrainConfig config = resolve(a.flags);
  const PolicyFile file = load_input([&] { return load_policy(a.params); });
  config.k = file.params.shape.k;
  config.m = file.params.shape.m;
  config.n = file.params.shape.n;
  config.include_bias = file.params.shape.include_bias;
  if (!a.flags.p && file.p) config.p = *file.p;
  config.validate();
  if (a.episodes == 0) throw UsageError("--episodes must be positive");
  echo_config(std::cout, config);
  std::cout << "# eval seed " << a.seed << "  sticky " << fmt(a.sticky) << "\n";

  if (!a.robust) {
    print_report(evaluate_episodes(file.params, config, a.episodes, a.sticky, a.seed));
    return kExitOk;
  }
  const RobustnessReport r =
      robustness_eval(file.params, config, {a.episodes, a.sticky, a.seed});
  const double det[] = {r.deterministic};
  char label[64];
  std::snprintf(label, sizeof(label), "K=%d, P=%s", config.k, fmt(config.p).c_str());
  std::cout << paired_table_header() << "\n"
            << paired_table_row(label, aggregate(det), r.stochastic.summary,
                                config.shape().param_count())
            << "\n";
  std::cout << "deterministic score " << fmt(r.deterministic) << "\n";
  print_report(r.stochastic);
  return kExitOk;
}

struct SweepArgs {
  ConfigFlags flags;
  std::string grid_file;
  std::string out = "scope-sweep";
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> generations;
  bool shortlist = false;
};

int cmd_sweep(const SweepArgs& a) {
  TrainConfig base = resolve(a.flags);
  SweepGrid grid;
  if (!a.grid_file.empty()) {
    load_input([&] {
      Json j = read_json_file(a.grid_file);
      if (!j.is_object()) throw ConfigError("grid file must be a JSON object");
      if (j.contains("base")) {
        apply_json(j["base"], base);
        j.erase("base");
      }
      apply_json(j, grid);
      return 0;
    });
  }
  if (a.trials) grid.trials_per_cell = *a.trials;
  if (a.generations) grid.generations_per_trial = *a.generations;
  if (a.flags.seed) grid.master_seed = *a.flags.seed;

  std::vector<SweepGrid> grids;
  if (a.shortlist) {
    for (const auto& [k, p] : table2_shortlist()) {
      SweepGrid g = grid;
      g.k_values = {k};
      g.p_values = {p};
      grids.push_back(g);
    }
  } else {
    grids.push_back(grid);
  }
  for (const auto& g : grids) g.validate(base.env.height, base.env.width);
  base.generations = grid.generations_per_trial;
  base.validate();

  Json echo = to_json(grid);
  echo["base"] = to_json(base);
  echo["shortlist"] = a.shortlist;
  std::cout << "# effective sweep (master_seed " << grid.master_seed << ")\n"
            << echo.dump(2) << "\n";

  const fs::path out = a.out;
  fs::create_directories(out);
  write_file_atomic(out / "grid.json", echo.dump(2) + "\n");

  SweepOptions options;
  options.state_dir = out / "cells";
  options.on_cell = [](const SweepCell& c) {
    const auto s = cell_stats(c);
    std::cout << "cell k=" << c.k << " p=" << fmt(c.p) << "  "
              << (s ? "mean " + fmt(s->mean) + "  max " + fmt(s->max) + "  trials " +
                          std::to_string(s->trials)
                    : std::string("INVALID (all trials failed)"))
              << "\n";
    for (const auto& t : c.trials) {
      if (!t.score) std::cout << "  trial " << t.trial << " failed: " << t.error << "\n";
    }
    std::cout.flush();
  };

  std::vector<SweepCell> cells;
  for (const auto& g : grids) {
    auto part = run_sweep(g, base, options);
    cells.insert(cells.end(), part.begin(), part.end());
  }
  export_heatmap(cells, out / "heatmap.csv");
  export_raw_scores(cells, out / "raw_scores.csv");
  std::cout << "wrote " << (out / "heatmap.csv").string() << ", "
            << (out / "raw_scores.csv").string() << "\n";
  return kExitOk;
}

struct InspectArgs {
  std::string frame_file;
  std::optional<int> env_step;
  int k = 32;
  double p = 25.0;
  std::uint64_t seed = 0;
  std::string out = "scope-inspect";
};

int cmd_inspect(const InspectArgs& a) {
  Frame frame;
  if (!a.frame_file.empty()) {
    frame = load_input([&] { return read_pgm(a.frame_file); });
  } else {
    EnvConfig env;
    env.seed = a.seed;
    frame = builtin_frame_after(env, a.env_step.value_or(0));
  }
  if (a.k < 1 || a.k > std::min(frame.height(), frame.width())) {
    throw UsageError("--k must lie in [1, " + std::to_string(std::min(frame.height(), frame.width())) +
                     "] for a " + std::to_string(frame.height()) + "x" +
                     std::to_string(frame.width()) + " frame");
  }
  if (!(a.p >= 0.0 && a.p < 100.0)) throw UsageError("--p must lie in [0, 100)");

  const InspectReport r = inspect_frame(frame, a.k, a.p);
  const fs::path out = a.out;
  fs::create_directories(out);
  write_pgm(out / "frame.pgm", frame);
  write_file_atomic(out / "full.csv", matrix_csv(r.full));
  write_file_atomic(out / "truncated.csv", matrix_csv(r.truncated.coeffs));
  write_file_atomic(out / "sparse.csv", matrix_csv(r.sparse.block.coeffs));
  write_file_atomic(out / "mask.csv", mask_csv(r.sparse.mask.kept));

  const std::string energy_csv =
      "frame_height,frame_width,k,p,threshold,kept,total_energy,truncated_energy,sparse_energy,"
      "truncated_fraction,sparse_fraction_of_truncated,sparse_fraction_of_total\n" +
      std::to_string(frame.height()) + "," + std::to_string(frame.width()) + "," +
      std::to_string(a.k) + "," + fmt(a.p) + "," + fmt(r.sparse.threshold) + "," +
      std::to_string(r.sparse.mask.kept_count) + "," + fmt(r.total_energy) + "," +
      fmt(r.truncated_energy) + "," + fmt(r.sparse_energy) + "," + fmt(r.truncated_fraction()) +
      "," + fmt(r.sparse_fraction_of_truncated()) + "," + fmt(r.sparse_fraction_of_total()) + "\n";
  write_file_atomic(out / "energy.csv", energy_csv);

  std::cout << "frame " << frame.height() << "x" << frame.width() << "  inputs "
            << frame.height() * frame.width() << "  k " << a.k << "  coefficients " << a.k * a.k
            << "  p " << fmt(a.p) << "  threshold " << fmt(r.sparse.threshold) << "\n"
            << "kept " << r.sparse.mask.kept_count << " of " << a.k * a.k << "\n"
            << "energy total " << fmt(r.total_energy) << "  truncated " << fmt(r.truncated_energy)
            << "  sparse " << fmt(r.sparse_energy) << "\n"
            << "retained fraction: truncated/total " << fmt(r.truncated_fraction())
            << "  sparse/truncated " << fmt(r.sparse_fraction_of_truncated())
            << "  sparse/total " << fmt(r.sparse_fraction_of_total()) << "\n"
            << "wrote " << out.string() << "/{frame.pgm,full.csv,truncated.csv,sparse.csv,mask.csv,"
            << "energy.csv}\n";
  return kExitOk;
}

struct ServeArgs {
  ConfigFlags flags;
  std::string listen;
  bool stdio = false;
  bool once = false;
};

int cmd_serve(const ServeArgs& a) {
  const TrainConfig config = resolve(a.flags);
  config.env.validate();
  std::cerr << "# serving built-in game: " << to_json(config.env).dump() << "\n";

  if (a.stdio) {
    proto::FdStream stream(STDIN_FILENO, STDOUT_FILENO, false);
    proto::serve(make_builtin_env(config.env), stream);
    return kExitOk;
  }
  proto::TcpListener listener(a.listen);
  const auto colon = a.listen.rfind(':');
  const std::string host = colon == std::string::npos ? "0.0.0.0" : a.listen.substr(0, colon);
  std::cerr << "listening on " << (host.empty() ? "0.0.0.0" : host) << ":" << listener.port()
            << std::endl;
  for (;;) {
    std::shared_ptr<proto::FdStream> stream = listener.accept();
    if (a.once) {
      proto::serve(make_builtin_env(config.env), *stream);
      return kExitOk;
    }
    std::thread([stream, env = config.env] {
      try {
        proto::serve(make_builtin_env(env), *stream);
      } catch (const std::exception& e) {
        std::cerr << "connection failed: " << e.what() << "\n";
      }
    }).detach();
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"Frequency-domain policy search with CMA-ES"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a policy with CMA-ES");
  add_env_flags(train, train_args.flags);
  train->add_option("--k", train_args.flags.k, "truncation level")->check(CLI::PositiveNumber);
  train->add_option("--p", train_args.flags.p, "sparsity percentile in [0, 100)");
  train->add_option("--generations", train_args.flags.generations, "generation budget");
  train->add_option("--seed", train_args.flags.seed, "master seed");
  train->add_option("--population", train_args.flags.population, "CMA-ES lambda (0: default)");
  train->add_option("--sigma0", train_args.flags.sigma0, "initial step size");
  train->add_option("--checkpoint-every", train_args.flags.checkpoint_every, "generations")
      ->check(CLI::PositiveNumber);
  train->add_flag("--bias", train_args.flags.bias, "include the bias term b");
  train->add_option("--out", train_args.out, "output directory");
  train->add_flag("--resume", train_args.resume, "continue from OUT/checkpoint.json");
  train->add_flag("--quiet", train_args.quiet, "no per-generation lines");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a policy file");
  EvalArgs robust_args;
  robust_args.robust = true;
  robust_args.sticky = 0.25;
  auto* robust = app.add_subcommand("robust", "deterministic vs sticky-action report");
  for (auto [cmd, args] : {std::pair{eval, &eval_args}, std::pair{robust, &robust_args}}) {
    add_env_flags(cmd, args->flags);
    cmd->add_option("--params", args->params, "policy file")->required();
    cmd->add_option("--episodes", args->episodes, "episode count")->check(CLI::PositiveNumber);
    cmd->add_option("--sticky", args->sticky, "sticky-action probability")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--seed", args->seed, "game seed");
    cmd->add_option("--p", args->flags.p, "override the policy file's percentile");
  }

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "(k, p) grid sweep");
  add_env_flags(sweep, sweep_args.flags);
  sweep->add_option("--grid", sweep_args.grid_file, "grid JSON (optional \"base\" train config)")
      ->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_args.out, "output directory");
  sweep->add_option("--trials", sweep_args.trials, "trials per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--generations", sweep_args.generations, "generations per trial")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sweep_args.flags.seed, "sweep master seed");
  sweep->add_flag("--shortlist", sweep_args.shortlist, "run the six long-run (k, p) pairs");

  InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect", "dump pipeline intermediates as CSV");
  auto* frame_opt = inspect->add_option("--frame", inspect_args.frame_file, "P5 PGM frame");
  auto* step_opt = inspect->add_option("--env-step", inspect_args.env_step,
                                       "use the built-in game's frame after N NOOP steps");
  frame_opt->excludes(step_opt);
  inspect->add_option("--k", inspect_args.k, "truncation level");
  inspect->add_option("--p", inspect_args.p, "sparsity percentile");
  inspect->add_option("--seed", inspect_args.seed, "game seed for --env-step");
  inspect->add_option("--out", inspect_args.out, "output directory");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve-env", "serve the built-in game over the protocol");
  serve->add_option("--config", serve_args.flags.config_file, "JSON train config (env section)")
      ->check(CLI::ExistingFile);
  auto* listen_opt = serve->add_option("--listen", serve_args.listen, "HOST:PORT (port 0: any)");
  auto* stdio_opt = serve->add_flag("--stdio", serve_args.stdio, "serve on stdin/stdout");
  listen_opt->excludes(stdio_opt);
  serve->add_flag("--once", serve_args.once, "exit after the first connection closes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*robust) return cmd_eval(robust_args);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*inspect) return cmd_inspect(inspect_args);
    if (*serve) {
      if (!serve_args.stdio && serve_args.listen.empty()) {
        throw UsageError("serve-env needs --listen ADDR or --stdio");
      }
      return cmd_serve(serve_args);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
