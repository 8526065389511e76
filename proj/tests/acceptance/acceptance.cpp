// Acceptance suite. Prints one PASS/FAIL line per criterion; the exit status
// is nonzero if any selected criterion fails.
//
//   scope_acceptance [--list] [name...]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "scope/cmaes.hpp"
#include "scope/envproto.hpp"
#include "scope/policy.hpp"
#include "scope/seeds.hpp"
#include "scope/sparsity.hpp"
#include "scope/stats.hpp"
#include "scope/trainer.hpp"
#include "scope/transform.hpp"

namespace {

using scope::Matrix;
using Clock = std::chrono::steady_clock;

// Tolerances and limits.
constexpr double kDctTol = 1e-10;
constexpr double kBasisTol = 1e-10;
constexpr double kParsevalRelTol = 1e-9;
constexpr double kTruncationTol = 1e-9;
constexpr double kStickyTarget = 0.25;
constexpr double kStickyTol = 0.02;
constexpr double kLearningFactor = 2.0;

constexpr double kDctSeconds = 30;
constexpr double kParsevalSeconds = 10;
constexpr double kCmaSeconds = 120;
constexpr double kDeterminismSeconds = 300;
constexpr double kLearningSeconds = 1800;
constexpr double kLoopbackSeconds = 60;

// CMA-ES regression bounds (median evaluations over 10 seeds).
constexpr std::size_t kSphereBudget = 20000;
constexpr std::size_t kRosenbrockBudget = 100000;
constexpr double kCmaTarget = 1e-6;
// Measured medians were 1032 (sphere d=5), 2090 (sphere d=10) and 1776
// (Rosenbrock d=5); the bounds below allow a factor of two.
constexpr std::size_t kSphere5Regression = 2064;
constexpr std::size_t kSphere10Regression = 4180;
constexpr std::size_t kRosenbrockRegression = 3552;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------

Outcome dct() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> side(1, 64);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int h = side(rng);
    const int w = side(rng);
    const auto frame = scope::Frame::from_pixels(oracle::random_matrix(rng, h, w));
    worst = std::max(worst, max_abs(scope::dct2_full(frame), oracle::brute_dct2(frame.pixels())));
  }
  double basis_err = 0.0;
  for (int n = 1; n <= 256; ++n) {
    const auto basis = scope::build_basis(n);
    const Matrix& a = basis.rows();
    basis_err = std::max(basis_err, (a * a.transpose() - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst < kDctTol && basis_err < kBasisTol && secs < kDctSeconds,
          fmt("200 frames max|err| %.3g (< %.0e); basis n<=256 max|AA^T-I| %.3g (< %.0e); %.1f s",
              worst, kDctTol, basis_err, kBasisTol, secs)};
}

Outcome parseval() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> side(1, 64);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Matrix m = oracle::random_matrix(rng, side(rng), side(rng));
    const double e = scope::energy(m);
    if (e == 0.0) continue;
    worst = std::max(worst, std::abs(scope::energy(scope::dct2(m)) - e) / e);
  }
  const double secs = seconds_since(t0);
  return {worst < kParsevalRelTol && secs < kParsevalSeconds,
          fmt("1000 matrices max relative energy error %.3g (< %.0e); %.1f s", worst,
              kParsevalRelTol, secs)};
}

Outcome truncation() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> side(1, 96);
  double worst = 0.0;
  auto check = [&](int h, int w, int k) {
    const auto frame = scope::Frame::from_pixels(oracle::random_matrix(rng, h, w));
    const auto block = scope::dct2_truncated(frame, k);
    worst = std::max(worst, max_abs(block.coeffs, scope::dct2_full(frame).topLeftCorner(k, k)));
  };
  for (int i = 0; i < 200; ++i) {
    const int h = side(rng);
    const int w = side(rng);
    check(h, w, 1 + static_cast<int>(rng() % static_cast<unsigned>(std::min(h, w))));
  }
  check(210, 160, 125);
  const int inputs = 210 * 160;
  const int coeffs = 125 * 125;
  const double reduction = 1.0 - static_cast<double>(coeffs) / inputs;
  const bool arithmetic = inputs == 33600 && coeffs == 15625 &&
                          std::floor(reduction * 100) == 53.0 &&
                          std::abs(reduction * 100 - 53.5) < 0.05;
  return {worst < kTruncationTol && arithmetic,
          fmt("201 (H,W,k) cases incl. 210x160 k=125 max|err| %.3g (< %.0e); %d -> %d inputs, "
              "%.1f%% reduction",
              worst, kTruncationTol, inputs, coeffs, reduction * 100)};
}

Outcome sparsity() {
  const std::vector<double> ps = {0, 0.25, 0.9, 0.95, 10, 25, 50, 99};
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> side(1, 64);
  int mismatches = 0;
  int nesting_failures = 0;
  for (int b = 0; b < 1000; ++b) {
    const int k = side(rng);
    // Distinct magnitudes: a shuffled arithmetic progression with random signs.
    std::vector<double> mags(static_cast<std::size_t>(k * k));
    for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = 0.01 + 0.013 * static_cast<double>(i);
    std::shuffle(mags.begin(), mags.end(), rng);
    Matrix m(k, k);
    for (std::size_t i = 0; i < mags.size(); ++i) m.data()[i] = (rng() & 1) ? mags[i] : -mags[i];

    std::vector<scope::SupportMask> masks;
    for (double p : ps) {
      const auto s = scope::sparsify({k, m, k, k}, p);
      const auto expected = oracle::kept_by_sort(m, p);
      int expected_count = 0;
      bool same = true;
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
          const bool e = expected[static_cast<std::size_t>(r * k + c)];
          expected_count += e;
          same = same && s.mask.kept(r, c) == e;
        }
      }
      if (!same || s.mask.kept_count != expected_count) ++mismatches;
      masks.push_back(s.mask);
    }
    for (std::size_t i = 0; i < masks.size(); ++i) {
      for (std::size_t j = i + 1; j < masks.size(); ++j) {
        if (!masks[j].subset_of(masks[i])) ++nesting_failures;
      }
    }
  }
  return {mismatches == 0 && nesting_failures == 0,
          fmt("1000 blocks x %zu percentiles: %d oracle mismatches, %d nesting violations",
              ps.size(), mismatches, nesting_failures)};
}

Outcome param_counts() {
  const std::pair<int, std::size_t> rows[] = {{50, 350},  {75, 525},   {125, 875},
                                              {125, 875}, {150, 1050}, {150, 1050}};
  std::string detail;
  bool pass = true;
  for (const auto& [k, expected] : rows) {
    const std::size_t got = scope::param_count(k, 1, 6, false);
    pass = pass && got == expected;
    detail += fmt("K=%d->%zu ", k, got);
  }
  return {pass, detail + "(bias disabled)"};
}

// Evaluations until `done(state)` holds, or budget + 1 if it never does.
std::size_t evals_until(std::size_t d, std::uint64_t seed, const Eigen::VectorXd& x0, double sigma0,
                        const std::function<double(const Eigen::VectorXd&)>& f,
                        const std::function<bool(const scope::cma::CmaState&)>& done,
                        std::size_t budget) {
  scope::cma::CmaConfig config;
  config.dimension = d;
  config.initial_mean = x0;
  config.initial_sigma = sigma0;
  config.seed = seed;
  auto s = scope::cma::init(config);
  std::size_t evals = 0;
  while (evals <= budget) {
    if (done(s)) return evals;
    auto xs = scope::cma::ask(s);
    std::vector<double> fit;
    for (const auto& x : xs) fit.push_back(-f(x));
    evals += xs.size();
    scope::cma::tell(s, xs, fit);
    if (s.sigma < scope::cma::kSigmaFloor) break;
  }
  return done(s) ? evals : budget + 1;
}

std::size_t median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];  // lower median for even counts
}

Outcome cma_benchmarks() {
  const auto t0 = Clock::now();
  auto sphere = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  auto rosenbrock = [](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      f += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
    }
    return f;
  };
  std::string detail;
  bool pass = true;
  for (std::size_t d : {5, 10}) {
    std::vector<std::size_t> evals;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      std::uniform_real_distribution<double> u(-5.0, 5.0);
      Eigen::VectorXd x0(static_cast<Eigen::Index>(d));
      for (auto& v : x0) v = u(rng);
      evals.push_back(evals_until(
          d, seed, x0, 2.0, sphere, [](const auto& s) { return s.mean.norm() < kCmaTarget; },
          kSphereBudget));
    }
    const std::size_t med = median(evals);
    const std::size_t regression = d == 5 ? kSphere5Regression : kSphere10Regression;
    pass = pass && med <= kSphereBudget && med <= regression;
    detail += fmt("sphere d=%zu median %zu evals (<= %zu, regression <= %zu); ", d, med,
                  kSphereBudget, regression);
  }
  std::vector<std::size_t> evals;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    evals.push_back(evals_until(
        5, seed, Eigen::VectorXd::Zero(5), 0.5, rosenbrock,
        [&](const auto& s) { return rosenbrock(s.mean) < kCmaTarget; }, kRosenbrockBudget));
  }
  const std::size_t med = median(evals);
  pass = pass && med <= kRosenbrockBudget && med <= kRosenbrockRegression;
  const double secs = seconds_since(t0);
  pass = pass && secs < kCmaSeconds;
  detail += fmt("rosenbrock d=5 median %zu evals (<= %zu, regression <= %zu); %.1f s", med,
                kRosenbrockBudget, kRosenbrockRegression, secs);
  return {pass, detail};
}

Outcome cma_rank_invariance() {
  const std::vector<std::function<double(double)>> transforms = {
      [](double f) { return 3.0 * f + 7.0; },
      [](double f) { return std::exp(f / 50.0); },
      [](double f) { return std::atan(f); },
      [](double f) { return f * f * f + f; },
  };
  int checked = 0;
  int diverged = 0;
  for (std::size_t d : {3, 10, 40}) {
    for (std::size_t t = 0; t < transforms.size(); ++t) {
      scope::cma::CmaConfig config;
      config.dimension = d;
      config.seed = 31 * d + t;
      auto a = scope::cma::init(config);
      auto b = a;
      for (int g = 0; g < 60; ++g) {
        const auto xa = scope::cma::ask(a);
        const auto xb = scope::cma::ask(b);
        std::vector<double> fa;
        std::vector<double> fb;
        for (const auto& x : xa) fa.push_back(-(x.array() - 1.0).square().sum());
        for (const auto& x : xb) fb.push_back(transforms[t](-(x.array() - 1.0).square().sum()));
        scope::cma::tell(a, xa, fa);
        scope::cma::tell(b, xb, fb);
        ++checked;
        if (!(a == b)) {
          ++diverged;
          break;
        }
      }
    }
  }
  return {diverged == 0,
          fmt("%d successor states compared over 3 dims x 4 transforms, %d diverged", checked,
              diverged)};
}

scope::TrainConfig builtin_config(std::uint64_t seed, std::uint64_t generations) {
  scope::TrainConfig c;
  c.k = 32;
  c.p = 25.0;
  c.generations = generations;
  c.master_seed = seed;
  return c;
}

Outcome determinism() {
  const auto t0 = Clock::now();
  auto c = builtin_config(2024, 50);
  c.parallelism = 1;
  const auto serial = scope::train(c);
  c.parallelism = 8;
  const auto parallel = scope::train(c);
  const bool same = serial.same_result(parallel);
  const bool params_equal = scope::flatten(serial.best) == scope::flatten(parallel.best) &&
                            serial.state.mean == parallel.state.mean;
  const double secs = seconds_since(t0);
  return {same && params_equal && serial.history.size() == 50 && secs < kDeterminismSeconds,
          fmt("k=32 p=25 50 generations, parallelism 1 vs 8: histories %s, final parameters %s, "
              "best %.0f; %.1f s",
              same ? "identical" : "DIFFER", params_equal ? "identical" : "DIFFER",
              serial.best_fitness, secs)};
}

Outcome learning_signal() {
  const auto t0 = Clock::now();
  const auto base = builtin_config(0, 200);
  const scope::PolicyShape shape = base.shape();

  // Random-parameter baseline: 100 policies drawn from the optimizer's
  // initial search distribution N(0, sigma0^2 I), one episode each.
  std::mt19937_64 rng(scope::derive_seed(0xBA5E, 1));
  std::normal_distribution<double> nd(0.0, base.sigma0);
  std::vector<scope::PolicyParams> randoms;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(shape.param_count()));
    for (auto& x : v) x = nd(rng);
    randoms.push_back(scope::unflatten(v, shape));
  }
  std::vector<scope::EpisodeJob> jobs;
  for (std::size_t i = 0; i < randoms.size(); ++i) {
    jobs.push_back({&randoms[i], scope::derive_seed(0xBA5E, 2, i), scope::derive_seed(0xBA5E, 3, i)});
  }
  scope::Evaluator evaluator(base.factory(), base.env, 1);
  const auto random_scores = evaluator.run(jobs, base.p, 0.0);
  const double random_mean = scope::aggregate(random_scores).mean;
  std::printf("  random baseline: 100 policies, mean %.1f\n", random_mean);
  std::fflush(stdout);

  std::vector<double> bests;
  std::vector<double> holdout;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = scope::train(builtin_config(seed, 200));
    bests.push_back(r.best_fitness);
    // Diagnostic only: the best policy on 10 unseen game seeds.
    std::vector<double> unseen;
    for (int i = 0; i < 10; ++i) {
      unseen.push_back(scope::evaluate_policy(r.best, base.env, base.p, scope::derive_seed(seed, 100 + i)));
    }
    holdout.push_back(scope::aggregate(unseen).mean);
    std::printf("  seed %llu: best %.0f after %zu generations (stop %s); unseen-seed mean %.1f\n",
                static_cast<unsigned long long>(seed), r.best_fitness, r.history.size(),
                r.stop_reason.c_str(), holdout.back());
    std::fflush(stdout);
  }
  std::vector<double> sorted = bests;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted[2];
  const double secs = seconds_since(t0);
  return {med >= kLearningFactor * random_mean && secs < kLearningSeconds,
          fmt("median best %.0f vs %.1f x random mean %.1f = %.1f; %.0f s", med, kLearningFactor,
              random_mean, kLearningFactor * random_mean, secs)};
}

Outcome robustness() {
  // Repeat fraction of the sticky wrapper inside the real stack.
  scope::EnvConfig env;
  scope::EnvStack stack(scope::make_builtin_env(env), kStickyTarget, env.max_steps);
  std::mt19937_64 rng(5);
  std::uint64_t episode = 0;
  stack.begin_episode(scope::derive_seed(1, episode), scope::derive_seed(2, episode));
  std::uint64_t draws = 0;
  std::uint64_t repeats = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto r = stack.env().step(static_cast<int>(rng() % 6));
    if (r.terminated) {
      draws += stack.sticky().draws();
      repeats += stack.sticky().repeats();
      ++episode;
      stack.begin_episode(scope::derive_seed(1, episode), scope::derive_seed(2, episode));
    }
  }
  draws += stack.sticky().draws();
  repeats += stack.sticky().repeats();
  const double fraction = static_cast<double>(repeats) / static_cast<double>(draws);

  // Paired report.
  scope::TrainConfig c = builtin_config(0, 0);
  c.env.max_steps = 500;
  std::mt19937_64 prng(17);
  std::normal_distribution<double> nd(0.0, 0.5);
  Eigen::VectorXd v(static_cast<Eigen::Index>(c.shape().param_count()));
  for (auto& x : v) x = nd(prng);
  const auto params = scope::unflatten(v, c.shape());
  const auto report = scope::robustness_eval(params, c, {});
  const double det[] = {report.deterministic};
  const std::string header = scope::paired_table_header();
  const std::string row = scope::paired_table_row("K=32, P=25", scope::aggregate(det),
                                                  report.stochastic.summary, c.shape().param_count());
  const std::regex row_format(R"(K=32, P=25 \| \d+ \| \d+\.\d ± \d+\.\d \| \d+ \| \d+\.\d ± \d+\.\d \| 224)");
  const bool format_ok = header.find("Average ± σ (Sto.)") != std::string::npos &&
                         std::regex_match(row, row_format) && report.stochastic.episodes() == 10 &&
                         report.sticky_prob == kStickyTarget;
  std::printf("  %s\n  %s\n", header.c_str(), row.c_str());
  return {std::abs(fraction - kStickyTarget) <= kStickyTol && format_ok,
          fmt("repeat fraction %.4f over %llu draws (target %.2f +- %.2f); paired report %s",
              fraction, static_cast<unsigned long long>(draws), kStickyTarget, kStickyTol,
              format_ok ? "well-formed" : "MALFORMED")};
}

// Step-by-step trace of one episode: action, reward, termination, frame hash.
struct Trace {
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint64_t> frames;
  bool operator==(const Trace&) const = default;
};

std::uint64_t hash_frame(const scope::Frame& f) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : scope::to_gray8(f)) h = (h ^ b) * 1099511628211ULL;
  return h;
}

Trace trace_episode(std::unique_ptr<scope::Environment> base, const scope::PolicyParams& params,
                    std::uint64_t seed) {
  scope::EnvStack stack(std::move(base), 0.25, 2000);
  Trace t;
  scope::run_episode(scope::Pipeline(params, 25.0), stack, seed, scope::derive_seed(seed, 3),
                     [&](int a, const scope::StepResult& r) {
                       t.actions.push_back(a);
                       t.rewards.push_back(r.reward);
                       t.frames.push_back(hash_frame(r.frame));
                     });
  return t;
}

Outcome protocol_loopback() {
  const auto t0 = Clock::now();
  scope::proto::TcpListener listener("127.0.0.1:0");
  std::atomic<bool> stopping{false};
  std::vector<std::thread> sessions;
  std::thread acceptor([&] {
    for (;;) {
      auto conn = listener.accept();
      if (stopping) return;
      sessions.emplace_back([c = std::move(conn)]() mutable {
        scope::proto::serve(scope::make_builtin_env({}), *c);
      });
    }
  });
  const std::string address = "tcp:127.0.0.1:" + std::to_string(listener.port());

  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 0.5);
  const scope::PolicyShape shape{32, 1, 6, false};
  int identical = 0;
  std::size_t steps = 0;
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(shape.param_count()));
    for (auto& x : v) x = nd(rng);
    const auto params = scope::unflatten(v, shape);
    const std::uint64_t seed = rng();
    const Trace local = trace_episode(scope::make_builtin_env({}), params, seed);
    const Trace remote = trace_episode(scope::protocol_factory(address)(), params, seed);
    identical += local == remote;
    steps += local.actions.size();
  }

  // A short training run through connect() against the same run in-process.
  auto c = builtin_config(5, 3);
  c.env.max_steps = 300;
  const auto in_process = scope::train(c);
  scope::TrainOptions remote_opts;
  remote_opts.factory = scope::protocol_factory(address);
  const auto over_wire = scope::train(c, remote_opts);
  const bool training_same = in_process.same_result(over_wire);

  stopping = true;
  scope::proto::tcp_connect(address.substr(4));  // wake the acceptor
  acceptor.join();
  for (auto& s : sessions) s.join();

  const double secs = seconds_since(t0);
  return {identical == 10 && training_same && secs < kLoopbackSeconds,
          fmt("%d/10 seeds bit-identical (%zu steps, sticky 0.25); 3-generation training over TCP "
              "%s; %.1f s",
              identical, steps, training_same ? "identical" : "DIFFERS", secs)};
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"dct", dct},
    {"parseval", parseval},
    {"truncation", truncation},
    {"sparsity", sparsity},
    {"param_counts", param_counts},
    {"cma_benchmarks", cma_benchmarks},
    {"cma_rank_invariance", cma_rank_invariance},
    {"determinism", determinism},
    {"learning_signal", learning_signal},
    {"robustness", robustness},
    {"protocol_loopback", protocol_loopback},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const auto& c : kCriteria) std::printf("%s\n", c.name);
      return 0;
    }
    if (std::none_of(std::begin(kCriteria), std::end(kCriteria),
                     [&](const Criterion& c) { return arg == c.name; })) {
      std::fprintf(stderr, "unknown criterion %s (see --list)\n", arg.c_str());
      return 2;
    }
    wanted.insert(arg);
  }
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && !wanted.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
