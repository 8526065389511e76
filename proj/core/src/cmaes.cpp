#include "scope/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "scope/error.hpp"

namespace scope::cma {
namespace {

template <typename A, typename B>
bool same(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

void refresh_eigensystem(CmaState& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s.covariance);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of the covariance matrix failed");
  }
  const Eigen::VectorXd& values = solver.eigenvalues();
  if (!values.allFinite() || values.minCoeff() <= 0.0) {
    throw NumericalError("covariance matrix is no longer positive definite (min eigenvalue " +
                         std::to_string(values.minCoeff()) + ")");
  }
  s.eigen_basis = solver.eigenvectors();
  s.axis_lengths = values.cwiseSqrt();
  rebuild_inverse_sqrt(s);
  s.eigen_generation = s.generation;
}

}  // namespace

void rebuild_inverse_sqrt(CmaState& s) {
  s.inv_sqrt_covariance =
      s.eigen_basis * s.axis_lengths.cwiseInverse().asDiagonal() * s.eigen_basis.transpose();
}

std::size_t default_population(std::size_t dimension) {
  if (dimension == 0) return 4;
  return 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(dimension))));
}

CmaConfig CmaConfig::resolved() const {
  CmaConfig c = *this;
  if (c.population == 0) c.population = default_population(c.dimension);
  if (c.parents == 0) c.parents = c.population / 2;
  if (c.initial_mean.size() == 0) c.initial_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.dimension));
  return c;
}

void CmaConfig::validate() const {
  if (dimension == 0) throw ConfigError("CMA-ES dimension must be positive");
  if (population < 2) throw ConfigError("CMA-ES population must be at least 2");
  if (parents < 1 || parents > population) {
    throw ConfigError("CMA-ES parents must lie in [1, population]");
  }
  if (!(initial_sigma > 0.0) || !std::isfinite(initial_sigma)) {
    throw ConfigError("CMA-ES initial sigma must be positive and finite");
  }
  if (initial_mean.size() != 0 && static_cast<std::size_t>(initial_mean.size()) != dimension) {
    throw ConfigError("CMA-ES initial mean has " + std::to_string(initial_mean.size()) +
                      " entries, expected " + std::to_string(dimension));
  }
  if (initial_mean.size() != 0 && !initial_mean.allFinite()) {
    throw ConfigError("CMA-ES initial mean must be finite");
  }
}

double CmaState::condition_number() const {
  if (axis_lengths.size() == 0) return 1.0;
  const double ratio = axis_lengths.maxCoeff() / axis_lengths.minCoeff();
  return ratio * ratio;
}

bool operator==(const CmaState& a, const CmaState& b) {
  return a.dimension == b.dimension && a.population == b.population && a.parents == b.parents &&
         same(a.mean, b.mean) && a.sigma == b.sigma && same(a.covariance, b.covariance) &&
         same(a.path_sigma, b.path_sigma) && same(a.path_c, b.path_c) &&
         same(a.weights, b.weights) && a.generation == b.generation && a.rng == b.rng &&
         a.constants == b.constants && same(a.eigen_basis, b.eigen_basis) &&
         same(a.axis_lengths, b.axis_lengths) &&
         same(a.inv_sqrt_covariance, b.inv_sqrt_covariance) &&
         a.eigen_generation == b.eigen_generation;
}

CmaState init(const CmaConfig& raw) {
  const CmaConfig config = raw.resolved();
  config.validate();

  const auto d = static_cast<Eigen::Index>(config.dimension);
  const auto mu = static_cast<Eigen::Index>(config.parents);
  const double n = static_cast<double>(config.dimension);

  CmaState s;
  s.dimension = config.dimension;
  s.population = config.population;
  s.parents = config.parents;
  s.mean = config.initial_mean;
  s.sigma = config.initial_sigma;
  s.covariance = Eigen::MatrixXd::Identity(d, d);
  s.path_sigma = Eigen::VectorXd::Zero(d);
  s.path_c = Eigen::VectorXd::Zero(d);
  s.rng.seed(config.seed);

  s.weights.resize(mu);
  for (Eigen::Index i = 0; i < mu; ++i) {
    s.weights[i] = std::log(static_cast<double>(mu) + 0.5) - std::log(static_cast<double>(i + 1));
  }
  s.weights /= s.weights.sum();

  CmaConstants& k = s.constants;
  k.mu_eff = 1.0 / s.weights.squaredNorm();
  k.c_sigma = (k.mu_eff + 2.0) / (n + k.mu_eff + 5.0);
  k.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((k.mu_eff - 1.0) / (n + 1.0)) - 1.0) + k.c_sigma;
  k.c_c = (4.0 + k.mu_eff / n) / (n + 4.0 + 2.0 * k.mu_eff / n);
  k.c1 = 2.0 / ((n + 1.3) * (n + 1.3) + k.mu_eff);
  k.c_mu = std::min(1.0 - k.c1,
                    2.0 * (k.mu_eff - 2.0 + 1.0 / k.mu_eff) / ((n + 2.0) * (n + 2.0) + k.mu_eff));
  k.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  k.eigen_interval = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::ceil(1.0 / (10.0 * n * (k.c1 + k.c_mu)))));

  s.eigen_basis = Eigen::MatrixXd::Identity(d, d);
  s.axis_lengths = Eigen::VectorXd::Ones(d);
  s.inv_sqrt_covariance = Eigen::MatrixXd::Identity(d, d);
  s.eigen_generation = 0;
  return s;
}

std::vector<Eigen::VectorXd> ask(CmaState& state) {
  if (!std::isfinite(state.sigma) || !state.mean.allFinite()) {
    throw NumericalError("CMA-ES state is not finite");
  }
  const auto d = static_cast<Eigen::Index>(state.dimension);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::VectorXd> candidates;
  candidates.reserve(state.population);
  Eigen::VectorXd z(d);
  for (std::size_t i = 0; i < state.population; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(state.rng);
    candidates.emplace_back(state.mean +
                            state.sigma * (state.eigen_basis * state.axis_lengths.cwiseProduct(z)));
  }
  return candidates;
}

void tell(CmaState& s, std::span<const Eigen::VectorXd> candidates,
          std::span<const double> fitnesses) {
  if (candidates.size() != s.population || fitnesses.size() != s.population) {
    throw ShapeError("tell expects " + std::to_string(s.population) + " candidates and fitnesses, got " +
                     std::to_string(candidates.size()) + " and " + std::to_string(fitnesses.size()));
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (static_cast<std::size_t>(candidates[i].size()) != s.dimension) {
      throw ShapeError("candidate " + std::to_string(i) + " has dimension " +
                       std::to_string(candidates[i].size()) + ", expected " +
                       std::to_string(s.dimension));
    }
    if (!std::isfinite(fitnesses[i])) {
      throw InvalidArgument("fitness of candidate " + std::to_string(i) + " is not finite");
    }
  }

  std::vector<std::size_t> order(s.population);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitnesses[a] > fitnesses[b]; });

  const CmaConstants& k = s.constants;
  const auto d = static_cast<Eigen::Index>(s.dimension);
  const auto mu = static_cast<Eigen::Index>(s.parents);
  const double n = static_cast<double>(s.dimension);

  const Eigen::VectorXd old_mean = s.mean;
  Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd steps(d, mu);  // (x_i - m) / sigma for the selected parents
  for (Eigen::Index i = 0; i < mu; ++i) {
    const Eigen::VectorXd& x = candidates[order[static_cast<std::size_t>(i)]];
    new_mean += s.weights[i] * x;
    steps.col(i) = (x - old_mean) / s.sigma;
  }
  const Eigen::VectorXd mean_step = (new_mean - old_mean) / s.sigma;
  s.mean = new_mean;

  const std::uint64_t next_generation = s.generation + 1;

  s.path_sigma = (1.0 - k.c_sigma) * s.path_sigma +
                 std::sqrt(k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff) *
                     (s.inv_sqrt_covariance * mean_step);
  const double ps_norm = s.path_sigma.norm();
  const double decay = 1.0 - std::pow(1.0 - k.c_sigma, 2.0 * static_cast<double>(next_generation));
  const bool h_sigma = ps_norm / std::sqrt(decay) / k.chi_n < 1.4 + 2.0 / (n + 1.0);

  s.path_c = (1.0 - k.c_c) * s.path_c;
  if (h_sigma) s.path_c += std::sqrt(k.c_c * (2.0 - k.c_c) * k.mu_eff) * mean_step;

  const double stall_correction = h_sigma ? 0.0 : k.c_c * (2.0 - k.c_c);
  Eigen::MatrixXd rank_mu = steps * s.weights.asDiagonal() * steps.transpose();
  s.covariance = (1.0 - k.c1 - k.c_mu) * s.covariance +
                 k.c1 * (s.path_c * s.path_c.transpose() + stall_correction * s.covariance) +
                 k.c_mu * rank_mu;
  // Exact symmetry; the products above can differ in the last bit across the diagonal.
  s.covariance = (0.5 * (s.covariance + s.covariance.transpose())).eval();

  s.sigma *= std::exp((k.c_sigma / k.d_sigma) * (ps_norm / k.chi_n - 1.0));
  s.generation = next_generation;

  if (s.generation - s.eigen_generation >= k.eigen_interval) refresh_eigensystem(s);
}

StopDecision should_stop(const CmaState& state, std::uint64_t generation_budget) {
  if (state.generation >= generation_budget) return {true, "budget"};
  if (state.sigma < kSigmaFloor) return {true, "sigma-collapse"};
  if (state.condition_number() > kMaxCondition) return {true, "ill-conditioned"};
  return {};
}

}  // namespace scope::cma
