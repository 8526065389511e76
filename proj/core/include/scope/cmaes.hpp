#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace scope::cma {

/// Standard population size 4 + floor(3 ln d).
std::size_t default_population(std::size_t dimension);

struct CmaConfig {
  std::size_t dimension = 0;
  std::size_t population = 0;  // lambda; 0 picks default_population(dimension)
  std::size_t parents = 0;     // mu; 0 picks population / 2
  double initial_sigma = 0.5;
  Eigen::VectorXd initial_mean;  // empty means the zero vector
  std::uint64_t seed = 0;

  /// Copy with the zero placeholders replaced by the standard defaults.
  CmaConfig resolved() const;
  void validate() const;
};

/// Strategy constants derived from (dimension, weights).
struct CmaConstants {
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c1 = 0.0;
  double c_mu = 0.0;
  double chi_n = 0.0;
  std::uint64_t eigen_interval = 1;  // generations between decompositions of C

  friend bool operator==(const CmaConstants&, const CmaConstants&) = default;
};

/// Complete (mu/mu_w, lambda) CMA-ES state. Fitness is maximized.
///
/// Everything that influences the next ask/tell is stored here, including the
/// generator and the cached eigendecomposition, so a copied or deserialized
/// state continues bit-identically.
struct CmaState {
  std::size_t dimension = 0;
  std::size_t population = 0;
  std::size_t parents = 0;

  Eigen::VectorXd mean;
  double sigma = 0.0;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd path_sigma;
  Eigen::VectorXd path_c;
  Eigen::VectorXd weights;  // nonincreasing, sums to 1
  std::uint64_t generation = 0;
  std::mt19937_64 rng;

  CmaConstants constants;

  // C = B * diag(axis^2) * B^T, refreshed every constants.eigen_interval generations.
  Eigen::MatrixXd eigen_basis;
  Eigen::VectorXd axis_lengths;
  Eigen::MatrixXd inv_sqrt_covariance;
  std::uint64_t eigen_generation = 0;

  /// (max axis / min axis)^2 of the cached decomposition.
  double condition_number() const;

  friend bool operator==(const CmaState& a, const CmaState& b);
};

CmaState init(const CmaConfig& config);

/// Recomputes inv_sqrt_covariance from eigen_basis and axis_lengths (used
/// after loading a state that stores only the decomposition).
void rebuild_inverse_sqrt(CmaState& state);

/// Draws `population` candidates from N(mean, sigma^2 C), advancing the generator.
std::vector<Eigen::VectorXd> ask(CmaState& state);

/// Ranks candidates by descending fitness (ties: lower index first) and
/// applies the standard mean, path, step-size and covariance updates.
void tell(CmaState& state, std::span<const Eigen::VectorXd> candidates,
          std::span<const double> fitnesses);

struct StopDecision {
  bool stop = false;
  std::string reason;  // "budget", "sigma-collapse", "ill-conditioned" or empty

  explicit operator bool() const { return stop; }
};

inline constexpr double kSigmaFloor = 1e-12;
inline constexpr double kMaxCondition = 1e14;

StopDecision should_stop(const CmaState& state, std::uint64_t generation_budget);

}  // namespace scope::cma
