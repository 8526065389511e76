#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Core>

#include "scope/sparsity.hpp"

namespace scope {

/// Dimensions of the bilinear policy y = W1 * X * W2 (+ b).
struct PolicyShape {
  int k = 0;  // side of the coefficient block
  int m = 1;  // output rows
  int n = 6;  // output columns (actions when m == 1)
  bool include_bias = false;

  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// m*k + k*n, plus m*n when the bias is enabled.
std::size_t param_count(int k, int m, int n, bool include_bias);

struct PolicyParams {
  PolicyShape shape;
  Matrix w1;                   // m x k
  Matrix w2;                   // k x n
  std::optional<Matrix> bias;  // m x n, present iff shape.include_bias

  static PolicyParams zeros(const PolicyShape& shape);
  void validate() const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);
};

/// Unnormalized action scores, the row-major flattening of y.
struct ActionLogits {
  Eigen::VectorXd values;
};

ActionLogits forward(const PolicyParams& params, const Matrix& coeffs);
ActionLogits forward(const PolicyParams& params, const SparseBlock& input);

/// Index of the largest logit; the lowest index wins ties.
int select_action(const ActionLogits& logits);

/// Layout: w1 row-major, then w2 row-major, then bias row-major if present.
Eigen::VectorXd flatten(const PolicyParams& params);
PolicyParams unflatten(std::span<const double> values, const PolicyShape& shape);
PolicyParams unflatten(const Eigen::VectorXd& values, const PolicyShape& shape);

}  // namespace scope
