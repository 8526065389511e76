#pragma once

#include <Eigen/Core>

#include "scope/transform.hpp"

namespace scope {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Positions of the nonzero coefficients in a sparsified block.
struct SupportMask {
  int k = 0;
  BoolMatrix kept;
  int kept_count = 0;

  /// True when every kept position of `*this` is also kept in `other`.
  bool subset_of(const SupportMask& other) const;
};

/// A coefficient block after percentile thresholding.
///
/// Entries with |value| < threshold are exactly zero; surviving entries are
/// bit-identical to the input block. `mask` marks the nonzero entries.
struct SparseBlock {
  CoeffBlock block;
  SupportMask mask;
  double threshold = 0.0;
};

/// Nearest-rank p-th percentile of the absolute values: the entry at
/// 1-based index ceil(p/100 * count) of the ascending sort (index 1 when
/// p = 0). Requires 0 <= p < 100.
double percentile_threshold(const Matrix& coeffs, double p);

/// Zeroes every coefficient whose magnitude is below the p-th percentile.
/// Ties at the threshold are kept.
SparseBlock sparsify(const CoeffBlock& block, double p);

/// Support set of a sparse block, recomputed from its coefficients.
SupportMask support(const SparseBlock& block);

}  // namespace scope
