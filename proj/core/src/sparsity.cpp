#include "scope/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scope/error.hpp"

namespace scope {
namespace {

void check_percentile(double p) {
  if (!(p >= 0.0 && p < 100.0)) {
    throw InvalidArgument("percentile must lie in [0, 100), got " + std::to_string(p));
  }
}

SupportMask mask_of(const Matrix& coeffs, int k) {
  SupportMask mask{k, BoolMatrix(coeffs.rows(), coeffs.cols()), 0};
  for (Eigen::Index c = 0; c < coeffs.cols(); ++c) {
    for (Eigen::Index r = 0; r < coeffs.rows(); ++r) {
      const bool nonzero = coeffs(r, c) != 0.0;
      mask.kept(r, c) = nonzero;
      mask.kept_count += nonzero ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace

bool SupportMask::subset_of(const SupportMask& other) const {
  if (kept.rows() != other.kept.rows() || kept.cols() != other.kept.cols()) return false;
  return ((kept.array() && !other.kept.array()).count()) == 0;
}

double percentile_threshold(const Matrix& coeffs, double p) {
  check_percentile(p);
  const auto count = static_cast<std::size_t>(coeffs.size());
  if (count == 0) throw InvalidArgument("cannot threshold an empty block");

  std::vector<double> magnitudes(count);
  for (std::size_t i = 0; i < count; ++i) magnitudes[i] = std::abs(coeffs.data()[i]);

  // The 1e-9 slack keeps products such as 0.95 * 2000 / 100 from rounding up
  // past an exact integer rank.
  const double raw = p * static_cast<double>(count) / 100.0;
  auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, count);

  auto nth = magnitudes.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(magnitudes.begin(), nth, magnitudes.end());
  return *nth;
}

SparseBlock sparsify(const CoeffBlock& block, double p) {
  if (block.coeffs.rows() != block.k || block.coeffs.cols() != block.k) {
    throw ShapeError("coefficient block is " + std::to_string(block.coeffs.rows()) + "x" +
                     std::to_string(block.coeffs.cols()) + ", expected k=" +
                     std::to_string(block.k));
  }
  const double tau = percentile_threshold(block.coeffs, p);

  SparseBlock out{block, {}, tau};
  Matrix& c = out.block.coeffs;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (std::abs(c.data()[i]) < tau) c.data()[i] = 0.0;
  }
  out.mask = mask_of(c, block.k);
  return out;
}

SupportMask support(const SparseBlock& block) { return mask_of(block.block.coeffs, block.block.k); }

}  // namespace scope
