#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "scope/environment.hpp"
#include "scope/sparsity.hpp"
#include "scope/transform.hpp"

namespace scope {

/// Binary 8-bit PGM (P5). Header comments are allowed; maxval must be in
/// [1, 255] and pixels are scaled by 1/maxval. ConfigError on bad input.
Frame decode_pgm(std::string_view bytes);
std::string encode_pgm(const Frame& frame);

Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

/// Every intermediate of the per-frame pipeline, with energy bookkeeping.
struct InspectReport {
  Matrix full;
  CoeffBlock truncated;
  SparseBlock sparse;
  double total_energy = 0.0;
  double truncated_energy = 0.0;
  double sparse_energy = 0.0;

  // Ratios are 1 when the denominator is zero (nothing to lose).
  double truncated_fraction() const;          // truncated / total
  double sparse_fraction_of_truncated() const;  // sparse / truncated
  double sparse_fraction_of_total() const;      // sparse / total
};

InspectReport inspect_frame(const Frame& frame, int k, double p);

/// The built-in game's observation after `steps` agent steps of NOOP.
Frame builtin_frame_after(const EnvConfig& config, int steps);

std::string matrix_csv(const Matrix& m);
std::string mask_csv(const BoolMatrix& mask);

}  // namespace scope
