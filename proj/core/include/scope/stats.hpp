#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace scope {

/// Summary of a list of episode or trial scores.
struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double best = 0.0;
  double min = 0.0;
  std::optional<double> top5_mean;  // mean of the five largest; needs count >= 5

  friend bool operator==(const Summary&, const Summary&) = default;
};

/// Throws InvalidArgument for an empty list or non-finite scores.
Summary aggregate(std::span<const double> scores);

/// Nearest-rank percentile: the value at 1-based index ceil(p/100 * n) of the
/// ascending sort, clamped to [1, n]. Requires 0 <= p <= 100.
double nearest_rank(std::span<const double> values, double p);

/// Shortest decimal text that reads back to exactly the same double.
std::string format_double(double v);

}  // namespace scope
