#include "scope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <functional>
#include <vector>

#include "scope/error.hpp"

namespace scope {

Summary aggregate(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("cannot aggregate an empty score list");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("scores must be finite");
  }
  Summary out;
  out.count = scores.size();
  const double n = static_cast<double>(scores.size());

  double sum = 0.0;
  for (double s : scores) sum += s;
  out.mean = sum / n;

  double squares = 0.0;
  for (double s : scores) squares += (s - out.mean) * (s - out.mean);
  out.std = std::sqrt(squares / n);

  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  out.min = *lo;
  out.best = *hi;

  if (scores.size() >= 5) {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::partial_sort(sorted.begin(), sorted.begin() + 5, sorted.end(), std::greater<>());
    double top = 0.0;
    for (int i = 0; i < 5; ++i) top += sorted[i];
    out.top5_mean = top / 5.0;
  }
  return out;
}

double nearest_rank(std::span<const double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double raw = p * static_cast<double>(sorted.size()) / 100.0;
  auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace scope
