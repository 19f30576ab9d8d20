#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"

namespace cqpc {

/// Normalized newsvendor cost (1-a)(q-y)^+ + a(y-q)^+.
inline double pinball(double decision, double demand, QuantileLevel level) {
  if (!std::isfinite(decision) || !std::isfinite(demand)) throw NonFiniteInput();
  const double a = level.value();
  return decision >= demand ? (1.0 - a) * (decision - demand) : a * (demand - decision);
}

inline double empirical_pinball(std::span<const double> predictions,
                                std::span<const double> targets, QuantileLevel level) {
  if (predictions.size() != targets.size()) {
    throw InvalidArgument("empirical_pinball: length mismatch");
  }
  if (predictions.empty()) throw InvalidArgument("empirical_pinball: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    total += pinball(predictions[i], targets[i], level);
  }
  return total / static_cast<double>(predictions.size());
}

namespace detail {

/// ceil(x) that ignores floating noise just above an integer.
inline long long robust_ceil(double x) {
  return static_cast<long long>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

}  // namespace detail

/// Lower empirical a-quantile: the k-th smallest value with k = max(1, ceil(a n)).
/// This is the smallest minimizer of the empirical pinball loss over constants.
inline double empirical_quantile(std::span<const double> values, QuantileLevel level) {
  if (values.empty()) throw InvalidArgument("empirical_quantile: empty input");
  const auto n = static_cast<long long>(values.size());
  long long k = detail::robust_ceil(level.value() * static_cast<double>(n));
  k = std::clamp(k, 1LL, n);
  std::vector<double> tmp(values.begin(), values.end());
  std::nth_element(tmp.begin(), tmp.begin() + (k - 1), tmp.end());
  return tmp[static_cast<std::size_t>(k - 1)];
}

}  // namespace cqpc
