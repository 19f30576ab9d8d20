#pragma once

// Synthetic demand generators: Y = f(X) + noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/normal.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

inline constexpr std::array<double, 10> kMaTheta{2.0, -4.0, 2.0, -1.0, 3.0,
                                                 5.0, -2.0, -1.0, 0.5, 2.0};

namespace detail {

inline void require_dim(std::span<const double> x, std::size_t d, const char* what) {
  if (x.size() != d) {
    throw InvalidArgument(std::string(what) + " needs a " + std::to_string(d) +
                          "-dimensional input, got " + std::to_string(x.size()));
  }
}

/// exp(t) / (1 + exp(t)) without overflow.
inline double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

inline double f_ml(std::span<const double> x) {
  detail::require_dim(x, 10, "f_ml");
  const auto sq = [](double v) { return v * v; };
  return std::exp(x[0] - 0.5) + 2.0 * sq(x[1] + x[2] - 1.0) + std::abs(x[3] - 0.5) +
         std::exp(x[4] - 1.0) + 2.0 * sq(x[5] + 3.0 * x[6] - 1.0) + std::abs(x[7] - 0.2) +
         sq(x[8]) + 0.5 * x[9];
}

inline double f_ma(std::span<const double> x) {
  detail::require_dim(x, 10, "f_ma");
  double t = 0.0;
  for (std::size_t j = 0; j < 10; ++j) t += kMaTheta[j] * x[j];
  return detail::logistic(t);
}

enum class Family { ml, ma, example2, example3, linear };
enum class NoiseKind { normal, uniform };

inline const char* to_string(Family f) noexcept {
  switch (f) {
    case Family::ml:
      return "ml";
    case Family::ma:
      return "ma";
    case Family::example2:
      return "example2";
    case Family::example3:
      return "example3";
    case Family::linear:
      return "linear";
  }
  return "unknown";
}

inline Family family_from_string(const std::string& name) {
  if (name == "ml") return Family::ml;
  if (name == "ma") return Family::ma;
  if (name == "example2") return Family::example2;
  if (name == "example3") return Family::example3;
  if (name == "linear") return Family::linear;
  throw InvalidArgument("unknown generator family '" + name +
                        "' (valid: ml, ma, example2, example3, linear)");
}

inline const char* to_string(NoiseKind k) noexcept {
  return k == NoiseKind::normal ? "normal" : "uniform";
}

inline NoiseKind noise_from_string(const std::string& name) {
  if (name == "normal") return NoiseKind::normal;
  if (name == "uniform") return NoiseKind::uniform;
  throw InvalidArgument("unknown noise kind '" + name + "' (valid: normal, uniform)");
}

/// Generator settings. d = 0 and an empty theta select the family defaults.
///
/// Uniform noise is U[-g(x), g(x)] with g interpolating gamma_low..gamma_high
/// along the first coordinate's range.
struct GeneratorSpec {
  Family family = Family::ma;
  std::size_t d = 0;
  std::vector<double> theta;
  double theta0 = 5.0;
  NoiseKind noise = NoiseKind::normal;
  double gamma_low = 1.0;
  double gamma_high = 1.0;
  std::uint64_t seed = 0;

  std::size_t dim() const {
    if (d != 0) return d;
    switch (family) {
      case Family::ml:
      case Family::ma:
        return 10;
      case Family::example3:
        return 1;
      case Family::example2:
        return 2;
      case Family::linear:
        return 3;
    }
    return 1;
  }

  std::vector<double> coefficients() const {
    if (!theta.empty()) return theta;
    if (family == Family::ma) return {kMaTheta.begin(), kMaTheta.end()};
    return std::vector<double>(dim(), 1.0);
  }

  /// Support of each covariate.
  std::pair<double, double> x_range() const {
    switch (family) {
      case Family::example2:
        return {-1.0, 1.0};
      case Family::example3:
        return {-4.0, 4.0};
      default:
        return {0.0, 1.0};
    }
  }

  void validate() const {
    const std::size_t k = dim();
    if ((family == Family::ml || family == Family::ma) && k != 10) {
      throw InvalidArgument(std::string(to_string(family)) + " family needs d=10, got d=" +
                            std::to_string(k));
    }
    if (family == Family::example3 && k != 1) {
      throw InvalidArgument("example3 family needs d=1, got d=" + std::to_string(k));
    }
    if (!theta.empty() && theta.size() != k && family != Family::ml &&
        family != Family::example3) {
      throw InvalidArgument("theta length does not match d");
    }
    if (noise == NoiseKind::uniform && !(gamma_low > 0.0 && gamma_high >= gamma_low)) {
      throw InvalidArgument("uniform noise needs 0 < gamma_low <= gamma_high");
    }
  }

  /// Noiseless part f(x).
  double mean(std::span<const double> x) const {
    detail::require_dim(x, dim(), "generator");
    switch (family) {
      case Family::ml:
        return f_ml(x);
      case Family::ma: {
        if (theta.empty()) return f_ma(x);
        double t = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) t += theta[j] * x[j];
        return detail::logistic(t);
      }
      case Family::example2: {
        const auto th = coefficients();
        double t = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) t += th[j] * x[j];
        return std::abs(t) + theta0;
      }
      case Family::example3:
        return x[0] > 0.0 ? 2.0 * x[0] + 2.0 : 4.0 * std::abs(x[0]) + 2.0;
      case Family::linear: {
        const auto th = coefficients();
        double t = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) t += th[j] * x[j];
        return t;
      }
    }
    return 0.0;
  }

  double noise_scale(std::span<const double> x) const {
    const auto [lo, hi] = x_range();
    const double t = std::clamp((x[0] - lo) / (hi - lo), 0.0, 1.0);
    return gamma_low + (gamma_high - gamma_low) * t;
  }
};

/// True conditional a-quantile of Y given x.
inline double true_quantile(const GeneratorSpec& spec, std::span<const double> x,
                            QuantileLevel level) {
  const double a = level.value();
  const double f = spec.mean(x);
  if (spec.noise == NoiseKind::uniform) return f + spec.noise_scale(x) * (2.0 * a - 1.0);
  return f + normal_quantile(a);
}

/// n i.i.d. rows; row i uses its own stream, so any block split gives the same data.
inline Dataset generate(const GeneratorSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) throw InvalidArgument("generate needs n >= 1");
  const std::size_t d = spec.dim();
  const auto [lo, hi] = spec.x_range();
  std::vector<double> x(n * d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(spec.seed, i + 1);
    auto row = std::span<double>(x).subspan(i * d, d);
    for (auto& v : row) v = rng.uniform(lo, hi);
    const double eps = spec.noise == NoiseKind::normal
                           ? rng.normal()
                           : spec.noise_scale(row) * (2.0 * rng.uniform() - 1.0);
    y[i] = spec.mean(row) + eps;
  }
  return Dataset(std::move(x), std::move(y), d);
}

}  // namespace cqpc
