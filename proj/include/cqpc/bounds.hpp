#pragma once

// Coverage-gap calculus: margin and gap functions, phi, the balancing
// margin level, pooling-diameter search and quantile confidence intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqpc/conformal.hpp"
#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/normal.hpp"
#include "cqpc/regressors.hpp"

namespace cqpc {

enum class MarginFamily { uniform, gaussian, exponential, table };

inline const char* to_string(MarginFamily f) noexcept {
  switch (f) {
    case MarginFamily::uniform:
      return "uniform";
    case MarginFamily::gaussian:
      return "gaussian";
    case MarginFamily::exponential:
      return "exponential";
    case MarginFamily::table:
      return "table";
  }
  return "unknown";
}

inline MarginFamily margin_family_from_string(const std::string& name) {
  if (name == "uniform") return MarginFamily::uniform;
  if (name == "gaussian") return MarginFamily::gaussian;
  if (name == "exponential") return MarginFamily::exponential;
  if (name == "table") return MarginFamily::table;
  throw InvalidArgument("unknown margin family '" + name +
                        "' (valid: uniform, gaussian, exponential, table)");
}

/// Upper and lower envelopes of probability mass within Delta of the true quantile.
struct MarginSpec {
  MarginFamily family = MarginFamily::uniform;
  std::function<double(double)> upper;
  std::function<double(double)> lower;
  double gamma_low = 0.0;
  double gamma_high = 0.0;
  double alpha = 0.0;
};

namespace detail {

inline void check_gammas(double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
    throw InvalidArgument("margin parameters need 0 < gamma_low <= gamma_high < inf");
  }
}

}  // namespace detail

inline MarginSpec margin_uniform(double gamma_low, double gamma_high) {
  detail::check_gammas(gamma_low, gamma_high);
  MarginSpec m;
  m.family = MarginFamily::uniform;
  m.gamma_low = gamma_low;
  m.gamma_high = gamma_high;
  m.upper = [gamma_low](double d) { return d / (2.0 * gamma_low); };
  m.lower = [gamma_high](double d) { return d / (2.0 * gamma_high); };
  return m;
}

/// Normal demand with scale in [gamma_low, gamma_high].
inline MarginSpec margin_gaussian(double gamma_low, double gamma_high, QuantileLevel level) {
  detail::check_gammas(gamma_low, gamma_high);
  const double a = level.value();
  const double za = normal_quantile(a);
  MarginSpec m;
  m.family = MarginFamily::gaussian;
  m.gamma_low = gamma_low;
  m.gamma_high = gamma_high;
  m.alpha = a;
  m.upper = [za, a, gamma_low](double d) { return normal_cdf(za + d / gamma_low) - a; };
  m.lower = [za, a, gamma_high](double d) { return normal_cdf(za + d / gamma_high) - a; };
  return m;
}

/// Exponential demand with rate in [gamma_low, gamma_high].
inline MarginSpec margin_exponential(double gamma_low, double gamma_high, QuantileLevel level) {
  detail::check_gammas(gamma_low, gamma_high);
  const double a = level.value();
  MarginSpec m;
  m.family = MarginFamily::exponential;
  m.gamma_low = gamma_low;
  m.gamma_high = gamma_high;
  m.alpha = a;
  m.upper = [a, gamma_high](double d) { return (1.0 - a) * -std::expm1(-gamma_high * d); };
  m.lower = [a, gamma_low](double d) { return (1.0 - a) * -std::expm1(-gamma_low * d); };
  return m;
}

/// Piecewise-linear interpolant through (0,0) and (deltas[i], values[i]);
/// beyond the last knot it continues with the last segment's slope.
inline std::function<double(double)> piecewise_linear(std::vector<double> deltas,
                                                      std::vector<double> values) {
  if (deltas.size() != values.size()) throw InvalidArgument("table size mismatch");
  std::vector<double> xs{0.0};
  std::vector<double> ys{0.0};
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > xs.back())) {
      if (deltas[i] == 0.0 && xs.size() == 1) continue;
      throw InvalidArgument("table deltas must be strictly increasing and positive");
    }
    xs.push_back(deltas[i]);
    ys.push_back(values[i]);
  }
  return [xs = std::move(xs), ys = std::move(ys)](double d) {
    if (d <= 0.0) return 0.0;
    if (xs.size() == 1) return 0.0;
    auto it = std::upper_bound(xs.begin(), xs.end(), d);
    std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    if (hi >= xs.size()) hi = xs.size() - 1;
    const std::size_t lo = hi - 1;
    const double t = (d - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
  };
}

inline MarginSpec margin_table(const std::vector<double>& deltas,
                               const std::vector<double>& upper,
                               const std::vector<double>& lower) {
  MarginSpec m;
  m.family = MarginFamily::table;
  m.upper = piecewise_linear(deltas, upper);
  m.lower = piecewise_linear(deltas, lower);
  return m;
}

/// kappa(n1, xi) = C sqrt(xi^nu / n1), or a caller-supplied evaluator.
struct GapSpec {
  double C = 0.0;
  double nu = 0.0;
  std::function<double(double, double)> custom;

  static GapSpec power(double C, double nu) {
    if (!(C >= 0.0) || !(nu >= 0.0)) throw InvalidArgument("gap needs C >= 0 and nu >= 0");
    return {C, nu, {}};
  }
  static GapSpec zero() { return {}; }

  double operator()(double n1, double xi) const {
    if (custom) return custom(n1, xi);
    if (C == 0.0) return 0.0;
    if (!(n1 > 0.0)) return std::numeric_limits<double>::infinity();
    return C * std::sqrt(std::pow(xi, nu) / n1);
  }
};

/// Sample counts available in a pooling ball of diameter xi.
struct PoolRegion {
  double n1 = 0.0;
  double n2 = 0.0;
  double xi = 0.0;
};

/// n(B_xi) = n (xi / xi_max)^iota, split as rho : (1 - rho).
struct RegionModel {
  double rho = 0.75;
  double n = 0.0;
  double iota = 1.0;
  double xi_max = 1.0;

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("rho must lie in (0,1)");
    if (!(n >= 1.0)) throw InvalidArgument("region sample count must be >= 1");
    if (!(iota >= 0.0)) throw InvalidArgument("iota must be nonnegative");
    if (!(xi_max > 0.0)) throw InvalidArgument("xi_max must be positive");
  }

  double count(double xi) const { return n * std::pow(xi / xi_max, iota); }
  PoolRegion at(double xi) const {
    const double total = count(xi);
    return {rho * total, (1.0 - rho) * total, xi};
  }
};

using RegionFn = std::function<PoolRegion(double)>;

inline RegionFn region_fn(const RegionModel& model) {
  model.validate();
  return [model](double xi) { return model.at(xi); };
}

/// phi(Delta, B) = hbar(Delta + kappa) + exp(-2 n2 hlow(Delta)^2).
inline double phi(double delta, const PoolRegion& region, const MarginSpec& margin,
                  const GapSpec& gap) {
  const double k = gap(region.n1, region.xi);
  const double hl = margin.lower(delta);
  return margin.upper(delta + k) + std::exp(-2.0 * region.n2 * hl * hl);
}

struct TildeDelta {
  double delta = 0.0;
  double residual = 0.0;  // g(delta)
};

/// Root of g(D) = hbar(D + kappa) - exp(-2 n2 hlow(D)^2) by bracket growth and bisection.
inline TildeDelta solve_tilde_delta(const PoolRegion& region, const MarginSpec& margin,
                                    const GapSpec& gap, double tol = 1e-12,
                                    double delta_cap = 1e8) {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  const double k = gap(region.n1, region.xi);
  auto g = [&](double d) {
    const double hl = margin.lower(d);
    return margin.upper(d + k) - std::exp(-2.0 * region.n2 * hl * hl);
  };
  double lo = 0.0;
  const double g_lo = g(lo);
  if (!std::isfinite(k) || !(g_lo < 0.0)) {
    if (std::isfinite(g_lo) && std::abs(g_lo) <= tol) return {0.0, g_lo};
    throw NoCrossing(g_lo, std::isfinite(k) ? g(delta_cap) : g_lo);
  }
  double hi = 1e-3;
  double g_hi = g(hi);
  while (g_hi < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > delta_cap) throw NoCrossing(g_lo, g_hi);
    g_hi = g(hi);
  }
  double mid = hi;
  double g_mid = g_hi;
  for (int it = 0; it < 400; ++it) {
    mid = lo + 0.5 * (hi - lo);
    g_mid = g(mid);
    if (std::abs(g_mid) <= tol || !(mid > lo && mid < hi)) break;
    (g_mid < 0.0 ? lo : hi) = mid;
  }
  return {mid, g_mid};
}

struct PoolSearchResult {
  double xi = 0.0;
  double delta = 0.0;
  double phi = 0.0;
  double residual = 0.0;
  std::size_t skipped = 0;  // candidates with no crossing
};

/// Two-approximation search: balance Delta per xi, keep the xi with smallest phi.
inline PoolSearchResult two_approx_pool_search(std::span<const double> xi_grid,
                                               const RegionFn& region, const MarginSpec& margin,
                                               const GapSpec& gap, double tol = 1e-12) {
  if (xi_grid.empty()) throw InvalidArgument("xi grid is empty");
  std::optional<PoolSearchResult> best;
  std::size_t skipped = 0;
  for (double xi : xi_grid) {
    if (!(xi > 0.0)) throw InvalidArgument("xi candidates must be positive");
    const PoolRegion r = region(xi);
    TildeDelta td;
    try {
      td = solve_tilde_delta(r, margin, gap, tol);
    } catch (const NoCrossing&) {
      ++skipped;
      continue;
    }
    const double value = phi(td.delta, r, margin, gap);
    if (!best || value < best->phi || (value == best->phi && xi > best->xi)) {
      best = PoolSearchResult{xi, td.delta, value, td.residual, 0};
    }
  }
  if (!best) throw NumericError("no crossing for any pooling diameter candidate");
  best->skipped = skipped;
  return *best;
}

/// Log-spaced grid of `count` points on [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw InvalidArgument("invalid log grid");
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

// ---------------------------------------------------------------------------
// Closed-form stationary diameter for linear margins and power-law gap
// ---------------------------------------------------------------------------

enum class DiameterKind { full_region, roots, no_stationary_point };

struct DiameterResult {
  DiameterKind kind = DiameterKind::full_region;
  double c1_prime = 0.0;
  double c2_prime = 0.0;
  std::vector<double> roots;  // ascending
  double xi = std::numeric_limits<double>::infinity();  // selected diameter
  double phi = std::numeric_limits<double>::quiet_NaN();
  double max_l = 0.0;
  double argmax_l = 0.0;
};

struct Prop1Params {
  double c1 = 1.0;
  double c2 = 1.0;
  double rho = 0.5;
  double n = 1.0;
  double iota = 1.0;
  double nu = 2.0;

  void validate() const {
    if (!(c2 > 0.0) || !(c1 >= c2)) throw InvalidArgument("need c1 >= c2 > 0");
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("rho must lie in (0,1)");
    if (!(n >= 1.0)) throw InvalidArgument("n must be >= 1");
    if (!(iota >= 0.0) || !(nu >= 0.0)) throw InvalidArgument("iota and nu must be >= 0");
  }

  double c1_prime() const {
    return c1 * iota * std::sqrt(rho) / (4.0 * (nu - iota) * (1.0 - rho) * c2 * c2);
  }
  double c2_prime() const {
    const double r = (nu - iota) / iota;
    return 2.0 * c2 * c2 * r * r * (1.0 - rho) / rho;
  }
  /// L(xi) = sqrt(n xi^(nu+iota)) exp(-c2' xi^nu).
  double L(double xi) const {
    return std::sqrt(n * std::pow(xi, nu + iota)) * std::exp(-c2_prime() * std::pow(xi, nu));
  }
  /// phi(Delta~(xi), B_xi) under the proposition's linear margins and gap.
  double phi_at(double xi) const {
    const MarginSpec m{MarginFamily::uniform,
                       [c = c1](double d) { return c * d; },
                       [c = c2](double d) { return c * d; }};
    const GapSpec gap = GapSpec::power(1.0, nu);
    const double total = n * std::pow(xi, iota);
    const PoolRegion r{rho * total, (1.0 - rho) * total, xi};
    const auto td = solve_tilde_delta(r, m, gap);
    return phi(td.delta, r, m, gap);
  }
};

inline DiameterResult optimal_diameter_prop1(const Prop1Params& p) {
  p.validate();
  DiameterResult out;
  if (p.nu <= p.iota) return out;
  if (!(p.iota > 0.0)) throw InvalidArgument("iota must be positive when nu > iota");
  out.c1_prime = p.c1_prime();
  out.c2_prime = p.c2_prime();
  const double target = out.c1_prime;
  // log L = 0.5 log n + 0.5 (nu+iota) log xi - c2' xi^nu has a single interior maximum.
  const double peak = std::pow((p.nu + p.iota) / (2.0 * out.c2_prime * p.nu), 1.0 / p.nu);
  out.argmax_l = peak;
  out.max_l = p.L(peak);
  if (target > out.max_l) {
    out.kind = DiameterKind::no_stationary_point;
    return out;
  }
  out.kind = DiameterKind::roots;
  auto h = [&](double xi) { return p.L(xi) - target; };
  auto refine = [&](double lo, double hi) {
    // h(lo) and h(hi) have opposite signs; bisect geometrically then arithmetically.
    double h_lo = h(lo);
    for (int it = 0; it < 2000; ++it) {
      const double mid = it < 200 ? std::sqrt(lo * hi) : lo + 0.5 * (hi - lo);
      if (!(mid > lo && mid < hi)) break;
      const double hm = h(mid);
      if (hm == 0.0) return mid;
      if ((hm < 0.0) == (h_lo < 0.0)) {
        lo = mid;
        h_lo = hm;
      } else {
        hi = mid;
      }
    }
    return std::abs(h(lo)) <= std::abs(h(hi)) ? lo : hi;
  };
  if (target == out.max_l) {
    out.roots.push_back(peak);
  } else {
    // Scan outward on a log grid from the peak until L drops below the target.
    double lo = peak;
    while (h(lo) >= 0.0) {
      lo /= 4.0;
      if (lo < 1e-300) throw NumericError("left root of L not bracketed");
    }
    out.roots.push_back(refine(lo, std::min(peak, lo * 4.0)));
    double hi = peak;
    while (h(hi) >= 0.0) {
      hi *= 4.0;
      if (!std::isfinite(hi)) throw NumericError("right root of L not bracketed");
    }
    out.roots.push_back(refine(std::max(peak, hi / 4.0), hi));
  }
  double best_phi = std::numeric_limits<double>::infinity();
  for (double r : out.roots) {
    double v;
    try {
      v = p.phi_at(r);
    } catch (const NoCrossing&) {
      continue;
    }
    if (v < best_phi) {
      best_phi = v;
      out.xi = r;
    }
  }
  out.phi = best_phi;
  if (!std::isfinite(best_phi)) out.xi = out.roots.front();
  return out;
}

// ---------------------------------------------------------------------------
// Confidence interval of the quantile
// ---------------------------------------------------------------------------

/// Smallest Delta >= 0 with h(Delta) >= target, by bisection to `tol`.
inline double inverse_margin(const std::function<double(double)>& h, double target,
                             double tol = 1e-10, double cap = 1e12) {
  if (!(target > 0.0)) return 0.0;
  double lo = 0.0;
  double hi = 1e-3;
  while (h(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > cap) throw NumericError("margin function never reaches " + std::to_string(target));
  }
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = lo + 0.5 * (hi - lo);
    if (!(mid > lo && mid < hi)) break;
    (h(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

/// z = hbar(hlow^{-1}(sqrt(log(1/(2 delta)) / (2 n2))) + kappa).
inline double interval_z(const PoolRegion& region, const MarginSpec& margin, const GapSpec& gap,
                         double delta_conf) {
  if (!(delta_conf > 0.0 && delta_conf < 1.0)) {
    throw InvalidArgument("confidence delta must lie in (0,1)");
  }
  if (!(region.n2 > 0.0)) throw InvalidArgument("region needs n2 > 0");
  const double t = std::sqrt(std::max(0.0, std::log(1.0 / (2.0 * delta_conf))) / (2.0 * region.n2));
  return margin.upper(inverse_margin(margin.lower, t) + gap(region.n1, region.xi));
}

/// Calibrated models at arbitrary quantile levels, fit once per level.
class LevelCalibratedFactory {
 public:
  LevelCalibratedFactory(Dataset train, Dataset calib, Learner learner,
                         PoolingSpec pooling = PoolingSpec::all(), bool standardize = true)
      : state_(std::make_shared<State>(std::move(train), std::move(calib), std::move(learner),
                                       pooling, standardize)) {}

  CalibratedModel at(QuantileLevel level) const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    auto it = state_->cache.find(level.value());
    if (it != state_->cache.end()) return it->second;
    auto model = cqpc_fit(state_->train, state_->calib, level, state_->learner, state_->pooling,
                          state_->standardize);
    state_->cache.emplace(level.value(), model);
    return model;
  }

  std::size_t fitted_levels() const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    return state_->cache.size();
  }
  std::size_t calibration_size() const noexcept { return state_->calib.rows(); }

 private:
  struct State {
    State(Dataset t, Dataset c, Learner l, PoolingSpec p, bool s)
        : train(std::move(t)), calib(std::move(c)), learner(std::move(l)), pooling(p),
          standardize(s) {}
    Dataset train;
    Dataset calib;
    Learner learner;
    PoolingSpec pooling;
    bool standardize;
    std::mutex mutex;
    std::map<double, CalibratedModel> cache;
  };
  std::shared_ptr<State> state_;
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double z = 0.0;
};

inline ConfidenceInterval confidence_interval(const LevelCalibratedFactory& factory,
                                              std::span<const double> x, QuantileLevel level,
                                              double delta_conf, const PoolRegion& region,
                                              const MarginSpec& margin, const GapSpec& gap) {
  const double a = level.value();
  const double z = interval_z(region, margin, gap, delta_conf);
  if (!(z < std::min(a, 1.0 - a))) throw IntervalEscapes(z);
  return {factory.at(QuantileLevel(a - z)).predict(x), factory.at(QuantileLevel(a + z)).predict(x),
          z};
}

}  // namespace cqpc
