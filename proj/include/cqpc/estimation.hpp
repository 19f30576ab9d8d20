#pragma once

// Data-driven estimates of the margin and gap functions and the iterative
// pooling-diameter loop built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqpc/bounds.hpp"
#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/isotonic.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/neighbors.hpp"
#include "cqpc/regressors.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

// ---------------------------------------------------------------------------
// Margin tables
// ---------------------------------------------------------------------------

/// Estimated hbar, hlow on a demand-offset grid, plus the raw quantile spreads
/// they were derived from.
struct MarginTable {
  std::vector<double> deltas;
  std::vector<double> h_upper;
  std::vector<double> h_lower;

  std::vector<double> level_offsets;  // t_j: fits at alpha +/- t_j
  std::vector<double> spread_min;     // min over x of the quantile gap at t_j
  std::vector<double> spread_max;     // max over x of the quantile gap at t_j

  /// Isotonic adjustment, clipping to [0,1], hlow <= hbar and h(0) = 0.
  static MarginTable from_raw(std::vector<double> deltas, std::vector<double> upper,
                              std::vector<double> lower) {
    if (deltas.size() != upper.size() || deltas.size() != lower.size()) {
      throw InvalidArgument("margin table columns differ in length");
    }
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (!(deltas[i] >= 0.0) || (i > 0 && !(deltas[i] > deltas[i - 1]))) {
        throw InvalidArgument("margin deltas must be nonnegative and strictly increasing");
      }
    }
    MarginTable t;
    t.h_upper = isotonic_increasing(upper);
    t.h_lower = isotonic_increasing(lower);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      t.h_upper[i] = std::clamp(t.h_upper[i], 0.0, 1.0);
      t.h_lower[i] = std::clamp(std::min(t.h_lower[i], t.h_upper[i]), 0.0, 1.0);
      if (deltas[i] == 0.0) t.h_upper[i] = t.h_lower[i] = 0.0;
    }
    t.deltas = std::move(deltas);
    return t;
  }

  MarginSpec spec() const { return margin_table(deltas, h_upper, h_lower); }
};

inline MarginSpec margin_from_table(const MarginTable& table) { return table.spec(); }

struct MarginOptions {
  std::vector<double> level_offsets;  // empty: evenly spaced up to min(a, 1-a) - 0.01
  std::size_t default_steps = 12;
  bool parallel = true;
};

namespace detail {

/// Piecewise-linear t(D) through (0,0) and nondecreasing knots (D_j, t_j),
/// continued past the last knot with the last slope, capped at 1.
inline double invert_spread(std::span<const double> spread, std::span<const double> offsets,
                            double delta) {
  if (delta <= 0.0) return 0.0;
  std::vector<double> xs{0.0};
  std::vector<double> ys{0.0};
  for (std::size_t j = 0; j < spread.size(); ++j) {
    if (spread[j] <= xs.back()) {
      ys.back() = std::max(ys.back(), offsets[j]);
    } else {
      xs.push_back(spread[j]);
      ys.push_back(offsets[j]);
    }
  }
  if (xs.size() == 1) return std::min(1.0, ys.back());
  std::size_t hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), delta) - xs.begin());
  if (hi >= xs.size()) hi = xs.size() - 1;
  const std::size_t lo = hi - 1;
  const double v = ys[lo] + (delta - xs[lo]) * (ys[hi] - ys[lo]) / (xs[hi] - xs[lo]);
  return std::clamp(v, 0.0, 1.0);
}

template <class F>
auto map_maybe_parallel(std::size_t count, bool parallel, F&& f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out;
  out.reserve(count);
  if (!parallel || count < 2) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(f(i));
    return out;
  }
  std::vector<std::future<R>> futures;
  futures.reserve(count);
  for (std::size_t i = 0; i < count; ++i) futures.push_back(std::async(std::launch::async, f, i));
  for (auto& fu : futures) out.push_back(fu.get());
  return out;
}

}  // namespace detail

/// Margin estimates from quantile fits at alpha and alpha +/- t_j on one
/// cluster. The smallest spread over x bounds hbar, the largest bounds hlow.
inline MarginTable estimate_margins(const Dataset& cluster, QuantileLevel level,
                                    const std::vector<double>& delta_grid, const Learner& learner,
                                    const MarginOptions& options = {}) {
  const double a = level.value();
  if (delta_grid.empty()) throw InvalidArgument("margin delta grid is empty");
  const bool all_zero = std::all_of(delta_grid.begin(), delta_grid.end(),
                                    [](double d) { return d == 0.0; });
  if (all_zero) {
    return MarginTable::from_raw(delta_grid, std::vector<double>(delta_grid.size(), 0.0),
                                 std::vector<double>(delta_grid.size(), 0.0));
  }

  std::vector<double> offsets = options.level_offsets;
  if (offsets.empty()) {
    const double t_max = std::min(a, 1.0 - a) - 0.01;
    if (!(t_max > 0.0) || options.default_steps == 0) {
      throw InvalidArgument("quantile level too extreme for margin estimation");
    }
    for (std::size_t j = 1; j <= options.default_steps; ++j) {
      offsets.push_back(t_max * static_cast<double>(j) / static_cast<double>(options.default_steps));
    }
  }
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    const double t = offsets[j];
    if (!(t > 0.0) || !(a - t > 0.0) || !(a + t < 1.0)) {
      throw InvalidArgument("quantile level escapes (0,1) at offset " + std::to_string(t));
    }
    if (j > 0 && !(t > offsets[j - 1])) throw InvalidArgument("level offsets must increase");
  }
  const std::size_t fits = 1 + 2 * offsets.size();
  if (cluster.rows() < 2 * fits) {
    throw InsufficientData("cluster (" + std::to_string(cluster.rows()) + " rows for " +
                           std::to_string(fits) + " fitted levels)");
  }

  auto models = detail::map_maybe_parallel(fits, options.parallel, [&](std::size_t i) {
    double lvl = a;
    if (i > 0) {
      const double t = offsets[(i - 1) / 2];
      lvl = (i % 2 == 1) ? a + t : a - t;
    }
    return learner(cluster, QuantileLevel(lvl));
  });
  const auto base = models[0]->predict_all(cluster);

  MarginTable table;
  table.level_offsets = offsets;
  std::vector<double> smin;
  std::vector<double> smax;
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    const auto up = models[1 + 2 * j]->predict_all(cluster);
    const auto dn = models[2 + 2 * j]->predict_all(cluster);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cluster.rows(); ++i) {
      const double g1 = up[i] - base[i];
      const double g2 = base[i] - dn[i];
      lo = std::min({lo, g1, g2});
      hi = std::max({hi, g1, g2});
    }
    smin.push_back(lo);
    smax.push_back(hi);
  }
  smin = isotonic_increasing(smin);
  smax = isotonic_increasing(smax);
  for (auto& v : smin) v = std::max(v, 0.0);
  for (auto& v : smax) v = std::max(v, 0.0);

  std::vector<double> hu;
  std::vector<double> hl;
  for (double d : delta_grid) {
    hu.push_back(detail::invert_spread(smin, offsets, d));
    hl.push_back(detail::invert_spread(smax, offsets, d));
  }
  MarginTable out = MarginTable::from_raw(delta_grid, std::move(hu), std::move(hl));
  out.level_offsets = std::move(table.level_offsets);
  out.spread_min = std::move(smin);
  out.spread_max = std::move(smax);
  return out;
}

// ---------------------------------------------------------------------------
// Gap function
// ---------------------------------------------------------------------------

struct KappaSample {
  double n1 = 0.0;
  double xi = 0.0;
  double kappa = 0.0;
};

struct KappaFit {
  double C = 0.0;
  double nu = 0.0;
  std::size_t used = 0;  // samples entering the log fit
};

/// Least squares on log kappa + 0.5 log n1 = log C + (nu/2) log xi, with nu >= 0.
inline KappaFit fit_kappa_parametric(std::span<const KappaSample> samples) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& s : samples) {
    if (s.kappa > 0.0 && s.xi > 0.0 && s.n1 > 0.0 && std::isfinite(s.kappa)) {
      xs.push_back(std::log(s.xi));
      ys.push_back(std::log(s.kappa) + 0.5 * std::log(s.n1));
    }
  }
  if (xs.empty()) throw NumericError("no positive kappa samples to fit");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  KappaFit fit;
  fit.used = xs.size();
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  if (slope > 0.0) {
    fit.nu = 2.0 * slope;
    fit.C = std::exp(my - slope * mx);
  } else {
    fit.nu = 0.0;
    fit.C = std::exp(my);
  }
  return fit;
}

struct KappaTable {
  std::vector<KappaSample> samples;
  std::vector<double> n1_values;
  std::vector<double> eta_by_n1;
  double eta = 0.0;
  double C = 0.0;
  double nu = 0.0;

  GapSpec gap() const { return GapSpec::power(C, nu); }
};

struct KappaOptions {
  double test_fraction = 0.5;
  std::size_t pair_cap = 10000;
  std::uint64_t seed = 0;
  std::optional<double> eta_override;
  std::optional<Standardization> scaling;  // distance scaling; identity if absent
  bool parallel = true;
};

/// Loss-difference surrogate for the gap between contexts, per training size.
inline KappaTable estimate_kappa(const Dataset& cluster, QuantileLevel level,
                                 const std::vector<double>& rho_grid, const Learner& learner,
                                 const KappaOptions& options = {}) {
  if (rho_grid.empty()) throw InvalidArgument("rho grid is empty");
  if (!(options.test_fraction > 0.0 && options.test_fraction < 1.0)) {
    throw InvalidArgument("kappa test_fraction must lie in (0,1)");
  }
  const std::size_t nb = cluster.rows();
  const auto n_test = static_cast<std::size_t>(std::llround(options.test_fraction * static_cast<double>(nb)));
  if (n_test < 2) throw InsufficientData("kappa-test");
  if (n_test >= nb) throw InsufficientData("kappa-train");

  RngStream split_rng(options.seed, 1);
  auto perm = split_rng.permutation(nb);
  std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Dataset b1 = cluster.subset(train_idx);
  const Dataset b2 = cluster.subset(test_idx);

  std::vector<std::size_t> n1s;
  for (double rho : rho_grid) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("rho values must lie in (0,1]");
    const auto n1 = static_cast<std::size_t>(std::floor(rho * static_cast<double>(b1.rows())));
    if (n1 < 1) throw InsufficientData("kappa-train (rho=" + std::to_string(rho) + ")");
    n1s.push_back(n1);
  }

  // Pairs within the test half, all of them or a seeded sample.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t all_pairs = n_test * (n_test - 1) / 2;
  if (all_pairs <= options.pair_cap) {
    pairs.reserve(all_pairs);
    for (std::size_t i = 0; i < n_test; ++i) {
      for (std::size_t j = i + 1; j < n_test; ++j) pairs.emplace_back(i, j);
    }
  } else {
    RngStream pair_rng(options.seed, 2);
    pairs.reserve(options.pair_cap);
    while (pairs.size() < options.pair_cap) {
      const std::size_t i = pair_rng.below(n_test);
      const std::size_t j = pair_rng.below(n_test);
      if (i != j) pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  const Standardization scaling =
      options.scaling ? *options.scaling : Standardization::identity(cluster.cols());
  const auto z = scaling.transform_rows(b2.features());
  const std::size_t d = cluster.cols();
  std::vector<double> pair_xi(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    pair_xi[p] = distance(std::span<const double>(z).subspan(pairs[p].first * d, d),
                          std::span<const double>(z).subspan(pairs[p].second * d, d));
  }

  const ModelPtr q_test = learner(b2, level);
  const auto pred_test = q_test->predict_all(b2);
  std::vector<double> loss_test(n_test);
  for (std::size_t i = 0; i < n_test; ++i) loss_test[i] = pinball(pred_test[i], b2.demand(i), level);

  auto fits = detail::map_maybe_parallel(n1s.size(), options.parallel, [&](std::size_t j) {
    RngStream rng(options.seed, 16 + j);
    const auto rows = rng.sample_without_replacement(b1.rows(), n1s[j]);
    return learner(b1.subset(rows), level);
  });

  KappaTable table;
  for (std::size_t j = 0; j < n1s.size(); ++j) {
    const auto pred = fits[j]->predict_all(b2);
    std::vector<double> diff(n_test);
    double eta_sum = 0.0;
    std::size_t eta_terms = 0;
    for (std::size_t i = 0; i < n_test; ++i) {
      const double l = pinball(pred[i], b2.demand(i), level);
      diff[i] = l - loss_test[i];
      if (l > 0.0) {
        eta_sum += std::abs(pred[i]) / l;
        ++eta_terms;
      }
    }
    double eta;
    if (options.eta_override) {
      eta = *options.eta_override;
    } else if (eta_terms > 0) {
      eta = eta_sum / static_cast<double>(eta_terms);
    } else {
      throw NumericError("eta undefined: every test loss is zero and no override given");
    }
    const auto n1 = static_cast<double>(n1s[j]);
    table.n1_values.push_back(n1);
    table.eta_by_n1.push_back(eta);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const double k = eta * std::abs(diff[pairs[p].first] - diff[pairs[p].second]);
      table.samples.push_back({n1, pair_xi[p], k});
    }
  }
  table.eta = std::accumulate(table.eta_by_n1.begin(), table.eta_by_n1.end(), 0.0) /
              static_cast<double>(table.eta_by_n1.size());
  const auto fit = fit_kappa_parametric(table.samples);
  table.C = fit.C;
  table.nu = fit.nu;
  return table;
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<std::size_t> labels;
  std::vector<double> centers;  // k x dim, row-major
  std::size_t k = 0;
  std::size_t iterations = 0;
};

/// Lloyd iterations from a seeded k-means++ start.
inline KMeansResult kmeans(std::span<const double> points, std::size_t dim, std::size_t k,
                           std::uint64_t seed, std::size_t max_iters = 100) {
  if (dim == 0 || points.size() % dim != 0) throw InvalidArgument("kmeans: bad point matrix");
  const std::size_t n = points.size() / dim;
  if (k == 0 || k > n) throw InvalidArgument("kmeans: k must lie in [1, n]");
  auto pt = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  RngStream rng(seed, 0x6b6d);

  KMeansResult r;
  r.k = k;
  r.centers.reserve(k * dim);
  const std::size_t first = rng.below(n);
  r.centers.insert(r.centers.end(), pt(first).begin(), pt(first).end());
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const auto prev = std::span<const double>(r.centers).subspan((c - 1) * dim, dim);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(pt(i), prev));
      total += best[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= best[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    r.centers.insert(r.centers.end(), pt(pick).begin(), pt(pick).end());
  }

  r.labels.assign(n, 0);
  for (r.iterations = 0; r.iterations < max_iters; ++r.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = squared_distance(pt(i), std::span<const double>(r.centers).subspan(c * dim, dim));
        if (dd < dmin) {
          dmin = dd;
          arg = c;
        }
      }
      changed = changed || r.labels[i] != arg;
      r.labels[i] = arg;
    }
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[r.labels[i] * dim + j] += points[i * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        r.centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
    }
    if (!changed && r.iterations > 0) break;
  }
  return r;
}

/// Largest pairwise distance among the given rows.
inline double cluster_diameter(std::span<const double> points, std::size_t dim,
                               std::span<const std::size_t> members) {
  double best = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      best = std::max(best, squared_distance(points.subspan(members[a] * dim, dim),
                                             points.subspan(members[b] * dim, dim)));
    }
  }
  return std::sqrt(best);
}

inline double median_cluster_diameter(std::span<const double> points, std::size_t dim,
                                      const KMeansResult& km) {
  std::vector<std::vector<std::size_t>> members(km.k);
  for (std::size_t i = 0; i < km.labels.size(); ++i) members[km.labels[i]].push_back(i);
  std::vector<double> diam;
  for (const auto& m : members) {
    if (!m.empty()) diam.push_back(cluster_diameter(points, dim, m));
  }
  std::sort(diam.begin(), diam.end());
  const std::size_t c = diam.size();
  return c % 2 == 1 ? diam[c / 2] : 0.5 * (diam[c / 2 - 1] + diam[c / 2]);
}

/// k-means with k doubled until the median cluster diameter drops to target.
inline KMeansResult cluster_to_diameter(std::span<const double> points, std::size_t dim,
                                        double target, std::uint64_t seed,
                                        std::size_t max_k = 256) {
  const std::size_t n = points.size() / dim;
  KMeansResult best = kmeans(points, dim, 1, seed);
  double best_gap = std::abs(median_cluster_diameter(points, dim, best) - target);
  for (std::size_t k = 2; k <= std::min(max_k, n); k *= 2) {
    auto km = kmeans(points, dim, k, seed);
    const double med = median_cluster_diameter(points, dim, km);
    const double gap = std::abs(med - target);
    if (gap < best_gap) {
      best = std::move(km);
      best_gap = gap;
    }
    if (med <= target) break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Iterative pooling-diameter selection
// ---------------------------------------------------------------------------

struct Algorithm3Config {
  double init_xi = 1.0;
  std::size_t max_rounds = 5;
  double stability_tol = 0.05;
  std::vector<double> delta_grid{0.05, 0.1, 0.2, 0.4, 0.8};
  std::vector<double> rho_grid{0.25, 0.5, 0.75, 1.0};
  double region_rho = 0.75;      // train share of pooled points in the phi region
  double xi_min = 0.0;           // 0: diameter holding min_pool points
  double xi_max = 0.0;           // 0: diameter covering every point
  std::size_t xi_grid_size = 40;
  std::size_t min_pool = 50;
  std::uint64_t seed = 0;
  bool standardize = true;
  std::vector<double> reference;  // query point; empty means the feature means
  MarginOptions margin;
  KappaOptions kappa;

  void validate() const {
    if (!(init_xi > 0.0)) throw InvalidArgument("init_xi must be positive");
    if (max_rounds == 0) throw InvalidArgument("max_rounds must be positive");
    if (!(stability_tol >= 0.0)) throw InvalidArgument("stability_tol must be nonnegative");
    if (!(region_rho > 0.0 && region_rho < 1.0)) throw InvalidArgument("region_rho must lie in (0,1)");
    if (xi_grid_size == 0) throw InvalidArgument("xi_grid_size must be positive");
    if (min_pool < 2) throw InvalidArgument("min_pool must be at least 2");
  }
};

struct Algorithm3Round {
  std::size_t round = 0;
  double xi = 0.0;  // diameter after the round
  double delta = std::numeric_limits<double>::quiet_NaN();
  double phi = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::size_t pool_size = 0;
  double C = 0.0;
  double nu = 0.0;
  std::string note;
};

struct Algorithm3Result {
  double xi = 0.0;
  MarginTable margins;
  KappaTable kappa;
  std::vector<Algorithm3Round> trace;
  double xi_lo = 0.0;
  double xi_hi = 0.0;
  bool converged = false;
};

inline Algorithm3Result algorithm3_loop(const Dataset& data, QuantileLevel level,
                                        const Learner& learner, const Algorithm3Config& config) {
  config.validate();
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (n < config.min_pool) throw InsufficientData("pool");
  const Standardization scaling =
      config.standardize ? fit_standardization(data) : Standardization::identity(d);
  const auto z = scaling.transform_rows(data.features());

  std::vector<double> ref_raw = config.reference;
  if (ref_raw.empty()) {
    ref_raw.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) ref_raw[j] += data.feature(i, j);
    }
    for (auto& v : ref_raw) v /= static_cast<double>(n);
  }
  if (ref_raw.size() != d) throw InvalidArgument("reference point has wrong dimension");
  const auto ref = scaling.transform(ref_raw);
  const NeighborIndex index(z, d);

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = distance(std::span<const double>(z).subspan(i * d, d), ref);
  }
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());

  Algorithm3Result result;
  result.xi_hi = config.xi_max > 0.0 ? config.xi_max : 2.0 * sorted.back();
  result.xi_lo = config.xi_min > 0.0 ? config.xi_min : 2.0 * sorted[config.min_pool - 1];
  if (!(result.xi_hi > 0.0)) throw DataError("all contexts coincide; no diameter to search");
  if (!(result.xi_lo > 0.0) || result.xi_lo >= result.xi_hi) result.xi_lo = result.xi_hi / 10.0;
  const auto grid = log_grid(result.xi_lo, result.xi_hi, config.xi_grid_size);

  const RegionFn region = [&](double xi) {
    const auto count = static_cast<double>(
        std::upper_bound(sorted.begin(), sorted.end(), 0.5 * xi) - sorted.begin());
    return PoolRegion{config.region_rho * count, (1.0 - config.region_rho) * count, xi};
  };

  auto pool_rows = [&](std::vector<std::size_t> rows) {
    if (rows.size() < config.min_pool) rows = index.k_nearest(ref, config.min_pool);
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  // First pool: the k-means cluster around the reference.
  std::vector<std::size_t> rows;
  {
    const auto km = cluster_to_diameter(z, d, config.init_xi, config.seed);
    std::size_t own = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < km.k; ++c) {
      const double dd = squared_distance(ref, std::span<const double>(km.centers).subspan(c * d, d));
      if (dd < best) {
        best = dd;
        own = c;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (km.labels[i] == own) rows.push_back(i);
    }
    rows = pool_rows(std::move(rows));
  }

  double xi = std::clamp(config.init_xi, result.xi_lo, result.xi_hi);
  std::size_t consecutive_failures = 0;
  KappaOptions kopts = config.kappa;
  kopts.scaling = scaling;
  for (std::size_t round = 1; round <= config.max_rounds; ++round) {
    if (round > 1) rows = pool_rows(index.within_radius(ref, xi));
    const Dataset pool = data.subset(rows);
    Algorithm3Round rec;
    rec.round = round;
    rec.pool_size = rows.size();
    try {
      kopts.seed = config.seed + round;
      MarginTable margins = estimate_margins(pool, level, config.delta_grid, learner, config.margin);
      KappaTable kappa = estimate_kappa(pool, level, config.rho_grid, learner, kopts);
      rec.C = kappa.C;
      rec.nu = kappa.nu;
      const auto found = two_approx_pool_search(grid, region, margins.spec(), kappa.gap());
      result.margins = std::move(margins);
      result.kappa = std::move(kappa);
      rec.delta = found.delta;
      rec.phi = found.phi;
      rec.xi = found.xi;
      consecutive_failures = 0;
    } catch (const NumericError& e) {
      rec.failed = true;
      rec.xi = xi;
      rec.note = e.what();
      ++consecutive_failures;
    }
    result.trace.push_back(rec);
    const double previous = xi;
    xi = rec.xi;
    if (!rec.failed && std::abs(xi - previous) <= config.stability_tol * previous) {
      result.converged = true;
      break;
    }
    if (consecutive_failures >= 2) break;
  }
  result.xi = xi;
  return result;
}

}  // namespace cqpc
