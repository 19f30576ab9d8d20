#pragma once

// Split-conformal calibration of quantile predictions with optional local pooling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/neighbors.hpp"
#include "cqpc/regressors.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

struct ConformalQuantile {
  double value = 0.0;
  bool clamped = false;
};

/// Order-statistic index k = ceil(level * (n + 1)), before clamping.
inline long long conformal_rank(std::size_t n, double level) {
  return detail::robust_ceil(level * (static_cast<double>(n) + 1.0));
}

/// The k-th smallest score with k = ceil(a(n+1)), clamped to [1, n].
inline ConformalQuantile conformal_quantile(std::span<const double> scores, QuantileLevel level) {
  if (scores.empty()) throw InvalidArgument("conformal quantile of an empty score set");
  const std::size_t n = scores.size();
  const long long k = conformal_rank(n, level.value());
  std::vector<double> v(scores.begin(), scores.end());
  if (k > static_cast<long long>(n)) return {*std::max_element(v.begin(), v.end()), true};
  if (k < 1) return {*std::min_element(v.begin(), v.end()), true};
  auto kth = v.begin() + (k - 1);
  std::nth_element(v.begin(), kth, v.end());
  return {*kth, false};
}

struct ConformityScores {
  std::vector<double> scores;
  std::vector<std::size_t> source_indices;
};

/// s_i = Y_i - qhat(X_i) over the calibration rows.
inline ConformityScores conformity_scores(const QuantileModel& model, const Dataset& calib) {
  ConformityScores out;
  out.scores.reserve(calib.rows());
  out.source_indices.reserve(calib.rows());
  for (std::size_t i = 0; i < calib.rows(); ++i) {
    out.scores.push_back(calib.demand(i) - model.predict(calib.row(i)));
    out.source_indices.push_back(i);
  }
  return out;
}

/// Lower and upper bracket on unconditional coverage P(Y <= calibrated prediction).
inline std::pair<double, double> coverage_bounds(std::size_t n2, QuantileLevel level) {
  if (n2 == 0) throw InvalidArgument("coverage bounds need n2 >= 1");
  const double a = level.value();
  return {a, a + 1.0 / (static_cast<double>(n2) + 1.0)};
}

/// Symmetric split-conformal interval yhat +/- Q over absolute residuals,
/// with k = ceil((1-a)(n+1)).
inline std::pair<double, double> reference_interval(double yhat,
                                                    std::span<const double> abs_residuals,
                                                    QuantileLevel level) {
  const auto q = conformal_quantile(abs_residuals, QuantileLevel(1.0 - level.value()));
  return {yhat - q.value, yhat + q.value};
}

inline std::pair<double, double> reference_interval(std::span<const double> x,
                                                    const QuantileModel& mean_model,
                                                    std::span<const double> abs_residuals,
                                                    QuantileLevel level) {
  return reference_interval(mean_model.predict(x), abs_residuals, level);
}

/// A base model plus calibration scores. Predictions add the conformal
/// quantile of the scores pooled around the query.
class CalibratedModel {
 public:
  CalibratedModel(ModelPtr base, const Dataset& calib, Standardization scaling,
                  QuantileLevel level, PoolingSpec pooling = PoolingSpec::all())
      : state_(std::make_shared<State>(State{
            base, conformity_scores(*base, calib), scaling,
            NeighborIndex(scaling.transform_rows(calib.features()), calib.cols()), level})),
        pooling_(pooling) {
    if (base->dim() != calib.cols()) {
      throw InvalidArgument("calibration data dimension does not match the model");
    }
    state_->global = conformal_quantile(state_->scores.scores, level);
  }

  /// Same base model and scores under another pooling rule; nothing is refit.
  CalibratedModel with_pooling(PoolingSpec pooling) const {
    CalibratedModel copy = *this;
    copy.pooling_ = pooling;
    return copy;
  }

  /// Calibration rows pooled for a query, in (distance, index) order.
  std::vector<std::size_t> pooled_indices(std::span<const double> x) const {
    switch (pooling_.mode) {
      case PoolingMode::all: {
        std::vector<std::size_t> all(calibration_size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
      }
      case PoolingMode::count: {
        if (pooling_.m > calibration_size()) {
          throw DataError("pooling count m=" + std::to_string(pooling_.m) +
                          " exceeds calibration size " + std::to_string(calibration_size()));
        }
        return state_->index.k_nearest(state_->scaling.transform(x), pooling_.m);
      }
      case PoolingMode::radius: {
        auto idx = state_->index.within_radius(state_->scaling.transform(x), pooling_.xi);
        if (idx.empty()) throw EmptyPoolingRegion(pooling_.xi);
        return idx;
      }
    }
    return {};
  }

  ConformalQuantile correction(std::span<const double> x) const {
    if (pooling_.mode == PoolingMode::all) return state_->global;
    const auto idx = pooled_indices(x);
    std::vector<double> pooled;
    pooled.reserve(idx.size());
    for (std::size_t i : idx) pooled.push_back(state_->scores.scores[i]);
    return conformal_quantile(pooled, state_->level);
  }

  double predict(std::span<const double> x) const {
    return state_->base->predict(x) + correction(x).value;
  }

  std::vector<double> predict_all(const Dataset& data) const {
    std::vector<double> out(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) out[i] = predict(data.row(i));
    return out;
  }

  const QuantileModel& base() const noexcept { return *state_->base; }
  ModelPtr base_ptr() const noexcept { return state_->base; }
  const ConformityScores& scores() const noexcept { return state_->scores; }
  const PoolingSpec& pooling() const noexcept { return pooling_; }
  QuantileLevel level() const noexcept { return state_->level; }
  std::size_t calibration_size() const noexcept { return state_->scores.scores.size(); }
  ConformalQuantile global_correction() const noexcept { return state_->global; }

 private:
  struct State {
    ModelPtr base;
    ConformityScores scores;
    Standardization scaling;
    NeighborIndex index;
    QuantileLevel level;
    ConformalQuantile global{};
  };
  std::shared_ptr<State> state_;
  PoolingSpec pooling_;
};

/// Distance scaling for pooling: training-slice statistics, or identity.
inline Standardization pooling_scaling(const Dataset& train, bool standardize) {
  return standardize ? fit_standardization(train) : Standardization::identity(train.cols());
}

/// Fit on the training slice, score on the calibration slice.
inline CalibratedModel cqpc_fit(const Dataset& train, const Dataset& calib, QuantileLevel level,
                                const Learner& learner, PoolingSpec pooling = PoolingSpec::all(),
                                bool standardize = true) {
  if (train.cols() != calib.cols()) throw InvalidArgument("train/calib dimension mismatch");
  ModelPtr base = learner(train, level);
  return CalibratedModel(std::move(base), calib, pooling_scaling(train, standardize), level,
                         pooling);
}

struct GtlcRow {
  PoolingSpec spec;
  double mean_loss = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
};

struct GtlcResult {
  PoolingSpec best;
  double best_loss = 0.0;
  std::vector<GtlcRow> table;
  CalibratedModel model;  // base fit on I1, calibrated on all of I2 with `best`
};

/// Fold labels for n points: seeded shuffle, then K contiguous blocks.
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds,
                                                std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("GTLC needs at least 2 folds");
  if (folds > n) throw InsufficientData("calib");
  RngStream rng(seed, 0x67746c63);
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> label(n);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    for (std::size_t p = lo; p < hi; ++p) label[perm[p]] = f;
  }
  return label;
}

namespace detail {

inline double pooling_extent(const PoolingSpec& s) {
  switch (s.mode) {
    case PoolingMode::count:
      return static_cast<double>(s.m);
    case PoolingMode::radius:
      return s.xi;
    case PoolingMode::all:
      break;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// One global fit, K-fold rotation over the calibration slice
/// to choose the pooling rule with the lowest mean validation loss.
inline GtlcResult gtlc_select(const Dataset& train, const Dataset& calib, QuantileLevel level,
                              const Learner& learner, const std::vector<PoolingSpec>& candidates,
                              std::size_t folds, std::uint64_t seed, bool standardize = true) {
  if (candidates.empty()) throw InvalidArgument("GTLC needs at least one candidate");
  if (train.cols() != calib.cols()) throw InvalidArgument("train/calib dimension mismatch");
  const std::size_t n2 = calib.rows();
  const auto label = fold_assignment(n2, folds, seed);
  ModelPtr base = learner(train, level);
  const Standardization scaling = pooling_scaling(train, standardize);
  const auto scores = conformity_scores(*base, calib).scores;

  std::vector<GtlcRow> table;
  table.reserve(candidates.size());
  for (const auto& c : candidates) table.push_back({c, 0.0, true});

  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> fit_rows;
    std::vector<std::size_t> val_rows;
    for (std::size_t i = 0; i < n2; ++i) (label[i] == f ? val_rows : fit_rows).push_back(i);
    const Dataset fold_calib = calib.subset(fit_rows);
    std::vector<double> fold_scores;
    fold_scores.reserve(fit_rows.size());
    for (std::size_t i : fit_rows) fold_scores.push_back(scores[i]);
    const NeighborIndex index(scaling.transform_rows(fold_calib.features()), calib.cols());
    const auto global = conformal_quantile(fold_scores, level);

    for (auto& row : table) {
      if (!row.feasible) continue;
      if (row.spec.mode == PoolingMode::count && row.spec.m > fit_rows.size()) {
        row.feasible = false;
        continue;
      }
      for (std::size_t v : val_rows) {
        const auto x = calib.row(v);
        double q = global.value;
        if (row.spec.mode != PoolingMode::all) {
          const auto z = scaling.transform(x);
          const auto idx = row.spec.mode == PoolingMode::count
                               ? index.k_nearest(z, row.spec.m)
                               : index.within_radius(z, row.spec.xi);
          if (idx.empty()) {
            row.feasible = false;
            break;
          }
          std::vector<double> pooled;
          pooled.reserve(idx.size());
          for (std::size_t i : idx) pooled.push_back(fold_scores[i]);
          q = conformal_quantile(pooled, level).value;
        }
        row.mean_loss += pinball(base->predict(x) + q, calib.demand(v), level);
      }
    }
  }

  std::size_t best = candidates.size();
  for (std::size_t c = 0; c < table.size(); ++c) {
    auto& row = table[c];
    if (!row.feasible) {
      row.mean_loss = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    row.mean_loss /= static_cast<double>(n2);
    if (best == candidates.size()) {
      best = c;
      continue;
    }
    const auto& b = table[best];
    if (row.mean_loss < b.mean_loss ||
        (row.mean_loss == b.mean_loss &&
         detail::pooling_extent(row.spec) < detail::pooling_extent(b.spec))) {
      best = c;
    }
  }
  if (best == candidates.size()) {
    throw DataError("every pooling candidate is infeasible for the calibration folds");
  }
  CalibratedModel model(base, calib, scaling, level, table[best].spec);
  return {table[best].spec, table[best].mean_loss, std::move(table), std::move(model)};
}

}  // namespace cqpc
