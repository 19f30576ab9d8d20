#pragma once

// Shared domain types: quantile levels, newsvendor costs, datasets, feature
// standardization and train/calibration/test splitting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqpc/error.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

/// A quantile level strictly inside (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(double value) : value_(value) {
    if (!(value > 0.0 && value < 1.0)) {
      throw InvalidArgument("quantile level must lie in (0,1), got " + std::to_string(value));
    }
  }
  double value() const noexcept { return value_; }
  friend bool operator==(QuantileLevel, QuantileLevel) = default;

 private:
  double value_;
};

/// Overage and underage costs of the newsvendor.
class CostParams {
 public:
  CostParams(double overage, double underage) : c_o_(overage), c_u_(underage) {
    if (!(overage > 0.0) || !(underage > 0.0) || !std::isfinite(overage) ||
        !std::isfinite(underage)) {
      throw InvalidArgument("costs must be positive and finite");
    }
  }
  double overage() const noexcept { return c_o_; }
  double underage() const noexcept { return c_u_; }
  /// Critical quantile c_u / (c_o + c_u).
  QuantileLevel level() const { return QuantileLevel(c_u_ / (c_o_ + c_u_)); }

 private:
  double c_o_;
  double c_u_;
};

/// Per-column affine map x -> (x - mean) / scale.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  std::size_t dim() const noexcept { return mean.size(); }

  void apply(std::span<const double> x, std::span<double> out) const {
    if (x.size() != dim() || out.size() != dim()) {
      throw InvalidArgument("standardization dimension mismatch");
    }
    for (std::size_t j = 0; j < dim(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
  }

  std::vector<double> transform(std::span<const double> x) const {
    std::vector<double> out(x.size());
    apply(x, out);
    return out;
  }

  /// Transforms a row-major block of points.
  std::vector<double> transform_rows(std::span<const double> rows) const {
    std::vector<double> out(rows.size());
    const std::size_t d = dim();
    for (std::size_t i = 0; i * d < rows.size(); ++i) {
      apply(rows.subspan(i * d, d), std::span<double>(out).subspan(i * d, d));
    }
    return out;
  }

  static Standardization identity(std::size_t d) {
    return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  }
};

/// Feature matrix (row-major, n x d) plus demand vector.
class Dataset {
 public:
  Dataset(std::vector<double> features, std::vector<double> demand,
          std::vector<std::string> feature_names,
          std::optional<Standardization> standardization = std::nullopt)
      : features_(std::move(features)),
        demand_(std::move(demand)),
        names_(std::move(feature_names)),
        standardization_(std::move(standardization)) {
    const std::size_t d = names_.size();
    if (d == 0) throw InvalidArgument("dataset needs at least one feature column");
    if (demand_.empty()) throw InvalidArgument("dataset needs at least one row");
    if (features_.size() != demand_.size() * d) {
      throw InvalidArgument("feature row count does not match demand length");
    }
    if (standardization_) {
      if (standardization_->dim() != d || standardization_->scale.size() != d) {
        throw InvalidArgument("standardization dimension mismatch");
      }
      for (double s : standardization_->scale) {
        if (!(s > 0.0)) throw InvalidArgument("standardization scale must be positive");
      }
    }
  }

  /// Convenience constructor that names columns x1..xd.
  Dataset(std::vector<double> features, std::vector<double> demand, std::size_t d)
      : Dataset(std::move(features), std::move(demand), default_names(d)) {}

  std::size_t rows() const noexcept { return demand_.size(); }
  std::size_t cols() const noexcept { return names_.size(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(features_).subspan(i * cols(), cols());
  }
  double feature(std::size_t i, std::size_t j) const noexcept { return features_[i * cols() + j]; }
  double demand(std::size_t i) const noexcept { return demand_[i]; }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const double> demand() const noexcept { return demand_; }
  const std::vector<std::string>& feature_names() const noexcept { return names_; }
  const std::optional<Standardization>& standardization() const noexcept {
    return standardization_;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<double> f;
    std::vector<double> y;
    f.reserve(indices.size() * cols());
    y.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= rows()) throw InvalidArgument("subset index out of range");
      auto r = row(i);
      f.insert(f.end(), r.begin(), r.end());
      y.push_back(demand_[i]);
    }
    return Dataset(std::move(f), std::move(y), names_, standardization_);
  }

  Dataset with_demand(std::vector<double> demand) const {
    return Dataset(features_, std::move(demand), names_, standardization_);
  }

  static std::vector<std::string> default_names(std::size_t d) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
  }

 private:
  std::vector<double> features_;
  std::vector<double> demand_;
  std::vector<std::string> names_;
  std::optional<Standardization> standardization_;
};

/// Column means and sample standard deviations. Zero-variance columns get scale 1.
inline Standardization fit_standardization(const Dataset& data) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data.feature(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = data.feature(i, j) - mean;
      ss += c * c;
    }
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    s.mean[j] = mean;
    s.scale[j] = (sd > 0.0 && std::isfinite(sd)) ? sd : 1.0;
  }
  return s;
}

/// Standardized copy of `data`; the applied transform is recorded on the result.
inline Dataset standardize(const Dataset& data) {
  Standardization s = fit_standardization(data);
  std::vector<double> f = s.transform_rows(data.features());
  std::vector<double> y(data.demand().begin(), data.demand().end());
  return Dataset(std::move(f), std::move(y), data.feature_names(), std::move(s));
}

struct SplitSpec {
  double train_fraction = 0.75;
  double calib_fraction = 0.15;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train_fraction, calib_fraction, test_fraction}) {
      if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("split fractions must lie in (0,1)");
    }
    if (std::abs(train_fraction + calib_fraction + test_fraction - 1.0) > 1e-9) {
      throw InvalidArgument("split fractions must sum to 1");
    }
  }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calib;
  std::vector<std::size_t> test;
};

/// Seeded three-way split. Train and calibration sizes are round(n * fraction);
/// the test split receives the remainder. Each index list is ascending.
inline SplitIndices split(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n == 0) throw InsufficientData("train");
  const auto n_train = static_cast<std::size_t>(std::llround(n * spec.train_fraction));
  const auto n_calib = static_cast<std::size_t>(std::llround(n * spec.calib_fraction));
  if (n_train == 0) throw InsufficientData("train");
  if (n_calib == 0) throw InsufficientData("calib");
  if (n_train + n_calib >= n) throw InsufficientData("test");

  RngStream rng(spec.seed, 0);
  const auto perm = rng.permutation(n);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.calib.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_calib));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_calib), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.calib.begin(), out.calib.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline SplitIndices split(const Dataset& data, const SplitSpec& spec) {
  return split(data.rows(), spec);
}

}  // namespace cqpc
