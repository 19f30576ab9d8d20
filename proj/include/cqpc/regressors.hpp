#pragma once

// Quantile learners behind a single fit/predict contract.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/neighbors.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

/// A fitted conditional-quantile predictor. Immutable after fit.
class QuantileModel {
 public:
  virtual ~QuantileModel() = default;
  virtual double predict(std::span<const double> x) const = 0;
  virtual std::size_t dim() const noexcept = 0;
  virtual QuantileLevel level() const noexcept = 0;

  std::vector<double> predict_all(const Dataset& data) const {
    std::vector<double> out(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) out[i] = predict(data.row(i));
    return out;
  }

 protected:
  void check_dim(std::span<const double> x) const {
    if (x.size() != dim()) throw InvalidArgument("model input has wrong dimension");
  }
};

using ModelPtr = std::shared_ptr<const QuantileModel>;

/// Any quantile regression algorithm: data and level in, fitted model out.
using Learner = std::function<ModelPtr(const Dataset&, QuantileLevel)>;

// ---------------------------------------------------------------------------
// Linear quantile regression
// ---------------------------------------------------------------------------

struct LinearQRConfig {
  double ridge_lambda = 0.0;
  std::size_t max_iters = 6000;
  double initial_step = 0.5;  // in standardized parameter units
  double step_decay = 0.995;  // geometric decay per iteration
  double tol = 1e-6;          // stop once the step length falls below tol

  void validate() const {
    if (!(ridge_lambda >= 0.0)) throw InvalidArgument("ridge_lambda must be nonnegative");
    if (max_iters == 0) throw InvalidArgument("max_iters must be positive");
    if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
    if (!(initial_step > 0.0)) throw InvalidArgument("initial_step must be positive");
    if (!(step_decay > 0.0 && step_decay <= 1.0)) {
      throw InvalidArgument("step_decay must lie in (0,1]");
    }
  }
};

class LinearQuantileModel final : public QuantileModel {
 public:
  LinearQuantileModel(std::vector<double> coef, double intercept, QuantileLevel level,
                      bool converged, std::size_t iterations, double objective)
      : coef_(std::move(coef)),
        intercept_(intercept),
        level_(level),
        converged_(converged),
        iterations_(iterations),
        objective_(objective) {}

  double predict(std::span<const double> x) const override {
    check_dim(x);
    double s = intercept_;
    for (std::size_t j = 0; j < coef_.size(); ++j) s += coef_[j] * x[j];
    return s;
  }
  std::size_t dim() const noexcept override { return coef_.size(); }
  QuantileLevel level() const noexcept override { return level_; }

  const std::vector<double>& coefficients() const noexcept { return coef_; }
  double intercept() const noexcept { return intercept_; }
  bool converged() const noexcept { return converged_; }
  std::size_t iterations() const noexcept { return iterations_; }
  /// Training objective: mean pinball + ridge_lambda * |coef|^2.
  double objective() const noexcept { return objective_; }

 private:
  std::vector<double> coef_;
  double intercept_;
  QuantileLevel level_;
  bool converged_;
  std::size_t iterations_;
  double objective_;
};

/// Mean pinball loss of an affine predictor plus ridge penalty on the slopes.
inline double linear_qr_objective(const Dataset& data, QuantileLevel level,
                                  std::span<const double> coef, double intercept,
                                  double ridge_lambda = 0.0) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    double p = intercept;
    auto r = data.row(i);
    for (std::size_t j = 0; j < coef.size(); ++j) p += coef[j] * r[j];
    total += pinball(p, data.demand(i), level);
  }
  double pen = 0.0;
  for (double c : coef) pen += c * c;
  return total / static_cast<double>(data.rows()) + ridge_lambda * pen;
}

/// Full-batch normalized subgradient descent with geometrically decaying steps
/// on internally standardized data. Rows are put in a canonical order first,
/// so the result does not depend on the input row order.
inline LinearQuantileModel fit_linear_qr(const Dataset& train, QuantileLevel level,
                                         const LinearQRConfig& config = {}) {
  config.validate();
  const std::size_t n = train.rows();
  const std::size_t d = train.cols();
  const double a = level.value();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
    auto rp = train.row(p);
    auto rq = train.row(q);
    for (std::size_t j = 0; j < d; ++j) {
      if (rp[j] != rq[j]) return rp[j] < rq[j];
    }
    return train.demand(p) < train.demand(q);
  });

  const Standardization stdz = fit_standardization(train);
  std::vector<bool> active(d);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = train.feature(0, j);
    double hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, train.feature(i, j));
      hi = std::max(hi, train.feature(i, j));
    }
    active[j] = hi > lo;
  }

  const double y_center = empirical_quantile(train.demand(), level);
  double y_scale = 0.0;
  for (double y : train.demand()) y_scale += std::abs(y - y_center);
  y_scale /= static_cast<double>(n);
  if (!(y_scale > 0.0) || !std::isfinite(y_scale)) y_scale = 1.0;

  std::vector<double> z(n * d, 0.0);
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    for (std::size_t j = 0; j < d; ++j) {
      if (active[j]) z[k * d + j] = (train.feature(i, j) - stdz.mean[j]) / stdz.scale[j];
    }
    t[k] = (train.demand(i) - y_center) / y_scale;
  }

  // Ridge on original slopes c_j = y_scale * w_j / s_j, expressed per unit of y_scale.
  std::vector<double> ridge(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    ridge[j] = config.ridge_lambda * y_scale / (stdz.scale[j] * stdz.scale[j]);
  }

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  std::vector<double> best_w = w;
  double best_b = b;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> gw(d);
  double step = config.initial_step;
  bool converged = false;
  std::size_t iter = 0;

  for (; iter < config.max_iters; ++iter) {
    double loss = 0.0;
    double gb = 0.0;
    std::fill(gw.begin(), gw.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double* zk = &z[k * d];
      double p = b;
      for (std::size_t j = 0; j < d; ++j) p += w[j] * zk[j];
      const double r = t[k] - p;
      double g;
      if (r > 0.0) {
        loss += a * r;
        g = -a;
      } else if (r < 0.0) {
        loss -= (1.0 - a) * r;
        g = 1.0 - a;
      } else {
        g = 0.0;
      }
      if (g != 0.0) {
        gb += g;
        for (std::size_t j = 0; j < d; ++j) gw[j] += g * zk[j];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double obj = loss * inv_n;
    gb *= inv_n;
    double norm2 = gb * gb;
    for (std::size_t j = 0; j < d; ++j) {
      obj += ridge[j] * w[j] * w[j];
      gw[j] = gw[j] * inv_n + 2.0 * ridge[j] * w[j];
      norm2 += gw[j] * gw[j];
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
      best_b = b;
    }
    if (norm2 == 0.0 || step < config.tol) {
      converged = true;
      break;
    }
    const double scale = step / std::sqrt(norm2);
    b -= scale * gb;
    for (std::size_t j = 0; j < d; ++j) w[j] -= scale * gw[j];
    step *= config.step_decay;
  }

  std::vector<double> coef(d, 0.0);
  double intercept = y_center + y_scale * best_b;
  for (std::size_t j = 0; j < d; ++j) {
    if (!active[j]) continue;
    coef[j] = y_scale * best_w[j] / stdz.scale[j];
    intercept -= coef[j] * stdz.mean[j];
  }
  const double objective = linear_qr_objective(train, level, coef, intercept, config.ridge_lambda);
  return LinearQuantileModel(std::move(coef), intercept, level, converged, iter, objective);
}

// ---------------------------------------------------------------------------
// Gradient-boosted quantile trees
// ---------------------------------------------------------------------------

struct GBQConfig {
  std::size_t n_trees = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.05;
  std::size_t min_leaf = 10;
  double subsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_depth == 0) throw InvalidArgument("max_depth must be positive");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
      throw InvalidArgument("learning_rate must lie in (0,1]");
    }
    if (min_leaf == 0) throw InvalidArgument("min_leaf must be positive");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidArgument("subsample must lie in (0,1]");
  }
};

class BoostedQuantileModel final : public QuantileModel {
 public:
  struct Node {
    std::size_t feature = 0;
    double threshold = 0.0;
    std::int32_t left = -1;  // -1 marks a leaf
    std::int32_t right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  BoostedQuantileModel(double baseline, std::vector<Tree> trees, std::size_t dim,
                       QuantileLevel level)
      : baseline_(baseline), trees_(std::move(trees)), dim_(dim), level_(level) {}

  double predict(std::span<const double> x) const override {
    check_dim(x);
    double s = baseline_;
    for (const auto& tree : trees_) s += evaluate(tree, x);
    return s;
  }
  std::size_t dim() const noexcept override { return dim_; }
  QuantileLevel level() const noexcept override { return level_; }
  double baseline() const noexcept { return baseline_; }
  std::size_t tree_count() const noexcept { return trees_.size(); }

  static double evaluate(const Tree& tree, std::span<const double> x) noexcept {
    std::int32_t id = 0;
    while (tree[static_cast<std::size_t>(id)].left >= 0) {
      const Node& n = tree[static_cast<std::size_t>(id)];
      id = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return tree[static_cast<std::size_t>(id)].value;
  }

 private:
  double baseline_;
  std::vector<Tree> trees_;
  std::size_t dim_;
  QuantileLevel level_;
};

namespace detail {

struct TreeBuilder {
  const Dataset& data;
  std::span<const double> gradient;   // pseudo-residuals (negative subgradient)
  std::span<const double> residual;   // y - current prediction
  QuantileLevel level;
  const GBQConfig& config;
  BoostedQuantileModel::Tree tree;

  std::int32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(tree.size());
    tree.push_back({});

    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    double best_gain = 1e-12;
    bool found = false;

    if (depth < config.max_depth && rows.size() >= 2 * config.min_leaf) {
      double total = 0.0;
      for (std::size_t i : rows) total += gradient[i];
      const double n = static_cast<double>(rows.size());
      const double base = total * total / n;
      std::vector<std::size_t> sorted = rows;
      for (std::size_t j = 0; j < data.cols(); ++j) {
        std::sort(sorted.begin(), sorted.end(), [&](std::size_t p, std::size_t q) {
          const double vp = data.feature(p, j);
          const double vq = data.feature(q, j);
          return vp < vq || (vp == vq && p < q);
        });
        double left = 0.0;
        for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
          left += gradient[sorted[k]];
          const std::size_t nl = k + 1;
          const std::size_t nr = sorted.size() - nl;
          if (nl < config.min_leaf) continue;
          if (nr < config.min_leaf) break;
          const double v = data.feature(sorted[k], j);
          const double v_next = data.feature(sorted[k + 1], j);
          if (!(v < v_next)) continue;
          const double right = total - left;
          const double gain = left * left / static_cast<double>(nl) +
                              right * right / static_cast<double>(nr) - base;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = j;
            best_threshold = v + 0.5 * (v_next - v);
            if (!(best_threshold < v_next)) best_threshold = v;
            found = true;
          }
        }
      }
    }

    if (!found) {
      std::vector<double> r;
      r.reserve(rows.size());
      for (std::size_t i : rows) r.push_back(residual[i]);
      tree[static_cast<std::size_t>(id)].value =
          config.learning_rate * empirical_quantile(r, level);
      return id;
    }

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t i : rows) {
      (data.feature(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    const auto l = grow(std::move(left_rows), depth + 1);
    const auto r = grow(std::move(right_rows), depth + 1);
    auto& node = tree[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace detail

/// Quantile gradient boosting: trees fit to negative pinball subgradients by
/// variance reduction; each leaf takes the a-quantile of its residuals.
inline BoostedQuantileModel fit_gbq(const Dataset& train, QuantileLevel level,
                                    const GBQConfig& config = {}) {
  config.validate();
  const std::size_t n = train.rows();
  if (config.min_leaf > n) {
    throw DegenerateTree("degenerate tree: min_leaf " + std::to_string(config.min_leaf) +
                         " exceeds training rows " + std::to_string(n));
  }
  const double a = level.value();
  const double baseline = empirical_quantile(train.demand(), level);
  std::vector<double> current(n, baseline);
  std::vector<double> gradient(n);
  std::vector<double> residual(n);
  std::vector<BoostedQuantileModel::Tree> trees;
  trees.reserve(config.n_trees);
  RngStream rng(config.seed, 0x6271);

  const auto sample_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(n))));

  for (std::size_t t = 0; t < config.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = train.demand(i) - current[i];
      gradient[i] = residual[i] > 0.0 ? a : a - 1.0;
    }
    std::vector<std::size_t> rows;
    if (sample_size < n) {
      rows = rng.sample_without_replacement(n, sample_size);
    } else {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    detail::TreeBuilder builder{train, gradient, residual, level, config, {}};
    builder.grow(std::move(rows), 0);
    for (std::size_t i = 0; i < n; ++i) {
      current[i] += BoostedQuantileModel::evaluate(builder.tree, train.row(i));
    }
    trees.push_back(std::move(builder.tree));
  }
  return BoostedQuantileModel(baseline, std::move(trees), train.cols(), level);
}

// ---------------------------------------------------------------------------
// k-nearest-neighbor quantile
// ---------------------------------------------------------------------------

struct KNNQConfig {
  std::size_t k = 50;
  bool standardize = true;
};

class KnnQuantileModel final : public QuantileModel {
 public:
  KnnQuantileModel(const Dataset& train, QuantileLevel level, const KNNQConfig& config)
      : scaling_(config.standardize ? fit_standardization(train)
                                    : Standardization::identity(train.cols())),
        index_(scaling_.transform_rows(train.features()), train.cols()),
        demand_(train.demand().begin(), train.demand().end()),
        k_(config.k),
        level_(level) {
    if (config.k == 0) throw InvalidArgument("knn: k must be positive");
    if (config.k > train.rows()) {
      throw InvalidArgument("knn: k=" + std::to_string(config.k) + " exceeds training rows " +
                            std::to_string(train.rows()));
    }
  }

  double predict(std::span<const double> x) const override {
    check_dim(x);
    const auto q = scaling_.transform(x);
    const auto nn = index_.k_nearest(q, k_);
    std::vector<double> ys;
    ys.reserve(nn.size());
    for (std::size_t i : nn) ys.push_back(demand_[i]);
    return empirical_quantile(ys, level_);
  }
  std::size_t dim() const noexcept override { return index_.dim(); }
  QuantileLevel level() const noexcept override { return level_; }

 private:
  Standardization scaling_;
  NeighborIndex index_;
  std::vector<double> demand_;
  std::size_t k_;
  QuantileLevel level_;
};

inline KnnQuantileModel fit_knnq(const Dataset& train, QuantileLevel level,
                                 const KNNQConfig& config = {}) {
  return KnnQuantileModel(train, level, config);
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

using LearnerConfig = std::variant<LinearQRConfig, GBQConfig, KNNQConfig>;

inline std::string learner_kind(const LearnerConfig& config) {
  struct {
    std::string operator()(const LinearQRConfig&) const { return "linear_qr"; }
    std::string operator()(const GBQConfig&) const { return "gbq"; }
    std::string operator()(const KNNQConfig&) const { return "knnq"; }
  } visitor;
  return std::visit(visitor, config);
}

inline Learner make_learner(LearnerConfig config) {
  return [config = std::move(config)](const Dataset& data, QuantileLevel level) -> ModelPtr {
    struct {
      const Dataset& data;
      QuantileLevel level;
      ModelPtr operator()(const LinearQRConfig& c) const {
        return std::make_shared<LinearQuantileModel>(fit_linear_qr(data, level, c));
      }
      ModelPtr operator()(const GBQConfig& c) const {
        return std::make_shared<BoostedQuantileModel>(fit_gbq(data, level, c));
      }
      ModelPtr operator()(const KNNQConfig& c) const {
        return std::make_shared<KnnQuantileModel>(data, level, c);
      }
    } visitor{data, level};
    return std::visit(visitor, config);
  };
}

/// Second boosting preset standing in for a histogram-style booster: more,
/// shallower-learning trees with row subsampling.
inline GBQConfig gbq_light_preset(std::uint64_t seed = 0) {
  GBQConfig c;
  c.n_trees = 300;
  c.max_depth = 4;
  c.learning_rate = 0.05;
  c.min_leaf = 20;
  c.subsample = 0.8;
  c.seed = seed;
  return c;
}

}  // namespace cqpc
