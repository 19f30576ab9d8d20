#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cqpc/datagen.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/regressors.hpp"
#include "cqpc/rng.hpp"

using namespace cqpc;

namespace {

/// Solves the square system a x = b in place; false when singular.
bool solve(std::vector<double> a, std::vector<double> b, std::size_t m, std::vector<double>& x) {
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < m; ++r) {
      if (std::abs(a[r * m + c]) > std::abs(a[p * m + c])) p = r;
    }
    if (std::abs(a[p * m + c]) < 1e-12) return false;
    if (p != c) {
      for (std::size_t k = 0; k < m; ++k) std::swap(a[p * m + k], a[c * m + k]);
      std::swap(b[p], b[c]);
    }
    for (std::size_t r = c + 1; r < m; ++r) {
      const double f = a[r * m + c] / a[c * m + c];
      for (std::size_t k = c; k < m; ++k) a[r * m + k] -= f * a[c * m + k];
      b[r] -= f * b[c];
    }
  }
  x.assign(m, 0.0);
  for (std::size_t r = m; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < m; ++k) s -= a[r * m + k] * x[k];
    x[r] = s / a[r * m + r];
  }
  return true;
}

/// Exact unregularized linear QR optimum: some optimal affine fit interpolates
/// d + 1 of the points, so enumerate every such subset.
double vertex_oracle(const Dataset& data, QuantileLevel level) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  const std::size_t m = d + 1;
  std::vector<std::size_t> pick(m);
  std::iota(pick.begin(), pick.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<double> a(m * m);
    std::vector<double> b(m);
    for (std::size_t r = 0; r < m; ++r) {
      a[r * m] = 1.0;
      for (std::size_t j = 0; j < d; ++j) a[r * m + 1 + j] = data.row(pick[r])[j];
      b[r] = data.demand(pick[r]);
    }
    std::vector<double> sol;
    if (solve(a, b, m, sol)) {
      std::vector<double> coef(sol.begin() + 1, sol.end());
      best = std::min(best, linear_qr_objective(data, level, coef, sol[0]));
    }
    std::size_t i = m;
    while (i > 0 && pick[i - 1] == n - m + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t k = i; k < m; ++k) pick[k] = pick[k - 1] + 1;
  }
  return best;
}

Dataset random_problem(RngStream& r, std::size_t n, std::size_t d) {
  std::vector<double> x(n * d);
  std::vector<double> y(n);
  for (auto& v : x) v = r.uniform(-2, 2);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (std::size_t j = 0; j < d; ++j) s += (j + 1.0) * x[i * d + j];
    y[i] = s + 2.0 * r.normal();
  }
  return Dataset(x, y, d);
}

}  // namespace

TEST(LinearQR, InterceptOnlyMedian) {
  Dataset d({7, 7, 7, 7, 7}, {1, 2, 3, 4, 5}, 1);
  auto m = fit_linear_qr(d, QuantileLevel(0.5));
  EXPECT_NEAR(m.predict(std::vector<double>{7}), 3.0, 1e-3);
}

TEST(LinearQR, NoiselessSlope) {
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i / 10.0 - 2.0);
    y.push_back(2.0 * x.back());
  }
  Dataset d(x, y, 1);
  auto m = fit_linear_qr(d, QuantileLevel(0.7));
  EXPECT_NEAR(m.coefficients()[0], 2.0, 1e-2);
  EXPECT_LT(m.objective(), 1e-3);
}

TEST(LinearQR, ConstantTarget) {
  RngStream r(2, 0);
  std::vector<double> x(60);
  for (auto& v : x) v = r.uniform();
  Dataset d(x, std::vector<double>(30, 7.0), 2);
  auto m = fit_linear_qr(d, QuantileLevel(0.3));
  for (std::size_t i = 0; i < d.rows(); ++i) EXPECT_NEAR(m.predict(d.row(i)), 7.0, 1e-6);
  EXPECT_NEAR(m.objective(), 0.0, 1e-6);
}

TEST(LinearQR, MatchesVertexOracle) {
  RngStream r(77, 0);
  for (int c = 0; c < 20; ++c) {
    const std::size_t d = 1 + r.below(3);
    const std::size_t n = 10 + r.below(31);
    const auto data = random_problem(r, n, d);
    const QuantileLevel lvl(r.uniform(0.1, 0.9));
    const auto m = fit_linear_qr(data, lvl);
    const double oracle = vertex_oracle(data, lvl);
    const double fitted = linear_qr_objective(data, lvl, m.coefficients(), m.intercept());
    EXPECT_LE(fitted, oracle + 1e-3) << "case " << c << " n=" << n << " d=" << d;
    EXPECT_GE(fitted, oracle - 1e-9);
  }
}

TEST(LinearQR, PermutationInvariant) {
  RngStream r(8, 0);
  const auto data = random_problem(r, 200, 3);
  auto perm = r.permutation(200);
  const auto shuffled = data.subset(perm);
  const auto a = fit_linear_qr(data, QuantileLevel(0.6));
  const auto b = fit_linear_qr(shuffled, QuantileLevel(0.6));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.coefficients()[j], b.coefficients()[j], 1e-8);
  EXPECT_NEAR(a.intercept(), b.intercept(), 1e-8);
}

TEST(LinearQR, RidgeShrinks) {
  RngStream r(9, 0);
  const auto data = random_problem(r, 300, 2);
  LinearQRConfig heavy;
  heavy.ridge_lambda = 10.0;
  const auto free = fit_linear_qr(data, QuantileLevel(0.5));
  const auto shrunk = fit_linear_qr(data, QuantileLevel(0.5), heavy);
  auto norm = [](const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  };
  EXPECT_LT(norm(shrunk.coefficients()), 0.5 * norm(free.coefficients()));
}

TEST(LinearQR, ConfigValidation) {
  LinearQRConfig c;
  c.tol = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(GBQ, ZeroTreesIsEmpiricalQuantile) {
  RngStream r(4, 0);
  const auto data = random_problem(r, 101, 2);
  GBQConfig c;
  c.n_trees = 0;
  const QuantileLevel lvl(0.3);
  const auto m = fit_gbq(data, lvl, c);
  std::vector<double> ys(data.demand().begin(), data.demand().end());
  std::sort(ys.begin(), ys.end());
  const double expected = ys[static_cast<std::size_t>(std::ceil(0.3 * 101)) - 1];
  EXPECT_DOUBLE_EQ(m.predict(data.row(5)), expected);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{100, -100}), expected);
}

TEST(GBQ, SingleTreeFitsStep) {
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    x.push_back(-1.0 + 2.0 * (i + 0.5) / 100.0);
    y.push_back(x.back() > 0 ? 1.0 : 0.0);
  }
  Dataset d(x, y, 1);
  GBQConfig c;
  c.n_trees = 1;
  c.max_depth = 2;
  c.learning_rate = 1.0;
  c.min_leaf = 5;
  const auto m = fit_gbq(d, QuantileLevel(0.5), c);
  EXPECT_LT(empirical_pinball(m.predict_all(d), d.demand(), QuantileLevel(0.5)), 1e-6);
}

TEST(GBQ, DeterministicUnderSeed) {
  RngStream r(5, 0);
  const auto data = random_problem(r, 300, 3);
  GBQConfig c;
  c.n_trees = 40;
  c.subsample = 0.7;
  c.seed = 123;
  const auto a = fit_gbq(data, QuantileLevel(0.4), c).predict_all(data);
  const auto b = fit_gbq(data, QuantileLevel(0.4), c).predict_all(data);
  EXPECT_EQ(a, b);
}

TEST(GBQ, DegenerateTree) {
  Dataset d({1, 2, 3}, {1, 2, 3}, 1);
  GBQConfig c;
  c.min_leaf = 10;
  EXPECT_THROW(fit_gbq(d, QuantileLevel(0.5), c), DegenerateTree);
}

TEST(GBQ, ReducesTrainingLoss) {
  GeneratorSpec g;
  g.family = Family::ma;
  g.seed = 3;
  const auto data = generate(g, 800);
  GBQConfig zero;
  zero.n_trees = 0;
  const QuantileLevel lvl(0.5);
  const double base = empirical_pinball(fit_gbq(data, lvl, zero).predict_all(data), data.demand(), lvl);
  const double boosted = empirical_pinball(fit_gbq(data, lvl).predict_all(data), data.demand(), lvl);
  EXPECT_LT(boosted, base);
}

TEST(KNNQ, FullPoolingIsGlobalQuantile) {
  RngStream r(6, 0);
  const auto data = random_problem(r, 40, 2);
  const QuantileLevel lvl(0.75);
  const auto m = fit_knnq(data, lvl, KNNQConfig{40, true});
  const double q = empirical_quantile(data.demand(), lvl);
  EXPECT_DOUBLE_EQ(m.predict(data.row(0)), q);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{9, 9}), q);
}

TEST(KNNQ, SingleNeighbor) {
  Dataset d({0, 10, 20}, {5, 6, 7}, 1);
  const auto m = fit_knnq(d, QuantileLevel(0.5), KNNQConfig{1, false});
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{11}), 6.0);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{19}), 7.0);
}

TEST(KNNQ, TieGoesToLowerRow) {
  Dataset d({0, 2}, {100, 200}, 1);
  const auto m = fit_knnq(d, QuantileLevel(0.5), KNNQConfig{1, false});
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{1}), 100.0);
}

TEST(KNNQ, KTooLarge) {
  Dataset d({0, 2}, {1, 2}, 1);
  EXPECT_THROW(fit_knnq(d, QuantileLevel(0.5), KNNQConfig{3, true}), InvalidArgument);
}

TEST(Learners, MonotoneInLevel) {
  RngStream r(7, 0);
  const auto data = random_problem(r, 200, 2);
  GBQConfig base;
  base.n_trees = 0;
  double prev_g = -1e300;
  double prev_k = -1e300;
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double g = fit_gbq(data, QuantileLevel(a), base).predict(data.row(3));
    const double k = fit_knnq(data, QuantileLevel(a), KNNQConfig{25, true}).predict(data.row(3));
    EXPECT_GE(g, prev_g);
    EXPECT_GE(k, prev_k);
    prev_g = g;
    prev_k = k;
  }
}

TEST(Learners, FinitePredictionsAndDimensionCheck) {
  GeneratorSpec g;
  g.family = Family::ml;
  g.seed = 1;
  const auto data = generate(g, 300);
  for (const LearnerConfig& c :
       {LearnerConfig{LinearQRConfig{}}, LearnerConfig{GBQConfig{}}, LearnerConfig{gbq_light_preset(2)},
        LearnerConfig{KNNQConfig{}}}) {
    const auto model = make_learner(c)(data, QuantileLevel(0.25));
    for (double v : model->predict_all(data)) ASSERT_TRUE(std::isfinite(v)) << learner_kind(c);
    EXPECT_THROW(model->predict(std::vector<double>{1, 2}), InvalidArgument);
  }
}
