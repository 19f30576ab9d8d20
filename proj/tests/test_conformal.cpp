#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>

#include "cqpc/conformal.hpp"
#include "cqpc/datagen.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/normal.hpp"

using namespace cqpc;

namespace {

/// f(x) = slope |x_1| + offset; the misspecified base of the piecewise example.
class AbsModel final : public QuantileModel {
 public:
  AbsModel(double slope, double offset, QuantileLevel level)
      : slope_(slope), offset_(offset), level_(level) {}
  double predict(std::span<const double> x) const override {
    check_dim(x);
    return slope_ * std::abs(x[0]) + offset_;
  }
  std::size_t dim() const noexcept override { return 1; }
  QuantileLevel level() const noexcept override { return level_; }

 private:
  double slope_;
  double offset_;
  QuantileLevel level_;
};

/// Wraps another model and adds a constant.
class Shifted final : public QuantileModel {
 public:
  Shifted(ModelPtr inner, double b) : inner_(std::move(inner)), b_(b) {}
  double predict(std::span<const double> x) const override { return inner_->predict(x) + b_; }
  std::size_t dim() const noexcept override { return inner_->dim(); }
  QuantileLevel level() const noexcept override { return inner_->level(); }

 private:
  ModelPtr inner_;
  double b_;
};

ConformalQuantile oracle_quantile(std::vector<double> s, double a) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  const long long k = static_cast<long long>(std::ceil(a * (n + 1) - 1e-9 * std::max(1.0, a * (n + 1))));
  if (k > static_cast<long long>(s.size())) return {s.back(), true};
  if (k < 1) return {s.front(), true};
  return {s[static_cast<std::size_t>(k - 1)], false};
}

Dataset example3(std::uint64_t seed, std::size_t n) {
  GeneratorSpec g;
  g.family = Family::example3;
  g.seed = seed;
  return generate(g, n);
}

}  // namespace

TEST(ConformalQuantile, HandCases) {
  auto q = conformal_quantile(std::vector<double>{5, -1, 2, -3}, QuantileLevel(0.5));
  EXPECT_DOUBLE_EQ(q.value, 2.0);
  EXPECT_FALSE(q.clamped);
  q = conformal_quantile(std::vector<double>{0.5}, QuantileLevel(0.5));
  EXPECT_DOUBLE_EQ(q.value, 0.5);
  EXPECT_FALSE(q.clamped);
  q = conformal_quantile(std::vector<double>{1, 2, 3, 4}, QuantileLevel(0.99));
  EXPECT_DOUBLE_EQ(q.value, 4.0);
  EXPECT_TRUE(q.clamped);
  EXPECT_THROW(conformal_quantile(std::vector<double>{}, QuantileLevel(0.5)), InvalidArgument);
}

TEST(ConformalQuantile, MatchesSortOracle) {
  RngStream r(31, 0);
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> s(1 + r.below(40));
    for (auto& v : s) v = std::round(r.normal() * 3);
    const double a = r.below(4) == 0 ? (1.0 + r.below(9)) / 10.0 : r.uniform(0.01, 0.99);
    const auto got = conformal_quantile(s, QuantileLevel(a));
    const auto want = oracle_quantile(s, a);
    ASSERT_EQ(got.value, want.value);
    ASSERT_EQ(got.clamped, want.clamped);
  }
}

TEST(ConformalQuantile, MonotoneInLevel) {
  RngStream r(32, 0);
  std::vector<double> s(25);
  for (auto& v : s) v = r.normal();
  double prev = -1e300;
  for (double a = 0.01; a < 1.0; a += 0.01) {
    const double v = conformal_quantile(s, QuantileLevel(a)).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(CoverageBounds, Values) {
  auto [lo, hi] = coverage_bounds(99, QuantileLevel(0.5));
  EXPECT_DOUBLE_EQ(lo, 0.5);
  EXPECT_DOUBLE_EQ(hi, 0.51);
  std::tie(lo, hi) = coverage_bounds(1, QuantileLevel(0.25));
  EXPECT_DOUBLE_EQ(lo, 0.25);
  EXPECT_DOUBLE_EQ(hi, 0.75);
  std::tie(lo, hi) = coverage_bounds(999999, QuantileLevel(0.25));
  EXPECT_LT(hi - lo, 1e-5);
}

TEST(ReferenceInterval, HalfWidth) {
  auto [lo, hi] = reference_interval(10.0, std::vector<double>{4, 1, 3, 2}, QuantileLevel(0.5));
  EXPECT_DOUBLE_EQ(lo, 7.0);
  EXPECT_DOUBLE_EQ(hi, 13.0);
  std::tie(lo, hi) = reference_interval(0.0, std::vector<double>{1, 2}, QuantileLevel(0.05));
  EXPECT_DOUBLE_EQ(hi, 2.0);
}

TEST(ReferenceInterval, MonteCarloCoverage) {
  GeneratorSpec g;
  g.family = Family::linear;
  const QuantileLevel a(0.2);
  int covered = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    g.seed = 1000 + t;
    const auto data = generate(g, 21);
    std::vector<double> res;
    for (std::size_t i = 0; i < 20; ++i) res.push_back(std::abs(data.demand(i) - g.mean(data.row(i))));
    auto [lo, hi] = reference_interval(g.mean(data.row(20)), res, a);
    covered += data.demand(20) >= lo && data.demand(20) <= hi;
  }
  const double p = static_cast<double>(covered) / trials;
  EXPECT_GE(p, 0.8 - 3 * std::sqrt(0.16 / trials));
}

TEST(Cqpc, ConstantBiasCancels) {
  const auto train = example3(1, 400);
  const auto calib = example3(2, 150);
  const auto test = example3(3, 50);
  const QuantileLevel a(0.4);
  auto base = std::make_shared<LinearQuantileModel>(fit_linear_qr(train, a));
  for (double b : {-10.0, 3.7}) {
    for (auto pooling : {PoolingSpec::all(), PoolingSpec::count(20), PoolingSpec::radius(1.0)}) {
      CalibratedModel plain(base, calib, fit_standardization(train), a, pooling);
      CalibratedModel biased(std::make_shared<Shifted>(base, b), calib, fit_standardization(train), a,
                             pooling);
      for (std::size_t i = 0; i < test.rows(); ++i) {
        EXPECT_NEAR(plain.predict(test.row(i)), biased.predict(test.row(i)), 1e-12);
      }
    }
  }
}

TEST(Cqpc, SingleCalibrationPoint) {
  const auto train = example3(4, 100);
  Dataset calib({1.5}, {9.0}, 1);
  auto model = cqpc_fit(train, calib, QuantileLevel(0.3), make_learner(LinearQRConfig{}));
  const double s = 9.0 - model.base().predict(std::vector<double>{1.5});
  EXPECT_DOUBLE_EQ(model.global_correction().value, s);
}

TEST(Cqpc, OracleBaseHasSmallCorrection) {
  GeneratorSpec g;
  g.family = Family::linear;
  g.d = 1;
  g.noise = NoiseKind::uniform;
  g.seed = 5;
  const QuantileLevel a(0.7);
  const auto calib = generate(g, 5000);
  // oracle base: the true conditional quantile
  class Truth final : public QuantileModel {
   public:
    Truth(GeneratorSpec s, QuantileLevel a) : s_(std::move(s)), a_(a) {}
    double predict(std::span<const double> x) const override { return true_quantile(s_, x, a_); }
    std::size_t dim() const noexcept override { return 1; }
    QuantileLevel level() const noexcept override { return a_; }

   private:
    GeneratorSpec s_;
    QuantileLevel a_;
  };
  CalibratedModel m(std::make_shared<Truth>(g, a), calib, Standardization::identity(1), a);
  // score spacing near the quantile is about 2 / (n * density) with density 1/2
  EXPECT_LT(std::abs(m.global_correction().value), 0.01);
}

TEST(Cqpc, GlobalPoolingIsConstantShift) {
  const auto train = example3(6, 300);
  const auto calib = example3(7, 100);
  const auto test = example3(8, 30);
  auto model = cqpc_fit(train, calib, QuantileLevel(0.5), make_learner(LinearQRConfig{}));
  const double shift = model.predict(test.row(0)) - model.base().predict(test.row(0));
  for (std::size_t i = 1; i < test.rows(); ++i) {
    EXPECT_NEAR(model.predict(test.row(i)) - model.base().predict(test.row(i)), shift, 1e-12);
  }
  const auto full = model.with_pooling(PoolingSpec::count(calib.rows()));
  for (std::size_t i = 0; i < test.rows(); ++i) {
    EXPECT_DOUBLE_EQ(full.predict(test.row(i)), model.predict(test.row(i)));
  }
}

TEST(Cqpc, PoolingErrors) {
  const auto train = example3(9, 100);
  const auto calib = example3(10, 30);
  auto model = cqpc_fit(train, calib, QuantileLevel(0.5), make_learner(LinearQRConfig{}));
  EXPECT_THROW(model.with_pooling(PoolingSpec::count(31)).predict(calib.row(0)), DataError);
  try {
    model.with_pooling(PoolingSpec::radius(1e-3)).predict(std::vector<double>{100.0});
    FAIL() << "expected EmptyPoolingRegion";
  } catch (const EmptyPoolingRegion& e) {
    EXPECT_NE(std::string(e.what()).find("0.001"), std::string::npos) << e.what();
  }
}

TEST(Cqpc, LocalPoolingBeatsGlobalOnPiecewiseModel) {
  const QuantileLevel a(0.5);
  auto base = std::make_shared<AbsModel>(3.0, 2.0, a);
  double sum_local = 0.0;
  double sum_all = 0.0;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto calib = example3(100 + seed, 300);
    const auto test = example3(200 + seed, 200);
    CalibratedModel all(base, calib, Standardization::identity(1), a);
    const auto local = all.with_pooling(PoolingSpec::count(15));
    const double la = empirical_pinball(all.predict_all(test), test.demand(), a);
    const double ll = empirical_pinball(local.predict_all(test), test.demand(), a);
    sum_all += la;
    sum_local += ll;
    wins += ll < la;
  }
  EXPECT_LT(sum_local, sum_all);
  EXPECT_GE(wins, 18);
}

TEST(Cqpc, TranslationEquivariantForLinearQR) {
  const auto train = example3(11, 400);
  const auto calib = example3(12, 120);
  const auto test = example3(13, 40);
  const double c = 17.25;
  auto shift = [&](const Dataset& d) {
    std::vector<double> y(d.demand().begin(), d.demand().end());
    for (auto& v : y) v += c;
    return d.with_demand(std::move(y));
  };
  const auto learner = make_learner(LinearQRConfig{});
  for (auto pooling : {PoolingSpec::all(), PoolingSpec::count(25)}) {
    auto m = cqpc_fit(train, calib, QuantileLevel(0.6), learner, pooling);
    auto m_cal = cqpc_fit(train, shift(calib), QuantileLevel(0.6), learner, pooling);
    auto m_both = cqpc_fit(shift(train), shift(calib), QuantileLevel(0.6), learner, pooling);
    for (std::size_t i = 0; i < test.rows(); ++i) {
      EXPECT_NEAR(m_cal.predict(test.row(i)), m.predict(test.row(i)) + c, 1e-12);
      EXPECT_NEAR(m_both.predict(test.row(i)), m.predict(test.row(i)) + c, 1e-6);
    }
  }
}

TEST(Cqpc, UnconditionalCoverageSmall) {
  GeneratorSpec g;
  g.family = Family::linear;
  const QuantileLevel a(0.3);
  const std::size_t n2 = 19;
  int hits = 0;
  const int trials = 1500;
  for (int t = 0; t < trials; ++t) {
    g.seed = 50000 + t;
    const auto data = generate(g, 60 + n2 + 1);
    std::vector<std::size_t> tr(60);
    std::iota(tr.begin(), tr.end(), 0);
    std::vector<std::size_t> ca(n2);
    std::iota(ca.begin(), ca.end(), 60);
    auto m = cqpc_fit(data.subset(tr), data.subset(ca), a, make_learner(LinearQRConfig{}));
    const auto x = data.row(60 + n2);
    hits += data.demand(60 + n2) <= m.predict(x);
  }
  const double p = static_cast<double>(hits) / trials;
  const double se = std::sqrt(0.3 * 0.7 / trials);
  EXPECT_GE(p, 0.3 - 3 * se);
  EXPECT_LE(p, 0.3 + 1.0 / (n2 + 1) + 3 * se);
}

TEST(Gtlc, SingleCandidate) {
  const auto train = example3(14, 200);
  const auto calib = example3(15, 100);
  auto r = gtlc_select(train, calib, QuantileLevel(0.5), make_learner(LinearQRConfig{}),
                       {PoolingSpec::count(10)}, 5, 1);
  EXPECT_TRUE(r.best == PoolingSpec::count(10));
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_TRUE(r.table[0].feasible);
  EXPECT_DOUBLE_EQ(r.best_loss, r.table[0].mean_loss);
}

TEST(Gtlc, PrefersLocalOnPiecewiseModel) {
  const auto train = example3(16, 1000);
  const auto calib = example3(17, 300);
  const std::size_t folds = 5;
  auto r = gtlc_select(train, calib, QuantileLevel(0.5), make_learner(LinearQRConfig{}),
                       {PoolingSpec::count(calib.rows() * (folds - 1) / folds), PoolingSpec::count(20)},
                       folds, 3);
  EXPECT_TRUE(r.best == PoolingSpec::count(20));
}

TEST(Gtlc, DeterministicTrainsOnceAndMarksInfeasible) {
  const auto train = example3(18, 300);
  const auto calib = example3(19, 50);
  std::atomic<int> fits{0};
  const auto inner = make_learner(LinearQRConfig{});
  Learner counting = [&](const Dataset& d, QuantileLevel a) {
    ++fits;
    return inner(d, a);
  };
  const std::vector<PoolingSpec> cands{PoolingSpec::all(), PoolingSpec::count(5),
                                       PoolingSpec::count(45), PoolingSpec::radius(0.5)};
  auto a = gtlc_select(train, calib, QuantileLevel(0.5), counting, cands, 5, 9);
  EXPECT_EQ(fits.load(), 1);
  auto b = gtlc_select(train, calib, QuantileLevel(0.5), counting, cands, 5, 9);
  ASSERT_EQ(a.table.size(), b.table.size());
  for (std::size_t i = 0; i < a.table.size(); ++i) {
    EXPECT_EQ(a.table[i].feasible, b.table[i].feasible);
    if (a.table[i].feasible) {
      EXPECT_EQ(a.table[i].mean_loss, b.table[i].mean_loss);
    }
  }
  EXPECT_FALSE(a.table[2].feasible);  // 45 > 40 scores per fold
  EXPECT_THROW(gtlc_select(train, calib, QuantileLevel(0.5), counting, {PoolingSpec::count(45)}, 5, 9),
               Error);
}

TEST(Gtlc, TiesPreferSmallerExtent) {
  // all scores equal: every candidate has the same loss
  Dataset train({0, 1, 2, 3}, {0, 0, 0, 0}, 1);
  std::vector<double> x(40);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / 10.0;
  Dataset calib(x, std::vector<double>(40, 0.0), 1);
  auto r = gtlc_select(train, calib, QuantileLevel(0.5), make_learner(LinearQRConfig{}),
                       {PoolingSpec::all(), PoolingSpec::count(30), PoolingSpec::count(8)}, 4, 0);
  EXPECT_TRUE(r.best == PoolingSpec::count(8));
}

TEST(FoldAssignment, BalancedAndSeeded) {
  const auto a = fold_assignment(103, 5, 1);
  const auto b = fold_assignment(103, 5, 1);
  EXPECT_EQ(a, b);
  std::vector<int> counts(5);
  for (auto f : a) ++counts[f];
  for (int c : counts) EXPECT_TRUE(c == 20 || c == 21);
  EXPECT_THROW(fold_assignment(10, 1, 0), InvalidArgument);
}
