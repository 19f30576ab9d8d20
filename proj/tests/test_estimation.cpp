#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cqpc/datagen.hpp"
#include "cqpc/estimation.hpp"
#include "cqpc/isotonic.hpp"

using namespace cqpc;

namespace {

Dataset uniform_linear(std::size_t n, double g_lo, double g_hi, std::uint64_t seed) {
  GeneratorSpec g;
  g.family = Family::linear;
  g.d = 1;
  g.noise = NoiseKind::uniform;
  g.gamma_low = g_lo;
  g.gamma_high = g_hi;
  g.seed = seed;
  return generate(g, n);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(Isotonic, PoolsViolators) {
  const auto r = isotonic_increasing(std::vector<double>{1, 3, 2, 4, 0});
  EXPECT_EQ(r.size(), 5u);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LE(r[i - 1], r[i]);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_DOUBLE_EQ(r[i], 2.25);
  const auto w = isotonic_increasing(std::vector<double>{3, 1}, std::vector<double>{3, 1});
  EXPECT_DOUBLE_EQ(w[0], 2.5);
}

TEST(MarginTable, FromRawEnforcesInvariants) {
  const auto t = MarginTable::from_raw({0.0, 0.1, 0.2, 0.3}, {0.05, 0.3, 0.2, 1.4}, {0.01, 0.4, 0.1, 0.2});
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_LE(t.h_upper[i - 1], t.h_upper[i]);
    EXPECT_LE(t.h_lower[i - 1], t.h_lower[i]);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE(t.h_lower[i], t.h_upper[i]);
    EXPECT_LE(t.h_upper[i], 1.0);
  }
  EXPECT_DOUBLE_EQ(t.h_upper[0], 0.0);
  EXPECT_DOUBLE_EQ(t.spec().upper(0.0), 0.0);
  EXPECT_THROW(MarginTable::from_raw({0.2, 0.1}, {0, 0}, {0, 0}), InvalidArgument);
}

TEST(EstimateMargins, ZeroGrid) {
  const auto data = uniform_linear(100, 1, 1, 1);
  const auto t = estimate_margins(data, QuantileLevel(0.5), {0.0}, make_learner(LinearQRConfig{}));
  EXPECT_EQ(t.h_upper, std::vector<double>{0.0});
  EXPECT_EQ(t.h_lower, std::vector<double>{0.0});
}

TEST(EstimateMargins, UniformRecoversLinearMargin) {
  const auto data = uniform_linear(5000, 1, 1, 2);
  const std::vector<double> grid{0.05, 0.1, 0.2};
  const auto t = estimate_margins(data, QuantileLevel(0.5), grid, make_learner(LinearQRConfig{}));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(t.h_upper[i], grid[i] / 2, 0.05);
    EXPECT_NEAR(t.h_lower[i], grid[i] / 2, 0.05);
  }
}

TEST(EstimateMargins, Errors) {
  const auto data = uniform_linear(200, 1, 1, 3);
  MarginOptions escape;
  escape.level_offsets = {0.1, 0.6};
  EXPECT_THROW(estimate_margins(data, QuantileLevel(0.5), {0.1}, make_learner(LinearQRConfig{}), escape),
               InvalidArgument);
  const auto tiny = uniform_linear(10, 1, 1, 3);
  EXPECT_THROW(estimate_margins(tiny, QuantileLevel(0.5), {0.1}, make_learner(LinearQRConfig{})),
               InsufficientData);
}

TEST(KappaFit, RecoversPlantedParameters) {
  RngStream r(51, 0);
  std::vector<KappaSample> s;
  for (double n1 : {100.0, 200.0, 400.0, 800.0}) {
    for (int i = 0; i < 500; ++i) {
      const double xi = r.uniform(0.01, 3.0);
      const double k = 2.0 * std::sqrt(xi / n1) * (1.0 + 0.01 * r.normal());
      s.push_back({n1, xi, k});
    }
  }
  s.push_back({100.0, 0.0, 0.3});  // zero distance: kept out of the fit
  const auto fit = fit_kappa_parametric(s);
  EXPECT_NEAR(fit.C, 2.0, 0.1);
  EXPECT_NEAR(fit.nu, 1.0, 0.1);
  EXPECT_EQ(fit.used, s.size() - 1);
}

TEST(EstimateKappa, DuplicatedContextsRetained) {
  std::vector<double> x;
  std::vector<double> y;
  RngStream r(52, 0);
  for (int i = 0; i < 200; ++i) {
    x.push_back(static_cast<double>(r.below(4)));
    y.push_back(x.back() + r.normal());
  }
  Dataset data(x, y, 1);
  KappaOptions o;
  o.seed = 1;
  const auto t = estimate_kappa(data, QuantileLevel(0.5), {0.5, 1.0}, make_learner(LinearQRConfig{}), o);
  const auto zeros = std::count_if(t.samples.begin(), t.samples.end(),
                                   [](const KappaSample& s) { return s.xi == 0.0; });
  EXPECT_GT(zeros, 0);
  for (const auto& s : t.samples) EXPECT_GE(s.kappa, 0.0);
  EXPECT_TRUE(std::isfinite(t.eta));
  EXPECT_GT(t.eta, 0.0);
  EXPECT_GE(t.C, 0.0);
  EXPECT_GE(t.nu, 0.0);
}

TEST(EstimateKappa, EtaOverrideAndPairCap) {
  const auto data = uniform_linear(600, 1, 2, 4);
  KappaOptions o;
  o.eta_override = 3.0;
  o.pair_cap = 500;
  const auto t = estimate_kappa(data, QuantileLevel(0.5), {1.0}, make_learner(LinearQRConfig{}), o);
  EXPECT_DOUBLE_EQ(t.eta, 3.0);
  EXPECT_EQ(t.samples.size(), 500u);
}

TEST(EstimateKappa, ShrinksWithMoreTrainingData) {
  auto level_at_median = [](const KappaTable& t) {
    std::vector<double> n1;
    std::vector<double> xi;
    for (const auto& s : t.samples) {
      n1.push_back(s.n1);
      xi.push_back(s.xi);
    }
    return t.C * std::sqrt(std::pow(median(xi), t.nu) / median(n1));
  };
  GeneratorSpec g;
  g.family = Family::linear;
  g.seed = 5;
  const auto small = generate(g, 400);
  g.seed = 6;
  const auto large = generate(g, 1600);
  KappaOptions o;
  o.seed = 2;
  const std::vector<double> rho{0.25, 0.5, 1.0};
  const auto learner = make_learner(LinearQRConfig{});
  const double ks = level_at_median(estimate_kappa(small, QuantileLevel(0.5), rho, learner, o));
  const double kl = level_at_median(estimate_kappa(large, QuantileLevel(0.5), rho, learner, o));
  EXPECT_LT(kl, ks);
}

TEST(EstimateKappa, BiasWidensWithDistanceOnPiecewiseModel) {
  GeneratorSpec g;
  g.family = Family::example3;
  g.seed = 7;
  const auto data = generate(g, 1200);
  KappaOptions o;
  o.seed = 3;
  const auto t = estimate_kappa(data, QuantileLevel(0.5), {0.5, 1.0}, make_learner(LinearQRConfig{}), o);
  std::vector<double> xs;
  for (const auto& s : t.samples) xs.push_back(s.xi);
  std::sort(xs.begin(), xs.end());
  const double q1 = xs[xs.size() / 4];
  const double q3 = xs[3 * xs.size() / 4];
  double lo = 0.0;
  double hi = 0.0;
  int nlo = 0;
  int nhi = 0;
  for (const auto& s : t.samples) {
    if (s.xi <= q1) {
      lo += s.kappa;
      ++nlo;
    } else if (s.xi >= q3) {
      hi += s.kappa;
      ++nhi;
    }
  }
  EXPECT_GT(hi / nhi, lo / nlo);
}

TEST(KMeans, SeparatedBlobs) {
  RngStream r(53, 0);
  std::vector<double> pts;
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < 50; ++i) {
      pts.push_back(10.0 * b + 0.1 * r.normal());
      pts.push_back(-5.0 * b + 0.1 * r.normal());
    }
  }
  const auto km = kmeans(pts, 2, 3, 1);
  for (int b = 0; b < 3; ++b) {
    for (int i = 1; i < 50; ++i) EXPECT_EQ(km.labels[b * 50 + i], km.labels[b * 50]);
  }
  EXPECT_NE(km.labels[0], km.labels[50]);
  EXPECT_NE(km.labels[50], km.labels[100]);
  EXPECT_LT(median_cluster_diameter(pts, 2, km), 1.5);
  EXPECT_THROW(kmeans(pts, 2, 0, 1), InvalidArgument);
}

TEST(KMeans, ClusterToDiameterHitsTarget) {
  RngStream r(54, 0);
  std::vector<double> pts(2000);
  for (auto& v : pts) v = r.uniform(0, 10);
  const auto km = cluster_to_diameter(pts, 2, 3.0, 5);
  EXPECT_GT(km.k, 1u);
  EXPECT_LE(median_cluster_diameter(pts, 2, km), 6.0);
}

TEST(Algorithm3, OneRoundTraceAndBounds) {
  const auto data = uniform_linear(1500, 1, 2, 8);
  Algorithm3Config c;
  c.max_rounds = 1;
  c.seed = 4;
  const auto r = algorithm3_loop(data, QuantileLevel(0.5), make_learner(KNNQConfig{30, true}), c);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_GE(r.xi, r.xi_lo * (1 - 1e-12));
  EXPECT_LE(r.xi, r.xi_hi * (1 + 1e-12));
}

TEST(Algorithm3, DeterministicAndBounded) {
  GeneratorSpec g;
  g.family = Family::example3;
  g.seed = 9;
  const auto data = generate(g, 1500);
  Algorithm3Config c;
  c.max_rounds = 3;
  c.seed = 11;
  const auto learner = make_learner(LinearQRConfig{});
  const auto a = algorithm3_loop(data, QuantileLevel(0.5), learner, c);
  const auto b = algorithm3_loop(data, QuantileLevel(0.5), learner, c);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].xi, b.trace[i].xi);
    EXPECT_EQ(a.trace[i].failed, b.trace[i].failed);
    if (!a.trace[i].failed) {
      EXPECT_EQ(a.trace[i].phi, b.trace[i].phi);
    }
    EXPECT_GE(a.trace[i].xi, a.xi_lo * (1 - 1e-12));
    EXPECT_LE(a.trace[i].xi, a.xi_hi * (1 + 1e-12));
  }
  EXPECT_GE(a.trace.size(), 1u);
  EXPECT_LE(a.trace.size(), 3u);
}

TEST(Algorithm3, FlatGapPoolsEverything) {
  // Constant-quantile data: any bias is the same everywhere, so the loop should pool all of it.
  GeneratorSpec g;
  g.family = Family::linear;
  g.d = 2;
  g.theta = {0.0, 0.0};
  g.noise = NoiseKind::uniform;
  g.seed = 10;
  const auto data = generate(g, 2000);
  Algorithm3Config c;
  c.max_rounds = 2;
  c.seed = 12;
  const auto r = algorithm3_loop(data, QuantileLevel(0.5), make_learner(LinearQRConfig{}), c);
  ASSERT_FALSE(r.trace.empty());
  ASSERT_FALSE(r.trace.back().failed) << r.trace.back().note;
  EXPECT_DOUBLE_EQ(r.xi, r.xi_hi);
}

TEST(Algorithm3, ConfigValidation) {
  Algorithm3Config c;
  c.init_xi = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.max_rounds = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}
