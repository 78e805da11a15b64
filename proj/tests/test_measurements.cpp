#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eqsel/measurements.hpp"

using namespace eqsel;
using C = std::complex<double>;

namespace {

Vec<double> e(int k) {
  Vec<double> v{};
  v[std::size_t(k - 1)] = 1.0;
  return v;
}

StateSeries series(std::vector<Vec<double>> pts) { return {std::move(pts), Frame::Canonical}; }

StateSeries random_series(std::mt19937_64& g, int n) {
  std::exponential_distribution<double> ex;
  StateSeries s;
  for (int t = 0; t < n; ++t) {
    Vec<double> v{};
    double sum = 0;
    for (auto& x : v) sum += (x = ex(g));
    for (auto& x : v) x /= sum;
    s.points.push_back(v);
  }
  return s;
}

// Literal double loop over all ordered pairs, keeping m > n.
std::array<double, 10> naive_l(const StateSeries& s) {
  std::array<double, 10> out{};
  for (int m = 1; m <= 5; ++m) {
    for (int n = 1; n < m; ++n) {
      double acc = 0;
      for (std::size_t t = 1; t < s.size(); ++t)
        acc += s.points[t - 1][std::size_t(m - 1)] * s.points[t][std::size_t(n - 1)] -
               s.points[t - 1][std::size_t(n - 1)] * s.points[t][std::size_t(m - 1)];
      // pair_index order differs from this loop order; place by lookup
      out[pair_index(m, n)] = acc / double(s.size() - 1);
    }
  }
  return out;
}

SessionLog synthetic_log(double b, const std::vector<Vec<int>>& counts) {
  SessionLog log;
  log.config.b = b;
  log.config.rounds = int(counts.size());
  int t = 0;
  for (const auto& c : counts) {
    RoundRecord r;
    r.t = ++t;
    r.counts = r.canonical_counts = SocialState(c);
    log.records.push_back(r);
  }
  return log;
}

}  // namespace

TEST(MeanDistribution, Examples) {
  const auto n2 = SimplexPoint<double>::nash2().shares();
  const auto r = mean_distribution(series({n2, n2, n2}));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(r[k], n2[k]);
  std::vector<Vec<double>> alt;
  for (int t = 0; t < 100; ++t) alt.push_back(e(t % 2 ? 2 : 1));
  const auto r2 = mean_distribution(series(alt));
  EXPECT_DOUBLE_EQ(r2[0], 0.5);
  EXPECT_DOUBLE_EQ(r2[1], 0.5);
  EXPECT_THROW(mean_distribution(series(alt), 5, 4), InvalidArgument);
  EXPECT_THROW(mean_distribution(series(alt), 1, 101), InvalidArgument);
  EXPECT_THROW(mean_distribution(series(alt), 0, 10), InvalidArgument);
}

TEST(MeanDistribution, WindowLinearity) {
  std::mt19937_64 g(2);
  const auto s = random_series(g, 30);
  const auto a = mean_distribution(s, 1, 10), b = mean_distribution(s, 11, 30), all = mean_distribution(s);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(all[k], (10 * a[k] + 20 * b[k]) / 30, 1e-15);
}

TEST(Distance, Examples) {
  const auto u = SimplexPoint<double>::uniform().shares();
  const auto c1 = distance_curve(series({u, u, u}), TargetLabel::Nash1);
  for (double d : c1.raw) EXPECT_NEAR(d, std::sqrt(30.0) / 15, 1e-12);
  const auto c2 = distance_curve(series({u, u}), TargetLabel::Nash2);
  for (double d : c2.raw) EXPECT_NEAR(d, std::sqrt(30.0) / 10, 1e-12);
  const auto n1 = SimplexPoint<double>::nash1().shares();
  for (double d : distance_curve(series({n1, n1}), TargetLabel::Nash1).raw) EXPECT_EQ(d, 0.0);
}

TEST(Distance, BoundsAndTargets) {
  std::mt19937_64 g(4);
  const auto s = random_series(g, 200);
  for (auto t : {TargetLabel::Nash1, TargetLabel::Nash2})
    for (double d : distance_curve(s, t).raw) {
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, std::sqrt(2.0));
    }
  EXPECT_EQ(target_for(-0.8), TargetLabel::Nash1);
  EXPECT_EQ(target_for(0.0), TargetLabel::Nash1);
  EXPECT_EQ(target_for(0.4), TargetLabel::Nash2);
  EXPECT_DOUBLE_EQ(distance(e(1), e(5)), std::sqrt(2.0));
}

TEST(Smoothing, CenteredTruncatedWindow) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const auto m = moving_average(x, 3);
  EXPECT_DOUBLE_EQ(m[0], 1.5);
  EXPECT_DOUBLE_EQ(m[1], 2.0);
  EXPECT_DOUBLE_EQ(m[5], 5.5);
  const auto m4 = moving_average(x, 4);  // offsets -1..+2
  EXPECT_DOUBLE_EQ(m4[1], 2.5);
  EXPECT_EQ(moving_average(x, 1), x);
  EXPECT_THROW(moving_average(x, 0), InvalidArgument);
  EXPECT_EQ(first_below({0.5, 0.2, 0.1, 0.05}, 0.15), 3);
  EXPECT_FALSE(first_below({0.5, 0.2}, 0.15));
}

TEST(DecayFit, RecoversExponent) {
  std::vector<double> d;
  for (int k = 0; k < 2000; ++k) d.push_back(0.3 * std::exp(-0.7 * k * 0.01));
  EXPECT_NEAR(*fit_decay_rate(d, 0.01, 1e-1, 1e-4), 0.7, 1e-9);
  EXPECT_FALSE(fit_decay_rate(d, 0.01, 1e-8, 1e-9));
}

TEST(AngularMomentum, Examples) {
  const auto n1 = SimplexPoint<double>::nash1().shares();
  for (double v : angular_momentum(series({n1, n1, n1})).values) EXPECT_EQ(v, 0.0);
  const auto cyc = angular_momentum(series({e(1), e(2), e(3), e(1)}));
  EXPECT_DOUBLE_EQ(cyc.at(2, 1), -1.0 / 3);
  EXPECT_DOUBLE_EQ(cyc.at(3, 2), -1.0 / 3);
  EXPECT_DOUBLE_EQ(cyc.at(3, 1), 1.0 / 3);
  int zeros = 0;
  for (double v : cyc.values) zeros += v == 0.0;
  EXPECT_EQ(zeros, 7);
  EXPECT_NEAR(cycle_strength(cyc), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_EQ(angular_momentum(series({e(1), e(2), e(1)})).at(2, 1), 0.0);
  EXPECT_EQ(cycle_strength(AngularMomentumSet{}), 0.0);
  EXPECT_THROW(angular_momentum(series({e(1)})), InvalidArgument);
}

TEST(AngularMomentum, Antisymmetry) {
  const auto l = angular_momentum(series({e(1), e(2), e(3), e(1)}));
  for (const auto& [m, n] : kPairs) EXPECT_EQ(l.at(n, m), -l.at(m, n));
  EXPECT_THROW(pair_index(1, 2), InvalidArgument);
}

TEST(AngularMomentum, MatchesNaiveOracle) {
  std::mt19937_64 g(8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto s = random_series(g, 10);
    const auto l = angular_momentum(s);
    const auto o = naive_l(s);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(l.values[k], o[k], 1e-14);
  }
}

TEST(AngularMomentum, PermutationRelabelsPairs) {
  std::mt19937_64 g(10);
  for (int i = 1; i <= 5; ++i) {
    for (int j = i + 1; j <= 5; ++j) {
      const auto pi = StrategyPermutation::swap(i, j);
      const auto s = random_series(g, 40);
      const auto l = angular_momentum(s);
      const auto lp = angular_momentum(apply_permutation(pi, s));
      // v'[k] = v[pi(k)], so L'_{mn} = L_{pi(m) pi(n)}
      for (const auto& [m, n] : kPairs) {
        const int pm = int(pi(std::size_t(m - 1))) + 1, pn = int(pi(std::size_t(n - 1))) + 1;
        EXPECT_EQ(lp.at(m, n), l.at(pm, pn));
      }
      EXPECT_NEAR(lp.strength(), l.strength(), 1e-12);
    }
  }
}

TEST(AngularMomentum, CenteringOption) {
  const auto u = SimplexPoint<double>::uniform().shares();
  const auto s = series({e(1), e(2), e(3), e(1)});
  const auto raw = angular_momentum(s);
  const auto cen = angular_momentum(s, u);
  EXPECT_NE(raw.values, cen.values);
  EXPECT_EQ(angular_momentum(s, Vec<double>{}).values, raw.values);
}

TEST(Eigencycle, Examples) {
  CVector5 real_vec;
  real_vec << .577, .577, .577, 0, 0;
  for (double v : eigencycle(real_vec).values) EXPECT_EQ(v, 0.0);
  CVector5 eta;
  eta << C(1, 0), C(0, 1), 0, 0, 0;
  eta /= std::sqrt(2.0);
  const auto s = eigencycle(eta);
  EXPECT_NEAR(std::abs(s.values[pair_index(2, 1)]), 1.0, 1e-15);
  double l1 = 0;
  for (double v : s.values) l1 += std::abs(v);
  EXPECT_NEAR(l1, 1.0, 1e-15);
  EXPECT_THROW(eigencycle(CVector5::Zero()), InvalidArgument);
  const auto un = eigencycle(eta, false);
  EXPECT_NEAR(std::abs(un.values[pair_index(2, 1)]), 0.5, 1e-15);
}

TEST(Eigencycle, LeadingPairLivesOnFirstThreeStrategies) {
  const auto j = jacobian(open_loop_field(PayoffMatrix<double>::canonical()), SimplexPoint<double>::nash1());
  const auto s = eigencycle(eigs(j).vectors[0]);
  for (std::size_t k = 0; k < kPairCount; ++k) {
    const auto [m, n] = kPairs[k];
    if (m <= 3) EXPECT_GT(std::abs(s.values[k]), 0.1);
    else EXPECT_NEAR(s.values[k], 0.0, 1e-6);
  }
}

TEST(Aggregate, IdenticalLogsHaveZeroError) {
  const auto log = synthetic_log(-0.4, {{1, 1, 1, 1, 1}, {2, 2, 1, 0, 0}, {0, 2, 3, 0, 0}});
  const auto r = aggregate_treatment(std::vector<SessionLog>(8, log));
  EXPECT_EQ(r.sessions, 8);
  for (double v : r.distribution.se) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : r.d_se) EXPECT_NEAR(v, 0.0, 1e-15);
  EXPECT_NEAR(r.abs_l_se, 0.0, 1e-15);
  EXPECT_EQ(r.target, TargetLabel::Nash1);
  double sum = 0;
  for (double v : r.distribution.rho_bar) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Aggregate, RejectsMixedInputs) {
  const auto a = synthetic_log(0.4, {{1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}});
  const auto b = synthetic_log(0.8, {{1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}});
  const auto c = synthetic_log(0.4, {{1, 1, 1, 1, 1}});
  EXPECT_THROW(aggregate_treatment({a, b}), InvalidArgument);
  EXPECT_THROW(aggregate_treatment({a, c}), InvalidArgument);
  EXPECT_THROW(aggregate_treatment({}), InvalidArgument);
  EXPECT_EQ(aggregate_treatment({a}).target, TargetLabel::Nash2);
}

TEST(Aggregate, StandardErrorOracle) {
  EXPECT_DOUBLE_EQ(standard_error({1, 2, 3, 4}), std::sqrt(5.0 / 3.0) / 2.0);
  EXPECT_EQ(standard_error({3}), 0.0);
}

TEST(FigureCsv, Headers) {
  const auto log = synthetic_log(0.8, {{0, 0, 0, 3, 2}, {0, 0, 0, 2, 3}});
  const std::vector<TreatmentReport> rs{aggregate_treatment({log})};
  std::ostringstream f3, f4, f5;
  write_fig3_csv(f3, rs);
  write_fig4_csv(f4, rs);
  write_fig5_csv(f5, rs);
  EXPECT_EQ(f3.str().substr(0, f3.str().find('\n')), "b,rho1,rho2,rho3,rho4,rho5,se1,se2,se3,se4,se5");
  EXPECT_EQ(f4.str().substr(0, f4.str().find('\n')), "b,target,t,d_mean,d_se");
  EXPECT_EQ(f5.str().substr(0, f5.str().find('\n')),
            "b,L_21,L_31,L_32,L_41,L_42,L_43,L_51,L_52,L_53,L_54,absL,absL_se");
  EXPECT_NE(f4.str().find("0.8,Nash_2,2,0.1414213562,0"), std::string::npos) << f4.str();
}
