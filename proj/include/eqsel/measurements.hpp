#pragma once

// Session statistics: mean distribution, distance-to-equilibrium curves,
// pairwise angular momentum, cycle strength and eigencycles, plus the
// per-treatment aggregation and figure-data CSVs.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "eqsel/agents.hpp"
#include "eqsel/dynamics.hpp"
#include "eqsel/game.hpp"

namespace eqsel {

enum class Frame { Canonical, Permuted };

struct StateSeries {
  std::vector<Vec<double>> points;
  Frame frame = Frame::Canonical;

  std::size_t size() const { return points.size(); }

  static StateSeries from_log(const SessionLog& log, Frame frame = Frame::Canonical) {
    return {frame == Frame::Canonical ? log.canonical_series() : log.session_frame_series(), frame};
  }

  static StateSeries from_trajectory(const Trajectory& tr) {
    StateSeries s;
    s.points.reserve(tr.points.size());
    for (const auto& p : tr.points) s.points.push_back(to_vec(p));
    return s;
  }

  void validate(double tol = 1e-9) const {
    for (const auto& p : points) {
      double sum = 0.0;
      for (double v : p) {
        if (!(v >= -tol)) throw InvalidArgument("series point has a negative share");
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol) throw InvalidArgument("series point is off the simplex");
    }
  }
};

inline StateSeries apply_permutation(const StrategyPermutation& pi, const StateSeries& s) {
  StateSeries out{{}, s.frame};
  out.points.reserve(s.size());
  for (const auto& p : s.points) out.points.push_back(apply_permutation(pi, p));
  return out;
}

// ---------------------------------------------------------------------------
// Small statistics

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Standard error of the mean (sample standard deviation / sqrt(n)); 0 for n < 2.
inline double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
}

// ---------------------------------------------------------------------------
// Mean distribution

/// Mean of rho(t) over rounds t_a..t_b (1-based, inclusive); default is the
/// full series.
inline Vec<double> mean_distribution(const StateSeries& s, int t_a = 1, int t_b = -1) {
  if (t_b < 0) t_b = static_cast<int>(s.size());
  if (t_a < 1 || t_b < t_a || t_b > static_cast<int>(s.size())) throw InvalidArgument("empty or invalid window");
  Vec<double> acc{};
  for (int t = t_a; t <= t_b; ++t)
    for (std::size_t k = 0; k < kStrategies; ++k) acc[k] += s.points[std::size_t(t - 1)][k];
  for (auto& v : acc) v /= double(t_b - t_a + 1);
  return acc;
}

struct DistributionSummary {
  double b = 0.0;
  Vec<double> rho_bar{};
  Vec<double> se{};
  std::vector<Vec<double>> per_session;
};

inline DistributionSummary summarize_distribution(const std::vector<Vec<double>>& per_session, double b) {
  DistributionSummary out;
  out.b = b;
  out.per_session = per_session;
  for (std::size_t k = 0; k < kStrategies; ++k) {
    std::vector<double> col;
    for (const auto& v : per_session) col.push_back(v[k]);
    out.rho_bar[k] = mean_of(col);
    out.se[k] = standard_error(col);
  }
  return out;
}

inline double mass(const Vec<double>& rho, std::initializer_list<int> strategies) {
  double m = 0.0;
  for (int s : strategies) m += rho.at(std::size_t(s - 1));
  return m;
}

// ---------------------------------------------------------------------------
// Distance curves

inline double distance(const Vec<double>& x, const Vec<double>& y) {
  double s = 0.0;
  for (std::size_t k = 0; k < kStrategies; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::sqrt(s);
}

inline constexpr int kDefaultSmoothingWindow = 20;

/// Centered moving average; the window is truncated at both ends.
template <typename T>
std::vector<T> moving_average(const std::vector<T>& xs, int window) {
  if (window < 1) throw InvalidArgument("smoothing window must be >= 1");
  const long n = static_cast<long>(xs.size());
  const long lo_off = (window - 1) / 2;
  const long hi_off = window / 2;
  std::vector<T> out(xs.size());
  for (long t = 0; t < n; ++t) {
    const long lo = std::max(0L, t - lo_off);
    const long hi = std::min(n - 1, t + hi_off);
    T acc{};
    for (long u = lo; u <= hi; ++u) {
      if constexpr (std::is_arithmetic_v<T>) {
        acc += xs[std::size_t(u)];
      } else {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += xs[std::size_t(u)][k];
      }
    }
    const double cnt = double(hi - lo + 1);
    if constexpr (std::is_arithmetic_v<T>) {
      out[std::size_t(t)] = acc / cnt;
    } else {
      for (auto& v : acc) v /= cnt;
      out[std::size_t(t)] = acc;
    }
  }
  return out;
}

enum class TargetLabel { Nash1, Nash2 };

inline const char* to_string(TargetLabel t) { return t == TargetLabel::Nash1 ? "Nash_1" : "Nash_2"; }

/// Nash_1 below the stability margin, Nash_2 above it.
inline TargetLabel target_for(double b) { return b > kMarginalB ? TargetLabel::Nash2 : TargetLabel::Nash1; }

inline Vec<double> target_point(TargetLabel t) {
  return t == TargetLabel::Nash1 ? SimplexPoint<double>::nash1().shares() : SimplexPoint<double>::nash2().shares();
}

struct ConvergenceCurve {
  TargetLabel target = TargetLabel::Nash1;
  std::vector<double> raw;
  /// Distance of the moving-averaged state series; empty when window == 0.
  std::vector<double> smoothed;
  int window = kDefaultSmoothingWindow;
};

/// d(t) = |rho(t) - target|. The smoothed variant averages the state series
/// over a centered window before taking the distance; at N = 5 a raw state
/// can never come closer to Nash_1 than 0.163.
inline ConvergenceCurve distance_curve(const StateSeries& s, TargetLabel target,
                                       int window = kDefaultSmoothingWindow) {
  ConvergenceCurve c;
  c.target = target;
  c.window = window;
  const auto x = target_point(target);
  c.raw.reserve(s.size());
  for (const auto& p : s.points) c.raw.push_back(distance(p, x));
  if (window > 0) {
    for (const auto& p : moving_average(s.points, window)) c.smoothed.push_back(distance(p, x));
  }
  return c;
}

/// First 1-based index with value < threshold.
inline std::optional<int> first_below(const std::vector<double>& curve, double threshold) {
  for (std::size_t t = 0; t < curve.size(); ++t)
    if (curve[t] < threshold) return static_cast<int>(t) + 1;
  return std::nullopt;
}

/// Least-squares slope of log d(t) over the samples with d in [d_lo, d_hi];
/// returns the decay rate (positive for convergence).
inline std::optional<double> fit_decay_rate(const std::vector<double>& d, double dt, double d_hi, double d_lo) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k] > d_hi || d[k] < d_lo) continue;
    const double x = double(k) * dt, y = std::log(d[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 3) return std::nullopt;
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0)) return std::nullopt;
  return -(n * sxy - sx * sy) / den;
}

// ---------------------------------------------------------------------------
// Angular momentum

inline constexpr std::size_t kPairCount = 10;

/// Pairs (m, n), m > n, 1-based, in output column order L_21 .. L_54.
inline constexpr std::array<std::pair<int, int>, kPairCount> kPairs{
    {{2, 1}, {3, 1}, {3, 2}, {4, 1}, {4, 2}, {4, 3}, {5, 1}, {5, 2}, {5, 3}, {5, 4}}};

inline std::size_t pair_index(int m, int n) {
  for (std::size_t k = 0; k < kPairCount; ++k)
    if (kPairs[k].first == m && kPairs[k].second == n) return k;
  throw InvalidArgument("pair must satisfy 5 >= m > n >= 1");
}

struct AngularMomentumSet {
  std::array<double, kPairCount> values{};

  double at(int m, int n) const {
    if (m > n) return values[pair_index(m, n)];
    return -values[pair_index(n, m)];
  }
  double strength() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

/// Time average over the T-1 transitions of the 2-d cross product
/// rho_m(t) rho_n(t+1) - rho_n(t) rho_m(t+1). With `center`, positions are
/// taken relative to that point.
inline AngularMomentumSet angular_momentum(const StateSeries& s, std::optional<Vec<double>> center = std::nullopt) {
  if (s.size() < 2) throw InvalidArgument("angular momentum needs at least two states");
  const Vec<double> c = center.value_or(Vec<double>{});
  AngularMomentumSet out;
  for (std::size_t t = 0; t + 1 < s.size(); ++t) {
    const auto& p = s.points[t];
    const auto& q = s.points[t + 1];
    for (std::size_t k = 0; k < kPairCount; ++k) {
      const auto m = std::size_t(kPairs[k].first - 1), n = std::size_t(kPairs[k].second - 1);
      out.values[k] += (p[m] - c[m]) * (q[n] - c[n]) - (p[n] - c[n]) * (q[m] - c[m]);
    }
  }
  for (auto& v : out.values) v /= double(s.size() - 1);
  return out;
}

inline double cycle_strength(const AngularMomentumSet& l) { return l.strength(); }

// ---------------------------------------------------------------------------
// Eigencycles

struct EigencycleSet {
  std::array<double, kPairCount> values{};
};

/// sigma_mn = Im(conj(eta_m) eta_n), scaled to unit L1 norm when nonzero.
inline EigencycleSet eigencycle(const CVector5& eta, bool normalize = true) {
  if (!(eta.norm() > 0)) throw InvalidArgument("eigencycle of the zero vector");
  EigencycleSet out;
  double l1 = 0.0;
  for (std::size_t k = 0; k < kPairCount; ++k) {
    const auto m = Eigen::Index(kPairs[k].first - 1), n = Eigen::Index(kPairs[k].second - 1);
    out.values[k] = std::imag(std::conj(eta(m)) * eta(n));
    l1 += std::abs(out.values[k]);
  }
  if (normalize && l1 > 1e-14)
    for (auto& v : out.values) v /= l1;
  else if (l1 <= 1e-14)
    out.values.fill(0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Treatment aggregation

struct AggregateOptions {
  int smoothing_window = kDefaultSmoothingWindow;
  /// Window for the mean distribution, 1-based inclusive; t_b < 0 means T.
  int t_a = 1;
  int t_b = -1;
  Frame frame = Frame::Canonical;
};

struct TreatmentReport {
  double b = 0.0;
  int sessions = 0;
  DistributionSummary distribution;
  TargetLabel target = TargetLabel::Nash1;
  std::vector<double> d_mean;
  std::vector<double> d_se;
  /// Session mean of the smoothed-state distance curves.
  std::vector<double> d_smoothed_mean;
  AngularMomentumSet l_mean;
  std::vector<double> abs_l;
  double abs_l_mean = 0.0;
  double abs_l_se = 0.0;
};

inline TreatmentReport aggregate_treatment(const std::vector<SessionLog>& logs, const AggregateOptions& opt = {}) {
  if (logs.empty()) throw InvalidArgument("no logs to aggregate");
  TreatmentReport r;
  r.b = logs.front().config.b;
  r.sessions = static_cast<int>(logs.size());
  r.target = target_for(r.b);
  const std::size_t rounds = logs.front().records.size();
  for (const auto& log : logs) {
    if (std::abs(log.config.b - r.b) > 1e-12) throw InvalidArgument("logs mix treatments");
    if (log.records.size() != rounds) throw InvalidArgument("logs differ in length");
  }
  std::vector<Vec<double>> rho;
  std::vector<std::vector<double>> raw, smooth;
  std::vector<AngularMomentumSet> ls;
  for (const auto& log : logs) {
    const auto s = StateSeries::from_log(log, opt.frame);
    rho.push_back(mean_distribution(s, opt.t_a, opt.t_b));
    const auto c = distance_curve(s, r.target, opt.smoothing_window);
    raw.push_back(c.raw);
    smooth.push_back(c.smoothed);
    ls.push_back(angular_momentum(s));
    r.abs_l.push_back(ls.back().strength());
  }
  r.distribution = summarize_distribution(rho, r.b);
  r.d_mean.resize(rounds);
  r.d_se.resize(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    std::vector<double> col;
    for (const auto& c : raw) col.push_back(c[t]);
    r.d_mean[t] = mean_of(col);
    r.d_se[t] = standard_error(col);
  }
  if (opt.smoothing_window > 0) {
    r.d_smoothed_mean.assign(rounds, 0.0);
    for (const auto& c : smooth)
      for (std::size_t t = 0; t < rounds; ++t) r.d_smoothed_mean[t] += c[t] / double(smooth.size());
  }
  for (const auto& l : ls)
    for (std::size_t k = 0; k < kPairCount; ++k) r.l_mean.values[k] += l.values[k] / double(ls.size());
  r.abs_l_mean = mean_of(r.abs_l);
  r.abs_l_se = standard_error(r.abs_l);
  return r;
}

// ---------------------------------------------------------------------------
// Figure data

namespace detail {
inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << (v == 0.0 ? 0.0 : v);
  return os.str();
}
}  // namespace detail

inline void write_fig3_csv(std::ostream& os, const std::vector<TreatmentReport>& reports) {
  os << "b,rho1,rho2,rho3,rho4,rho5,se1,se2,se3,se4,se5\n";
  for (const auto& r : reports) {
    os << detail::num(r.b);
    for (double v : r.distribution.rho_bar) os << ',' << detail::num(v);
    for (double v : r.distribution.se) os << ',' << detail::num(v);
    os << '\n';
  }
}

inline void write_fig4_csv(std::ostream& os, const std::vector<TreatmentReport>& reports) {
  os << "b,target,t,d_mean,d_se\n";
  for (const auto& r : reports)
    for (std::size_t t = 0; t < r.d_mean.size(); ++t)
      os << detail::num(r.b) << ',' << to_string(r.target) << ',' << t + 1 << ',' << detail::num(r.d_mean[t]) << ','
         << detail::num(r.d_se[t]) << '\n';
}

inline void write_fig5_csv(std::ostream& os, const std::vector<TreatmentReport>& reports) {
  os << "b";
  for (const auto& [m, n] : kPairs) os << ",L_" << m << n;
  os << ",absL,absL_se\n";
  for (const auto& r : reports) {
    os << detail::num(r.b);
    for (double v : r.l_mean.values) os << ',' << detail::num(v);
    os << ',' << detail::num(r.abs_l_mean) << ',' << detail::num(r.abs_l_se) << '\n';
  }
}

}  // namespace eqsel
