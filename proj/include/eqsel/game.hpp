#pragma once

// The five-strategy symmetric game: payoff matrix, population states, Nash
// verification and strategy relabeling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

namespace eqsel {

inline constexpr std::size_t kStrategies = 5;

using Rational = boost::rational<std::int64_t>;

template <typename T>
using Vec = std::array<T, kStrategies>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

template <typename T>
inline double to_double(const T& v) {
  return static_cast<double>(v);
}

template <>
inline double to_double<Rational>(const Rational& v) {
  return boost::rational_cast<double>(v);
}

template <typename U, typename T>
inline U scalar_cast(const T& v) {
  if constexpr (std::is_same_v<U, T>) {
    return v;
  } else if constexpr (std::is_same_v<U, double>) {
    return to_double(v);
  } else {
    static_assert(std::is_same_v<T, Rational> || std::is_integral_v<T>,
                  "only exact sources convert to exact targets");
    return U(v);
  }
}

template <typename U, typename T>
inline Vec<U> vec_cast(const Vec<T>& v) {
  Vec<U> out{};
  for (std::size_t i = 0; i < kStrategies; ++i) out[i] = scalar_cast<U>(v[i]);
  return out;
}

template <typename T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  T s{0};
  for (std::size_t i = 0; i < kStrategies; ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// PayoffMatrix

template <typename T>
class PayoffMatrix {
 public:
  using Rows = std::array<Vec<T>, kStrategies>;

  PayoffMatrix() : rows_{} {}
  explicit PayoffMatrix(const Rows& rows) : rows_(rows) {}

  /// The game matrix used throughout: rows are the focal strategy, columns the
  /// opponent strategy.
  static PayoffMatrix canonical() {
    auto r = [](int a, int b, int c, int d, int e) {
      return Vec<T>{T(a), T(b), T(c), T(d), T(e)};
    };
    return PayoffMatrix(Rows{r(0, 0, 2, 0, -2), r(2, 0, 0, -2, 0), r(0, 2, 0, 2, -1),
                             r(-2, 0, 1, 0, 1), r(0, -2, -2, 1, 0)});
  }

  const T& operator()(std::size_t i, std::size_t j) const { return rows_[i][j]; }
  T& operator()(std::size_t i, std::size_t j) { return rows_[i][j]; }
  const Vec<T>& row(std::size_t i) const { return rows_[i]; }
  const Rows& rows() const { return rows_; }

  template <typename U>
  PayoffMatrix<U> cast() const {
    typename PayoffMatrix<U>::Rows out{};
    for (std::size_t i = 0; i < kStrategies; ++i) out[i] = vec_cast<U>(rows_[i]);
    return PayoffMatrix<U>(out);
  }

  friend bool operator==(const PayoffMatrix& a, const PayoffMatrix& b) {
    return a.rows_ == b.rows_;
  }

 private:
  Rows rows_;
};

// ---------------------------------------------------------------------------
// SimplexPoint

namespace detail {
template <typename T>
void check_simplex(const Vec<T>& s) {
  T sum{0};
  for (const auto& v : s) {
    if (v < T{0}) throw InvalidArgument("simplex point has a negative share");
    sum += v;
  }
  if constexpr (std::is_same_v<T, Rational>) {
    if (sum != T{1}) throw InvalidArgument("simplex point shares do not sum to 1");
  } else {
    if (!(std::abs(to_double(sum) - 1.0) <= 1e-12))
      throw InvalidArgument("simplex point shares do not sum to 1");
  }
}
}  // namespace detail

template <typename T>
class SimplexPoint {
 public:
  explicit SimplexPoint(const Vec<T>& shares) : shares_(shares) {
    detail::check_simplex(shares_);
  }

  static SimplexPoint uniform() {
    Vec<T> s;
    s.fill(T{1} / T{5});
    return SimplexPoint(s);
  }
  static SimplexPoint vertex(std::size_t i) {
    Vec<T> s{};
    s.at(i) = T{1};
    return SimplexPoint(s);
  }
  static SimplexPoint nash1() {
    const T third = T{1} / T{3};
    return SimplexPoint(Vec<T>{third, third, third, T{0}, T{0}});
  }
  static SimplexPoint nash2() {
    const T half = T{1} / T{2};
    return SimplexPoint(Vec<T>{T{0}, T{0}, T{0}, half, half});
  }

  const Vec<T>& shares() const { return shares_; }
  const T& operator[](std::size_t i) const { return shares_[i]; }

  template <typename U>
  SimplexPoint<U> cast() const {
    return SimplexPoint<U>(vec_cast<U>(shares_));
  }

  friend bool operator==(const SimplexPoint& a, const SimplexPoint& b) {
    return a.shares_ == b.shares_;
  }

 private:
  Vec<T> shares_;
};

// ---------------------------------------------------------------------------
// SocialState: players per strategy in one round.

class SocialState {
 public:
  SocialState() = default;
  explicit SocialState(const Vec<int>& counts) : counts_(counts) {
    for (int c : counts_)
      if (c < 0) throw InvalidArgument("social state has a negative count");
  }

  /// Builds the state from 1-based strategy choices.
  static SocialState from_choices(const std::vector<int>& choices) {
    Vec<int> c{};
    for (int s : choices) {
      if (s < 1 || s > static_cast<int>(kStrategies))
        throw InvalidArgument("strategy index out of range: " + std::to_string(s));
      ++c[static_cast<std::size_t>(s - 1)];
    }
    return SocialState(c);
  }

  const Vec<int>& counts() const { return counts_; }
  int operator[](std::size_t i) const { return counts_[i]; }
  int players() const { return std::accumulate(counts_.begin(), counts_.end(), 0); }

  /// Exact counts / N.
  SimplexPoint<Rational> to_simplex() const {
    const int n = players();
    if (n <= 0) throw InvalidArgument("empty social state");
    Vec<Rational> s{};
    for (std::size_t i = 0; i < kStrategies; ++i) s[i] = Rational(counts_[i], n);
    return SimplexPoint<Rational>(s);
  }

  Vec<double> shares() const {
    const double n = players();
    Vec<double> s{};
    for (std::size_t i = 0; i < kStrategies; ++i) s[i] = counts_[i] / n;
    return s;
  }

  friend bool operator==(const SocialState&, const SocialState&) = default;

 private:
  Vec<int> counts_{};
};

/// All states of `players` individuals over five strategies, in lexicographic
/// order of the count vector.
inline std::vector<SocialState> enumerate_states(int players) {
  std::vector<SocialState> out;
  Vec<int> c{};
  for (c[0] = 0; c[0] <= players; ++c[0])
    for (c[1] = 0; c[0] + c[1] <= players; ++c[1])
      for (c[2] = 0; c[0] + c[1] + c[2] <= players; ++c[2])
        for (c[3] = 0; c[0] + c[1] + c[2] + c[3] <= players; ++c[3]) {
          c[4] = players - c[0] - c[1] - c[2] - c[3];
          out.emplace_back(c);
        }
  return out;
}

// ---------------------------------------------------------------------------
// StrategyPermutation: identity or one transposition, written "00" or "ij".

class StrategyPermutation {
 public:
  StrategyPermutation() { std::iota(map_.begin(), map_.end(), std::size_t{0}); }

  static StrategyPermutation identity() { return {}; }

  /// Swap of 1-based strategies i and j.
  static StrategyPermutation swap(int i, int j) {
    if (i < 1 || j < 1 || i > 5 || j > 5 || i == j)
      throw InvalidArgument("permutation must swap two distinct strategies in 1..5");
    StrategyPermutation p;
    std::swap(p.map_[static_cast<std::size_t>(i - 1)], p.map_[static_cast<std::size_t>(j - 1)]);
    p.code_ = std::to_string(std::min(i, j)) + std::to_string(std::max(i, j));
    return p;
  }

  /// Parses "00" or a two-digit swap code. Any two distinct strategies are
  /// accepted; sessions restrict the set further.
  static StrategyPermutation parse(const std::string& code) {
    if (code == "00") return identity();
    if (code.size() != 2 || code[0] < '1' || code[0] > '5' || code[1] < '1' || code[1] > '5' ||
        code[0] == code[1])
      throw InvalidArgument("malformed permutation code '" + code + "'");
    return swap(code[0] - '0', code[1] - '0');
  }

  /// The six swaps between {1,2,3} and {4,5} used to relabel sessions.
  static bool is_session_code(const std::string& code) {
    if (code == "00") return true;
    if (code.size() != 2) return false;
    const char a = std::min(code[0], code[1]);
    const char b = std::max(code[0], code[1]);
    return a >= '1' && a <= '3' && (b == '4' || b == '5');
  }

  /// 0-based image of 0-based index k.
  std::size_t operator()(std::size_t k) const { return map_[k]; }
  const std::string& code() const { return code_; }
  bool is_identity() const { return code_ == "00"; }

  friend bool operator==(const StrategyPermutation& a, const StrategyPermutation& b) {
    return a.map_ == b.map_;
  }

 private:
  std::array<std::size_t, kStrategies> map_{};
  std::string code_ = "00";
};

/// v'[k] = v[pi(k)].
template <typename T>
Vec<T> apply_permutation(const StrategyPermutation& pi, const Vec<T>& v) {
  Vec<T> out{};
  for (std::size_t k = 0; k < kStrategies; ++k) out[k] = v[pi(k)];
  return out;
}

/// A'[k][l] = A[pi(k)][pi(l)].
template <typename T>
PayoffMatrix<T> apply_permutation(const StrategyPermutation& pi, const PayoffMatrix<T>& a) {
  typename PayoffMatrix<T>::Rows rows{};
  for (std::size_t k = 0; k < kStrategies; ++k)
    for (std::size_t l = 0; l < kStrategies; ++l) rows[k][l] = a(pi(k), pi(l));
  return PayoffMatrix<T>(rows);
}

template <typename T>
SimplexPoint<T> apply_permutation(const StrategyPermutation& pi, const SimplexPoint<T>& x) {
  return SimplexPoint<T>(apply_permutation(pi, x.shares()));
}

inline SocialState apply_permutation(const StrategyPermutation& pi, const SocialState& s) {
  return SocialState(apply_permutation(pi, s.counts()));
}

// ---------------------------------------------------------------------------
// Payoffs

/// (Ax)_i for each strategy i.
template <typename T>
Vec<T> expected_payoffs(const PayoffMatrix<T>& a, const Vec<T>& x) {
  Vec<T> out{};
  for (std::size_t i = 0; i < kStrategies; ++i) out[i] = dot(a.row(i), x);
  return out;
}

template <typename T>
Vec<T> expected_payoffs(const PayoffMatrix<T>& a, const SimplexPoint<T>& x) {
  return expected_payoffs(a, x.shares());
}

template <typename T>
T mean_payoff(const PayoffMatrix<T>& a, const SimplexPoint<T>& x) {
  return dot(x.shares(), expected_payoffs(a, x));
}

/// Game payoff of one player choosing strategy i against every other player
/// of the round (no self-play): sum_j (counts[j] - delta_ij) A[i][j].
/// Entries for strategies nobody chose are what a player would have earned
/// had they been there, against the same N-1 opponents count vector.
template <typename T>
Vec<T> round_payoffs(const PayoffMatrix<T>& a, const SocialState& s) {
  if (s.players() < 2) throw InvalidArgument("a round needs at least two players");
  Vec<T> out{};
  for (std::size_t i = 0; i < kStrategies; ++i) {
    T sum{0};
    for (std::size_t j = 0; j < kStrategies; ++j) {
      const int opp = s[j] - (i == j ? 1 : 0);
      sum += a(i, j) * T(opp);
    }
    out[i] = sum;
  }
  return out;
}

/// Payoff of a player choosing `strategy` (0-based) against the given
/// opponent counts.
template <typename T>
T payoff_against(const PayoffMatrix<T>& a, std::size_t strategy, const Vec<int>& opponents) {
  T sum{0};
  for (std::size_t j = 0; j < kStrategies; ++j) sum += a(strategy, j) * T(opponents[j]);
  return sum;
}

// ---------------------------------------------------------------------------
// Nash verification

struct NashCertificate {
  bool is_nash = false;
  Vec<double> payoffs{};
  double best_payoff = 0.0;
  /// First support strategy (0-based) beaten by more than tol; empty when
  /// the point is an equilibrium.
  std::optional<std::size_t> violating;
  /// The best reply that beats it.
  std::optional<std::size_t> better_reply;
  /// Off-support strategies that tie the best payoff within tol.
  std::vector<std::size_t> off_support_ties;

  explicit operator bool() const { return is_nash; }
};

/// Weak-Nash test: every support strategy must attain the best payoff within
/// tol. Off-support ties are accepted.
template <typename T>
NashCertificate is_nash(const PayoffMatrix<T>& a, const SimplexPoint<T>& x, double tol) {
  if (!(tol > 0)) throw InvalidArgument("tolerance must be positive");
  NashCertificate cert;
  const auto p = expected_payoffs(a, x);
  cert.payoffs = vec_cast<double>(p);
  std::size_t best_idx = 0;
  for (std::size_t i = 1; i < kStrategies; ++i)
    if (cert.payoffs[i] > cert.payoffs[best_idx]) best_idx = i;
  cert.best_payoff = cert.payoffs[best_idx];
  cert.is_nash = true;
  for (std::size_t i = 0; i < kStrategies; ++i) {
    const bool in_support = x[i] > T{0};
    const bool ties = cert.payoffs[i] - cert.best_payoff >= -tol;
    if (in_support && !ties && cert.is_nash) {
      cert.is_nash = false;
      cert.violating = i;
      cert.better_reply = best_idx;
    }
    if (!in_support && ties) cert.off_support_ties.push_back(i);
  }
  return cert;
}

// ---------------------------------------------------------------------------
// EquilibriumSet

struct LabeledPoint {
  std::string label;
  SimplexPoint<Rational> point;
};

class EquilibriumSet {
 public:
  EquilibriumSet() = default;

  /// Verifies every member against `a`; throws if one fails.
  EquilibriumSet(std::vector<LabeledPoint> points, const PayoffMatrix<Rational>& a)
      : points_(std::move(points)) {
    for (const auto& p : points_) {
      if (!is_nash(a, p.point, 1e-9))
        throw InvalidArgument("equilibrium '" + p.label + "' fails the Nash check");
    }
  }

  static EquilibriumSet canonical() {
    return EquilibriumSet({{"Nash_1", SimplexPoint<Rational>::nash1()},
                           {"Nash_2", SimplexPoint<Rational>::nash2()}},
                          PayoffMatrix<Rational>::canonical());
  }

  const std::vector<LabeledPoint>& points() const { return points_; }

  const SimplexPoint<Rational>& at(const std::string& label) const {
    for (const auto& p : points_)
      if (p.label == label) return p.point;
    throw InvalidArgument("no equilibrium labelled '" + label + "'");
  }

 private:
  std::vector<LabeledPoint> points_;
};

}  // namespace eqsel
