#pragma once

// Single-input pole assignment at the interior equilibrium and the
// round-level reward/tax realization of the resulting feedback.

#include <cmath>
#include <complex>
#include <string>

#include <nlohmann/json.hpp>

#include "eqsel/dynamics.hpp"
#include "eqsel/game.hpp"

namespace eqsel {

using Complex = std::complex<double>;
using Poles = std::array<Complex, kStrategies>;

inline constexpr Vec<double> kCanonicalChannel{0.0, 0.0, 0.0, 1.0, 1.0};

/// Treatment parameters the session layer accepts, ascending.
inline constexpr std::array<double, 5> kTreatmentBs{-0.8, -0.4, 0.0, 0.4, 0.8};

/// Stability margin of the shifted complex pair.
inline constexpr double kMarginalB = 1.0 / 3.0;

class Uncontrollable : public Error {
 public:
  explicit Uncontrollable(int rank)
      : Error("pair (J, B) is not controllable: rank " + std::to_string(rank) + " < 5"), rank_(rank) {}
  int rank() const { return rank_; }

 private:
  int rank_;
};

class ConjugationViolation : public Error {
 public:
  using Error::Error;
};

enum class SignConvention { Plus, Minus };

inline const char* to_string(SignConvention s) { return s == SignConvention::Plus ? "J+BK" : "J-BK"; }

// ---------------------------------------------------------------------------
// Design

/// Adds b to the real parts of the first two (complex pair) entries.
inline Poles target_spectrum(const Poles& open, double b) {
  Poles out = open;
  out[0] += b;
  out[1] += b;
  return out;
}

inline Eigen::Matrix<double, 5, 5> controllability_matrix(const Matrix5& j, const Vector5& b) {
  Matrix5 c;
  Vector5 col = b;
  for (Eigen::Index k = 0; k < 5; ++k) {
    c.col(k) = col;
    col = j * col;
  }
  return c;
}

inline int controllability_rank(const Matrix5& j, const Vector5& b) {
  const Matrix5 c = controllability_matrix(j, b);
  Eigen::JacobiSVD<Matrix5> svd(c);
  const auto& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index k = 0; k < 5; ++k)
    if (s(k) > 1e-10 * s(0)) ++rank;
  return rank;
}

namespace detail {

/// Throws unless every non-real target has a matching conjugate.
inline void check_conjugate_closed(const Poles& targets) {
  std::array<bool, kStrategies> used{};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (used[i]) continue;
    const double scale = std::max(1.0, std::abs(targets[i]));
    if (std::abs(targets[i].imag()) <= 1e-12 * scale) {
      used[i] = true;
      continue;
    }
    bool found = false;
    for (std::size_t k = i + 1; k < targets.size() && !found; ++k) {
      if (!used[k] && std::abs(targets[k] - std::conj(targets[i])) <= 1e-9 * scale) {
        used[i] = used[k] = true;
        found = true;
      }
    }
    if (!found) throw ConjugationViolation("target poles are not closed under conjugation");
  }
}

/// Monic characteristic polynomial coefficients, highest degree first.
inline std::array<double, kStrategies + 1> characteristic_coefficients(const Poles& roots) {
  std::array<Complex, kStrategies + 1> c{};
  c[0] = 1.0;
  std::size_t deg = 0;
  for (const auto& r : roots) {
    for (std::size_t k = deg + 1; k > 0; --k) c[k] -= r * c[k - 1];
    ++deg;
  }
  std::array<double, kStrategies + 1> out{};
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = c[k].real();
  return out;
}

}  // namespace detail

/// Gain K with spectrum(J + B K^T) = targets (Ackermann's formula).
inline Vec<double> place_poles(const Matrix5& j, const Vector5& b, const Poles& targets) {
  detail::check_conjugate_closed(targets);
  const int rank = controllability_rank(j, b);
  if (rank < 5) throw Uncontrollable(rank);
  const auto coeff = detail::characteristic_coefficients(targets);
  Matrix5 p = Matrix5::Zero();
  for (double c : coeff) p = p * j + c * Matrix5::Identity();
  // Last row of C^{-1}: solve C^T r = e5.
  const Matrix5 c = controllability_matrix(j, b);
  Vector5 e5 = Vector5::Zero();
  e5(4) = 1.0;
  const Vector5 r = c.transpose().fullPivLu().solve(e5);
  const Vector5 k = -(p.transpose() * r);
  return to_vec(k);
}

inline Matrix5 closed_loop_jacobian(const Matrix5& j, const Vec<double>& b, const Vec<double>& k) {
  return j + to_eigen(b) * to_eigen(k).transpose();
}

/// Picks whichever of J + BK, J - BK places `targets`, by largest eigenvalue
/// mismatch.
inline SignConvention determine_sign_convention(const Matrix5& j, const Vec<double>& b, const Vec<double>& k,
                                                const Poles& targets, double* plus_err = nullptr,
                                                double* minus_err = nullptr) {
  auto mismatch = [&](const Matrix5& m) {
    const auto ev = eigs(m).values;
    const auto order = detail::canonical_order(targets);
    double worst = 0.0;
    for (std::size_t i = 0; i < kStrategies; ++i) worst = std::max(worst, std::abs(ev[i] - targets[order[i]]));
    return worst;
  };
  const Matrix5 bk = to_eigen(b) * to_eigen(k).transpose();
  const double ep = mismatch(j + bk);
  const double em = mismatch(j - bk);
  if (plus_err) *plus_err = ep;
  if (minus_err) *minus_err = em;
  return ep <= em ? SignConvention::Plus : SignConvention::Minus;
}

struct ControlDesign {
  double b = 0.0;
  Vec<double> channel = kCanonicalChannel;
  Vec<double> gain{};
  Poles lambda_open{};
  Poles lambda_target{};
  Vec<double> anchor{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0};
  int controllability_rank = 5;
};

/// Designs K for the open-loop replicator linearization at `anchor`.
inline ControlDesign design_controller(const PayoffMatrix<double>& a, double b,
                                       const Vec<double>& channel = kCanonicalChannel,
                                       const SimplexPoint<double>& anchor = SimplexPoint<double>::nash1(),
                                       double h = kDefaultJacobianStep) {
  ControlDesign d;
  d.b = b;
  d.channel = channel;
  d.anchor = anchor.shares();
  const auto j = jacobian(open_loop_field(a), anchor, h);
  d.lambda_open = eigs(j).values;
  d.lambda_target = target_spectrum(d.lambda_open, b);
  d.controllability_rank = controllability_rank(j.entries, to_eigen(channel));
  if (b == 0.0) {
    d.gain = Vec<double>{};
  } else {
    d.gain = place_poles(j.entries, to_eigen(channel), d.lambda_target);
  }
  return d;
}

inline ControlDesign design_controller(double b) {
  return design_controller(PayoffMatrix<double>::canonical(), b);
}

/// A design carrying externally supplied gains (e.g. a reference table).
inline ControlDesign design_with_gain(double b, const Vec<double>& gain,
                                      const Vec<double>& channel = kCanonicalChannel) {
  ControlDesign d;
  d.b = b;
  d.channel = channel;
  d.gain = gain;
  const auto j = jacobian(open_loop_field(PayoffMatrix<double>::canonical()), SimplexPoint<double>::nash1());
  d.lambda_open = eigs(j).values;
  d.lambda_target = target_spectrum(d.lambda_open, b);
  d.controllability_rank = controllability_rank(j.entries, to_eigen(channel));
  return d;
}

/// Relabels channel, gain and anchor; the spectrum is unchanged.
inline ControlDesign apply_permutation(const StrategyPermutation& pi, const ControlDesign& d) {
  ControlDesign out = d;
  out.channel = apply_permutation(pi, d.channel);
  out.gain = apply_permutation(pi, d.gain);
  out.anchor = apply_permutation(pi, d.anchor);
  return out;
}

// ---------------------------------------------------------------------------
// Realization

enum class ControlModeKind { Velocity, Payoff };

struct ControlMode {
  ControlModeKind kind = ControlModeKind::Payoff;
  double gain_scale = 4.0;

  static ControlMode velocity() { return {ControlModeKind::Velocity, 4.0}; }
  static ControlMode payoff(double gamma = 4.0) {
    if (!(gamma > 0)) throw InvalidArgument("payoff-mode gain scale must be positive");
    return {ControlModeKind::Payoff, gamma};
  }
};

inline const char* to_string(ControlModeKind k) { return k == ControlModeKind::Payoff ? "payoff" : "velocity"; }

inline ControlModeKind parse_mode(const std::string& s) {
  if (s == "payoff") return ControlModeKind::Payoff;
  if (s == "velocity") return ControlModeKind::Velocity;
  throw InvalidArgument("unknown control mode '" + s + "'");
}

/// Scalar feedback u = K . (x - anchor).
inline double control_signal(const ControlDesign& d, const Vec<double>& x) {
  double u = 0.0;
  for (std::size_t i = 0; i < kStrategies; ++i) u += d.gain[i] * (x[i] - d.anchor[i]);
  return u;
}

struct RewardTax {
  double reward = 0.0;
  double tax = 0.0;
};

/// Per-strategy reward (positive part) and tax (negative part) of
/// gamma * B_i * u, with u evaluated at counts / N.
inline std::array<RewardTax, kStrategies> control_payoffs(const ControlDesign& d, const ControlMode& mode,
                                                          const SocialState& s) {
  if (mode.kind != ControlModeKind::Payoff) throw InvalidArgument("control_payoffs requires payoff mode");
  if (!(mode.gain_scale > 0)) throw InvalidArgument("payoff-mode gain scale must be positive");
  const double u = control_signal(d, s.shares());
  std::array<RewardTax, kStrategies> out{};
  for (std::size_t i = 0; i < kStrategies; ++i) {
    const double c = mode.gain_scale * d.channel[i] * u;
    out[i].reward = std::max(0.0, c);
    out[i].tax = std::min(0.0, c);
  }
  return out;
}

/// Velocity-mode closed loop: replicator + B (K . (x - anchor)).
inline Vector5 controlled_velocity(const Matrix5& a, const Vector5& x, const ControlDesign& d) {
  return replicator_velocity(a, x) + to_eigen(d.channel) * control_signal(d, to_vec(x));
}

inline Vec<double> controlled_velocity(const PayoffMatrix<double>& a, const SimplexPoint<double>& x,
                                       const ControlDesign& d) {
  return to_vec(controlled_velocity(to_eigen(a), to_eigen(x.shares()), d));
}

inline std::string closed_loop_label(double b) {
  std::ostringstream os;
  os << "closed-loop(" << b << ")";
  return os.str();
}

inline VectorField closed_loop_field(const PayoffMatrix<double>& a, const ControlDesign& d) {
  return {closed_loop_label(d.b),
          [m = to_eigen(a), d](const Vector5& x) { return controlled_velocity(m, x, d); }};
}

// ---------------------------------------------------------------------------
// Design report

inline nlohmann::json poles_to_json(const Poles& p) {
  auto out = nlohmann::json::array();
  for (const auto& z : p) out.push_back({z.real(), z.imag()});
  return out;
}

inline nlohmann::json design_report(const PayoffMatrix<double>& a, const ControlDesign& d) {
  const auto j = jacobian(open_loop_field(a), SimplexPoint<double>(d.anchor));
  const auto achieved = eigs(closed_loop_jacobian(j.entries, d.channel, d.gain)).values;
  double max_re = achieved[0].real();
  for (const auto& z : achieved) max_re = std::max(max_re, z.real());
  const char* stability = std::abs(max_re) < 1e-3 ? "marginal" : (max_re < 0 ? "stable" : "unstable");
  return {{"b", d.b},
          {"B", d.channel},
          {"K", d.gain},
          {"lambda_open", poles_to_json(d.lambda_open)},
          {"lambda_target", poles_to_json(d.lambda_target)},
          {"lambda_achieved", poles_to_json(achieved)},
          {"controllability_rank", d.controllability_rank},
          {"sign_convention", to_string(SignConvention::Plus)},
          {"max_real_part", max_re},
          {"stability", stability}};
}

}  // namespace eqsel
