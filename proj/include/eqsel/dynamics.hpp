#pragma once

// Replicator vector field, finite-difference Jacobian, ordered complex
// eigendecomposition and fixed-step RK4 integration.

#include <algorithm>
#include <complex>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqsel/game.hpp"

namespace eqsel {

using Vector5 = Eigen::Matrix<double, 5, 1>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;
using CVector5 = Eigen::Matrix<std::complex<double>, 5, 1>;
using CMatrix5 = Eigen::Matrix<std::complex<double>, 5, 5>;

inline Vector5 to_eigen(const Vec<double>& v) {
  Vector5 out;
  for (std::size_t i = 0; i < kStrategies; ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline Vec<double> to_vec(const Vector5& v) {
  Vec<double> out{};
  for (std::size_t i = 0; i < kStrategies; ++i) out[i] = v(static_cast<Eigen::Index>(i));
  return out;
}

inline Matrix5 to_eigen(const PayoffMatrix<double>& a) {
  Matrix5 m;
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) m(i, j) = a(std::size_t(i), std::size_t(j));
  return m;
}

/// Matrix of the relabeling v' = P v, i.e. P(k, pi(k)) = 1.
inline Matrix5 permutation_matrix(const StrategyPermutation& pi) {
  Matrix5 p = Matrix5::Zero();
  for (std::size_t k = 0; k < kStrategies; ++k) p(Eigen::Index(k), Eigen::Index(pi(k))) = 1.0;
  return p;
}

// ---------------------------------------------------------------------------
// Vector fields

/// x_i ((Ax)_i - x'Ax), evaluated in ambient 5-space.
inline Vector5 replicator_velocity(const Matrix5& a, const Vector5& x) {
  const Vector5 ax = a * x;
  const double mean = x.dot(ax);
  return x.cwiseProduct(ax - Vector5::Constant(mean));
}

inline Vec<double> replicator_velocity(const PayoffMatrix<double>& a, const SimplexPoint<double>& x) {
  return to_vec(replicator_velocity(to_eigen(a), to_eigen(x.shares())));
}

/// Closed-form derivative of the replicator field.
inline Matrix5 replicator_jacobian_analytic(const Matrix5& a, const Vector5& x) {
  const Vector5 ax = a * x;
  const double mean = x.dot(ax);
  const Vector5 grad_mean = (a + a.transpose()) * x;
  Matrix5 j = x.asDiagonal() * a;
  j -= x * grad_mean.transpose();
  j.diagonal() += ax - Vector5::Constant(mean);
  return j;
}

struct VectorField {
  std::string label;
  std::function<Vector5(const Vector5&)> eval;

  Vector5 operator()(const Vector5& x) const { return eval(x); }
};

inline VectorField open_loop_field(const PayoffMatrix<double>& a) {
  return {"open-loop", [m = to_eigen(a)](const Vector5& x) { return replicator_velocity(m, x); }};
}

/// f(x) = M x; used to check the differentiator.
inline VectorField linear_field(const Matrix5& m) {
  return {"linear", [m](const Vector5& x) -> Vector5 { return m * x; }};
}

/// Flow followed by the renormalizing integrator in the small-step limit:
/// f(x) - x * sum(f(x)). It keeps the simplex invariant.
inline VectorField projected_field(const VectorField& f) {
  return {f.label + " (projected)", [f](const Vector5& x) -> Vector5 { return f(x) - x * f(x).sum(); }};
}

// ---------------------------------------------------------------------------
// Jacobian

inline constexpr double kDefaultJacobianStep = 1e-6;

struct JacobianMatrix {
  Matrix5 entries;
  Vector5 base_point;
  double step = kDefaultJacobianStep;
};

/// Central differences in ambient space; perturbed points are not projected
/// back onto the simplex.
inline JacobianMatrix jacobian(const VectorField& f, const Vector5& x0, double h = kDefaultJacobianStep) {
  if (!(h > 0)) throw InvalidArgument("finite-difference step must be positive");
  if (h < 1e-8 || h > 1e-3) throw InvalidArgument("finite-difference step must lie in [1e-8, 1e-3]");
  JacobianMatrix out{Matrix5::Zero(), x0, h};
  for (Eigen::Index j = 0; j < 5; ++j) {
    Vector5 plus = x0, minus = x0;
    plus(j) += h;
    minus(j) -= h;
    out.entries.col(j) = (f(plus) - f(minus)) / (2.0 * h);
  }
  if (!out.entries.allFinite()) throw Error("jacobian has non-finite entries");
  return out;
}

inline JacobianMatrix jacobian(const VectorField& f, const SimplexPoint<double>& x0,
                               double h = kDefaultJacobianStep) {
  return jacobian(f, to_eigen(x0.shares()), h);
}

// ---------------------------------------------------------------------------
// Spectrum

class EigenSolveError : public Error {
 public:
  using Error::Error;
};

/// Eigenpairs ordered by descending real part, ties by descending imaginary
/// part. Eigenvectors are unit-norm with their largest-magnitude component
/// (first one on ties) rotated onto the positive real axis.
struct Spectrum {
  std::array<std::complex<double>, kStrategies> values{};
  std::array<CVector5, kStrategies> vectors{};

  double max_real() const {
    double m = values[0].real();
    for (const auto& v : values) m = std::max(m, v.real());
    return m;
  }
};

namespace detail {
inline constexpr double kOrderTol = 1e-9;

inline CVector5 normalize_phase(CVector5 v) {
  v /= v.norm();
  double best = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) best = std::max(best, std::abs(v(i)));
  for (Eigen::Index i = 0; i < 5; ++i) {
    if (std::abs(v(i)) >= best - kOrderTol) {
      const auto phase = v(i) / std::abs(v(i));
      v /= phase;
      v(i) = std::complex<double>(std::abs(v(i)), 0.0);
      break;
    }
  }
  return v;
}

/// Indices of `values` in canonical order.
inline std::vector<std::size_t> canonical_order(const std::array<std::complex<double>, 5>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a].real() > values[b].real(); });
  // Within runs of (numerically) equal real parts, order by imaginary part.
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start + 1;
    while (end < idx.size() &&
           values[idx[start]].real() - values[idx[end]].real() <= kOrderTol)
      ++end;
    std::stable_sort(idx.begin() + long(start), idx.begin() + long(end),
                     [&](std::size_t a, std::size_t b) { return values[a].imag() > values[b].imag(); });
    start = end;
  }
  return idx;
}
}  // namespace detail

inline Spectrum eigs(const Matrix5& j) {
  if (!j.allFinite()) throw InvalidArgument("matrix has non-finite entries");
  Eigen::EigenSolver<Matrix5> es(j, true);
  if (es.info() != Eigen::Success) throw EigenSolveError("eigen decomposition did not converge");
  std::array<std::complex<double>, 5> raw{};
  for (Eigen::Index i = 0; i < 5; ++i) raw[std::size_t(i)] = es.eigenvalues()(i);
  const auto order = detail::canonical_order(raw);
  Spectrum s;
  for (std::size_t k = 0; k < 5; ++k) {
    s.values[k] = raw[order[k]];
    s.vectors[k] = detail::normalize_phase(es.eigenvectors().col(Eigen::Index(order[k])));
  }
  return s;
}

inline Spectrum eigs(const JacobianMatrix& j) { return eigs(j.entries); }

/// Eigenvalues only, canonical order.
inline std::array<std::complex<double>, 5> eigenvalues(const Matrix5& j) { return eigs(j).values; }

/// Orthonormal basis of the tangent space {v : sum(v) = 0}, as columns.
inline Eigen::Matrix<double, 5, 4> tangent_basis() {
  const Eigen::HouseholderQR<Matrix5> qr(Matrix5::Ones());
  const Matrix5 q = qr.householderQ();
  return q.rightCols<4>();
}

/// Eigenvalues of j restricted to the tangent space, descending real part.
/// Only meaningful when j maps that space into itself.
inline std::array<std::complex<double>, 4> tangent_eigenvalues(const Matrix5& j) {
  const auto v = tangent_basis();
  const Eigen::Matrix4d m = v.transpose() * j * v;
  Eigen::EigenSolver<Eigen::Matrix4d> es(m, false);
  if (es.info() != Eigen::Success) throw EigenSolveError("eigen decomposition did not converge");
  std::array<std::complex<double>, 4> out{};
  for (Eigen::Index i = 0; i < 4; ++i) out[std::size_t(i)] = es.eigenvalues()(i);
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Integration

class IntegrationBlowUp : public Error {
 public:
  using Error::Error;
};

struct Trajectory {
  double dt = 0.0;
  std::vector<Vector5> points;

  double time(std::size_t step) const { return static_cast<double>(step) * dt; }
};

inline constexpr double kDefaultDt = 0.01;

/// Classical RK4. With `renormalize`, each step clips negative components to
/// zero and rescales to unit sum.
inline Trajectory integrate(const VectorField& f, const Vector5& x0, double dt, int steps, bool renormalize) {
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  if (steps < 1) throw InvalidArgument("steps must be at least 1");
  Trajectory tr{dt, {}};
  tr.points.reserve(std::size_t(steps) + 1);
  tr.points.push_back(x0);
  Vector5 x = x0;
  for (int s = 0; s < steps; ++s) {
    const Vector5 k1 = f(x);
    const Vector5 k2 = f(x + 0.5 * dt * k1);
    const Vector5 k3 = f(x + 0.5 * dt * k2);
    const Vector5 k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (renormalize) {
      x = x.cwiseMax(0.0);
      const double sum = x.sum();
      if (!(sum > 0)) throw IntegrationBlowUp("trajectory collapsed to the zero vector");
      x /= sum;
    }
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 10.0)
      throw IntegrationBlowUp("trajectory left the bounded region at step " + std::to_string(s + 1));
    tr.points.push_back(x);
  }
  return tr;
}

inline Trajectory integrate(const VectorField& f, const SimplexPoint<double>& x0, double dt, int steps,
                            bool renormalize) {
  return integrate(f, to_eigen(x0.shares()), dt, steps, renormalize);
}

/// CSV with header t,x1..x5 and 12 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,x1,x2,x3,x4,x5\n";
  std::ostringstream line;
  line << std::setprecision(12);
  for (std::size_t k = 0; k < tr.points.size(); ++k) {
    line.str("");
    line << tr.time(k);
    for (Eigen::Index i = 0; i < 5; ++i) line << ',' << tr.points[k](i);
    os << line.str() << '\n';
  }
}

}  // namespace eqsel
