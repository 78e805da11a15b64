#pragma once

// Reference values for the canonical game, used by `verify` and the tests.

#include <array>
#include <cmath>
#include <complex>

#include "eqsel/game.hpp"

namespace eqsel::reference {

using C = std::complex<double>;

inline const std::array<C, 5> kOpenLoopEigenvalues{C(-1.0 / 3, std::sqrt(3.0) / 3), C(-1.0 / 3, -std::sqrt(3.0) / 3),
                                                   C(-2.0 / 3, 0), C(-1, 0), C(-2, 0)};

/// Eigenvector columns at Nash_1, three decimals, same order as above.
inline const std::array<std::array<C, 5>, 5> kEigenvectors{{
    {C(-.289, -.5), C(-.289, .5), C(.577, 0), C(0, 0), C(0, 0)},
    {C(-.289, .5), C(-.289, -.5), C(.577, 0), C(0, 0), C(0, 0)},
    {C(.577, 0), C(.577, 0), C(.577, 0), C(0, 0), C(0, 0)},
    {C(.151, 0), C(-.030, 0), C(-.757, 0), C(.636, 0), C(0, 0)},
    {C(-.161, 0), C(-.462, 0), C(-.221, 0), C(0, 0), C(.844, 0)},
}};

struct GainRow {
  double b;
  Vec<double> k;
};

/// Feedback gains, four decimals.
inline const std::array<GainRow, 5> kGains{{
    {-0.8, {0.5247, 0.9485, -1.4732, -1.8335, 0.2335}},
    {-0.4, {0.3834, 0.2623, -0.6458, -0.8476, 0.0476}},
    {0.0, {0, 0, 0, 0, 0}},
    {0.4, {-0.6256, 0.1614, 0.4641, 0.7092, 0.0908}},
    {0.8, {-1.4933, 0.7467, 0.7467, 1.28, 0.32}},
}};

/// Sessions per treatment, b ascending.
inline constexpr std::array<int, 5> kSessionCounts{8, 8, 8, 12, 12};

}  // namespace eqsel::reference
