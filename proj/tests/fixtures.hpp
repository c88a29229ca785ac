#pragma once

// Deterministic inputs shared by several test files.

#include <cmath>
#include <numbers>
#include <random>

#include "maot/linearized.hpp"

namespace fixture {

constexpr double pi = std::numbers::pi;

/// Smooth, variable, uniformly elliptic coefficients in divergence form,
/// b_i = d_j a_ij, so L theta = div(a grad theta) and mean-zero right-hand
/// sides lie in the range of L (as for the Monge-Ampere linearization).
inline maot::LinearizedCoefficients generic_coefficients(const maot::PeriodicGrid& g) {
  using maot::ScalarField;
  auto f = [&](auto fn) { return ScalarField::from_function(g, fn); };
  return {f([](double x, double y) { return 1.0 + 0.3 * std::sin(2 * pi * x) * std::cos(2 * pi * y); }),
          f([](double x, double y) { return 0.1 * std::sin(2 * pi * (x + y)); }),
          f([](double x, double) { return 1.2 + 0.2 * std::cos(2 * pi * x); }),
          f([](double x, double y) {
            return 0.6 * pi * std::cos(2 * pi * x) * std::cos(2 * pi * y) + 0.2 * pi * std::cos(2 * pi * (x + y));
          }),
          f([](double x, double y) { return 0.2 * pi * std::cos(2 * pi * (x + y)); })};
}

/// Same second-order part with a drift that is not a divergence: L has a
/// range that is not the mean-zero subspace.
inline maot::LinearizedCoefficients nondivergence_coefficients(const maot::PeriodicGrid& g) {
  auto c = generic_coefficients(g);
  c.b1 = maot::ScalarField::from_function(g, [](double, double y) { return 0.5 * std::cos(2 * pi * y); });
  c.b2 = maot::ScalarField::from_function(g, [](double x, double) { return -0.3 * std::sin(2 * pi * x); });
  return c;
}

inline maot::ScalarField random_field(const maot::PeriodicGrid& g, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  maot::ScalarField out(g);
  for (double& v : out.values()) v = d(rng);
  return out;
}

/// Smooth mean-zero right-hand side.
inline maot::ScalarField smooth_rhs(const maot::PeriodicGrid& g) {
  return maot::ScalarField::from_function(g, [](double x, double y) {
    return std::sin(2 * pi * x) * std::cos(2 * pi * y) + 0.5 * std::cos(4 * pi * y + 0.3);
  });
}

}  // namespace fixture
