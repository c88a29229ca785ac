#pragma once

/// \file maot/synthetic.hpp
/// \brief Trigonometric benchmark with a known potential:
///   u(x) = (1/k) cos(2 pi gamma x1) sin(2 pi gamma x2)
///   g(x) = 1 + alpha cos(2 pi rho x1) cos(2 pi rho x2)
/// and f = g(x + grad u) det(I + D^2 u) evaluated in closed form.

#include <array>
#include <cmath>

#include "maot/grid_field.hpp"
#include "maot/ma_core.hpp"

namespace maot {

struct SyntheticProblem {
  // k = 80 keeps |D^2 u| <= 4 pi^2 / 80 ~ 0.49, so I + D^2 u stays uniformly
  // positive definite.
  double k = 80.0;
  double gamma = 1.0;
  double alpha = 0.5;
  double rho = 1.0;

  static constexpr double two_pi = 2.0 * 3.14159265358979323846;

  double u(double x1, double x2) const {
    return std::cos(two_pi * gamma * x1) * std::sin(two_pi * gamma * x2) / k;
  }
  std::array<double, 2> grad_u(double x1, double x2) const {
    const double w = two_pi * gamma;
    return {-w / k * std::sin(w * x1) * std::sin(w * x2), w / k * std::cos(w * x1) * std::cos(w * x2)};
  }
  /// Hessian entries (u11, u12, u22).
  std::array<double, 3> hess_u(double x1, double x2) const {
    const double w = two_pi * gamma;
    const double diag = -w * w / k * std::cos(w * x1) * std::sin(w * x2);
    return {diag, -w * w / k * std::sin(w * x1) * std::cos(w * x2), diag};
  }

  double g(double y1, double y2) const {
    const double w = two_pi * rho;
    return 1.0 + alpha * std::cos(w * y1) * std::cos(w * y2);
  }
  std::array<double, 2> grad_g(double y1, double y2) const {
    const double w = two_pi * rho;
    return {-alpha * w * std::sin(w * y1) * std::cos(w * y2), -alpha * w * std::cos(w * y1) * std::sin(w * y2)};
  }

  double f(double x1, double x2) const {
    const auto du = grad_u(x1, x2);
    const auto h = hess_u(x1, x2);
    const double det = (1.0 + h[0]) * (1.0 + h[2]) - h[1] * h[1];
    return g(x1 + du[0], x2 + du[1]) * det;
  }

  AnalyticDensity target() const {
    const SyntheticProblem p = *this;
    return {[p](double a, double b) { return p.g(a, b); },
            [p](double a, double b) { return p.grad_g(a, b); }};
  }

  ScalarField exact_potential(const PeriodicGrid& grid) const {
    return ScalarField::from_function(grid, [this](double a, double b) { return u(a, b); });
  }
  ScalarField source_density(const PeriodicGrid& grid) const {
    return ScalarField::from_function(grid, [this](double a, double b) { return f(a, b); });
  }
  ScalarField target_density(const PeriodicGrid& grid) const {
    return ScalarField::from_function(grid, [this](double a, double b) { return g(a, b); });
  }
};

}  // namespace maot
