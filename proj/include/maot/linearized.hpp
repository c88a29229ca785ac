#pragma once

/// \file maot/linearized.hpp
/// \brief Coefficients of the linearized Monge-Ampere operator
///   L theta = a11 theta_11 + 2 a12 theta_12 + a22 theta_22 + b1 theta_1 + b2 theta_2
/// and the interface shared by the spectral and finite-difference backends.

#include <cstddef>
#include <string>
#include <utility>

#include "maot/grid_field.hpp"
#include "maot/linsolve.hpp"

namespace maot {

struct LinearizedCoefficients {
  ScalarField a11, a12, a22;
  ScalarField b1, b2;

  const PeriodicGrid& grid() const { return a11.grid(); }

  /// a11 = a22 = 1, a12 = b = 0: the Laplacian.
  static LinearizedCoefficients laplacian(PeriodicGrid grid) {
    return {ScalarField(grid, 1.0), ScalarField(grid, 0.0), ScalarField(grid, 1.0),
            ScalarField(grid, 0.0), ScalarField(grid, 0.0)};
  }

  /// Spatially constant coefficients.
  static LinearizedCoefficients constant(PeriodicGrid grid, double a11, double a12, double a22,
                                         double b1, double b2) {
    return {ScalarField(grid, a11), ScalarField(grid, a12), ScalarField(grid, a22),
            ScalarField(grid, b1), ScalarField(grid, b2)};
  }
};

/// Matrix-free L theta with centered stencils of the given order.
inline ScalarField apply_linearized(const LinearizedCoefficients& c, const ScalarField& theta,
                                    int order) {
  c.a11.check_same_grid(theta);
  const ScalarField t11 = diff_second(theta, SecondAxis::x1x1, order);
  const ScalarField t22 = diff_second(theta, SecondAxis::x2x2, order);
  const ScalarField t12 = diff_second(theta, SecondAxis::mixed, order);
  const ScalarField t1 = diff_first(theta, Axis::x1, order);
  const ScalarField t2 = diff_first(theta, Axis::x2, order);
  ScalarField out(theta.grid());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = c.a11[k] * t11[k] + 2.0 * c.a12[k] * t12[k] + c.a22[k] * t22[k] +
             c.b1[k] * t1[k] + c.b2[k] * t2[k];
  return out;
}

enum class Backend { fft, fd };

inline std::string to_string(Backend b) { return b == Backend::fft ? "fft" : "fd"; }

struct InnerSolverConfig {
  double tol = 1e-4;
  std::size_t max_iter = 1000;  // GMRES: outer cycles; BiCG: iterations
  std::size_t gmres_restart = 10;
};

struct LinearSolveResult {
  ScalarField theta;
  KrylovReport report;
};

/// Solves L theta = rhs for zero-mean theta. Implementations own their scratch
/// state and are not shareable across threads during a solve.
class LinearizedSolver {
 public:
  virtual ~LinearizedSolver() = default;
  virtual LinearSolveResult solve(const LinearizedCoefficients& coeffs, const ScalarField& rhs,
                                  const InnerSolverConfig& cfg) = 0;
  virtual Backend backend() const = 0;
};

}  // namespace maot
