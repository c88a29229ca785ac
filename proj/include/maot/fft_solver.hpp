#pragma once

/// \file maot/fft_solver.hpp
/// \brief Spectral solution of the linearized Monge-Ampere equation.
///
/// The variable-coefficient operator L is preconditioned by its averaged,
/// constant-coefficient counterpart Lbar. GMRES solves L Lbar^{-1} sigma = rhs
/// on the mean-zero subspace and theta = Lbar^{-1} sigma is recovered with one
/// more inverse transform.
///
/// Transform convention: the forward transform is unnormalized, the inverse
/// carries 1/n^2. Wavenumbers follow the usual layout (0..n/2-1, then -n/2..-1).
/// At the Nyquist index k = -n/2 every odd multiplier (first derivatives and
/// the mixed second derivative) is zeroed so that real fields map to real fields.

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <fftw3.h>

#include "maot/grid_field.hpp"
#include "maot/linearized.hpp"
#include "maot/linsolve.hpp"

namespace maot {

using Complex = std::complex<double>;

/// Simpson averages of the linearized coefficients.
struct AveragedOperator {
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
};

inline AveragedOperator average_coefficients(const LinearizedCoefficients& c) {
  return {simpson_average(c.a11), simpson_average(c.a12), simpson_average(c.a22),
          simpson_average(c.b1), simpson_average(c.b2)};
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Signed wavenumber of transform index i on an n-point axis.
inline long wavenumber(std::size_t i, std::size_t n) {
  return i < n / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(n);
}

/// Wavenumber used in odd-order multipliers: zero at the Nyquist index.
inline double odd_wavenumber(std::size_t i, std::size_t n) {
  return (n % 2 == 0 && i == n / 2) ? 0.0 : static_cast<double>(wavenumber(i, n));
}

/// Inverse symbol 1 / (sum a_ij (2 pi i k_i)(2 pi i k_j) + sum b_i 2 pi i k_i) of
/// the averaged operator, zero where the denominator vanishes (always at k = 0).
struct FourierSymbol {
  PeriodicGrid grid;
  std::vector<Complex> rho_bar;

  Complex operator()(std::size_t i, std::size_t j) const { return rho_bar[grid.index(i, j)]; }
};

inline FourierSymbol build_symbol(const AveragedOperator& op, const PeriodicGrid& grid) {
  constexpr double two_pi = 2.0 * 3.14159265358979323846;
  const std::size_t n = grid.n();
  FourierSymbol s{grid, std::vector<Complex>(grid.size())};
  for (std::size_t i = 0; i < n; ++i) {
    const double k1 = static_cast<double>(wavenumber(i, n));
    const double o1 = odd_wavenumber(i, n);
    for (std::size_t j = 0; j < n; ++j) {
      const double k2 = static_cast<double>(wavenumber(j, n));
      const double o2 = odd_wavenumber(j, n);
      const double re = -two_pi * two_pi * (op.a11 * k1 * k1 + 2.0 * op.a12 * o1 * o2 + op.a22 * k2 * k2);
      const double im = two_pi * (op.b1 * o1 + op.b2 * o2);
      const Complex denom(re, im);
      s.rho_bar[grid.index(i, j)] = (re == 0.0 && im == 0.0) ? Complex(0.0) : 1.0 / denom;
    }
  }
  return s;
}

namespace detail {

/// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer make_fftw_buffer(std::size_t count) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count));
  if (!p) throw Error("fftw_malloc failed");
  return FftwBuffer(p);
}

class FftwPlan {
 public:
  FftwPlan(std::size_t n, fftw_complex* in, fftw_complex* out, int sign) {
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), in, out, sign, FFTW_ESTIMATE);
    if (!plan_) throw Error("fftw_plan_dft_2d failed");
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;

  void execute(fftw_complex* in, fftw_complex* out) const { fftw_execute_dft(plan_, in, out); }

 private:
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

/// Owns transform plans and scratch buffers for one grid size.
class FftSolver final : public LinearizedSolver {
 public:
  explicit FftSolver(PeriodicGrid grid)
      : grid_(grid),
        spectrum_(detail::make_fftw_buffer(grid.size())),
        work_(detail::make_fftw_buffer(grid.size())),
        forward_(grid.n(), work_.get(), spectrum_.get(), FFTW_FORWARD),
        backward_(grid.n(), spectrum_.get(), work_.get(), FFTW_BACKWARD),
        scratch_(detail::make_fftw_buffer(grid.size())) {
    if (!is_power_of_two(grid.n()) || grid.n() < 8)
      throw Error("FftSolver: n must be a power of two >= 8, got " + std::to_string(grid.n()));
  }

  Backend backend() const override { return Backend::fft; }
  const PeriodicGrid& grid() const { return grid_; }

  /// Unnormalized forward transform of a real field.
  std::vector<Complex> forward(const ScalarField& f) {
    check_grid(f.grid());
    for (std::size_t k = 0; k < f.size(); ++k) {
      work_[k][0] = f[k];
      work_[k][1] = 0.0;
    }
    forward_.execute(work_.get(), spectrum_.get());
    std::vector<Complex> out(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = {spectrum_[k][0], spectrum_[k][1]};
    return out;
  }

  /// Real part of the inverse transform (with 1/n^2) of multiplier(k) * spectrum(k).
  template <class Multiplier>
  ScalarField inverse(const std::vector<Complex>& spectrum, Multiplier&& multiplier) {
    const std::size_t n = grid_.n();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = grid_.index(i, j);
        const Complex v = multiplier(i, j) * spectrum[k];
        scratch_[k][0] = v.real();
        scratch_[k][1] = v.imag();
      }
    backward_.execute(scratch_.get(), work_.get());
    const double norm = 1.0 / static_cast<double>(grid_.size());
    ScalarField out(grid_);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = work_[k][0] * norm;
      last_max_imag_ = std::max(last_max_imag_, std::abs(work_[k][1] * norm));
    }
    return out;
  }

  /// theta = sum_{k != 0} rho_bar(k) sigma_hat(k) e^{2 pi i k.x}.
  ScalarField solve_constant(const FourierSymbol& symbol, const ScalarField& sigma) {
    last_max_imag_ = 0.0;
    const auto spec = forward(sigma);
    return inverse(spec, [&](std::size_t i, std::size_t j) { return symbol(i, j); });
  }

  /// L Lbar^{-1} sigma = sum_ij a_ij alpha_ij + sum_i b_i beta_i. alpha_12 and
  /// alpha_21 coincide, so five inverse transforms cover the six products.
  ScalarField apply_preconditioned(const LinearizedCoefficients& c, const FourierSymbol& symbol,
                                   const ScalarField& sigma) {
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    check_grid(sigma.grid());
    last_max_imag_ = 0.0;
    const std::size_t n = grid_.n();
    const auto spec = forward(sigma);
    auto k1 = [n](std::size_t i) { return static_cast<double>(wavenumber(i, n)); };
    auto o = [n](std::size_t i) { return odd_wavenumber(i, n); };
    const Complex I(0.0, 1.0);

    const ScalarField a11 = inverse(spec, [&](std::size_t i, std::size_t j) {
      return -two_pi * two_pi * k1(i) * k1(i) * symbol(i, j);
    });
    const ScalarField a22 = inverse(spec, [&](std::size_t i, std::size_t j) {
      return -two_pi * two_pi * k1(j) * k1(j) * symbol(i, j);
    });
    const ScalarField a12 = inverse(spec, [&](std::size_t i, std::size_t j) {
      return -two_pi * two_pi * o(i) * o(j) * symbol(i, j);
    });
    const ScalarField b1 = inverse(spec, [&](std::size_t i, std::size_t j) {
      return two_pi * o(i) * I * symbol(i, j);
    });
    const ScalarField b2 = inverse(spec, [&](std::size_t i, std::size_t j) {
      return two_pi * o(j) * I * symbol(i, j);
    });

    ScalarField out(grid_);
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k] = c.a11[k] * a11[k] + 2.0 * c.a12[k] * a12[k] + c.a22[k] * a22[k] +
               c.b1[k] * b1[k] + c.b2[k] * b2[k];
    return out;
  }

  /// Spectral L theta (every derivative taken in Fourier space).
  ScalarField apply_spectral(const LinearizedCoefficients& c, const ScalarField& theta) {
    // L Lbar^{-1} applied to Lbar theta, with Lbar the Laplacian.
    const AveragedOperator lap{1.0, 0.0, 1.0, 0.0, 0.0};
    const FourierSymbol lap_symbol = build_symbol(lap, grid_);
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    const std::size_t n = grid_.n();
    const auto spec = forward(theta);
    const ScalarField lap_theta = inverse(spec, [&](std::size_t i, std::size_t j) {
      const double a = static_cast<double>(wavenumber(i, n));
      const double b = static_cast<double>(wavenumber(j, n));
      return Complex(-two_pi * two_pi * (a * a + b * b));
    });
    return apply_preconditioned(c, lap_symbol, lap_theta);
  }

  LinearSolveResult solve(const LinearizedCoefficients& coeffs, const ScalarField& rhs,
                          const InnerSolverConfig& cfg) override {
    check_grid(rhs.grid());
    const FourierSymbol symbol = build_symbol(average_coefficients(coeffs), grid_);
    const ScalarField b = zero_mean(rhs);

    LinearMap op{grid_.size(), [&](std::span<const double> x, std::span<double> y) {
                   ScalarField sigma(grid_, std::vector<double>(x.begin(), x.end()));
                   const ScalarField out = zero_mean(apply_preconditioned(coeffs, symbol, zero_mean(sigma)));
                   std::copy(out.values().begin(), out.values().end(), y.begin());
                 }};
    auto [sigma, report] = gmres_restarted(op, b.values(), cfg.gmres_restart, cfg.tol, cfg.max_iter);
    ScalarField theta = solve_constant(symbol, ScalarField(grid_, std::move(sigma)));
    return {zero_mean(std::move(theta)), std::move(report)};
  }

  /// The map b -> theta solving L theta = b - mean(b), for spectral-radius probes.
  LinearMap inverse_operator(const LinearizedCoefficients& coeffs, InnerSolverConfig cfg) {
    return {grid_.size(), [this, &coeffs, cfg](std::span<const double> x, std::span<double> y) {
              const ScalarField rhs(grid_, std::vector<double>(x.begin(), x.end()));
              const ScalarField theta = solve(coeffs, rhs, cfg).theta;
              std::copy(theta.values().begin(), theta.values().end(), y.begin());
            }};
  }

  /// Largest |imaginary part| produced by inverse transforms since the last
  /// top-level apply_preconditioned / solve_constant call.
  double last_max_imag() const { return last_max_imag_; }

 private:
  void check_grid(const PeriodicGrid& g) const {
    if (!(g == grid_)) throw Error("FftSolver: field grid does not match solver grid");
  }

  PeriodicGrid grid_;
  detail::FftwBuffer spectrum_;
  detail::FftwBuffer work_;
  detail::FftwPlan forward_;
  detail::FftwPlan backward_;
  detail::FftwBuffer scratch_;
  double last_max_imag_ = 0.0;
};

}  // namespace maot
