#pragma once

/// \file maot/linsolve.hpp
/// \brief Matrix-free restarted GMRES, BiCG and a power-iteration probe.
///
/// Operators are referenced only through their action on a vector. Every
/// solver recomputes the true residual ||b - Ax|| / ||b|| on exit and stores
/// it in KrylovReport::final_residual.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maot/grid_field.hpp"

namespace maot {

using Vector = std::vector<double>;

/// A linear operator R^dim -> R^dim given by its action.
struct LinearMap {
  std::size_t dim = 0;
  std::function<void(std::span<const double> x, std::span<double> y)> apply;

  Vector operator()(std::span<const double> x) const {
    Vector y(dim);
    apply(x, y);
    return y;
  }
};

struct KrylovReport {
  bool converged = false;
  /// Outer (restart) cycles for GMRES; iterations for BiCG.
  std::size_t iterations = 0;
  /// Total Arnoldi steps (GMRES) or BiCG iterations.
  std::size_t inner_iterations = 0;
  /// True relative residual recomputed at exit.
  double final_residual = std::numeric_limits<double>::infinity();
  /// Residual predicted by the recurrence at exit.
  double recurrence_residual = std::numeric_limits<double>::infinity();
  /// Relative residual estimates, one per inner step (starting with the initial residual).
  std::vector<double> residual_history;
  std::optional<std::string> breakdown;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

/// Relative-residual scale, falling back to absolute for vanishing rhs.
inline double residual_scale(double bnorm) { return bnorm < 1e-300 ? 1.0 : bnorm; }

inline double true_residual(const LinearMap& A, std::span<const double> b,
                            std::span<const double> x, double scale) {
  Vector r = A(x);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = b[k] - r[k];
  return norm2(r) / scale;
}

inline void check_dims(const LinearMap& A, std::size_t b, std::size_t x0, const char* who) {
  if (!A.apply) throw Error(std::string(who) + ": operator has no action");
  if (b != A.dim || (x0 != 0 && x0 != A.dim))
    throw Error(std::string(who) + ": dimension mismatch");
}

}  // namespace detail

/// Restarted GMRES(m): Arnoldi with modified Gram-Schmidt and Givens rotations.
/// Stops once the relative residual is at most tol, or after max_outer cycles.
/// An empty x0 means a zero initial guess.
inline std::pair<Vector, KrylovReport> gmres_restarted(const LinearMap& A, std::span<const double> b,
                                                       std::size_t m, double tol,
                                                       std::size_t max_outer,
                                                       std::span<const double> x0 = {}) {
  detail::check_dims(A, b.size(), x0.size(), "gmres_restarted");
  if (m == 0) throw Error("gmres_restarted: restart length must be >= 1");
  const std::size_t P = A.dim;
  KrylovReport rep;
  Vector x = x0.empty() ? Vector(P, 0.0) : Vector(x0.begin(), x0.end());
  const double scale = detail::residual_scale(detail::norm2(b));

  std::vector<Vector> V(m + 1, Vector(P));
  std::vector<Vector> H(m + 1, Vector(m, 0.0));  // H[row][col]
  Vector cs(m), sn(m), g(m + 1), w(P);

  Vector r = A(x);
  for (std::size_t k = 0; k < P; ++k) r[k] = b[k] - r[k];
  double beta = detail::norm2(r);
  rep.residual_history.push_back(beta / scale);
  double cycle_start = beta / scale;

  if (beta / scale <= tol) {
    rep.converged = true;
    rep.final_residual = rep.recurrence_residual = beta / scale;
    return {std::move(x), std::move(rep)};
  }

  while (rep.iterations < max_outer) {
    ++rep.iterations;
    for (std::size_t k = 0; k < P; ++k) V[0][k] = r[k] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::size_t steps = 0;
    bool lucky = false;

    for (std::size_t j = 0; j < m; ++j) {
      A.apply(V[j], w);
      const double wnorm0 = detail::norm2(w);
      for (std::size_t i = 0; i <= j; ++i) {
        H[i][j] = detail::dot(w, V[i]);
        detail::axpy(-H[i][j], V[i], w);
      }
      H[j + 1][j] = detail::norm2(w);
      ++steps;
      ++rep.inner_iterations;

      for (std::size_t i = 0; i < j; ++i) {
        const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      const double denom = std::hypot(H[j][j], H[j + 1][j]);
      if (denom == 0.0) {
        rep.breakdown = "GMRES: singular Hessenberg column";
        --steps;
        break;
      }
      cs[j] = H[j][j] / denom;
      sn[j] = H[j + 1][j] / denom;
      const double hj1 = H[j + 1][j];
      H[j][j] = denom;
      H[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      rep.residual_history.push_back(std::abs(g[j + 1]) / scale);

      if (hj1 <= 1e-14 * std::max(wnorm0, std::numeric_limits<double>::min())) {
        lucky = true;  // invariant Krylov subspace
        break;
      }
      if (std::abs(g[j + 1]) / scale <= tol) break;
      for (std::size_t k = 0; k < P; ++k) V[j + 1][k] = w[k] / hj1;
    }

    // Back substitution on the triangularized Hessenberg system.
    Vector y(steps, 0.0);
    for (std::size_t ii = steps; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t kk = ii + 1; kk < steps; ++kk) s -= H[ii][kk] * y[kk];
      y[ii] = s / H[ii][ii];
    }
    for (std::size_t ii = 0; ii < steps; ++ii) detail::axpy(y[ii], V[ii], x);

    r = A(x);
    for (std::size_t k = 0; k < P; ++k) r[k] = b[k] - r[k];
    beta = detail::norm2(r);
    rep.final_residual = beta / scale;
    rep.recurrence_residual = steps > 0 ? std::abs(g[steps]) / scale : cycle_start;

    if (rep.final_residual <= tol) {
      rep.converged = true;
      if (lucky) rep.breakdown = "GMRES: Arnoldi breakdown (converged)";
      break;
    }
    if (lucky) {
      rep.breakdown = "GMRES: Arnoldi breakdown above tolerance";
      break;
    }
    if (rep.breakdown) break;
    if (cycle_start - rep.final_residual < 1e-14 * cycle_start) {
      rep.breakdown = "GMRES: stagnation over a restart cycle";
      break;
    }
    cycle_start = rep.final_residual;
  }
  if (rep.iterations == 0) rep.final_residual = beta / scale;
  return {std::move(x), std::move(rep)};
}

/// Classical (unpreconditioned) biconjugate gradient. The shadow residual
/// starts equal to the initial residual.
inline std::pair<Vector, KrylovReport> bicg(const LinearMap& A, const LinearMap& At,
                                            std::span<const double> b, double tol,
                                            std::size_t max_iter,
                                            std::span<const double> x0 = {}) {
  detail::check_dims(A, b.size(), x0.size(), "bicg");
  detail::check_dims(At, b.size(), x0.size(), "bicg (transpose)");
  const std::size_t P = A.dim;
  KrylovReport rep;
  Vector x = x0.empty() ? Vector(P, 0.0) : Vector(x0.begin(), x0.end());
  const double scale = detail::residual_scale(detail::norm2(b));

  Vector r = A(x);
  for (std::size_t k = 0; k < P; ++k) r[k] = b[k] - r[k];
  Vector rs = r, p = r, ps = r, q(P), qs(P);
  double rho = detail::dot(r, rs);
  double res = detail::norm2(r) / scale;
  rep.residual_history.push_back(res);

  while (res > tol && rep.iterations < max_iter) {
    const double rnorm = detail::norm2(r), rsnorm = detail::norm2(rs);
    if (std::abs(rho) <= 1e-300 || std::abs(rho) < 1e-15 * rnorm * rsnorm) {
      rep.breakdown = "BiCG: rho breakdown";
      break;
    }
    A.apply(p, q);
    At.apply(ps, qs);
    const double pq = detail::dot(q, ps);
    if (std::abs(pq) <= 1e-300 || std::abs(pq) < 1e-15 * detail::norm2(q) * detail::norm2(ps)) {
      rep.breakdown = "BiCG: alpha breakdown";
      break;
    }
    const double alpha = rho / pq;
    detail::axpy(alpha, p, x);
    detail::axpy(-alpha, q, r);
    detail::axpy(-alpha, qs, rs);
    const double rho_next = detail::dot(r, rs);
    const double beta = rho_next / rho;
    rho = rho_next;
    for (std::size_t k = 0; k < P; ++k) {
      p[k] = r[k] + beta * p[k];
      ps[k] = rs[k] + beta * ps[k];
    }
    ++rep.iterations;
    res = detail::norm2(r) / scale;
    rep.residual_history.push_back(res);
  }
  rep.inner_iterations = rep.iterations;
  rep.recurrence_residual = res;
  rep.final_residual = detail::true_residual(A, b, x, scale);
  rep.converged = rep.final_residual <= tol;
  return {std::move(x), std::move(rep)};
}

struct PowerReport {
  double radius = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> estimates;
};

/// Power iteration b_{k+1} = A b_k / ||A b_k|| from a seeded random start with
/// components in [0,1]. Converged once successive estimates of ||A b_k||
/// differ by at most tol relative to the current estimate.
inline PowerReport power_iteration(const LinearMap& A, double tol, std::size_t max_iter,
                                   std::uint64_t seed) {
  if (!A.apply) throw Error("power_iteration: operator has no action");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(A.dim);
  for (double& c : v) c = unif(rng);
  double nv = detail::norm2(v);
  for (double& c : v) c /= nv;

  PowerReport rep;
  Vector y(A.dim);
  double prev = std::numeric_limits<double>::quiet_NaN();
  while (rep.iterations < max_iter) {
    A.apply(v, y);
    ++rep.iterations;
    const double est = detail::norm2(y);
    rep.estimates.push_back(est);
    rep.radius = est;
    if (est == 0.0) throw Error("power_iteration: operator annihilates the iterate");
    for (std::size_t k = 0; k < A.dim; ++k) v[k] = y[k] / est;
    if (std::isfinite(prev) && std::abs(est - prev) <= tol * est) {
      rep.converged = true;
      break;
    }
    prev = est;
  }
  return rep;
}

}  // namespace maot
