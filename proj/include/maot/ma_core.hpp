#pragma once

/// \file maot/ma_core.hpp
/// \brief Monge-Ampere forward operator M(u) = g(x + grad u) det(I + D^2 u),
/// its linearization, mass renormalization and the damped Newton driver.
///
/// u is the periodic perturbation of the convex potential |x|^2/2 + u. All
/// derivatives of u use fourth-order centered stencils.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maot/fd_solver.hpp"
#include "maot/fft_solver.hpp"
#include "maot/grid_field.hpp"
#include "maot/linearized.hpp"

namespace maot {

/// Something that can be evaluated, together with its gradient, anywhere on R^2.
template <class T>
concept TargetDensity = requires(const T& t, double x1, double x2) {
  { t.value(x1, x2) } -> std::convertible_to<double>;
  { t.gradient(x1, x2) } -> std::convertible_to<std::array<double, 2>>;
};

/// Target density known in closed form; compositions are evaluated exactly.
struct AnalyticDensity {
  std::function<double(double, double)> fn;
  std::function<std::array<double, 2>(double, double)> grad;

  double value(double x1, double x2) const { return fn(x1, x2); }
  std::array<double, 2> gradient(double x1, double x2) const { return grad(x1, x2); }
};

/// Grid-sampled target density. The gradient is taken with fourth-order
/// stencils on the grid, and both are interpolated at off-grid points.
class SampledDensity {
 public:
  SampledDensity(ScalarField g, SampleMode mode)
      : g_(std::move(g)), grad_(maot::gradient(g_, 4)), mode_(mode) {}

  double value(double x1, double x2) const { return sample(g_, x1, x2, mode_); }
  std::array<double, 2> gradient(double x1, double x2) const {
    return {sample(grad_.x1, x1, x2, mode_), sample(grad_.x2, x1, x2, mode_)};
  }
  const ScalarField& field() const { return g_; }
  SampleMode mode() const { return mode_; }

 private:
  ScalarField g_;
  VectorField grad_;
  SampleMode mode_;
};

static_assert(TargetDensity<AnalyticDensity>);
static_assert(TargetDensity<SampledDensity>);

/// Source and target densities on a common grid, positive and of unit mean.
struct DensityPair {
  ScalarField f;
  ScalarField g;

  /// Validates grids and mean; values below `floor` are raised to it and the
  /// pair renormalized to unit mean.
  static DensityPair make(ScalarField f, ScalarField g, double floor = 1e-8) {
    f.check_same_grid(g);
    if (!(floor > 0.0)) throw Error("DensityPair: floor must be positive");
    auto fix = [floor](ScalarField& d, const char* name) {
      if (!d.all_finite()) throw Error(std::string("DensityPair: non-finite values in ") + name);
      for (double& v : d.values()) v = std::max(v, floor);
      const double m = mean(d);
      d *= 1.0 / m;
    };
    fix(f, "f");
    fix(g, "g");
    return {std::move(f), std::move(g)};
  }
};

/// First and second derivatives of u on the grid.
struct PotentialDerivatives {
  ScalarField u1, u2, u11, u12, u22;

  explicit PotentialDerivatives(const ScalarField& u, int order = 4)
      : u1(diff_first(u, Axis::x1, order)),
        u2(diff_first(u, Axis::x2, order)),
        u11(diff_second(u, SecondAxis::x1x1, order)),
        u12(diff_second(u, SecondAxis::mixed, order)),
        u22(diff_second(u, SecondAxis::x2x2, order)) {}

  double det(std::size_t k) const { return (1.0 + u11[k]) * (1.0 + u22[k]) - u12[k] * u12[k]; }
};

template <TargetDensity Target>
ScalarField evaluate_forward(const PotentialDerivatives& d, const Target& g) {
  const PeriodicGrid& grid = d.u1.grid();
  const std::size_t n = grid.n();
  ScalarField out(grid);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = grid.index(i, j);
      out[k] = g.value(grid.coord(i) + d.u1[k], grid.coord(j) + d.u2[k]) * d.det(k);
    }
  return out;
}

/// f_n(x) = g(x + grad u(x)) det(I + D^2 u(x)).
template <TargetDensity Target>
ScalarField evaluate_forward(const ScalarField& u, const Target& g) {
  return evaluate_forward(PotentialDerivatives(u), g);
}

inline ScalarField evaluate_forward(const ScalarField& u, const ScalarField& g, SampleMode mode) {
  u.check_same_grid(g);
  return evaluate_forward(u, SampledDensity(g, mode));
}

/// Coefficients of D_u M: a = g(x + grad u) Adj(I + D^2 u),
/// b = det(I + D^2 u) (grad g)(x + grad u). With drop_first_order the b terms
/// are zeroed, giving the simplified update equation.
template <TargetDensity Target>
LinearizedCoefficients build_linearization(const PotentialDerivatives& d, const Target& g,
                                           bool drop_first_order = false) {
  const PeriodicGrid& grid = d.u1.grid();
  const std::size_t n = grid.n();
  LinearizedCoefficients c{ScalarField(grid), ScalarField(grid), ScalarField(grid),
                           ScalarField(grid), ScalarField(grid)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = grid.index(i, j);
      const double y1 = grid.coord(i) + d.u1[k];
      const double y2 = grid.coord(j) + d.u2[k];
      const double gv = g.value(y1, y2);
      c.a11[k] = gv * (1.0 + d.u22[k]);
      c.a22[k] = gv * (1.0 + d.u11[k]);
      c.a12[k] = -gv * d.u12[k];
      if (!drop_first_order) {
        const auto dg = g.gradient(y1, y2);
        const double det = d.det(k);
        c.b1[k] = det * dg[0];
        c.b2[k] = det * dg[1];
      }
    }
  return c;
}

template <TargetDensity Target>
LinearizedCoefficients build_linearization(const ScalarField& u, const Target& g,
                                           bool drop_first_order = false) {
  return build_linearization(PotentialDerivatives(u), g, drop_first_order);
}

inline LinearizedCoefficients build_linearization(const ScalarField& u, const ScalarField& g,
                                                  SampleMode mode) {
  u.check_same_grid(g);
  return build_linearization(u, SampledDensity(g, mode));
}

/// f_n - mean(f_n) + 1.
inline ScalarField normalize_density(ScalarField fn) {
  fn += 1.0 - mean(fn);
  return fn;
}

struct ConvexityCheck {
  bool positive_definite = true;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
};

/// Tests I + D^2 u for positive definiteness at every node.
inline ConvexityCheck check_convexity(const PotentialDerivatives& d) {
  ConvexityCheck out;
  for (std::size_t k = 0; k < d.u11.size(); ++k) {
    const double a = 1.0 + d.u11[k], c = 1.0 + d.u22[k], b = d.u12[k];
    const double tr = a + c, det = a * c - b * b;
    const double lo = 0.5 * tr - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    out.min_eigenvalue = std::min(out.min_eigenvalue, lo);
    if (!(tr > 0.0 && det > 0.0)) out.positive_definite = false;
  }
  return out;
}

inline ConvexityCheck check_convexity(const ScalarField& u) {
  return check_convexity(PotentialDerivatives(u));
}

struct NewtonConfig {
  double tau = 1.0;          ///< damping: each step solves D_u M theta = (f - f_n) / tau
  double tol = 1e-10;        ///< stop once ||f - ftilde_n||_l2 <= tol
  std::size_t max_iter = 20; ///< Newton steps
  Backend backend = Backend::fft;
  InnerSolverConfig inner{};
  SampleMode sample_mode = SampleMode::nearest;
  bool drop_first_order = false;
  bool keep_history = false;  ///< retain ftilde_n of every iterate in the report

  void validate() const {
    if (!(tau >= 1.0)) throw Error("NewtonConfig: tau must be >= 1");
    if (!(tol > 0.0)) throw Error("NewtonConfig: tol must be positive");
    if (!(inner.tol > 0.0)) throw Error("NewtonConfig: inner tolerance must be positive");
    if (inner.max_iter == 0 || inner.gmres_restart == 0)
      throw Error("NewtonConfig: inner iteration limits must be positive");
  }
};

struct NewtonState {
  ScalarField u;    ///< current iterate u_n (zero mean)
  ScalarField f_n;  ///< pushforward M(u_n)
  std::size_t iter = 0;
  std::vector<double> residual_history;
};

struct IterationRecord {
  std::size_t iter = 0;
  double residual = 0.0;  ///< ||f - ftilde_n||_l2
  double u_error = std::numeric_limits<double>::quiet_NaN();  ///< ||u_exact - u_n||_l2 if known
  double ftilde_mean = 1.0;
  double u_mean = 0.0;
  double theta_mean = 0.0;
  double min_eigenvalue = 1.0;
  bool convex = true;
  std::size_t inner_iterations = 0;  ///< Arnoldi steps / BiCG iterations of the solve at this iterate
  std::size_t inner_outer = 0;
  double inner_residual = 0.0;
  bool inner_converged = true;
  double seconds = 0.0;
  std::vector<std::string> diagnostics;
};

struct SolveReport {
  std::vector<IterationRecord> records;
  bool converged = false;
  std::optional<std::string> failure;
  double total_seconds = 0.0;
  std::size_t best_iter = 0;
  std::vector<ScalarField> ftilde_history;  ///< filled when keep_history is set

  std::vector<double> residuals() const {
    std::vector<double> r;
    for (const auto& rec : records) r.push_back(rec.residual);
    return r;
  }

  /// Mean inner iterations over the executed Newton steps.
  double mean_inner_iterations() const {
    std::size_t steps = 0, total = 0;
    for (const auto& rec : records)
      if (rec.inner_outer > 0 || rec.inner_iterations > 0) {
        ++steps;
        total += rec.inner_iterations;
      }
    return steps == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(steps);
  }

  /// Successive residual ratios r_{n+1}/r_n for residuals above `floor`.
  std::vector<double> residual_ratios(double floor = 1e-12) const {
    std::vector<double> out;
    for (std::size_t k = 1; k < records.size(); ++k)
      if (records[k - 1].residual > floor && records[k].residual > floor)
        out.push_back(records[k].residual / records[k - 1].residual);
    return out;
  }

  /// Geometric mean of the last `count` residual ratios above `floor`.
  double late_stage_ratio(std::size_t count = 3, double floor = 1e-12) const {
    const auto r = residual_ratios(floor);
    if (r.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t m = std::min(count, r.size());
    double lg = 0.0;
    for (std::size_t k = r.size() - m; k < r.size(); ++k) lg += std::log(r[k]);
    return std::exp(lg / static_cast<double>(m));
  }
};

inline std::unique_ptr<LinearizedSolver> make_solver(Backend b, const PeriodicGrid& grid) {
  if (b == Backend::fft) return std::make_unique<FftSolver>(grid);
  return std::make_unique<FdSolver>();
}

struct StepOutcome {
  NewtonState next;
  ScalarField theta;
  KrylovReport inner;
  double residual = 0.0;      ///< ||f - ftilde_n|| at the input state
  double ftilde_mean = 1.0;
  ConvexityCheck convexity;   ///< of the new iterate
  bool ok = true;             ///< false if the inner solve failed or produced non-finite values
  std::vector<std::string> diagnostics;
};

/// Called with the coefficients of every linearization before it is solved.
using LinearizationHook =
    std::function<void(std::size_t iter, const LinearizedCoefficients&, LinearizedSolver&)>;

/// Starts from u_0 = 0, where f_0 = g.
template <TargetDensity Target>
NewtonState initial_state(const PeriodicGrid& grid, const Target& g) {
  ScalarField u(grid, 0.0);
  ScalarField fn = evaluate_forward(u, g);
  return {std::move(u), std::move(fn), 0, {}};
}

/// One damped Newton step: normalize f_n, solve D_{u_n} M theta = (f - ftilde_n)/tau
/// for zero-mean theta, update u and re-gauge it.
template <TargetDensity Target>
StepOutcome newton_step(const NewtonState& state, const ScalarField& f, const Target& g,
                        const NewtonConfig& cfg, LinearizedSolver& solver,
                        const LinearizationHook& hook = {}) {
  const ScalarField ftilde = normalize_density(state.f_n);
  ScalarField defect = f - ftilde;
  const double residual = l2_norm(defect);

  ScalarField rhs = zero_mean(defect * (1.0 / cfg.tau));
  const PotentialDerivatives d(state.u);
  const LinearizedCoefficients coeffs = build_linearization(d, g, cfg.drop_first_order);
  if (hook) hook(state.iter, coeffs, solver);
  LinearSolveResult sol = solver.solve(coeffs, rhs, cfg.inner);

  StepOutcome out{state, sol.theta, sol.report, residual, mean(ftilde), {}, true, {}};
  if (!sol.report.converged) {
    out.ok = false;
    out.diagnostics.push_back(
        "inner solver did not converge (" + to_string(solver.backend()) + ", residual " +
        std::to_string(sol.report.final_residual) +
        (sol.report.breakdown ? ", " + *sol.report.breakdown : std::string()) + ")");
  }
  if (!sol.theta.all_finite()) {
    out.ok = false;
    out.diagnostics.push_back("non-finite Newton update");
    return out;
  }

  ScalarField u_next = zero_mean(state.u + sol.theta);
  const PotentialDerivatives dn(u_next);
  out.convexity = check_convexity(dn);
  if (!out.convexity.positive_definite)
    out.diagnostics.push_back("I + D^2u lost positive definiteness (min eigenvalue " +
                              std::to_string(out.convexity.min_eigenvalue) +
                              "); consider a larger tau");
  ScalarField fn_next = evaluate_forward(dn, g);
  if (!fn_next.all_finite()) {
    out.ok = false;
    out.diagnostics.push_back("non-finite pushforward density");
  }
  out.next.u = std::move(u_next);
  out.next.f_n = std::move(fn_next);
  out.next.iter = state.iter + 1;
  out.next.residual_history.push_back(residual);
  return out;
}

struct NewtonResult {
  ScalarField u;
  SolveReport report;
};

struct RunOptions {
  std::optional<ScalarField> exact_u;  ///< enables per-iteration ||u - u_n|| tracking
  LinearizationHook on_linearization;
};

/// Iterates damped Newton steps from u_0 = 0 until ||f - ftilde_n|| <= tol or
/// max_iter steps. Returns the iterate with the smallest residual.
template <TargetDensity Target>
NewtonResult run_newton(const ScalarField& f, const Target& g, const NewtonConfig& cfg,
                        const RunOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const PeriodicGrid grid = f.grid();
  auto solver = make_solver(cfg.backend, grid);
  const auto t_start = clock::now();

  NewtonState state = initial_state(grid, g);
  SolveReport report;
  ScalarField best_u = state.u;
  double best_res = std::numeric_limits<double>::infinity();
  ConvexityCheck convexity{true, 1.0};  // u_0 = 0

  for (;;) {
    const auto t0 = clock::now();
    IterationRecord rec;
    rec.iter = state.iter;
    const ScalarField ftilde = normalize_density(state.f_n);
    rec.residual = l2_norm(f - ftilde);
    rec.ftilde_mean = mean(ftilde);
    rec.u_mean = mean(state.u);
    if (opts.exact_u) rec.u_error = l2_norm(*opts.exact_u - state.u);
    if (cfg.keep_history) report.ftilde_history.push_back(ftilde);
    if (!report.records.empty() && rec.residual > report.records.back().residual)
      rec.diagnostics.push_back("residual increased; consider a larger tau");
    rec.convex = convexity.positive_definite;
    rec.min_eigenvalue = convexity.min_eigenvalue;
    if (rec.residual < best_res) {
      best_res = rec.residual;
      best_u = state.u;
      report.best_iter = state.iter;
    }

    const bool done = rec.residual <= cfg.tol;
    if (done) report.converged = true;
    if (done || state.iter >= cfg.max_iter) {
      rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      report.records.push_back(std::move(rec));
      break;
    }

    StepOutcome step = newton_step(state, f, g, cfg, *solver, opts.on_linearization);
    rec.inner_iterations = step.inner.inner_iterations;
    rec.inner_outer = step.inner.iterations;
    rec.inner_residual = step.inner.final_residual;
    rec.inner_converged = step.inner.converged;
    rec.theta_mean = mean(step.theta);
    for (auto& msg : step.diagnostics) rec.diagnostics.push_back(std::move(msg));
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    report.records.push_back(std::move(rec));
    if (!step.ok) {
      report.failure = report.records.back().diagnostics.empty()
                           ? std::string("Newton step failed")
                           : report.records.back().diagnostics.back();
      break;
    }
    state = std::move(step.next);
    convexity = step.convexity;
  }
  report.total_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return {std::move(best_u), std::move(report)};
}

inline NewtonResult run_newton(const DensityPair& pair, const NewtonConfig& cfg,
                               const RunOptions& opts = {}) {
  return run_newton(pair.f, SampledDensity(pair.g, cfg.sample_mode), cfg, opts);
}

}  // namespace maot
