#pragma once

/// \file maot/fd_solver.hpp
/// \brief Second-order finite-difference backend: periodic 9-point assembly,
/// rank repair of the singular system and BiCG.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "maot/grid_field.hpp"
#include "maot/linearized.hpp"
#include "maot/linsolve.hpp"

namespace maot {

struct Triplet {
  std::size_t row, col;
  double value;
};

/// Compressed sparse row matrix; duplicate triplets are summed.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  static SparseMatrix from_triplets(std::size_t dim, std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix m;
    m.dim_ = dim;
    m.row_ptr_.assign(dim + 1, 0);
    std::size_t last_row = 0;
    for (const Triplet& e : t) {
      if (e.row >= dim || e.col >= dim) throw Error("SparseMatrix: triplet out of range");
      if (!m.col_.empty() && last_row == e.row && m.col_.back() == e.col) {
        m.val_.back() += e.value;
        continue;
      }
      m.col_.push_back(e.col);
      m.val_.push_back(e.value);
      last_row = e.row;
      ++m.row_ptr_[e.row + 1];
    }
    std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
    return m;
  }

  std::size_t dim() const { return dim_; }
  std::size_t nonzeros() const { return val_.size(); }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t r = 0; r < dim_; ++r) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += val_[k] * x[col_[k]];
      y[r] = s;
    }
  }

  SparseMatrix transpose() const { return from_triplets(dim_, transposed_triplets()); }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(val_.size());
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out.push_back({r, col_[k], val_[k]});
    return out;
  }

  /// Entry (r, c), zero when not stored.
  double coeff(std::size_t r, std::size_t c) const {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (col_[k] == c) return val_[k];
    return 0.0;
  }

  std::vector<double> dense() const {
    std::vector<double> d(dim_ * dim_, 0.0);
    for (const Triplet& e : triplets()) d[e.row * dim_ + e.col] += e.value;
    return d;
  }

 private:
  std::vector<Triplet> transposed_triplets() const {
    auto t = triplets();
    for (Triplet& e : t) std::swap(e.row, e.col);
    return t;
  }

  std::size_t dim_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_;
  std::vector<double> val_;
};

struct SparseSystem {
  SparseMatrix matrix;
  Vector rhs;
};

/// Periodic 9-point discretization of L with centered second-order differences.
inline SparseSystem assemble(const LinearizedCoefficients& c, const PeriodicGrid& grid,
                             std::span<const double> rhs = {}) {
  if (!(c.grid() == grid)) throw Error("assemble: coefficient grid mismatch");
  if (grid.n() < 3) throw Error("assemble: grid too small for second-order stencils");
  if (!rhs.empty() && rhs.size() != grid.size()) throw Error("assemble: rhs size mismatch");
  const std::size_t n = grid.n();
  const double h = grid.h();
  const double ih2 = 1.0 / (h * h), i2h = 1.0 / (2.0 * h), i4h2 = 1.0 / (4.0 * h * h);
  std::vector<Triplet> t;
  t.reserve(grid.size() * 9);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t row = grid.index(i, j);
      const auto si = static_cast<std::ptrdiff_t>(i), sj = static_cast<std::ptrdiff_t>(j);
      auto at = [&](std::ptrdiff_t di, std::ptrdiff_t dj) { return grid.index_wrapped(si + di, sj + dj); };
      const double a11 = c.a11[row], a12 = c.a12[row], a22 = c.a22[row], b1 = c.b1[row], b2 = c.b2[row];
      t.push_back({row, row, -2.0 * (a11 + a22) * ih2});
      t.push_back({row, at(1, 0), a11 * ih2 + b1 * i2h});
      t.push_back({row, at(-1, 0), a11 * ih2 - b1 * i2h});
      t.push_back({row, at(0, 1), a22 * ih2 + b2 * i2h});
      t.push_back({row, at(0, -1), a22 * ih2 - b2 * i2h});
      const double m = 2.0 * a12 * i4h2;
      t.push_back({row, at(1, 1), m});
      t.push_back({row, at(-1, -1), m});
      t.push_back({row, at(1, -1), -m});
      t.push_back({row, at(-1, 1), -m});
    }
  }
  SparseSystem sys{SparseMatrix::from_triplets(grid.size(), std::move(t)),
                   rhs.empty() ? Vector(grid.size(), 0.0) : Vector(rhs.begin(), rhs.end())};
  return sys;
}

/// The square system obtained by appending the gauge row w * sum_k x_k = 0,
/// adding it to every other row and deleting it: Atilde = A + w 1 1^T, same rhs.
/// Atilde is applied matrix-free so the sparsity of A is kept.
struct RankFixedSystem {
  SparseMatrix matrix;
  SparseMatrix transpose;
  Vector rhs;
  double gauge_weight = 1.0;

  std::size_t dim() const { return matrix.dim(); }

  void apply(std::span<const double> x, std::span<double> y) const {
    matrix.multiply(x, y);
    const double s = gauge_weight * std::accumulate(x.begin(), x.end(), 0.0);
    for (double& v : y) v += s;
  }
  void apply_transpose(std::span<const double> x, std::span<double> y) const {
    transpose.multiply(x, y);
    const double s = gauge_weight * std::accumulate(x.begin(), x.end(), 0.0);
    for (double& v : y) v += s;
  }

  LinearMap map() const {
    return {dim(), [this](std::span<const double> x, std::span<double> y) { apply(x, y); }};
  }
  LinearMap transpose_map() const {
    return {dim(), [this](std::span<const double> x, std::span<double> y) { apply_transpose(x, y); }};
  }

  std::vector<double> dense() const {
    auto d = matrix.dense();
    for (double& v : d) v += gauge_weight;
    return d;
  }
};

enum class GaugeScaling {
  unit,      ///< w = 1, the literal all-ones row
  spectral,  ///< w places the constant mode at A's lowest nonzero eigenvalue
};

/// Gauge weight putting the eigenvalue w*P of the constant mode at the level
/// of the smoothest non-constant mode of A, which is about pi^2 h^2 mean(diag A).
/// With A negative semi-definite this keeps Atilde definite.
inline double spectral_gauge_weight(const SparseMatrix& a) {
  const std::size_t P = a.dim();
  double diag = 0.0;
  for (std::size_t r = 0; r < P; ++r) diag += a.coeff(r, r);
  diag /= static_cast<double>(P);
  constexpr double pi2 = 3.14159265358979323846 * 3.14159265358979323846;
  const double w = pi2 * diag / (static_cast<double>(P) * static_cast<double>(P));
  return w == 0.0 ? 1.0 : w;
}

inline RankFixedSystem fix_rank(const SparseSystem& sys, GaugeScaling scaling = GaugeScaling::spectral) {
  const double w = scaling == GaugeScaling::unit ? 1.0 : spectral_gauge_weight(sys.matrix);
  return {sys.matrix, sys.matrix.transpose(), sys.rhs, w};
}

inline LinearSolveResult solve_linearized_fd(const LinearizedCoefficients& coeffs,
                                             const ScalarField& rhs, const InnerSolverConfig& cfg) {
  const RankFixedSystem fixed = fix_rank(assemble(coeffs, rhs.grid(), rhs.values()));
  auto [x, report] = bicg(fixed.map(), fixed.transpose_map(), fixed.rhs, cfg.tol, cfg.max_iter);
  return {zero_mean(ScalarField(rhs.grid(), std::move(x))), std::move(report)};
}

class FdSolver final : public LinearizedSolver {
 public:
  Backend backend() const override { return Backend::fd; }
  LinearSolveResult solve(const LinearizedCoefficients& coeffs, const ScalarField& rhs,
                          const InnerSolverConfig& cfg) override {
    return solve_linearized_fd(coeffs, rhs, cfg);
  }
};

}  // namespace maot
