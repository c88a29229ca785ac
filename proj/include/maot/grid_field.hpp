#pragma once

/// \file maot/grid_field.hpp
/// \brief Periodic grid geometry, grid-sampled fields and centered stencils.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace maot {

/// Raised on contract violations (bad grid sizes, mismatched fields, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform n x n discretization of the unit torus [0,1)^2.
class PeriodicGrid {
 public:
  explicit PeriodicGrid(std::size_t n) : n_(n) {
    if (n == 0) throw Error("PeriodicGrid: n must be positive");
  }

  std::size_t n() const { return n_; }
  std::size_t size() const { return n_ * n_; }
  double h() const { return 1.0 / static_cast<double>(n_); }

  /// Coordinate of node index i along either axis; i*h computed as i/n so
  /// that h*n == 1 holds exactly for the representation.
  double coord(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(n_);
  }

  std::size_t wrap(std::ptrdiff_t i) const {
    const auto n = static_cast<std::ptrdiff_t>(n_);
    auto r = i % n;
    return static_cast<std::size_t>(r < 0 ? r + n : r);
  }

  /// Row-major flat index of node (i, j); i runs along x1, j along x2.
  std::size_t index(std::size_t i, std::size_t j) const { return i * n_ + j; }
  std::size_t index_wrapped(std::ptrdiff_t i, std::ptrdiff_t j) const {
    return index(wrap(i), wrap(j));
  }

  bool operator==(const PeriodicGrid&) const = default;

 private:
  std::size_t n_;
};

/// Real function sampled at the nodes of a PeriodicGrid.
class ScalarField {
 public:
  explicit ScalarField(PeriodicGrid grid, double value = 0.0)
      : grid_(grid), values_(grid.size(), value) {}

  ScalarField(PeriodicGrid grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw Error("ScalarField: value count " + std::to_string(values_.size()) +
                  " does not match grid size " + std::to_string(grid_.size()));
  }

  /// Samples fn(x1, x2) at every node.
  template <class Fn>
  static ScalarField from_function(PeriodicGrid grid, Fn&& fn) {
    ScalarField out(grid);
    const std::size_t n = grid.n();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.values_[grid.index(i, j)] = fn(grid.coord(i), grid.coord(j));
    return out;
  }

  const PeriodicGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  double operator()(std::size_t i, std::size_t j) const { return values_[grid_.index(i, j)]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[grid_.index(i, j)]; }
  double at_wrapped(std::ptrdiff_t i, std::ptrdiff_t j) const {
    return values_[grid_.index_wrapped(i, j)];
  }

  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& vector() const { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  ScalarField& operator+=(const ScalarField& o) {
    check_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    check_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  ScalarField& operator+=(double s) {
    for (double& v : values_) v += s;
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

  void check_same_grid(const ScalarField& o) const {
    if (!(grid_ == o.grid_)) throw Error("ScalarField: grid mismatch");
  }

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

/// Two scalar components on a shared grid.
struct VectorField {
  ScalarField x1;
  ScalarField x2;

  VectorField(ScalarField c1, ScalarField c2) : x1(std::move(c1)), x2(std::move(c2)) {
    x1.check_same_grid(x2);
  }
  const PeriodicGrid& grid() const { return x1.grid(); }
};

enum class Axis { x1 = 1, x2 = 2 };

/// Second-derivative selector: pure along one axis or the mixed d^2/dx1dx2.
enum class SecondAxis { x1x1, x2x2, mixed };

namespace detail {

inline void check_stencil(const PeriodicGrid& grid, int order) {
  if (order != 2 && order != 4)
    throw Error("stencil order must be 2 or 4, got " + std::to_string(order));
  const std::size_t min_n = order == 4 ? 5 : 3;
  if (grid.n() < min_n)
    throw Error("grid n=" + std::to_string(grid.n()) + " too small for order-" +
                std::to_string(order) + " stencil (needs n >= " + std::to_string(min_n) + ")");
}

/// Applies a 1D periodic stencil with symmetric offsets along `axis`.
template <std::size_t K>
ScalarField apply_1d(const ScalarField& f, Axis axis, const std::array<double, K>& w,
                     std::ptrdiff_t first_offset, double scale) {
  const auto& grid = f.grid();
  const std::size_t n = grid.n();
  ScalarField out(grid);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        if (w[k] == 0.0) continue;
        const std::ptrdiff_t off = first_offset + static_cast<std::ptrdiff_t>(k);
        const auto ii = static_cast<std::ptrdiff_t>(i) + (axis == Axis::x1 ? off : 0);
        const auto jj = static_cast<std::ptrdiff_t>(j) + (axis == Axis::x2 ? off : 0);
        acc += w[k] * f.at_wrapped(ii, jj);
      }
      out(i, j) = acc * scale;
    }
  }
  return out;
}

}  // namespace detail

/// Centered periodic first derivative of order 2 or 4.
inline ScalarField diff_first(const ScalarField& f, Axis axis, int order) {
  detail::check_stencil(f.grid(), order);
  const double h = f.grid().h();
  if (order == 2)
    return detail::apply_1d<3>(f, axis, {-1.0, 0.0, 1.0}, -1, 1.0 / (2.0 * h));
  return detail::apply_1d<5>(f, axis, {1.0, -8.0, 0.0, 8.0, -1.0}, -2, 1.0 / (12.0 * h));
}

/// Centered periodic second derivative. The mixed derivative composes two
/// first-derivative stencils of the same order.
inline ScalarField diff_second(const ScalarField& f, SecondAxis which, int order) {
  detail::check_stencil(f.grid(), order);
  if (which == SecondAxis::mixed)
    return diff_first(diff_first(f, Axis::x1, order), Axis::x2, order);
  const Axis axis = which == SecondAxis::x1x1 ? Axis::x1 : Axis::x2;
  const double h2 = f.grid().h() * f.grid().h();
  if (order == 2) return detail::apply_1d<3>(f, axis, {1.0, -2.0, 1.0}, -1, 1.0 / h2);
  return detail::apply_1d<5>(f, axis, {-1.0, 16.0, -30.0, 16.0, -1.0}, -2, 1.0 / (12.0 * h2));
}

inline VectorField gradient(const ScalarField& f, int order) {
  return {diff_first(f, Axis::x1, order), diff_first(f, Axis::x2, order)};
}

namespace detail {
// Fixed pairwise order keeps the reduction reproducible.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 64) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}
}  // namespace detail

/// Arithmetic mean of the nodal values.
inline double mean(const ScalarField& f) {
  return detail::pairwise_sum(f.values()) / static_cast<double>(f.size());
}

/// Copy of f shifted to zero mean.
inline ScalarField zero_mean(ScalarField f) {
  f += -mean(f);
  return f;
}

/// Tensor-product composite Simpson rule over the unit torus. The wrapped
/// endpoint x=1 is the node x=0, so nodes get weights 2h/3 (even) and 4h/3 (odd).
inline double simpson_average(const ScalarField& f) {
  const std::size_t n = f.grid().n();
  if (n % 2 != 0)
    throw Error("simpson_average requires an even grid size, got n=" + std::to_string(n));
  const double h = f.grid().h();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = (i % 2 == 0 ? 2.0 : 4.0) * h / 3.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += w[j] * f(i, j);
    total += w[i] * row;
  }
  return total;
}

/// Discrete L2 norm on the unit square: sqrt(h^2 * sum v^2).
inline double l2_norm(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.values()) s += v * v;
  const double h = f.grid().h();
  return std::sqrt(s) * h;
}

inline double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

enum class SampleMode { nearest, bilinear };

inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  if (r >= 1.0) r = 0.0;  // x slightly below an integer can round up
  return r;
}

/// Evaluates a field at an arbitrary point of R^2, wrapped by periodicity.
/// Nearest mode breaks ties toward the lower index.
inline double sample(const ScalarField& f, double x1, double x2, SampleMode mode) {
  const auto& grid = f.grid();
  const double n = static_cast<double>(grid.n());
  const double t1 = wrap_unit(x1) * n;
  const double t2 = wrap_unit(x2) * n;
  if (mode == SampleMode::nearest) {
    const auto i = static_cast<std::ptrdiff_t>(std::ceil(t1 - 0.5));
    const auto j = static_cast<std::ptrdiff_t>(std::ceil(t2 - 0.5));
    return f.at_wrapped(i, j);
  }
  const double fl1 = std::floor(t1);
  const double fl2 = std::floor(t2);
  const double s1 = t1 - fl1;
  const double s2 = t2 - fl2;
  const auto i = static_cast<std::ptrdiff_t>(fl1);
  const auto j = static_cast<std::ptrdiff_t>(fl2);
  return (1.0 - s1) * (1.0 - s2) * f.at_wrapped(i, j) + s1 * (1.0 - s2) * f.at_wrapped(i + 1, j) +
         (1.0 - s1) * s2 * f.at_wrapped(i, j + 1) + s1 * s2 * f.at_wrapped(i + 1, j + 1);
}

}  // namespace maot
