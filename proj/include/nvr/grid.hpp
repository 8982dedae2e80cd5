#pragma once

// Uniform cell-centered Cartesian grid with one mirrored (homogeneous Neumann)
// ghost layer per face, plus the discrete operators the time stepper and its
// energy estimate are built on.
//
// Storage: a single contiguous array of (nx+2)*(ny+2)*(nz+2) doubles, i fastest.
// Interior cells are 1..n in each direction, ghosts are 0 and n+1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "nvr/error.hpp"
#include "nvr/vec3.hpp"

namespace nvr {

struct GridSpec {
  int nx = 2;
  int ny = 2;
  int nz = 2;
  double h = 1.0;
  Vec3 origin{};

  GridSpec() = default;
  GridSpec(int nx_, int ny_, int nz_, double h_, Vec3 origin_ = {})
      : nx(nx_), ny(ny_), nz(nz_), h(h_), origin(origin_) {
    if (nx < 2 || ny < 2 || nz < 2) throw InputError("grid needs at least 2 cells per direction");
    if (!(h > 0.0) || !std::isfinite(h)) throw InputError("grid spacing must be positive");
  }

  double lx() const { return nx * h; }
  double ly() const { return ny * h; }
  double lz() const { return nz * h; }
  double cell_volume() const { return h * h * h; }
  std::size_t interior_count() const { return std::size_t(nx) * ny * nz; }

  /// Center of cell (i, j, k), 1-based interior indices.
  Vec3 cell_center(int i, int j, int k) const {
    return origin + Vec3{(i - 0.5) * h, (j - 0.5) * h, (k - 0.5) * h};
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Grid-indexed real values with a ghost layer.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const GridSpec& spec, double value = 0.0)
      : spec_(spec),
        sy_(std::size_t(spec.nx) + 2),
        sz_((std::size_t(spec.nx) + 2) * (std::size_t(spec.ny) + 2)),
        data_(sz_ * (std::size_t(spec.nz) + 2), value) {}

  const GridSpec& spec() const { return spec_; }

  std::size_t index(int i, int j, int k) const { return std::size_t(i) + sy_ * j + sz_ * k; }
  std::size_t stride_y() const { return sy_; }
  std::size_t stride_z() const { return sz_; }

  double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }

  double& operator[](std::size_t n) { return data_[n]; }
  double operator[](std::size_t n) const { return data_[n]; }

  std::span<double> raw() { return data_; }
  std::span<const double> raw() const { return data_; }

  /// Calls f(i, j, k, idx) for each interior cell in storage order.
  template <class F>
  void for_each_interior(F&& f) const {
    for (int k = 1; k <= spec_.nz; ++k)
      for (int j = 1; j <= spec_.ny; ++j) {
        std::size_t idx = index(1, j, k);
        for (int i = 1; i <= spec_.nx; ++i, ++idx) f(i, j, k, idx);
      }
  }

  /// Sets every interior cell to f(i, j, k); ghosts are left untouched.
  template <class F>
  void fill_interior(F&& f) {
    for_each_interior([&](int i, int j, int k, std::size_t idx) { data_[idx] = f(i, j, k); });
  }

 private:
  GridSpec spec_{};
  std::size_t sy_ = 0;
  std::size_t sz_ = 0;
  std::vector<double> data_;
};

inline void require_same_grid(const ScalarField& a, const ScalarField& b) {
  if (!(a.spec() == b.spec())) throw GridMismatch();
}

/// Kahan-Babuska-Neumaier accumulator.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Compensated sum of f(idx) over interior cells of `spec`-shaped storage.
template <class F>
double sum_interior(const ScalarField& layout, F&& f) {
  CompensatedSum acc;
  layout.for_each_interior([&](int, int, int, std::size_t idx) { acc.add(f(idx)); });
  return acc.value();
}

/// Mirrors the adjacent interior layer into the ghost layer on all six faces.
inline void sync_ghosts(ScalarField& f) {
  const GridSpec& s = f.spec();
  for (int k = 1; k <= s.nz; ++k)
    for (int j = 1; j <= s.ny; ++j) {
      f(0, j, k) = f(1, j, k);
      f(s.nx + 1, j, k) = f(s.nx, j, k);
    }
  for (int k = 1; k <= s.nz; ++k)
    for (int i = 1; i <= s.nx; ++i) {
      f(i, 0, k) = f(i, 1, k);
      f(i, s.ny + 1, k) = f(i, s.ny, k);
    }
  for (int j = 1; j <= s.ny; ++j)
    for (int i = 1; i <= s.nx; ++i) {
      f(i, j, 0) = f(i, j, 1);
      f(i, j, s.nz + 1) = f(i, j, s.nz);
    }
}

/// 7-point Laplacian on interior cells; expects synced ghosts, returns a synced field.
inline ScalarField laplacian7(const ScalarField& f) {
  ScalarField out(f.spec());
  const double inv_h2 = 1.0 / (f.spec().h * f.spec().h);
  const std::size_t sy = f.stride_y();
  const std::size_t sz = f.stride_z();
  const double* p = f.raw().data();
  double* q = out.raw().data();
  f.for_each_interior([&](int, int, int, std::size_t n) {
    q[n] = (p[n + 1] + p[n - 1] + p[n + sy] + p[n - sy] + p[n + sz] + p[n - sz] - 6.0 * p[n]) * inv_h2;
  });
  sync_ghosts(out);
  return out;
}

/// Cell-centered discrete L2 inner product (a, b)_h = h^3 sum a b.
inline double inner_h(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  const double* pa = a.raw().data();
  const double* pb = b.raw().data();
  return a.spec().cell_volume() * sum_interior(a, [&](std::size_t n) { return pa[n] * pb[n]; });
}

inline double norm_h2(const ScalarField& a) { return inner_h(a, a); }

/// Edge inner product of forward differences, boundary edges (index 0 and N) included.
inline double grad_inner_e(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  const GridSpec& s = a.spec();
  const double* pa = a.raw().data();
  const double* pb = b.raw().data();
  const std::size_t sy = a.stride_y();
  const std::size_t sz = a.stride_z();
  CompensatedSum acc;
  auto edge = [&](std::size_t n, std::size_t m) { acc.add((pa[m] - pa[n]) * (pb[m] - pb[n])); };
  for (int k = 1; k <= s.nz; ++k)
    for (int j = 1; j <= s.ny; ++j)
      for (int i = 0; i <= s.nx; ++i) {
        const std::size_t n = a.index(i, j, k);
        edge(n, n + 1);
      }
  for (int k = 1; k <= s.nz; ++k)
    for (int j = 0; j <= s.ny; ++j)
      for (int i = 1; i <= s.nx; ++i) {
        const std::size_t n = a.index(i, j, k);
        edge(n, n + sy);
      }
  for (int k = 0; k <= s.nz; ++k)
    for (int j = 1; j <= s.ny; ++j)
      for (int i = 1; i <= s.nx; ++i) {
        const std::size_t n = a.index(i, j, k);
        edge(n, n + sz);
      }
  // h^3 * (1/h)^2
  return s.h * acc.value();
}

inline double grad_norm_e2(const ScalarField& a) { return grad_inner_e(a, a); }

/// Element-wise map over interior cells; output ghosts are synced.
template <class F>
ScalarField map_interior(const ScalarField& a, F&& f) {
  ScalarField out(a.spec());
  a.for_each_interior([&](int, int, int, std::size_t n) { out[n] = f(a[n]); });
  sync_ghosts(out);
  return out;
}

/// Largest absolute interior difference.
inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  double m = 0.0;
  a.for_each_interior([&](int, int, int, std::size_t n) { m = std::max(m, std::abs(a[n] - b[n])); });
  return m;
}

}  // namespace nvr
