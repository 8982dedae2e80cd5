#pragma once

// Lagrange-multiplier Crank-Nicolson stepper for the edge-weighted Allen-Cahn
// flow. Each step solves two Q-independent linear systems by block
// Gauss-Seidel (one 2x2 (phi, mu) solve per cell), assembles the quartic
// energy constraint P(Q) = 0, solves it for the multiplier Q and recomposes
// phi^{n+1} = phi_1 + Q phi_2.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "nvr/error.hpp"
#include "nvr/grid.hpp"
#include "nvr/phasefield.hpp"

namespace nvr {

enum class SweepOrder {
  lexicographic,  ///< serial, i fastest; bit-reproducible
  red_black,      ///< two-color sweep, each color updated in parallel
};

/// phi* = 3/2 phi^n - 1/2 phi^{n-1}.
inline ScalarField extrapolate(const ScalarField& phi_n, const ScalarField& phi_nm1) {
  require_same_grid(phi_n, phi_nm1);
  ScalarField out(phi_n.spec());
  phi_n.for_each_interior([&](int, int, int, std::size_t n) { out[n] = 1.5 * phi_n[n] - 0.5 * phi_nm1[n]; });
  sync_ghosts(out);
  return out;
}

namespace detail {

struct SweepCoefficients {
  double inv_dt;
  double diag;         // S/2 + 3/h^2 for a cell with six real neighbors
  double half_inv_h2;  // 1/(2h^2)
};

inline SweepCoefficients sweep_coefficients(const GridSpec& s, const ModelParams& p) {
  const double inv_h2 = 1.0 / (s.h * s.h);
  return {1.0 / p.dt, 0.5 * p.S + 3.0 * inv_h2, 0.5 * inv_h2};
}

[[noreturn]] inline void throw_divergence(int i, int j, int k) {
  std::ostringstream os;
  os << "non-finite value in block Gauss-Seidel sweep at cell (" << i << ", " << j << ", " << k << ")";
  throw DivergenceError(os.str());
}

// Exact solve of the 2x2 block of cell (i, j, k) against the current neighbor
// values. Ghost faces mirror the cell itself, so their contribution is folded
// into the diagonal. Returns the squared change of phi.
inline double relax_cell(int i, int j, int k, std::size_t n, double* phi, double* mu, const double* r1,
                         const double* r2, const double* g, const GridSpec& s, std::size_t sy, std::size_t sz,
                         const SweepCoefficients& c) {
  const int mirrored = (i == 1) + (i == s.nx) + (j == 1) + (j == s.ny) + (k == 1) + (k == s.nz);
  const double old = phi[n];
  // Ghosts hold `old`; remove them from the neighbor sum.
  const double nb = phi[n - 1] + phi[n + 1] + phi[n - sy] + phi[n + sy] + phi[n - sz] + phi[n + sz] - mirrored * old;
  const double a = c.diag - mirrored * c.half_inv_h2;
  const double b2 = r2[n] - c.half_inv_h2 * nb;
  const double gg = g[n];
  const double v = (r1[n] - gg * b2) / (c.inv_dt + gg * a);
  const double m = b2 + a * v;
  if (!std::isfinite(v) || !std::isfinite(m)) throw_divergence(i, j, k);
  phi[n] = v;
  mu[n] = m;
  if (mirrored) {
    if (i == 1) phi[n - 1] = v;
    if (i == s.nx) phi[n + 1] = v;
    if (j == 1) phi[n - sy] = v;
    if (j == s.ny) phi[n + sy] = v;
    if (k == 1) phi[n - sz] = v;
    if (k == s.nz) phi[n + sz] = v;
  }
  const double d = v - old;
  return d * d;
}

}  // namespace detail

/// One block Gauss-Seidel sweep of
///   phi/dt + g mu = rhs1,
///   mu - (S/2) phi + (1/2) Lap_d phi = rhs2
/// updating `phi` and `mu` in place. `phi` must have synced ghosts and stays
/// synced. Returns ||phi_new - phi_old||_h^2.
inline double gs_block_sweep(ScalarField& phi, ScalarField& mu, const ScalarField& rhs1, const ScalarField& rhs2,
                             const ScalarField& g, const ModelParams& params,
                             SweepOrder order = SweepOrder::lexicographic) {
  require_same_grid(phi, mu);
  require_same_grid(phi, rhs1);
  require_same_grid(phi, rhs2);
  require_same_grid(phi, g);
  const GridSpec& s = phi.spec();
  const auto c = detail::sweep_coefficients(s, params);
  const std::size_t sy = phi.stride_y();
  const std::size_t sz = phi.stride_z();
  double* p = phi.raw().data();
  double* m = mu.raw().data();
  const double* r1 = rhs1.raw().data();
  const double* r2 = rhs2.raw().data();
  const double* gp = g.raw().data();

  if (order == SweepOrder::lexicographic) {
    CompensatedSum acc;
    for (int k = 1; k <= s.nz; ++k)
      for (int j = 1; j <= s.ny; ++j) {
        std::size_t n = phi.index(1, j, k);
        for (int i = 1; i <= s.nx; ++i, ++n) acc.add(detail::relax_cell(i, j, k, n, p, m, r1, r2, gp, s, sy, sz, c));
      }
    return s.cell_volume() * acc.value();
  }

  // Per-plane partial sums reduced serially keep the result independent of
  // the thread count.
  std::vector<double> plane(std::size_t(s.nz) * 2, 0.0);
  for (int color = 0; color < 2; ++color) {
    bool diverged = false;
#pragma omp parallel for schedule(static)
    for (int k = 1; k <= s.nz; ++k) {
      CompensatedSum acc;
      try {
        for (int j = 1; j <= s.ny; ++j) {
          const int i0 = 1 + ((1 + j + k + color) & 1);
          std::size_t n = phi.index(i0, j, k);
          for (int i = i0; i <= s.nx; i += 2, n += 2)
            acc.add(detail::relax_cell(i, j, k, n, p, m, r1, r2, gp, s, sy, sz, c));
        }
      } catch (const DivergenceError&) {
#pragma omp atomic write
        diverged = true;
      }
      plane[std::size_t(k - 1) * 2 + color] = acc.value();
    }
    if (diverged) throw DivergenceError("non-finite value in red-black Gauss-Seidel sweep");
  }
  CompensatedSum total;
  for (double v : plane) total.add(v);
  return s.cell_volume() * total.value();
}

struct LinearSolveResult {
  ScalarField phi;
  ScalarField mu;
  int sweeps = 0;
  double last_increment = 0.0;
};

/// Sweeps until the squared h-norm of the increment drops to gs_tol.
/// Throws ConvergenceError after gs_max sweeps.
inline LinearSolveResult solve_block_system(ScalarField guess, const ScalarField& rhs1, const ScalarField& rhs2,
                                            const ScalarField& g, const ModelParams& params,
                                            SweepOrder order = SweepOrder::lexicographic) {
  LinearSolveResult r{std::move(guess), ScalarField(rhs1.spec()), 0, 0.0};
  sync_ghosts(r.phi);
  while (true) {
    r.last_increment = gs_block_sweep(r.phi, r.mu, rhs1, rhs2, g, params, order);
    ++r.sweeps;
    if (r.last_increment <= params.gs_tol) break;
    if (r.sweeps >= params.gs_max)
      throw ConvergenceError("block Gauss-Seidel did not converge in " + std::to_string(params.gs_max) + " sweeps",
                             r.last_increment);
  }
  sync_ghosts(r.mu);
  return r;
}

/// Coefficients of P(Q) = c4 Q^4 + c3 Q^3 + c2 Q^2 + c1 Q + c0.
struct QuarticCoeffs {
  double c4 = 0.0;
  double c3 = 0.0;
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  double operator()(double q) const { return (((c4 * q + c3) * q + c2) * q + c1) * q + c0; }
  double derivative(double q) const { return ((4.0 * c4 * q + 3.0 * c3) * q + 2.0 * c2) * q + c1; }
  double magnitude() const { return std::abs(c4) + std::abs(c3) + std::abs(c2) + std::abs(c1) + std::abs(c0); }
  /// Index k holds the coefficient of Q^k.
  std::array<double, 5> ascending() const { return {c0, c1, c2, c3, c4}; }
};

/// Expands the discrete energy constraint
///   (F(phi_1 + Q phi_2) - F(phi^n), 1)_h = Q (F'(phi*), phi_1 + Q phi_2 - phi^n)_h
/// into powers of Q. F'(phi*) carries no 1/eps^2: it cancels on both sides.
inline QuarticCoeffs quartic_coefficients(const ScalarField& phi1, const ScalarField& phi2, const ScalarField& phi_n,
                                          const ScalarField& phi_star) {
  require_same_grid(phi1, phi2);
  require_same_grid(phi1, phi_n);
  require_same_grid(phi1, phi_star);
  CompensatedSum s4, s3, s2, s1, s0;
  phi1.for_each_interior([&](int, int, int, std::size_t n) {
    const double a = phi1[n];
    const double b = phi2[n];
    const double f = potential_dF(phi_star[n]);
    const double a2 = a * a;
    const double b2 = b * b;
    s4.add(0.25 * b2 * b2);
    s3.add(a * b2 * b);
    s2.add(1.5 * a2 * b2 - 0.5 * b2 - b * f);
    s1.add(a2 * a * b - a * b - f * a + f * phi_n[n]);
    s0.add(0.25 * a2 * a2 - 0.5 * a2 - potential_F(phi_n[n]) + 0.25);
  });
  const double h3 = phi1.spec().cell_volume();
  return {h3 * s4.value(), h3 * s3.value(), h3 * s2.value(), h3 * s1.value(), h3 * s0.value()};
}

namespace detail {

inline double eval_poly(const std::vector<double>& a, double x) {
  double v = 0.0;
  for (std::size_t k = a.size(); k-- > 0;) v = v * x + a[k];
  return v;
}

inline std::vector<double> trim_poly(std::vector<double> a) {
  while (!a.empty() && a.back() == 0.0) a.pop_back();
  return a;
}

inline double bisect_root(const std::vector<double>& a, double lo, double hi) {
  double flo = eval_poly(a, lo);
  if (flo == 0.0) return lo;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = eval_poly(a, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Real roots in [lo, hi], ascending. Critical points from the derivative split
// the interval into monotone pieces; each sign change is bisected.
inline std::vector<double> real_roots_in(std::vector<double> a, double lo, double hi) {
  a = trim_poly(std::move(a));
  std::vector<double> roots;
  if (a.size() <= 1) return roots;
  if (a.size() == 2) {
    const double r = -a[0] / a[1];
    if (r >= lo && r <= hi) roots.push_back(r);
    return roots;
  }
  std::vector<double> da(a.size() - 1);
  for (std::size_t k = 1; k < a.size(); ++k) da[k - 1] = double(k) * a[k];
  std::vector<double> knots{lo};
  for (double c : real_roots_in(da, lo, hi))
    if (c > knots.back()) knots.push_back(c);
  if (hi > knots.back()) knots.push_back(hi);
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double l = knots[s], r = knots[s + 1];
    const double fl = eval_poly(a, l), fr = eval_poly(a, r);
    double root;
    if (fl == 0.0)
      root = l;
    else if (fr == 0.0)
      root = r;
    else if ((fl < 0.0) != (fr < 0.0))
      root = bisect_root(a, l, r);
    else
      continue;
    if (roots.empty() || root > roots.back()) roots.push_back(root);
  }
  return roots;
}

}  // namespace detail

/// All real roots of P inside [lo, hi], ascending.
inline std::vector<double> quartic_real_roots(const QuarticCoeffs& p, double lo, double hi) {
  const auto c = p.ascending();
  return detail::real_roots_in(std::vector<double>(c.begin(), c.end()), lo, hi);
}

struct QSolveResult {
  double q = 1.0;
  int iterations = 0;
  bool degenerate = false;      ///< all coefficients vanished; Q := 1
  bool used_fallback = false;   ///< Newton stalled; bracketing search used
  bool multiple_roots = false;  ///< more than one real root near the solution
};

/// Solves P(Q) = 0 by Newton from q_init (stop on |dQ| < newton_tol).
/// If Newton stalls (flat derivative, non-finite iterate or newton_max
/// exceeded) the roots are bracketed in [q_init - w, q_init + w], doubling w
/// from 2 up to ten times. Among several real roots the one closest to 1 wins.
/// `domain_volume` scales the degeneracy threshold (1e-14 * h^3 N).
inline QSolveResult solve_Q(const QuarticCoeffs& p, double q_init, const ModelParams& params,
                            double domain_volume = 1.0) {
  QSolveResult r;
  const double scale = p.magnitude();
  if (!std::isfinite(scale)) throw NumericalError("non-finite quartic coefficients");
  if (scale <= 1e-14 * domain_volume) {
    r.degenerate = true;
    r.q = 1.0;
    return r;
  }

  // Roots farther than this from the warm start are not physically meaningful
  // multipliers; they only matter for the multiple-root diagnosis.
  constexpr double search_halfwidth = 64.0;

  std::optional<double> newton_root;
  double q = q_init;
  for (int it = 1; it <= params.newton_max; ++it) {
    r.iterations = it;
    const double dp = p.derivative(q);
    if (std::abs(dp) < 1e-14 * scale) break;
    const double dq = p(q) / dp;
    q -= dq;
    if (!std::isfinite(q)) break;
    if (std::abs(dq) < params.newton_tol) {
      newton_root = q;
      break;
    }
  }

  std::vector<double> roots;
  if (!newton_root) {
    r.used_fallback = true;
    double w = 2.0;
    for (int expansion = 0; expansion <= 10 && roots.empty(); ++expansion, w *= 2.0)
      roots = quartic_real_roots(p, q_init - w, q_init + w);
    if (roots.empty()) throw NumericalError("no real root of the energy constraint polynomial");
  } else {
    roots = quartic_real_roots(p, q_init - search_halfwidth, q_init + search_halfwidth);
    if (roots.empty()) roots.push_back(*newton_root);
  }

  auto closest = std::min_element(roots.begin(), roots.end(),
                                  [](double a, double b) { return std::abs(a - 1.0) < std::abs(b - 1.0); });
  r.multiple_roots = roots.size() > 1;
  r.q = *closest;
  // Keep Newton's value when it converged to the selected root.
  if (newton_root && std::abs(*newton_root - r.q) <= 1e3 * params.newton_tol) r.q = *newton_root;
  return r;
}

/// Grid-wide state of the time stepper.
struct SolverState {
  ScalarField phi_n;
  ScalarField phi_nm1;
  ScalarField g;
  ModelParams params;
  SweepOrder order = SweepOrder::lexicographic;
  long step = 0;
  double t = 0.0;
  double q_last = 1.0;
  /// Warm start for the Q-linear subproblem; empty before the first step.
  ScalarField phi2_guess;
};

/// Starts a run from phi0; the missing history level is phi^{-1} := phi^0.
inline SolverState make_state(ScalarField phi0, ScalarField g, const ModelParams& params,
                              SweepOrder order = SweepOrder::lexicographic) {
  params.validate();
  require_same_grid(phi0, g);
  sync_ghosts(phi0);
  sync_ghosts(g);
  SolverState s;
  s.phi_nm1 = phi0;
  s.phi_n = std::move(phi0);
  s.g = std::move(g);
  s.params = params;
  s.order = order;
  return s;
}

/// Q-independent subproblem: rhs1 = phi^n/dt, rhs2 = S(-phi^n + phi^{n-1}/2) - Lap_d phi^n / 2.
inline LinearSolveResult solve_phi1(const SolverState& st) {
  const ModelParams& p = st.params;
  const ScalarField lap = laplacian7(st.phi_n);
  ScalarField rhs1(st.phi_n.spec()), rhs2(st.phi_n.spec());
  st.phi_n.for_each_interior([&](int, int, int, std::size_t n) {
    rhs1[n] = st.phi_n[n] / p.dt;
    rhs2[n] = p.S * (-st.phi_n[n] + 0.5 * st.phi_nm1[n]) - 0.5 * lap[n];
  });
  return solve_block_system(st.phi_n, rhs1, rhs2, st.g, p, st.order);
}

/// Response to the nonlinear source: rhs1 = 0, rhs2 = F'(phi*)/eps^2.
inline LinearSolveResult solve_phi2(const SolverState& st, const ScalarField& phi_star) {
  const ModelParams& p = st.params;
  const double inv_eps2 = 1.0 / (p.epsilon * p.epsilon);
  ScalarField rhs1(phi_star.spec()), rhs2(phi_star.spec());
  phi_star.for_each_interior([&](int, int, int, std::size_t n) { rhs2[n] = potential_dF(phi_star[n]) * inv_eps2; });
  ScalarField guess = st.phi2_guess.raw().empty() ? ScalarField(phi_star.spec()) : st.phi2_guess;
  return solve_block_system(std::move(guess), rhs1, rhs2, st.g, p, st.order);
}

/// (F(phi^{n+1}) - F(phi^n), 1)_h - Q (F'(phi*), phi^{n+1} - phi^n)_h.
inline double constraint_residual(const ScalarField& phi_np1, const ScalarField& phi_n, const ScalarField& phi_star,
                                  double q) {
  require_same_grid(phi_np1, phi_n);
  require_same_grid(phi_np1, phi_star);
  const double lhs = sum_interior(phi_np1, [&](std::size_t n) {
    return potential_F(phi_np1[n]) - potential_F(phi_n[n]);
  });
  const double rhs = sum_interior(phi_np1, [&](std::size_t n) {
    return potential_dF(phi_star[n]) * (phi_np1[n] - phi_n[n]);
  });
  return phi_np1.spec().cell_volume() * (lhs - q * rhs);
}

/// (F(phi), 1)_h.
inline double potential_integral(const ScalarField& phi) {
  return phi.spec().cell_volume() * sum_interior(phi, [&](std::size_t n) { return potential_F(phi[n]); });
}

struct StepReport {
  double q = 1.0;
  int gs_u = 0;
  int gs_v = 0;
  int newton_iters = 0;
  bool q_degenerate = false;
  bool q_fallback = false;
  bool multiple_roots = false;
  double constraint_residual = 0.0;
  double constraint_bound = 0.0;
};

/// Advances `st` by one time step. Throws NumericalError (or a subclass) when a
/// subsolve fails or the recomposed field violates the energy constraint.
inline StepReport step(SolverState& st) {
  const ModelParams& p = st.params;
  const ScalarField phi_star = extrapolate(st.phi_n, st.phi_nm1);

  LinearSolveResult sub1 = solve_phi1(st);
  LinearSolveResult sub2 = solve_phi2(st, phi_star);

  const GridSpec& spec = st.phi_n.spec();
  const double domain_volume = spec.cell_volume() * double(spec.interior_count());
  const QuarticCoeffs coeffs = quartic_coefficients(sub1.phi, sub2.phi, st.phi_n, phi_star);
  const QSolveResult qs = solve_Q(coeffs, st.q_last, p, domain_volume);

  ScalarField next(spec);
  st.phi_n.for_each_interior([&](int i, int j, int k, std::size_t n) {
    next[n] = sub1.phi[n] + qs.q * sub2.phi[n];
    if (!std::isfinite(next[n])) detail::throw_divergence(i, j, k);
  });
  sync_ghosts(next);

  StepReport rep;
  rep.q = qs.q;
  rep.gs_u = sub1.sweeps;
  rep.gs_v = sub2.sweeps;
  rep.newton_iters = qs.iterations;
  rep.q_degenerate = qs.degenerate;
  rep.q_fallback = qs.used_fallback;
  rep.multiple_roots = qs.multiple_roots;
  rep.constraint_residual = constraint_residual(next, st.phi_n, phi_star, qs.q);
  rep.constraint_bound = p.newton_tol * (1.0 + std::abs(potential_integral(next)));
  if (!qs.degenerate && !(std::abs(rep.constraint_residual) <= rep.constraint_bound)) {
    std::ostringstream os;
    os << "energy constraint residual " << rep.constraint_residual << " exceeds " << rep.constraint_bound;
    throw NumericalError(os.str());
  }

  st.phi_nm1 = std::move(st.phi_n);
  st.phi_n = std::move(next);
  st.phi2_guess = std::move(sub2.phi);
  st.q_last = qs.q;
  st.t += p.dt;
  ++st.step;
  return rep;
}

}  // namespace nvr
