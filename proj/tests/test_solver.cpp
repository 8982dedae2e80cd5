#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nvr/diagnostics.hpp"
#include "nvr/solver.hpp"
#include "oracles.hpp"

using nvr::GridSpec;
using nvr::ScalarField;

namespace {

nvr::ModelParams tight_params(double eps, double dt, double S) {
  nvr::ModelParams p;
  p.epsilon = eps;
  p.chi = eps / 2;
  p.gamma = 0.1;
  p.S = S;
  p.dt = dt;
  p.gs_tol = 1e-28;
  p.gs_max = 20000;
  p.newton_tol = 1e-13;
  return p;
}

/// Radial shell profile around the domain center.
ScalarField shell_phi(const GridSpec& s, double radius, double gamma, double chi) {
  ScalarField phi(s);
  const nvr::Vec3 c{0.5 * s.lx(), 0.5 * s.ly(), 0.5 * s.lz()};
  phi.fill_interior([&](int i, int j, int k) {
    const double d = std::abs(nvr::distance(s.cell_center(i, j, k), c) - radius);
    return std::tanh((gamma - d) / (std::numbers::sqrt2 * chi));
  });
  nvr::sync_ghosts(phi);
  return phi;
}

}  // namespace

TEST(Extrapolate, LinearCombination) {
  const GridSpec s(3, 3, 3, 1.0);
  const ScalarField e = nvr::extrapolate(ScalarField(s, 2.0), ScalarField(s, 1.0));
  e.for_each_interior([&](int, int, int, std::size_t n) { EXPECT_EQ(e[n], 2.5); });
  const ScalarField same = nvr::extrapolate(ScalarField(s, 0.7), ScalarField(s, 0.7));
  same.for_each_interior([&](int, int, int, std::size_t n) { EXPECT_DOUBLE_EQ(same[n], 0.7); });
}

TEST(BlockGaussSeidel, MatchesDenseDirectSolve) {
  std::mt19937_64 rng(23);
  for (auto order : {nvr::SweepOrder::lexicographic, nvr::SweepOrder::red_black}) {
    for (double S : {0.0, 50.0}) {
      const GridSpec s(4, 4, 4, 0.25);
      const ScalarField r1 = oracle::random_field(s, rng, -5, 5);
      const ScalarField r2 = oracle::random_field(s, rng, -5, 5);
      const ScalarField g = oracle::random_field(s, rng, 1e-10, 1.0);
      nvr::ModelParams p = tight_params(0.1, 1e-3, S);
      const auto gs = nvr::solve_block_system(ScalarField(s), r1, r2, g, p, order);
      const auto dense = oracle::solve_block_dense(r1, r2, g, S, p.dt);
      double scale = 0.0;
      for (double v : dense.phi) scale = std::max(scale, std::abs(v));
      EXPECT_LE(oracle::max_diff(gs.phi, dense.phi), 1e-8 * (1.0 + scale));
      double mscale = 0.0;
      for (double v : dense.mu) mscale = std::max(mscale, std::abs(v));
      EXPECT_LE(oracle::max_diff(gs.mu, dense.mu), 1e-8 * (1.0 + mscale));
    }
  }
}

TEST(BlockGaussSeidel, ConvergenceFailureThrows) {
  std::mt19937_64 rng(29);
  const GridSpec s(6, 6, 6, 0.1);
  nvr::ModelParams p = tight_params(0.1, 1.0, 0.0);
  p.gs_max = 2;
  EXPECT_THROW(nvr::solve_block_system(ScalarField(s), oracle::random_field(s, rng), oracle::random_field(s, rng),
                                       ScalarField(s, 1.0), p),
               nvr::ConvergenceError);
}

TEST(BlockGaussSeidel, NonFiniteInputIsDivergence) {
  const GridSpec s(3, 3, 3, 0.1);
  ScalarField r1(s, 0.0);
  r1(2, 2, 2) = std::numeric_limits<double>::infinity();
  nvr::ModelParams p = tight_params(0.1, 1e-3, 0.0);
  ScalarField phi(s), mu(s);
  EXPECT_THROW(nvr::gs_block_sweep(phi, mu, r1, ScalarField(s), ScalarField(s, 1.0), p), nvr::DivergenceError);
}

TEST(Subproblems, UniformBulkIsAFixedPoint) {
  // phi = +-1 everywhere: phi_1 = phi^n, phi_2 = 0 and Q stays 1.
  for (double v : {1.0, -1.0}) {
    for (double dt : {1e-6, 1e-4, 1e-2}) {
      const GridSpec s(5, 4, 3, 0.2);
      nvr::SolverState st =
          nvr::make_state(ScalarField(s, v), ScalarField(s, 0.3), tight_params(0.05, dt, 2.0 / 0.0025));
      for (int n = 0; n < 100; ++n) nvr::step(st);
      st.phi_n.for_each_interior([&](int, int, int, std::size_t c) { EXPECT_NEAR(st.phi_n[c], v, 1e-12); });
      EXPECT_EQ(st.step, 100);
      EXPECT_NEAR(st.t, 100 * dt, 1e-12 * dt * 100);
    }
  }
}

TEST(Subproblems, PhiTwoVanishesOnPureWells) {
  const GridSpec s(4, 4, 4, 0.25);
  ScalarField phi(s);
  phi.fill_interior([](int i, int, int) { return i <= 2 ? 1.0 : -1.0; });
  nvr::sync_ghosts(phi);
  const nvr::SolverState st = nvr::make_state(phi, ScalarField(s, 1.0), tight_params(0.1, 1e-3, 200));
  const auto r = nvr::solve_phi2(st, phi);
  r.phi.for_each_interior([&](int, int, int, std::size_t n) { EXPECT_EQ(r.phi[n], 0.0); });
}

TEST(Subproblems, PhiTwoIsOddInPhiStar) {
  std::mt19937_64 rng(31);
  const GridSpec s(5, 5, 5, 0.2);
  const ScalarField ps = oracle::random_field(s, rng, -1.2, 1.2);
  const ScalarField neg = nvr::map_interior(ps, [](double v) { return -v; });
  const ScalarField g = oracle::random_field(s, rng, 0.01, 1.0);
  const auto p = tight_params(0.1, 1e-3, 200);
  const auto a = nvr::solve_phi2(nvr::make_state(ps, g, p), ps);
  const auto b = nvr::solve_phi2(nvr::make_state(neg, g, p), neg);
  double m = 0.0;
  a.phi.for_each_interior([&](int, int, int, std::size_t n) { m = std::max(m, std::abs(a.phi[n] + b.phi[n])); });
  EXPECT_LE(m, 1e-12);
}

TEST(Quartic, CoefficientsInterpolateDirectEvaluation) {
  std::mt19937_64 rng(37);
  const GridSpec s(5, 4, 6, 0.1);
  for (int trial = 0; trial < 10; ++trial) {
    const ScalarField p1 = oracle::random_field(s, rng, -1.5, 1.5);
    const ScalarField p2 = oracle::random_field(s, rng, -0.5, 0.5);
    const ScalarField pn = oracle::random_field(s, rng, -1.5, 1.5);
    const ScalarField ps = oracle::random_field(s, rng, -1.5, 1.5);
    const nvr::QuarticCoeffs c = nvr::quartic_coefficients(p1, p2, pn, ps);
    // The expansion must agree with the constraint evaluated on phi_1 + Q phi_2.
    for (double q : {-2.0, -0.5, 0.0, 0.3, 1.0, 1.7, 3.0}) {
      ScalarField comb(s);
      comb.fill_interior([&](int i, int j, int k) { return p1(i, j, k) + q * p2(i, j, k); });
      nvr::sync_ghosts(comb);
      // Independent long-double evaluation.
      long double lhs = 0.0L, rhs = 0.0L;
      for (int k = 1; k <= s.nz; ++k)
        for (int j = 1; j <= s.ny; ++j)
          for (int i = 1; i <= s.nx; ++i) {
            const long double x = comb(i, j, k), xn = pn(i, j, k), xs = ps(i, j, k);
            lhs += (x * x - 1) * (x * x - 1) / 4 - (xn * xn - 1) * (xn * xn - 1) / 4;
            rhs += (xs * xs * xs - xs) * (x - xn);
          }
      const double direct = double((lhs - q * rhs) * s.cell_volume());
      EXPECT_NEAR(c(q), direct, 1e-11 * (1.0 + c.magnitude() * std::pow(std::abs(q) + 1, 4)));
      EXPECT_NEAR(nvr::constraint_residual(comb, pn, ps, q), direct, 1e-11 * (1.0 + std::abs(direct)));
    }
  }
}

TEST(Quartic, IdentityStepHasNoConstraint) {
  // phi_1 = phi^n and phi_2 = 0 make P identically zero.
  std::mt19937_64 rng(41);
  const GridSpec s(4, 4, 4, 0.25);
  const ScalarField pn = oracle::random_field(s, rng);
  const nvr::QuarticCoeffs c = nvr::quartic_coefficients(pn, ScalarField(s), pn, pn);
  EXPECT_LE(c.magnitude(), 1e-15);
  const auto r = nvr::solve_Q(c, 0.4, nvr::ModelParams{}, 1.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.q, 1.0);
}

TEST(SolveQ, LinearPolynomial) {
  nvr::QuarticCoeffs c;
  c.c1 = 2.0;
  c.c0 = -3.0;
  const auto r = nvr::solve_Q(c, 1.0, nvr::ModelParams{});
  EXPECT_NEAR(r.q, 1.5, 1e-12);
  EXPECT_FALSE(r.degenerate);
}

TEST(SolveQ, MatchesBisectionOnFactoredQuartics) {
  // (Q - r)(Q - s)(Q^2 + b Q + c) with r in [0, 2], s far from 1 and a
  // positive quadratic: the root closest to 1 is r.
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> ur(0.0, 2.0), us(5.0, 20.0), ub(-1.0, 1.0), uc(1.0, 3.0), ua(0.1, 10);
  nvr::ModelParams p;
  p.newton_tol = 1e-12;
  for (int trial = 0; trial < 100; ++trial) {
    const double r = ur(rng), s = (trial % 2 ? 1.0 : -1.0) * us(rng), b = ub(rng), c = uc(rng), a = ua(rng);
    // Expand a (Q^2 - (r+s) Q + rs)(Q^2 + b Q + c).
    const double p2 = -(r + s), p0 = r * s;
    nvr::QuarticCoeffs q;
    q.c4 = a;
    q.c3 = a * (b + p2);
    q.c2 = a * (c + p2 * b + p0);
    q.c1 = a * (p2 * c + p0 * b);
    q.c0 = a * p0 * c;
    const auto res = nvr::solve_Q(q, 1.0, p);
    // Bracket r strictly away from s.
    const double gap = std::min(0.5, 0.5 * std::abs(s - r));
    const double ref = oracle::bisect([&](double x) { return q(x); }, r - gap, r + gap);
    EXPECT_NEAR(res.q, ref, 1e-9) << "r=" << r << " s=" << s;
    EXPECT_TRUE(res.multiple_roots);
  }
}

TEST(SolveQ, FallsBackWhenDerivativeVanishesAtStart) {
  // P = (Q - 1)^2 - 0.25 has P'(1) = 0; roots 0.5 and 1.5 are equidistant, the
  // bracketing search returns the lower one first.
  nvr::QuarticCoeffs c;
  c.c2 = 1.0;
  c.c1 = -2.0;
  c.c0 = 0.75;
  const auto r = nvr::solve_Q(c, 1.0, nvr::ModelParams{});
  EXPECT_TRUE(r.used_fallback);
  EXPECT_NEAR(std::abs(r.q - 1.0), 0.5, 1e-12);
  EXPECT_NEAR(c(r.q), 0.0, 1e-12);
}

TEST(SolveQ, NoRealRootThrows) {
  nvr::QuarticCoeffs c;
  c.c4 = 1.0;
  c.c0 = 1.0;
  EXPECT_THROW(nvr::solve_Q(c, 1.0, nvr::ModelParams{}), nvr::NumericalError);
}

TEST(SolveQ, RealRootsAscending) {
  nvr::QuarticCoeffs c;  // (Q-1)(Q-2)(Q-3)(Q+4)
  c.c4 = 1;
  c.c3 = -2;
  c.c2 = -13;
  c.c1 = 38;
  c.c0 = -24;
  const auto roots = nvr::quartic_real_roots(c, -10, 10);
  ASSERT_EQ(roots.size(), 4u);
  const double expect[4] = {-4, 1, 2, 3};
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(roots[std::size_t(n)], expect[n], 1e-12);
}

TEST(Step, EnergyDecreasesOnASmallShell) {
  const GridSpec s(16, 16, 16, 1.0 / 16);
  const double eps = nvr::epsilon_from_cells(4, s.h);
  for (double S : {0.0, 2.0 / (eps * eps)}) {
    auto p = tight_params(eps, 2e-5, S);
    p.gs_tol = 1e-22;
    const ScalarField phi0 = shell_phi(s, 0.3, 2 * s.h, eps / 2);
    nvr::SolverState st = nvr::make_state(phi0, nvr::edge_function(phi0, 1e-10), p);
    std::vector<nvr::EnergyRecord> rec{nvr::make_record(st)};
    for (int n = 0; n < 20; ++n) {
      const auto rep = nvr::step(st);
      rec.push_back(nvr::make_record(st, &rep));
      EXPECT_LE(std::abs(rep.constraint_residual), rep.constraint_bound);
    }
    EXPECT_TRUE(nvr::monotonicity_report(rec).passed());
  }
}

TEST(Step, MirrorSymmetryIsPreserved) {
  const GridSpec s(12, 12, 12, 1.0 / 12);
  const double eps = nvr::epsilon_from_cells(3, s.h);
  for (auto order : {nvr::SweepOrder::lexicographic, nvr::SweepOrder::red_black}) {
    auto p = tight_params(eps, 1e-5, 2.0 / (eps * eps));
    const ScalarField phi0 = shell_phi(s, 0.3, 2 * s.h, eps / 2);
    nvr::SolverState st = nvr::make_state(phi0, nvr::edge_function(phi0, 1e-10), p, order);
    for (int n = 0; n < 5; ++n) nvr::step(st);
    double m = 0.0;
    for (int k = 1; k <= s.nz; ++k)
      for (int j = 1; j <= s.ny; ++j)
        for (int i = 1; i <= s.nx; ++i) {
          const double v = st.phi_n(i, j, k);
          m = std::max(m, std::abs(v - st.phi_n(s.nx + 1 - i, j, k)));
          m = std::max(m, std::abs(v - st.phi_n(i, s.ny + 1 - j, k)));
          m = std::max(m, std::abs(v - st.phi_n(i, j, s.nz + 1 - k)));
          m = std::max(m, std::abs(v - st.phi_n(j, i, k)));
        }
    EXPECT_LE(m, 1e-10);
  }
}

TEST(Step, RedBlackAgreesWithLexicographic) {
  const GridSpec s(12, 12, 12, 1.0 / 12);
  const double eps = nvr::epsilon_from_cells(3, s.h);
  auto p = tight_params(eps, 1e-5, 2.0 / (eps * eps));
  const ScalarField phi0 = shell_phi(s, 0.3, 2 * s.h, eps / 2);
  const ScalarField g = nvr::edge_function(phi0, 1e-10);
  nvr::SolverState a = nvr::make_state(phi0, g, p, nvr::SweepOrder::lexicographic);
  nvr::SolverState b = nvr::make_state(phi0, g, p, nvr::SweepOrder::red_black);
  for (int n = 0; n < 5; ++n) {
    nvr::step(a);
    nvr::step(b);
  }
  EXPECT_LE(nvr::max_abs_diff(a.phi_n, b.phi_n), 1e-10);
}

TEST(Step, ErrorRatioUnderStepHalving) {
  // Successive differences of a second-order scheme shrink by about 4.
  const GridSpec s(12, 12, 12, 1.0 / 12);
  const double eps = nvr::epsilon_from_cells(3, s.h);
  const ScalarField phi0 = shell_phi(s, 0.3, 2 * s.h, eps / 2);
  const ScalarField g = nvr::edge_function(phi0, 1e-10);
  const double T = 4e-4;
  auto run = [&](int steps) {
    auto p = tight_params(eps, T / steps, 2.0 / (eps * eps));
    nvr::SolverState st = nvr::make_state(phi0, g, p);
    for (int n = 0; n < steps; ++n) nvr::step(st);
    return st.phi_n;
  };
  const ScalarField a = run(8), b = run(16), c = run(32);
  auto diff = [](const ScalarField& x, const ScalarField& y) {
    ScalarField d(x.spec());
    x.for_each_interior([&](int, int, int, std::size_t n) { d[n] = x[n] - y[n]; });
    return std::sqrt(nvr::norm_h2(d));
  };
  const double ratio = diff(a, b) / diff(b, c);
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.5);
}

TEST(Step, ReportsSubsolveWork) {
  const GridSpec s(8, 8, 8, 1.0 / 8);
  const double eps = nvr::epsilon_from_cells(3, s.h);
  auto p = tight_params(eps, 1e-4, 0.0);
  p.newton_tol = 1e-13;
  const ScalarField phi0 = shell_phi(s, 0.3, 2 * s.h, eps / 2);
  nvr::SolverState st = nvr::make_state(phi0, nvr::edge_function(phi0, 1e-10), p);
  const auto rep = nvr::step(st);
  EXPECT_LE(std::abs(rep.constraint_residual), rep.constraint_bound);
  EXPECT_GT(rep.gs_u, 0);
  EXPECT_GT(rep.gs_v, 0);
}
