#pragma once

// Model parameters, the double-well potential, the initial shell profile and
// the edge-detection weight.

#include <cmath>
#include <numbers>
#include <string>

#include "nvr/error.hpp"
#include "nvr/grid.hpp"

namespace nvr {

struct ModelParams {
  double epsilon = 0.01;  ///< interface thickness
  double chi = 0.005;     ///< initialization steepness, 0 < chi < epsilon
  double gamma = 0.05;    ///< half-width of the initial shell
  double lambda = 1e-10;  ///< floor of the edge function
  double S = 2.0 / (0.01 * 0.01);
  double dt = 1e-5;

  double gs_tol = 1e-6;  ///< on the squared h-norm of a sweep increment
  int gs_max = 500;
  double newton_tol = 1e-6;  ///< on |dQ|
  int newton_max = 200;

  /// Throws InputError naming the first violated constraint.
  void validate() const {
    auto fail = [](const std::string& m) { throw InputError("invalid model parameters: " + m); };
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (!(chi > 0.0 && chi < epsilon)) fail("chi must satisfy 0 < chi < epsilon");
    if (!(gamma > 0.0)) fail("gamma must be > 0");
    if (!(lambda > 0.0)) fail("lambda must be > 0");
    if (!(S >= 0.0) || !std::isfinite(S)) fail("S must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt must be > 0");
    if (!(gs_tol > 0.0)) fail("gs_tol must be > 0");
    if (!(newton_tol > 0.0)) fail("newton_tol must be > 0");
    if (gs_max < 1) fail("gs_max must be >= 1");
    if (newton_max < 1) fail("newton_max must be >= 1");
  }
};

enum class StabilizationMode { zero, two_over_eps2, four_over_eps2, explicit_value };

inline double stabilization_constant(StabilizationMode mode, double epsilon, double explicit_value = 0.0) {
  switch (mode) {
    case StabilizationMode::zero: return 0.0;
    case StabilizationMode::two_over_eps2: return 2.0 / (epsilon * epsilon);
    case StabilizationMode::four_over_eps2: return 4.0 / (epsilon * epsilon);
    case StabilizationMode::explicit_value: return explicit_value;
  }
  return 0.0;
}

/// Double-well potential F(phi) = (phi^2 - 1)^2 / 4.
constexpr double potential_F(double phi) {
  const double a = phi * phi - 1.0;
  return 0.25 * a * a;
}

/// F'(phi) = phi^3 - phi.
constexpr double potential_dF(double phi) { return phi * phi * phi - phi; }

/// Interface thickness that spreads the 90% transition (-0.9 .. 0.9) over m cells.
inline double epsilon_from_cells(double m, double h) {
  if (!(m > 0.0)) throw InputError("epsilon cell count must be > 0");
  return m * h / (2.0 * std::numbers::sqrt2 * std::atanh(0.9));
}

/// phi0 = tanh((gamma - d) / (sqrt(2) chi)).
inline ScalarField init_phi(const ScalarField& d, const ModelParams& p) {
  const double s = 1.0 / (std::numbers::sqrt2 * p.chi);
  return map_interior(d, [&](double dist) { return std::tanh((p.gamma - dist) * s); });
}

/// g = 1 - phi0^2 + lambda, bounded in [lambda, 1 + lambda].
inline ScalarField edge_function(const ScalarField& phi0, double lambda) {
  return map_interior(phi0, [&](double v) {
    const double c = std::min(1.0, v * v);
    return 1.0 - c + lambda;
  });
}

}  // namespace nvr
