#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nvr/grid.hpp"
#include "nvr/phasefield.hpp"
#include "nvr/solver.hpp"

namespace nvr {

struct EnergyRecord {
  long step = 0;
  double t = 0.0;
  double q = 1.0;
  double e_tilde = 0.0;
  double e_original = 0.0;
  double volume = 0.0;
  int gs_u = 0;
  int gs_v = 0;
  int newton_iters = 0;
};

/// Lyapunov functional of the fully discrete scheme:
///   (1/eps^2)(F(phi^{n+1}), 1)_h + 1/2 |grad_d phi^{n+1}|_e^2 + S/4 |phi^{n+1} - phi^n|_h^2.
inline double discrete_energy(const ScalarField& phi_np1, const ScalarField& phi_n, const ModelParams& p) {
  require_same_grid(phi_np1, phi_n);
  const double bulk = potential_integral(phi_np1) / (p.epsilon * p.epsilon);
  const double grad = 0.5 * grad_norm_e2(phi_np1);
  const double h3 = phi_np1.spec().cell_volume();
  const double jump = h3 * sum_interior(phi_np1, [&](std::size_t n) {
    const double d = phi_np1[n] - phi_n[n];
    return d * d;
  });
  return bulk + grad + 0.25 * p.S * jump;
}

/// Discrete Ginzburg-Landau energy (F(phi)/eps^2, 1)_h + 1/2 |grad_d phi|_e^2.
inline double original_energy(const ScalarField& phi, const ModelParams& p) {
  return potential_integral(phi) / (p.epsilon * p.epsilon) + 0.5 * grad_norm_e2(phi);
}

/// h^3 sum (1 + phi)/2.
inline double volume(const ScalarField& phi) {
  return phi.spec().cell_volume() * sum_interior(phi, [&](std::size_t n) { return 0.5 * (1.0 + phi[n]); });
}

/// Snapshot of a state after `report` (or of the initial state when no step was taken).
inline EnergyRecord make_record(const SolverState& st, const StepReport* report = nullptr) {
  EnergyRecord r;
  r.step = st.step;
  r.t = st.t;
  r.e_tilde = discrete_energy(st.phi_n, st.phi_nm1, st.params);
  r.e_original = original_energy(st.phi_n, st.params);
  r.volume = volume(st.phi_n);
  if (report) {
    r.q = report->q;
    r.gs_u = report->gs_u;
    r.gs_v = report->gs_v;
    r.newton_iters = report->newton_iters;
  }
  return r;
}

struct MonotonicityReport {
  /// Steps whose e_tilde rose above the previous record beyond tolerance.
  std::vector<long> violations;
  bool non_finite = false;

  bool passed() const { return violations.empty() && !non_finite; }
};

/// Flags every record n with e_tilde[n] > e_tilde[n-1] + rel_tol * (1 + |e_tilde[n-1]|).
inline MonotonicityReport monotonicity_report(const std::vector<EnergyRecord>& records, double rel_tol = 1e-10) {
  MonotonicityReport rep;
  for (std::size_t n = 0; n < records.size(); ++n) {
    if (!std::isfinite(records[n].e_tilde)) {
      rep.non_finite = true;
      rep.violations.push_back(records[n].step);
      continue;
    }
    if (n == 0) continue;
    const double prev = records[n - 1].e_tilde;
    if (records[n].e_tilde > prev + rel_tol * (1.0 + std::abs(prev))) rep.violations.push_back(records[n].step);
  }
  return rep;
}

/// True when volume never increases from one record to the next beyond
/// rel_tol * (1 + |V|).
inline bool volume_non_increasing(const std::vector<EnergyRecord>& records, double rel_tol = 1e-12) {
  for (std::size_t n = 1; n < records.size(); ++n)
    if (records[n].volume > records[n - 1].volume + rel_tol * (1.0 + std::abs(records[n - 1].volume))) return false;
  return true;
}

struct VolumeOrderViolation {
  std::size_t record;  ///< index into each run's record list
  std::size_t run;     ///< runs[run] fell below runs[run + 1]
};

/// Checks V_0(t) >= V_1(t) >= ... at every record index shared by all runs.
/// `runs` must be ordered by increasing epsilon and recorded at matched times.
inline std::vector<VolumeOrderViolation> volume_order_violations(const std::vector<std::vector<EnergyRecord>>& runs,
                                                                 double rel_tol = 1e-12) {
  std::vector<VolumeOrderViolation> out;
  if (runs.size() < 2) return out;
  std::size_t common = runs.front().size();
  for (const auto& r : runs) common = std::min(common, r.size());
  for (std::size_t n = 0; n < common; ++n)
    for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
      const double a = runs[k][n].volume, b = runs[k + 1][n].volume;
      if (a < b - rel_tol * (1.0 + std::abs(b))) out.push_back({n, k});
    }
  return out;
}

}  // namespace nvr
