#pragma once

// Experiment drivers behind the command-line tool: one reconstruction run,
// the temporal convergence study and parameter sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nvr/config.hpp"
#include "nvr/diagnostics.hpp"
#include "nvr/error.hpp"
#include "nvr/extract.hpp"
#include "nvr/grid.hpp"
#include "nvr/phasefield.hpp"
#include "nvr/pointcloud.hpp"
#include "nvr/solver.hpp"
#include "nvr/synthetic.hpp"

namespace nvr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUnstable = 3;

enum class RunStatus {
  ok,
  unstable,           ///< energy increase or non-finite field
  numerical_failure,  ///< a subsolve failed (no multiplier root, GS cap, ...)
};

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::unstable: return "unstable";
    case RunStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

inline int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return kExitOk;
    case RunStatus::unstable: return kExitUnstable;
    case RunStatus::numerical_failure: return kExitNumerical;
  }
  return kExitNumerical;
}

inline const char* to_string(StabilizationMode m) {
  switch (m) {
    case StabilizationMode::zero: return "zero";
    case StabilizationMode::two_over_eps2: return "2/eps2";
    case StabilizationMode::four_over_eps2: return "4/eps2";
    case StabilizationMode::explicit_value: return "explicit";
  }
  return "?";
}

/// Loads the configured cloud. "icosphere:<level>" yields a synthetic sphere.
inline PointCloud load_cloud(const RunConfig& cfg) {
  constexpr std::string_view synth = "icosphere:";
  if (cfg.input.empty()) throw InputError("no input point cloud given");
  if (cfg.input.rfind(synth, 0) == 0) {
    const std::string level = cfg.input.substr(synth.size());
    const long l = detail::to_long("input", level);
    if (l < 0 || l > 8) throw InputError("icosphere level must lie in [0, 8]");
    return icosphere(int(l));
  }
  return load_points(cfg.input, cfg.format ? *cfg.format : format_from_path(cfg.input));
}

/// Grid and unsigned distance field of the fitted cloud.
struct Problem {
  GridSpec spec;
  ScalarField distance;
  std::size_t points = 0;
};

inline Problem prepare_problem(const RunConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec spec = cfg.grid();
  PointCloud pc = subsample(load_cloud(cfg), cfg.stride);
  pc = fit_to_domain(pc, spec, cfg.margin);
  Problem p{spec, distance_field(build_index(pc, 2.0 * spec.h), spec), pc.size()};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << "distance field: " << pc.size() << " points on " << spec.nx << "x" << spec.ny << "x" << spec.nz
      << " cells, h = " << spec.h << " (" << std::fixed << std::setprecision(3) << secs << " s)"
      << std::defaultfloat << std::setprecision(6) << '\n';
  return p;
}

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string message;
  std::vector<EnergyRecord> records;  ///< initial state first
  std::vector<StepReport> reports;    ///< one per accepted step
  ScalarField phi;                    ///< last accepted state
  MonotonicityReport monotonicity;
};

/// Advances phi0 for `steps` steps. Never throws on numerical trouble: the
/// run stops at the first failed step and the status says why. An energy
/// increase does not stop the run.
inline RunResult simulate(const ScalarField& phi0, const ScalarField& g, const ModelParams& params, long steps,
                          SweepOrder order = SweepOrder::lexicographic, std::ostream* log = nullptr) {
  SolverState st = make_state(phi0, g, params, order);
  RunResult r;
  r.records.push_back(make_record(st));
  const long every = std::max(1L, steps / 10);
  for (long n = 0; n < steps; ++n) {
    try {
      StepReport rep = step(st);
      r.records.push_back(make_record(st, &rep));
      r.reports.push_back(rep);
    } catch (const DivergenceError& e) {
      r.status = RunStatus::unstable;
      r.message = e.what();
      break;
    } catch (const NumericalError& e) {
      r.status = RunStatus::numerical_failure;
      r.message = e.what();
      break;
    }
    const EnergyRecord& rec = r.records.back();
    if (!std::isfinite(rec.e_tilde)) {
      r.status = RunStatus::unstable;
      r.message = "non-finite energy at step " + std::to_string(rec.step);
      break;
    }
    if (log && (rec.step % every == 0 || rec.step == steps))
      *log << "step " << rec.step << "/" << steps << "  t = " << rec.t << "  E~ = " << rec.e_tilde
           << "  V = " << rec.volume << "  Q = " << rec.q << "  GS " << rec.gs_u << "+" << rec.gs_v
           << "  Newton " << rec.newton_iters << '\n';
  }
  if (log) {
    long multi = 0, fallback = 0;
    for (const auto& rep : r.reports) {
      multi += rep.multiple_roots;
      fallback += rep.q_fallback;
    }
    if (multi > 0)
      *log << "multiplier equation had several real roots at " << multi
           << " step(s); the root closest to 1 was used\n";
    if (fallback > 0) *log << "Newton fell back to root bracketing at " << fallback << " step(s)\n";
  }
  r.monotonicity = monotonicity_report(r.records);
  if (r.status == RunStatus::ok && !r.monotonicity.passed()) {
    r.status = RunStatus::unstable;
    r.message = "energy increased at " + std::to_string(r.monotonicity.violations.size()) + " step(s), first " +
                std::to_string(r.monotonicity.violations.front());
  }
  r.phi = std::move(st.phi_n);
  return r;
}

/// Builds phi0 and g from the distance field, then simulates.
inline RunResult simulate(const Problem& problem, const ModelParams& params, long steps,
                          SweepOrder order = SweepOrder::lexicographic, std::ostream* log = nullptr) {
  const ScalarField phi0 = init_phi(problem.distance, params);
  return simulate(phi0, edge_function(phi0, params.lambda), params, steps, order, log);
}

/// Load, fit, distance, initialize, evolve, then write whatever outputs are
/// configured. Outputs are written even when the run failed.
inline int run_reconstruct(const RunConfig& cfg, std::ostream& log) {
  const Problem problem = prepare_problem(cfg, log);
  const ModelParams p = cfg.model();
  log << "epsilon = " << p.epsilon << "  chi = " << p.chi << "  gamma = " << p.gamma << "  S = " << p.S
      << "  dt = " << p.dt << '\n';
  const RunResult r = simulate(problem, p, cfg.step_count(), cfg.order, &log);

  if (!cfg.out_csv.empty()) write_energy_csv(r.records, cfg.out_csv);
  if (!cfg.out_field.empty()) write_vtk_structured(r.phi, cfg.out_field);
  if (!cfg.out_mesh.empty()) {
    const IsoMesh mesh = marching_cubes(r.phi);
    write_obj(mesh, cfg.out_mesh);
    log << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles\n";
  }
  if (r.status != RunStatus::ok) log << "run " << to_string(r.status) << ": " << r.message << '\n';
  return exit_code(r.status);
}

struct ConvergenceRow {
  double dt = 0.0;
  double error = 0.0;
  std::optional<double> rate;  ///< against the previous (coarser) row
};

/// Orders (dt, error) pairs from coarse to fine and computes
/// rate = log(e_coarse / e_fine) / log(dt_coarse / dt_fine) between neighbors
/// (log2 of the error ratio for halvings). Duplicate dt values are rejected.
inline std::vector<ConvergenceRow> convergence_table(std::vector<std::pair<double, double>> dt_error) {
  std::sort(dt_error.begin(), dt_error.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<ConvergenceRow> rows;
  for (std::size_t n = 0; n < dt_error.size(); ++n) {
    ConvergenceRow row{dt_error[n].first, dt_error[n].second, std::nullopt};
    if (n > 0) {
      const auto& prev = dt_error[n - 1];
      if (prev.first == row.dt) throw InputError("duplicate time step in convergence table");
      row.rate = std::log(prev.second / row.error) / std::log(prev.first / row.dt);
    }
    rows.push_back(row);
  }
  return rows;
}

struct ConvergenceReport {
  double reference_dt = 0.0;
  double final_time = 0.0;
  std::vector<ConvergenceRow> rows;
};

/// Reference run at cfg.dt; runs at each multiple to the same final time;
/// errors are h-norms of the difference to the reference. Throws
/// NumericalError when any run fails.
inline ConvergenceReport run_convergence(const RunConfig& cfg, std::ostream& log,
                                         const Problem* prepared = nullptr) {
  std::optional<Problem> own;
  if (!prepared) own = prepare_problem(cfg, log);
  const Problem& problem = prepared ? *prepared : *own;
  const long n_ref = cfg.step_count();
  for (int m : cfg.convergence_multipliers)
    if (n_ref % m != 0)
      throw InputError("reference step count " + std::to_string(n_ref) + " is not divisible by multiplier " +
                       std::to_string(m));

  auto run = [&](int m) {
    const ModelParams p = cfg.model(cfg.resolved_epsilon(), cfg.s_mode, cfg.dt * m);
    RunResult r = simulate(problem, p, n_ref / m, cfg.order);
    if (r.records.back().step != n_ref / m)
      throw NumericalError("convergence run at dt = " + std::to_string(p.dt) + " failed: " + r.message);
    if (r.status != RunStatus::ok)
      log << "warning: run at dt = " << p.dt << " is " << to_string(r.status) << ": " << r.message << '\n';
    return r.phi;
  };

  ConvergenceReport rep;
  rep.reference_dt = cfg.dt;
  rep.final_time = cfg.dt * double(n_ref);
  log << "reference: dt = " << cfg.dt << ", " << n_ref << " steps to T = " << rep.final_time << '\n';
  const ScalarField ref = run(1);
  std::vector<std::pair<double, double>> pairs;
  for (int m : cfg.convergence_multipliers) {
    const ScalarField phi = run(m);
    ScalarField diff(phi.spec());
    phi.for_each_interior([&](int, int, int, std::size_t n) { diff[n] = phi[n] - ref[n]; });
    pairs.emplace_back(cfg.dt * m, std::sqrt(norm_h2(diff)));
    log << "dt = " << cfg.dt * m << "  error = " << pairs.back().second << '\n';
  }
  rep.rows = convergence_table(std::move(pairs));

  if (!cfg.out_csv.empty()) {
    auto out = detail::open_output(cfg.out_csv);
    out << "dt,error,rate\n";
    for (const auto& r : rep.rows) {
      out << r.dt << ',' << r.error << ',';
      if (r.rate) out << *r.rate;
      out << '\n';
    }
    detail::finish(out, cfg.out_csv);
  }
  return rep;
}

struct SweepRun {
  double dt = 0.0;
  double epsilon = 0.0;
  StabilizationMode mode = StabilizationMode::two_over_eps2;
  double S = 0.0;
  RunStatus status = RunStatus::ok;
  std::string message;
  long steps_done = 0;
  double final_volume = 0.0;
  double final_energy = 0.0;
  bool volume_decreasing = false;
  std::string csv;
  std::vector<EnergyRecord> records;
};

struct SweepReport {
  std::vector<SweepRun> runs;
  /// Per (dt, S mode) group with several epsilons: record indices where the
  /// ordering V_{eps_small} >= V_{eps_large} fails.
  std::vector<VolumeOrderViolation> volume_order;
  bool volume_order_checked = false;

  /// 3 if any run was unstable, else 2 if any failed numerically, else 0.
  int exit_code() const {
    bool unstable = false, failed = false;
    for (const auto& r : runs) {
      unstable |= r.status == RunStatus::unstable;
      failed |= r.status == RunStatus::numerical_failure;
    }
    return unstable ? kExitUnstable : failed ? kExitNumerical : kExitOk;
  }
};

/// Cartesian sweep over dt multipliers x epsilons x S modes. Writes one
/// energy CSV per run into cfg.out_dir plus a summary (cfg.out_csv or
/// out_dir/sweep_summary.csv).
inline SweepReport run_sweep(const RunConfig& cfg, std::ostream& log, const Problem* prepared = nullptr) {
  std::optional<Problem> own;
  if (!prepared) own = prepare_problem(cfg, log);
  const Problem& problem = prepared ? *prepared : *own;
  std::vector<double> eps = cfg.sweep_epsilon.empty() ? std::vector<double>{cfg.resolved_epsilon()} : cfg.sweep_epsilon;
  std::sort(eps.begin(), eps.end());
  const std::vector<StabilizationMode> modes =
      cfg.sweep_s_modes.empty() ? std::vector<StabilizationMode>{cfg.s_mode} : cfg.sweep_s_modes;
  const long steps = cfg.step_count();
  std::filesystem::create_directories(cfg.out_dir);

  SweepReport rep;
  std::size_t index = 0;
  for (double mult : cfg.sweep_dt)
    for (StabilizationMode mode : modes) {
      std::vector<std::vector<EnergyRecord>> group;
      for (double e : eps) {
        const ModelParams p = cfg.model(e, mode, cfg.dt * mult);
        log << "run " << index << ": dt = " << p.dt << "  epsilon = " << e << "  S = " << p.S << " (" << to_string(mode)
            << ")\n";
        RunResult r = simulate(problem, p, steps, cfg.order);
        SweepRun s;
        s.dt = p.dt;
        s.epsilon = e;
        s.mode = mode;
        s.S = p.S;
        s.status = r.status;
        s.message = r.message;
        s.steps_done = r.records.back().step;
        s.final_volume = r.records.back().volume;
        s.final_energy = r.records.back().e_tilde;
        s.volume_decreasing = volume_non_increasing(r.records);
        std::ostringstream name;
        name << "run_" << index << ".csv";
        s.csv = (std::filesystem::path(cfg.out_dir) / name.str()).string();
        write_energy_csv(r.records, s.csv);
        log << "  " << to_string(s.status) << (s.message.empty() ? "" : ": " + s.message) << '\n';
        s.records = std::move(r.records);
        group.push_back(s.records);
        rep.runs.push_back(std::move(s));
        ++index;
      }
      if (group.size() > 1) {
        rep.volume_order_checked = true;
        for (const auto& v : volume_order_violations(group)) rep.volume_order.push_back(v);
      }
    }

  const std::string summary =
      cfg.out_csv.empty() ? (std::filesystem::path(cfg.out_dir) / "sweep_summary.csv").string() : cfg.out_csv;
  auto out = detail::open_output(summary);
  out << "run,dt,epsilon,s_mode,S,status,steps,final_volume,final_e_tilde,volume_decreasing,csv\n";
  for (std::size_t n = 0; n < rep.runs.size(); ++n) {
    const auto& r = rep.runs[n];
    out << n << ',' << r.dt << ',' << r.epsilon << ',' << to_string(r.mode) << ',' << r.S << ',' << to_string(r.status)
        << ',' << r.steps_done << ',' << r.final_volume << ',' << r.final_energy << ','
        << (r.volume_decreasing ? 1 : 0) << ',' << r.csv << '\n';
  }
  detail::finish(out, summary);
  if (rep.volume_order_checked)
    log << "volume ordering across epsilon: "
        << (rep.volume_order.empty() ? "holds" : std::to_string(rep.volume_order.size()) + " violation(s)") << '\n';
  return rep;
}

}  // namespace nvr
