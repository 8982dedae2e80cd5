// Command-line front end: reconstruct, convergence and sweep subcommands.

#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nvr/config.hpp"
#include "nvr/driver.hpp"

namespace {

struct Flag {
  const char* name;  // command-line spelling
  const char* key;   // configuration key
  const char* help;
};

const std::vector<Flag>& flags() {
  static const std::vector<Flag> f = {
      {"--input", "input", "point file (.xyz or .ply) or icosphere:<level>"},
      {"--format", "format", "xyz, ply or auto"},
      {"--nx", "nx", "cells along x"},
      {"--ny", "ny", "cells along y"},
      {"--nz", "nz", "cells along z"},
      {"--lx", "lx", "domain length along x (h = lx / nx)"},
      {"--ly", "ly", "domain length along y (must equal h * ny)"},
      {"--lz", "lz", "domain length along z (must equal h * nz)"},
      {"--epsilon", "epsilon", "interface thickness"},
      {"--epsilon-cells", "epsilon_cells", "interface thickness as a cell count"},
      {"--chi", "chi", "initial profile steepness (default epsilon / 2)"},
      {"--gamma", "gamma", "initial shell half-width (default 5 h)"},
      {"--lambda", "lambda", "edge function floor"},
      {"--s-mode", "s_mode", "zero, 2/eps2, 4/eps2 or explicit"},
      {"--s-value", "s_value", "S for --s-mode explicit"},
      {"--dt", "dt", "time step"},
      {"--steps", "steps", "number of steps"},
      {"--T", "T", "final time (a multiple of dt)"},
      {"--margin", "margin", "fraction of the domain kept free on each side"},
      {"--stride", "stride", "keep every n-th input point"},
      {"--out-field", "out_field", "VTK file for the final phase field"},
      {"--out-mesh", "out_mesh", "OBJ file for the zero level set"},
      {"--out-csv", "out_csv", "CSV output (energy trace, rate table or sweep summary)"},
      {"--out-dir", "out_dir", "directory for per-run sweep CSVs"},
      {"--parallel", "parallel", "serial or redblack"},
      {"--gs-tol", "gs_tol", "Gauss-Seidel tolerance on the squared increment norm"},
      {"--gs-max", "gs_max", "Gauss-Seidel sweep cap"},
      {"--newton-tol", "newton_tol", "Newton tolerance on |dQ|"},
      {"--newton-max", "newton_max", "Newton iteration cap"},
      {"--sweep-dt", "sweep_dt", "comma-separated dt multipliers"},
      {"--sweep-epsilon", "sweep_epsilon", "comma-separated epsilon values"},
      {"--sweep-s-modes", "sweep_s_modes", "comma-separated S modes"},
      {"--multipliers", "convergence_multipliers", "comma-separated dt multipliers of the convergence study"},
  };
  return f;
}

struct Subcommand {
  explicit Subcommand(CLI::App* a) : app(a), values(flags().size()) {}

  CLI::App* app;
  std::string config_path;
  std::vector<std::string> values;
};

void add_flags(Subcommand& s) {
  s.app->add_option("--config", s.config_path, "key = value configuration file");
  std::vector<CLI::Option*> opts;
  for (std::size_t n = 0; n < flags().size(); ++n)
    opts.push_back(s.app->add_option(flags()[n].name, s.values[n], flags()[n].help));
  auto find = [&](const std::string& name) {
    for (std::size_t n = 0; n < flags().size(); ++n)
      if (name == flags()[n].name) return opts[n];
    return static_cast<CLI::Option*>(nullptr);
  };
  find("--epsilon")->excludes(find("--epsilon-cells"));
  find("--steps")->excludes(find("--T"));
}

nvr::RunConfig resolve(const Subcommand& s) {
  const nvr::KeyValues file = s.config_path.empty() ? nvr::KeyValues{} : nvr::load_key_values(s.config_path);
  nvr::KeyValues overrides;
  for (std::size_t n = 0; n < flags().size(); ++n)
    if (s.app->count(flags()[n].name) > 0) overrides.emplace_back(flags()[n].key, s.values[n]);
  return nvr::build_config(file, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrow-volume reconstruction from point clouds with an edge-weighted Allen-Cahn flow"};
  app.require_subcommand(1);
  Subcommand rec(app.add_subcommand("reconstruct", "evolve one run and write field, mesh and energy trace"));
  Subcommand conv(app.add_subcommand("convergence", "temporal convergence study against a fine-step reference"));
  Subcommand sweep(app.add_subcommand("sweep", "dt x epsilon x S sweep with per-run stability verdicts"));
  for (Subcommand* s : {&rec, &conv, &sweep}) add_flags(*s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nvr::kExitOk : nvr::kExitUsage;
  }

  try {
    if (rec.app->parsed()) return nvr::run_reconstruct(resolve(rec), std::cerr);

    if (conv.app->parsed()) {
      const auto report = nvr::run_convergence(resolve(conv), std::cerr);
      std::cerr << std::setw(14) << "dt" << std::setw(16) << "L2 error" << std::setw(10) << "rate" << '\n';
      for (const auto& r : report.rows) {
        std::cerr << std::setw(14) << r.dt << std::setw(16) << r.error;
        if (r.rate) std::cerr << std::setw(10) << std::fixed << std::setprecision(4) << *r.rate << std::defaultfloat;
        std::cerr << '\n';
      }
      return nvr::kExitOk;
    }

    const auto report = nvr::run_sweep(resolve(sweep), std::cerr);
    return report.exit_code();
  } catch (const nvr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return nvr::kExitNumerical;
  } catch (const nvr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nvr::kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nvr::kExitUsage;
  }
}
