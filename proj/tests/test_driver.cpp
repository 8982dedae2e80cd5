#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "nvr/driver.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvr_driver_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nvr::RunConfig small_config(const fs::path& dir) {
  return nvr::build_config({{"input", "icosphere:3"},
                            {"nx", "24"},
                            {"ny", "24"},
                            {"nz", "24"},
                            {"margin", "0.2"},
                            {"dt", "1e-5"},
                            {"steps", "6"},
                            {"gs_tol", "1e-16"},
                            {"out_dir", dir.string()}});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NVR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ConvergenceTable, SecondOrderManufacturedErrors) {
  // Errors of y' = -y with a second-order method: e = C dt^2 exactly.
  std::vector<std::pair<double, double>> pairs;
  for (double dt : {1e-4, 4e-4, 2e-4, 8e-4}) pairs.emplace_back(dt, 3.7 * dt * dt);
  const auto rows = nvr::convergence_table(pairs);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].dt, 8e-4);
  EXPECT_FALSE(rows[0].rate.has_value());
  for (std::size_t n = 1; n < rows.size(); ++n) {
    ASSERT_TRUE(rows[n].rate.has_value());
    EXPECT_NEAR(*rows[n].rate, 2.0, 1e-12);
    EXPECT_LT(rows[n].dt, rows[n - 1].dt);
  }
}

TEST(ConvergenceTable, NonUniformRatiosAndDuplicates) {
  const auto rows = nvr::convergence_table({{1.0, 1.0}, {0.1, 0.001}});
  EXPECT_NEAR(*rows[1].rate, 3.0, 1e-12);
  EXPECT_THROW(nvr::convergence_table({{1.0, 1.0}, {1.0, 0.5}}), nvr::InputError);
}

TEST(Driver, SmallReconstructStaysNearTheSurface) {
  const auto dir = scratch("reconstruct");
  nvr::RunConfig cfg = small_config(dir);
  std::ostringstream log;
  const nvr::Problem prob = nvr::prepare_problem(cfg, log);
  EXPECT_EQ(prob.points, 642u);
  const auto p = cfg.model();
  const auto r = nvr::simulate(prob, p, cfg.step_count());
  EXPECT_EQ(r.status, nvr::RunStatus::ok) << r.message;
  EXPECT_EQ(r.records.size(), 7u);
  EXPECT_TRUE(r.monotonicity.passed());
  const nvr::IsoMesh mesh = nvr::marching_cubes(r.phi);
  ASSERT_FALSE(mesh.empty());
  const nvr::Vec3 c{0.5, 0.5, 0.5};
  for (const auto& v : mesh.vertices) {
    const double d = std::abs(nvr::distance(v, c) - 0.3);
    EXPECT_LE(d, p.gamma + 3 * p.epsilon);
  }
}

TEST(Driver, ReconstructWritesOutputsAndIsDeterministic) {
  const auto dir = scratch("determinism");
  std::string csv[2];
  for (int n = 0; n < 2; ++n) {
    nvr::RunConfig cfg = small_config(dir);
    cfg.out_csv = (dir / ("e" + std::to_string(n) + ".csv")).string();
    cfg.out_field = (dir / "phi.vtk").string();
    cfg.out_mesh = (dir / "mesh.obj").string();
    std::ostringstream log;
    EXPECT_EQ(nvr::run_reconstruct(cfg, log), nvr::kExitOk) << log.str();
    csv[n] = slurp(cfg.out_csv);
  }
  EXPECT_FALSE(csv[0].empty());
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_GT(fs::file_size(dir / "phi.vtk"), 0u);
  EXPECT_GT(fs::file_size(dir / "mesh.obj"), 0u);
}

TEST(Driver, UniformBulkIsUnchanged) {
  const nvr::GridSpec s(6, 6, 6, 1.0 / 6);
  nvr::ModelParams p;
  const nvr::ScalarField one(s, 1.0);
  const auto r = nvr::simulate(one, nvr::ScalarField(s, 0.5), p, 20);
  EXPECT_EQ(r.status, nvr::RunStatus::ok);
  EXPECT_LE(nvr::max_abs_diff(r.phi, one), 1e-12);
  for (const auto& rec : r.records) EXPECT_LE(std::abs(rec.e_tilde), 1e-12);
}

TEST(Driver, FailureStatusMapsToExitCode) {
  EXPECT_EQ(nvr::exit_code(nvr::RunStatus::ok), 0);
  EXPECT_EQ(nvr::exit_code(nvr::RunStatus::numerical_failure), 2);
  EXPECT_EQ(nvr::exit_code(nvr::RunStatus::unstable), 3);
  // A sweep cap of one sweep forces a convergence failure: numerical, not unstable.
  const nvr::GridSpec s(8, 8, 8, 1.0 / 8);
  nvr::ScalarField phi(s);
  phi.fill_interior([&](int i, int, int) { return i <= 4 ? 1.0 : -1.0; });
  nvr::sync_ghosts(phi);
  nvr::ModelParams p;
  p.gs_max = 1;
  p.gs_tol = 1e-30;
  const auto r = nvr::simulate(phi, nvr::ScalarField(s, 1.0), p, 3);
  EXPECT_EQ(r.status, nvr::RunStatus::numerical_failure);
  EXPECT_EQ(r.records.size(), 1u);
}

TEST(Driver, ConvergenceStudyOnSmallGrid) {
  const auto dir = scratch("convergence");
  nvr::RunConfig cfg = small_config(dir);
  cfg.dt = 1e-6;
  cfg.steps = 16;
  cfg.gs_tol = 1e-22;
  cfg.gs_max = 5000;
  cfg.newton_tol = 1e-12;
  cfg.convergence_multipliers = {2, 4, 8};
  cfg.out_csv = (dir / "rates.csv").string();
  std::ostringstream log;
  const auto rep = nvr::run_convergence(cfg, log);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(rep.final_time, 16e-6);
  for (std::size_t n = 1; n < rep.rows.size(); ++n) {
    EXPECT_LT(rep.rows[n].error, rep.rows[n - 1].error);
    EXPECT_GT(*rep.rows[n].rate, 1.5);
  }
  EXPECT_EQ(slurp(cfg.out_csv).rfind("dt,error,rate\n", 0), 0u);

  cfg.convergence_multipliers = {3};
  EXPECT_THROW(nvr::run_convergence(cfg, log), nvr::InputError);
}

TEST(Driver, SweepWritesPerRunAndSummaryFiles) {
  const auto dir = scratch("sweep");
  nvr::RunConfig cfg = small_config(dir);
  cfg.steps = 3;
  cfg.sweep_epsilon = {0.03, 0.02};
  cfg.sweep_s_modes = {nvr::StabilizationMode::zero, nvr::StabilizationMode::two_over_eps2};
  std::ostringstream log;
  const auto rep = nvr::run_sweep(cfg, log);
  ASSERT_EQ(rep.runs.size(), 4u);
  EXPECT_TRUE(rep.volume_order_checked);
  EXPECT_LT(rep.runs[0].epsilon, rep.runs[1].epsilon);
  for (const auto& r : rep.runs) {
    EXPECT_EQ(r.status, nvr::RunStatus::ok) << r.message;
    EXPECT_EQ(r.steps_done, 3);
    EXPECT_TRUE(fs::exists(r.csv));
  }
  EXPECT_EQ(rep.exit_code(), 0);
  std::ifstream summary(dir / "sweep_summary.csv");
  std::string line;
  int lines = 0;
  while (std::getline(summary, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const fs::path cfg = dir / "run.cfg";
  {
    std::ofstream out(cfg);
    out << "# tiny run\ninput = icosphere:2\nnx = 16\nny = 16\nnz = 16\nmargin = 0.2\nsteps = 2\n";
  }
  const fs::path bad = dir / "bad.cfg";
  {
    std::ofstream out(bad);
    out << "steps = 2\nwibble = 3\n";
  }
  const std::string outs = " --out-csv " + (dir / "e.csv").string();
  EXPECT_EQ(run_cli("reconstruct --config " + cfg.string() + outs), 0);
  EXPECT_TRUE(fs::exists(dir / "e.csv"));
  EXPECT_EQ(run_cli("reconstruct --config " + bad.string()), 1);
  EXPECT_EQ(run_cli("reconstruct --input " + (dir / "missing.xyz").string() + " --steps 2"), 1);
  EXPECT_EQ(run_cli("reconstruct --config " + cfg.string() + " --T 1e-4"), 0);
  EXPECT_EQ(run_cli("reconstruct --config " + cfg.string() + " --steps 2 --T 1e-4"), 1);
  EXPECT_EQ(run_cli("reconstruct --config " + cfg.string() + " --parallel gpu"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("reconstruct --config " + cfg.string() + " --gs-max 1 --gs-tol 1e-30"), 2);
}
