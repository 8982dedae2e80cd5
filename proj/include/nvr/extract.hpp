#pragma once

// Zero-level-set extraction and file output (VTK structured points, OBJ, CSV).

#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "nvr/diagnostics.hpp"
#include "nvr/error.hpp"
#include "nvr/grid.hpp"
#include "nvr/mc_tables.hpp"
#include "nvr/vec3.hpp"

namespace nvr {

struct IsoMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

/// Marching cubes over the lattice of interior cell centers. Vertices are
/// linear-interpolation roots on sign-changing lattice edges, shared between
/// neighbouring cubes.
inline IsoMesh marching_cubes(const ScalarField& phi, double iso = 0.0) {
  const GridSpec& s = phi.spec();
  IsoMesh mesh;
  // One slot per (node, axis): the vertex on the edge leaving the node along +axis.
  constexpr std::uint32_t none = std::numeric_limits<std::uint32_t>::max();
  const std::size_t nnodes = std::size_t(s.nx) * s.ny * s.nz;
  std::vector<std::uint32_t> edge_vertex(3 * nnodes, none);
  auto node_id = [&](int i, int j, int k) {
    return std::size_t(i - 1) + std::size_t(s.nx) * (std::size_t(j - 1) + std::size_t(s.ny) * (k - 1));
  };

  static constexpr int corner_offset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                              {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

  for (int k = 1; k < s.nz; ++k)
    for (int j = 1; j < s.ny; ++j)
      for (int i = 1; i < s.nx; ++i) {
        double val[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          val[c] = phi(i + corner_offset[c][0], j + corner_offset[c][1], k + corner_offset[c][2]);
          if (val[c] < iso) cube |= 1 << c;
        }
        const std::uint16_t mask = detail::kEdgeTable[cube];
        if (mask == 0) continue;

        std::uint32_t vid[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mask & (1u << e))) continue;
          int c0 = detail::kEdgeCorners[e][0];
          int c1 = detail::kEdgeCorners[e][1];
          // Key by the lower lattice node so neighbouring cubes agree.
          int axis = 0;
          for (int a = 0; a < 3; ++a)
            if (corner_offset[c0][a] != corner_offset[c1][a]) axis = a;
          if (corner_offset[c0][axis] > corner_offset[c1][axis]) std::swap(c0, c1);
          const int ai = i + corner_offset[c0][0], aj = j + corner_offset[c0][1], ak = k + corner_offset[c0][2];
          std::uint32_t& slot = edge_vertex[3 * node_id(ai, aj, ak) + axis];
          if (slot == none) {
            const double t = (iso - val[c0]) / (val[c1] - val[c0]);
            const Vec3 p0 = s.cell_center(ai, aj, ak);
            Vec3 p1 = p0;
            if (axis == 0) p1.x += s.h;
            if (axis == 1) p1.y += s.h;
            if (axis == 2) p1.z += s.h;
            slot = std::uint32_t(mesh.vertices.size());
            mesh.vertices.push_back(p0 + t * (p1 - p0));
          }
          vid[e] = slot;
        }
        const auto& tri = detail::kTriTable[cube];
        for (int n = 0; tri[n] != -1; n += 3)
          mesh.triangles.push_back({vid[tri[n]], vid[tri[n + 1]], vid[tri[n + 2]]});
      }
  return mesh;
}

/// Total triangle area.
inline double mesh_area(const IsoMesh& mesh) {
  double a = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3& p = mesh.vertices[t[0]];
    a += 0.5 * norm(cross(mesh.vertices[t[1]] - p, mesh.vertices[t[2]] - p));
  }
  return a;
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  if (path.empty()) throw InputError("output path is empty");
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace detail

/// Legacy ASCII VTK structured points: point data "phi" at cell centers, i fastest.
inline void write_vtk_structured(std::ostream& out, const ScalarField& phi) {
  const GridSpec& s = phi.spec();
  const Vec3 o = s.cell_center(1, 1, 1);
  out << std::setprecision(17);
  out << "# vtk DataFile Version 3.0\n"
      << "phase field\n"
      << "ASCII\n"
      << "DATASET STRUCTURED_POINTS\n"
      << "DIMENSIONS " << s.nx << ' ' << s.ny << ' ' << s.nz << '\n'
      << "ORIGIN " << o.x << ' ' << o.y << ' ' << o.z << '\n'
      << "SPACING " << s.h << ' ' << s.h << ' ' << s.h << '\n'
      << "POINT_DATA " << s.interior_count() << '\n'
      << "SCALARS phi double 1\n"
      << "LOOKUP_TABLE default\n";
  phi.for_each_interior([&](int, int, int, std::size_t n) { out << phi[n] << '\n'; });
}

inline void write_vtk_structured(const ScalarField& phi, const std::string& path) {
  auto out = detail::open_output(path);
  write_vtk_structured(out, phi);
  detail::finish(out, path);
}

/// "v x y z" lines followed by "f a b c" lines with 1-based indices.
inline void write_obj(std::ostream& out, const IsoMesh& mesh) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void write_obj(const IsoMesh& mesh, const std::string& path) {
  auto out = detail::open_output(path);
  write_obj(out, mesh);
  detail::finish(out, path);
}

inline constexpr const char* kEnergyCsvHeader = "step,time,q,e_tilde,e_original,volume,gs_u,gs_v,newton_iters";

inline void write_energy_csv(std::ostream& out, const std::vector<EnergyRecord>& records) {
  out << std::setprecision(17) << kEnergyCsvHeader << '\n';
  for (const auto& r : records)
    out << r.step << ',' << r.t << ',' << r.q << ',' << r.e_tilde << ',' << r.e_original << ',' << r.volume << ','
        << r.gs_u << ',' << r.gs_v << ',' << r.newton_iters << '\n';
}

inline void write_energy_csv(const std::vector<EnergyRecord>& records, const std::string& path) {
  auto out = detail::open_output(path);
  write_energy_csv(out, records);
  detail::finish(out, path);
}

}  // namespace nvr
