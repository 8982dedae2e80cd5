#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nvr/pointcloud.hpp"
#include "nvr/synthetic.hpp"
#include "oracles.hpp"

using nvr::GridSpec;
using nvr::PointCloud;
using nvr::PointFormat;
using nvr::Vec3;

namespace {

PointCloud parse(const std::string& text, PointFormat fmt) {
  std::istringstream in(text);
  return nvr::read_points(in, fmt);
}

std::size_t parse_error_line(const std::string& text, PointFormat fmt) {
  try {
    parse(text, fmt);
  } catch (const nvr::ParseError& e) {
    return e.line();
  }
  return 0;
}

PointCloud random_cloud(std::mt19937_64& rng, std::size_t m, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud pc;
  for (std::size_t n = 0; n < m; ++n) pc.points.push_back({u(rng), u(rng), u(rng)});
  return pc;
}

}  // namespace

TEST(ReadXyz, TwoPointsInFileOrder) {
  const PointCloud pc = parse("0 0 0\n1 2 3\n", PointFormat::xyz);
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc.points[0], (Vec3{0, 0, 0}));
  EXPECT_EQ(pc.points[1], (Vec3{1, 2, 3}));
}

TEST(ReadXyz, SkipsCommentsAndBlankLines) {
  const PointCloud pc = parse("# header\n\n  1.5 -2 +3e-1 \n# tail\n", PointFormat::xyz);
  ASSERT_EQ(pc.size(), 1u);
  EXPECT_EQ(pc.points[0], (Vec3{1.5, -2, 0.3}));
}

TEST(ReadXyz, MissingCoordinateNamesLine) {
  EXPECT_EQ(parse_error_line("0 0 0\n1 2\n", PointFormat::xyz), 2u);
}

TEST(ReadXyz, MalformedNumberNamesLine) {
  EXPECT_EQ(parse_error_line("0 0 0\n\n1 2 abc\n", PointFormat::xyz), 3u);
  EXPECT_EQ(parse_error_line("nan 0 0\n", PointFormat::xyz), 1u);
}

TEST(ReadXyz, EmptyFileIsAnError) {
  EXPECT_THROW(parse("# nothing\n", PointFormat::xyz), nvr::InputError);
}

TEST(ReadPly, VertexCountFromHeader) {
  const std::string ply =
      "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n";
  const PointCloud pc = parse(ply, PointFormat::ply_ascii);
  ASSERT_EQ(pc.size(), 3u);
  EXPECT_EQ(pc.points[2], (Vec3{0, 1, 0}));
}

TEST(ReadPly, IgnoresOtherPropertiesAndElements) {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement camera 1\nproperty float fov\nelement vertex 2\n"
      "property float nx\nproperty float z\nproperty float y\nproperty float x\nproperty uchar red\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "45\n9 3 2 1 255\n9 6 5 4 0\n3 0 1 1\n";
  const PointCloud pc = parse(ply, PointFormat::ply_ascii);
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc.points[0], (Vec3{1, 2, 3}));
  EXPECT_EQ(pc.points[1], (Vec3{4, 5, 6}));
}

TEST(ReadPly, BinaryFormatRejected) {
  EXPECT_EQ(parse_error_line("ply\nformat binary_little_endian 1.0\nend_header\n", PointFormat::ply_ascii), 2u);
}

TEST(ReadPly, ShortVertexLineNamesLine) {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "end_header\n0 0 0\n1 2\n";
  EXPECT_EQ(parse_error_line(ply, PointFormat::ply_ascii), 9u);
}

TEST(ReadPly, TruncatedVertexListIsAnError) {
  const std::string ply =
      "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
      "end_header\n0 0 0\n";
  EXPECT_THROW(parse(ply, PointFormat::ply_ascii), nvr::ParseError);
}

TEST(ReadPly, MissingMagicIsAnError) {
  EXPECT_EQ(parse_error_line("0 0 0\n", PointFormat::ply_ascii), 1u);
}

TEST(LoadPoints, MissingFileIsAnInputError) {
  EXPECT_THROW(nvr::load_points("/nonexistent/cloud.xyz", PointFormat::xyz), nvr::InputError);
}

TEST(FormatFromPath, ExtensionDecides) {
  EXPECT_EQ(nvr::format_from_path("a/b/model.PLY"), PointFormat::ply_ascii);
  EXPECT_EQ(nvr::format_from_path("model.xyz"), PointFormat::xyz);
  EXPECT_EQ(nvr::format_from_path("model"), PointFormat::xyz);
}

TEST(Subsample, KeepsEveryStrideThPoint) {
  PointCloud pc;
  for (int n = 0; n < 10; ++n) pc.points.push_back({double(n), 0, 0});
  const PointCloud s = nvr::subsample(pc, 3);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.points[3].x, 9.0);
  EXPECT_THROW(nvr::subsample(pc, 0), nvr::InputError);
}

TEST(FitToDomain, UnitCubeWithQuarterMargin) {
  PointCloud pc;
  for (int n = 0; n < 8; ++n) pc.points.push_back({double(n & 1), double((n >> 1) & 1), double((n >> 2) & 1)});
  const PointCloud out = nvr::fit_to_domain(pc, GridSpec(16, 16, 16, 1.0 / 16), 0.25);
  const auto box = nvr::bounding_box(out);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(box.lo[a], 0.25, 1e-15);
    EXPECT_NEAR(box.hi[a], 0.75, 1e-15);
  }
}

TEST(FitToDomain, RandomCloudInsideMarginBoxWithRatiosPreserved) {
  std::mt19937_64 rng(23);
  const GridSpec s(40, 20, 30, 0.05);
  const double margin = 0.1;
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud pc = random_cloud(rng, 50, -7.0, 11.0);
    const PointCloud out = nvr::fit_to_domain(pc, s, margin);
    const Vec3 dom{s.lx(), s.ly(), s.lz()};
    for (const auto& p : out.points)
      for (int a = 0; a < 3; ++a) {
        EXPECT_GE(p[a], margin * dom[a] - 1e-12);
        EXPECT_LE(p[a], (1.0 - margin) * dom[a] + 1e-12);
      }
    const double ref = nvr::distance(pc.points[0], pc.points[1]) / nvr::distance(out.points[0], out.points[1]);
    for (std::size_t n = 2; n < pc.size(); ++n) {
      const double ratio = nvr::distance(pc.points[0], pc.points[n]) / nvr::distance(out.points[0], out.points[n]);
      EXPECT_NEAR(ratio / ref, 1.0, 1e-12);
    }
  }
}

TEST(FitToDomain, Errors) {
  PointCloud same;
  same.points.assign(3, Vec3{1, 1, 1});
  const GridSpec s(8, 8, 8, 0.125);
  EXPECT_THROW(nvr::fit_to_domain(same, s, 0.1), nvr::InputError);
  PointCloud pc;
  pc.points = {{0, 0, 0}, {1, 1, 1}};
  EXPECT_THROW(nvr::fit_to_domain(pc, s, 0.5), nvr::InputError);
  EXPECT_THROW(nvr::fit_to_domain(pc, s, -0.01), nvr::InputError);
}

TEST(FitToDomain, FlatCloudKeepsItsPlane) {
  PointCloud pc;
  pc.points = {{0, 0, 5}, {2, 1, 5}, {1, 3, 5}};
  const PointCloud out = nvr::fit_to_domain(pc, GridSpec(10, 10, 10, 0.1), 0.1);
  for (const auto& p : out.points) EXPECT_NEAR(p.z, 0.5, 1e-15);
}

TEST(SpatialIndex, SinglePointGivesEuclideanDistance) {
  PointCloud pc;
  pc.points = {{0.3, 0.4, 0.5}};
  const auto idx = nvr::build_index(pc, 0.1);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-2, 3);
  for (int n = 0; n < 100; ++n) {
    const Vec3 q{u(rng), u(rng), u(rng)};
    EXPECT_EQ(idx.nearest_distance(q), nvr::distance(q, pc.points[0]));
  }
}

TEST(SpatialIndex, MatchesBruteForceOnRandomQueries) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (double bucket : {0.01, 0.1, 0.5, 3.0}) {
    const PointCloud pc = random_cloud(rng, 20, 0.0, 1.0);
    const auto idx = nvr::build_index(pc, bucket);
    for (int n = 0; n < 100; ++n) {
      const Vec3 q{u(rng), u(rng), u(rng)};
      double best = 1e300;
      for (const auto& p : pc.points) best = std::min(best, nvr::distance(q, p));
      EXPECT_NEAR(idx.nearest_distance(q), best, 1e-14);
    }
  }
}

TEST(SpatialIndex, QueryAtSamplePointIsZero) {
  std::mt19937_64 rng(37);
  const PointCloud pc = random_cloud(rng, 100, 0.0, 1.0);
  const auto idx = nvr::build_index(pc, 0.05);
  for (const auto& p : pc.points) EXPECT_EQ(idx.nearest_distance(p), 0.0);
}

TEST(SpatialIndex, EveryPointInExactlyOneBucket) {
  std::mt19937_64 rng(41);
  const PointCloud pc = random_cloud(rng, 300, 0.0, 1.0);
  const auto idx = nvr::build_index(pc, 0.07);
  std::vector<int> seen(pc.size(), 0);
  const auto d = idx.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        for (auto m : idx.bucket_members(x, y, z)) ++seen[m];
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(DistanceField, PointAtCellCenter) {
  const GridSpec s(8, 8, 8, 0.125);
  PointCloud pc;
  pc.points = {s.cell_center(4, 5, 3)};
  const auto d = nvr::distance_field(nvr::build_index(pc, 2 * s.h), s);
  EXPECT_EQ(d(4, 5, 3), 0.0);
  EXPECT_DOUBLE_EQ(d(5, 5, 3), s.h);
  EXPECT_DOUBLE_EQ(d(4, 4, 3), s.h);
  EXPECT_DOUBLE_EQ(d(4, 5, 2), s.h);
}

TEST(DistanceField, CornerCellToDomainCenter) {
  const GridSpec s(8, 8, 8, 0.125);
  PointCloud pc;
  pc.points = {{0.5, 0.5, 0.5}};
  const auto d = nvr::distance_field(nvr::build_index(pc, 2 * s.h), s);
  EXPECT_DOUBLE_EQ(d(1, 1, 1), std::sqrt(3.0) * (0.5 - 0.0625));
  EXPECT_EQ(d(0, 1, 1), d(1, 1, 1));
}

TEST(DistanceField, EqualsBruteForceAndIsLipschitz) {
  std::mt19937_64 rng(43);
  const GridSpec s(16, 16, 16, 1.0 / 16);
  for (std::size_t m : {1u, 50u, 400u}) {
    const PointCloud pc = random_cloud(rng, m, 0.1, 0.9);
    const auto d = nvr::distance_field(nvr::build_index(pc, 2 * s.h), s);
    EXPECT_LE(oracle::max_diff(d, oracle::brute_distance(pc, s)), 1e-14);
    for (int k = 1; k <= s.nz; ++k)
      for (int j = 1; j <= s.ny; ++j)
        for (int i = 1; i < s.nx; ++i) {
          EXPECT_GE(d(i, j, k), 0.0);
          EXPECT_LE(std::abs(d(i + 1, j, k) - d(i, j, k)), s.h * (1 + 1e-12));
        }
  }
}

TEST(Icosphere, VertexCountAndRadius) {
  for (int level = 0; level <= 4; ++level) {
    const PointCloud pc = nvr::icosphere(level, 2.0, {1, 1, 1});
    EXPECT_EQ(pc.size(), std::size_t(10 * (1 << (2 * level)) + 2));
    for (const auto& p : pc.points) EXPECT_NEAR(nvr::distance(p, {1, 1, 1}), 2.0, 1e-14);
  }
}
