#pragma once

// Point cloud ingestion, domain fitting and the unsigned distance field.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nvr/error.hpp"
#include "nvr/grid.hpp"
#include "nvr/vec3.hpp"

namespace nvr {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class PointFormat { xyz, ply_ascii };

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline Vec3 parse_xyz_tokens(const std::vector<std::string_view>& tok, std::size_t cx, std::size_t cy,
                             std::size_t cz, std::size_t line_no) {
  const std::size_t need = std::max({cx, cy, cz}) + 1;
  if (tok.size() < need) throw ParseError("expected at least " + std::to_string(need) + " numbers", line_no);
  Vec3 p;
  if (!parse_double(tok[cx], p.x) || !parse_double(tok[cy], p.y) || !parse_double(tok[cz], p.z))
    throw ParseError("malformed coordinate", line_no);
  return p;
}

inline PointCloud read_xyz(std::istream& in) {
  PointCloud pc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty() || tok.front().front() == '#') continue;
    pc.points.push_back(parse_xyz_tokens(tok, 0, 1, 2, line_no));
  }
  return pc;
}

inline PointCloud read_ply_ascii(std::istream& in) {
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next() || line != "ply") throw ParseError("missing 'ply' magic", line_no ? line_no : 1);
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;
  while (next()) {
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw ParseError("only 'format ascii 1.0' is supported", line_no);
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", line_no);
      double count = 0;
      if (!parse_double(tok[2], count) || count < 0 || count != std::floor(count))
        throw ParseError("malformed element count", line_no);
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}, false});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", line_no);
      if (tok.size() >= 2 && tok[1] == "list") {
        elements.back().has_list = true;
        elements.back().props.emplace_back(tok.size() >= 5 ? std::string(tok[4]) : std::string());
      } else if (tok.size() == 3) {
        elements.back().props.emplace_back(tok[2]);
      } else {
        throw ParseError("malformed property line", line_no);
      }
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    } else {
      throw ParseError("unknown header keyword '" + std::string(tok[0]) + "'", line_no);
    }
  }
  if (!header_done) throw ParseError("missing end_header", line_no);
  if (!ascii) throw ParseError("missing format line", line_no);

  PointCloud pc;
  bool found = false;
  for (const auto& el : elements) {
    if (el.name != "vertex") {
      for (std::size_t n = 0; n < el.count; ++n)
        if (!next()) throw ParseError("unexpected end of file in element '" + el.name + "'", line_no + 1);
      continue;
    }
    found = true;
    if (el.has_list) throw ParseError("list properties on vertices are not supported", line_no);
    auto col = [&](const char* name) {
      auto it = std::find(el.props.begin(), el.props.end(), name);
      if (it == el.props.end()) throw ParseError(std::string("vertex element lacks property ") + name, line_no);
      return static_cast<std::size_t>(it - el.props.begin());
    };
    const std::size_t cx = col("x"), cy = col("y"), cz = col("z");
    pc.points.reserve(el.count);
    for (std::size_t n = 0; n < el.count; ++n) {
      if (!next()) throw ParseError("unexpected end of file in vertex list", line_no + 1);
      pc.points.push_back(parse_xyz_tokens(split_ws(line), cx, cy, cz, line_no));
    }
    break;
  }
  if (!found) throw ParseError("no vertex element", line_no);
  return pc;
}

}  // namespace detail

/// Parses a point cloud from a stream. Throws ParseError on malformed input
/// and InputError when the file holds no points.
inline PointCloud read_points(std::istream& in, PointFormat format) {
  PointCloud pc = format == PointFormat::xyz ? detail::read_xyz(in) : detail::read_ply_ascii(in);
  if (pc.empty()) throw InputError("point cloud contains no points");
  return pc;
}

inline PointCloud load_points(const std::string& path, PointFormat format) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open point file '" + path + "'");
  return read_points(in, format);
}

/// Guesses the format from the file extension (".ply" -> PLY, otherwise XYZ).
inline PointFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == "ply") return PointFormat::ply_ascii;
  }
  return PointFormat::xyz;
}

/// Keeps every `stride`-th point in file order.
inline PointCloud subsample(const PointCloud& pc, std::size_t stride) {
  if (stride == 0) throw InputError("subsample stride must be >= 1");
  PointCloud out;
  for (std::size_t n = 0; n < pc.size(); n += stride) out.points.push_back(pc.points[n]);
  return out;
}

struct BoundingBox {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void extend(const Vec3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

inline BoundingBox bounding_box(const PointCloud& pc) {
  BoundingBox b;
  for (const auto& p : pc.points) b.extend(p);
  return b;
}

/// Uniformly scales and translates the cloud so that its bounding box is
/// centered in the domain box shrunk by `margin` (fraction of each extent)
/// on every side. A single scale factor preserves the aspect ratio.
inline PointCloud fit_to_domain(const PointCloud& pc, const GridSpec& spec, double margin = 0.1) {
  if (!(margin >= 0.0 && margin <= 0.45)) throw InputError("margin must lie in [0, 0.45]");
  if (pc.empty()) throw InputError("point cloud contains no points");
  const BoundingBox box = bounding_box(pc);
  const Vec3 ext = box.extent();
  const Vec3 dom{spec.lx(), spec.ly(), spec.lz()};
  double scale = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a)
    if (ext[a] > 0.0) scale = std::min(scale, dom[a] * (1.0 - 2.0 * margin) / ext[a]);
  if (!std::isfinite(scale)) throw InputError("degenerate point cloud: all points coincide");

  const Vec3 target = spec.origin + 0.5 * dom;
  const Vec3 c = box.center();
  PointCloud out;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) out.points.push_back(target + scale * (p - c));
  return out;
}

/// Uniform bucket grid over the cloud's bounding box. Nearest-distance queries
/// are exact: buckets are visited in Chebyshev rings around the query bucket
/// until no unvisited bucket can hold a closer point.
class SpatialIndex {
 public:
  SpatialIndex(const PointCloud& pc, double bucket) : points_(pc.points) {
    if (!(bucket > 0.0)) throw InputError("bucket size must be positive");
    if (points_.empty()) throw InputError("point cloud contains no points");
    const BoundingBox box = bounding_box(pc);
    lo_ = box.lo;
    const Vec3 ext = box.extent();
    // Cap the bucket count so tiny bucket sizes cannot exhaust memory.
    constexpr double max_buckets = 1 << 24;
    auto dims_for = [&](double b) {
      return std::array<int, 3>{int(ext.x / b) + 1, int(ext.y / b) + 1, int(ext.z / b) + 1};
    };
    auto d = dims_for(bucket);
    while (double(d[0]) * d[1] * d[2] > max_buckets) {
      bucket *= 1.25;
      d = dims_for(bucket);
    }
    bucket_ = bucket;
    dims_ = d;

    const std::size_t nb = std::size_t(d[0]) * d[1] * d[2];
    std::vector<std::uint32_t> counts(nb + 1, 0);
    std::vector<std::size_t> owner(points_.size());
    for (std::size_t n = 0; n < points_.size(); ++n) {
      owner[n] = flat(cell_of(points_[n]));
      ++counts[owner[n] + 1];
    }
    offsets_.assign(nb + 1, 0);
    for (std::size_t b = 0; b < nb; ++b) offsets_[b + 1] = offsets_[b] + counts[b + 1];
    members_.resize(points_.size());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t n = 0; n < points_.size(); ++n) members_[fill[owner[n]]++] = std::uint32_t(n);
    for (std::size_t b = 0; b < nb; ++b)
      if (offsets_[b + 1] > offsets_[b]) nonempty_.push_back(b);
  }

  double bucket_size() const { return bucket_; }
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t bucket_count() const { return offsets_.size() - 1; }
  std::size_t nonempty_bucket_count() const { return nonempty_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Indices of the points stored in bucket (bx, by, bz).
  std::vector<std::uint32_t> bucket_members(int bx, int by, int bz) const {
    const std::size_t b = flat({bx, by, bz});
    return {members_.begin() + offsets_[b], members_.begin() + offsets_[b + 1]};
  }

  /// Exact min_m |q - X_m|.
  double nearest_distance(const Vec3& q) const {
    const auto c = cell_of(q);
    double best2 = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({c[0], dims_[0] - 1 - c[0], c[1], dims_[1] - 1 - c[1], c[2], dims_[2] - 1 - c[2]});
    for (int r = 0; r <= max_ring; ++r) {
      // Once the cube of visited buckets outgrows the occupied set, a pruned
      // scan of the occupied buckets is cheaper.
      const double side = 2.0 * r + 1.0;
      if (r > 1 && side * side * side > 4.0 * double(nonempty_.size())) return std::sqrt(scan_nonempty(q, best2));
      visit_ring(q, c, r, best2);
      // Any bucket beyond ring r is separated from q by at least r buckets on some axis.
      const double bound = r * bucket_;
      if (best2 <= bound * bound) break;
    }
    return std::sqrt(best2);
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const double t = std::floor((p[a] - lo_[a]) / bucket_);
      c[a] = int(std::clamp(t, 0.0, double(dims_[a] - 1)));
    }
    return c;
  }

  std::size_t flat(const std::array<int, 3>& c) const {
    return std::size_t(c[0]) + std::size_t(dims_[0]) * (std::size_t(c[1]) + std::size_t(dims_[1]) * c[2]);
  }

  void scan_bucket(const Vec3& q, std::size_t b, double& best2) const {
    for (std::uint32_t m = offsets_[b]; m < offsets_[b + 1]; ++m) {
      const Vec3 d = points_[members_[m]] - q;
      best2 = std::min(best2, dot(d, d));
    }
  }

  void visit_ring(const Vec3& q, const std::array<int, 3>& c, int r, double& best2) const {
    const int z0 = std::max(0, c[2] - r), z1 = std::min(dims_[2] - 1, c[2] + r);
    const int y0 = std::max(0, c[1] - r), y1 = std::min(dims_[1] - 1, c[1] + r);
    const int x0 = std::max(0, c[0] - r), x1 = std::min(dims_[0] - 1, c[0] + r);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y) {
        const bool face = std::abs(z - c[2]) == r || std::abs(y - c[1]) == r;
        if (face) {
          for (int x = x0; x <= x1; ++x) scan_bucket(q, flat({x, y, z}), best2);
        } else {
          if (c[0] - r >= 0) scan_bucket(q, flat({c[0] - r, y, z}), best2);
          if (r > 0 && c[0] + r < dims_[0]) scan_bucket(q, flat({c[0] + r, y, z}), best2);
        }
      }
  }

  double box_distance2(const Vec3& q, std::size_t b) const {
    const std::size_t bx = b % dims_[0];
    const std::size_t by = (b / dims_[0]) % dims_[1];
    const std::size_t bz = b / (std::size_t(dims_[0]) * dims_[1]);
    const double idx[3] = {double(bx), double(by), double(bz)};
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double blo = lo_[a] + idx[a] * bucket_;
      const double bhi = blo + bucket_;
      const double d = q[a] < blo ? blo - q[a] : (q[a] > bhi ? q[a] - bhi : 0.0);
      d2 += d * d;
    }
    return d2;
  }

  double scan_nonempty(const Vec3& q, double best2) const {
    for (std::size_t b : nonempty_)
      if (box_distance2(q, b) < best2) scan_bucket(q, b, best2);
    return best2;
  }

  std::vector<Vec3> points_;
  Vec3 lo_{};
  double bucket_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> members_;
  std::vector<std::size_t> nonempty_;
};

inline SpatialIndex build_index(const PointCloud& pc, double bucket) { return SpatialIndex(pc, bucket); }

/// Unsigned distance from every cell center to the nearest sample; ghosts synced.
inline ScalarField distance_field(const SpatialIndex& index, const GridSpec& spec) {
  ScalarField d(spec);
  d.fill_interior([&](int i, int j, int k) { return index.nearest_distance(spec.cell_center(i, j, k)); });
  sync_ghosts(d);
  return d;
}

}  // namespace nvr
