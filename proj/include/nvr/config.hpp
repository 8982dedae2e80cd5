#pragma once

// Run configuration: "key = value" files, command-line overrides and the
// resolution of derived parameters (h, epsilon, chi, gamma, S, step count).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nvr/error.hpp"
#include "nvr/grid.hpp"
#include "nvr/phasefield.hpp"
#include "nvr/pointcloud.hpp"
#include "nvr/solver.hpp"

namespace nvr {

/// Ordered key/value pairs as read from one source.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct RunConfig {
  std::string input;                  ///< point file or "icosphere:<level>"
  std::optional<PointFormat> format;  ///< from the extension when unset

  int nx = 64, ny = 64, nz = 64;
  double lx = 1.0;  ///< sets h = lx / nx
  std::optional<double> ly, lz;

  std::optional<double> epsilon;
  double epsilon_cells = 5.0;  ///< used when epsilon is unset
  std::optional<double> chi;   ///< default epsilon / 2
  std::optional<double> gamma; ///< default 5 h
  double lambda = 1e-10;
  StabilizationMode s_mode = StabilizationMode::two_over_eps2;
  double s_value = 0.0;  ///< for s_mode = explicit

  double dt = 1e-5;
  std::optional<long> steps;
  std::optional<double> T;

  double margin = 0.1;
  std::size_t stride = 1;

  std::string out_field, out_mesh, out_csv;
  std::string out_dir = ".";  ///< sweep outputs
  SweepOrder order = SweepOrder::lexicographic;

  double gs_tol = 1e-6;
  int gs_max = 500;
  double newton_tol = 1e-6;
  int newton_max = 200;

  std::vector<double> sweep_dt{1.0};  ///< multipliers of dt
  std::vector<double> sweep_epsilon;  ///< empty: the single resolved epsilon
  std::vector<StabilizationMode> sweep_s_modes;  ///< empty: s_mode
  std::vector<int> convergence_multipliers{2, 4, 8, 16};

  double h() const { return lx / nx; }
  GridSpec grid() const { return GridSpec(nx, ny, nz, h()); }
  double resolved_epsilon() const { return epsilon ? *epsilon : epsilon_from_cells(epsilon_cells, h()); }

  /// Step count from `steps`, or T / dt rounded to the nearest integer.
  long step_count() const {
    if (steps) return *steps;
    const double n = *T / dt;
    const long r = std::lround(n);
    if (std::abs(n - double(r)) > 1e-9 * std::max(1.0, n))
      throw InputError("T is not an integer multiple of dt");
    return r;
  }

  /// Model parameters for one run at the given epsilon, S mode and dt.
  ModelParams model(double eps, StabilizationMode mode, double step) const {
    ModelParams p;
    p.epsilon = eps;
    p.chi = chi ? *chi : 0.5 * eps;
    p.gamma = gamma ? *gamma : 5.0 * h();
    p.lambda = lambda;
    p.S = stabilization_constant(mode, eps, s_value);
    p.dt = step;
    p.gs_tol = gs_tol;
    p.gs_max = gs_max;
    p.newton_tol = newton_tol;
    p.newton_max = newton_max;
    p.validate();
    return p;
  }

  ModelParams model() const { return model(resolved_epsilon(), s_mode, dt); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline double to_double(const std::string& key, const std::string& v) {
  double out;
  if (!parse_double(v, out)) throw InputError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InputError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

inline int to_int(const std::string& key, const std::string& v) {
  const long x = to_long(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw InputError("'" + key + "' is out of range");
  return int(x);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline StabilizationMode to_s_mode(const std::string& key, const std::string& v) {
  if (v == "zero" || v == "0") return StabilizationMode::zero;
  if (v == "2/eps2") return StabilizationMode::two_over_eps2;
  if (v == "4/eps2") return StabilizationMode::four_over_eps2;
  if (v == "explicit") return StabilizationMode::explicit_value;
  throw InputError("'" + key + "' expects zero, 2/eps2, 4/eps2 or explicit, got '" + v + "'");
}

inline void require_positive(const std::string& key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InputError("'" + key + "' must be > 0");
}

// Keys that replace each other when given by a later source.
inline const std::vector<std::vector<std::string>>& exclusive_groups() {
  static const std::vector<std::vector<std::string>> groups = {{"steps", "T"}, {"epsilon", "epsilon_cells"}};
  return groups;
}

inline void apply_key(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "input") c.input = v;
  else if (key == "format") {
    if (v == "xyz") c.format = PointFormat::xyz;
    else if (v == "ply") c.format = PointFormat::ply_ascii;
    else if (v == "auto") c.format.reset();
    else throw InputError("'format' expects xyz, ply or auto, got '" + v + "'");
  }
  else if (key == "nx") c.nx = to_int(key, v);
  else if (key == "ny") c.ny = to_int(key, v);
  else if (key == "nz") c.nz = to_int(key, v);
  else if (key == "lx") { c.lx = to_double(key, v); require_positive(key, c.lx); }
  else if (key == "ly") { c.ly = to_double(key, v); require_positive(key, *c.ly); }
  else if (key == "lz") { c.lz = to_double(key, v); require_positive(key, *c.lz); }
  else if (key == "epsilon") { c.epsilon = to_double(key, v); require_positive(key, *c.epsilon); }
  else if (key == "epsilon_cells") { c.epsilon_cells = to_double(key, v); require_positive(key, c.epsilon_cells); }
  else if (key == "chi") c.chi = to_double(key, v);
  else if (key == "gamma") c.gamma = to_double(key, v);
  else if (key == "lambda") c.lambda = to_double(key, v);
  else if (key == "s_mode") c.s_mode = to_s_mode(key, v);
  else if (key == "s_value") c.s_value = to_double(key, v);
  else if (key == "dt") { c.dt = to_double(key, v); require_positive(key, c.dt); }
  else if (key == "steps") {
    c.steps = to_long(key, v);
    if (*c.steps < 1) throw InputError("'steps' must be >= 1");
  }
  else if (key == "T") { c.T = to_double(key, v); require_positive(key, *c.T); }
  else if (key == "margin") c.margin = to_double(key, v);
  else if (key == "stride") {
    const long s = to_long(key, v);
    if (s < 1) throw InputError("'stride' must be >= 1");
    c.stride = std::size_t(s);
  }
  else if (key == "out_field") c.out_field = v;
  else if (key == "out_mesh") c.out_mesh = v;
  else if (key == "out_csv") c.out_csv = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "parallel") {
    if (v == "serial") c.order = SweepOrder::lexicographic;
    else if (v == "redblack") c.order = SweepOrder::red_black;
    else throw InputError("'parallel' expects serial or redblack, got '" + v + "'");
  }
  else if (key == "gs_tol") { c.gs_tol = to_double(key, v); require_positive(key, c.gs_tol); }
  else if (key == "gs_max") c.gs_max = to_int(key, v);
  else if (key == "newton_tol") { c.newton_tol = to_double(key, v); require_positive(key, c.newton_tol); }
  else if (key == "newton_max") c.newton_max = to_int(key, v);
  else if (key == "sweep_dt") {
    c.sweep_dt.clear();
    for (const auto& s : split_list(v)) {
      c.sweep_dt.push_back(to_double(key, s));
      require_positive(key, c.sweep_dt.back());
    }
  }
  else if (key == "sweep_epsilon") {
    c.sweep_epsilon.clear();
    for (const auto& s : split_list(v)) {
      c.sweep_epsilon.push_back(to_double(key, s));
      require_positive(key, c.sweep_epsilon.back());
    }
  }
  else if (key == "sweep_s_modes") {
    c.sweep_s_modes.clear();
    for (const auto& s : split_list(v)) c.sweep_s_modes.push_back(to_s_mode(key, s));
  }
  else if (key == "convergence_multipliers") {
    c.convergence_multipliers.clear();
    for (const auto& s : split_list(v)) {
      c.convergence_multipliers.push_back(to_int(key, s));
      if (c.convergence_multipliers.back() < 1) throw InputError("'convergence_multipliers' entries must be >= 1");
    }
  }
  else throw InputError("unknown configuration key '" + key + "'");
}

}  // namespace detail

/// Reads "key = value" lines. '#' starts a comment; blank lines are skipped.
/// A key given twice in one source is an error.
inline KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    if (value.empty()) throw ParseError("missing value for '" + key + "'", line_no);
    for (const auto& kv : out)
      if (kv.first == key) throw ParseError("duplicate key '" + key + "'", line_no);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  return parse_key_values(in);
}

/// Builds a validated RunConfig. `overrides` (command-line flags) win over
/// `file`; a flag from an exclusive group ({steps, T}, {epsilon,
/// epsilon_cells}) also drops the other member coming from the file. Both
/// members of a group in one source are an error.
inline RunConfig build_config(const KeyValues& file, const KeyValues& overrides = {}) {
  auto has = [](const KeyValues& kv, const std::string& k) {
    return std::any_of(kv.begin(), kv.end(), [&](const auto& p) { return p.first == k; });
  };
  for (const KeyValues* src : {&file, &overrides})
    for (const auto& g : detail::exclusive_groups())
      if (has(*src, g[0]) && has(*src, g[1]))
        throw InputError("'" + g[0] + "' and '" + g[1] + "' are mutually exclusive");

  std::map<std::string, std::string> merged;
  std::vector<std::string> order;
  auto put = [&](const std::string& k, const std::string& v) {
    if (!merged.count(k)) order.push_back(k);
    merged[k] = v;
  };
  for (const auto& [k, v] : file) put(k, v);
  for (const auto& [k, v] : overrides) {
    for (const auto& g : detail::exclusive_groups())
      for (std::size_t a = 0; a < 2; ++a)
        if (k == g[a] && merged.erase(g[1 - a])) std::erase(order, g[1 - a]);
    put(k, v);
  }

  RunConfig c;
  for (const auto& k : order) detail::apply_key(c, k, merged.at(k));

  if (c.nx < 2 || c.ny < 2 || c.nz < 2) throw InputError("grid needs at least 2 cells per direction");
  const double h = c.h();
  auto check_extent = [&](const char* name, const std::optional<double>& l, int n) {
    if (l && std::abs(*l - h * n) > 1e-9 * *l)
      throw InputError(std::string(name) + " does not match h = lx/nx (cells must be cubic)");
  };
  check_extent("ly", c.ly, c.ny);
  check_extent("lz", c.lz, c.nz);
  if (!c.steps && !c.T) throw InputError("one of 'steps' or 'T' is required");
  if (!(c.margin >= 0.0 && c.margin <= 0.45)) throw InputError("'margin' must lie in [0, 0.45]");
  if (c.sweep_dt.empty()) throw InputError("'sweep_dt' must not be empty");
  (void)c.step_count();
  for (double eps : c.sweep_epsilon.empty() ? std::vector<double>{c.resolved_epsilon()} : c.sweep_epsilon)
    (void)c.model(eps, c.s_mode, c.dt);
  return c;
}

}  // namespace nvr
