#ifndef PERFSCALE_GEOMETRY_HPP
#define PERFSCALE_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "perfscale/errors.hpp"

namespace perfscale {

using Index = std::int64_t;

enum class ShapeKind { ball, cube, ellipsoid };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::ball: return "ball";
    case ShapeKind::cube: return "cube";
    case ShapeKind::ellipsoid: return "ellipsoid";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(std::string_view s) {
  if (s == "ball") return ShapeKind::ball;
  if (s == "cube") return ShapeKind::cube;
  if (s == "ellipsoid") return ShapeKind::ellipsoid;
  throw ConfigError("unsupported shape kind '" + std::string(s) +
                    "' (expected ball, cube or ellipsoid)");
}

/** \brief Reference hole T inside the unit cell Y = [-1/2, 1/2]^d.
 *
 * `size` holds the radius (ball), the half-width (cube) or the semi-axes
 * (ellipsoid).
 */
struct HoleShape {
  ShapeKind kind = ShapeKind::ball;
  std::array<double, 3> size{0.25, 0.25, 0.25};

  static HoleShape ball(double radius) { return {ShapeKind::ball, {radius, radius, radius}}; }
  static HoleShape cube(double half_width) {
    return {ShapeKind::cube, {half_width, half_width, half_width}};
  }
  static HoleShape ellipsoid(std::array<double, 3> axes) { return {ShapeKind::ellipsoid, axes}; }

  double min_extent(int d) const {
    return *std::min_element(size.begin(), size.begin() + d);
  }
  double max_extent(int d) const {
    return *std::max_element(size.begin(), size.begin() + d);
  }

  /// Largest c0 with B(0,c0) inside T and dist(boundary of T, boundary of Y) >= c0.
  double c0(int d) const {
    double reach = kind == ShapeKind::cube ? size[0] : max_extent(d);
    double inner = kind == ShapeKind::cube ? size[0] : min_extent(d);
    return std::min(inner, 0.5 - reach);
  }

  double circumradius(int d) const {
    if (kind == ShapeKind::cube) return size[0] * std::sqrt(static_cast<double>(d));
    return max_extent(d);
  }

  void validate(int d) const {
    if (d < 2 || d > 3) throw ConfigError("dimension must be 2 or 3");
    for (int a = 0; a < d; ++a)
      if (!(size[a] > 0.0)) throw ConfigError("hole size must be positive");
    if (!(c0(d) > 0.0))
      throw ConfigError("hole must contain a ball around 0 and stay away from the cell boundary");
  }

  bool operator==(const HoleShape&) const = default;
};

/** \brief Membership of the scaled-out point y in T (closed set). */
inline bool shape_contains(const HoleShape& shape, std::span<const double> y) {
  const int d = static_cast<int>(y.size());
  switch (shape.kind) {
    case ShapeKind::ball: {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) r2 += y[a] * y[a];
      return r2 <= shape.size[0] * shape.size[0];
    }
    case ShapeKind::cube: {
      for (int a = 0; a < d; ++a)
        if (std::abs(y[a]) > shape.size[0]) return false;
      return true;
    }
    case ShapeKind::ellipsoid: {
      double q = 0.0;
      for (int a = 0; a < d; ++a) q += (y[a] / shape.size[a]) * (y[a] / shape.size[a]);
      return q <= 1.0;
    }
  }
  return false;
}

enum class Host { periodic_cell, truncated_lattice, bounded, neumann_cell };

inline std::string to_string(Host h) {
  switch (h) {
    case Host::periodic_cell: return "periodic";
    case Host::truncated_lattice: return "truncated";
    case Host::bounded: return "bounded";
    case Host::neumann_cell: return "neumann-cell";
  }
  return "?";
}

inline Host parse_host(std::string_view s) {
  if (s == "periodic") return Host::periodic_cell;
  if (s == "truncated") return Host::truncated_lattice;
  if (s == "bounded") return Host::bounded;
  if (s == "neumann-cell") return Host::neumann_cell;
  throw ConfigError("unknown host '" + std::string(s) +
                    "' (expected periodic, truncated, bounded or neumann-cell)");
}

/** \brief Perforated domain description. */
struct DomainSpec {
  int d = 2;
  double epsilon = 1.0;
  double eta = 0.25;
  HoleShape shape = HoleShape::ball(0.25);
  Host host = Host::periodic_cell;
  /// Truncated lattice: the box is [-2R, 2R]^d.
  double lattice_radius = 2.0;
  /// Bounded host: the box is [0, side]^d.
  double side = 1.0;
  /// Periodic host: torus made of this many cells per axis.
  int periodic_cells = 1;
  bool perforated = true;

  bool operator==(const DomainSpec&) const = default;
};

struct ResolutionPolicy {
  /// Minimum number of grid cells across the inner radius eps*eta*c0.
  double min_cells_per_radius = 8.0;
  double memory_cap_mb = 4096.0;
  /// Rough footprint per grid node of a solve, used for the memory check.
  double bytes_per_node = 200.0;
};

enum class NodeLabel : std::uint8_t { fluid = 0, hole = 1, exterior = 2 };
enum class FaceMode { periodic, dirichlet, neumann };

/** \brief Structured node grid with hole/fluid/exterior labels.
 *
 * Node coordinates along axis a are x = (2 i - off2[a]) * h / 2. Dirichlet
 * faces carry an outer layer of exterior nodes; Neumann faces simply end.
 */
struct Grid {
  int d = 2;
  double h = 0.0;
  std::array<Index, 3> n{1, 1, 1};
  std::array<Index, 3> off2{0, 0, 0};
  std::array<Index, 3> stride{1, 1, 1};
  std::array<FaceMode, 3> face{FaceMode::periodic, FaceMode::periodic, FaceMode::periodic};
  DomainSpec spec;
  std::vector<NodeLabel> labels;
  std::vector<int> unknown_of_node;
  std::vector<Index> node_of_unknown;

  Index num_nodes() const { return static_cast<Index>(labels.size()); }
  int num_fluid() const { return static_cast<int>(node_of_unknown.size()); }
  double cell_volume() const { return std::pow(h, d); }

  bool is_fluid(Index node) const { return labels[node] == NodeLabel::fluid; }

  Index coord_index(Index node, int axis) const { return (node / stride[axis]) % n[axis]; }

  double coord(int axis, Index i) const {
    return static_cast<double>(2 * i - off2[axis]) * (0.5 * h);
  }

  std::array<double, 3> point(Index node) const {
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) x[a] = coord(a, coord_index(node, a));
    return x;
  }

  /// Neighbor in direction dir (+1/-1) along axis, or -1 if it does not exist.
  Index neighbor(Index node, int axis, int dir) const {
    const Index i = coord_index(node, axis);
    Index j = i + dir;
    if (j < 0 || j >= n[axis]) {
      if (face[axis] != FaceMode::periodic) return -1;
      j = (j + n[axis]) % n[axis];
    }
    return node + (j - i) * stride[axis];
  }

  /// Forward edge (node, node + e_axis) carries a gradient value.
  bool edge_active(Index node, int axis) const {
    const Index nb = neighbor(node, axis, +1);
    if (nb < 0) return false;
    return is_fluid(node) || is_fluid(nb);
  }

  std::size_t count(NodeLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
  }

  /// Total measure of fluid nodes, h^d times their count.
  double fluid_measure() const { return cell_volume() * num_fluid(); }

  bool same_layout(const Grid& o) const {
    return d == o.d && h == o.h && n == o.n && off2 == o.off2 && face == o.face &&
           labels == o.labels;
  }

  std::string describe() const {
    std::ostringstream s;
    s << to_string(spec.host) << " d=" << d << " n=" << n[0];
    for (int a = 1; a < d; ++a) s << "x" << n[a];
    s << " h=" << h << " fluid=" << num_fluid();
    return s.str();
  }
};

namespace detail {

inline Index floor_div(Index a, Index b) {
  Index q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline Index integer_ratio(double num, double h, const char* what) {
  const double r = num / h;
  const Index m = static_cast<Index>(std::llround(r));
  if (m <= 0 || std::abs(static_cast<double>(m) - r) > 1e-9 * std::max(1.0, r))
    throw ConfigError(std::string(what) + " must be a positive integer multiple of h");
  return m;
}

inline void check_memory(Index nodes, const ResolutionPolicy& policy) {
  const double mb = static_cast<double>(nodes) * policy.bytes_per_node / (1024.0 * 1024.0);
  if (mb > policy.memory_cap_mb) {
    std::ostringstream s;
    s << "grid of " << nodes << " nodes needs about " << std::fixed << std::setprecision(0)
      << mb << " MB, above the cap of " << policy.memory_cap_mb << " MB";
    throw MemoryCapError(s.str(), static_cast<std::size_t>(nodes), mb);
  }
}

inline void check_resolution(const DomainSpec& spec, double h, const ResolutionPolicy& policy) {
  if (!spec.perforated) return;
  const double inner = spec.epsilon * spec.eta * spec.shape.c0(spec.d);
  if (inner / h + 1e-12 < policy.min_cells_per_radius) {
    const double required = inner / policy.min_cells_per_radius;
    std::ostringstream s;
    s << std::setprecision(6) << "hole inner radius " << inner << " spans " << inner / h
      << " grid cells, below the minimum of " << policy.min_cells_per_radius
      << "; need h <= " << required;
    throw ResolutionError(s.str(), required);
  }
}

/// Hole test by integer lattice arithmetic, shared by every host so that
/// tiled cells classify identically to the single cell.
struct LatticeClassifier {
  int d;
  double h;
  Index m;  // epsilon / h
  double scale;  // epsilon * eta
  HoleShape shape;

  /// Cell index of a twice-unit coordinate; fills the local point y.
  std::array<Index, 3> locate(const std::array<Index, 3>& c2, std::array<double, 3>& y) const {
    std::array<Index, 3> k{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      k[a] = floor_div(c2[a] + m, 2 * m);
      const Index l2 = c2[a] - 2 * m * k[a];
      y[a] = static_cast<double>(l2) * (0.5 * h) / scale;
    }
    return k;
  }
};

template <class Admissible>
std::shared_ptr<const Grid> finalize_grid(Grid g, const DomainSpec& spec,
                                          const Admissible& admissible, bool exterior_shell) {
  g.spec = spec;
  g.stride = {1, g.n[0], g.n[0] * g.n[1]};
  const Index total = g.n[0] * g.n[1] * g.n[2];
  g.labels.assign(static_cast<std::size_t>(total), NodeLabel::fluid);
  std::optional<LatticeClassifier> cls;
  if (spec.perforated) {
    cls = LatticeClassifier{g.d, g.h, integer_ratio(spec.epsilon, g.h, "epsilon"),
                            spec.epsilon * spec.eta, spec.shape};
  }
  for (Index node = 0; node < total; ++node) {
    std::array<Index, 3> c2{0, 0, 0};
    bool shell = false;
    for (int a = 0; a < g.d; ++a) {
      const Index i = g.coord_index(node, a);
      c2[a] = 2 * i - g.off2[a];
      if (exterior_shell && (i == 0 || i == g.n[a] - 1)) shell = true;
    }
    if (shell) {
      g.labels[node] = NodeLabel::exterior;
      continue;
    }
    if (cls) {
      std::array<double, 3> y{};
      const auto k = cls->locate(c2, y);
      if (admissible(k) && shape_contains(spec.shape, std::span<const double>(y.data(), g.d)))
        g.labels[node] = NodeLabel::hole;
    }
  }
  g.unknown_of_node.assign(static_cast<std::size_t>(total), -1);
  g.node_of_unknown.clear();
  for (Index node = 0; node < total; ++node) {
    if (g.labels[node] == NodeLabel::fluid) {
      g.unknown_of_node[node] = static_cast<int>(g.node_of_unknown.size());
      g.node_of_unknown.push_back(node);
    }
  }
  if (g.node_of_unknown.empty()) throw ConfigError("grid has no fluid nodes");
  return std::make_shared<const Grid>(std::move(g));
}

}  // namespace detail

/** \brief Perforated or plain grid for any host. */
inline std::shared_ptr<const Grid> build_domain(const DomainSpec& spec, double h,
                                                const ResolutionPolicy& policy = {}) {
  if (!(h > 0.0)) throw ConfigError("h must be positive");
  if (!(spec.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (spec.perforated) {
    spec.shape.validate(spec.d);
    if (!(spec.eta > 0.0 && spec.eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  } else if (spec.d < 2 || spec.d > 3) {
    throw ConfigError("dimension must be 2 or 3");
  }
  detail::check_resolution(spec, h, policy);

  Grid g;
  g.d = spec.d;
  g.h = h;
  bool shell = false;
  switch (spec.host) {
    case Host::periodic_cell: {
      if (spec.periodic_cells < 1) throw ConfigError("periodic_cells must be >= 1");
      const Index m = detail::integer_ratio(spec.epsilon, h, "epsilon");
      for (int a = 0; a < g.d; ++a) {
        g.n[a] = m * spec.periodic_cells;
        g.off2[a] = g.n[a];
        g.face[a] = FaceMode::periodic;
      }
      break;
    }
    case Host::neumann_cell: {
      if (spec.epsilon != 1.0) throw ConfigError("neumann-cell host requires epsilon = 1");
      const Index m = detail::integer_ratio(1.0, h, "cell width");
      for (int a = 0; a < g.d; ++a) {
        g.n[a] = m;
        g.off2[a] = m - 1;
        g.face[a] = FaceMode::neumann;
      }
      break;
    }
    case Host::truncated_lattice: {
      const double w = 2.0 * spec.lattice_radius;
      const Index half = detail::integer_ratio(w, h, "box half-width 2R");
      for (int a = 0; a < g.d; ++a) {
        g.n[a] = 2 * half + 1;
        g.off2[a] = 2 * half;
        g.face[a] = FaceMode::dirichlet;
      }
      shell = true;
      break;
    }
    case Host::bounded: {
      const Index cells = detail::integer_ratio(spec.side, h, "domain side");
      for (int a = 0; a < g.d; ++a) {
        g.n[a] = cells + 1;
        g.off2[a] = 0;
        g.face[a] = FaceMode::dirichlet;
      }
      shell = true;
      break;
    }
  }
  Index total = 1;
  for (int a = 0; a < g.d; ++a) total *= g.n[a];
  detail::check_memory(total, policy);

  const double eps = spec.epsilon;
  const int d = spec.d;
  auto admissible = [&](const std::array<Index, 3>& k) {
    constexpr double slack = 1e-12;
    switch (spec.host) {
      case Host::periodic_cell:
      case Host::neumann_cell:
        return true;
      case Host::truncated_lattice: {
        const double w = 2.0 * spec.lattice_radius;
        for (int a = 0; a < d; ++a)
          if (std::abs(eps * static_cast<double>(k[a])) + 0.5 * eps > w + slack) return false;
        return true;
      }
      case Host::bounded: {
        for (int a = 0; a < d; ++a) {
          const double lo = eps * (static_cast<double>(k[a]) - 0.5);
          const double hi = eps * (static_cast<double>(k[a]) + 0.5);
          if (lo < -slack || hi > spec.side + slack) return false;
        }
        return true;
      }
    }
    return false;
  };
  return detail::finalize_grid(std::move(g), spec, admissible, shell);
}

/** \brief Boundary treatment of the outer faces of a single-cell grid. */
enum class CellBoundary { periodic, dirichlet, neumann };

/** \brief Unit cell grid with the hole eta*T at its center. */
inline std::shared_ptr<const Grid> build_cell_grid(const HoleShape& shape, int d, double eta,
                                                   double h, CellBoundary boundary,
                                                   const ResolutionPolicy& policy = {}) {
  DomainSpec spec;
  spec.d = d;
  spec.eta = eta;
  spec.shape = shape;
  spec.epsilon = 1.0;
  switch (boundary) {
    case CellBoundary::periodic:
      spec.host = Host::periodic_cell;
      return build_domain(spec, h, policy);
    case CellBoundary::neumann:
      spec.host = Host::neumann_cell;
      return build_domain(spec, h, policy);
    case CellBoundary::dirichlet:
      spec.host = Host::bounded;
      break;
  }
  // Dirichlet cell: the bounded host [0,1]^d shifted to Y.
  detail::check_resolution(spec, h, policy);
  shape.validate(d);
  Grid g;
  g.d = d;
  g.h = h;
  const Index m = detail::integer_ratio(1.0, h, "cell width");
  for (int a = 0; a < d; ++a) {
    g.n[a] = m + 1;
    g.off2[a] = m;
    g.face[a] = FaceMode::dirichlet;
  }
  Index total = 1;
  for (int a = 0; a < d; ++a) total *= m + 1;
  detail::check_memory(total, policy);
  return detail::finalize_grid(std::move(g), spec, [](const std::array<Index, 3>&) { return true; },
                               true);
}

/** \brief Truncated lattice in the box [-2R, 2R]^d; holes only in whole cells. */
inline std::shared_ptr<const Grid> build_lattice_domain(const DomainSpec& spec, double h,
                                                        const ResolutionPolicy& policy = {}) {
  DomainSpec s = spec;
  s.host = Host::truncated_lattice;
  return build_domain(s, h, policy);
}

/** \brief Bounded host [0, side]^d with holes in cells eps(k+Y) inside it. */
inline std::shared_ptr<const Grid> build_bounded_domain(const DomainSpec& spec, double h,
                                                        const ResolutionPolicy& policy = {}) {
  DomainSpec s = spec;
  s.host = Host::bounded;
  return build_domain(s, h, policy);
}

/** \brief Grid spacing giving at least `cells_per_radius` cells across the
 * hole inner radius eps*eta*c0, with eps/h an even integer.
 */
inline double spacing_for(const DomainSpec& spec, double cells_per_radius) {
  if (!(cells_per_radius > 0.0)) throw ConfigError("cells_per_radius must be positive");
  const double target = spec.epsilon * spec.eta * spec.shape.c0(spec.d) / cells_per_radius;
  Index m = static_cast<Index>(std::ceil(spec.epsilon / target - 1e-9));
  if (m % 2 != 0) ++m;
  return spec.epsilon / static_cast<double>(m);
}

/** \brief Number of lattice cells holding a hole, by set inclusion. */
inline Index expected_hole_cells(const DomainSpec& spec) {
  Index per_axis = 0;
  const double eps = spec.epsilon;
  switch (spec.host) {
    case Host::periodic_cell: per_axis = spec.periodic_cells; break;
    case Host::neumann_cell: per_axis = 1; break;
    case Host::truncated_lattice:
      per_axis = 2 * static_cast<Index>(std::floor((2.0 * spec.lattice_radius - 0.5 * eps) / eps +
                                                   1e-12)) + 1;
      break;
    case Host::bounded:
      // Centers eps*k with [eps(k - 1/2), eps(k + 1/2)] inside [0, side].
      per_axis = static_cast<Index>(std::floor(spec.side / eps - 0.5 + 1e-12));
      break;
  }
  if (!spec.perforated) return 0;
  Index total = 1;
  for (int a = 0; a < spec.d; ++a) total *= std::max<Index>(per_axis, 0);
  return total;
}

/** \brief Legacy VTK structured-points dump of the node labels. */
inline void write_vtk_labels(const Grid& g, std::ostream& os) {
  os << "# vtk DataFile Version 3.0\n"
     << "perfscale labels " << g.describe() << "\n"
     << "ASCII\nDATASET STRUCTURED_POINTS\n"
     << "DIMENSIONS " << g.n[0] << ' ' << g.n[1] << ' ' << g.n[2] << '\n';
  os << std::setprecision(17) << "ORIGIN";
  for (int a = 0; a < 3; ++a) os << ' ' << (a < g.d ? g.coord(a, 0) : 0.0);
  os << "\nSPACING " << g.h << ' ' << g.h << ' ' << g.h << '\n';
  os << "POINT_DATA " << g.num_nodes() << "\nSCALARS label int 1\nLOOKUP_TABLE default\n";
  for (Index i = 0; i < g.num_nodes(); ++i) os << static_cast<int>(g.labels[i]) << '\n';
}

}  // namespace perfscale

#endif
