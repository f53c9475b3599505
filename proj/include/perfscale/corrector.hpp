#ifndef PERFSCALE_CORRECTOR_HPP
#define PERFSCALE_CORRECTOR_HPP

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "json.hpp"
#include "perfscale/geometry.hpp"
#include "perfscale/grid_calculus.hpp"
#include "perfscale/linsolve.hpp"

namespace perfscale {

struct CorrectorOptions {
  std::vector<double> p_set{2.0};
  double tol = 1e-10;
  int max_iters = 2000;
  ResolutionPolicy policy{};
};

/** \brief Cell corrector: -Lap chi = eta^(d-2) in the periodic cell minus
 * eta*T, chi = 0 on the hole.
 */
struct CorrectorResult {
  int d = 2;
  double eta = 0.0;
  double h = 0.0;
  HoleShape shape;
  SparseOperator op;
  ScalarField chi;
  double load = 0.0;  // eta^(d-2)
  double integral = 0.0;
  double grad_l2_squared = 0.0;
  std::map<double, double> grad_norms;
  std::map<double, double> chi_norms;
  int iterations = 0;
  double relative_residual = 0.0;

  const Grid& grid() const { return chi.grid(); }

  /// Relative defect of ||grad chi||_2^2 = eta^(d-2) * int chi.
  double green_defect() const {
    const double rhs = load * integral;
    return std::abs(grad_l2_squared - rhs) / std::abs(rhs);
  }
};

/** \brief Corrector on the operator of a periodic unit cell grid. */
inline CorrectorResult solve_corrector(const SparseOperator& op, const CorrectorOptions& opts = {}) {
  const GridPtr& grid = op.grid_ptr();
  const DomainSpec& spec = grid->spec;
  if (spec.host != Host::periodic_cell || spec.epsilon != 1.0 || spec.periodic_cells != 1 ||
      !spec.perforated)
    throw GridMismatchError("corrector needs a perforated periodic unit cell grid");
  const int d = spec.d;
  const double load = std::pow(spec.eta, d - 2);
  std::vector<double> b(static_cast<std::size_t>(op.size()), load);
  SolveOptions so;
  so.tol = opts.tol;
  so.max_iters = opts.max_iters;
  auto rep = solve_spd(op, b, so);

  CorrectorResult r{d,    spec.eta, grid->h, spec.shape, op, ScalarField(grid, std::move(rep.solution)),
                    load, 0.0,      0.0,     {},         {}, 0,
                    0.0};
  r.iterations = rep.iterations;
  r.relative_residual = rep.relative_residual;
  r.integral = integral(r.chi);
  const VectorField g = gradient(r.chi);
  r.grad_l2_squared = inner(g, g);
  for (double p : opts.p_set) {
    r.grad_norms[p] = lp_norm(g, p);
    r.chi_norms[p] = lp_norm(r.chi, p);
  }
  return r;
}

inline CorrectorResult solve_corrector(const HoleShape& shape, int d, double eta, double h,
                                       const CorrectorOptions& opts = {}) {
  auto grid = build_cell_grid(shape, d, eta, h, CellBoundary::periodic, opts.policy);
  return solve_corrector(assemble_laplacian(grid), opts);
}

inline nlohmann::json to_json(const CorrectorResult& r) {
  nlohmann::json j;
  j["d"] = r.d;
  j["eta"] = r.eta;
  j["h"] = r.h;
  j["shape"] = to_string(r.shape.kind);
  j["integral"] = r.integral;
  j["grad_l2_squared"] = r.grad_l2_squared;
  j["green_defect"] = r.green_defect();
  j["iterations"] = r.iterations;
  j["relative_residual"] = r.relative_residual;
  auto& gn = j["grad_norms"] = nlohmann::json::object();
  for (auto [p, v] : r.grad_norms) gn[nlohmann::json(p).dump()] = v;
  auto& cn = j["chi_norms"] = nlohmann::json::object();
  for (auto [p, v] : r.chi_norms) cn[nlohmann::json(p).dump()] = v;
  return j;
}

struct CorrectorRow {
  double eta = 0.0;
  double h = 0.0;
  double integral = 0.0;
  std::map<double, double> grad_norms;
  double green_defect = 0.0;
  int iterations = 0;
};

/** \brief Raised when a cell solve fails inside corrector_scaling_report. */
class CorrectorSweepError : public Error {
 public:
  CorrectorSweepError(const std::string& what, std::vector<CorrectorRow> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<CorrectorRow>& partial() const { return partial_; }

 private:
  std::vector<CorrectorRow> partial_;
};

/** \brief Corrector statistics over a list of eta, ordered by decreasing eta.
 *
 * The grid spacing for each eta follows `cells_per_radius`.
 */
inline std::vector<CorrectorRow> corrector_scaling_report(std::vector<double> etas,
                                                          const HoleShape& shape, int d,
                                                          double cells_per_radius,
                                                          const CorrectorOptions& opts = {}) {
  std::sort(etas.begin(), etas.end(), std::greater<>());
  std::vector<CorrectorRow> rows;
  for (double eta : etas) {
    DomainSpec spec;
    spec.d = d;
    spec.eta = eta;
    spec.shape = shape;
    const double h = spacing_for(spec, cells_per_radius);
    try {
      CorrectorOptions o = opts;
      o.policy.min_cells_per_radius = std::min(o.policy.min_cells_per_radius, cells_per_radius);
      auto r = solve_corrector(shape, d, eta, h, o);
      rows.push_back({eta, h, r.integral, r.grad_norms, r.green_defect(), r.iterations});
    } catch (const Error& e) {
      throw CorrectorSweepError("cell solve failed at eta=" + std::to_string(eta) + ": " + e.what(),
                                rows);
    }
  }
  return rows;
}

/// Quintic smoothstep 6t^5 - 15t^4 + 10t^3 clamped to [0,1].
inline double smoothstep5(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

/** \brief Radial cutoff: 1 on B(0,R), 0 outside B(0,2R), smooth between. */
inline double cutoff_profile(double r, double R) {
  if (std::isinf(R)) return 1.0;
  return 1.0 - smoothstep5((r - R) / R);
}

namespace detail {
inline double radius(const std::array<double, 3>& x, int d) {
  double s = 0.0;
  for (int a = 0; a < d; ++a) s += x[a] * x[a];
  return std::sqrt(s);
}

inline void require_room_for_cutoff(const Grid& g, double R) {
  if (std::isinf(R)) return;
  if (!(R > 0.0)) throw ConfigError("cutoff radius must be positive");
  for (int a = 0; a < g.d; ++a) {
    const double reach = std::min(std::abs(g.coord(a, 0)), std::abs(g.coord(a, g.n[a] - 1)));
    if (g.face[a] == FaceMode::periodic || reach <= 2.0 * R + g.h)
      throw ConfigError("grid does not extend past the cutoff support radius 2R");
  }
}
}  // namespace detail

/** \brief Cutoff phi_R sampled on the fluid nodes; R = infinity gives 1. */
inline ScalarField cutoff_bump(double R, const GridPtr& grid) {
  detail::require_room_for_cutoff(*grid, R);
  const int d = grid->d;
  return ScalarField::from_function(grid, [&](const std::array<double, 3>& x) {
    return cutoff_profile(detail::radius(x, d), R);
  });
}

/// C0 = 2 * circumradius, so that eta*T lies in B(0, C0 eta).
inline double default_log_cutoff_c0(const HoleShape& shape, int d) { return 2.0 * shape.circumradius(d); }

/** \brief Logarithmic test function of the two-dimensional cell.
 *
 * 0 on B(0, C0 eta), 1 - ln|x| / ln(C0 eta) up to |x| = 1/2, constant beyond.
 */
inline ScalarField log_cutoff_psi(double eta, double C0, const GridPtr& grid) {
  if (grid->d != 2) throw ConfigError("log cutoff is defined for d = 2 only");
  const double a = C0 * eta;
  if (!(a > 0.0 && a < 0.25)) throw ConfigError("log cutoff needs 0 < C0*eta < 1/4");
  const double la = std::log(a);
  return ScalarField::from_function(grid, [&](const std::array<double, 3>& x) {
    const double r = detail::radius(x, 2);
    if (r <= a) return 0.0;
    return 1.0 - std::log(std::min(r, 0.5)) / la;
  });
}

namespace detail {
/// Index of the corrector cell node matching a lattice node, by local offset.
inline Index cell_node_for(const Grid& lattice, const Grid& cell, Index node) {
  Index cn = 0;
  const Index m = cell.n[0];
  for (int a = 0; a < lattice.d; ++a) {
    const Index c2 = 2 * lattice.coord_index(node, a) - lattice.off2[a];
    const Index k = floor_div(c2 + m, 2 * m);
    const Index l2 = c2 - 2 * m * k;  // in [-m, m)
    Index i = (l2 + cell.off2[a]);
    if (i % 2 != 0) throw GridMismatchError("lattice and cell grids are not aligned");
    i /= 2;
    cn += i * cell.stride[a];
  }
  return cn;
}

inline void require_tiling(const CorrectorResult& corr, const Grid& lattice) {
  const Grid& cell = corr.grid();
  if (lattice.d != cell.d || lattice.h != cell.h || lattice.spec.epsilon != 1.0 ||
      lattice.spec.eta != corr.eta || !(lattice.spec.shape == corr.shape))
    throw GridMismatchError("lattice grid does not match the corrector cell (same h, eta, shape, eps = 1)");
}
}  // namespace detail

/** \brief Corrector repeated periodically on a lattice grid with eps = 1. */
inline ScalarField tile_corrector(const CorrectorResult& corr, const GridPtr& lattice) {
  detail::require_tiling(corr, *lattice);
  ScalarField out(lattice);
  for (int u = 0; u < lattice->num_fluid(); ++u) {
    const Index node = lattice->node_of_unknown[u];
    out.values()[u] = corr.chi.at_node(detail::cell_node_for(*lattice, corr.grid(), node));
  }
  return out;
}

/** \brief chi_eta * phi_R on the lattice grid. */
inline ScalarField extremal_function(const CorrectorResult& corr, double R, const GridPtr& lattice) {
  ScalarField chi = tile_corrector(corr, lattice);
  const ScalarField phi = cutoff_bump(R, lattice);
  for (std::size_t i = 0; i < chi.size(); ++i) chi.values()[i] *= phi.values()[i];
  return chi;
}

/** \brief Load of the cut-off corrector from the product rule:
 * eta^(d-2) phi - 2 grad chi . grad phi - chi Lap phi, all discrete.
 *
 * Equals L(chi phi) up to the corrector solve residual.
 */
inline ScalarField extremal_rhs(const CorrectorResult& corr, double R, const GridPtr& lattice) {
  const ScalarField chi = tile_corrector(corr, lattice);
  detail::require_room_for_cutoff(*lattice, R);
  const Grid& g = *lattice;
  const int d = g.d;
  const double inv_h2 = 1.0 / (g.h * g.h);
  auto phi_at = [&](Index node) { return cutoff_profile(detail::radius(g.point(node), d), R); };
  ScalarField F(lattice);
  for (int u = 0; u < g.num_fluid(); ++u) {
    const Index node = g.node_of_unknown[u];
    const double phi_i = phi_at(node);
    const double chi_i = chi.values()[u];
    double cross = 0.0, lap_phi = 0.0;
    for (int a = 0; a < d; ++a)
      for (int dir : {-1, +1}) {
        const Index nb = g.neighbor(node, a, dir);
        if (nb < 0) continue;
        const double phi_j = phi_at(nb);
        cross += (chi.at_node(nb) - chi_i) * (phi_j - phi_i);
        lap_phi += phi_i - phi_j;
      }
    F.values()[u] = corr.load * phi_i - inv_h2 * cross + chi_i * inv_h2 * lap_phi;
  }
  return F;
}

}  // namespace perfscale

#endif
