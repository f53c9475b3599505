#ifndef PERFSCALE_OPERATOR_NORMS_HPP
#define PERFSCALE_OPERATOR_NORMS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "json.hpp"
#include "perfscale/corrector.hpp"
#include "perfscale/grid_calculus.hpp"
#include "perfscale/linsolve.hpp"

namespace perfscale {

/** \brief Solution operators of -Lap u = F + div f with u = 0 off the fluid set.
 *
 * A: f -> grad u, B: F -> grad u, C: f -> u, D: F -> u.
 */
enum class Which { A, B, C, D };

inline std::string to_string(Which w) {
  switch (w) {
    case Which::A: return "A";
    case Which::B: return "B";
    case Which::C: return "C";
    case Which::D: return "D";
  }
  return "?";
}

inline Which parse_which(std::string_view s) {
  if (s == "A") return Which::A;
  if (s == "B") return Which::B;
  if (s == "C") return Which::C;
  if (s == "D") return Which::D;
  throw ConfigError("unknown operator '" + std::string(s) + "' (expected A, B, C or D)");
}

enum class EstimateKind { exact_p2, lower_bound, random_search };

inline std::string to_string(EstimateKind k) {
  switch (k) {
    case EstimateKind::exact_p2: return "exact-p2";
    case EstimateKind::lower_bound: return "lower-bound";
    case EstimateKind::random_search: return "random-search-lower-bound";
  }
  return "?";
}

inline EstimateKind parse_estimate_kind(std::string_view s) {
  if (s == "exact-p2") return EstimateKind::exact_p2;
  if (s == "lower-bound") return EstimateKind::lower_bound;
  if (s == "random-search-lower-bound") return EstimateKind::random_search;
  throw ConfigError("unknown estimate kind '" + std::string(s) + "'");
}

enum class Strategy { exact, corrector_cutoff, random_search };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::exact: return "exact";
    case Strategy::corrector_cutoff: return "corrector-cutoff";
    case Strategy::random_search: return "random-search";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "exact") return Strategy::exact;
  if (s == "corrector-cutoff") return Strategy::corrector_cutoff;
  if (s == "random-search") return Strategy::random_search;
  throw ConfigError("unknown strategy '" + std::string(s) +
                    "' (expected exact, corrector-cutoff or random-search)");
}

struct NormOptions {
  double solve_tol = 1e-10;
  double power_tol = 1e-10;
  int max_iters = 2000;
  int power_max_iters = 2000;
  std::uint64_t seed = 20240917;
  int trials = 32;
  /// Cutoff radius for corrector-cutoff on a truncated lattice; NaN picks
  /// the largest radius that fits.
  double cutoff_radius = std::numeric_limits<double>::quiet_NaN();
};

struct OperatorNormEstimate {
  Which which = Which::D;
  double p = 2.0;
  double epsilon = 1.0;
  double eta = 0.0;
  double value = 0.0;
  EstimateKind kind = EstimateKind::exact_p2;
  std::string domain;
  double grid_h = 0.0;
  int iterations = 0;
};

inline nlohmann::json to_json(const OperatorNormEstimate& e) {
  return {{"which", to_string(e.which)}, {"p", e.p},         {"epsilon", e.epsilon},
          {"eta", e.eta},                {"value", e.value}, {"kind", to_string(e.kind)},
          {"grid_h", e.grid_h},          {"iterations", e.iterations}, {"domain", e.domain}};
}

namespace detail {

/// Solves with the operator and counts inner iterations.
class Solver {
 public:
  Solver(const SparseOperator& op, const NormOptions& o) : op_(op) {
    opts_.tol = o.solve_tol;
    opts_.max_iters = o.max_iters;
  }
  std::vector<double> operator()(std::span<const double> b) {
    auto rep = solve_spd(op_, b, opts_);
    iterations += rep.iterations;
    return std::move(rep.solution);
  }
  ScalarField solve(const ScalarField& F) { return ScalarField(F.grid_ptr(), (*this)(F.values())); }
  int iterations = 0;

 private:
  const SparseOperator& op_;
  SolveOptions opts_;
};

inline const GridPtr& grid_of(const SparseOperator& op) {
  if (!op.has_grid()) throw ConfigError("operator norms need a grid-backed operator");
  return op.grid_ptr();
}

inline OperatorNormEstimate make_estimate(const Grid& g, Which w, double p, EstimateKind k) {
  OperatorNormEstimate e;
  e.which = w;
  e.p = p;
  e.epsilon = g.spec.epsilon;
  e.eta = g.spec.perforated ? g.spec.eta : 0.0;
  e.kind = k;
  e.domain = g.describe();
  e.grid_h = g.h;
  return e;
}

inline std::vector<double> random_edges(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(g.d * g.num_nodes()), 0.0);
  for (int a = 0; a < g.d; ++a)
    for (Index n = 0; n < g.num_nodes(); ++n)
      if (g.edge_active(n, a)) out[static_cast<std::size_t>(a * g.num_nodes() + n)] = dist(rng);
  return out;
}

}  // namespace detail

/** \brief Exact p = 2 operator norm.
 *
 * D from the smallest eigenvalue, B and C by power iteration on two
 * different composed operators (scalar and vector space), A by power
 * iteration on T^T T with T = grad L^-1 div.
 */
inline OperatorNormEstimate norm_p2(const SparseOperator& op, Which which, const NormOptions& opts = {}) {
  const GridPtr& gp = detail::grid_of(op);
  const Grid& g = *gp;
  auto est = detail::make_estimate(g, which, 2.0, EstimateKind::exact_p2);
  detail::Solver solve(op, opts);
  const std::size_t nf = static_cast<std::size_t>(g.num_fluid());
  const std::size_t ne = static_cast<std::size_t>(g.d * g.num_nodes());

  switch (which) {
    case Which::D: {
      EigenOptions eo;
      eo.tol = opts.power_tol;
      eo.seed = opts.seed;
      auto ev = smallest_eigenvalue(op, eo);
      est.value = 1.0 / ev.value;
      est.iterations = ev.iterations;
      return est;
    }
    case Which::B: {
      auto map = [&](std::span<const double> x, std::span<double> y) {
        ScalarField u(gp, solve(x));
        ScalarField gtg = divergence_adjoint(gradient(u));  // -G^T G u
        for (auto& v : gtg.values()) v = -v;
        auto z = solve(gtg.values());
        std::copy(z.begin(), z.end(), y.begin());
      };
      auto pe = power_iteration(map, nf, opts.power_tol, opts.power_max_iters, opts.seed);
      est.value = std::sqrt(pe.value);
      est.iterations = solve.iterations;
      return est;
    }
    case Which::C: {
      // T = L^-1 div, T^T T f = -grad L^-1 L^-1 div f on edge fields.
      auto map = [&](std::span<const double> x, std::span<double> y) {
        VectorField f(gp);
        f.assign_flat(x);
        auto u = solve(divergence_adjoint(f).values());
        ScalarField v(gp, solve(u));
        auto gv = gradient(v).flatten();
        for (std::size_t i = 0; i < ne; ++i) y[i] = -gv[i];
      };
      std::mt19937_64 rng(opts.seed);
      auto start = detail::random_edges(g, rng);
      auto pe = power_iteration(map, ne, opts.power_tol, opts.power_max_iters, opts.seed, start);
      est.value = std::sqrt(pe.value);
      est.iterations = solve.iterations;
      return est;
    }
    case Which::A: {
      auto T = [&](std::span<const double> x) {
        VectorField f(gp);
        f.assign_flat(x);
        ScalarField u(gp, solve(divergence_adjoint(f).values()));
        return gradient(u).flatten();
      };
      auto map = [&](std::span<const double> x, std::span<double> y) {
        auto tx = T(x);
        auto ttx = T(tx);  // T is self-adjoint: (grad L^-1 div)^T = grad L^-1 div
        std::copy(ttx.begin(), ttx.end(), y.begin());
      };
      std::mt19937_64 rng(opts.seed);
      auto start = detail::random_edges(g, rng);
      auto pe = power_iteration(map, ne, opts.power_tol, opts.power_max_iters, opts.seed, start);
      est.value = std::sqrt(pe.value);
      est.iterations = solve.iterations;
      return est;
    }
  }
  return est;
}

/** \brief Poincare constant 1 / lambda_min of the Dirichlet-anchored Laplacian. */
inline double poincare_constant(const SparseOperator& op, double tol = 1e-10) {
  EigenOptions eo;
  eo.tol = tol;
  return 1.0 / smallest_eigenvalue(op, eo).value;
}

namespace detail {

inline double ratio_for(Which w, double p, const ScalarField& u, const ScalarField* F,
                        const VectorField* f) {
  const double num = (w == Which::A || w == Which::B) ? lp_norm(gradient(u), p) : lp_norm(u, p);
  const double den = F ? lp_norm(*F, p) : lp_norm(*f, p);
  return den > 0.0 ? num / den : 0.0;
}

/// Duality map |g|^(q-2) g applied per node magnitude.
inline VectorField duality_map(const VectorField& g, double q) {
  VectorField out(g.grid_ptr());
  const Grid& gr = g.grid();
  for (Index n = 0; n < gr.num_nodes(); ++n) {
    double m2 = 0.0;
    for (int a = 0; a < gr.d; ++a) m2 += g.component(a)[n] * g.component(a)[n];
    if (m2 == 0.0) continue;
    const double s = std::pow(m2, 0.5 * (q - 2.0));
    for (int a = 0; a < gr.d; ++a) out.component(a)[n] = s * g.component(a)[n];
  }
  return out;
}

inline double largest_cutoff_radius(const Grid& g) {
  // Region of whole hole cells is |x| <= W - eps/2 - (fraction); keep one cell of margin.
  const double W = 2.0 * g.spec.lattice_radius;
  const double eps = g.spec.epsilon;
  const double full = eps * (std::floor((W - 0.5 * eps) / eps + 1e-12) + 0.5);
  return 0.5 * (full - eps);
}

/// Divergence-form data for A: eta^(d-2) x s(|x|) - 2 chi grad phi, with
/// div(x s(r)) = phi.
inline VectorField a_construction_data(const CorrectorResult& corr, double R, const GridPtr& gp) {
  const Grid& g = *gp;
  const int d = g.d;
  const ScalarField chi = tile_corrector(corr, gp);
  auto phi_at = [&](Index node) { return cutoff_profile(radius(g.point(node), d), R); };
  // s(r) = r^-d int_0^r phi(t) t^(d-1) dt, closed form on the plateau and by
  // quadrature on the transition band.
  auto s_of = [&](double r) {
    if (r <= R) return 1.0 / d;
    const int nq = 64;
    const double top = std::min(r, 2.0 * R);
    double acc = std::pow(R, d) / d;
    const double dt = (top - R) / nq;
    for (int q = 0; q < nq; ++q) {
      const double t = R + (q + 0.5) * dt;
      acc += cutoff_profile(t, R) * std::pow(t, d - 1) * dt;
    }
    return acc / std::pow(r, d);
  };
  VectorField f(gp);
  const double inv_h = 1.0 / g.h;
  for (int a = 0; a < d; ++a) {
    auto& comp = f.component(a);
    for (Index n = 0; n < g.num_nodes(); ++n) {
      if (!g.edge_active(n, a)) continue;
      const Index nb = g.neighbor(n, a, +1);
      auto x = g.point(n);
      x[a] += 0.5 * g.h;  // edge midpoint
      const double r = radius(x, d);
      const double chi_mid = 0.5 * (chi.at_node(n) + chi.at_node(nb));
      const double dphi = (phi_at(nb) - phi_at(n)) * inv_h;
      comp[n] = corr.load * x[a] * s_of(r) - 2.0 * chi_mid * dphi;
    }
  }
  return f;
}

}  // namespace detail

/** \brief Certified lower bound ||T data||_p / ||data||_p for p != 2 (or 2).
 *
 * corrector-cutoff: data built from the cell corrector times a cutoff
 * (R = infinity on a periodic host). random-search: maximum over seeded
 * trials from white noise, single bumps and perturbed torsion functions.
 */
inline OperatorNormEstimate empirical_lower_bound(const SparseOperator& op, Which which, double p,
                                                  Strategy strategy,
                                                  const CorrectorResult* corr = nullptr,
                                                  const NormOptions& opts = {}) {
  check_exponent(p);
  const GridPtr& gp = detail::grid_of(op);
  const Grid& g = *gp;
  detail::Solver solve(op, opts);

  if (strategy == Strategy::corrector_cutoff) {
    if (!corr) throw ConfigError("corrector-cutoff strategy needs a corrector");
    auto est = detail::make_estimate(g, which, p, EstimateKind::lower_bound);
    double R = std::numeric_limits<double>::infinity();
    if (g.spec.host == Host::truncated_lattice)
      R = std::isnan(opts.cutoff_radius) ? detail::largest_cutoff_radius(g) : opts.cutoff_radius;
    else if (g.spec.host != Host::periodic_cell)
      throw ConfigError("corrector-cutoff needs a periodic or truncated lattice host");

    const ScalarField F = std::isinf(R) ? ScalarField(gp, std::vector<double>(
                                                              static_cast<std::size_t>(g.num_fluid()),
                                                              corr->load))
                                        : extremal_rhs(*corr, R, gp);
    double best = 0.0;
    if (which == Which::D || which == Which::B) {
      const ScalarField w = solve.solve(F);
      best = detail::ratio_for(which, p, w, &F, nullptr);
    } else if (which == Which::C) {
      // Direct: u = chi phi with f = -grad(chi phi).
      const ScalarField v = std::isinf(R) ? tile_corrector(*corr, gp) : extremal_function(*corr, R, gp);
      VectorField f = gradient(v);
      for (int a = 0; a < g.d; ++a)
        for (auto& x : f.component(a)) x = -x;
      ScalarField u(gp, solve(divergence_adjoint(f).values()));
      best = detail::ratio_for(Which::C, p, u, nullptr, &f);
      // Dual: f = J_{p'}(grad w) from the B_{p'} construction.
      const double q = p / (p - 1.0);
      const ScalarField w = solve.solve(F);
      VectorField fd = detail::duality_map(gradient(w), q);
      ScalarField ud(gp, solve(divergence_adjoint(fd).values()));
      best = std::max(best, detail::ratio_for(Which::C, p, ud, nullptr, &fd));
    } else {
      VectorField f(gp);
      if (std::isinf(R)) {
        f = gradient(tile_corrector(*corr, gp));
      } else {
        f = detail::a_construction_data(*corr, R, gp);
      }
      ScalarField u(gp, solve(divergence_adjoint(f).values()));
      best = detail::ratio_for(Which::A, p, u, nullptr, &f);
    }
    est.value = best;
    est.iterations = solve.iterations;
    return est;
  }

  if (strategy == Strategy::exact) {
    if (p != 2.0) throw ConfigError("exact strategy is available for p = 2 only");
    return norm_p2(op, which, opts);
  }

  auto est = detail::make_estimate(g, which, p, EstimateKind::random_search);
  const bool scalar_data = which == Which::B || which == Which::D;
  // Torsion function L^-1 1 as a corrector-like profile.
  const ScalarField torsion =
      solve.solve(ScalarField(gp, std::vector<double>(static_cast<std::size_t>(g.num_fluid()), 1.0)));
  const VectorField torsion_grad = gradient(torsion);
  std::array<double, 3> lo{}, hi{};
  for (int a = 0; a < g.d; ++a) {
    lo[a] = g.coord(a, 0);
    hi[a] = g.coord(a, g.n[a] - 1);
  }
  double best = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    std::mt19937_64 rng(opts.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(t + 1));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int family = t % 3;
    ScalarField F(gp);
    VectorField f(gp);
    if (family == 0) {
      for (auto& v : F.values()) v = unit(rng);
      auto flat = detail::random_edges(g, rng);
      f.assign_flat(flat);
    } else if (family == 1) {
      std::array<double, 3> c{}, dir{};
      double ext = 0.0, dn = 0.0;
      for (int a = 0; a < g.d; ++a) {
        std::uniform_real_distribution<double> pos(lo[a], hi[a]);
        c[a] = pos(rng);
        ext = std::max(ext, hi[a] - lo[a]);
        dir[a] = unit(rng);
        dn += dir[a] * dir[a];
      }
      dn = std::sqrt(dn);
      std::uniform_real_distribution<double> rad(4.0 * g.h, std::max(8.0 * g.h, 0.25 * ext));
      const double rho = rad(rng);
      auto bump = [&](const std::array<double, 3>& x) {
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
        return std::max(0.0, 1.0 - r2 / (rho * rho));
      };
      F = ScalarField::from_function(gp, bump);
      for (int a = 0; a < g.d; ++a)
        for (Index n = 0; n < g.num_nodes(); ++n)
          if (g.edge_active(n, a)) f.component(a)[n] = bump(g.point(n)) * dir[a] / dn;
    } else {
      for (std::size_t i = 0; i < F.size(); ++i)
        F.values()[i] = torsion.values()[i] * (1.0 + 0.2 * unit(rng));
      for (int a = 0; a < g.d; ++a)
        for (Index n = 0; n < g.num_nodes(); ++n)
          f.component(a)[n] = torsion_grad.component(a)[n] * (1.0 + 0.2 * unit(rng));
    }
    double ratio = 0.0;
    if (scalar_data) {
      const ScalarField u = solve.solve(F);
      ratio = detail::ratio_for(which, p, u, &F, nullptr);
    } else {
      ScalarField u(gp, solve(divergence_adjoint(f).values()));
      ratio = detail::ratio_for(which, p, u, nullptr, &f);
    }
    best = std::max(best, ratio);
  }
  est.value = best;
  est.iterations = solve.iterations;
  return est;
}

struct DualityReport {
  double b2 = 0.0;
  double c2 = 0.0;
  double relative_difference = 0.0;
};

/** \brief Measures B_2 and C_2 by their separate routes and compares them. */
inline DualityReport duality_check(const SparseOperator& op, const NormOptions& opts = {}) {
  DualityReport r;
  r.b2 = norm_p2(op, Which::B, opts).value;
  r.c2 = norm_p2(op, Which::C, opts).value;
  r.relative_difference = std::abs(r.b2 - r.c2) / std::max(r.b2, r.c2);
  return r;
}

struct RescalingReport {
  double epsilon = 1.0;
  double d_scaled = 0.0, d_unit = 0.0;
  double c_scaled = 0.0, c_unit = 0.0;
  double d_ratio() const { return d_scaled / d_unit; }
  double c_ratio() const { return c_scaled / c_unit; }
  /// Relative deviation of the ratios from eps^2 and eps.
  double d_defect() const { return std::abs(d_ratio() / (epsilon * epsilon) - 1.0); }
  double c_defect() const { return std::abs(c_ratio() / epsilon - 1.0); }
};

/** \brief Compares D_2, C_2 on the eps-domain with the unit-scale domain
 * obtained by dividing all lengths by eps, at matched resolution.
 */
inline RescalingReport rescaling_check(const DomainSpec& scaled, double h_scaled,
                                       const DomainSpec& unit, double h_unit,
                                       const ResolutionPolicy& policy = {},
                                       const NormOptions& opts = {}) {
  const double eps = scaled.epsilon;
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
  if (unit.epsilon != 1.0 || scaled.host != unit.host || scaled.d != unit.d ||
      scaled.eta != unit.eta || !(scaled.shape == unit.shape))
    throw GridMismatchError("rescaling check needs the same host, d, eta and shape with unit eps");
  if (!close(h_unit, h_scaled / eps) ||
      (scaled.host == Host::bounded && !close(unit.side, scaled.side / eps)) ||
      (scaled.host == Host::truncated_lattice &&
       !close(unit.lattice_radius, scaled.lattice_radius / eps)))
    throw GridMismatchError("rescaling check needs matched resolutions (h_unit = h / eps)");
  RescalingReport r;
  r.epsilon = eps;
  auto op_s = assemble_laplacian(build_domain(scaled, h_scaled, policy));
  auto op_u = assemble_laplacian(build_domain(unit, h_unit, policy));
  r.d_scaled = norm_p2(op_s, Which::D, opts).value;
  r.d_unit = norm_p2(op_u, Which::D, opts).value;
  r.c_scaled = norm_p2(op_s, Which::C, opts).value;
  r.c_unit = norm_p2(op_u, Which::C, opts).value;
  return r;
}

/** \brief ||grad u||_p / ((eps eta)^-1 ||u||_p + ||F||_p + ||f||_p). */
inline double localization_ratio(const SparseOperator& op, const ScalarField& F, const VectorField& f,
                                  double p, const NormOptions& opts = {}) {
  const Grid& g = *detail::grid_of(op);
  detail::Solver solve(op, opts);
  ScalarField u(op.grid_ptr(), solve(rhs_from_data(F, f)));
  const double scale = g.spec.epsilon * g.spec.eta;
  return lp_norm(gradient(u), p) / (lp_norm(u, p) / scale + lp_norm(F, p) + lp_norm(f, p));
}

}  // namespace perfscale

#endif
