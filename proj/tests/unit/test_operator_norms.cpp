#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "perfscale/fit.hpp"
#include "perfscale/operator_norms.hpp"

using namespace perfscale;

namespace {

constexpr double kPi = 3.14159265358979323846;

ResolutionPolicy loose(double cpr = 1.0) {
  ResolutionPolicy p;
  p.min_cells_per_radius = cpr;
  return p;
}

GridPtr bounded(int d, double eps, double eta, double h, bool perforated = true) {
  DomainSpec s;
  s.d = d;
  s.epsilon = eps;
  s.eta = eta;
  s.host = Host::bounded;
  s.perforated = perforated;
  return build_domain(s, h, loose());
}

NormOptions tight() {
  NormOptions o;
  o.solve_tol = 1e-12;
  o.power_tol = 1e-12;
  o.power_max_iters = 20000;
  return o;
}

// Dense gradient matrix (edge values x fluid unknowns) built column by column.
Eigen::MatrixXd gradient_matrix(const GridPtr& g) {
  const int nf = g->num_fluid();
  const Index ne = g->d * g->num_nodes();
  Eigen::MatrixXd G(ne, nf);
  for (int j = 0; j < nf; ++j) {
    ScalarField e(g);
    e.values()[j] = 1.0;
    const auto col = gradient(e).flatten();
    for (Index i = 0; i < ne; ++i) G(i, j) = col[i];
  }
  return G;
}

}  // namespace

TEST(NormP2, DirichletSquareMatchesPrincipalEigenvalue) {
  const double h = 1.0 / 32;
  auto op = assemble_laplacian(bounded(2, 1.0, 0.25, h, false));
  const double D = norm_p2(op, Which::D).value;
  const double closed = 1.0 / (8.0 / (h * h) * std::pow(std::sin(kPi * h / 2), 2));
  EXPECT_NEAR(D, closed, 1e-9 * closed);
  EXPECT_NEAR(D * 2 * kPi * kPi, 1.0, (kPi * h) * (kPi * h) / 6);
}

TEST(NormP2, SpectralIdentitiesOnPerforatedDomain) {
  for (int d : {2, 3}) {
    auto op = assemble_laplacian(bounded(d, 0.25, 0.5, d == 2 ? 1.0 / 64 : 1.0 / 32));
    const auto opts = tight();
    const double D = norm_p2(op, Which::D, opts).value;
    const double B = norm_p2(op, Which::B, opts).value;
    const double C = norm_p2(op, Which::C, opts).value;
    const double A = norm_p2(op, Which::A, opts).value;
    EXPECT_NEAR(B, std::sqrt(D), 1e-6 * B) << "d=" << d;
    EXPECT_NEAR(C, std::sqrt(D), 1e-6 * C) << "d=" << d;
    EXPECT_LE(A, 1.0 + 1e-10);
    EXPECT_GE(A, 1.0 - 1e-4);
  }
}

TEST(NormP2, EstimateSerializesAllFields) {
  auto op = assemble_laplacian(bounded(2, 0.5, 0.5, 1.0 / 32));
  const auto j = to_json(norm_p2(op, Which::D));
  for (const char* k : {"which", "p", "epsilon", "eta", "value", "kind", "grid_h", "iterations"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j.at("kind"), "exact-p2");
  EXPECT_EQ(j.at("which"), "D");
}

TEST(Duality, BAndCAgreeOnBoundedPerforatedDomain) {
  auto op = assemble_laplacian(bounded(2, 0.25, 0.125, 1.0 / 256));
  const auto r = duality_check(op, tight());
  EXPECT_LE(r.relative_difference, 1e-6);
}

TEST(Duality, BAndCAgreeOnUnperforatedSquare) {
  auto op = assemble_laplacian(bounded(2, 1.0, 0.25, 1.0 / 32, false));
  EXPECT_LE(duality_check(op, tight()).relative_difference, 1e-6);
}

TEST(Duality, PowerIterationMatchesDenseSingularValues) {
  auto g = bounded(2, 1.0, 0.25, 1.0 / 17, false);
  auto op = assemble_laplacian(g);
  ASSERT_EQ(op.size(), 256);
  const Eigen::MatrixXd G = gradient_matrix(g);
  const Eigen::MatrixXd Linv = dense_oracle::to_dense(op).inverse();
  // Both spaces carry the same h^d weight, so plain singular values apply.
  const double b_ref = Eigen::JacobiSVD<Eigen::MatrixXd>(G * Linv).singularValues()[0];
  const double c_ref = Eigen::JacobiSVD<Eigen::MatrixXd>(Linv * G.transpose()).singularValues()[0];
  const double a_ref = Eigen::JacobiSVD<Eigen::MatrixXd>(G * Linv * G.transpose()).singularValues()[0];
  const auto opts = tight();
  EXPECT_NEAR(norm_p2(op, Which::B, opts).value, b_ref, 1e-8 * b_ref);
  EXPECT_NEAR(norm_p2(op, Which::C, opts).value, c_ref, 1e-8 * c_ref);
  EXPECT_NEAR(norm_p2(op, Which::A, opts).value, a_ref, 1e-8);
  EXPECT_NEAR(a_ref, 1.0, 1e-10);
}

TEST(LowerBound, NeverExceedsExactValueAtPTwo) {
  const double eta = 0.5, h = 1.0 / 32;
  auto cell = build_cell_grid(HoleShape::ball(0.25), 2, eta, h, CellBoundary::periodic, loose());
  auto cell_op = assemble_laplacian(cell);
  auto corr = solve_corrector(cell_op);
  DomainSpec s;
  s.eta = eta;
  s.host = Host::truncated_lattice;
  s.lattice_radius = 1.5;
  auto lat_op = assemble_laplacian(build_domain(s, h, loose()));
  const auto opts = tight();
  for (const SparseOperator* op : {&cell_op, &lat_op})
    for (Which w : {Which::A, Which::B, Which::C, Which::D}) {
      const double exact = norm_p2(*op, w, opts).value;
      for (Strategy st : {Strategy::corrector_cutoff, Strategy::random_search}) {
        NormOptions o;
        o.trials = 6;
        const auto lb = empirical_lower_bound(*op, w, 2.0, st, &corr, o);
        EXPECT_LE(lb.value, exact * (1 + 1e-8)) << to_string(w) << " " << to_string(st);
        EXPECT_GT(lb.value, 0.0);
      }
    }
}

TEST(LowerBound, CorrectorCutoffCapturesAQuarterOfExactC) {
  for (double eta : {1.0, 0.5}) {
    const double h = 1.0 / 16;
    const double R = std::round(1.0 / std::sqrt(eta));
    CorrectorOptions co;
    co.policy = loose();
    auto corr = solve_corrector(HoleShape::ball(0.25), 3, eta, h, co);
    DomainSpec s;
    s.d = 3;
    s.eta = eta;
    s.host = Host::truncated_lattice;
    s.lattice_radius = R + 0.25;
    auto op = assemble_laplacian(build_domain(s, h, loose()));
    NormOptions o;
    o.cutoff_radius = R;
    const double lb = empirical_lower_bound(op, Which::C, 2.0, Strategy::corrector_cutoff, &corr, o).value;
    // C_2 = sqrt(D_2) is checked above; the eigenvalue route is much cheaper here.
    const double exact = std::sqrt(norm_p2(op, Which::D).value);
    EXPECT_GE(lb, 0.25 * exact) << "eta=" << eta;
    EXPECT_LE(lb, exact * (1 + 1e-8));
  }
}

TEST(LowerBound, StrategyPreconditions) {
  auto op = assemble_laplacian(
      build_cell_grid(HoleShape::ball(0.25), 2, 0.5, 1.0 / 32, CellBoundary::periodic, loose()));
  EXPECT_THROW(empirical_lower_bound(op, Which::D, 4.0, Strategy::exact), ConfigError);
  EXPECT_THROW(empirical_lower_bound(op, Which::D, 4.0, Strategy::corrector_cutoff), ConfigError);
  EXPECT_THROW(empirical_lower_bound(op, Which::D, 1.0, Strategy::random_search), ConfigError);
  auto b_op = assemble_laplacian(bounded(2, 0.5, 0.5, 1.0 / 32));
  auto corr = solve_corrector(op);
  EXPECT_THROW(empirical_lower_bound(b_op, Which::D, 4.0, Strategy::corrector_cutoff, &corr), ConfigError);
}

TEST(LowerBound, RandomSearchIsSeedDeterministic) {
  auto op = assemble_laplacian(bounded(2, 0.5, 0.5, 1.0 / 32));
  NormOptions o;
  o.trials = 9;
  const double a = empirical_lower_bound(op, Which::A, 4.0, Strategy::random_search, nullptr, o).value;
  const double b = empirical_lower_bound(op, Which::A, 4.0, Strategy::random_search, nullptr, o).value;
  EXPECT_EQ(a, b);
  o.seed += 1;
  const double c = empirical_lower_bound(op, Which::A, 4.0, Strategy::random_search, nullptr, o).value;
  EXPECT_NE(a, c);
}

TEST(LowerBound, TwoDimensionalDFollowsLogLawFromCorrector) {
  std::vector<std::pair<double, double>> pts;
  for (double eta : {0.25, 0.125, 0.0625}) {
    DomainSpec s;
    s.eta = eta;
    auto cell = build_cell_grid(HoleShape::ball(0.25), 2, eta, spacing_for(s, 4.0), CellBoundary::periodic,
                                loose(4.0));
    auto op = assemble_laplacian(cell);
    auto corr = solve_corrector(op);
    pts.emplace_back(eta, empirical_lower_bound(op, Which::D, 4.0, Strategy::corrector_cutoff, &corr).value);
  }
  EXPECT_GE(fit_scaling(pts, FitModel::loglaw).r2, 0.98);
}

TEST(Rescaling, HalvingEpsilonScalesDAndC) {
  DomainSpec scaled;
  scaled.d = 2;
  scaled.epsilon = 0.5;
  scaled.eta = 0.125;
  scaled.host = Host::bounded;
  DomainSpec unit = scaled;
  unit.epsilon = 1.0;
  unit.side = 2.0;
  const auto r = rescaling_check(scaled, 1.0 / 256, unit, 1.0 / 128, loose(), tight());
  EXPECT_NEAR(r.d_ratio(), 0.25, 0.02 * 0.25);
  EXPECT_NEAR(r.c_ratio(), 0.5, 0.02 * 0.5);
  EXPECT_LE(r.d_defect(), 1e-6);
  EXPECT_LE(r.c_defect(), 1e-6);
  const double a_s = norm_p2(assemble_laplacian(build_domain(scaled, 1.0 / 256, loose())), Which::A).value;
  const double a_u = norm_p2(assemble_laplacian(build_domain(unit, 1.0 / 128, loose())), Which::A).value;
  EXPECT_NEAR(a_s / a_u, 1.0, 1e-4);
}

TEST(Rescaling, RefusesMismatchedResolution) {
  DomainSpec scaled;
  scaled.epsilon = 0.5;
  scaled.eta = 0.25;
  scaled.host = Host::bounded;
  DomainSpec unit = scaled;
  unit.epsilon = 1.0;
  unit.side = 2.0;
  EXPECT_THROW(rescaling_check(scaled, 1.0 / 64, unit, 1.0 / 64, loose()), GridMismatchError);
  unit.side = 1.0;
  EXPECT_THROW(rescaling_check(scaled, 1.0 / 64, unit, 1.0 / 32, loose()), GridMismatchError);
  unit.side = 2.0;
  unit.eta = 0.5;
  EXPECT_THROW(rescaling_check(scaled, 1.0 / 64, unit, 1.0 / 32, loose()), GridMismatchError);
}

TEST(Poincare, NeumannCellWithoutHoleIsSingular) {
  DomainSpec s;
  s.host = Host::neumann_cell;
  s.perforated = false;
  EXPECT_THROW(assemble_laplacian(build_domain(s, 1.0 / 16)), SingularOperatorError);
}

TEST(Poincare, TwoDimensionalCellFollowsLogLaw) {
  std::vector<std::pair<double, double>> pts;
  for (double eta : {0.25, 0.125, 0.0625, 0.03125}) {
    DomainSpec s;
    s.eta = eta;
    auto g = build_cell_grid(HoleShape::ball(0.25), 2, eta, spacing_for(s, 8.0), CellBoundary::neumann);
    pts.emplace_back(eta, poincare_constant(assemble_laplacian(g)));
  }
  EXPECT_GE(fit_scaling(pts, FitModel::loglaw).r2, 0.98);
}

TEST(Poincare, ThreeDimensionalCellScalesLikeInverseEta) {
  std::vector<std::pair<double, double>> pts;
  for (double eta : {0.25, 0.125, 0.0625}) {
    DomainSpec s;
    s.d = 3;
    s.eta = eta;
    auto g = build_cell_grid(HoleShape::ball(0.25), 3, eta, spacing_for(s, 2.0), CellBoundary::neumann, loose(2.0));
    pts.emplace_back(eta, poincare_constant(assemble_laplacian(g)));
  }
  EXPECT_NEAR(fit_scaling(pts, FitModel::power).b, -1.0, 0.15);
}

TEST(Localization, RatioStaysBoundedAcrossEta) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double eta : {0.5, 0.25, 0.125}) {
    auto g = bounded(2, 0.25, eta, 1.0 / 256);
    auto op = assemble_laplacian(g);
    ScalarField F(g, std::vector<double>(g->num_fluid(), 1.0));
    VectorField f(g);
    for (double p : {1.5, 2.0, 4.0}) {
      const double r = localization_ratio(op, F, f, p);
      EXPECT_GT(r, 0.0);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  EXPECT_LE(hi / lo, 10.0);
}
