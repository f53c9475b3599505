#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "perfscale/fit.hpp"
#include "perfscale/linsolve.hpp"

using namespace perfscale;

namespace {

constexpr double kPi = 3.14159265358979323846;

GridPtr plain_box(int d, double h) {
  DomainSpec s;
  s.d = d;
  s.host = Host::bounded;
  s.perforated = false;
  return build_domain(s, h);
}

// Algebraic checks do not need resolved holes.
ResolutionPolicy loose() {
  ResolutionPolicy p;
  p.min_cells_per_radius = 1.0;
  return p;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

SparseOperator from_dense(const Eigen::MatrixXd& m) {
  return SparseOperator(CsrMatrix(m.sparseView()));
}

// 1D Dirichlet Laplacian with n interior nodes on (0, 1).
SparseOperator laplacian_1d(int n) {
  const double h = 1.0 / (n + 1);
  std::vector<Eigen::Triplet<double, int>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0 / (h * h));
    if (i > 0) t.emplace_back(i, i - 1, -1.0 / (h * h));
    if (i + 1 < n) t.emplace_back(i, i + 1, -1.0 / (h * h));
  }
  CsrMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return SparseOperator(std::move(m));
}

}  // namespace

TEST(SolveSpd, ZeroRhsReturnsZeroWithoutIterating) {
  auto op = assemble_laplacian(plain_box(2, 1.0 / 16));
  auto rep = solve_spd(op, std::vector<double>(op.size(), 0.0));
  EXPECT_EQ(rep.iterations, 0);
  for (double v : rep.solution) EXPECT_EQ(v, 0.0);
}

TEST(SolveSpd, RecoversKnownSolution) {
  for (auto pc : {Preconditioner::none, Preconditioner::jacobi, Preconditioner::multigrid}) {
    auto g = build_cell_grid(HoleShape::ball(0.25), 2, 0.25, 1.0 / 128, CellBoundary::periodic);
    auto op = assemble_laplacian(g);
    const auto w = random_vector(op.size(), 4);
    std::vector<double> b(w.size());
    op.apply(w, b);
    SolveOptions o;
    o.tol = 1e-10;
    o.preconditioner = pc;
    auto rep = solve_spd(op, b, o);
    EXPECT_LE(rep.relative_residual, 1e-10);
    EXPECT_LT(rel_diff(rep.solution, w), 1e-6);
  }
}

TEST(SolveSpd, MatchesDenseFactorizationOn16x16Grid) {
  auto op = assemble_laplacian(plain_box(2, 1.0 / 17));
  ASSERT_EQ(op.size(), 16 * 16);
  const auto b = random_vector(op.size(), 12);
  SolveOptions o;
  o.tol = 1e-13;
  const auto x = solve_spd(op, b, o).solution;
  const auto ref = dense_oracle::solve(op, b);
  EXPECT_LT(rel_diff(x, ref), 1e-10);
}

TEST(SolveSpd, ResidualDoesNotGrow) {
  auto op = assemble_laplacian(build_cell_grid(HoleShape::cube(0.3), 3, 0.5, 1.0 / 32, CellBoundary::periodic, loose()));
  const auto b = random_vector(op.size(), 2);
  SolveOptions o;
  o.tol = 1e-9;
  auto rep = solve_spd(op, b, o);
  EXPECT_LE(rep.relative_residual, 1.0);
  std::vector<double> r(b.size());
  op.apply(rep.solution, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  EXPECT_LE(detail::norm2(r), 1e-9 * detail::norm2(b));
}

TEST(SolveSpd, IterationCapThrowsWithBestIterate) {
  auto op = assemble_laplacian(plain_box(2, 1.0 / 64));
  SolveOptions o;
  o.tol = 1e-14;
  o.max_iters = 3;
  o.preconditioner = Preconditioner::none;
  try {
    solve_spd(op, random_vector(op.size(), 1), o);
    FAIL() << "expected nonconvergence";
  } catch (const NonConvergenceError& e) {
    EXPECT_EQ(e.best_iterate().size(), static_cast<std::size_t>(op.size()));
    EXPECT_GT(e.residual(), 1e-14);
    EXPECT_LT(e.residual(), 1.0);
  }
}

TEST(SolveSpd, AgreesWithDenseOracleOnRandomSpdMatrices) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 5; ++t) {
    const int n = 40 + 10 * t;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = nd(rng);
    Eigen::MatrixXd spd = m * m.transpose() + n * Eigen::MatrixXd::Identity(n, n);
    auto op = from_dense(spd);
    const auto b = random_vector(n, 100 + t);
    SolveOptions o;
    o.tol = 1e-13;
    const auto x = solve_spd(op, b, o).solution;
    const auto ref = dense_oracle::solve(op, b);
    EXPECT_LT(rel_diff(x, ref), 1e-10);
    // And back: the dense answer solves the sparse system.
    std::vector<double> r(n);
    op.apply(ref, r);
    EXPECT_LT(rel_diff(r, b), 1e-10);
  }
}

TEST(PowerIteration, DiagonalTwoOne) {
  LinearMap a = [](std::span<const double> x, std::span<double> y) {
    y[0] = 2 * x[0];
    y[1] = x[1];
  };
  EXPECT_NEAR(power_iteration(a, 2, 1e-12, 1000, 1).value, 2.0, 1e-10);
}

TEST(PowerIteration, OrthogonalProjectionHasNormOne) {
  // Projection onto span{(1,1,1,1)} followed by onto its complement is P = I - e e^T / 4.
  LinearMap p = [](std::span<const double> x, std::span<double> y) {
    const double m = (x[0] + x[1] + x[2] + x[3]) / 4;
    for (int i = 0; i < 4; ++i) y[i] = x[i] - m;
  };
  EXPECT_NEAR(power_iteration(p, 4, 1e-12, 100, 3).value, 1.0, 1e-12);
}

TEST(PowerIteration, MatchesDenseEigenvaluesOnRandomPsd) {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 3; ++t) {
    Eigen::MatrixXd m(50, 50);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) m(i, j) = nd(rng);
    const Eigen::MatrixXd a = m.transpose() * m;
    LinearMap map = [&](std::span<const double> x, std::span<double> y) {
      Eigen::Map<Eigen::VectorXd>(y.data(), 50) = a * Eigen::Map<const Eigen::VectorXd>(x.data(), 50);
    };
    const double ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues()[49];
    const auto est = power_iteration(map, 50, 1e-14, 200000, 9 + t);
    EXPECT_NEAR(est.value, ref, 1e-8 * ref);
  }
}

TEST(PowerIteration, CapThrowsWithLastEstimate) {
  LinearMap a = [](std::span<const double> x, std::span<double> y) {
    y[0] = 1.0 * x[0];
    y[1] = 0.999 * x[1];
  };
  try {
    power_iteration(a, 2, 1e-15, 5, 1);
    FAIL() << "expected nonconvergence";
  } catch (const NonConvergenceError& e) {
    EXPECT_GT(e.estimate(), 0.99);
    EXPECT_LE(e.estimate(), 1.0 + 1e-12);
  }
}

TEST(PowerIteration, AgreesWithDenseOracleOnGridOperators) {
  for (const auto& g : {plain_box(2, 1.0 / 32), build_cell_grid(HoleShape::ball(0.25), 2, 0.5, 1.0 / 32,
                                                                   CellBoundary::periodic, loose())}) {
    auto op = assemble_laplacian(g);
    ASSERT_LE(op.size(), dense_oracle::max_dimension);
    LinearMap map = [&](std::span<const double> x, std::span<double> y) { op.apply(x, y); };
    const auto ev = dense_oracle::eigenvalues(op);
    const double ref = ev[ev.size() - 1];
    // The top of the Laplacian spectrum is clustered, so converge tightly.
    EXPECT_NEAR(power_iteration(map, op.size(), 1e-13, 200000, 5).value, ref, 1e-6 * ref);
  }
}

TEST(SmallestEigenvalue, ClosedFormOnUnitSquare) {
  for (double h : {1.0 / 16, 1.0 / 64}) {
    auto op = assemble_laplacian(plain_box(2, h));
    const double closed = 8.0 / (h * h) * std::pow(std::sin(kPi * h / 2), 2);
    EXPECT_NEAR(smallest_eigenvalue(op).value, closed, 1e-9 * closed);
  }
}

TEST(SmallestEigenvalue, AddingAHoleDoesNotDecreaseIt) {
  const double h = 1.0 / 64;
  DomainSpec s;
  s.d = 2;
  s.host = Host::bounded;
  s.epsilon = 0.5;
  s.eta = 0.5;
  s.perforated = false;
  const double plain = smallest_eigenvalue(assemble_laplacian(build_domain(s, h, loose()))).value;
  s.perforated = true;
  const double holed = smallest_eigenvalue(assemble_laplacian(build_domain(s, h, loose()))).value;
  EXPECT_GT(holed, plain);
}

TEST(SmallestEigenvalue, InvariantUnderUnknownReordering) {
  auto op = assemble_laplacian(build_cell_grid(HoleShape::ball(0.25), 2, 0.25, 1.0 / 64, CellBoundary::periodic, loose()));
  const int n = op.size();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P(n);
  for (int i = 0; i < n; ++i) P.indices()[i] = perm[i];
  CsrMatrix permuted(n, n);
  permuted = op.matrix().twistedBy(P);
  SparseOperator shuffled(std::move(permuted));
  const double a = smallest_eigenvalue(op).value;
  const double b = smallest_eigenvalue(shuffled).value;
  EXPECT_NEAR(a, b, 1e-9 * a);
}

TEST(SmallestEigenvalue, PerforatedCellScalesLikeEtaInThreeDimensions) {
  std::vector<std::pair<double, double>> pts;
  for (double eta : {0.25, 0.125, 0.0625}) {
    ResolutionPolicy p;
    p.min_cells_per_radius = 2.0;
    DomainSpec s;
    s.d = 3;
    s.eta = eta;
    auto g = build_cell_grid(HoleShape::ball(0.25), 3, eta, spacing_for(s, 2.0), CellBoundary::periodic, p);
    pts.emplace_back(eta, smallest_eigenvalue(assemble_laplacian(g)).value);
  }
  const auto fit = fit_scaling(pts, FitModel::power);
  EXPECT_NEAR(fit.b, 1.0, 0.15);
}

TEST(DenseOracle, IdentityReturnsRhs) {
  auto op = from_dense(Eigen::MatrixXd::Identity(7, 7));
  const auto b = random_vector(7, 3);
  const auto x = dense_oracle::solve(op, b);
  for (int i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(x[i], b[i]);
}

TEST(DenseOracle, OneDimensionalDirichletSpectrum) {
  const int n = 63;
  const double h = 1.0 / (n + 1);
  const auto ev = dense_oracle::eigenvalues(laplacian_1d(n));
  for (int j = 1; j <= n; ++j) {
    const double closed = 4.0 / (h * h) * std::pow(std::sin(j * kPi * h / 2), 2);
    EXPECT_NEAR(ev[j - 1], closed, 1e-9 * closed);
  }
}

TEST(DenseOracle, RefusesLargeOperators) {
  auto op = assemble_laplacian(plain_box(2, 1.0 / 80));
  ASSERT_GT(op.size(), dense_oracle::max_dimension);
  EXPECT_THROW(dense_oracle::to_dense(op), DimensionError);
  EXPECT_THROW(dense_oracle::eigenvalues(op), DimensionError);
}

TEST(DenseOracle, SingularMatrixIsRejected) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 0) = 1.0;
  EXPECT_THROW(dense_oracle::solve(from_dense(m), std::vector<double>{1, 1, 1}), SingularOperatorError);
}
