// Acceptance checks. Each criterion prints one PASS/FAIL line; `--only N` runs one.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "perfscale.hpp"

using namespace perfscale;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [violated]");
  }
};

std::string f(double x) { return format_double(std::round(x * 1e6) / 1e6); }
std::string e(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

GridPtr grid_for(DomainSpec spec, double cells_per_radius, double* h_out = nullptr) {
  ResolutionPolicy policy;
  policy.min_cells_per_radius = cells_per_radius;
  const double h = spacing_for(spec, cells_per_radius);
  if (h_out) *h_out = h;
  return build_domain(spec, h, policy);
}

DomainSpec cell_spec(int d, double eta, Host host = Host::periodic_cell) {
  DomainSpec s;
  s.d = d;
  s.eta = eta;
  s.host = host;
  return s;
}

const std::vector<double> etas2{0.25, 0.125, 0.0625, 0.03125};
const std::vector<double> etas3{0.25, 0.125, 0.0625};
constexpr double cpr2 = 8.0;
constexpr double cpr3 = 2.0;

NormOptions tight() {
  NormOptions o;
  o.solve_tol = 1e-12;
  o.power_tol = 1e-12;
  o.power_max_iters = 20000;
  return o;
}

// 1. B_2 = C_2, B_2^2 lambda_min = 1, A_2 = 1 on a bounded perforated square.
Outcome spectral_identities() {
  Outcome out;
  DomainSpec s;
  s.d = 2;
  s.host = Host::bounded;
  s.epsilon = 0.25;
  s.eta = 0.125;
  ResolutionPolicy policy;
  policy.min_cells_per_radius = 2;
  auto op = assemble_laplacian(build_domain(s, 1.0 / 512, policy));
  const auto opts = tight();
  const double b = norm_p2(op, Which::B, opts).value;
  const double c = norm_p2(op, Which::C, opts).value;
  EigenOptions eo;
  eo.tol = 1e-12;
  const double lambda = smallest_eigenvalue(op, eo).value;
  const double a = norm_p2(op, Which::A, opts).value;
  out.require(rel(b, c) <= 1e-6, "|B-C|/B = " + e(rel(b, c)) + " (<= 1e-6)");
  out.require(std::abs(b * b * lambda - 1.0) <= 1e-6,
              "|B^2 lambda - 1| = " + e(std::abs(b * b * lambda - 1.0)) + " (<= 1e-6)");
  out.require(std::abs(a - 1.0) <= 1e-4, "|A - 1| = " + e(std::abs(a - 1.0)) + " (<= 1e-4)");
  return out;
}

std::vector<CorrectorResult> cells(int d, const std::vector<double>& etas, double cpr, const HoleShape& shape,
                                   std::vector<double> ps = {2.0}) {
  std::vector<CorrectorResult> out;
  for (double eta : etas) {
    DomainSpec s = cell_spec(d, eta);
    s.shape = shape;
    CorrectorOptions co;
    co.p_set = ps;
    co.tol = 1e-10;
    co.policy.min_cells_per_radius = cpr;
    out.push_back(solve_corrector(assemble_laplacian(grid_for(s, cpr)), co));
  }
  return out;
}

// 2. Green identity for every solved cell.
Outcome green_identity() {
  Outcome out;
  double worst = 0.0;
  int solved = 0;
  const std::vector<HoleShape> shapes{HoleShape::ball(0.25), HoleShape::cube(0.2),
                                      HoleShape::ellipsoid({0.3, 0.2, 0.15})};
  for (int d : {2, 3})
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      // The full eta ladder for the ball, the coarsest two for the other shapes.
      std::vector<double> etas = d == 2 ? etas2 : etas3;
      if (k > 0) etas.resize(2);
      for (const auto& r : cells(d, etas, d == 2 ? cpr2 : cpr3, shapes[k])) {
        worst = std::max(worst, r.green_defect());
        ++solved;
      }
    }
  out.require(worst <= 1e-9, std::to_string(solved) + " cells, worst defect " + e(worst) + " (<= 1e-9)");
  return out;
}

// 3. Corrector scalings.
Outcome corrector_scalings() {
  Outcome out;
  const auto c3 = cells(3, etas3, cpr3, HoleShape::ball(0.25));
  std::vector<std::pair<double, double>> grad, integ;
  double lo = INFINITY, hi = 0.0;
  for (const auto& r : c3) {
    grad.emplace_back(r.eta, r.grad_norms.at(2.0));
    lo = std::min(lo, r.integral);
    hi = std::max(hi, r.integral);
  }
  const auto fg = fit_scaling(grad, FitModel::power);
  out.require(std::abs(fg.b - 0.5) <= 0.1, "d=3 grad exponent " + f(fg.b) + " +- " + f(fg.b_stderr) + " (0.5 +- 0.1)");
  out.require(hi / lo <= 3.0, "d=3 integral max/min " + f(hi / lo) + " (<= 3)");
  for (const auto& r : cells(2, etas2, cpr2, HoleShape::ball(0.25))) integ.emplace_back(r.eta, r.integral);
  const auto fi = fit_scaling(integ, FitModel::loglaw);
  out.require(fi.r2 >= 0.99, "d=2 integral loglaw R2 " + f(fi.r2) + " slope " + f(fi.b) + " (R2 >= 0.99)");
  return out;
}

// 4. Poincare constant of the mixed cell.
Outcome poincare_scaling() {
  Outcome out;
  std::vector<std::pair<double, double>> p3, p2;
  for (double eta : etas3)
    p3.emplace_back(eta, poincare_constant(assemble_laplacian(grid_for(cell_spec(3, eta, Host::neumann_cell), cpr3))));
  for (double eta : etas2)
    p2.emplace_back(eta, poincare_constant(assemble_laplacian(grid_for(cell_spec(2, eta, Host::neumann_cell), cpr2))));
  const auto f3 = fit_scaling(p3, FitModel::power);
  const auto f2 = fit_scaling(p2, FitModel::loglaw);
  out.require(std::abs(f3.b + 1.0) <= 0.15, "d=3 exponent " + f(f3.b) + " +- " + f(f3.b_stderr) + " (-1 +- 0.15)");
  out.require(f2.r2 >= 0.98, "d=2 loglaw R2 " + f(f2.r2) + " (>= 0.98)");
  return out;
}

double d2_exact(const SparseOperator& op) {
  EigenOptions eo;
  eo.tol = 1e-10;
  return 1.0 / smallest_eigenvalue(op, eo).value;
}

// 5. D_2 on the lattice (periodic unit cell at eps = 1).
Outcome d2_scaling() {
  Outcome out;
  std::vector<std::pair<double, double>> d3, d2;
  for (double eta : etas3) d3.emplace_back(eta, d2_exact(assemble_laplacian(grid_for(cell_spec(3, eta), cpr3))));
  for (double eta : etas2) d2.emplace_back(eta, d2_exact(assemble_laplacian(grid_for(cell_spec(2, eta), cpr2))));
  const auto f3 = fit_scaling(d3, FitModel::power);
  const auto f2 = fit_scaling(d2, FitModel::loglaw);
  out.require(f3.b >= -1.15 && f3.b <= -0.85, "d=3 exponent " + f(f3.b) + " +- " + f(f3.b_stderr) + " in [-1.15, -0.85]");
  out.require(f2.r2 >= 0.98, "d=2 loglaw R2 " + f(f2.r2) + " (>= 0.98)");
  return out;
}

// 6. C_2 on the 3D lattice.
Outcome c2_scaling() {
  Outcome out;
  std::vector<std::pair<double, double>> c3;
  NormOptions o;
  for (double eta : etas3)
    c3.emplace_back(eta, norm_p2(assemble_laplacian(grid_for(cell_spec(3, eta), cpr3)), Which::C, o).value);
  const auto fc = fit_scaling(c3, FitModel::power);
  out.require(fc.b >= -0.65 && fc.b <= -0.35, "d=3 exponent " + f(fc.b) + " +- " + f(fc.b_stderr) + " in [-0.65, -0.35]");
  return out;
}

// 7. eps-rescaling at matched resolution.
Outcome rescaling() {
  Outcome out;
  DomainSpec scaled;
  scaled.d = 2;
  scaled.host = Host::bounded;
  scaled.eta = 0.125;
  scaled.epsilon = 0.5;
  scaled.side = 1.0;
  DomainSpec unit = scaled;
  unit.epsilon = 1.0;
  unit.side = 2.0;
  const double h = spacing_for(scaled, cpr2);
  ResolutionPolicy policy;
  policy.min_cells_per_radius = cpr2;
  const auto r = rescaling_check(scaled, h, unit, h / scaled.epsilon, policy);
  out.require(r.d_defect() <= 0.02, "D ratio " + f(r.d_ratio()) + " (0.25 +- 2%)");
  out.require(r.c_defect() <= 0.02, "C ratio " + f(r.c_ratio()) + " (0.5 +- 2%)");
  return out;
}

// 8. Bounded host at fixed eta: epsilon scaling and saturation at eps = 1.
Outcome bounded_crossover() {
  Outcome out;
  const double eta = 0.125;
  auto measure = [&](double eps, Index* holes) {
    DomainSpec s;
    s.d = 2;
    s.host = Host::bounded;
    s.eta = eta;
    s.epsilon = eps;
    auto g = grid_for(s, 2.0);
    if (holes) *holes = expected_hole_cells(s);
    return d2_exact(assemble_laplacian(g));
  };
  for (double eps : {1.0 / 32, 1.0 / 16})
    if (crossover_sigma2(2, eps, eta) > 0.1) out.require(false, "eps " + f(eps) + " outside eps^2 |ln(eta/2)| <= 0.1");
  const double q = measure(1.0 / 16, nullptr) / measure(1.0 / 32, nullptr);
  out.require(std::abs(q / 4.0 - 1.0) <= 0.15, "D(1/16)/D(1/32) = " + f(q) + " (4 +- 15%)");
  Index holes = 0;
  const double d1 = measure(1.0, &holes);
  const double ref = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  out.require(d1 / ref <= 3.0 && d1 / ref >= 1.0 / 3.0,
              "D(eps=1) = " + f(d1) + " vs 1/(2 pi^2) = " + f(ref) + " (factor 3, " + std::to_string(holes) +
                  " holes)");
  return out;
}

// 9. Corrector-cutoff lower bounds at p = 4, and p = 2 lower bounds below exact values.
Outcome lower_bounds() {
  Outcome out;
  std::vector<std::pair<double, double>> d4, b4;
  double worst = -INFINITY;
  int compared = 0;
  NormOptions o;
  auto below = [&](double lb, double exact) {
    worst = std::max(worst, lb / exact - 1.0);
    ++compared;
  };
  for (double eta : etas3) {
    auto op = assemble_laplacian(grid_for(cell_spec(3, eta), cpr3));
    CorrectorOptions co;
    co.p_set = {2.0, 4.0};
    co.policy.min_cells_per_radius = cpr3;
    const auto corr = solve_corrector(op, co);
    d4.emplace_back(eta, empirical_lower_bound(op, Which::D, 4.0, Strategy::corrector_cutoff, &corr, o).value);
    b4.emplace_back(eta, empirical_lower_bound(op, Which::B, 4.0, Strategy::corrector_cutoff, &corr, o).value);
    for (Which w : {Which::D, Which::B, Which::C, Which::A})
      below(empirical_lower_bound(op, w, 2.0, Strategy::corrector_cutoff, &corr, o).value, norm_p2(op, w, o).value);
  }
  // Random search at p = 2 on the planar lattice.
  for (double eta : {0.25, 0.125, 0.0625}) {
    auto op = assemble_laplacian(grid_for(cell_spec(2, eta), 4.0));
    for (Which w : {Which::D, Which::B, Which::C, Which::A})
      below(empirical_lower_bound(op, w, 2.0, Strategy::random_search, nullptr, o).value, norm_p2(op, w, o).value);
  }
  const auto fd = fit_scaling(d4, FitModel::power);
  const auto fb = fit_scaling(b4, FitModel::power);
  out.require(fd.b <= -0.8, "D_4 exponent " + f(fd.b) + " +- " + f(fd.b_stderr) + " (<= -0.8)");
  out.require(fb.b <= -1.0, "B_4 exponent " + f(fb.b) + " +- " + f(fb.b_stderr) + " (<= -1.0)");
  // Exact values carry the relative solver tolerance; allow that much and no more.
  out.require(worst <= 1e-8, std::to_string(compared) + " p=2 lower bounds, max LB/exact - 1 = " + e(worst) +
                                 " (<= 1e-8)");
  return out;
}

// 10. Iterative results against the dense oracle on random small grids.
Outcome oracle_equivalence() {
  Outcome out;
  std::mt19937_64 rng(20240917);
  auto pick = [&](auto const& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  const std::vector<Host> hosts{Host::periodic_cell, Host::neumann_cell, Host::bounded, Host::truncated_lattice};
  const std::vector<HoleShape> shapes{HoleShape::ball(0.25), HoleShape::cube(0.2),
                                      HoleShape::ellipsoid({0.3, 0.2, 0.15})};
  double worst_solve = 0.0, worst_lambda = 0.0, worst_norm = 0.0;
  int cases = 0, largest = 0, skipped = 0;
  while (cases < 200) {
    DomainSpec s;
    s.d = std::uniform_real_distribution<double>(0, 1)(rng) < 0.7 ? 2 : 3;
    s.host = pick(hosts);
    s.shape = pick(shapes);
    s.eta = pick(std::vector<double>{1.0, 0.5, 0.25});
    s.lattice_radius = 0.5;
    if (s.host == Host::bounded) s.epsilon = pick(std::vector<double>{0.25, 0.5});
    if (s.host == Host::truncated_lattice) s.epsilon = 0.5;
    // Occasionally a grid near the oracle's size limit.
    const bool big = cases % 40 == 0;
    int m = 0;
    if (s.d == 2) m = big ? 60 : 4 * std::uniform_int_distribution<int>(2, 10)(rng);
    else m = big ? 16 : 4 * std::uniform_int_distribution<int>(1, 3)(rng);
    if (s.host == Host::truncated_lattice) m /= 2;
    ResolutionPolicy policy;
    policy.min_cells_per_radius = 0.5;
    std::optional<SparseOperator> op;
    try {
      op = assemble_laplacian(build_domain(s, 1.0 / m, policy));
    } catch (const Error&) {
      ++skipped;  // no Dirichlet anchor or a spacing the host cannot take
      continue;
    }
    if (op->size() > dense_oracle::max_dimension || op->size() < 4) {
      ++skipped;
      continue;
    }
    ++cases;
    largest = std::max(largest, op->size());
    std::vector<double> rhs(static_cast<std::size_t>(op->size()));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : rhs) v = u(rng);
    const auto x = solve_spd(*op, rhs, 1e-13, 20000).solution;
    const auto y = dense_oracle::solve(*op, rhs);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (x[i] - y[i]) * (x[i] - y[i]);
      den += y[i] * y[i];
    }
    worst_solve = std::max(worst_solve, std::sqrt(num / den));
    const double lambda_dense = dense_oracle::smallest_eigenvalue(*op);
    EigenOptions eo;
    eo.tol = 1e-13;
    eo.max_iters = 5000;
    worst_lambda = std::max(worst_lambda, rel(smallest_eigenvalue(*op, eo).value, lambda_dense));
    NormOptions no;
    no.solve_tol = 1e-13;
    no.power_tol = 1e-14;
    no.power_max_iters = 200000;
    no.seed = rng();
    const double norm = norm_p2(*op, cases % 2 ? Which::B : Which::C, no).value;
    worst_norm = std::max(worst_norm, rel(norm, 1.0 / std::sqrt(lambda_dense)));
  }
  out.require(worst_solve <= 1e-8, "CG " + e(worst_solve));
  out.require(worst_lambda <= 1e-8, "lambda_min " + e(worst_lambda));
  out.require(worst_norm <= 1e-8, "power-iteration B/C " + e(worst_norm));
  out.detail << "; " << cases << " cases up to " << largest << " unknowns (" << skipped << " draws rejected)";
  return out;
}

struct Command {
  int status = -1;
  std::string out;
};

Command shell(const std::string& args) {
  const std::string cmd = std::string(PERFSCALE_CLI_PATH) + " " + args + " 2>&1";
  Command r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 11. verify on the shipped config: byte-reproducible, exit 0; a corrupted table gives exit 1.
Outcome determinism() {
  Outcome out;
  const fs::path cfg = fs::path(PERFSCALE_SOURCE_DIR) / "configs" / "default.conf";
  const fs::path dir = fs::temp_directory_path() / "perfscale_acceptance_11";
  fs::remove_all(dir);
  const auto a = shell("verify -c " + cfg.string() + " -o " + (dir / "a").string());
  const auto b = shell("verify -c " + cfg.string() + " -o " + (dir / "b").string());
  out.require(a.status == 0 && b.status == 0,
              "exit " + std::to_string(a.status) + ", " + std::to_string(b.status) + " (0)");
  bool same = a.out == b.out;
  for (const char* name : {"report.csv", "report.json"}) {
    const auto x = slurp(dir / "a" / name);
    same = same && !x.empty() && x == slurp(dir / "b" / name);
  }
  out.require(same, std::string("reports and output ") + (same ? "byte-identical" : "differ"));

  json table = json::array();
  int corrupted = 0;
  for (auto t : predictions_for(parse_config(slurp(cfg)))) {
    if (t.d == 3 && t.quantity == Quantity::D && t.regime == Regime::lattice) {
      t.eta_law.exponent = -t.eta_law.exponent;
      ++corrupted;
    }
    table.push_back(to_json(t));
  }
  std::ofstream(dir / "corrupt.json") << table.dump(2);
  const auto c = shell("verify -q --from-report " + (dir / "a" / "report.json").string() + " --predictions " +
                       (dir / "corrupt.json").string());
  out.require(c.status == 1, std::to_string(corrupted) + " entries corrupted, exit " + std::to_string(c.status) +
                                 " (1)");
  if (a.status != 0) std::cerr << a.out;
  fs::remove_all(dir);
  return out;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {"spectral identities", spectral_identities},
      {"Green identity", green_identity},
      {"corrector scalings", corrector_scalings},
      {"Poincare scaling", poincare_scaling},
      {"D_2 scaling", d2_scaling},
      {"C_2 scaling", c2_scaling},
      {"epsilon rescaling", rescaling},
      {"bounded-domain crossover", bounded_crossover},
      {"lower bounds away from p=2", lower_bounds},
      {"dense-oracle equivalence", oracle_equivalence},
      {"determinism and exit status", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail << "exception: " << ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " (" << all[i].name << "): "
              << o.detail.str() << "  [" << std::fixed << std::setprecision(1) << secs << " s]" << std::endl;
    std::cout.unsetf(std::ios::floatfield);
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
