// perfscale: command-line front end for the perforated-domain laboratory.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "perfscale.hpp"

namespace {

using namespace perfscale;

struct Common {
  std::string output = "perfscale-out";
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int verbosity = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int resolve_workers(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PERFSCALE_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return 1;
}

HoleShape make_shape(const std::string& kind, std::vector<double> size) {
  HoleShape s;
  s.kind = parse_shape_kind(kind);
  if (size.empty()) size = {0.25};
  if (size.size() == 1) size.assign(3, size[0]);
  if (size.size() == 2) size.push_back(size[1]);
  if (size.size() != 3) throw ConfigError("--size takes one to three numbers");
  for (int a = 0; a < 3; ++a) s.size[a] = size[a];
  return s;
}

std::vector<double> default_etas(int d) {
  if (d == 2) return {0.25, 0.125, 0.0625, 0.03125};
  return {0.25, 0.125, 0.0625};
}

double default_cells(int d) { return d == 2 ? 8.0 : 2.0; }

void print_json(const json& j) { std::cout << j.dump() << '\n'; }

struct CellArgs {
  int d = 2;
  std::vector<double> etas;
  double cells = 0.0;
  std::string shape = "ball";
  std::vector<double> size;
  std::vector<double> ps{2.0};
  double tol = 1e-10;
};

int run_cell(const CellArgs& a) {
  CorrectorOptions co;
  co.p_set = a.ps;
  co.tol = a.tol;
  const double cells = a.cells > 0 ? a.cells : default_cells(a.d);
  auto rows = corrector_scaling_report(a.etas.empty() ? default_etas(a.d) : a.etas, make_shape(a.shape, a.size),
                                       a.d, cells, co);
  for (const auto& r : rows) {
    json j{{"eta", r.eta}, {"h", r.h}, {"integral", r.integral}, {"green_defect", r.green_defect},
           {"iterations", r.iterations}};
    auto& g = j["grad_norms"] = json::object();
    for (auto [p, v] : r.grad_norms) g[format_double(p)] = v;
    print_json(j);
  }
  return 0;
}

int run_poincare(const CellArgs& a) {
  const double cells = a.cells > 0 ? a.cells : default_cells(a.d);
  const HoleShape shape = make_shape(a.shape, a.size);
  std::vector<std::pair<double, double>> pairs;
  for (double eta : a.etas.empty() ? default_etas(a.d) : a.etas) {
    DomainSpec spec;
    spec.d = a.d;
    spec.eta = eta;
    spec.shape = shape;
    spec.host = Host::neumann_cell;
    ResolutionPolicy policy;
    policy.min_cells_per_radius = cells;
    const double h = spacing_for(spec, cells);
    auto op = assemble_laplacian(build_domain(spec, h, policy));
    const double c = poincare_constant(op, a.tol);
    pairs.emplace_back(eta, c);
    print_json({{"eta", eta}, {"h", h}, {"poincare", c}});
  }
  if (pairs.size() >= 3) {
    const auto f = fit_scaling(pairs, a.d == 2 ? FitModel::loglaw : FitModel::power);
    print_json({{"fit", to_string(f.model)}, {"a", f.a}, {"b", f.b}, {"b_stderr", f.b_stderr}, {"r2", f.r2}});
  }
  return 0;
}

struct NormArgs {
  std::string which = "D";
  double p = 2.0;
  int d = 2;
  double eta = 0.125;
  double epsilon = 1.0;
  std::string host = "bounded";
  std::string strategy;
  double cells = 0.0;
  double h = 0.0;
  double side = 1.0;
  double lattice_radius = 2.0;
  std::string shape = "ball";
  std::vector<double> size;
  double tol = 1e-10;
};

int run_norm(const NormArgs& a, const Common& c) {
  DomainSpec spec;
  spec.d = a.d;
  spec.eta = a.eta;
  spec.epsilon = a.epsilon;
  spec.shape = make_shape(a.shape, a.size);
  spec.host = parse_host(a.host);
  spec.side = a.side;
  spec.lattice_radius = a.lattice_radius;
  const double cells = a.cells > 0 ? a.cells : default_cells(a.d);
  ResolutionPolicy policy;
  policy.min_cells_per_radius = cells;
  const double h = a.h > 0 ? a.h : spacing_for(spec, cells);
  if (a.h > 0) policy.min_cells_per_radius = 0.0;
  auto op = assemble_laplacian(build_domain(spec, h, policy));
  const Which which = parse_which(a.which);
  const Strategy strategy =
      a.strategy.empty() ? (a.p == 2.0 ? Strategy::exact : Strategy::corrector_cutoff) : parse_strategy(a.strategy);
  NormOptions no;
  no.solve_tol = a.tol;
  if (c.seed_set) no.seed = c.seed;
  OperatorNormEstimate e;
  if (strategy == Strategy::exact) {
    if (a.p != 2.0) throw ConfigError("strategy exact supports p = 2 only");
    e = norm_p2(op, which, no);
  } else {
    std::optional<CorrectorResult> corr;
    if (strategy == Strategy::corrector_cutoff) {
      CorrectorOptions co;
      co.tol = a.tol;
      co.policy = policy;
      corr = solve_corrector(spec.shape, a.d, a.eta, h, co);
    }
    e = empirical_lower_bound(op, which, a.p, strategy, corr ? &*corr : nullptr, no);
  }
  print_json(to_json(e));
  return 0;
}

struct SweepArgs {
  std::string config = "configs/default.conf";
  std::string from_report;
  std::string predictions;
  bool quiet = false;
};

SweepConfig load_config(const SweepArgs& a, const Common& c) {
  SweepConfig cfg = parse_config(read_file(a.config));
  if (c.seed_set) cfg.solver.seed = c.seed;
  return cfg;
}

RunOptions run_options(const Common& c) {
  RunOptions ro;
  ro.workers = resolve_workers(c.workers);
  if (c.verbosity > 0) ro.log = [](const std::string& s) { std::cerr << s << '\n'; };
  return ro;
}

PredictionSource prediction_source(const std::string& path) {
  if (path.empty()) return {};
  const json j = json::parse(read_file(path));
  std::vector<TheoremPrediction> list;
  for (const auto& x : j.is_object() ? j.at("predictions") : j) list.push_back(prediction_from_json(x));
  return PredictionSource(std::move(list));
}

void write_outputs(const SweepResult& r, const Common& c) {
  for (const auto& p : write_report(r, c.output, r.config.report.formats))
    if (c.verbosity > 0) std::cerr << "wrote " << p.string() << '\n';
}

int run_sweep_cmd(const SweepArgs& a, const Common& c) {
  const SweepResult r = run_sweep(load_config(a, c), run_options(c), prediction_source(a.predictions));
  write_outputs(r, c);
  std::size_t failed = 0, errors = 0;
  for (const auto& v : r.verdicts) failed += v.pass ? 0 : 1;
  for (const auto& row : r.rows) errors += row.ok ? 0 : 1;
  std::cout << r.rows.size() << " rows, " << r.verdicts.size() << " verdicts, " << failed << " failed, " << errors
            << " error rows\n";
  return r.exit_status();
}

int run_verify(const SweepArgs& a, const Common& c) {
  const PredictionSource source = prediction_source(a.predictions);
  SweepResult r;
  if (!a.from_report.empty()) {
    r = result_from_json(json::parse(read_file(a.from_report)), source);
  } else {
    r = run_sweep(load_config(a, c), run_options(c), source);
    write_outputs(r, c);
  }
  const VerifySummary summary = verify_report(r, a.quiet);
  for (const auto& line : summary.lines) std::cout << line << '\n';
  return summary.exit_status;
}

struct ExportArgs {
  int d = 2;
  double eta = 0.125;
  double epsilon = 1.0;
  std::string host = "periodic";
  std::string field = "labels";
  double cells = 0.0;
  double side = 1.0;
  double lattice_radius = 2.0;
  std::string shape = "ball";
  std::vector<double> size;
  std::string out;
};

int run_export(const ExportArgs& a, const Common& c) {
  DomainSpec spec;
  spec.d = a.d;
  spec.eta = a.eta;
  spec.epsilon = a.epsilon;
  spec.shape = make_shape(a.shape, a.size);
  spec.host = parse_host(a.host);
  spec.side = a.side;
  spec.lattice_radius = a.lattice_radius;
  const double cells = a.cells > 0 ? a.cells : default_cells(a.d);
  ResolutionPolicy policy;
  policy.min_cells_per_radius = cells;
  const double h = spacing_for(spec, cells);
  auto grid = build_domain(spec, h, policy);
  const std::string path = a.out.empty() ? (std::filesystem::path(c.output) / (a.field + ".vtk")).string() : a.out;
  std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : std::filesystem::path(path).parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  if (a.field == "labels") {
    write_vtk_labels(*grid, os);
  } else if (a.field == "corrector") {
    CorrectorOptions co;
    co.policy = policy;
    auto op = assemble_laplacian(grid);
    write_vtk_field(solve_corrector(op, co).chi, "corrector", os);
  } else if (a.field == "torsion") {
    auto op = assemble_laplacian(grid);
    std::vector<double> ones(static_cast<std::size_t>(op.size()), 1.0);
    write_vtk_field(ScalarField(grid, solve_spd(op, ones, 1e-10, 5000).solution), "torsion", os);
  } else {
    throw ConfigError("unknown field '" + a.field + "' (expected labels, corrector or torsion)");
  }
  if (!os) throw Error("write failed for " + path);
  std::cout << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perfscale: estimates for the Dirichlet problem in perforated domains"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-o,--output", common.output, "Output directory for reports and exports");
  app.add_option("-w,--workers", common.workers, "Worker threads (default: PERFSCALE_WORKERS or 1)");
  auto* seed_opt = app.add_option("--seed", common.seed, "Seed overriding the configured one");
  app.add_flag("-v,--verbose", common.verbosity, "Progress messages on standard error");

  CellArgs cell;
  auto* cell_cmd = app.add_subcommand("cell", "Cell corrector statistics over an eta list");
  auto* poin_cmd = app.add_subcommand("poincare", "Poincare constant of the mixed cell over an eta list");
  for (auto* sc : {cell_cmd, poin_cmd}) {
    sc->add_option("--d", cell.d, "Dimension")->check(CLI::Range(2, 3));
    sc->add_option("--eta", cell.etas, "Hole scales")->delimiter(',');
    sc->add_option("--cells-per-radius", cell.cells, "Grid cells across the hole radius");
    sc->add_option("--shape", cell.shape, "ball, cube or ellipsoid");
    sc->add_option("--size", cell.size, "Hole size parameters")->delimiter(',');
    sc->add_option("--tol", cell.tol, "Solver tolerance");
  }
  cell_cmd->add_option("--p", cell.ps, "Exponents for gradient norms")->delimiter(',');

  NormArgs norm;
  auto* norm_cmd = app.add_subcommand("norm", "One operator-norm measurement as a JSON row");
  norm_cmd->add_option("--which", norm.which, "A, B, C or D")->check(CLI::IsMember({"A", "B", "C", "D"}));
  norm_cmd->add_option("--p", norm.p, "Exponent");
  norm_cmd->add_option("--d", norm.d, "Dimension")->check(CLI::Range(2, 3));
  norm_cmd->add_option("--eta", norm.eta, "Hole scale");
  norm_cmd->add_option("--epsilon", norm.epsilon, "Lattice spacing");
  norm_cmd->add_option("--host", norm.host, "periodic, truncated, bounded or neumann-cell");
  norm_cmd->add_option("--strategy", norm.strategy, "exact, corrector-cutoff or random-search");
  norm_cmd->add_option("--cells-per-radius", norm.cells, "Grid cells across the hole radius");
  norm_cmd->add_option("--spacing", norm.h, "Explicit grid spacing");
  norm_cmd->add_option("--side", norm.side, "Side of the bounded host");
  norm_cmd->add_option("--lattice-radius", norm.lattice_radius, "R of the truncated box [-2R, 2R]");
  norm_cmd->add_option("--shape", norm.shape, "ball, cube or ellipsoid");
  norm_cmd->add_option("--size", norm.size, "Hole size parameters")->delimiter(',');
  norm_cmd->add_option("--tol", norm.tol, "Solver tolerance");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a sweep configuration and write reports");
  auto* verify_cmd = app.add_subcommand("verify", "Run or reload a sweep and check every prediction");
  for (auto* sc : {sweep_cmd, verify_cmd}) {
    sc->add_option("-c,--config", sweep.config, "Configuration file");
    sc->add_option("--predictions", sweep.predictions, "JSON prediction table replacing the built-in one");
  }
  verify_cmd->add_option("--from-report", sweep.from_report, "Recompute verdicts from a JSON report");
  verify_cmd->add_flag("-q,--quiet", sweep.quiet, "Print failing verdicts only");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Write a VTK field of a perforated grid");
  export_cmd->add_option("--d", exp.d, "Dimension")->check(CLI::Range(2, 3));
  export_cmd->add_option("--eta", exp.eta, "Hole scale");
  export_cmd->add_option("--epsilon", exp.epsilon, "Lattice spacing");
  export_cmd->add_option("--host", exp.host, "periodic, truncated, bounded or neumann-cell");
  export_cmd->add_option("--field", exp.field, "labels, corrector or torsion");
  export_cmd->add_option("--cells-per-radius", exp.cells, "Grid cells across the hole radius");
  export_cmd->add_option("--side", exp.side, "Side of the bounded host");
  export_cmd->add_option("--lattice-radius", exp.lattice_radius, "R of the truncated box [-2R, 2R]");
  export_cmd->add_option("--shape", exp.shape, "ball, cube or ellipsoid");
  export_cmd->add_option("--size", exp.size, "Hole size parameters")->delimiter(',');
  export_cmd->add_option("--out", exp.out, "Output file (default OUTPUT/FIELD.vtk)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  common.seed_set = seed_opt->count() > 0;

  try {
    if (*cell_cmd) return run_cell(cell);
    if (*poin_cmd) return run_poincare(cell);
    if (*norm_cmd) return run_norm(norm, common);
    if (*sweep_cmd) return run_sweep_cmd(sweep, common);
    if (*verify_cmd) return run_verify(sweep, common);
    if (*export_cmd) return run_export(exp, common);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "malformed JSON input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
