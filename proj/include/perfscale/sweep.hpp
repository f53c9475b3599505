#ifndef PERFSCALE_SWEEP_HPP
#define PERFSCALE_SWEEP_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "perfscale/config.hpp"
#include "perfscale/corrector.hpp"
#include "perfscale/fit.hpp"
#include "perfscale/operator_norms.hpp"
#include "perfscale/predictions.hpp"

namespace perfscale {

/** \brief One measured value of a sweep. */
struct MeasurementRow {
  std::string sweep;
  Quantity quantity = Quantity::D;
  int d = 2;
  double p = 2.0;
  double epsilon = 1.0;
  double eta = 0.0;
  double value = 0.0;
  /// exact-p2, lower-bound, random-search-lower-bound or measured.
  std::string kind;
  double h = 0.0;
  int iterations = 0;
  Host host = Host::periodic_cell;
  std::string regime;
  bool ok = true;
  std::string message;

  bool operator==(const MeasurementRow&) const = default;
};

struct FitRecord {
  std::string sweep;
  Quantity quantity = Quantity::D;
  int d = 2;
  double p = 2.0;
  std::string regime;
  /// The fitted values are value^(1/k) (loglaw) or value * |ln(eta/2)|^(-k) (power).
  double log_power = 0.0;
  ScalingFit fit;
};

struct Verdict {
  std::string theorem;
  std::string sweep;
  Quantity quantity = Quantity::D;
  int d = 2;
  double p = 2.0;
  std::string regime;
  Bound bound = Bound::two_sided;
  /// exponent, loglaw, bounded, ratio, saturation or data.
  std::string check;
  double predicted = 0.0;
  double measured = 0.0;
  double stderr_ = 0.0;
  double tolerance = 0.0;
  bool delta_loss = false;
  bool pass = false;
  std::string note;
};

/** \brief Lookup of closed-form predictions; the built-in table or a fixed list. */
class PredictionSource {
 public:
  PredictionSource() = default;
  explicit PredictionSource(std::vector<TheoremPrediction> fixed) : fixed_(std::move(fixed)), use_fixed_(true) {}

  std::vector<TheoremPrediction> lookup(int d, double p) const {
    if (!use_fixed_) return theorem_predictions(d, p);
    std::vector<TheoremPrediction> out;
    for (const auto& t : fixed_)
      if (t.d == d && t.p == p) out.push_back(t);
    return out;
  }

 private:
  std::vector<TheoremPrediction> fixed_;
  bool use_fixed_ = false;
};

struct SweepResult {
  SweepConfig config;
  std::vector<MeasurementRow> rows;
  std::vector<FitRecord> fits;
  std::vector<Verdict> verdicts;

  bool has_errors() const {
    return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r.ok; });
  }
  bool all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass; });
  }
  int exit_status() const { return has_errors() || !all_pass() ? 1 : 0; }
};

/// eps^2 eta^(2-d), or eps^2 |ln(eta/2)| when d = 2.
inline double crossover_sigma2(int d, double epsilon, double eta) {
  return d == 2 ? epsilon * epsilon * loglaw_abscissa(eta) : epsilon * epsilon * std::pow(eta, 2 - d);
}

/** \brief Regime label of a sweep point. */
inline std::string regime_for(Host host, int d, double epsilon, double eta) {
  switch (host) {
    case Host::neumann_cell: return to_string(Regime::cell);
    case Host::periodic_cell:
    case Host::truncated_lattice: return to_string(Regime::lattice);
    case Host::bounded: {
      const double s = crossover_sigma2(d, epsilon, eta);
      if (s <= 0.1) return to_string(Regime::bounded_large_holes);
      if (s >= 1.0) return to_string(Regime::bounded_small_holes);
      return "bounded-critical";
    }
  }
  return "?";
}

inline constexpr const char* unperforated_regime = "unperforated";

struct RunOptions {
  int workers = 1;
  std::function<void(const std::string&)> log;
};

namespace detail {

/// Lazily built state shared by the measurements of one sweep point.
class PointJob {
 public:
  PointJob(const SweepConfig& cfg, const SweepSpec& w, double eps, double eta, bool perforated)
      : cfg_(cfg), w_(w), eps_(eps), eta_(eta) {
    spec_.d = w.d;
    spec_.epsilon = eps;
    spec_.eta = eta;
    spec_.shape = cfg.domain.shape;
    spec_.host = w.host;
    spec_.lattice_radius = cfg.domain.lattice_radius;
    spec_.side = cfg.domain.side;
    spec_.perforated = perforated;
    policy_.min_cells_per_radius = w.cells_per_radius;
    policy_.memory_cap_mb = cfg.solver.memory_cap_mb;
    DomainSpec sized = spec_;
    sized.perforated = true;
    try {
      h_ = spacing_for(sized, w.cells_per_radius);
    } catch (const std::exception& e) {
      setup_error_ = e.what();
    }
  }

  std::vector<MeasurementRow> run(bool reference_only) {
    std::vector<MeasurementRow> rows;
    for (Quantity q : w_.quantities) {
      if (reference_only && q != Quantity::D && q != Quantity::poincare) continue;
      if (q == Quantity::corrector_int || q == Quantity::poincare) {
        rows.push_back(measure(q, q == Quantity::poincare ? 2.0 : 1.0));
        continue;
      }
      for (double p : w_.ps) {
        if (reference_only && p != 2.0) continue;
        if (reference_only && w_.strategy != Strategy::exact) continue;
        rows.push_back(measure(q, p));
      }
    }
    if (reference_only)
      for (auto& r : rows) {
        r.regime = unperforated_regime;
        r.epsilon = 0.0;
        r.eta = 0.0;
      }
    return rows;
  }

 private:
  MeasurementRow measure(Quantity q, double p) {
    MeasurementRow r;
    r.sweep = w_.name;
    r.quantity = q;
    r.d = w_.d;
    r.p = p;
    r.epsilon = eps_;
    r.eta = eta_;
    r.host = w_.host;
    r.regime = regime_for(w_.host, w_.d, eps_, eta_);
    r.h = h_;
    try {
      if (!setup_error_.empty()) throw ConfigError(setup_error_);
      switch (q) {
        case Quantity::corrector_int:
        case Quantity::corrector_grad: {
          const CorrectorResult& c = corrector();
          r.kind = "measured";
          r.h = c.h;
          r.iterations = c.iterations;
          r.value = q == Quantity::corrector_int ? c.integral : c.grad_norms.at(p);
          break;
        }
        case Quantity::poincare:
          r.kind = to_string(EstimateKind::exact_p2);
          r.value = 1.0 / lambda().value;
          r.iterations = lambda().iterations;
          break;
        default: {
          const Which which = parse_which(to_string(q));
          r.kind = to_string(w_.strategy == Strategy::exact ? EstimateKind::exact_p2
                             : w_.strategy == Strategy::corrector_cutoff ? EstimateKind::lower_bound
                                                                         : EstimateKind::random_search);
          if (w_.strategy == Strategy::exact && which == Which::D) {
            r.value = 1.0 / lambda().value;
            r.iterations = lambda().iterations;
          } else if (w_.strategy == Strategy::exact) {
            auto e = norm_p2(op(), which, norm_options());
            r.value = e.value;
            r.iterations = e.iterations;
          } else {
            const CorrectorResult* c = w_.strategy == Strategy::corrector_cutoff ? &tiling_corrector() : nullptr;
            auto e = empirical_lower_bound(op(), which, p, w_.strategy, c, norm_options());
            r.value = e.value;
            r.iterations = e.iterations;
          }
        }
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.value = 0.0;
      r.message = e.what();
      if (r.kind.empty()) r.kind = "error";
    }
    return r;
  }

  NormOptions norm_options() const {
    NormOptions o;
    o.solve_tol = cfg_.solver.tol;
    o.power_tol = cfg_.solver.power_tol;
    o.max_iters = cfg_.solver.max_iters;
    o.power_max_iters = cfg_.solver.power_max_iters;
    o.seed = cfg_.solver.seed;
    o.trials = cfg_.solver.trials;
    o.cutoff_radius = w_.cutoff_radius;
    return o;
  }

  const SparseOperator& op() {
    if (!op_) op_ = assemble_laplacian(build_domain(spec_, h_, policy_));
    return *op_;
  }

  const SpectralEstimate& lambda() {
    if (!lambda_) {
      EigenOptions eo;
      eo.tol = cfg_.solver.eigen_tol;
      eo.seed = cfg_.solver.seed;
      lambda_ = smallest_eigenvalue(op(), eo);
      lambda_->vector.clear();
    }
    return *lambda_;
  }

  CorrectorOptions corrector_options() const {
    CorrectorOptions co;
    co.p_set = w_.ps;
    co.tol = cfg_.solver.corrector_tol;
    co.max_iters = cfg_.solver.max_iters;
    co.policy = policy_;
    return co;
  }

  /// Corrector of the unit cell at the spacing prescribed for eps = 1.
  const CorrectorResult& corrector() {
    if (!corrector_) {
      if (spec_.host == Host::periodic_cell && eps_ == 1.0 && spec_.periodic_cells == 1) {
        corrector_ = solve_corrector(op(), corrector_options());
      } else {
        DomainSpec unit = spec_;
        unit.epsilon = 1.0;
        corrector_ = solve_corrector(spec_.shape, spec_.d, eta_, spacing_for(unit, w_.cells_per_radius),
                                     corrector_options());
      }
    }
    return *corrector_;
  }

  /// Corrector at the spacing of this point, as required for tiling.
  const CorrectorResult& tiling_corrector() {
    if (eps_ != 1.0) throw ConfigError("corrector-cutoff needs epsilon = 1");
    if (spec_.host == Host::periodic_cell) return corrector();
    if (!tiling_) tiling_ = solve_corrector(spec_.shape, spec_.d, eta_, h_, corrector_options());
    return *tiling_;
  }

  const SweepConfig& cfg_;
  const SweepSpec& w_;
  double eps_;
  double eta_;
  double h_ = 0.0;
  DomainSpec spec_;
  ResolutionPolicy policy_;
  std::optional<SparseOperator> op_;
  std::optional<SpectralEstimate> lambda_;
  std::optional<CorrectorResult> corrector_;
  std::optional<CorrectorResult> tiling_;
  std::string setup_error_;
};

inline double tolerance_for(const ReportSettings& r, const std::string& kind) {
  return kind == "exact-p2" || kind == "measured" ? r.tol_exact : r.tol_lower_bound;
}

inline bool exponent_pass(Bound b, double fitted, double predicted, double tol) {
  switch (b) {
    case Bound::lower: return fitted <= predicted + tol;
    case Bound::upper: return fitted >= predicted - tol;
    case Bound::two_sided: return std::abs(fitted - predicted) <= tol;
  }
  return false;
}

inline Regime parse_regime(const std::string& s, bool& known) {
  known = true;
  for (Regime r : {Regime::cell, Regime::lattice, Regime::bounded_large_holes, Regime::bounded_small_holes})
    if (to_string(r) == s) return r;
  known = false;
  return Regime::lattice;
}

class VerdictBuilder {
 public:
  VerdictBuilder(const SweepConfig& cfg, const PredictionSource& source) : cfg_(cfg), source_(source) {}

  void sweep(const SweepSpec& w, const std::vector<MeasurementRow>& all_rows) {
    std::vector<const MeasurementRow*> rows;
    for (const auto& r : all_rows)
      if (r.sweep == w.name) rows.push_back(&r);
    const bool eta_axis = w.etas.size() > 1;
    const bool eps_axis = w.epsilons.size() > 1;

    // (quantity, p) keys in order of first appearance.
    std::vector<std::pair<Quantity, double>> keys;
    for (const auto* r : rows) {
      std::pair<Quantity, double> k{r->quantity, r->p};
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    for (const auto& [q, p] : keys) {
      const MeasurementRow* ref = nullptr;
      std::vector<std::string> regimes;
      for (const auto* r : rows)
        if (r->quantity == q && r->p == p) {
          if (r->regime == unperforated_regime) {
            if (r->ok) ref = r;
          } else if (std::find(regimes.begin(), regimes.end(), r->regime) == regimes.end()) {
            regimes.push_back(r->regime);
          }
        }
      const double lookup_p = q == Quantity::corrector_int ? 2.0 : p;
      const auto table = source_.lookup(w.d, lookup_p);
      for (const auto& regime_name : regimes) {
        bool known = false;
        const Regime regime = parse_regime(regime_name, known);
        if (!known) continue;
        std::vector<const MeasurementRow*> group;
        for (const auto* r : rows)
          if (r->quantity == q && r->p == p && r->regime == regime_name && r->ok) group.push_back(r);
        if (group.empty()) continue;
        const std::string kind = group.front()->kind;
        for (const auto& t : table) {
          if (t.quantity != q || t.regime != regime) continue;
          if (kind == to_string(EstimateKind::random_search) && t.bound != Bound::upper) continue;
          if (eta_axis) eta_law(w, t, group, kind);
          if (eps_axis && t.bound == Bound::two_sided) epsilon_ratios(w, t, group);
          if (regime == Regime::bounded_small_holes && ref && t.bound == Bound::two_sided &&
              t.eta_law.is_bounded() && t.eps_exponent.is_zero())
            saturation(w, t, group, *ref);
        }
      }
    }
  }

  std::vector<FitRecord> fits;
  std::vector<Verdict> verdicts;

 private:
  Verdict base(const SweepSpec& w, const TheoremPrediction& t, const std::string& regime, double p) const {
    Verdict v;
    v.theorem = t.id;
    v.sweep = w.name;
    v.quantity = t.quantity;
    v.d = w.d;
    v.p = p;
    v.regime = regime;
    v.bound = t.bound;
    v.delta_loss = t.delta_loss;
    if (t.delta_loss) v.note = "upper bound with delta loss: checked one-sidedly against measured values";
    return v;
  }

  void eta_law(const SweepSpec& w, const TheoremPrediction& t, const std::vector<const MeasurementRow*>& group,
               const std::string& kind) {
    Verdict v = base(w, t, group.front()->regime, group.front()->p);
    if (group.size() < 3) {
      if (w.host == Host::bounded) return;
      v.check = "data";
      v.note = "fewer than 3 points along eta";
      verdicts.push_back(v);
      return;
    }
    const auto& law = t.eta_law;
    std::vector<std::pair<double, double>> pairs;
    for (const auto* r : group) pairs.emplace_back(r->eta, r->value);
    try {
      if (law.is_bounded()) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (auto [e, val] : pairs) {
          lo = std::min(lo, std::abs(val));
          hi = std::max(hi, std::abs(val));
        }
        v.check = "bounded";
        v.predicted = cfg_.report.bounded_factor;
        v.measured = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        v.pass = v.measured <= cfg_.report.bounded_factor;
      } else if (law.is_loglaw()) {
        const double k = law.log_power.value();
        for (auto& [e, val] : pairs) val = std::pow(std::max(val, 0.0), 1.0 / k);
        FitRecord rec{w.name, t.quantity, w.d, v.p, v.regime, k, fit_scaling(pairs, FitModel::loglaw)};
        v.check = "loglaw";
        v.predicted = cfg_.report.r2_min;
        v.measured = rec.fit.r2;
        v.stderr_ = rec.fit.b_stderr;
        v.pass = rec.fit.r2 >= cfg_.report.r2_min && rec.fit.b > 0.0;
        v.note = "slope " + format_double(rec.fit.b) + (v.note.empty() ? "" : "; " + v.note);
        add_fit(std::move(rec));
      } else {
        const double k = law.log_power.value();
        for (auto& [e, val] : pairs) val *= std::pow(loglaw_abscissa(e), -k);
        FitRecord rec{w.name, t.quantity, w.d, v.p, v.regime, k, fit_scaling(pairs, FitModel::power)};
        v.check = "exponent";
        v.predicted = law.exponent.value();
        v.measured = rec.fit.b;
        v.stderr_ = rec.fit.b_stderr;
        v.tolerance = tolerance_for(cfg_.report, kind);
        v.pass = exponent_pass(t.bound, v.measured, v.predicted, v.tolerance);
        add_fit(std::move(rec));
      }
    } catch (const ConfigError& e) {
      v.check = "data";
      v.pass = false;
      v.note = e.what();
    }
    verdicts.push_back(v);
  }

  void epsilon_ratios(const SweepSpec& w, const TheoremPrediction& t,
                      std::vector<const MeasurementRow*> group) {
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->epsilon < b->epsilon; });
    for (std::size_t i = 0; i + 1 < group.size(); ++i) {
      const auto* a = group[i];
      const auto* b = group[i + 1];
      Verdict v = base(w, t, a->regime, a->p);
      v.check = "ratio";
      v.predicted = std::pow(b->epsilon / a->epsilon, t.eps_exponent.value());
      v.measured = b->value / a->value;
      v.tolerance = cfg_.report.tol_ratio;
      v.pass = std::abs(v.measured / v.predicted - 1.0) <= v.tolerance;
      v.note = "epsilon " + format_double(a->epsilon) + " -> " + format_double(b->epsilon);
      verdicts.push_back(v);
    }
  }

  void saturation(const SweepSpec& w, const TheoremPrediction& t, const std::vector<const MeasurementRow*>& group,
                  const MeasurementRow& ref) {
    for (const auto* r : group) {
      Verdict v = base(w, t, r->regime, r->p);
      v.check = "saturation";
      v.predicted = ref.value;
      v.measured = r->value;
      v.tolerance = cfg_.report.bounded_factor;
      const double q = r->value / ref.value;
      v.pass = q <= v.tolerance && q >= 1.0 / v.tolerance;
      v.note = "epsilon " + format_double(r->epsilon) + " against the unperforated domain";
      verdicts.push_back(v);
    }
  }

  void add_fit(FitRecord rec) {
    for (const auto& f : fits)
      if (f.sweep == rec.sweep && f.quantity == rec.quantity && f.p == rec.p && f.regime == rec.regime &&
          f.log_power == rec.log_power && f.fit.model == rec.fit.model)
        return;
    fits.push_back(std::move(rec));
  }

  const SweepConfig& cfg_;
  const PredictionSource& source_;
};

}  // namespace detail

/** \brief Fits and verdicts of a set of rows; a pure function of its inputs. */
inline void compute_verdicts(SweepResult& result, const PredictionSource& source = {}) {
  detail::VerdictBuilder vb(result.config, source);
  for (const auto& w : result.config.sweeps) vb.sweep(w, result.rows);
  result.fits = std::move(vb.fits);
  result.verdicts = std::move(vb.verdicts);
}

/** \brief Execute every sweep point on a bounded worker pool. */
inline SweepResult run_sweep(const SweepConfig& config, const RunOptions& run = {},
                             const PredictionSource& source = {}) {
  validate(config);
  struct Job {
    const SweepSpec* sweep;
    double epsilon;
    double eta;
    bool reference;
  };
  std::vector<Job> jobs;
  for (const auto& w : config.sweeps) {
    if (w.quantities.empty()) continue;
    for (double eps : w.epsilons)
      for (double eta : w.etas) jobs.push_back({&w, eps, eta, false});
    const bool wants_reference =
        w.host == Host::bounded && w.strategy == Strategy::exact &&
        std::any_of(w.quantities.begin(), w.quantities.end(),
                    [](Quantity q) { return q == Quantity::D || q == Quantity::poincare; });
    if (wants_reference) {
      // Coarsest spacing among the sweep points.
      jobs.push_back({&w, *std::max_element(w.epsilons.begin(), w.epsilons.end()),
                      *std::max_element(w.etas.begin(), w.etas.end()), true});
    }
  }

  std::vector<std::vector<MeasurementRow>> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& j = jobs[i];
      detail::PointJob pj(config, *j.sweep, j.epsilon, j.eta, !j.reference);
      out[i] = pj.run(j.reference);
      if (run.log) {
        std::lock_guard lock(log_mutex);
        run.log("sweep " + j.sweep->name + (j.reference ? " reference" : "") + " eps=" +
                format_double(j.epsilon) + " eta=" + format_double(j.eta) + " done");
      }
    }
  };
  const int nw = std::max(1, std::min<int>(run.workers, static_cast<int>(jobs.size())));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < nw; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  SweepResult result;
  result.config = config;
  for (auto& rows : out)
    for (auto& r : rows) result.rows.push_back(std::move(r));
  compute_verdicts(result, source);
  return result;
}

}  // namespace perfscale

#endif
