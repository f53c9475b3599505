#ifndef PERFSCALE_REPORT_HPP
#define PERFSCALE_REPORT_HPP

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfscale/config.hpp"
#include "perfscale/sweep.hpp"

namespace perfscale {

using nlohmann::json;

namespace detail {
/// Finite doubles as numbers, the rest as null.
inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
}  // namespace detail

inline json to_json(const MeasurementRow& r) {
  return {{"sweep", r.sweep},
          {"quantity", to_string(r.quantity)},
          {"d", r.d},
          {"p", r.p},
          {"epsilon", r.epsilon},
          {"eta", r.eta},
          {"value", detail::number_or_null(r.value)},
          {"kind", r.kind},
          {"h", r.h},
          {"iterations", r.iterations},
          {"host", to_string(r.host)},
          {"regime", r.regime},
          {"status", r.ok ? "ok" : "error"},
          {"message", r.message}};
}

inline MeasurementRow row_from_json(const json& j) {
  MeasurementRow r;
  r.sweep = j.at("sweep").get<std::string>();
  r.quantity = parse_quantity(j.at("quantity").get<std::string>());
  r.d = j.at("d").get<int>();
  r.p = j.at("p").get<double>();
  r.epsilon = j.at("epsilon").get<double>();
  r.eta = j.at("eta").get<double>();
  r.value = detail::number_from(j.at("value"));
  r.kind = j.at("kind").get<std::string>();
  r.h = j.at("h").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.host = parse_host(j.at("host").get<std::string>());
  r.regime = j.at("regime").get<std::string>();
  r.ok = j.at("status").get<std::string>() == "ok";
  r.message = j.at("message").get<std::string>();
  return r;
}

inline json to_json(const FitRecord& f) {
  return {{"sweep", f.sweep},
          {"quantity", to_string(f.quantity)},
          {"d", f.d},
          {"p", f.p},
          {"regime", f.regime},
          {"log_power", f.log_power},
          {"model", to_string(f.fit.model)},
          {"a", detail::number_or_null(f.fit.a)},
          {"b", detail::number_or_null(f.fit.b)},
          {"b_stderr", detail::number_or_null(f.fit.b_stderr)},
          {"r2", detail::number_or_null(f.fit.r2)},
          {"max_residual", detail::number_or_null(f.fit.max_residual)},
          {"points", f.fit.pairs.size()}};
}

inline json to_json(const Verdict& v) {
  return {{"theorem", v.theorem},
          {"sweep", v.sweep},
          {"quantity", to_string(v.quantity)},
          {"d", v.d},
          {"p", v.p},
          {"regime", v.regime},
          {"bound", to_string(v.bound)},
          {"check", v.check},
          {"predicted", detail::number_or_null(v.predicted)},
          {"measured", detail::number_or_null(v.measured)},
          {"stderr", detail::number_or_null(v.stderr_)},
          {"tolerance", detail::number_or_null(v.tolerance)},
          {"delta_loss", v.delta_loss},
          {"pass", v.pass},
          {"note", v.note}};
}

inline json to_json(const TheoremPrediction& t) {
  return {{"id", t.id},
          {"d", t.d},
          {"p", t.p},
          {"quantity", to_string(t.quantity)},
          {"regime", to_string(t.regime)},
          {"eps_exponent", t.eps_exponent.str()},
          {"eta_exponent", t.eta_law.exponent.str()},
          {"eta_log_power", t.eta_law.log_power.str()},
          {"bound", to_string(t.bound)},
          {"delta_loss", t.delta_loss}};
}

namespace detail {
inline Rational parse_rational(const std::string& s) {
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return Rational(std::stoll(s));
    return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
  } catch (const std::exception&) {
    throw ConfigError("malformed rational '" + s + "'");
  }
}

inline Regime regime_from(const std::string& s) {
  bool known = false;
  const Regime r = parse_regime(s, known);
  if (!known) throw ConfigError("unknown regime '" + s + "'");
  return r;
}

inline Bound bound_from(const std::string& s) {
  if (s == "lower") return Bound::lower;
  if (s == "upper") return Bound::upper;
  if (s == "two-sided") return Bound::two_sided;
  throw ConfigError("unknown bound '" + s + "'");
}
}  // namespace detail

inline TheoremPrediction prediction_from_json(const json& j) {
  TheoremPrediction t;
  t.id = j.at("id").get<std::string>();
  t.d = j.at("d").get<int>();
  t.p = j.at("p").get<double>();
  t.quantity = parse_quantity(j.at("quantity").get<std::string>());
  t.regime = detail::regime_from(j.at("regime").get<std::string>());
  t.eps_exponent = detail::parse_rational(j.at("eps_exponent").get<std::string>());
  t.eta_law.exponent = detail::parse_rational(j.at("eta_exponent").get<std::string>());
  t.eta_law.log_power = detail::parse_rational(j.at("eta_log_power").get<std::string>());
  t.bound = detail::bound_from(j.at("bound").get<std::string>());
  t.delta_loss = j.at("delta_loss").get<bool>();
  return t;
}

/** \brief Predictions for every (d, p) a configuration needs. */
inline std::vector<TheoremPrediction> predictions_for(const SweepConfig& c) {
  std::vector<std::pair<int, double>> keys;
  for (const auto& w : c.sweeps) {
    std::vector<double> ps = w.ps;
    ps.push_back(2.0);
    for (double p : ps)
      if (std::find(keys.begin(), keys.end(), std::pair{w.d, p}) == keys.end()) keys.emplace_back(w.d, p);
  }
  std::vector<TheoremPrediction> out;
  for (auto [d, p] : keys)
    for (auto& t : theorem_predictions(d, p)) out.push_back(std::move(t));
  return out;
}

inline json report_json(const SweepResult& r) {
  json j;
  j["config"] = to_text(r.config);
  j["config_digest"] = config_digest(r.config);
  j["rows"] = json::array();
  for (const auto& x : r.rows) j["rows"].push_back(to_json(x));
  j["fits"] = json::array();
  for (const auto& x : r.fits) j["fits"].push_back(to_json(x));
  j["verdicts"] = json::array();
  for (const auto& x : r.verdicts) j["verdicts"].push_back(to_json(x));
  j["exit_status"] = r.exit_status();
  return j;
}

/** \brief Rows and configuration from a persisted JSON report; verdicts are recomputed. */
inline SweepResult result_from_json(const json& j, const PredictionSource& source = {}) {
  SweepResult r;
  r.config = parse_config(j.at("config").get<std::string>());
  if (j.contains("config_digest") && j.at("config_digest").get<std::string>() != config_digest(r.config))
    throw ConfigError("config digest does not match the embedded configuration");
  for (const auto& x : j.at("rows")) r.rows.push_back(row_from_json(x));
  compute_verdicts(r, source);
  return r;
}

inline const char* csv_header() { return "quantity,d,p,epsilon,eta,value,kind,h,iterations,sweep,host,regime,status"; }

inline void write_csv(const SweepResult& r, std::ostream& os) {
  os << csv_header() << '\n';
  for (const auto& x : r.rows)
    os << to_string(x.quantity) << ',' << x.d << ',' << format_double(x.p) << ',' << format_double(x.epsilon)
       << ',' << format_double(x.eta) << ',' << format_double(x.value) << ',' << x.kind << ','
       << format_double(x.h) << ',' << x.iterations << ',' << x.sweep << ',' << to_string(x.host) << ','
       << x.regime << ',' << (x.ok ? "ok" : "error") << '\n';
}

inline void write_json(const SweepResult& r, std::ostream& os) { os << report_json(r).dump(2) << '\n'; }

/** \brief report.csv and report.json in `dir`; returns the written paths. */
inline std::vector<std::filesystem::path> write_report(const SweepResult& r, const std::filesystem::path& dir,
                                                       const std::vector<std::string>& formats) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& f : formats) {
    const auto path = dir / ("report." + f);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    if (f == "csv") write_csv(r, os);
    else if (f == "json") write_json(r, os);
    else throw ConfigError("unknown report format '" + f + "'");
    os.flush();
    if (!os) throw Error("write failed for " + path.string());
    written.push_back(path);
  }
  return written;
}

/// One human-readable line per verdict.
inline std::string verdict_line(const Verdict& v) {
  std::ostringstream s;
  s << (v.pass ? "PASS" : "FAIL") << "  " << v.theorem << "  sweep=" << v.sweep << "  " << to_string(v.quantity)
    << " d=" << v.d << " p=" << format_double(v.p) << " " << v.regime << " " << to_string(v.bound) << "  "
    << v.check << ": ";
  if (v.check == "exponent")
    s << "predicted " << format_double(v.predicted) << " fitted " << format_double(v.measured) << " +- "
      << format_double(v.stderr_) << " tol " << format_double(v.tolerance);
  else if (v.check == "loglaw")
    s << "R2 " << format_double(v.measured) << " (min " << format_double(v.predicted) << ")";
  else if (v.check == "bounded")
    s << "max/min " << format_double(v.measured) << " (limit " << format_double(v.predicted) << ")";
  else if (v.check == "ratio")
    s << "ratio " << format_double(v.measured) << " expected " << format_double(v.predicted) << " tol "
      << format_double(v.tolerance);
  else if (v.check == "saturation")
    s << "value " << format_double(v.measured) << " reference " << format_double(v.predicted) << " factor "
      << format_double(v.tolerance);
  if (!v.note.empty()) s << "  [" << v.note << "]";
  return s.str();
}

/** \brief Verdict summary: error rows, one line per verdict, a closing status line. */
struct VerifySummary {
  std::vector<std::string> lines;
  std::size_t failed = 0;
  std::size_t error_rows = 0;
  int exit_status = 0;
};

inline VerifySummary verify_report(const SweepResult& r, bool failures_only = false) {
  VerifySummary s;
  for (const auto& row : r.rows)
    if (!row.ok) {
      ++s.error_rows;
      s.lines.push_back("ERROR  sweep=" + row.sweep + "  " + to_string(row.quantity) + " d=" +
                        std::to_string(row.d) + " p=" + format_double(row.p) + " eps=" + format_double(row.epsilon) +
                        " eta=" + format_double(row.eta) + "  " + row.message);
    }
  for (const auto& v : r.verdicts) {
    s.failed += v.pass ? 0 : 1;
    if (!failures_only || !v.pass) s.lines.push_back(verdict_line(v));
  }
  s.exit_status = r.exit_status();
  s.lines.push_back(std::string(s.exit_status == 0 ? "OK" : "FAILED") + ": " + std::to_string(r.verdicts.size()) +
                    " verdicts, " + std::to_string(s.failed) + " failed");
  return s;
}

}  // namespace perfscale

#endif
