#ifndef PERFSCALE_CONFIG_HPP
#define PERFSCALE_CONFIG_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "perfscale/errors.hpp"
#include "perfscale/geometry.hpp"
#include "perfscale/operator_norms.hpp"
#include "perfscale/predictions.hpp"

namespace perfscale {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct DomainSettings {
  HoleShape shape = HoleShape::ball(0.25);
  Host host = Host::periodic_cell;
  double lattice_radius = 2.0;
  double side = 1.0;
  bool operator==(const DomainSettings&) const = default;
};

struct SolverSettings {
  double tol = 1e-10;
  double corrector_tol = 1e-10;
  double eigen_tol = 1e-10;
  double power_tol = 1e-9;
  int max_iters = 2000;
  int power_max_iters = 2000;
  std::uint64_t seed = 20240917;
  int trials = 32;
  double memory_cap_mb = 4096.0;
  bool operator==(const SolverSettings&) const = default;
};

struct ReportSettings {
  double tol_exact = 0.15;
  double tol_lower_bound = 0.25;
  double tol_ratio = 0.15;
  double r2_min = 0.98;
  double bounded_factor = 3.0;
  std::vector<std::string> formats{"csv", "json"};
  bool operator==(const ReportSettings&) const = default;
};

struct SweepSpec {
  std::string name;
  int d = 2;
  Host host = Host::periodic_cell;
  std::vector<Quantity> quantities;
  std::vector<double> etas;
  std::vector<double> epsilons{1.0};
  std::vector<double> ps{2.0};
  Strategy strategy = Strategy::exact;
  double cells_per_radius = 8.0;
  /// NaN selects the largest radius that fits the truncated box.
  double cutoff_radius = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const SweepSpec& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return name == o.name && d == o.d && host == o.host && quantities == o.quantities &&
           etas == o.etas && epsilons == o.epsilons && ps == o.ps && strategy == o.strategy &&
           cells_per_radius == o.cells_per_radius && same(cutoff_radius, o.cutoff_radius);
  }
};

struct SweepConfig {
  DomainSettings domain;
  SolverSettings solver;
  ReportSettings report;
  std::vector<SweepSpec> sweeps;
  bool operator==(const SweepConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

class ConfigParser {
 public:
  explicit ConfigParser(std::string_view text) : text_(text) {}

  SweepConfig parse() {
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      const auto nl = text_.find('\n', pos);
      std::string_view raw = text_.substr(pos, nl == std::string_view::npos ? text_.npos : nl - pos);
      ++line_;
      handle_line(raw);
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    finish_sweep();
    resolve_sweeps();
    return cfg_;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + msg);
  }

  [[noreturn]] void bad_value(const std::string& key, const std::string& expected,
                              std::string_view got) const {
    fail("key '" + key + "' expects " + expected + ", got '" + std::string(got) + "'");
  }

  double number(const std::string& key, std::string_view s) const {
    s = trim(s);
    if (s == "inf") return std::numeric_limits<double>::infinity();
    const auto slash = s.find('/');
    if (slash != std::string_view::npos) {
      const double n = number(key, s.substr(0, slash));
      const double d = number(key, s.substr(slash + 1));
      if (d == 0.0) bad_value(key, "a number", s);
      return n / d;
    }
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
      bad_value(key, "a number", s);
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::string_view s) const {
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(number(key, item));
    if (out.empty()) bad_value(key, "a list of numbers", s);
    return out;
  }

  std::int64_t integer(const std::string& key, std::string_view s) const {
    s = trim(s);
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
      bad_value(key, "an integer", s);
    return v;
  }

  template <class F>
  auto guarded(const std::string& key, const std::string& expected, std::string_view s, F&& f) const {
    try {
      return f(std::string(trim(s)));
    } catch (const ConfigError&) {
      bad_value(key, expected, s);
    }
  }

  void handle_line(std::string_view raw) {
    const auto hash = raw.find('#');
    std::string_view s = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (s.empty()) return;
    if (s.front() == '[') {
      if (s.back() != ']') fail("malformed section header '" + std::string(s) + "'");
      const std::string name(trim(s.substr(1, s.size() - 2)));
      finish_sweep();
      if (name == "sweep") {
        in_sweep_ = true;
        sweep_ = SweepSpec{};
        sweep_seen_.clear();
        sweep_line_ = line_;
      } else if (name == "domain" || name == "solver" || name == "report") {
        if (!sections_.insert(name).second) fail("section [" + name + "] appears twice");
      } else {
        fail("unknown section [" + name + "]");
      }
      section_ = name;
      return;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value', got '" + std::string(s) + "'");
    const std::string key(trim(s.substr(0, eq)));
    const std::string_view value = trim(s.substr(eq + 1));
    if (section_.empty()) fail("key '" + key + "' appears before any section");
    auto& seen = in_sweep_ ? sweep_seen_ : seen_[section_];
    if (!seen.insert(key).second) fail("duplicate key '" + key + "' in [" + section_ + "]");
    if (section_ == "domain") domain_key(key, value);
    else if (section_ == "solver") solver_key(key, value);
    else if (section_ == "report") report_key(key, value);
    else sweep_key(key, value);
  }

  [[noreturn]] void unknown(const std::string& key) const {
    fail("unknown key '" + key + "' in [" + section_ + "]");
  }

  void domain_key(const std::string& key, std::string_view v) {
    auto& d = cfg_.domain;
    if (key == "shape") {
      d.shape.kind = guarded(key, "ball, cube or ellipsoid", v, [](const std::string& x) { return parse_shape_kind(x); });
    } else if (key == "size") {
      auto xs = numbers(key, v);
      if (xs.size() == 1) xs.assign(3, xs[0]);
      if (xs.size() == 2) xs.push_back(xs[1]);
      if (xs.size() != 3) bad_value(key, "one to three numbers", v);
      for (int a = 0; a < 3; ++a) d.shape.size[a] = xs[a];
    } else if (key == "host") {
      d.host = guarded(key, "periodic, truncated, bounded or neumann-cell", v, [](const std::string& x) { return parse_host(x); });
    } else if (key == "lattice_radius") {
      d.lattice_radius = number(key, v);
    } else if (key == "side") {
      d.side = number(key, v);
    } else {
      unknown(key);
    }
  }

  void solver_key(const std::string& key, std::string_view v) {
    auto& s = cfg_.solver;
    if (key == "tol") s.tol = number(key, v);
    else if (key == "corrector_tol") s.corrector_tol = number(key, v);
    else if (key == "eigen_tol") s.eigen_tol = number(key, v);
    else if (key == "power_tol") s.power_tol = number(key, v);
    else if (key == "max_iters") s.max_iters = static_cast<int>(integer(key, v));
    else if (key == "power_max_iters") s.power_max_iters = static_cast<int>(integer(key, v));
    else if (key == "seed") {
      const auto x = integer(key, v);
      if (x < 0) bad_value(key, "a non-negative integer", v);
      s.seed = static_cast<std::uint64_t>(x);
    } else if (key == "trials") s.trials = static_cast<int>(integer(key, v));
    else if (key == "memory_cap_mb") s.memory_cap_mb = number(key, v);
    else unknown(key);
  }

  void report_key(const std::string& key, std::string_view v) {
    auto& r = cfg_.report;
    if (key == "tol_exact") r.tol_exact = number(key, v);
    else if (key == "tol_lower_bound") r.tol_lower_bound = number(key, v);
    else if (key == "tol_ratio") r.tol_ratio = number(key, v);
    else if (key == "r2_min") r.r2_min = number(key, v);
    else if (key == "bounded_factor") r.bounded_factor = number(key, v);
    else if (key == "formats") {
      r.formats = split_list(v);
      for (const auto& f : r.formats)
        if (f != "csv" && f != "json") bad_value(key, "a list drawn from csv, json", v);
    } else unknown(key);
  }

  void sweep_key(const std::string& key, std::string_view v) {
    auto& s = sweep_;
    if (key == "name") s.name = std::string(v);
    else if (key == "d") s.d = static_cast<int>(integer(key, v));
    else if (key == "host") s.host = guarded(key, "periodic, truncated, bounded or neumann-cell", v, [](const std::string& x) { return parse_host(x); });
    else if (key == "quantities") {
      s.quantities.clear();
      for (const auto& q : split_list(v))
        s.quantities.push_back(guarded(key, "a list of quantities (A, B, C, D, poincare, corrector-grad, corrector-int)", q,
                                       [](const std::string& x) { return parse_quantity(x); }));
    } else if (key == "eta") s.etas = numbers(key, v);
    else if (key == "epsilon") s.epsilons = numbers(key, v);
    else if (key == "p") s.ps = numbers(key, v);
    else if (key == "strategy") s.strategy = guarded(key, "exact, corrector-cutoff or random-search", v, [](const std::string& x) { return parse_strategy(x); });
    else if (key == "cells_per_radius") s.cells_per_radius = number(key, v);
    else if (key == "cutoff_radius") {
      s.cutoff_radius = trim(v) == "auto" ? std::numeric_limits<double>::quiet_NaN() : number(key, v);
    } else unknown(key);
  }

  void finish_sweep() {
    if (!in_sweep_) return;
    in_sweep_ = false;
    pending_.push_back({sweep_, sweep_seen_, sweep_line_});
  }

  // Defaults that depend on other sections are resolved once the file is read.
  void resolve_sweeps() {
    for (auto& [s, seen, at] : pending_) {
      line_ = at;
      if (!seen.count("host")) s.host = cfg_.domain.host;
      if (!seen.count("cells_per_radius")) s.cells_per_radius = s.d == 2 ? 8.0 : 2.0;
      if (s.name.empty()) fail("sweep is missing key 'name'");
      for (const auto& o : cfg_.sweeps)
        if (o.name == s.name) fail("sweep name '" + s.name + "' is used twice");
      if (!seen.count("eta")) fail("sweep '" + s.name + "' is missing key 'eta'");
      cfg_.sweeps.push_back(s);
    }
  }

  struct Pending {
    SweepSpec spec;
    std::set<std::string> seen;
    int line = 0;
  };

  std::string_view text_;
  int line_ = 0;
  SweepConfig cfg_;
  std::string section_;
  std::set<std::string> sections_;
  std::map<std::string, std::set<std::string>> seen_;
  bool in_sweep_ = false;
  SweepSpec sweep_;
  std::set<std::string> sweep_seen_;
  int sweep_line_ = 0;
  std::vector<Pending> pending_;
};

}  // namespace detail

/** \brief Semantic checks on a parsed configuration. */
inline void validate(const SweepConfig& c) {
  c.domain.shape.validate(2);
  if (!(c.domain.lattice_radius > 0.0)) throw ConfigError("lattice_radius must be positive");
  if (!(c.domain.side > 0.0)) throw ConfigError("side must be positive");
  const auto& s = c.solver;
  if (!(s.tol > 0.0 && s.corrector_tol > 0.0 && s.eigen_tol > 0.0 && s.power_tol > 0.0))
    throw ConfigError("solver tolerances must be positive");
  if (s.max_iters < 1 || s.power_max_iters < 1) throw ConfigError("iteration limits must be >= 1");
  if (s.trials < 1) throw ConfigError("trials must be >= 1");
  if (!(s.memory_cap_mb > 0.0)) throw ConfigError("memory_cap_mb must be positive");
  const auto& r = c.report;
  if (!(r.tol_exact >= 0.0 && r.tol_lower_bound >= 0.0 && r.tol_ratio >= 0.0))
    throw ConfigError("report tolerances must be non-negative");
  if (!(r.r2_min >= 0.0 && r.r2_min <= 1.0)) throw ConfigError("r2_min must lie in [0, 1]");
  if (!(r.bounded_factor >= 1.0)) throw ConfigError("bounded_factor must be >= 1");
  for (const auto& w : c.sweeps) {
    const std::string where = "sweep '" + w.name + "': ";
    if (w.d != 2 && w.d != 3) throw ConfigError(where + "d must be 2 or 3");
    c.domain.shape.validate(w.d);
    if (w.etas.empty() || w.epsilons.empty() || w.ps.empty())
      throw ConfigError(where + "eta, epsilon and p lists must be non-empty");
    for (double e : w.etas)
      if (!(e > 0.0 && e <= 1.0)) throw ConfigError(where + "eta values must lie in (0, 1]");
    for (double e : w.epsilons)
      if (!(e > 0.0)) throw ConfigError(where + "epsilon values must be positive");
    for (double p : w.ps)
      if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError(where + "p values must lie in (1, infinity)");
    if (w.etas.size() > 1 && w.epsilons.size() > 1)
      throw ConfigError(where + "at most one of eta and epsilon may list several values");
    if (!(w.cells_per_radius > 0.0)) throw ConfigError(where + "cells_per_radius must be positive");
    if (!std::isnan(w.cutoff_radius) && !(w.cutoff_radius > 0.0))
      throw ConfigError(where + "cutoff_radius must be positive or auto");
    for (Quantity q : w.quantities) {
      if (is_operator_norm(q) && w.strategy == Strategy::exact)
        for (double p : w.ps)
          if (p != 2.0) throw ConfigError(where + "strategy exact supports p = 2 only");
      if ((q == Quantity::corrector_grad || q == Quantity::corrector_int) && w.host != Host::periodic_cell)
        throw ConfigError(where + "corrector quantities need host = periodic");
    }
    if (w.host == Host::neumann_cell)
      for (double e : w.epsilons)
        if (e != 1.0) throw ConfigError(where + "neumann-cell host requires epsilon = 1");
  }
}

/** \brief Parse a sectioned key = value configuration and apply defaults. */
inline SweepConfig parse_config(std::string_view text) {
  SweepConfig c = detail::ConfigParser(text).parse();
  validate(c);
  return c;
}

namespace detail {
inline std::string join_numbers(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_double(xs[i]);
  return s;
}
}  // namespace detail

/** \brief Effective configuration with every default written out. */
inline std::string to_text(const SweepConfig& c) {
  std::ostringstream os;
  os << "[domain]\n"
     << "shape = " << to_string(c.domain.shape.kind) << "\n"
     << "size = " << detail::join_numbers({c.domain.shape.size.begin(), c.domain.shape.size.end()}) << "\n"
     << "host = " << to_string(c.domain.host) << "\n"
     << "lattice_radius = " << format_double(c.domain.lattice_radius) << "\n"
     << "side = " << format_double(c.domain.side) << "\n\n";
  const auto& s = c.solver;
  os << "[solver]\n"
     << "tol = " << format_double(s.tol) << "\n"
     << "corrector_tol = " << format_double(s.corrector_tol) << "\n"
     << "eigen_tol = " << format_double(s.eigen_tol) << "\n"
     << "power_tol = " << format_double(s.power_tol) << "\n"
     << "max_iters = " << s.max_iters << "\n"
     << "power_max_iters = " << s.power_max_iters << "\n"
     << "seed = " << s.seed << "\n"
     << "trials = " << s.trials << "\n"
     << "memory_cap_mb = " << format_double(s.memory_cap_mb) << "\n\n";
  const auto& r = c.report;
  os << "[report]\n"
     << "tol_exact = " << format_double(r.tol_exact) << "\n"
     << "tol_lower_bound = " << format_double(r.tol_lower_bound) << "\n"
     << "tol_ratio = " << format_double(r.tol_ratio) << "\n"
     << "r2_min = " << format_double(r.r2_min) << "\n"
     << "bounded_factor = " << format_double(r.bounded_factor) << "\n"
     << "formats = ";
  for (std::size_t i = 0; i < r.formats.size(); ++i) os << (i ? ", " : "") << r.formats[i];
  os << "\n";
  for (const auto& w : c.sweeps) {
    os << "\n[sweep]\n"
       << "name = " << w.name << "\n"
       << "d = " << w.d << "\n"
       << "host = " << to_string(w.host) << "\n"
       << "quantities = ";
    for (std::size_t i = 0; i < w.quantities.size(); ++i) os << (i ? ", " : "") << to_string(w.quantities[i]);
    os << "\n"
       << "eta = " << detail::join_numbers(w.etas) << "\n"
       << "epsilon = " << detail::join_numbers(w.epsilons) << "\n"
       << "p = " << detail::join_numbers(w.ps) << "\n"
       << "strategy = " << to_string(w.strategy) << "\n"
       << "cells_per_radius = " << format_double(w.cells_per_radius) << "\n"
       << "cutoff_radius = " << (std::isnan(w.cutoff_radius) ? std::string("auto") : format_double(w.cutoff_radius))
       << "\n";
  }
  return os.str();
}

/** \brief 64-bit FNV-1a hash as 16 hex digits. */
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

inline std::string config_digest(const SweepConfig& c) { return fnv1a_hex(to_text(c)); }

}  // namespace perfscale

#endif
