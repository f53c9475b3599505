#ifndef PERFSCALE_FIT_HPP
#define PERFSCALE_FIT_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "perfscale/errors.hpp"

namespace perfscale {

enum class FitModel { power, loglaw };

inline std::string to_string(FitModel m) { return m == FitModel::power ? "power" : "loglaw"; }

inline FitModel parse_fit_model(std::string_view s) {
  if (s == "power") return FitModel::power;
  if (s == "loglaw") return FitModel::loglaw;
  throw ConfigError("unknown fit model '" + std::string(s) + "' (expected power or loglaw)");
}

/** \brief Least-squares scaling fit.
 *
 * power:  value = a * eta^b, fitted on (ln eta, ln value).
 * loglaw: value = a + b * |ln(eta/2)|, fitted on (|ln(eta/2)|, value).
 */
struct ScalingFit {
  FitModel model = FitModel::power;
  std::vector<std::pair<double, double>> pairs;
  double a = 0.0;
  double b = 0.0;
  double b_stderr = 0.0;
  double r2 = 0.0;
  double max_residual = 0.0;
};

inline double loglaw_abscissa(double eta) { return std::abs(std::log(eta / 2.0)); }

inline ScalingFit fit_scaling(std::span<const std::pair<double, double>> pairs, FitModel model) {
  const std::size_t n = pairs.size();
  if (n < 3) throw ConfigError("fit needs at least 3 points");
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [eta, v] = pairs[i];
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("fit abscissae must be positive");
    if (!std::isfinite(v)) throw ConfigError("fit values must be finite");
    if (model == FitModel::power) {
      if (!(v > 0.0)) throw ConfigError("power fit needs positive values");
      x[i] = std::log(eta);
      y[i] = std::log(v);
    } else {
      x[i] = loglaw_abscissa(eta);
      y[i] = v;
    }
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (!(sxx > 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(n)))
    throw ConfigError("degenerate abscissae: all points share one parameter value");

  ScalingFit f;
  f.model = model;
  f.pairs.assign(pairs.begin(), pairs.end());
  f.b = sxy / sxx;
  const double intercept = my - f.b * mx;
  f.a = model == FitModel::power ? std::exp(intercept) : intercept;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (intercept + f.b * x[i]);
    sse += r * r;
    f.max_residual = std::max(f.max_residual, std::abs(r));
  }
  f.r2 = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  f.b_stderr = n > 2 ? std::sqrt(sse / static_cast<double>(n - 2) / sxx) : 0.0;
  return f;
}

}  // namespace perfscale

#endif
