#ifndef PERFSCALE_PREDICTIONS_HPP
#define PERFSCALE_PREDICTIONS_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "perfscale/errors.hpp"

namespace perfscale {

enum class Quantity { A, B, C, D, poincare, corrector_grad, corrector_int };

inline std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::A: return "A";
    case Quantity::B: return "B";
    case Quantity::C: return "C";
    case Quantity::D: return "D";
    case Quantity::poincare: return "poincare";
    case Quantity::corrector_grad: return "corrector-grad";
    case Quantity::corrector_int: return "corrector-int";
  }
  return "?";
}

inline Quantity parse_quantity(std::string_view s) {
  if (s == "A") return Quantity::A;
  if (s == "B") return Quantity::B;
  if (s == "C") return Quantity::C;
  if (s == "D") return Quantity::D;
  if (s == "poincare") return Quantity::poincare;
  if (s == "corrector-grad") return Quantity::corrector_grad;
  if (s == "corrector-int") return Quantity::corrector_int;
  throw ConfigError("unknown quantity '" + std::string(s) +
                    "' (expected A, B, C, D, poincare, corrector-grad or corrector-int)");
}

inline bool is_operator_norm(Quantity q) {
  return q == Quantity::A || q == Quantity::B || q == Quantity::C || q == Quantity::D;
}

enum class Regime { cell, lattice, bounded_large_holes, bounded_small_holes };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::cell: return "cell";
    case Regime::lattice: return "lattice";
    case Regime::bounded_large_holes: return "bounded-large-holes";
    case Regime::bounded_small_holes: return "bounded-small-holes";
  }
  return "?";
}

enum class Bound { lower, upper, two_sided };

inline std::string to_string(Bound b) {
  switch (b) {
    case Bound::lower: return "lower";
    case Bound::upper: return "upper";
    case Bound::two_sided: return "two-sided";
  }
  return "?";
}

/** \brief Exact rational exponent. */
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Rational() = default;
  constexpr Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

  /// Best rational approximation with denominator at most max_den.
  static Rational from_double(double x, std::int64_t max_den = 1000) {
    if (!std::isfinite(x)) throw ConfigError("exponent must be finite");
    const bool neg = x < 0;
    double v = std::abs(x);
    std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    for (int it = 0; it < 64; ++it) {
      const double a = std::floor(v);
      const auto ai = static_cast<std::int64_t>(a);
      const std::int64_t h2 = ai * h1 + h0, k2 = ai * k1 + k0;
      if (k2 > max_den) break;
      h0 = h1; h1 = h2; k0 = k1; k1 = k2;
      const double frac = v - a;
      if (frac < 1e-12 || std::abs(static_cast<double>(h1) / k1 - std::abs(x)) < 1e-12) break;
      v = 1.0 / frac;
    }
    return Rational(neg ? -h1 : h1, k1);
  }

  constexpr void normalize() {
    if (den < 0) { num = -num; den = -den; }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }
  friend constexpr Rational operator+(Rational a, Rational b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend constexpr Rational operator-(Rational a, Rational b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
  friend constexpr Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
  friend constexpr Rational operator/(Rational a, Rational b) { return {a.num * b.den, a.den * b.num}; }
  friend constexpr Rational operator-(Rational a) { return {-a.num, a.den}; }
  friend constexpr bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
  friend constexpr Rational abs(Rational a) { return {a.num < 0 ? -a.num : a.num, a.den}; }
  bool is_zero() const { return num == 0; }
};

/** \brief value ~ eta^exponent * |ln(eta/2)|^log_power. */
struct EtaLaw {
  Rational exponent{0};
  Rational log_power{0};

  bool is_bounded() const { return exponent.is_zero() && log_power.is_zero(); }
  bool is_loglaw() const { return exponent.is_zero() && log_power.num > 0; }
  std::string str() const {
    std::string s;
    if (!exponent.is_zero() || log_power.is_zero()) s = "eta^(" + exponent.str() + ")";
    if (!log_power.is_zero()) s += (s.empty() ? "" : " ") + std::string("|ln(eta/2)|^(") + log_power.str() + ")";
    return s;
  }
  friend bool operator==(const EtaLaw&, const EtaLaw&) = default;
};

/** \brief One closed-form scaling statement. */
struct TheoremPrediction {
  std::string id;
  int d = 2;
  double p = 2.0;
  Quantity quantity = Quantity::D;
  Regime regime = Regime::lattice;
  Rational eps_exponent{0};
  EtaLaw eta_law;
  Bound bound = Bound::two_sided;
  bool delta_loss = false;
};

/// All theorem identifiers the table can produce.
inline const std::vector<std::string>& theorem_ids() {
  static const std::vector<std::string> ids{
      "cell-poincare",  "perforated-poincare", "energy-estimate", "D-C-upper",
      "D-lower",        "C-upper",             "C-lower",         "A-upper",  "B-upper",
      "corrector-bounds", "corrector-gradient-lower", "A-lower",  "B-lower",
      "bounded-domain"};
  return ids;
}

/** \brief Closed-form predictions for dimension d and exponent p. */
inline std::vector<TheoremPrediction> theorem_predictions(int d, double p) {
  if (d < 2) throw ConfigError("dimension must be at least 2");
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("p must lie in (1, infinity)");
  const Rational P = Rational::from_double(p);
  const Rational D(d);
  const Rational one(1), two(2), half(1, 2);
  const bool planar = d == 2;
  const bool p2 = P == two;
  auto power = [](Rational e) { return EtaLaw{e, Rational(0)}; };
  auto loglaw = [](Rational k) { return EtaLaw{Rational(0), k}; };

  std::vector<TheoremPrediction> t;
  auto add = [&](std::string id, Quantity q, Regime r, Rational eps, EtaLaw law, Bound b, bool delta) {
    t.push_back({std::move(id), d, p, q, r, eps, law, b, delta});
  };

  // Exponents of the lattice statements; planar cases trade powers for logs.
  const EtaLaw d_law = planar ? loglaw(one) : power(two - D);
  const EtaLaw c_law = planar ? loglaw(half) : power((two - D) / two);
  const Rational a_exp = -D * abs(half - one / P);
  const Rational b_exp_large_p = one - D + D / P;  // B for p > 2
  const Rational c_exp_small_p = one - D / P;      // C for p < 2

  // Poincare inequality of the mixed cell with a small Dirichlet ball.
  {
    EtaLaw law = P.value() < d ? power(P - D) : (P == D ? loglaw(P - one) : power(Rational(0)));
    add("cell-poincare", Quantity::poincare, Regime::cell, Rational(0), law, Bound::two_sided, false);
  }
  if (p2) {
    add("perforated-poincare", Quantity::poincare, Regime::lattice, two, d_law, Bound::two_sided, false);
    add("energy-estimate", Quantity::D, Regime::lattice, two, d_law, Bound::upper, false);
    add("energy-estimate", Quantity::C, Regime::lattice, one, c_law, Bound::upper, false);
    add("energy-estimate", Quantity::B, Regime::lattice, one, c_law, Bound::upper, false);
    add("energy-estimate", Quantity::A, Regime::lattice, Rational(0), power(Rational(0)), Bound::upper, false);
  }

  // D for every p, C for p >= 2 (by duality D_p = D_p').
  add("D-C-upper", Quantity::D, Regime::lattice, two, d_law, Bound::upper, false);
  if (P.value() >= 2.0) add("D-C-upper", Quantity::C, Regime::lattice, one, c_law, Bound::upper, false);
  add("D-lower", Quantity::D, Regime::lattice, two, d_law, Bound::lower, false);
  if (P.value() >= 2.0) add("C-lower", Quantity::C, Regime::lattice, one, c_law, Bound::lower, false);

  // Gradient operators.
  add("A-upper", Quantity::A, Regime::lattice, Rational(0), power(a_exp), Bound::upper, !p2);
  if (P.value() <= 2.0) {
    add("B-upper", Quantity::B, Regime::lattice, one, c_law, Bound::upper, false);
    add("B-lower", Quantity::B, Regime::lattice, one, c_law, Bound::lower, false);
  } else {
    const EtaLaw law = power(planar ? -one + two / P : b_exp_large_p);
    add("B-upper", Quantity::B, Regime::lattice, one, law, Bound::upper, true);
    add("B-lower", Quantity::B, Regime::lattice, one, law, Bound::lower, false);
  }
  if (P.value() < 2.0) {
    // C_p = B_p' with p' > 2.
    const EtaLaw law = power(planar ? one - two / P : c_exp_small_p);
    add("C-upper", Quantity::C, Regime::lattice, one, law, Bound::upper, true);
    add("C-lower", Quantity::C, Regime::lattice, one, law, Bound::lower, false);
  }
  {
    EtaLaw lower = power(a_exp);
    if (planar) lower.log_power = -half;
    add("A-lower", Quantity::A, Regime::lattice, Rational(0), lower, Bound::lower, false);
  }

  // Cell corrector.
  if (p2) {
    add("corrector-bounds", Quantity::corrector_int, Regime::lattice, Rational(0),
        planar ? loglaw(one) : power(Rational(0)), Bound::two_sided, false);
    add("corrector-bounds", Quantity::corrector_grad, Regime::lattice, Rational(0),
        planar ? loglaw(half) : power((D - two) / two), Bound::two_sided, false);
  } else if (P.value() > 2.0) {
    add("corrector-gradient-lower", Quantity::corrector_grad, Regime::lattice, Rational(0),
        power(D / P - one), Bound::lower, false);
  }

  // Bounded host. Large holes: min(1, eps^2 eta^(2-d)) = eps^2 eta^(2-d).
  {
    const Regime L = Regime::bounded_large_holes, S = Regime::bounded_small_holes;
    add("bounded-domain", Quantity::D, L, two, d_law, Bound::two_sided, false);
    add("bounded-domain", Quantity::D, S, Rational(0), power(Rational(0)), Bound::two_sided, false);
    if (P.value() >= 2.0) {
      add("bounded-domain", Quantity::C, L, one, c_law, Bound::upper, false);
      add("bounded-domain", Quantity::C, S, Rational(0), power(Rational(0)), Bound::upper, false);
    } else {
      add("bounded-domain", Quantity::C, L, one, power(planar ? one - two / P : c_exp_small_p),
          Bound::upper, true);
      add("bounded-domain", Quantity::C, S, one - two / P, power(one - two / P), Bound::upper, true);
    }
    if (P.value() <= 2.0) {
      add("bounded-domain", Quantity::B, L, one, c_law, Bound::upper, false);
      add("bounded-domain", Quantity::B, S, Rational(0), power(Rational(0)), Bound::upper, false);
    } else {
      add("bounded-domain", Quantity::B, L, one, power(planar ? -one + two / P : b_exp_large_p),
          Bound::upper, true);
      add("bounded-domain", Quantity::B, S, -one + two / P, power(-one + two / P), Bound::upper, true);
    }
    const Rational a2 = -two * abs(half - one / P);
    add("bounded-domain", Quantity::A, L, Rational(0), power(a_exp), Bound::upper, !p2);
    add("bounded-domain", Quantity::A, S, a2, power(a2), Bound::upper, !p2);
  }
  return t;
}

}  // namespace perfscale

#endif
