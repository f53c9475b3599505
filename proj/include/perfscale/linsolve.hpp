#ifndef PERFSCALE_LINSOLVE_HPP
#define PERFSCALE_LINSOLVE_HPP

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "perfscale/detail/multigrid.hpp"
#include "perfscale/detail/summation.hpp"
#include "perfscale/errors.hpp"
#include "perfscale/grid_calculus.hpp"

namespace perfscale {

enum class Preconditioner { automatic, none, jacobi, multigrid };

struct SolveReport {
  std::vector<double> solution;
  int iterations = 0;
  double relative_residual = 0.0;
  double seconds = 0.0;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iters = 5000;
  Preconditioner preconditioner = Preconditioner::automatic;
};

namespace detail {

class PreconditionerApply {
 public:
  PreconditionerApply(const SparseOperator& op, Preconditioner kind) : op_(op) {
    if (kind == Preconditioner::automatic)
      kind = op.has_grid() ? Preconditioner::multigrid : Preconditioner::jacobi;
    if (kind == Preconditioner::multigrid) {
      mg_ = op.multigrid();
      if (!mg_) kind = Preconditioner::jacobi;
    }
    kind_ = kind;
  }

  void operator()(std::span<const double> r, std::span<double> z) const {
    switch (kind_) {
      case Preconditioner::multigrid:
        mg_->apply(r, z);
        return;
      case Preconditioner::jacobi: {
        const auto& diag = op_.diagonal();
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / diag[static_cast<Eigen::Index>(i)];
        return;
      }
      default:
        std::copy(r.begin(), r.end(), z.begin());
    }
  }

 private:
  const SparseOperator& op_;
  Preconditioner kind_ = Preconditioner::none;
  std::shared_ptr<const Multigrid> mg_;
};

/// Round-off floor of the relative residual: eps ||(|A| |x|)|| / ||b||.
inline double attainable_residual(const SparseOperator& op, std::span<const double> x,
                                  double bnorm) {
  const CsrMatrix& m = op.matrix();
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  const double* val = m.valuePtr();
  double s2 = 0.0;
  for (int r = 0; r < op.size(); ++r) {
    double s = 0.0;
    for (int k = outer[r]; k < outer[r + 1]; ++k) s += std::abs(val[k] * x[inner[k]]);
    s2 += s * s;
  }
  return std::numeric_limits<double>::epsilon() * std::sqrt(s2) / bnorm;
}
}  // namespace detail

/** \brief Preconditioned conjugate gradients for op x = rhs.
 *
 * Stops when ||rhs - op x|| <= tol ||rhs|| (true residual), or when the
 * true residual reaches the round-off floor of the problem. Throws
 * NonConvergenceError carrying the best iterate when max_iters is reached.
 */
inline SolveReport solve_spd(const SparseOperator& op, std::span<const double> rhs,
                             const SolveOptions& opts = {},
                             std::span<const double> initial = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = static_cast<std::size_t>(op.size());
  if (rhs.size() != n) throw GridMismatchError("right-hand side size does not match operator");
  detail::PreconditionerApply prec(op, opts.preconditioner);

  SolveReport rep;
  rep.solution.assign(n, 0.0);
  std::vector<double>& x = rep.solution;
  const double bnorm = detail::norm2(rhs);
  if (bnorm == 0.0) {
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }
  if (!initial.empty()) std::copy(initial.begin(), initial.end(), x.begin());

  std::vector<double> r(n), z(n), p(n), Ap(n), best(x);
  double best_res = std::numeric_limits<double>::infinity();
  int it = 0;
  while (true) {
    // (Re)start from the true residual.
    op.apply(x, Ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - Ap[i];
    double res = detail::norm2(r) / bnorm;
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (res <= opts.tol || res <= 4.0 * detail::attainable_residual(op, x, bnorm)) {
      rep.relative_residual = res;
      break;
    }
    if (it >= opts.max_iters) {
      throw NonConvergenceError("conjugate gradients did not reach the tolerance", best,
                                std::numeric_limits<double>::quiet_NaN(), best_res);
    }
    prec(r, z);
    p = z;
    double rz = detail::dot(r, z);
    while (it < opts.max_iters) {
      ++it;
      op.apply(p, Ap);
      const double pAp = detail::dot(p, Ap);
      if (!(pAp > 0.0)) break;
      const double alpha = rz / pAp;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
      }
      res = detail::norm2(r) / bnorm;
      if (res <= opts.tol) break;
      prec(r, z);
      const double rz_new = detail::dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }
  rep.iterations = it;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline SolveReport solve_spd(const SparseOperator& op, std::span<const double> rhs, double tol,
                             int max_iters) {
  SolveOptions o;
  o.tol = tol;
  o.max_iters = max_iters;
  return solve_spd(op, rhs, o);
}

struct SpectralEstimate {
  double value = 0.0;
  int iterations = 0;
  /// Estimated ratio of the two leading eigenvalues (power iteration) or
  /// lambda_1 / lambda_2 from the Rayleigh-Ritz space (smallest eigenvalue).
  double gap_ratio = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> vector;
};

/// y = M x for a symmetric positive semidefinite M.
using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

/** \brief Power iteration for the largest eigenvalue of a symmetric PSD map.
 *
 * Starts from a seeded random vector (or `start`) and stops when the
 * Rayleigh quotient changes by at most tol relative to its value.
 */
inline SpectralEstimate power_iteration(const LinearMap& op, std::size_t dim, double tol,
                                        int max_iters, std::uint64_t seed,
                                        std::span<const double> start = {}) {
  std::vector<double> x(dim), y(dim);
  if (!start.empty()) {
    std::copy(start.begin(), start.end(), x.begin());
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : x) v = dist(rng);
  }
  double nx = detail::norm2(x);
  if (nx == 0.0) throw ConfigError("power iteration needs a nonzero start vector");
  for (auto& v : x) v /= nx;

  SpectralEstimate est;
  double prev = std::numeric_limits<double>::quiet_NaN();
  double prev_change = std::numeric_limits<double>::quiet_NaN();
  for (int k = 1; k <= max_iters; ++k) {
    op(x, y);
    const double lambda = detail::dot(x, y);
    const double ny = detail::norm2(y);
    est.iterations = k;
    est.value = lambda;
    if (ny == 0.0) {
      est.vector = x;
      return est;
    }
    for (std::size_t i = 0; i < dim; ++i) x[i] = y[i] / ny;
    if (k > 1) {
      const double change = std::abs(lambda - prev);
      if (k > 2 && prev_change > 0.0) est.gap_ratio = std::sqrt(std::min(1.0, change / prev_change));
      prev_change = change;
      if (change <= tol * std::abs(lambda)) {
        est.vector = x;
        return est;
      }
    }
    prev = lambda;
  }
  throw NonConvergenceError("power iteration did not converge", x, est.value, prev_change);
}

struct EigenOptions {
  double tol = 1e-10;
  int max_iters = 500;
  /// Relative tolerance of the inner solve used as preconditioner.
  double inner_tol = 1e-2;
  int inner_max_iters = 50;
  std::uint64_t seed = 7;
};

/** \brief Smallest eigenvalue of an SPD operator.
 *
 * Inverse iteration with Rayleigh-Ritz acceleration over the span of the
 * current vector, the preconditioned residual and the previous search
 * direction (block size one LOBPCG). The preconditioner is an inexact
 * solve with the operator itself.
 */
inline SpectralEstimate smallest_eigenvalue(const SparseOperator& op, const EigenOptions& opts = {}) {
  const std::size_t n = static_cast<std::size_t>(op.size());
  if (n == 0) throw ConfigError("empty operator");
  using Vec = Eigen::VectorXd;
  auto as_span = [](const Vec& v) { return std::span<const double>(v.data(), v.size()); };
  auto apply = [&](const Vec& v) {
    Vec out(v.size());
    op.apply(as_span(v), std::span<double>(out.data(), out.size()));
    return out;
  };

  Vec x = Vec::Ones(static_cast<Eigen::Index>(n));
  {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += dist(rng);
  }
  x.normalize();
  Vec Ax = apply(x);
  double lambda = x.dot(Ax);
  Vec p, Ap;
  SpectralEstimate est;
  SolveOptions inner;
  inner.tol = opts.inner_tol;
  inner.max_iters = opts.inner_max_iters;
  double prev = std::numeric_limits<double>::infinity();
  double res_norm = std::numeric_limits<double>::infinity();

  for (int k = 1; k <= opts.max_iters; ++k) {
    Vec r = Ax - lambda * x;
    res_norm = r.norm() / std::abs(lambda);
    est.iterations = k;
    if (std::abs(prev - lambda) <= opts.tol * std::abs(lambda) &&
        res_norm <= std::max(std::sqrt(opts.tol), 1e-13)) {
      est.value = lambda;
      est.vector.assign(x.data(), x.data() + x.size());
      return est;
    }
    prev = lambda;

    Vec w;
    try {
      auto rep = solve_spd(op, as_span(r), inner);
      w = Eigen::Map<Vec>(rep.solution.data(), static_cast<Eigen::Index>(n));
    } catch (const NonConvergenceError& e) {
      w = Eigen::Map<const Vec>(e.best_iterate().data(), static_cast<Eigen::Index>(n));
    }

    // Orthonormal basis of span{x, w, p}, x first.
    std::vector<Vec> basis{x};
    std::vector<Vec> abasis{Ax};
    auto add = [&](Vec v) {
      const double n0 = v.norm();
      if (n0 == 0.0) return;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) v -= b.dot(v) * b;
      const double n1 = v.norm();
      if (n1 <= 1e-10 * n0) return;
      v /= n1;
      abasis.push_back(apply(v));
      basis.push_back(std::move(v));
    };
    add(w);
    if (p.size() > 0) add(p);

    const int m = static_cast<int>(basis.size());
    Eigen::MatrixXd H(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) H(i, j) = basis[i].dot(abasis[j]);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Vec c = es.eigenvectors().col(0);
    if (m > 1) est.gap_ratio = es.eigenvalues()[0] / es.eigenvalues()[1];

    Vec xn = c[0] * basis[0];
    Vec Axn = c[0] * abasis[0];
    Vec pn = Vec::Zero(static_cast<Eigen::Index>(n));
    Vec Apn = Vec::Zero(static_cast<Eigen::Index>(n));
    for (int i = 1; i < m; ++i) {
      pn += c[i] * basis[i];
      Apn += c[i] * abasis[i];
    }
    xn += pn;
    Axn += Apn;
    const double nx = xn.norm();
    x = xn / nx;
    Ax = Axn / nx;
    p = pn;
    Ap = Apn;
    lambda = x.dot(Ax);
    if (k % 20 == 0) Ax = apply(x);  // refresh against drift
  }
  throw NonConvergenceError("smallest eigenvalue iteration did not converge",
                            std::vector<double>(x.data(), x.data() + x.size()), lambda, res_norm);
}

/** \brief Dense reference computations for small operators. */
namespace dense_oracle {

inline constexpr int max_dimension = 4096;

inline Eigen::MatrixXd to_dense(const SparseOperator& op) {
  if (op.size() > max_dimension)
    throw DimensionError("operator too large for the dense oracle");
  return Eigen::MatrixXd(op.matrix());
}

inline std::vector<double> solve(const SparseOperator& op, std::span<const double> rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(to_dense(op));
  if (llt.info() != Eigen::Success) throw SingularOperatorError("dense Cholesky failed");
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  Eigen::VectorXd x = llt.solve(b);
  return {x.data(), x.data() + x.size()};
}

inline Eigen::VectorXd eigenvalues(const SparseOperator& op) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(op), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double smallest_eigenvalue(const SparseOperator& op) { return eigenvalues(op)[0]; }

}  // namespace dense_oracle

}  // namespace perfscale

#endif
