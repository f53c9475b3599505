#ifndef PERFSCALE_ERRORS_HPP
#define PERFSCALE_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace perfscale {

/** \brief Base class of every error raised by the library. */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/** \brief Invalid parameters or configuration text. */
class ConfigError : public Error {
 public:
  using Error::Error;
};

/** \brief Grid spacing too coarse for the requested hole size. */
class ResolutionError : public Error {
 public:
  ResolutionError(const std::string& what, double required_h)
      : Error(what), required_h_(required_h) {}
  double required_h() const { return required_h_; }

 private:
  double required_h_;
};

/** \brief Estimated memory footprint exceeds the configured cap. */
class MemoryCapError : public Error {
 public:
  MemoryCapError(const std::string& what, std::size_t nodes, double megabytes)
      : Error(what), nodes_(nodes), megabytes_(megabytes) {}
  std::size_t nodes() const { return nodes_; }
  double megabytes() const { return megabytes_; }

 private:
  std::size_t nodes_;
  double megabytes_;
};

/** \brief Operator has a nontrivial kernel (no Dirichlet node reachable). */
class SingularOperatorError : public Error {
 public:
  using Error::Error;
};

/** \brief Fields or operators defined on different grids. */
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

/** \brief Problem too large for a dense or exhaustive method. */
class DimensionError : public Error {
 public:
  using Error::Error;
};

/** \brief Iterative method hit its iteration cap. Carries the best iterate. */
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> best,
                      double estimate, double residual)
      : Error(what), best_(std::move(best)), estimate_(estimate), residual_(residual) {}
  const std::vector<double>& best_iterate() const { return best_; }
  /// Last eigenvalue estimate, or NaN for linear solves.
  double estimate() const { return estimate_; }
  double residual() const { return residual_; }

 private:
  std::vector<double> best_;
  double estimate_;
  double residual_;
};

}  // namespace perfscale

#endif
