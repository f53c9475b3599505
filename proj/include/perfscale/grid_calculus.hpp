#ifndef PERFSCALE_GRID_CALCULUS_HPP
#define PERFSCALE_GRID_CALCULUS_HPP

#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <vector>

#include "perfscale/detail/summation.hpp"
#include "perfscale/errors.hpp"
#include "perfscale/geometry.hpp"

namespace perfscale {

using GridPtr = std::shared_ptr<const Grid>;

/** \brief Values on the fluid nodes of a grid; zero elsewhere by convention. */
class ScalarField {
 public:
  explicit ScalarField(GridPtr grid)
      : grid_(std::move(grid)), values_(static_cast<std::size_t>(grid_->num_fluid()), 0.0) {}
  ScalarField(GridPtr grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(grid_->num_fluid()))
      throw GridMismatchError("scalar field size does not match the fluid node count");
  }

  /// Sample f(x) at every fluid node.
  template <class F>
  static ScalarField from_function(GridPtr grid, F&& f) {
    ScalarField s(grid);
    for (int u = 0; u < grid->num_fluid(); ++u) s.values_[u] = f(grid->point(grid->node_of_unknown[u]));
    return s;
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  double at_node(Index node) const {
    const int u = grid_->unknown_of_node[node];
    return u < 0 ? 0.0 : values_[u];
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

/** \brief One value per forward edge (node, node + e_a), stored per axis.
 *
 * Inactive edges (both endpoints non-fluid or no neighbor) hold zero.
 */
class VectorField {
 public:
  explicit VectorField(GridPtr grid) : grid_(std::move(grid)) {
    for (int a = 0; a < grid_->d; ++a)
      comps_[a].assign(static_cast<std::size_t>(grid_->num_nodes()), 0.0);
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::vector<double>& component(int a) { return comps_[a]; }
  const std::vector<double>& component(int a) const { return comps_[a]; }

  /// Zero out values sitting on inactive edges.
  void mask_inactive() {
    for (int a = 0; a < grid_->d; ++a)
      for (Index node = 0; node < grid_->num_nodes(); ++node)
        if (!grid_->edge_active(node, a)) comps_[a][node] = 0.0;
  }

  /// Flattened view over all components, axis-major.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(grid_->d * grid_->num_nodes()));
    for (int a = 0; a < grid_->d; ++a) out.insert(out.end(), comps_[a].begin(), comps_[a].end());
    return out;
  }
  void assign_flat(std::span<const double> flat) {
    const auto n = static_cast<std::size_t>(grid_->num_nodes());
    if (flat.size() != n * grid_->d) throw GridMismatchError("flat vector field size mismatch");
    for (int a = 0; a < grid_->d; ++a)
      std::copy(flat.begin() + a * n, flat.begin() + (a + 1) * n, comps_[a].begin());
  }

 private:
  GridPtr grid_;
  std::array<std::vector<double>, 3> comps_;
};

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (&a != &b && !a.same_layout(b)) throw GridMismatchError("fields live on different grids");
}

namespace detail {
class Multigrid;
struct MultigridSlot {
  std::once_flag once;
  std::shared_ptr<const Multigrid> mg;
};
}  // namespace detail

using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

/** \brief Immutable symmetric positive definite matrix on the fluid unknowns.
 *
 * Built from a grid the operator keeps the grid so that the geometric
 * multigrid preconditioner can be constructed on first use.
 */
class SparseOperator {
 public:
  SparseOperator() = default;
  explicit SparseOperator(CsrMatrix m, GridPtr grid = nullptr) {
    auto data = std::make_shared<Data>();
    data->matrix = std::move(m);
    data->matrix.makeCompressed();
    data->diagonal = data->matrix.diagonal();
    data->grid = std::move(grid);
    data_ = std::move(data);
  }

  int size() const { return data_ ? static_cast<int>(data_->matrix.rows()) : 0; }
  const CsrMatrix& matrix() const { return data_->matrix; }
  const Eigen::VectorXd& diagonal() const { return data_->diagonal; }
  const GridPtr& grid_ptr() const { return data_->grid; }
  bool has_grid() const { return data_->grid != nullptr; }

  void apply(std::span<const double> x, std::span<double> y) const {
    const CsrMatrix& m = data_->matrix;
    const int* outer = m.outerIndexPtr();
    const int* inner = m.innerIndexPtr();
    const double* val = m.valuePtr();
    for (int r = 0; r < size(); ++r) {
      double s = 0.0;
      for (int k = outer[r]; k < outer[r + 1]; ++k) s += val[k] * x[inner[k]];
      y[r] = s;
    }
  }

  bool is_symmetric(double tol = 1e-12) const {
    CsrMatrix t = matrix().transpose();
    return (t - matrix()).norm() <= tol * matrix().norm();
  }

  /// Lazily built multigrid hierarchy (only for grid-backed operators).
  std::shared_ptr<const detail::Multigrid> multigrid() const;

 private:
  struct Data {
    CsrMatrix matrix;
    Eigen::VectorXd diagonal;
    GridPtr grid;
    detail::MultigridSlot mg;
  };
  std::shared_ptr<Data> data_;
};

/** \brief Five/seven point Laplacian L = G^T G on the fluid unknowns.
 *
 * Hole and exterior neighbors act as homogeneous Dirichlet data.
 */
inline SparseOperator assemble_laplacian(const GridPtr& grid) {
  const Grid& g = *grid;
  const double inv_h2 = 1.0 / (g.h * g.h);
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(static_cast<std::size_t>(g.num_fluid()) * (2 * g.d + 1));
  bool anchored = false;
  for (int u = 0; u < g.num_fluid(); ++u) {
    const Index node = g.node_of_unknown[u];
    double diag = 0.0;
    for (int a = 0; a < g.d; ++a) {
      for (int dir : {-1, +1}) {
        const Index nb = g.neighbor(node, a, dir);
        if (nb < 0) continue;
        diag += inv_h2;
        const int v = g.unknown_of_node[nb];
        if (v >= 0)
          trip.emplace_back(u, v, -inv_h2);
        else
          anchored = true;
      }
    }
    trip.emplace_back(u, u, diag);
  }
  if (!anchored)
    throw SingularOperatorError("Laplacian has a constant null space: no Dirichlet node present");
  CsrMatrix m(g.num_fluid(), g.num_fluid());
  m.setFromTriplets(trip.begin(), trip.end());
  m.prune(0.0);
  return SparseOperator(std::move(m), grid);
}

/** \brief Forward-difference gradient G u with zero extension off the fluid set. */
inline VectorField gradient(const ScalarField& u) {
  const Grid& g = u.grid();
  VectorField out(u.grid_ptr());
  const double inv_h = 1.0 / g.h;
  for (int a = 0; a < g.d; ++a) {
    auto& comp = out.component(a);
    for (Index node = 0; node < g.num_nodes(); ++node) {
      const Index nb = g.neighbor(node, a, +1);
      if (nb < 0) continue;
      const int i = g.unknown_of_node[node];
      const int j = g.unknown_of_node[nb];
      if (i < 0 && j < 0) continue;
      const double ui = i < 0 ? 0.0 : u.values()[i];
      const double uj = j < 0 ? 0.0 : u.values()[j];
      comp[node] = (uj - ui) * inv_h;
    }
  }
  return out;
}

/** \brief Discrete divergence, the negative adjoint of gradient(). */
inline ScalarField divergence_adjoint(const VectorField& f) {
  const Grid& g = f.grid();
  ScalarField out(f.grid_ptr());
  const double inv_h = 1.0 / g.h;
  for (int u = 0; u < g.num_fluid(); ++u) {
    const Index node = g.node_of_unknown[u];
    double s = 0.0;
    for (int a = 0; a < g.d; ++a) {
      const auto& comp = f.component(a);
      s += comp[node];
      const Index prev = g.neighbor(node, a, -1);
      if (prev >= 0) s -= comp[prev];
    }
    out.values()[u] = s * inv_h;
  }
  return out;
}

/** \brief Right-hand side F + div f of the weak form (the h^d weights cancel). */
inline std::vector<double> rhs_from_data(const ScalarField& F, const VectorField& f) {
  require_same_grid(F.grid(), f.grid());
  ScalarField div = divergence_adjoint(f);
  std::vector<double> b(F.values());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += div.values()[i];
  return b;
}

inline std::vector<double> rhs_from_data(const ScalarField& F) { return F.values(); }

inline void check_exponent(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("p must lie in (1, infinity)");
}

/** \brief (h^d sum |v|^p)^(1/p) over fluid nodes. */
inline double lp_norm(const ScalarField& v, double p) {
  check_exponent(p);
  detail::CompensatedSum s;
  for (double x : v.values()) s.add(std::pow(std::abs(x), p));
  return std::pow(v.grid().cell_volume() * s.value(), 1.0 / p);
}

/** \brief L^p norm of the per-node Euclidean magnitude of the forward edges. */
inline double lp_norm(const VectorField& f, double p) {
  check_exponent(p);
  const Grid& g = f.grid();
  detail::CompensatedSum s;
  for (Index node = 0; node < g.num_nodes(); ++node) {
    double m2 = 0.0;
    for (int a = 0; a < g.d; ++a) m2 += f.component(a)[node] * f.component(a)[node];
    if (m2 > 0.0) s.add(std::pow(m2, 0.5 * p));
  }
  return std::pow(g.cell_volume() * s.value(), 1.0 / p);
}

/** \brief h^d times the sum of the values. */
inline double integral(const ScalarField& v) {
  detail::CompensatedSum s;
  for (double x : v.values()) s.add(x);
  return v.grid().cell_volume() * s.value();
}

/** \brief Weighted inner product h^d sum u v. */
inline double inner(const ScalarField& u, const ScalarField& v) {
  require_same_grid(u.grid(), v.grid());
  detail::CompensatedSum s;
  for (std::size_t i = 0; i < u.size(); ++i) s.add(u.values()[i] * v.values()[i]);
  return u.grid().cell_volume() * s.value();
}

inline double inner(const VectorField& f, const VectorField& g) {
  require_same_grid(f.grid(), g.grid());
  detail::CompensatedSum s;
  for (int a = 0; a < f.grid().d; ++a)
    for (Index n = 0; n < f.grid().num_nodes(); ++n) s.add(f.component(a)[n] * g.component(a)[n]);
  return f.grid().cell_volume() * s.value();
}

/** \brief Legacy VTK dump of a scalar field (zero off the fluid set) plus labels. */
inline void write_vtk_field(const ScalarField& v, const std::string& name, std::ostream& os) {
  const Grid& g = v.grid();
  write_vtk_labels(g, os);
  os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n" << std::setprecision(17);
  for (Index n = 0; n < g.num_nodes(); ++n) os << v.at_node(n) << '\n';
}

}  // namespace perfscale

#endif
