#ifndef PERFSCALE_DETAIL_MULTIGRID_HPP
#define PERFSCALE_DETAIL_MULTIGRID_HPP

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <deque>
#include <memory>
#include <vector>

#include "perfscale/grid_calculus.hpp"

namespace perfscale::detail {

/// Geometric multigrid with Galerkin coarse operators and symmetric
/// Gauss-Seidel smoothing. The V-cycle is a symmetric positive definite
/// preconditioner.
class Multigrid {
 public:
  struct Level {
    CsrMatrix owned;
    const CsrMatrix* A = nullptr;
    CsrMatrix P;  // prolongation from the next coarser level
    int d = 2;
    std::array<Index, 3> n{1, 1, 1};
    std::array<bool, 3> periodic{false, false, false};
    std::vector<int> unknown_of_node;
    std::vector<Index> node_of_unknown;
  };

  static constexpr int coarse_target = 600;
  static constexpr int dense_limit = 5000;

  explicit Multigrid(const SparseOperator& op, int sweeps = 1) : sweeps_(sweeps) {
    const Grid& g = *op.grid_ptr();
    Level fine;
    fine.A = &op.matrix();
    fine.d = g.d;
    fine.n = g.n;
    for (int a = 0; a < 3; ++a) fine.periodic[a] = g.face[a] == FaceMode::periodic;
    fine.unknown_of_node = g.unknown_of_node;
    fine.node_of_unknown = g.node_of_unknown;
    levels_.push_back(std::move(fine));
    while (levels_.back().A->rows() > coarse_target && levels_.size() < 24) {
      if (!coarsen()) break;
    }
    const auto& last = levels_.back();
    if (last.A->rows() <= dense_limit) {
      Eigen::MatrixXd dense(*last.A);
      coarse_llt_.compute(dense);
      dense_coarse_ = coarse_llt_.info() == Eigen::Success;
    }
    // Geometry is only needed while building.
    for (auto& l : levels_) {
      l.unknown_of_node.clear();
      l.unknown_of_node.shrink_to_fit();
      l.node_of_unknown.clear();
      l.node_of_unknown.shrink_to_fit();
    }
  }

  int num_levels() const { return static_cast<int>(levels_.size()); }
  const Level& level(int l) const { return levels_[l]; }

  void apply(std::span<const double> r, std::span<double> z) const {
    Eigen::Map<const Eigen::VectorXd> b(r.data(), static_cast<Eigen::Index>(r.size()));
    Eigen::VectorXd x;
    vcycle(0, b, x);
    std::copy(x.data(), x.data() + x.size(), z.begin());
  }

 private:
  bool coarsen() {
    const Level& f = levels_.back();
    Level c;
    c.d = f.d;
    c.periodic = f.periodic;
    for (int a = 0; a < f.d; ++a) {
      if (f.periodic[a]) {
        if (f.n[a] % 2 != 0 || f.n[a] < 4) return false;
        c.n[a] = f.n[a] / 2;
      } else {
        if (f.n[a] < 3) return false;
        c.n[a] = (f.n[a] + 1) / 2;
      }
    }
    const std::array<Index, 3> fs{1, f.n[0], f.n[0] * f.n[1]};
    const std::array<Index, 3> cs{1, c.n[0], c.n[0] * c.n[1]};
    const Index ctotal = c.n[0] * c.n[1] * c.n[2];
    c.unknown_of_node.assign(static_cast<std::size_t>(ctotal), -1);
    for (Index cn = 0; cn < ctotal; ++cn) {
      Index fn = 0;
      for (int a = 0; a < c.d; ++a) fn += 2 * ((cn / cs[a]) % c.n[a]) * fs[a];
      if (f.unknown_of_node[fn] >= 0) {
        c.unknown_of_node[cn] = static_cast<int>(c.node_of_unknown.size());
        c.node_of_unknown.push_back(cn);
      }
    }
    if (c.node_of_unknown.empty()) return false;

    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(f.node_of_unknown.size() * (1u << c.d));
    for (std::size_t u = 0; u < f.node_of_unknown.size(); ++u) {
      const Index fn = f.node_of_unknown[u];
      std::array<std::array<std::pair<Index, double>, 2>, 3> opts{};
      std::array<int, 3> count{1, 1, 1};
      for (int a = 0; a < c.d; ++a) {
        const Index i = (fn / fs[a]) % f.n[a];
        if (i % 2 == 0) {
          opts[a][0] = {i / 2, 1.0};
          count[a] = 1;
        } else {
          Index hi = (i + 1) / 2;
          if (hi >= c.n[a]) {
            if (c.periodic[a]) {
              hi %= c.n[a];
            } else {
              opts[a][0] = {(i - 1) / 2, 1.0};
              count[a] = 1;
              continue;
            }
          }
          opts[a][0] = {(i - 1) / 2, 0.5};
          opts[a][1] = {hi, 0.5};
          count[a] = 2;
        }
      }
      for (int i0 = 0; i0 < count[0]; ++i0)
        for (int i1 = 0; i1 < (c.d > 1 ? count[1] : 1); ++i1)
          for (int i2 = 0; i2 < (c.d > 2 ? count[2] : 1); ++i2) {
            const std::array<int, 3> pick{i0, i1, i2};
            Index cn = 0;
            double w = 1.0;
            for (int a = 0; a < c.d; ++a) {
              cn += opts[a][pick[a]].first * cs[a];
              w *= opts[a][pick[a]].second;
            }
            const int cu = c.unknown_of_node[cn];
            if (cu >= 0) trip.emplace_back(static_cast<int>(u), cu, w);
          }
    }
    CsrMatrix P(static_cast<int>(f.node_of_unknown.size()),
                static_cast<int>(c.node_of_unknown.size()));
    P.setFromTriplets(trip.begin(), trip.end());
    CsrMatrix AP = *f.A * P;
    CsrMatrix Pt = P.transpose();
    c.owned = Pt * AP;
    c.owned.makeCompressed();
    levels_.back().P = std::move(P);
    levels_.push_back(std::move(c));
    levels_.back().A = &levels_.back().owned;
    return true;
  }

  static void gs_forward(const CsrMatrix& A, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
    const int* outer = A.outerIndexPtr();
    const int* inner = A.innerIndexPtr();
    const double* val = A.valuePtr();
    for (int r = 0; r < A.rows(); ++r) {
      double s = b[r], diag = 0.0;
      for (int k = outer[r]; k < outer[r + 1]; ++k) {
        if (inner[k] == r)
          diag = val[k];
        else
          s -= val[k] * x[inner[k]];
      }
      x[r] = s / diag;
    }
  }

  static void gs_backward(const CsrMatrix& A, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
    const int* outer = A.outerIndexPtr();
    const int* inner = A.innerIndexPtr();
    const double* val = A.valuePtr();
    for (int r = static_cast<int>(A.rows()) - 1; r >= 0; --r) {
      double s = b[r], diag = 0.0;
      for (int k = outer[r]; k < outer[r + 1]; ++k) {
        if (inner[k] == r)
          diag = val[k];
        else
          s -= val[k] * x[inner[k]];
      }
      x[r] = s / diag;
    }
  }

  void vcycle(int l, const Eigen::Ref<const Eigen::VectorXd>& b, Eigen::VectorXd& x) const {
    const Level& lv = levels_[l];
    const CsrMatrix& A = *lv.A;
    x.setZero(A.rows());
    if (l + 1 == num_levels()) {
      if (dense_coarse_) {
        x = coarse_llt_.solve(b);
      } else {
        Eigen::VectorXd bb = b;
        for (int s = 0; s < 20; ++s) gs_forward(A, bb, x);
        for (int s = 0; s < 20; ++s) gs_backward(A, bb, x);
      }
      return;
    }
    Eigen::VectorXd bb = b;
    for (int s = 0; s < sweeps_; ++s) gs_forward(A, bb, x);
    Eigen::VectorXd r = bb - A * x;
    Eigen::VectorXd bc = lv.P.transpose() * r;
    Eigen::VectorXd xc;
    vcycle(l + 1, bc, xc);
    x += lv.P * xc;
    for (int s = 0; s < sweeps_; ++s) gs_backward(A, bb, x);
  }

  int sweeps_;
  std::deque<Level> levels_;  // stable addresses for Level::A
  Eigen::LLT<Eigen::MatrixXd> coarse_llt_;
  bool dense_coarse_ = false;
};

}  // namespace perfscale::detail

namespace perfscale {

inline std::shared_ptr<const detail::Multigrid> SparseOperator::multigrid() const {
  if (!data_ || !data_->grid) return nullptr;
  std::call_once(data_->mg.once,
                 [&] { data_->mg.mg = std::make_shared<detail::Multigrid>(*this); });
  return data_->mg.mg;
}

}  // namespace perfscale

#endif
