#pragma once

// Small linear-algebra layer shared by the full (sparse) and reduced (dense)
// code paths: a symmetric factorization with a uniform interface, the
// effective system matrix alpha M + beta (K - sum lambda_k D_sym_k), and
// sparse sub-block extraction.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "contactrom/contact.hpp"
#include "contactrom/format.hpp"

namespace contactrom::linalg {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a system matrix that must be positive definite is not.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class Mat>
class SpdSolver;

/// Sparse LDL^T; the symbolic analysis is redone only when the sparsity
/// pattern differs from the previous call.
template <>
class SpdSolver<SparseMatrix> {
 public:
  void compute(const SparseMatrix& a) {
    if (!same_pattern(a)) {
      ldlt_.analyzePattern(a);
      outer_.assign(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1);
      inner_.assign(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros());
      ++analyses_;
    }
    ldlt_.factorize(a);
    if (ldlt_.info() != Eigen::Success || (ldlt_.vectorD().array() <= 0.0).any())
      throw FactorizationError("system matrix is not positive definite");
  }

  template <class Rhs>
  auto solve(const Rhs& b) const {
    return ldlt_.solve(b);
  }

  int analyses() const { return analyses_; }

 private:
  bool same_pattern(const SparseMatrix& a) const {
    if (!a.isCompressed() || static_cast<Eigen::Index>(outer_.size()) != a.outerSize() + 1 ||
        static_cast<Eigen::Index>(inner_.size()) != a.nonZeros())
      return false;
    return std::equal(outer_.begin(), outer_.end(), a.outerIndexPtr()) &&
           std::equal(inner_.begin(), inner_.end(), a.innerIndexPtr());
  }

  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  std::vector<SparseMatrix::StorageIndex> outer_, inner_;
  int analyses_ = 0;
};

template <>
class SpdSolver<MatrixXd> {
 public:
  void compute(const MatrixXd& a) {
    ldlt_.compute(a);
    if (ldlt_.info() != Eigen::Success || !ldlt_.isPositive() ||
        (ldlt_.vectorD().array() <= 0.0).any())
      throw FactorizationError("system matrix is not positive definite");
  }

  template <class Rhs>
  auto solve(const Rhs& b) const {
    return ldlt_.solve(b);
  }

  int analyses() const { return 0; }

 private:
  Eigen::LDLT<MatrixXd> ldlt_;
};

inline SparseMatrix to_sparse(const SparseMatrix& a) { return a; }
inline SparseMatrix to_sparse(const MatrixXd& a) { return a.sparseView(); }
inline MatrixXd to_dense(const SparseMatrix& a) { return MatrixXd(a); }
inline MatrixXd to_dense(const MatrixXd& a) { return a; }

/// alpha M + beta (K - sum_k lambda_k D_sym_k). The sparse variant stores
/// every constraint entry in the base pattern (possibly as explicit zero), so
/// the pattern does not depend on lambda.
template <class Mat>
class EffectiveOperator {
 public:
  EffectiveOperator(const Mat& mass, const Mat& stiffness, const contact::ConstraintSet& cs,
                    double alpha, double beta)
      : cs_(&cs), beta_(beta) {
    if (mass.rows() != stiffness.rows() || stiffness.rows() != cs.dimension)
      throw std::invalid_argument("effective operator: dimension mismatch");
    if constexpr (std::is_same_v<Mat, SparseMatrix>) {
      base_ = beta * stiffness;
      if (alpha != 0.0) base_ += alpha * mass;
      for (const auto& con : cs.constraints)
        for (Index i = 0; i < con.local_size(); ++i)
          for (Index j = 0; j < con.local_size(); ++j) base_.coeffRef(con.dofs[i], con.dofs[j]) += 0.0;
      base_.makeCompressed();
    } else {
      base_ = beta * stiffness;
      if (alpha != 0.0) base_ += alpha * mass;
    }
  }

  Mat matrix(const Eigen::Ref<const VectorXd>& lambda) const {
    if (lambda.size() != cs_->count())
      throw std::invalid_argument("effective operator: lambda has the wrong size");
    Mat a = base_;
    for (Index k = 0; k < cs_->count(); ++k) {
      if (lambda[k] == 0.0) continue;
      const auto& con = cs_->constraints[k];
      const double s = -beta_ * lambda[k];
      for (Index j = 0; j < con.local_size(); ++j)
        for (Index i = 0; i < con.local_size(); ++i) {
          const double v = con.d_sym(i, j);
          if (v != 0.0) a.coeffRef(con.dofs[i], con.dofs[j]) += s * v;
        }
    }
    return a;
  }

  const Mat& base() const { return base_; }

 private:
  const contact::ConstraintSet* cs_;
  double beta_;
  Mat base_;
};

/// S(lambda) = K - sum lambda_k (D_k + D_k^T).
template <class Mat>
Mat effective_stiffness(const Mat& stiffness, const contact::ConstraintSet& cs,
                        const Eigen::Ref<const VectorXd>& lambda) {
  return EffectiveOperator<Mat>(stiffness, stiffness, cs, 0.0, 1.0).matrix(lambda);
}

/// Rows `rows` and columns `cols` of a sparse matrix.
inline SparseMatrix submatrix(const SparseMatrix& a, const std::vector<Index>& rows,
                              const std::vector<Index>& cols) {
  std::vector<Index> row_pos(a.rows(), -1), col_pos(a.cols(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos[rows[i]] = static_cast<Index>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) col_pos[cols[j]] = static_cast<Index>(j);
  std::vector<Eigen::Triplet<double>> trip;
  for (Index c = 0; c < a.outerSize(); ++c) {
    if (col_pos[c] < 0) continue;
    for (SparseMatrix::InnerIterator it(a, c); it; ++it)
      if (row_pos[it.row()] >= 0) trip.emplace_back(row_pos[it.row()], col_pos[c], it.value());
  }
  SparseMatrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

inline double symmetry_defect(const MatrixXd& a) {
  const double scale = a.cwiseAbs().maxCoeff();
  return scale > 0 ? (a - a.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
}

inline double symmetry_defect(const SparseMatrix& a) {
  const SparseMatrix d = a - SparseMatrix(a.transpose());
  double scale = 0, defect = 0;
  for (Index c = 0; c < a.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  for (Index c = 0; c < d.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(d, c); it; ++it) defect = std::max(defect, std::abs(it.value()));
  return scale > 0 ? defect / scale : 0.0;
}

}  // namespace contactrom::linalg
