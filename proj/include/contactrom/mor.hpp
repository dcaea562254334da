#pragma once

// Model order reduction for the contact problem.
//
// Craig-Bampton: free DOFs are split into masters (every DOF of a contact
// node) and slaves. The basis keeps the masters as identity columns, couples
// the slaves statically (K_SM q_M + K_SS q_S = 0) and adds an orthonormal
// Krylov basis of span{K_SS^-1 f_S, (K_SS^-1 M_SS) K_SS^-1 f_S, ...}:
//
//     Q_CB = [ I_M              0   ]
//            [ -K_SS^-1 K_SM    Q_S ]
//
// Because the constraints live on the master block only, the reduced
// constraint data is the master block itself and the reduced multipliers are
// the physical ones. The plain alternative projects everything onto a Krylov
// basis of the whole free space.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "contactrom/contact.hpp"
#include "contactrom/fem.hpp"
#include "contactrom/linalg.hpp"
#include "contactrom/mesh.hpp"

namespace contactrom::mor {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using linalg::SparseMatrix;

enum class ReductionKind { CraigBampton, PlainKrylov };

inline std::string_view to_string(ReductionKind k) {
  return k == ReductionKind::CraigBampton ? "craig-bampton" : "plain-krylov";
}

/// Orthonormal Arnoldi basis of the Krylov space of K^-1 M started at
/// K^-1 f. Modified Gram-Schmidt with a second pass; stops early when the new
/// direction falls below `breakdown_tol` relative to its length before
/// orthogonalisation, so fewer than `dim` columns may be returned.
inline MatrixXd arnoldi_basis(const SparseMatrix& k, const SparseMatrix& m, const VectorXd& f,
                              Index dim, double breakdown_tol = 1e-12) {
  if (dim < 1) throw std::invalid_argument("arnoldi_basis: dimension must be >= 1");
  if (k.rows() != k.cols() || m.rows() != k.rows() || f.size() != k.rows())
    throw std::invalid_argument("arnoldi_basis: dimension mismatch");
  if (f.size() == 0 || f.isZero(0.0)) throw std::invalid_argument("arnoldi_basis: zero start vector");
  dim = std::min(dim, k.rows());
  linalg::SpdSolver<SparseMatrix> solver;
  try {
    solver.compute(k);
  } catch (const linalg::FactorizationError&) {
    throw linalg::FactorizationError("arnoldi_basis: stiffness block is singular");
  }
  MatrixXd q(k.rows(), dim);
  VectorXd v = solver.solve(f);
  q.col(0) = v / v.norm();
  Index built = 1;
  for (Index j = 1; j < dim; ++j) {
    v = solver.solve(m * q.col(j - 1));
    const double before = v.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Index i = 0; i < j; ++i) v -= q.col(i).dot(v) * q.col(i);
    const double after = v.norm();
    if (!(after > breakdown_tol * before)) break;
    q.col(j) = v / after;
    built = j + 1;
  }
  return q.leftCols(built);
}

/// Q_CB in free-DOF row numbering; columns are the masters (in
/// partition.master_dofs order) followed by the columns of q_s.
inline MatrixXd craig_bampton(const DofPartition& part, const SparseMatrix& k, const MatrixXd& q_s) {
  const Index nm = part.master_count(), ns = part.slave_count();
  if (k.rows() != part.size() || q_s.rows() != ns)
    throw std::invalid_argument("craig_bampton: dimension mismatch");
  MatrixXd q = MatrixXd::Zero(part.size(), nm + q_s.cols());
  for (Index p = 0; p < nm; ++p) q(part.master_dofs[p], p) = 1.0;
  if (ns == 0) return q;
  if (nm > 0) {
    const SparseMatrix kss = linalg::submatrix(k, part.slave_dofs, part.slave_dofs);
    const SparseMatrix ksm = linalg::submatrix(k, part.slave_dofs, part.master_dofs);
    linalg::SpdSolver<SparseMatrix> solver;
    try {
      solver.compute(kss);
    } catch (const linalg::FactorizationError&) {
      throw linalg::FactorizationError("craig_bampton: K_SS is singular");
    }
    const MatrixXd coupling = -MatrixXd(solver.solve(MatrixXd(ksm)));
    for (Index s = 0; s < ns; ++s) q.row(part.slave_dofs[s]).head(nm) = coupling.row(s);
  }
  for (Index s = 0; s < ns; ++s) q.row(part.slave_dofs[s]).tail(q_s.cols()) = q_s.row(s);
  return q;
}

/// Reduced operators. For Craig-Bampton models the first `master_count()`
/// reduced coordinates are the master DOFs themselves.
struct ReducedModel {
  ReductionKind kind = ReductionKind::CraigBampton;
  MatrixXd basis;  // N x n
  MatrixXd mass;
  MatrixXd stiffness;
  contact::ConstraintSet constraints;
  VectorXd load_position;
  DofPartition partition;  // empty for plain Krylov
  Index krylov_dim = 0;

  Index size() const { return basis.cols(); }
  Index full_size() const { return basis.rows(); }
  Index master_count() const { return kind == ReductionKind::CraigBampton ? partition.master_count() : 0; }
};

/// Constraint data in reduced coordinates. Craig-Bampton: the local DOFs are
/// renumbered to their master positions (no arithmetic). Plain Krylov:
/// D^ = Q_loc^T D Q_loc and c^ = Q_loc^T c with Q_loc the constraint rows.
inline contact::ConstraintSet reduce_constraints(const contact::ConstraintSet& full, const ReducedModel& rm) {
  if (full.dimension != rm.full_size())
    throw std::invalid_argument("reduce_constraints: constraint dimension does not match the basis");
  contact::ConstraintSet out;
  out.dimension = rm.size();
  out.constraints.reserve(full.constraints.size());
  for (const auto& con : full.constraints) {
    contact::QuadraticConstraint r;
    r.b = con.b;
    if (rm.kind == ReductionKind::CraigBampton) {
      r.dofs.resize(con.dofs.size());
      for (std::size_t i = 0; i < con.dofs.size(); ++i) {
        const Index p = rm.partition.master_position(con.dofs[i]);
        if (p < 0)
          throw std::invalid_argument("reduce_constraints: constraint DOF " + std::to_string(con.dofs[i]) +
                                      " is not a master DOF");
        r.dofs[i] = p;
      }
      r.d = con.d;
      r.d_sym = con.d_sym;
      r.c = con.c;
    } else {
      MatrixXd q_loc(con.local_size(), rm.size());
      for (Index i = 0; i < con.local_size(); ++i) q_loc.row(i) = rm.basis.row(con.dofs[i]);
      r.dofs.resize(rm.size());
      for (Index i = 0; i < rm.size(); ++i) r.dofs[i] = i;
      r.d = q_loc.transpose() * con.d * q_loc;
      r.d_sym = r.d + r.d.transpose();
      r.c = q_loc.transpose() * con.c;
    }
    out.constraints.push_back(std::move(r));
  }
  return out;
}

/// Congruence transformation of M and K, projected load pattern and reduced
/// constraints for an arbitrary basis.
inline ReducedModel reduce(const fem::SystemMatrices& sys, const contact::ConstraintSet& cs,
                           MatrixXd basis, ReductionKind kind, DofPartition part = {},
                           Index krylov_dim = 0) {
  if (basis.rows() != sys.size()) throw std::invalid_argument("reduce: basis has the wrong row count");
  ReducedModel rm;
  rm.kind = kind;
  rm.basis = std::move(basis);
  rm.partition = std::move(part);
  rm.krylov_dim = krylov_dim;
  const MatrixXd mq = sys.mass * rm.basis;
  const MatrixXd kq = sys.stiffness * rm.basis;
  rm.mass = rm.basis.transpose() * mq;
  rm.stiffness = rm.basis.transpose() * kq;
  // Symmetrise away round-off so the dense LDL^T sees an exactly symmetric matrix.
  rm.mass = 0.5 * (rm.mass + rm.mass.transpose()).eval();
  rm.stiffness = 0.5 * (rm.stiffness + rm.stiffness.transpose()).eval();
  rm.load_position = rm.basis.transpose() * sys.load_position;
  rm.constraints = reduce_constraints(cs, rm);
  return rm;
}

/// Craig-Bampton model with `n_krylov` slave Krylov vectors seeded by the
/// slave part of sys.load_position.
inline ReducedModel build_craig_bampton(const fem::SystemMatrices& sys, const contact::ConstraintSet& cs,
                                        const DofPartition& part, Index n_krylov) {
  MatrixXd q_s(part.slave_count(), 0);
  if (n_krylov > 0 && part.slave_count() > 0) {
    const SparseMatrix kss = linalg::submatrix(sys.stiffness, part.slave_dofs, part.slave_dofs);
    const SparseMatrix mss = linalg::submatrix(sys.mass, part.slave_dofs, part.slave_dofs);
    VectorXd f_s(part.slave_count());
    for (Index s = 0; s < part.slave_count(); ++s) f_s[s] = sys.load_position[part.slave_dofs[s]];
    q_s = arnoldi_basis(kss, mss, f_s, n_krylov);
  }
  MatrixXd q = craig_bampton(part, sys.stiffness, q_s);
  return reduce(sys, cs, std::move(q), ReductionKind::CraigBampton, part, q_s.cols());
}

/// Krylov basis of the whole free space, without contact treatment.
inline ReducedModel build_plain_krylov(const fem::SystemMatrices& sys, const contact::ConstraintSet& cs,
                                       Index dim) {
  MatrixXd q = arnoldi_basis(sys.stiffness, sys.mass, sys.load_position, dim);
  const Index built = q.cols();
  return reduce(sys, cs, std::move(q), ReductionKind::PlainKrylov, {}, built);
}

/// q = Q w^. For Craig-Bampton models the master entries are copied, not
/// computed.
inline VectorXd expand(const ReducedModel& rm, const Eigen::Ref<const VectorXd>& w) {
  if (w.size() != rm.size()) throw std::invalid_argument("expand: reduced vector has the wrong size");
  VectorXd q = rm.basis * w;
  if (rm.kind == ReductionKind::CraigBampton)
    for (Index p = 0; p < rm.partition.master_count(); ++p) q[rm.partition.master_dofs[p]] = w[p];
  return q;
}

/// Selected rows of the expansion, for sensors that only need a few DOFs.
class TrackedRows {
 public:
  TrackedRows() = default;
  TrackedRows(const ReducedModel& rm, std::vector<Index> rows) : rows_(std::move(rows)) {
    q_.resize(static_cast<Index>(rows_.size()), rm.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) q_.row(static_cast<Index>(i)) = rm.basis.row(rows_[i]);
  }
  const std::vector<Index>& rows() const { return rows_; }
  VectorXd operator()(const Eigen::Ref<const VectorXd>& w) const { return q_ * w; }

 private:
  std::vector<Index> rows_;
  MatrixXd q_;
};

/// Least-squares reduced coordinates of a full vector.
inline VectorXd project_state(const ReducedModel& rm, const Eigen::Ref<const VectorXd>& q) {
  if (q.size() != rm.full_size()) throw std::invalid_argument("project_state: full vector has the wrong size");
  if (q.isZero(0.0)) return VectorXd::Zero(rm.size());
  return rm.basis.colPivHouseholderQr().solve(q);
}

// ---------------------------------------------------------------------------
// Binary sidecar: magic, int64 header, row-major float64 payloads.
// ---------------------------------------------------------------------------

inline constexpr char kSidecarMagic[8] = {'C', 'R', 'O', 'M', 'R', 'D', 'M', '1'};

namespace detail {

inline void put_i64(std::ostream& out, std::int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline std::int64_t get_i64(std::istream& in) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw std::runtime_error("sidecar: truncated file");
  return v;
}
inline double get_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw std::runtime_error("sidecar: truncated file");
  return v;
}

inline void put_matrix(std::ostream& out, const MatrixXd& a) {
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) put_f64(out, a(i, j));
}
inline MatrixXd get_matrix(std::istream& in, Index rows, Index cols) {
  MatrixXd a(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) a(i, j) = get_f64(in);
  return a;
}

inline Index checked_dim(std::int64_t v, const char* what) {
  if (v < 0 || v > (std::int64_t{1} << 32)) throw std::runtime_error(std::string("sidecar: bad ") + what);
  return static_cast<Index>(v);
}

}  // namespace detail

inline void write_sidecar(std::ostream& out, const ReducedModel& rm) {
  using namespace detail;
  out.write(kSidecarMagic, 8);
  put_i64(out, rm.kind == ReductionKind::CraigBampton ? 0 : 1);
  put_i64(out, rm.full_size());
  put_i64(out, rm.size());
  put_i64(out, rm.partition.master_count());
  put_i64(out, rm.partition.slave_count());
  put_i64(out, rm.constraints.count());
  put_i64(out, rm.krylov_dim);
  put_matrix(out, rm.basis);
  put_matrix(out, rm.mass);
  put_matrix(out, rm.stiffness);
  put_matrix(out, rm.load_position);
  for (Index d : rm.partition.master_dofs) put_i64(out, d);
  for (Index d : rm.partition.slave_dofs) put_i64(out, d);
  for (const auto& con : rm.constraints.constraints) {
    put_i64(out, con.local_size());
    for (Index d : con.dofs) put_i64(out, d);
    put_matrix(out, con.d);
    put_matrix(out, con.c);
    put_f64(out, con.b);
  }
}

inline ReducedModel read_sidecar(std::istream& in) {
  using namespace detail;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kSidecarMagic, 8) != 0)
    throw std::runtime_error("sidecar: bad magic");
  ReducedModel rm;
  const std::int64_t kind = get_i64(in);
  if (kind != 0 && kind != 1) throw std::runtime_error("sidecar: bad reduction kind");
  rm.kind = kind == 0 ? ReductionKind::CraigBampton : ReductionKind::PlainKrylov;
  const Index big_n = checked_dim(get_i64(in), "full dimension");
  const Index n = checked_dim(get_i64(in), "reduced dimension");
  const Index nm = checked_dim(get_i64(in), "master count");
  const Index ns = checked_dim(get_i64(in), "slave count");
  const Index m = checked_dim(get_i64(in), "constraint count");
  rm.krylov_dim = checked_dim(get_i64(in), "Krylov dimension");
  rm.basis = get_matrix(in, big_n, n);
  rm.mass = get_matrix(in, n, n);
  rm.stiffness = get_matrix(in, n, n);
  rm.load_position = get_matrix(in, n, 1);
  rm.partition.master_dofs.resize(nm);
  rm.partition.slave_dofs.resize(ns);
  for (auto& d : rm.partition.master_dofs) d = checked_dim(get_i64(in), "master DOF");
  for (auto& d : rm.partition.slave_dofs) d = checked_dim(get_i64(in), "slave DOF");
  if (nm + ns > 0) {
    if (nm + ns != big_n) throw std::runtime_error("sidecar: partition does not cover the free DOFs");
    rm.partition.full_to_reordered.assign(big_n, -1);
    for (Index p = 0; p < nm; ++p) rm.partition.full_to_reordered.at(rm.partition.master_dofs[p]) = p;
    for (Index p = 0; p < ns; ++p) rm.partition.full_to_reordered.at(rm.partition.slave_dofs[p]) = nm + p;
  }
  rm.constraints.dimension = n;
  for (Index k = 0; k < m; ++k) {
    contact::QuadraticConstraint con;
    const Index ls = checked_dim(get_i64(in), "constraint size");
    con.dofs.resize(ls);
    for (auto& d : con.dofs) {
      d = checked_dim(get_i64(in), "constraint DOF");
      if (d >= n) throw std::runtime_error("sidecar: constraint DOF out of range");
    }
    con.d = get_matrix(in, ls, ls);
    con.d_sym = con.d + con.d.transpose();
    con.c = get_matrix(in, ls, 1);
    con.b = get_f64(in);
    rm.constraints.constraints.push_back(std::move(con));
  }
  return rm;
}

inline void save_sidecar(const std::string& path, const ReducedModel& rm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_sidecar(out, rm);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ReducedModel load_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_sidecar(in);
}

}  // namespace contactrom::mor
