#pragma once

// Linear complementarity problems
//
//     find z >= 0  with  w = B + A z >= 0  and  z^T w = 0.
//
// lemke() is Lemke's complementary pivoting method with covering vector
// e = (1, ..., 1) and a lexicographic ratio test. lcp_oracle() enumerates
// all 2^m active sets and is only meant for verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

namespace contactrom::lcp {

using Eigen::Index;

enum class Status { Solved, RayTermination, CycleLimit, NoSolution };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::Solved: return "solved";
    case Status::RayTermination: return "ray-termination";
    case Status::CycleLimit: return "cycle-limit";
    case Status::NoSolution: return "no-solution";
  }
  return "unknown";
}

struct LcpProblem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;

  Index size() const { return b.size(); }

  void validate() const {
    if (a.rows() != a.cols() || a.rows() != b.size())
      throw std::invalid_argument("LCP: A must be square and match B");
    if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("LCP: non-finite data");
  }
};

struct LcpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd w;
  Status status = Status::NoSolution;
  int pivots = 0;
};

/// Independent re-check of a candidate solution. Tolerances scale with the
/// problem data: w is compared against 1e-9 (|A|max |z|inf + |B|max).
struct Certificate {
  double min_z = 0.0;
  double min_w = 0.0;
  double complementarity = 0.0;
  bool ok = false;
};

inline Certificate verify(const LcpProblem& prob, const Eigen::VectorXd& z, double rel_tol = 1e-9) {
  Certificate cert;
  if (z.size() != prob.size()) return cert;
  const Eigen::VectorXd w = prob.b + prob.a * z;
  const double zmax = z.size() ? z.cwiseAbs().maxCoeff() : 0.0;
  const double amax = prob.a.size() ? prob.a.cwiseAbs().maxCoeff() : 0.0;
  const double bmax = prob.b.size() ? prob.b.cwiseAbs().maxCoeff() : 0.0;
  const double w_scale = std::max(amax * zmax + bmax, std::numeric_limits<double>::min());
  cert.min_z = z.size() ? z.minCoeff() : 0.0;
  cert.min_w = w.size() ? w.minCoeff() : 0.0;
  cert.complementarity = std::abs(z.dot(w));
  cert.ok = z.allFinite() && cert.min_z >= -rel_tol * zmax && cert.min_w >= -rel_tol * w_scale &&
            cert.complementarity <= rel_tol * (zmax * w_scale + z.norm() * w.norm()) * z.size() +
                                        std::numeric_limits<double>::min();
  return cert;
}

namespace detail {

/// Dense tableau over the variables w (0..m-1), z (m..2m-1), z0 (2m).
class LemkeTableau {
 public:
  LemkeTableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& b)
      : m_(b.size()), t_(m_, 2 * m_ + 1), q_(b), basis_(m_) {
    t_.setZero();
    t_.leftCols(m_).setIdentity();
    t_.middleCols(m_, m_) = -a;
    t_.col(2 * m_).setConstant(-1.0);
    for (Index i = 0; i < m_; ++i) basis_[i] = i;
  }

  Index z0() const { return 2 * m_; }
  Index complement(Index var) const { return var < m_ ? var + m_ : var - m_; }

  /// Lexicographic minimum of (q_i, B^-1_i) / d_i over rows with d_i > tol.
  /// Returns -1 when the column has no positive entry (secondary ray).
  Index ratio_test(Index col, double tol) const {
    Index best = -1;
    for (Index i = 0; i < m_; ++i) {
      const double d = t_(i, col);
      if (d <= tol) continue;
      if (best < 0) {
        best = i;
        continue;
      }
      const double db = t_(best, col);
      const double ri = q_[i] / d, rb = q_[best] / db;
      if (ri < rb - tol) {
        best = i;
      } else if (ri <= rb + tol) {
        // Tie on the primary ratio: leave with z0 if it is a candidate,
        // otherwise compare the basis-inverse rows.
        if (basis_[i] == z0()) {
          best = i;
          continue;
        }
        if (basis_[best] == z0()) continue;
        for (Index k = 0; k < m_; ++k) {
          const double li = t_(i, k) / d, lb = t_(best, k) / db;
          if (li < lb - tol) {
            best = i;
            break;
          }
          if (li > lb + tol) break;
        }
      }
    }
    return best;
  }

  /// Row achieving the lexicographic minimum of (q_i, B^-1_i).
  Index most_negative_row(double tol) const {
    Index best = 0;
    for (Index i = 1; i < m_; ++i) {
      if (q_[i] < q_[best] - tol) {
        best = i;
      } else if (q_[i] <= q_[best] + tol) {
        for (Index k = 0; k < m_; ++k) {
          if (t_(i, k) < t_(best, k) - tol) {
            best = i;
            break;
          }
          if (t_(i, k) > t_(best, k) + tol) break;
        }
      }
    }
    return best;
  }

  /// Pivots `col` into row `row`; returns the variable that left the basis.
  Index pivot(Index row, Index col) {
    const double p = t_(row, col);
    t_.row(row) /= p;
    q_[row] /= p;
    for (Index i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = t_(i, col);
      if (f == 0.0) continue;
      t_.row(i) -= f * t_.row(row);
      q_[i] -= f * q_[row];
    }
    const Index leaving = basis_[row];
    basis_[row] = col;
    return leaving;
  }

  Eigen::VectorXd z() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m_);
    for (Index i = 0; i < m_; ++i)
      if (basis_[i] >= m_ && basis_[i] < 2 * m_) out[basis_[i] - m_] = std::max(q_[i], 0.0);
    return out;
  }

 private:
  Index m_;
  Eigen::MatrixXd t_;
  Eigen::VectorXd q_;
  std::vector<Index> basis_;
};

}  // namespace detail

struct LemkeOptions {
  double pivot_tol = 1e-12;  // on the internally normalised data
  int max_pivots_per_row = 50;
};

inline LcpSolution lemke(const LcpProblem& prob, const LemkeOptions& opt = {}) {
  prob.validate();
  const Index m = prob.size();
  if (m < 1) throw std::invalid_argument("lemke: empty problem");
  LcpSolution sol;
  auto finish = [&](Eigen::VectorXd z, Status status) {
    sol.w = prob.b + prob.a * z;
    sol.z = std::move(z);
    sol.status = status;
    return sol;
  };
  if (prob.b.minCoeff() >= 0.0) return finish(Eigen::VectorXd::Zero(m), Status::Solved);

  // Normalising A and B by a common factor leaves z unchanged.
  double scale = std::max(prob.a.cwiseAbs().maxCoeff(), prob.b.cwiseAbs().maxCoeff());
  if (!(scale > 0.0)) scale = 1.0;
  detail::LemkeTableau tab(prob.a / scale, prob.b / scale);
  const double tol = opt.pivot_tol;
  const int max_pivots = opt.max_pivots_per_row * static_cast<int>(m);

  Index leaving = tab.pivot(tab.most_negative_row(tol), tab.z0());
  sol.pivots = 1;
  Index entering = tab.complement(leaving);
  while (sol.pivots < max_pivots) {
    const Index row = tab.ratio_test(entering, tol);
    if (row < 0) return finish(tab.z(), Status::RayTermination);
    leaving = tab.pivot(row, entering);
    ++sol.pivots;
    if (leaving == tab.z0()) return finish(tab.z(), Status::Solved);
    entering = tab.complement(leaving);
  }
  return finish(tab.z(), Status::CycleLimit);
}

/// Brute-force enumeration: the first active set (in increasing bitmask
/// order, starting with the empty set) whose principal solve is feasible.
inline LcpSolution lcp_oracle(const LcpProblem& prob, double rel_tol = 1e-10) {
  prob.validate();
  const Index m = prob.size();
  if (m > 12) throw std::invalid_argument("lcp_oracle: enumeration is limited to m <= 12");
  const double amax = m ? prob.a.cwiseAbs().maxCoeff() : 0.0;
  const double bmax = m ? prob.b.cwiseAbs().maxCoeff() : 0.0;
  LcpSolution sol;
  sol.z = Eigen::VectorXd::Zero(m);
  sol.w = prob.b;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<Index> act;
    for (Index i = 0; i < m; ++i)
      if (mask & (1u << i)) act.push_back(i);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    if (!act.empty()) {
      const Index k = static_cast<Index>(act.size());
      Eigen::MatrixXd sub(k, k);
      Eigen::VectorXd rhs(k);
      for (Index i = 0; i < k; ++i) {
        rhs[i] = -prob.b[act[i]];
        for (Index j = 0; j < k; ++j) sub(i, j) = prob.a(act[i], act[j]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd za = lu.solve(rhs);
      for (Index i = 0; i < k; ++i) z[act[i]] = za[i];
    }
    const double zmax = z.cwiseAbs().maxCoeff();
    const double tol_z = rel_tol * zmax;
    const double tol_w = rel_tol * (amax * zmax + bmax);
    if (z.minCoeff() < -tol_z) continue;
    const Eigen::VectorXd w = prob.b + prob.a * z;
    bool feasible = true;
    for (Index i = 0; i < m && feasible; ++i)
      if (!(mask & (1u << i)) && w[i] < -tol_w) feasible = false;
    if (!feasible) continue;
    sol.z = z.cwiseMax(0.0);
    sol.w = prob.b + prob.a * sol.z;
    sol.status = Status::Solved;
    return sol;
  }
  sol.status = Status::NoSolution;
  return sol;
}

}  // namespace contactrom::lcp
