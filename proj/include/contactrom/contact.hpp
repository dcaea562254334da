#pragma once

/**
 * @file contact.hpp
 * @brief Node-to-segment contact: angular gap, quadratic constraint data
 *        and the selecting-function update.
 *
 * For a segment (p, p~) and a node r the angular gap is
 *
 *     M(p, p~, r) = n^T (r - p),   n = R (p~ - p),   R = [0 -1; 1 0].
 *
 * n is deliberately not normalised, so M scales with the segment length and
 * the associated multiplier scales inversely. Writing every position as
 * reference + displacement, M is exactly quadratic in the displacements of
 * the three nodes involved:
 *
 *     M = x^T D x + c^T x + b,   x = (u_p, u_p~, u_r).
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "contactrom/mesh.hpp"

namespace contactrom::contact {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Vec2 rotate_ccw(const Vec2& v) { return {-v.y(), v.x()}; }

inline Vec2 segment_normal(const Vec2& p, const Vec2& p_tilde) {
  if (p == p_tilde) throw GeometryError("segment_normal: coincident segment end points");
  return rotate_ccw(p_tilde - p);
}

inline double angular_gap(const Vec2& p, const Vec2& p_tilde, const Vec2& r) {
  return segment_normal(p, p_tilde).dot(r - p);
}

/// Parameter alpha of the projection of r onto the line through p, p~:
/// proj(r) = (1 - alpha) p + alpha p~.
inline double projection_parameter(const Vec2& p, const Vec2& p_tilde, const Vec2& r) {
  const Vec2 t = p_tilde - p;
  return t.dot(r - p) / t.squaredNorm();
}

/// One scalar constraint x^T D x + c^T x + b with x gathered from `dofs`.
/// D is stored unsymmetrised; `d_sym` = D + D^T is what enters S(lambda).
struct QuadraticConstraint {
  std::vector<Index> dofs;
  Eigen::MatrixXd d;
  Eigen::MatrixXd d_sym;
  Eigen::VectorXd c;
  double b = 0.0;

  Index local_size() const { return static_cast<Index>(dofs.size()); }

  Eigen::VectorXd gather(const Eigen::Ref<const Eigen::VectorXd>& q) const {
    Eigen::VectorXd x(local_size());
    for (Index i = 0; i < local_size(); ++i) x[i] = q[dofs[i]];
    return x;
  }

  double value(const Eigen::Ref<const Eigen::VectorXd>& q) const {
    const Eigen::VectorXd x = gather(q);
    return x.dot(d * x) + c.dot(x) + b;
  }

  /// Gradient of the constraint in the owning space: (D + D^T) q + c,
  /// scattered into a vector of length `n`.
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& q, Index n) const {
    const Eigen::VectorXd loc = d_sym * gather(q) + c;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < local_size(); ++i) g[dofs[i]] += loc[i];
    return g;
  }
};

/// m quadratic constraints acting on an n-dimensional displacement space.
struct ConstraintSet {
  Index dimension = 0;
  std::vector<QuadraticConstraint> constraints;

  Index count() const { return static_cast<Index>(constraints.size()); }

  /// Dense C (m x n), rows c_k^T.
  Eigen::MatrixXd linear_matrix() const {
    Eigen::MatrixXd cm = Eigen::MatrixXd::Zero(count(), dimension);
    for (Index k = 0; k < count(); ++k) {
      const auto& con = constraints[k];
      for (Index i = 0; i < con.local_size(); ++i) cm(k, con.dofs[i]) += con.c[i];
    }
    return cm;
  }

  Eigen::VectorXd offsets() const {
    Eigen::VectorXd b(count());
    for (Index k = 0; k < count(); ++k) b[k] = constraints[k].b;
    return b;
  }

  /// Dense D_k (n x n); for tests and small problems only.
  Eigen::MatrixXd dense_quadratic(Index k, bool symmetrised = false) const {
    const auto& con = constraints[k];
    const Eigen::MatrixXd& loc = symmetrised ? con.d_sym : con.d;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dimension, dimension);
    for (Index i = 0; i < con.local_size(); ++i)
      for (Index j = 0; j < con.local_size(); ++j) out(con.dofs[i], con.dofs[j]) += loc(i, j);
    return out;
  }

  /// C^T lambda without forming C.
  Eigen::VectorXd linear_transpose_times(const Eigen::Ref<const Eigen::VectorXd>& lambda) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dimension);
    for (Index k = 0; k < count(); ++k) {
      const auto& con = constraints[k];
      for (Index i = 0; i < con.local_size(); ++i) out[con.dofs[i]] += lambda[k] * con.c[i];
    }
    return out;
  }
};

/// Local quadratic expansion of M(p, p~, r) around the reference positions.
/// Local DOF order: (p_x, p_y, p~_x, p~_y, r_x, r_y).
inline QuadraticConstraint node_segment_constraint(const Vec2& p0, const Vec2& p_tilde0,
                                                   const Vec2& r0,
                                                   const std::array<Index, 6>& dofs) {
  // M = a^T R^T e with a = p~ - p and e = r - p (deformed).
  Eigen::Matrix2d rot_t;
  rot_t << 0, 1, -1, 0;
  Eigen::Matrix<double, 2, 6> sel_a = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 6> sel_e = Eigen::Matrix<double, 2, 6>::Zero();
  sel_a.block<2, 2>(0, 0) = -Eigen::Matrix2d::Identity();
  sel_a.block<2, 2>(0, 2) = Eigen::Matrix2d::Identity();
  sel_e.block<2, 2>(0, 0) = -Eigen::Matrix2d::Identity();
  sel_e.block<2, 2>(0, 4) = Eigen::Matrix2d::Identity();
  const Vec2 a0 = p_tilde0 - p0, e0 = r0 - p0;

  QuadraticConstraint con;
  con.dofs.assign(dofs.begin(), dofs.end());
  con.b = a0.dot(rot_t * e0);
  con.c = sel_a.transpose() * (rot_t * e0) + sel_e.transpose() * (rot_t.transpose() * a0);
  con.d = sel_a.transpose() * rot_t * sel_e;
  con.d_sym = con.d + con.d.transpose();
  return con;
}

/// One constraint per penetrating node against its selected segment, in
/// free-DOF numbering. Every node involved must be free.
inline QuadraticConstraint assemble_constraint(const Mesh2D& mesh, const ContactPairing& pairing,
                                               const DofMap& dofs, Index k) {
  const Index r = pairing.nodes[k];
  const Segment& seg = pairing.segments[pairing.selecting[k]];
  std::array<Index, 6> g{};
  const std::array<Index, 3> nodes{seg.start, seg.end, r};
  for (int a = 0; a < 3; ++a) {
    for (int c = 0; c < 2; ++c) {
      g[2 * a + c] = dofs.dof(nodes[a], c);
      if (g[2 * a + c] < 0)
        throw MeshError("contact node " + std::to_string(nodes[a]) + " is Dirichlet-fixed");
    }
  }
  return node_segment_constraint(mesh.nodes[seg.start], mesh.nodes[seg.end], mesh.nodes[r], g);
}

inline ConstraintSet assemble_constraints(const Mesh2D& mesh, const ContactPairing& pairing,
                                          const DofMap& dofs) {
  pairing.validate(mesh.node_count());
  ConstraintSet cs;
  cs.dimension = dofs.free_count;
  cs.constraints.reserve(pairing.nodes.size());
  for (Index k = 0; k < pairing.constraint_count(); ++k)
    cs.constraints.push_back(assemble_constraint(mesh, pairing, dofs, k));
  return cs;
}

inline Eigen::VectorXd evaluate_gap(const ConstraintSet& cs,
                                    const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (q.size() != cs.dimension)
    throw std::invalid_argument("evaluate_gap: displacement has size " + std::to_string(q.size()) +
                                ", expected " + std::to_string(cs.dimension));
  Eigen::VectorXd g(cs.count());
  for (Index k = 0; k < cs.count(); ++k) g[k] = cs.constraints[k].value(q);
  return g;
}

// ---------------------------------------------------------------------------
// Pairing update
// ---------------------------------------------------------------------------

/// Current position of `node` for free-DOF displacement q (fixed DOFs are 0).
inline Vec2 deformed_position(const Mesh2D& mesh, const DofMap& dofs,
                              const Eigen::Ref<const Eigen::VectorXd>& q, Index node) {
  Vec2 x = mesh.nodes[node];
  for (int c = 0; c < 2; ++c) {
    const Index d = dofs.dof(node, c);
    if (d >= 0) x[c] += q[d];
  }
  return x;
}

inline double mesh_diameter(const Mesh2D& mesh) {
  if (mesh.nodes.empty()) return 0.0;
  Vec2 lo = mesh.nodes.front(), hi = lo;
  for (const auto& x : mesh.nodes) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  return (hi - lo).norm();
}

struct PairingUpdate {
  ContactPairing pairing;
  std::vector<Index> changed;  // node positions that switched segment
  std::vector<Index> skipped;  // node positions with a degenerate deformed segment
};

inline constexpr double kDefaultPairingTolerance = 0.1;

/// One sweep over the contact nodes: a node whose projection parameter on
/// its deformed segment leaves [-tol, 1 + tol] moves to the neighbouring
/// segment in the list (when there is one).
inline PairingUpdate update_pairing(const ContactPairing& pairing, const Mesh2D& mesh,
                                    const DofMap& dofs,
                                    const Eigen::Ref<const Eigen::VectorXd>& q,
                                    double tol = kDefaultPairingTolerance) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("update_pairing: tol must be in (0, 1)");
  PairingUpdate out{pairing, {}, {}};
  const double eps_geom = 1e-12 * mesh_diameter(mesh);
  const Index n_seg = static_cast<Index>(pairing.segments.size());
  for (Index i = 0; i < pairing.constraint_count(); ++i) {
    const Index j = pairing.selecting[i];
    const Segment& seg = pairing.segments[j];
    const Vec2 p = deformed_position(mesh, dofs, q, seg.start);
    const Vec2 pt = deformed_position(mesh, dofs, q, seg.end);
    if ((pt - p).norm() < eps_geom) {
      out.skipped.push_back(i);
      continue;
    }
    const double alpha = projection_parameter(p, pt, deformed_position(mesh, dofs, q, pairing.nodes[i]));
    Index next = j;
    if (alpha < -tol && j > 0) next = j - 1;
    if (alpha > 1.0 + tol && j < n_seg - 1) next = j + 1;
    const Segment& cand = pairing.segments[next];
    if (next != j && cand.start != pairing.nodes[i] && cand.end != pairing.nodes[i]) {
      out.pairing.selecting[i] = next;
      out.changed.push_back(i);
    }
  }
  if (!out.changed.empty()) ++out.pairing.version;
  return out;
}

}  // namespace contactrom::contact
