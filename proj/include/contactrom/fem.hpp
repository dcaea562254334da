#pragma once

// Plane-stress linear elasticity: element matrices (Q4 with 2x2 Gauss, T3 in
// closed form), global assembly with Dirichlet elimination, nodal loads.
// Unit thickness throughout.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "contactrom/mesh.hpp"
#include "contactrom/shape.hpp"

namespace contactrom::fem {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Material {
  double young_modulus = 1.0;
  double poisson_ratio = 0.0;
  double density = 1.0;

  void validate() const {
    if (!(young_modulus > 0)) throw std::invalid_argument("material: Young's modulus must be > 0");
    if (!(density > 0)) throw std::invalid_argument("material: density must be > 0");
    // The plane-stress law is singular at nu = -1; nu = 0.5 is rejected as well.
    if (!(poisson_ratio > -1.0 && poisson_ratio < 0.5))
      throw std::invalid_argument("material: Poisson's ratio must lie in (-1, 0.5)");
  }
};

/// Plane-stress constitutive matrix acting on (e_xx, e_yy, gamma_xy).
inline Eigen::Matrix3d plane_stress_matrix(const Material& mat) {
  const double e = mat.young_modulus, nu = mat.poisson_ratio;
  const double f = e / (1.0 - nu * nu);
  Eigen::Matrix3d d;
  d << f, f * nu, 0, f * nu, f, 0, 0, 0, f * 0.5 * (1.0 - nu);
  return d;
}

/// Strain-displacement matrix from physical shape-function gradients
/// (2 x n). Element DOFs are ordered (u1x, u1y, u2x, u2y, ...).
inline Eigen::MatrixXd strain_matrix(const Eigen::Ref<const Eigen::MatrixXd>& grads) {
  const Index n = grads.cols();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 2 * n);
  for (Index a = 0; a < n; ++a) {
    b(0, 2 * a) = grads(0, a);
    b(1, 2 * a + 1) = grads(1, a);
    b(2, 2 * a) = grads(1, a);
    b(2, 2 * a + 1) = grads(0, a);
  }
  return b;
}

struct ElementMatrices {
  Eigen::MatrixXd stiffness;
  Eigen::MatrixXd mass;
};

class ElementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ElementMatrices element_matrices(const Eigen::Matrix<double, 2, Eigen::Dynamic>& coords,
                                        ElementKind kind, const Material& mat) {
  const Eigen::Matrix3d d = plane_stress_matrix(mat);
  ElementMatrices out;
  if (kind == ElementKind::T3) {
    double area = 0;
    const Eigen::Matrix<double, 2, 3> g = shape::t3_gradients(coords, area);
    if (!(area > 0)) throw ElementError("T3 element has non-positive area");
    const Eigen::MatrixXd b = strain_matrix(g);
    out.stiffness = area * b.transpose() * d * b;
    out.mass = Eigen::MatrixXd::Zero(6, 6);
    const double m = mat.density * area / 12.0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 2; ++k) out.mass(2 * a + k, 2 * c + k) = (a == c ? 2.0 : 1.0) * m;
    return out;
  }
  const Eigen::Matrix<double, 2, 4> xy = coords;
  out.stiffness = Eigen::MatrixXd::Zero(8, 8);
  out.mass = Eigen::MatrixXd::Zero(8, 8);
  for (const auto& gp : shape::kQ4GaussPoints) {
    double det_j = 0;
    const Eigen::Matrix<double, 2, 4> g = shape::q4_gradients(xy, gp[0], gp[1], det_j);
    if (!(det_j > 0)) throw ElementError("Q4 element has a non-positive Jacobian");
    const Eigen::MatrixXd b = strain_matrix(g);
    out.stiffness.noalias() += det_j * b.transpose() * d * b;
    const Eigen::Vector4d n = shape::q4_values(gp[0], gp[1]);
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 4; ++c)
        for (int k = 0; k < 2; ++k) out.mass(2 * a + k, 2 * c + k) += mat.density * det_j * n[a] * n[c];
  }
  return out;
}

/// Global mass and stiffness on the free DOFs of `dofs`, plus the load
/// position vector (filled by the caller; zero after assembly).
struct SystemMatrices {
  SparseMatrix mass;
  SparseMatrix stiffness;
  Eigen::VectorXd load_position;
  Index size() const { return stiffness.rows(); }
};

/// `materials[b]` is used for body id b.
inline SystemMatrices assemble(const Mesh2D& mesh, const std::vector<Material>& materials,
                               const DofMap& dofs) {
  for (const auto& m : materials) m.validate();
  const int per = mesh.element_size();
  std::vector<Eigen::Triplet<double>> kt, mt;
  kt.reserve(static_cast<std::size_t>(mesh.element_count()) * 4 * per * per);
  mt.reserve(kt.capacity());
  for (Index e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements[e];
    const int body = mesh.body_of(el[0]);
    if (body < 0 || body >= static_cast<int>(materials.size()))
      throw std::invalid_argument("assemble: no material for body " + std::to_string(body));
    ElementMatrices em;
    try {
      em = element_matrices(mesh.element_coords(e), mesh.kind, materials[body]);
    } catch (const ElementError& err) {
      throw ElementError("element " + std::to_string(e) + ": " + err.what());
    }
    std::vector<Index> g(2 * per);
    for (int a = 0; a < per; ++a)
      for (int k = 0; k < 2; ++k) g[2 * a + k] = dofs.dof(el[a], k);
    for (int r = 0; r < 2 * per; ++r) {
      if (g[r] < 0) continue;
      for (int c = 0; c < 2 * per; ++c) {
        if (g[c] < 0) continue;
        kt.emplace_back(g[r], g[c], em.stiffness(r, c));
        mt.emplace_back(g[r], g[c], em.mass(r, c));
      }
    }
  }
  SystemMatrices sys;
  sys.stiffness.resize(dofs.free_count, dofs.free_count);
  sys.mass.resize(dofs.free_count, dofs.free_count);
  sys.stiffness.setFromTriplets(kt.begin(), kt.end());
  sys.mass.setFromTriplets(mt.begin(), mt.end());
  sys.load_position = Eigen::VectorXd::Zero(dofs.free_count);
  return sys;
}

inline SystemMatrices assemble(const Mesh2D& mesh, const std::vector<Material>& materials) {
  return assemble(mesh, materials, make_dof_map(mesh));
}

// ---------------------------------------------------------------------------
// Loads
// ---------------------------------------------------------------------------

/// amplitude * sin(angular_frequency * t + phase), or a constant amplitude.
struct Waveform {
  enum class Kind { Constant, Sine };
  Kind kind = Kind::Sine;
  double amplitude = 0.0;
  double angular_frequency = 0.0;
  double phase = 0.0;

  double operator()(double t) const {
    if (kind == Kind::Constant) return amplitude;
    return amplitude * std::sin(angular_frequency * t + phase);
  }

  static Waveform constant(double a) { return {Kind::Constant, a, 0.0, 0.0}; }
  static Waveform sine(double a, double omega, double phase = 0.0) {
    return {Kind::Sine, a, omega, phase};
  }
  static Waveform sine_hz(double a, double hz, double phase = 0.0) {
    return sine(a, 2.0 * std::numbers::pi * hz, phase);
  }
};

/// Identical nodal force on every loaded node: magnitude(t) * direction.
struct LoadSpec {
  std::vector<Index> loaded_nodes;
  Vec2 direction = Vec2::UnitX();
  Waveform magnitude;

  void validate(const DofMap& dofs) const {
    if (std::abs(direction.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("load: direction must be a unit vector");
    for (Index n : loaded_nodes) {
      if (n < 0 || 2 * n + 1 >= dofs.total_count())
        throw std::invalid_argument("load: node " + std::to_string(n) + " does not exist");
      if (dofs.dof(n, 0) < 0)
        throw std::invalid_argument("load: node " + std::to_string(n) + " is Dirichlet-fixed");
    }
  }

  /// Unit spatial pattern (direction on every loaded node).
  Eigen::VectorXd pattern(const DofMap& dofs) const {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(dofs.free_count);
    for (Index n : loaded_nodes)
      for (int k = 0; k < 2; ++k) p[dofs.dof(n, k)] += direction[k];
    return p;
  }
};

/// Superposition of load specs, with the spatial patterns cached.
class LoadHistory {
 public:
  LoadHistory() = default;
  LoadHistory(std::vector<LoadSpec> specs, const DofMap& dofs) : specs_(std::move(specs)) {
    for (const auto& s : specs_) {
      s.validate(dofs);
      patterns_.push_back(s.pattern(dofs));
    }
    size_ = dofs.free_count;
  }

  Eigen::VectorXd operator()(double t) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(size_);
    for (std::size_t i = 0; i < specs_.size(); ++i) f += specs_[i].magnitude(t) * patterns_[i];
    return f;
  }

  /// Amplitude-weighted sum of the patterns; seeds the Krylov bases.
  Eigen::VectorXd position() const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(size_);
    for (std::size_t i = 0; i < specs_.size(); ++i) f += specs_[i].magnitude.amplitude * patterns_[i];
    return f;
  }

  const std::vector<LoadSpec>& specs() const { return specs_; }
  const std::vector<Eigen::VectorXd>& patterns() const { return patterns_; }

  /// Time factors of the individual specs at t.
  Eigen::VectorXd factors(double t) const {
    Eigen::VectorXd a(static_cast<Index>(specs_.size()));
    for (std::size_t i = 0; i < specs_.size(); ++i) a[static_cast<Index>(i)] = specs_[i].magnitude(t);
    return a;
  }
  Index size() const { return size_; }

 private:
  std::vector<LoadSpec> specs_;
  std::vector<Eigen::VectorXd> patterns_;
  Index size_ = 0;
};

inline Eigen::VectorXd load_vector(const LoadSpec& spec, double t, const DofMap& dofs) {
  spec.validate(dofs);
  return spec.magnitude(t) * spec.pattern(dofs);
}

// ---------------------------------------------------------------------------
// Stress
// ---------------------------------------------------------------------------

/// Plane stress from a displacement gradient (du_i/dx_j in row i, column j).
inline Eigen::Matrix2d stress_from_gradient(const Eigen::Matrix2d& grad, const Material& mat) {
  const Eigen::Matrix2d strain = 0.5 * (grad + grad.transpose());
  const Eigen::Vector3d s =
      plane_stress_matrix(mat) * Eigen::Vector3d(strain(0, 0), strain(1, 1), 2.0 * strain(0, 1));
  Eigen::Matrix2d sigma;
  sigma << s[0], s[2], s[2], s[1];
  return sigma;
}

inline double von_mises(const Eigen::Matrix2d& s) {
  return std::sqrt(s(0, 0) * s(0, 0) - s(0, 0) * s(1, 1) + s(1, 1) * s(1, 1) + 3.0 * s(0, 1) * s(0, 1));
}

}  // namespace contactrom::fem
