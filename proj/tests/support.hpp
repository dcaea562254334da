#pragma once

// Shared fixtures: seeded randomness, small meshes and random dense contact
// systems.

#include <algorithm>
#include <array>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "contactrom/contact.hpp"
#include "contactrom/fem.hpp"
#include "contactrom/mesh.hpp"

namespace testing_support {

using contactrom::Index;
using contactrom::Vec2;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Rng {
  explicit Rng(unsigned long long seed) : gen(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  VectorXd vector(Index n, double lo = -1.0, double hi = 1.0) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  MatrixXd matrix(Index r, Index c) {
    MatrixXd a(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) a(i, j) = uniform();
    return a;
  }
  /// Symmetric positive definite with eigenvalues roughly in [shift, shift + n].
  MatrixXd spd(Index n, double shift = 1.0) {
    const MatrixXd g = matrix(n, n);
    return g * g.transpose() + shift * MatrixXd::Identity(n, n);
  }
  Vec2 point(double scale = 1.0) { return {uniform(-scale, scale), uniform(-scale, scale)}; }
  std::mt19937_64 gen;
};

/// Rectangle mesh with the left edge clamped.
inline contactrom::Mesh2D clamped_rect(Index nx, Index ny, double w = 1.0, double h = 1.0) {
  contactrom::Mesh2D mesh = contactrom::build_rect_mesh(nx, ny, w, h).mesh;
  mesh.dirichlet_nodes = contactrom::nodes_where(mesh, [](const Vec2& x) { return x.x() < 1e-12; });
  return mesh;
}

/// Dense n-dimensional system with m node-to-segment constraints on random
/// DOF triples and random reference geometry.
struct DenseContactSystem {
  MatrixXd mass, stiffness;
  contactrom::contact::ConstraintSet cs;
};

inline DenseContactSystem random_contact_system(Rng& rng, Index n, Index m, double curvature = 1.0) {
  DenseContactSystem s;
  s.mass = rng.spd(n, 1.0);
  s.stiffness = rng.spd(n, 5.0);
  s.cs.dimension = n;
  const Index nodes = n / 2;
  for (Index k = 0; k < m; ++k) {
    std::vector<Index> pick;
    while (pick.size() < 3) {
      const Index c = rng.integer(0, static_cast<int>(nodes) - 1);
      if (std::find(pick.begin(), pick.end(), c) == pick.end()) pick.push_back(c);
    }
    std::array<Index, 6> dofs{};
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c) dofs[2 * a + c] = 2 * pick[a] + c;
    auto con = contactrom::contact::node_segment_constraint(rng.point(), rng.point(), rng.point(), dofs);
    con.d *= curvature;
    con.d_sym *= curvature;
    s.cs.constraints.push_back(con);
  }
  return s;
}

}  // namespace testing_support
