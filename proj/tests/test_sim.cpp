#include <gtest/gtest.h>

#include "contactrom/generators.hpp"
#include "contactrom/sim.hpp"
#include "support.hpp"

using namespace contactrom;
using Eigen::VectorXd;

namespace {

sim::Scenario small_crack(Index n, double t_end, sim::Mode mode) {
  sim::Scenario sc = gen::crack_problem({.nx = n, .ny = n, .t_end = t_end}).scenario;
  sc.mode = mode;
  return sc;
}

double rel_max(const VectorXd& a, const VectorXd& ref, double scale) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);
}

}  // namespace

TEST(Run, UnloadedBodyStaysAtRest) {
  sim::Scenario sc = small_crack(6, 1.0, sim::Mode::Full);
  sc.loads.clear();
  sc.keep_states = true;
  const sim::Trajectory tr = sim::run(sc);
  ASSERT_TRUE(tr.ok) << tr.message;
  ASSERT_EQ(tr.steps.size(), 21u);
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    EXPECT_TRUE(tr.steps[i].q.isZero(0.0)) << i;
    EXPECT_TRUE(tr.steps[i].lambda.isZero(0.0)) << i;
    EXPECT_EQ(tr.steps[i].iterations, i < 2 ? 0 : 1) << i;
  }
}

TEST(Run, ColumnsAndRows) {
  const sim::Scenario sc = small_crack(6, 0.5, sim::Mode::Full);
  const sim::Trajectory tr = sim::run(sc);
  ASSERT_TRUE(tr.ok);
  const std::vector<std::string> head{"t", "ux_" + std::to_string(sc.sensors.displacement_nodes[0])};
  EXPECT_EQ(tr.columns[0], head[0]);
  EXPECT_EQ(tr.columns[1], head[1]);
  EXPECT_EQ(tr.columns.back(), "g_" + std::to_string(tr.constraint_count - 1));
  for (const auto& s : tr.steps) EXPECT_EQ(s.row.size(), tr.columns.size());
  EXPECT_EQ(tr.steps[3].t, sc.time.at(3));
}

TEST(Run, CertificateHoldsAndContactActivates) {
  const sim::Trajectory tr = sim::run(small_crack(10, 20.0, sim::Mode::Full));
  ASSERT_TRUE(tr.ok) << tr.message;
  EXPECT_EQ(tr.certificate_failures(), 0);
  int active = 0;
  for (std::size_t i = 2; i < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    if (s.lambda.maxCoeff() > 0) ++active;
    EXPECT_LE(s.iterations, 6) << s.t;
  }
  EXPECT_GT(active, 20);
}

TEST(Run, Deterministic) {
  const sim::Scenario sc = small_crack(8, 4.0, sim::Mode::ReducedCB);
  const sim::Trajectory a = sim::run(sc), b = sim::run(sc);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].row, b.steps[i].row) << i;
}

TEST(Run, CompleteKrylovBasisReproducesFullModel) {
  sim::Scenario full = small_crack(6, 20.0, sim::Mode::Full);
  full.keep_states = true;
  const sim::Trajectory ref = sim::run(full);
  ASSERT_TRUE(ref.ok);
  sim::Scenario rom = full;
  rom.mode = sim::Mode::ReducedCB;
  const DofMap dofs = make_dof_map(full.mesh);
  rom.reduction.krylov_dim =
      dofs.free_count - 2 * static_cast<Index>(full.mesh.contact.contact_nodes().size());
  const sim::Trajectory red = sim::run(rom);
  ASSERT_TRUE(red.ok) << red.message;
  ASSERT_EQ(red.steps.size(), ref.steps.size());
  double q_scale = 0, l_scale = 0;
  for (const auto& s : ref.steps) {
    q_scale = std::max(q_scale, s.q.cwiseAbs().maxCoeff());
    l_scale = std::max(l_scale, s.lambda.cwiseAbs().maxCoeff());
  }
  ASSERT_GT(l_scale, 0.0);
  for (std::size_t i = 0; i < ref.steps.size(); ++i) {
    EXPECT_LE(rel_max(red.steps[i].q, ref.steps[i].q, q_scale), 1e-7) << i;
    EXPECT_LE(rel_max(red.steps[i].lambda, ref.steps[i].lambda, l_scale), 1e-7) << i;
  }
}

TEST(Run, ReducedDimensions) {
  const sim::Trajectory cb = sim::run(small_crack(8, 0.2, sim::Mode::ReducedCB));
  EXPECT_EQ(cb.master_dofs, 2 * static_cast<Index>(gen::crack_problem({.nx = 8, .ny = 8})
                                                       .scenario.mesh.contact.contact_nodes().size()));
  EXPECT_EQ(cb.reduced_dofs, cb.master_dofs + 3);
  const sim::Trajectory plain = sim::run(small_crack(8, 0.2, sim::Mode::ReducedPlain));
  EXPECT_EQ(plain.reduced_dofs, cb.reduced_dofs);
  EXPECT_EQ(plain.master_dofs, 0);
}

TEST(Run, PrecomputedModelMustMatch) {
  sim::Scenario cb = small_crack(6, 0.5, sim::Mode::ReducedCB);
  const mor::ReducedModel rm = sim::build_reduced_model(cb);
  const sim::Trajectory a = sim::run(cb), b = sim::run(cb, &rm);
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].row, b.steps[i].row);
  sim::Scenario plain = cb;
  plain.mode = sim::Mode::ReducedPlain;
  EXPECT_THROW(sim::run(plain, &rm), std::invalid_argument);
  const mor::ReducedModel other = sim::build_reduced_model(small_crack(8, 0.5, sim::Mode::ReducedCB));
  EXPECT_THROW(sim::run(cb, &other), std::invalid_argument);
}

TEST(Run, InvalidInput) {
  sim::Scenario sc = small_crack(6, 0.5, sim::Mode::Full);
  sc.sensors.contact_constraint = 99;
  EXPECT_THROW(sim::run(sc), std::invalid_argument);
  sc = small_crack(6, 0.5, sim::Mode::Full);
  sc.time.h = 0.0;
  EXPECT_THROW(sim::run(sc), std::invalid_argument);
  sc = small_crack(6, 0.5, sim::Mode::Full);
  sc.time.t_end = sc.time.t0;
  EXPECT_THROW(sim::run(sc), std::invalid_argument);
  sc = small_crack(6, 0.5, sim::Mode::Full);
  EXPECT_THROW(sim::build_reduced_model(sc), std::invalid_argument);
}

TEST(Run, InitialVelocityGivesSecondStartValue) {
  sim::Scenario sc = small_crack(6, 0.5, sim::Mode::Full);
  sc.loads.clear();
  sc.keep_states = true;
  const Index node = sc.sensors.displacement_nodes[1];
  sc.initial_velocity = {{node, Vec2(0.0, 0.2)}};
  const sim::Trajectory tr = sim::run(sc);
  const DofMap dofs = make_dof_map(sc.mesh);
  EXPECT_EQ(tr.steps[0].q[dofs.dof(node, 1)], 0.0);
  EXPECT_NEAR(tr.steps[1].q[dofs.dof(node, 1)], 0.2 * sc.time.h, 1e-15);
}

TEST(StressRecovery, UniaxialStrain) {
  // u = (eps x, 0) in plane stress: sigma_xx = E eps / (1 - nu^2), sigma_yy = nu sigma_xx.
  const Mesh2D mesh = build_rect_mesh(4, 3, 2.0, 1.0).mesh;
  const fem::Material mat{200.0, 0.25, 1.0};
  const double eps = 1e-3;
  auto disp = [&](Index n) { return Vec2(eps * mesh.nodes[n].x(), 0.0); };
  for (Index n : {Index{0}, Index{7}, Index{19}}) {
    const sim::StressResult r = sim::recover_stress(mesh, {mat}, disp, n);
    const double sxx = 200.0 * eps / (1 - 0.0625);
    EXPECT_NEAR(r.sigma(0, 0), sxx, 1e-12);
    EXPECT_NEAR(r.sigma(1, 1), 0.25 * sxx, 1e-12);
    EXPECT_NEAR(r.sigma(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(r.von_mises, std::sqrt(sxx * sxx + 0.0625 * sxx * sxx - 0.25 * sxx * sxx), 1e-12);
  }
  EXPECT_THROW(sim::recover_stress(mesh, {mat}, disp, 999), std::invalid_argument);
}

TEST(StressRecovery, RigidMotionIsStressFree) {
  const Mesh2D mesh = build_rect_mesh(3, 3, 1.0, 1.0).mesh;
  const double th = 1e-4;
  auto disp = [&](Index n) {
    const Vec2 x = mesh.nodes[n];
    return Vec2(0.3 - th * x.y(), -0.1 + th * x.x());
  };
  for (Index n = 0; n < mesh.node_count(); ++n)
    EXPECT_NEAR(sim::recover_stress(mesh, {fem::Material{1.0, 0.3, 1.0}}, disp, n).von_mises, 0.0, 1e-15);
}
