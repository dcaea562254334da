#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "contactrom/generators.hpp"
#include "contactrom/ncp.hpp"
#include "support.hpp"

using namespace contactrom;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ncp::Context;
using ncp::Evaluator;
using ncp::OperatorBundle;
using testing_support::Rng;

namespace {

struct Instance {
  testing_support::DenseContactSystem sys;
  OperatorBundle<MatrixXd> ops;
  ncp::StepHistory hist;
  VectorXd load;

  Instance(Rng& rng, Index n, Index m, double curvature, double h = 0.1) {
    sys = testing_support::random_contact_system(rng, n, m, curvature);
    ops = {&sys.mass, &sys.stiffness, &sys.cs};
    hist.h = h;
    hist.w_prev = rng.vector(n, -0.1, 0.1);
    hist.w_prev2 = rng.vector(n, -0.1, 0.1);
    load = rng.vector(n);
  }
  Instance(const Instance&) = delete;
  Context dynamic() const { return Context::dynamic(sys.mass, hist, load); }
};

VectorXd F_of(Evaluator<MatrixXd>& ev, const VectorXd& lambda) {
  return ncp::constraint_F(*ev.operators().constraints, ev.state(lambda));
}

double max_fd_error(Evaluator<MatrixXd>& ev, const VectorXd& lambda) {
  const MatrixXd df = ev.evaluate(lambda).jacobian;
  MatrixXd fd(df.rows(), df.cols());
  for (Index j = 0; j < lambda.size(); ++j) {
    VectorXd lp = lambda, lm = lambda;
    lp[j] += 1e-6;
    lm[j] -= 1e-6;
    fd.col(j) = (F_of(ev, lp) - F_of(ev, lm)) / 2e-6;
  }
  return (df - fd).cwiseAbs().maxCoeff() / df.cwiseAbs().maxCoeff();
}

}  // namespace

TEST(EffectiveStiffness, Examples) {
  Rng rng(31);
  Instance in(rng, 12, 2, 1.0);
  EXPECT_EQ(ncp::effective_stiffness(in.ops, VectorXd::Zero(2)), in.sys.stiffness);
  const MatrixXd s = ncp::effective_stiffness(in.ops, Eigen::Vector2d(1.0, 0.0));
  EXPECT_LE((s - (in.sys.stiffness - in.sys.cs.dense_quadratic(0, true))).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EffectiveStiffness, SlaveBlockIsUntouched) {
  const gen::CrackProblem p = gen::crack_problem({.nx = 10, .ny = 10});
  const Mesh2D& mesh = p.scenario.mesh;
  const DofMap dofs = make_dof_map(mesh);
  const fem::SystemMatrices sys = fem::assemble(mesh, p.scenario.materials, dofs);
  const auto cs = contact::assemble_constraints(mesh, mesh.contact, dofs);
  const DofPartition part = partition_dofs(mesh, dofs, mesh.contact.contact_nodes());
  Rng rng(32);
  const VectorXd lambda = rng.vector(cs.count(), 0.0, 50.0);
  const auto s = linalg::effective_stiffness(sys.stiffness, cs, lambda);
  const MatrixXd s_ss = MatrixXd(linalg::submatrix(s, part.slave_dofs, part.slave_dofs));
  const MatrixXd k_ss = MatrixXd(linalg::submatrix(sys.stiffness, part.slave_dofs, part.slave_dofs));
  EXPECT_TRUE(s_ss == k_ss);
  EXPECT_FALSE(MatrixXd(s) == MatrixXd(sys.stiffness));
}

TEST(StaticW, ElasticSolutionAndResidual) {
  Rng rng(33);
  Instance in(rng, 10, 3, 0.5);
  EXPECT_LE((ncp::static_w(in.ops, in.load, VectorXd::Zero(3)) - in.sys.stiffness.ldlt().solve(in.load)).norm(),
            1e-12 * in.load.norm());
  EXPECT_TRUE(ncp::static_w(in.ops, VectorXd::Zero(10), VectorXd::Zero(3)).isZero(0.0));
  const VectorXd lambda = rng.vector(3, 0, 1);
  const VectorXd w = ncp::static_w(in.ops, in.load, lambda);
  const VectorXd res = ncp::effective_stiffness(in.ops, lambda) * w - in.load - in.sys.cs.linear_transpose_times(lambda);
  EXPECT_LE(res.norm(), 1e-10 * in.load.norm());
}

TEST(DynamicW, RestStaysAtRestAndResidual) {
  Rng rng(34);
  Instance in(rng, 10, 2, 0.5);
  ncp::StepHistory rest{VectorXd::Zero(10), VectorXd::Zero(10), VectorXd::Zero(2), 0.1, 0.1};
  EXPECT_TRUE(ncp::dynamic_w(in.ops, rest, VectorXd::Zero(10), VectorXd::Zero(2)).isZero(0.0));

  const VectorXd lambda = rng.vector(2, 0, 1);
  const VectorXd w = ncp::dynamic_w(in.ops, in.hist, in.load, lambda);
  const double h2 = in.hist.h * in.hist.h;
  const VectorXd rhs = h2 * (in.load + in.sys.cs.linear_transpose_times(lambda)) +
                       in.sys.mass * (2 * in.hist.w_prev - in.hist.w_prev2);
  const VectorXd res = (in.sys.mass + h2 * ncp::effective_stiffness(in.ops, lambda)) * w - rhs;
  EXPECT_LE(res.norm(), 1e-10 * rhs.norm());
}

TEST(DynamicW, SmallStepExtrapolates) {
  Rng rng(35);
  Instance in(rng, 8, 1, 0.5, 1e-4);
  const VectorXd w = ncp::dynamic_w(in.ops, in.hist, in.load, VectorXd::Zero(1));
  EXPECT_LE((w - (2 * in.hist.w_prev - in.hist.w_prev2)).norm(), 1e-6);
}

TEST(DynamicW, InvalidHistory) {
  Rng rng(36);
  Instance in(rng, 6, 1, 0.5);
  ncp::StepHistory bad = in.hist;
  bad.h = 0.0;
  EXPECT_THROW(ncp::dynamic_w(in.ops, bad, in.load, VectorXd::Zero(1)), std::invalid_argument);
  bad = in.hist;
  bad.w_prev2 = VectorXd::Zero(5);
  EXPECT_THROW(ncp::dynamic_w(in.ops, bad, in.load, VectorXd::Zero(1)), std::invalid_argument);
}

TEST(ConstraintF, OffsetsAtZeroAndAgreesWithGap) {
  Rng rng(37);
  Instance in(rng, 10, 3, 1.0);
  EXPECT_EQ(ncp::constraint_F(in.sys.cs, VectorXd::Zero(10)), in.sys.cs.offsets());
  const VectorXd w = rng.vector(10);
  EXPECT_EQ(ncp::constraint_F(in.sys.cs, w), contact::evaluate_gap(in.sys.cs, w));
  for (Index k = 0; k < 3; ++k) {
    const MatrixXd dk = in.sys.cs.dense_quadratic(k, true);
    const double half = 0.5 * w.dot(dk * w) + in.sys.cs.linear_matrix().row(k).dot(w) + in.sys.cs.offsets()[k];
    EXPECT_NEAR(ncp::constraint_F(in.sys.cs, w)[k], half, 1e-12);
  }
}

TEST(Jacobian, LinearConstraintsGiveSymmetricPsd) {
  Rng rng(38);
  Instance in(rng, 14, 3, 0.0);
  const MatrixXd df = ncp::jacobian(in.ops, in.dynamic(), VectorXd::Zero(3));
  const MatrixXd c = in.sys.cs.linear_matrix();
  const double h2 = in.hist.h * in.hist.h;
  const MatrixXd ref = h2 * c * (in.sys.mass + h2 * in.sys.stiffness).ldlt().solve(c.transpose());
  EXPECT_LE((df - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
  EXPECT_LE((df - df.transpose()).cwiseAbs().maxCoeff(), 1e-14 * df.cwiseAbs().maxCoeff());
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (df + df.transpose())).eigenvalues().minCoeff(), -1e-14);
}

TEST(Jacobian, MatchesFiniteDifferencesDynamic) {
  Rng rng(39);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 * rng.integer(4, 20), m = rng.integer(1, 5);
    Instance in(rng, n, m, 0.5);
    Evaluator<MatrixXd> ev(in.ops, in.dynamic());
    EXPECT_LE(max_fd_error(ev, rng.vector(m, 0.0, 1.0)), 1e-5) << trial;
  }
}

TEST(Jacobian, MatchesFiniteDifferencesStatic) {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = rng.integer(1, 4);
    Instance in(rng, 16, m, 0.3);
    Evaluator<MatrixXd> ev(in.ops, Context::stationary(in.load));
    EXPECT_LE(max_fd_error(ev, rng.vector(m, 0.0, 1.0)), 1e-5) << trial;
  }
}

TEST(Jacobian, TwoDofHandExpansion) {
  // K = diag(2, 3), F = w0 w1 + w0, f = (1, 1), lambda = 1/2:
  // S = [2 -1/2; -1/2 3], w = (20, 11)/23, Z = (34, 20)/23,
  // DF = Z S^-1 Z^T = 19792 / 12167.
  MatrixXd k(2, 2), mass = MatrixXd::Identity(2, 2);
  k << 2, 0, 0, 3;
  contact::ConstraintSet cs;
  cs.dimension = 2;
  contact::QuadraticConstraint con;
  con.dofs = {0, 1};
  con.d = (MatrixXd(2, 2) << 0, 1, 0, 0).finished();
  con.d_sym = con.d + con.d.transpose();
  con.c = Eigen::Vector2d(1, 0);
  cs.constraints = {con};
  const OperatorBundle<MatrixXd> ops{&mass, &k, &cs};
  const VectorXd half = VectorXd::Constant(1, 0.5);
  const VectorXd w = ncp::static_w(ops, Eigen::Vector2d(1, 1), half);
  EXPECT_NEAR(w[0], 20.0 / 23.0, 1e-15);
  EXPECT_NEAR(w[1], 11.0 / 23.0, 1e-15);
  const MatrixXd df = ncp::jacobian(ops, Context::stationary(Eigen::Vector2d(1, 1)), half);
  EXPECT_NEAR(df(0, 0), 19792.0 / 12167.0, 1e-14);
}

TEST(SolveNcp, OpenGapsConvergeInOneIteration) {
  Rng rng(41);
  Instance in(rng, 12, 3, 1.0);
  for (auto& con : in.sys.cs.constraints) con.b = std::abs(con.b) + 0.1;
  in.hist.w_prev.setZero();
  in.hist.w_prev2.setZero();
  in.load.setZero();
  const auto rep = ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(3));
  ASSERT_TRUE(rep.converged());
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_TRUE(rep.lambda.isZero(0.0));
}

TEST(SolveNcp, LinearConstraintsConvergeInTwoIterations) {
  Rng rng(42);
  int active = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Instance in(rng, 16, 3, 0.0);
    in.load *= 50.0;
    const auto rep = ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(3));
    ASSERT_TRUE(rep.converged()) << trial;
    EXPECT_LE(rep.iterations, 2) << trial;
    active += rep.lambda.maxCoeff() > 0.0;
    EXPECT_TRUE(ncp::check_complementarity(rep.lambda, rep.f).ok) << trial;
  }
  EXPECT_GT(active, 5);
}

TEST(SolveNcp, QuadraticConstraintsSatisfyCertificate) {
  Rng rng(43);
  int active = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Index m = rng.integer(1, 5);
    Instance in(rng, 20, m, 0.3);
    in.load *= 20.0;
    const auto rep = ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(m));
    ASSERT_TRUE(rep.converged()) << trial << " " << rep.message;
    EXPECT_LE(rep.iterations, 8) << trial;
    EXPECT_GE(rep.lambda.minCoeff(), 0.0);
    active += rep.lambda.maxCoeff() > 0.0;
    EXPECT_TRUE(ncp::check_complementarity(rep.lambda, rep.f).ok) << trial;
    // The reported state is the state of the reported multiplier.
    Evaluator<MatrixXd> ev(in.ops, in.dynamic());
    EXPECT_LE((ev.state(rep.lambda) - rep.w).norm(), 1e-8 * (1 + rep.w.norm())) << trial;
  }
  EXPECT_GT(active, 10);
}

TEST(SolveNcp, IterationCapReported) {
  Rng rng(44);
  Instance in(rng, 20, 4, 0.3);
  in.load *= 50.0;
  const auto full = ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(4));
  ASSERT_TRUE(full.converged());
  ASSERT_GE(full.iterations, 2);
  ncp::NcpOptions opt;
  opt.max_iter = 1;
  const auto capped = ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(4), opt);
  EXPECT_EQ(capped.status, ncp::NcpStatus::MaxIterations);
  EXPECT_EQ(capped.residuals.size(), 1u);
}

TEST(SolveNcp, InvalidStart) {
  Rng rng(45);
  Instance in(rng, 8, 2, 0.3);
  EXPECT_THROW(ncp::solve_ncp(in.ops, in.dynamic(), Eigen::Vector2d(-1, 0)), std::invalid_argument);
  EXPECT_THROW(ncp::solve_ncp(in.ops, in.dynamic(), VectorXd::Zero(3)), std::invalid_argument);
}

TEST(SolveNcp, IndefiniteSystemCarriesMultiplier) {
  Rng rng(46);
  Instance in(rng, 8, 1, 1.0);
  Evaluator<MatrixXd> ev(in.ops, Context::stationary(in.load));
  const VectorXd huge = VectorXd::Constant(1, 1e8);
  try {
    ev.state(huge);
    FAIL() << "expected a singular system";
  } catch (const ncp::SystemError& e) {
    EXPECT_EQ(e.lambda(), huge);
  }
}

TEST(Complementarity, Check) {
  EXPECT_TRUE(ncp::check_complementarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 2)).ok);
  EXPECT_FALSE(ncp::check_complementarity(Eigen::Vector2d(-1e-3, 0), Eigen::Vector2d(0, 2)).ok);
  EXPECT_FALSE(ncp::check_complementarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1e-3, 2)).ok);
  EXPECT_FALSE(ncp::check_complementarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(1e-3, 2)).ok);
}
