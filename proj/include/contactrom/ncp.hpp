#pragma once

// Dual formulation of the contact problem. For a multiplier lambda the
// displacement is the solution of the linear system
//
//     (alpha M + beta S(lambda)) w = beta (f + C^T lambda) + history,
//     S(lambda) = K - sum_k lambda_k (D_k + D_k^T),
//
// with (alpha, beta, history) = (0, 1, 0) for the static problem and
// (1, h^2, 2 M w_i - M w_{i-1}) for one implicit Euler step. The constraint
// values F_k(lambda) = w^T D_k w + c_k^T w + b_k must satisfy
// 0 <= lambda  _|_  F(lambda) >= 0, which is solved by a sequence of LCPs
// linearised at the current iterate. The same code runs on the sparse full
// model and on dense reduced models.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "contactrom/contact.hpp"
#include "contactrom/lcp.hpp"
#include "contactrom/linalg.hpp"

namespace contactrom::ncp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using linalg::SparseMatrix;

/// Mass, stiffness and constraints of one (full or reduced) model. The
/// bundle does not own the matrices.
template <class Mat>
struct OperatorBundle {
  const Mat* mass = nullptr;
  const Mat* stiffness = nullptr;
  const contact::ConstraintSet* constraints = nullptr;

  Index size() const { return stiffness->rows(); }
  Index constraint_count() const { return constraints->count(); }

  void validate() const {
    if (!mass || !stiffness || !constraints) throw std::invalid_argument("operator bundle is incomplete");
    if (mass->rows() != size() || mass->cols() != size() || stiffness->cols() != size() ||
        constraints->dimension != size())
      throw std::invalid_argument("operator bundle: inconsistent dimensions");
  }
};

/// Two-step history of the implicit Euler scheme.
struct StepHistory {
  VectorXd w_prev;   // w at t_i
  VectorXd w_prev2;  // w at t_{i-1}
  VectorXd lambda_prev;
  double h = 0.0;
  double t_next = 0.0;
};

/// (alpha, beta, rhs-without-multiplier) for one solve. `load` is f at the
/// time of the unknown state.
struct Context {
  double alpha = 0.0;
  double beta = 1.0;
  VectorXd load;
  VectorXd history;

  static Context stationary(VectorXd f) {
    Context ctx;
    ctx.load = std::move(f);
    ctx.history = VectorXd::Zero(ctx.load.size());
    return ctx;
  }

  template <class Mat>
  static Context dynamic(const Mat& mass, const StepHistory& hist, VectorXd f_next) {
    if (!(hist.h > 0.0)) throw std::invalid_argument("time step must be positive");
    if (hist.w_prev.size() != mass.rows() || hist.w_prev2.size() != mass.rows())
      throw std::invalid_argument("step history has the wrong dimension");
    Context ctx;
    ctx.alpha = 1.0;
    ctx.beta = hist.h * hist.h;
    ctx.load = std::move(f_next);
    ctx.history = mass * (2.0 * hist.w_prev - hist.w_prev2);
    return ctx;
  }
};

/// Raised when alpha M + beta S(lambda) is singular or indefinite; carries
/// the multiplier that caused it.
class SystemError : public std::runtime_error {
 public:
  SystemError(const std::string& what, VectorXd lambda)
      : std::runtime_error(what), lambda_(std::move(lambda)) {}
  const VectorXd& lambda() const { return lambda_; }

 private:
  VectorXd lambda_;
};

/// F_k = w^T D_k w + c_k^T w + b_k.
inline VectorXd constraint_F(const contact::ConstraintSet& cs, const Eigen::Ref<const VectorXd>& w) {
  return contact::evaluate_gap(cs, w);
}

/// Rows Z_k = (D_sym_k w + c_k)^T.
inline MatrixXd constraint_gradients(const contact::ConstraintSet& cs,
                                     const Eigen::Ref<const VectorXd>& w) {
  MatrixXd z = MatrixXd::Zero(cs.count(), cs.dimension);
  for (Index k = 0; k < cs.count(); ++k) {
    const auto& con = cs.constraints[k];
    const VectorXd loc = con.d_sym * con.gather(w) + con.c;
    for (Index i = 0; i < con.local_size(); ++i) z(k, con.dofs[i]) += loc[i];
  }
  return z;
}

/// State, constraint values and Jacobian at one multiplier.
struct Linearization {
  VectorXd lambda;
  VectorXd w;
  VectorXd f;
  MatrixXd z;         // constraint gradients, m x n
  MatrixXd response;  // dw/dlambda, n x m
  MatrixXd jacobian;  // dF/dlambda, m x m
};

/// Evaluates w(lambda), F and DF for one operator bundle and context. One
/// factorization per evaluation, shared by the state and the m Jacobian
/// solves.
template <class Mat>
class Evaluator {
 public:
  Evaluator(const OperatorBundle<Mat>& ops, Context ctx)
      : ops_(ops), op_(*ops.mass, *ops.stiffness, *ops.constraints, ctx.alpha, ctx.beta) {
    ops.validate();
    reset(std::move(ctx));
  }

  /// New load and history for the same (alpha, beta); keeps the symbolic
  /// factorization.
  void reset(Context ctx) {
    if (ctx.load.size() != ops_.size() || ctx.history.size() != ops_.size())
      throw std::invalid_argument("solve context has the wrong dimension");
    if (factorizations_ > 0 && (ctx.alpha != ctx_.alpha || ctx.beta != ctx_.beta))
      throw std::invalid_argument("solve context changed its time-step coefficients");
    ctx_ = std::move(ctx);
  }

  const OperatorBundle<Mat>& operators() const { return ops_; }

  Mat system_matrix(const Eigen::Ref<const VectorXd>& lambda) const { return op_.matrix(lambda); }

  /// Right-hand side beta (f + C^T lambda) + history.
  VectorXd rhs(const Eigen::Ref<const VectorXd>& lambda) const {
    return ctx_.beta * (ctx_.load + ops_.constraints->linear_transpose_times(lambda)) + ctx_.history;
  }

  /// `stiffness_lambda` is where S is evaluated; normally equal to `lambda`.
  /// When it differs (lagged stiffness) S is treated as a constant, so
  /// dw/dlambda = beta A^{-1} C^T.
  Linearization evaluate(const Eigen::Ref<const VectorXd>& lambda,
                         const Eigen::Ref<const VectorXd>& stiffness_lambda) {
    factorize(stiffness_lambda);
    Linearization lin;
    lin.lambda = lambda;
    lin.w = solver_.solve(rhs(lambda));
    lin.f = constraint_F(*ops_.constraints, lin.w);
    lin.z = constraint_gradients(*ops_.constraints, lin.w);
    const bool lagged = (lambda - stiffness_lambda).cwiseAbs().maxCoeff() > 0.0;
    if (lagged) {
      const MatrixXd ct = ops_.constraints->linear_matrix().transpose();
      lin.response = ctx_.beta * MatrixXd(solver_.solve(ct));
    } else {
      lin.response = ctx_.beta * MatrixXd(solver_.solve(MatrixXd(lin.z.transpose())));
    }
    lin.jacobian = lin.z * lin.response;
    return lin;
  }

  Linearization evaluate(const Eigen::Ref<const VectorXd>& lambda) { return evaluate(lambda, lambda); }

  VectorXd state(const Eigen::Ref<const VectorXd>& lambda) {
    factorize(lambda);
    return solver_.solve(rhs(lambda));
  }

  int factorizations() const { return factorizations_; }

 private:
  void factorize(const Eigen::Ref<const VectorXd>& lambda) {
    try {
      solver_.compute(op_.matrix(lambda));
    } catch (const linalg::FactorizationError& e) {
      throw SystemError(e.what(), lambda);
    }
    ++factorizations_;
  }

  const OperatorBundle<Mat>& ops_;
  Context ctx_;
  linalg::EffectiveOperator<Mat> op_;
  linalg::SpdSolver<Mat> solver_;
  int factorizations_ = 0;
};

/// S(lambda) for an operator bundle.
template <class Mat>
Mat effective_stiffness(const OperatorBundle<Mat>& ops, const Eigen::Ref<const VectorXd>& lambda) {
  return linalg::effective_stiffness(*ops.stiffness, *ops.constraints, lambda);
}

/// w(lambda) = S(lambda)^{-1} (f + C^T lambda).
template <class Mat>
VectorXd static_w(const OperatorBundle<Mat>& ops, const VectorXd& f,
                  const Eigen::Ref<const VectorXd>& lambda) {
  const Context ctx = Context::stationary(f);
  Evaluator<Mat> ev(ops, ctx);
  return ev.state(lambda);
}

/// w(lambda) = (M + h^2 S(lambda))^{-1} (h^2 f + h^2 C^T lambda + 2 M w_i - M w_{i-1}).
template <class Mat>
VectorXd dynamic_w(const OperatorBundle<Mat>& ops, const StepHistory& hist, const VectorXd& f_next,
                   const Eigen::Ref<const VectorXd>& lambda) {
  const Context ctx = Context::dynamic(*ops.mass, hist, f_next);
  Evaluator<Mat> ev(ops, ctx);
  return ev.state(lambda);
}

/// DF(lambda) = beta Z A(lambda)^{-1} Z^T.
template <class Mat>
MatrixXd jacobian(const OperatorBundle<Mat>& ops, const Context& ctx,
                  const Eigen::Ref<const VectorXd>& lambda) {
  Evaluator<Mat> ev(ops, ctx);
  return ev.evaluate(lambda).jacobian;
}

// ---------------------------------------------------------------------------
// Sequential LCP
// ---------------------------------------------------------------------------

enum class NcpStatus { Converged, MaxIterations, LcpFailure, SingularSystem };

inline std::string_view to_string(NcpStatus s) {
  switch (s) {
    case NcpStatus::Converged: return "converged";
    case NcpStatus::MaxIterations: return "max-iterations";
    case NcpStatus::LcpFailure: return "lcp-failure";
    case NcpStatus::SingularSystem: return "singular-system";
  }
  return "unknown";
}

struct NcpOptions {
  /// Absolute step tolerance; <= 0 selects 1e-10 (1 + max(|lambda0|, |z_l|)),
  /// which follows the multiplier scale once contact becomes active.
  double tol = 0.0;
  int max_iter = 25;
  /// Evaluate S at the previous step's multiplier instead of the iterate.
  bool lagged_stiffness = false;
};

/// lambda >= 0, F >= -eps, |lambda^T F| <= eps with
/// eps = 1e-8 (1 + |lambda|)(1 + |F|).
struct ComplementarityCheck {
  double min_lambda = 0.0;
  double min_f = 0.0;
  double product = 0.0;
  double eps = 0.0;
  bool ok = false;
};

inline ComplementarityCheck check_complementarity(const VectorXd& lambda, const VectorXd& f,
                                                  double rel = 1e-8) {
  ComplementarityCheck c;
  c.eps = rel * (1.0 + lambda.norm()) * (1.0 + f.norm());
  c.min_lambda = lambda.size() ? lambda.minCoeff() : 0.0;
  c.min_f = f.size() ? f.minCoeff() : 0.0;
  c.product = std::abs(lambda.dot(f));
  c.ok = lambda.allFinite() && f.allFinite() && c.min_lambda >= 0.0 && c.min_f >= -c.eps &&
         c.product <= c.eps;
  return c;
}

struct NcpReport {
  VectorXd lambda;
  VectorXd w;
  VectorXd f;
  int iterations = 0;
  std::vector<double> residuals;
  NcpStatus status = NcpStatus::MaxIterations;
  int lcp_restarts = 0;
  std::string message;

  bool converged() const { return status == NcpStatus::Converged; }
};

/// Fixed-point iteration z_l = LCP(DF(z_{l-1}), F(z_{l-1}) - DF(z_{l-1}) z_{l-1}),
/// stopped when |z_l - z_{l-1}| < tol. `lambda_prev` is only used by the
/// lagged-stiffness variant.
template <class Mat>
NcpReport solve_ncp(Evaluator<Mat>& ev, const VectorXd& lambda0, const NcpOptions& opt = {},
                    const VectorXd* lambda_prev = nullptr) {
  const OperatorBundle<Mat>& ops = ev.operators();
  const Index m = ops.constraint_count();
  if (lambda0.size() != m) throw std::invalid_argument("solve_ncp: lambda0 has the wrong size");
  if (m > 0 && lambda0.minCoeff() < 0.0) throw std::invalid_argument("solve_ncp: lambda0 must be >= 0");
  auto tolerance = [&](const VectorXd& z) {
    return opt.tol > 0.0 ? opt.tol : 1e-10 * (1.0 + std::max(lambda0.norm(), z.norm()));
  };
  NcpReport rep;

  if (m == 0) {
    rep.lambda = lambda0;
    rep.w = ev.state(lambda0);
    rep.f = VectorXd(0);
    rep.iterations = 1;
    rep.residuals.push_back(0.0);
    rep.status = NcpStatus::Converged;
    return rep;
  }

  const VectorXd lag = (opt.lagged_stiffness && lambda_prev) ? *lambda_prev : VectorXd();
  auto linearize = [&](const VectorXd& z) {
    return opt.lagged_stiffness && lambda_prev ? ev.evaluate(z, lag) : ev.evaluate(z);
  };

  VectorXd z = lambda0;
  try {
    for (int l = 1; l <= opt.max_iter; ++l) {
      Linearization lin = linearize(z);
      lcp::LcpProblem prob{lin.jacobian, lin.f - lin.jacobian * z};
      lcp::LcpSolution sol = lcp::lemke(prob);
      if (sol.status != lcp::Status::Solved) {
        if (rep.lcp_restarts > 0 || z.isZero(0.0)) {
          rep.status = NcpStatus::LcpFailure;
          rep.message = std::string("LCP solver: ") + std::string(lcp::to_string(sol.status));
          rep.lambda = z;
          rep.w = lin.w;
          rep.f = lin.f;
          rep.iterations = l;
          return rep;
        }
        ++rep.lcp_restarts;
        z.setZero();
        lin = linearize(z);
        prob = {lin.jacobian, lin.f};
        sol = lcp::lemke(prob);
        if (sol.status != lcp::Status::Solved) {
          rep.status = NcpStatus::LcpFailure;
          rep.message = std::string("LCP solver after restart: ") + std::string(lcp::to_string(sol.status));
          rep.lambda = z;
          rep.w = lin.w;
          rep.f = lin.f;
          rep.iterations = l;
          return rep;
        }
      }
      const VectorXd dz = sol.z - z;
      const double res = dz.norm();
      rep.residuals.push_back(res);
      rep.iterations = l;
      z = sol.z;
      if (res < tolerance(z)) {
        // The step is below tol: update the state to first order with the
        // already factorised system instead of refactorising.
        rep.lambda = z;
        rep.w = lin.w + lin.response * dz;
        rep.f = constraint_F(*ops.constraints, rep.w);
        rep.status = NcpStatus::Converged;
        return rep;
      }
    }
  } catch (const SystemError& e) {
    rep.status = NcpStatus::SingularSystem;
    rep.message = e.what();
    rep.lambda = e.lambda();
    return rep;
  }
  rep.status = NcpStatus::MaxIterations;
  rep.message = "no convergence after " + std::to_string(opt.max_iter) + " iterations";
  rep.lambda = z;
  try {
    rep.w = ev.state(z);
    rep.f = constraint_F(*ops.constraints, rep.w);
  } catch (const SystemError&) {
  }
  return rep;
}

template <class Mat>
NcpReport solve_ncp(const OperatorBundle<Mat>& ops, const Context& ctx, const VectorXd& lambda0,
                    const NcpOptions& opt = {}, const VectorXd* lambda_prev = nullptr) {
  Evaluator<Mat> ev(ops, ctx);
  return solve_ncp(ev, lambda0, opt, lambda_prev);
}

}  // namespace contactrom::ncp
