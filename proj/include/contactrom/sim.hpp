#pragma once

// Time integration of the contact problem for the full model and both reduced
// models. The implicit Euler two-step scheme is bootstrapped with one explicit
// Euler step (q_1 = q_0 + h v_0, lambda = 0 for both start values); every
// later step solves the NCP warm-started at the previous multiplier and may
// update the node/segment pairing afterwards.

#include <chrono>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "contactrom/contact.hpp"
#include "contactrom/fem.hpp"
#include "contactrom/mesh.hpp"
#include "contactrom/mor.hpp"
#include "contactrom/ncp.hpp"
#include "contactrom/shape.hpp"

namespace contactrom::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Mode { Full, ReducedCB, ReducedPlain };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::ReducedCB: return "rom-cb";
    case Mode::ReducedPlain: return "rom-plain";
  }
  return "unknown";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "full") return Mode::Full;
  if (s == "rom-cb") return Mode::ReducedCB;
  if (s == "rom-plain") return Mode::ReducedPlain;
  return std::nullopt;
}

/// t_i = t0 + i h for i = 0 .. intervals().
struct TimeGrid {
  double t0 = 0.0;
  double h = 0.05;
  double t_end = 1.0;

  Index intervals() const { return static_cast<Index>(std::llround((t_end - t0) / h)); }
  double at(Index i) const { return t0 + static_cast<double>(i) * h; }

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("time grid: h must be positive");
    if (intervals() < 1) throw std::invalid_argument("time grid: at least two time points are required");
  }
};

struct NodalVector {
  Index node = 0;
  Vec2 value = Vec2::Zero();
};

struct SensorSpec {
  std::vector<Index> displacement_nodes;
  Index contact_constraint = 0;  // reported as g_CN / p_CN
  std::vector<Index> stress_nodes;
};

struct ReductionSpec {
  Index krylov_dim = 3;
  /// Size of the plain Krylov basis; 0 selects the Craig-Bampton size.
  Index plain_dim = 0;
  std::vector<Index> extra_master_nodes;
  /// Make the element neighbours of stress sensors masters instead of
  /// recovering them from tracked basis rows.
  bool promote_stress_neighbors = false;
};

struct Scenario {
  std::string name = "scenario";
  Mesh2D mesh;
  std::vector<fem::Material> materials;
  std::vector<fem::LoadSpec> loads;
  TimeGrid time;
  std::vector<NodalVector> initial_displacement;
  std::vector<NodalVector> initial_velocity;
  Mode mode = Mode::Full;
  ReductionSpec reduction;
  ncp::NcpOptions ncp;
  bool contact_update = false;
  double contact_update_tol = contact::kDefaultPairingTolerance;
  SensorSpec sensors;
  /// Keep the full displacement of every step in the trajectory.
  bool keep_states = false;
};

// ---------------------------------------------------------------------------
// Stress recovery
// ---------------------------------------------------------------------------

struct StressResult {
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  double von_mises = 0.0;
};

inline std::vector<Index> adjacent_elements(const Mesh2D& mesh, Index node) {
  std::vector<Index> out;
  for (Index e = 0; e < mesh.element_count(); ++e)
    for (int a = 0; a < mesh.element_size(); ++a)
      if (mesh.elements[e][a] == node) {
        out.push_back(e);
        break;
      }
  return out;
}

/// Displacement gradient of element e at its local corner `a`.
template <class Disp>
Eigen::Matrix2d element_gradient(const Mesh2D& mesh, Index e, int a, const Disp& disp) {
  const auto& el = mesh.elements[e];
  Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
  if (mesh.kind == ElementKind::T3) {
    double area = 0;
    const Eigen::Matrix<double, 2, 3> g = shape::t3_gradients(mesh.element_coords(e), area);
    for (int b = 0; b < 3; ++b) grad += disp(el[b]) * g.col(b).transpose();
  } else {
    double det_j = 0;
    const auto& c = shape::kQ4Corners[a];
    const Eigen::Matrix<double, 2, 4> g = shape::q4_gradients(mesh.element_coords(e), c[0], c[1], det_j);
    for (int b = 0; b < 4; ++b) grad += disp(el[b]) * g.col(b).transpose();
  }
  return grad;
}

/// Nodal stress by averaging the displacement gradients of all elements
/// around `node`. `disp(i)` returns the displacement of node i.
template <class Disp>
StressResult recover_stress(const Mesh2D& mesh, const std::vector<fem::Material>& materials,
                            const Disp& disp, Index node) {
  if (node < 0 || node >= mesh.node_count())
    throw std::invalid_argument("recover_stress: node " + std::to_string(node) + " does not exist");
  const std::vector<Index> elems = adjacent_elements(mesh, node);
  if (elems.empty()) throw std::invalid_argument("recover_stress: node " + std::to_string(node) + " is isolated");
  Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
  for (Index e : elems) {
    int a = 0;
    while (mesh.elements[e][a] != node) ++a;
    grad += element_gradient(mesh, e, a, disp);
  }
  grad /= static_cast<double>(elems.size());
  const int body = mesh.body_of(node);
  if (body < 0 || body >= static_cast<int>(materials.size()))
    throw std::invalid_argument("recover_stress: no material for body " + std::to_string(body));
  StressResult r;
  r.sigma = fem::stress_from_gradient(grad, materials[body]);
  r.von_mises = fem::von_mises(r.sigma);
  return r;
}

/// Displacement of a node from a free-DOF vector (fixed DOFs are zero).
inline Vec2 nodal_displacement(const DofMap& dofs, const Eigen::Ref<const VectorXd>& q, Index node) {
  Vec2 u = Vec2::Zero();
  for (int c = 0; c < 2; ++c) {
    const Index d = dofs.dof(node, c);
    if (d >= 0) u[c] = q[d];
  }
  return u;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

struct StepRecord {
  double t = 0.0;
  int iterations = 0;  // 0 for the two start values
  int pairing_version = 0;
  double seconds = 0.0;
  bool certificate = true;
  VectorXd lambda;
  VectorXd gap;
  VectorXd q;  // full free-DOF displacement, only with keep_states
  std::vector<double> row;
};

struct Trajectory {
  std::string scenario;
  Mode mode = Mode::Full;
  Index total_dofs = 0;
  Index free_dofs = 0;
  Index reduced_dofs = 0;
  Index master_dofs = 0;
  Index krylov_dim = 0;
  Index constraint_count = 0;
  double offline_seconds = 0.0;
  double online_seconds = 0.0;
  int lcp_restarts = 0;
  int pairing_changes = 0;
  std::vector<std::string> columns;
  std::vector<StepRecord> steps;
  bool ok = true;
  std::string message;
  std::optional<mor::ReducedModel> model;

  Index certificate_failures() const {
    Index n = 0;
    for (const auto& s : steps) n += !s.certificate;
    return n;
  }
  long total_iterations() const {
    long n = 0;
    for (const auto& s : steps) n += s.iterations;
    return n;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline VectorXd nodal_to_free(const std::vector<NodalVector>& values, const DofMap& dofs) {
  VectorXd q = VectorXd::Zero(dofs.free_count);
  for (const auto& nv : values) {
    if (nv.node < 0 || 2 * nv.node + 1 >= dofs.total_count())
      throw std::invalid_argument("initial state: node " + std::to_string(nv.node) + " does not exist");
    for (int c = 0; c < 2; ++c) {
      const Index d = dofs.dof(nv.node, c);
      if (d >= 0) q[d] = nv.value[c];
      else if (nv.value[c] != 0.0)
        throw std::invalid_argument("initial state: node " + std::to_string(nv.node) + " is Dirichlet-fixed");
    }
  }
  return q;
}

/// Everything a march needs besides the model matrices.
struct RunState {
  const Scenario* sc = nullptr;
  DofMap dofs;
  fem::LoadHistory loads;
  ContactPairing pairing;
  contact::ConstraintSet full_constraints;
  const mor::ReducedModel* rm = nullptr;
  std::vector<Index> observed_rows;  // free DOFs needed for sensors and pairing updates
  mor::TrackedRows tracked;
  Trajectory* out = nullptr;
};

inline std::vector<Index> stress_neighborhood(const Mesh2D& mesh, const std::vector<Index>& nodes) {
  std::set<Index> out;
  for (Index n : nodes)
    for (Index e : adjacent_elements(mesh, n))
      for (int a = 0; a < mesh.element_size(); ++a) out.insert(mesh.elements[e][a]);
  return {out.begin(), out.end()};
}

inline std::vector<std::string> sensor_columns(const SensorSpec& s) {
  std::vector<std::string> cols{"t"};
  for (Index n : s.displacement_nodes) {
    cols.push_back("ux_" + std::to_string(n));
    cols.push_back("uy_" + std::to_string(n));
  }
  for (const char* c : {"g_CN", "p_CN", "ncp_iterations", "pairing_version"}) cols.emplace_back(c);
  for (Index n : s.stress_nodes) cols.push_back("von_mises_" + std::to_string(n));
  return cols;
}

/// Full-size vector holding at least the observed rows of the current state.
inline VectorXd observe(const RunState& rs, const VectorXd& w, bool full) {
  if (!rs.rm) return w;
  if (full) return mor::expand(*rs.rm, w);
  VectorXd q = VectorXd::Zero(rs.dofs.free_count);
  const VectorXd vals = rs.tracked(w);
  for (std::size_t i = 0; i < rs.observed_rows.size(); ++i) q[rs.observed_rows[i]] = vals[static_cast<Index>(i)];
  return q;
}

inline std::vector<double> sensor_row(const RunState& rs, double t, const VectorXd& q, const VectorXd& lambda,
                                      const VectorXd& gap, int iterations, int version) {
  const Scenario& sc = *rs.sc;
  std::vector<double> row{t};
  for (Index n : sc.sensors.displacement_nodes) {
    const Vec2 u = nodal_displacement(rs.dofs, q, n);
    row.push_back(u.x());
    row.push_back(u.y());
  }
  const Index k = sc.sensors.contact_constraint;
  const bool has = k >= 0 && k < gap.size();
  row.push_back(has ? gap[k] : 0.0);
  row.push_back(has ? lambda[k] : 0.0);
  row.push_back(iterations);
  row.push_back(version);
  auto disp = [&](Index node) { return nodal_displacement(rs.dofs, q, node); };
  for (Index n : sc.sensors.stress_nodes) row.push_back(recover_stress(sc.mesh, sc.materials, disp, n).von_mises);
  for (Index j = 0; j < lambda.size(); ++j) {
    row.push_back(lambda[j]);
    row.push_back(gap[j]);
  }
  return row;
}

inline contact::ConstraintSet model_constraints(const RunState& rs) {
  return rs.rm ? mor::reduce_constraints(rs.full_constraints, *rs.rm) : rs.full_constraints;
}

template <class Mat>
void march(RunState& rs, const Mat& mass, const Mat& stiffness, const MatrixXd& load_patterns,
           const VectorXd& w0, const VectorXd& w1) {
  const Scenario& sc = *rs.sc;
  Trajectory& out = *rs.out;
  contact::ConstraintSet cs = model_constraints(rs);
  ncp::OperatorBundle<Mat> ops{&mass, &stiffness, &cs};
  const Index m = cs.count();
  const Clock::time_point online = Clock::now();

  auto record = [&](double t, const VectorXd& w, const VectorXd& lambda, const VectorXd& gap, int iterations,
                    double secs) {
    StepRecord rec;
    rec.t = t;
    rec.iterations = iterations;
    rec.pairing_version = rs.pairing.version;
    rec.seconds = secs;
    rec.lambda = lambda;
    rec.gap = gap;
    rec.certificate = ncp::check_complementarity(lambda, gap).ok;
    const VectorXd q = observe(rs, w, sc.keep_states);
    if (sc.keep_states) rec.q = q;
    rec.row = sensor_row(rs, t, q, lambda, gap, iterations, rs.pairing.version);
    out.steps.push_back(std::move(rec));
    return q;
  };

  VectorXd lambda = VectorXd::Zero(m);
  VectorXd w_prev2 = w0, w_prev = w1;
  record(sc.time.at(0), w0, lambda, ncp::constraint_F(cs, w0), 0, 0.0);
  record(sc.time.at(1), w1, lambda, ncp::constraint_F(cs, w1), 0, 0.0);

  std::optional<ncp::Evaluator<Mat>> ev;
  const double h = sc.time.h;
  for (Index i = 2; i <= sc.time.intervals(); ++i) {
    const Clock::time_point t_step = Clock::now();
    const double t = sc.time.at(i);
    ncp::StepHistory hist{w_prev, w_prev2, lambda, h, t};
    ncp::Context ctx = ncp::Context::dynamic(mass, hist, load_patterns * rs.loads.factors(t));
    if (!ev) ev.emplace(ops, std::move(ctx));
    else ev->reset(std::move(ctx));
    const ncp::NcpReport rep = ncp::solve_ncp(*ev, lambda, sc.ncp, &lambda);
    out.lcp_restarts += rep.lcp_restarts;
    if (!rep.converged()) {
      out.ok = false;
      out.message = "step " + std::to_string(i) + " (t = " + format_double(t) +
                    "): " + std::string(ncp::to_string(rep.status)) + (rep.message.empty() ? "" : ": " + rep.message);
      if (!rep.residuals.empty()) {
        out.message += "; residuals";
        for (double r : rep.residuals) out.message += " " + format_double(r);
      }
      break;
    }
    const VectorXd q = record(t, rep.w, rep.lambda, rep.f, rep.iterations, 0.0);
    w_prev2 = std::move(w_prev);
    w_prev = rep.w;
    lambda = rep.lambda;

    if (sc.contact_update && m > 0) {
      const contact::PairingUpdate upd =
          contact::update_pairing(rs.pairing, sc.mesh, rs.dofs, q, sc.contact_update_tol);
      if (!upd.changed.empty()) {
        rs.pairing = upd.pairing;
        rs.full_constraints = contact::assemble_constraints(sc.mesh, rs.pairing, rs.dofs);
        cs = model_constraints(rs);
        ev.reset();
        ++out.pairing_changes;
      }
    }
    out.steps.back().seconds = seconds_since(t_step);
  }
  out.online_seconds = seconds_since(online);
}

inline DofPartition reduction_partition(const Scenario& sc, const DofMap& dofs) {
  std::vector<Index> masters = sc.mesh.contact.contact_nodes();
  masters.insert(masters.end(), sc.reduction.extra_master_nodes.begin(), sc.reduction.extra_master_nodes.end());
  if (sc.reduction.promote_stress_neighbors)
    for (Index n : stress_neighborhood(sc.mesh, sc.sensors.stress_nodes))
      if (dofs.dof(n, 0) >= 0) masters.push_back(n);
  return partition_dofs(sc.mesh, dofs, masters);
}

inline mor::ReducedModel build_model(const Scenario& sc, const DofMap& dofs, const fem::SystemMatrices& sys,
                                     const contact::ConstraintSet& cs) {
  const DofPartition part = reduction_partition(sc, dofs);
  if (sc.mode == Mode::ReducedCB) return mor::build_craig_bampton(sys, cs, part, sc.reduction.krylov_dim);
  if (sc.mode == Mode::ReducedPlain) {
    const Index dim = sc.reduction.plain_dim > 0 ? sc.reduction.plain_dim : part.master_count() + sc.reduction.krylov_dim;
    return mor::build_plain_krylov(sys, cs, dim);
  }
  throw std::invalid_argument("no reduced model in full mode");
}

/// A sidecar must have been built for this scenario and mode.
inline void check_model(const Scenario& sc, const DofMap& dofs, const mor::ReducedModel& rm) {
  const bool cb = rm.kind == mor::ReductionKind::CraigBampton;
  if (cb != (sc.mode == Mode::ReducedCB))
    throw std::invalid_argument("reduced model kind " + std::string(mor::to_string(rm.kind)) +
                                " does not match mode " + std::string(to_string(sc.mode)));
  if (rm.full_size() != dofs.free_count)
    throw std::invalid_argument("reduced model has " + std::to_string(rm.full_size()) + " full DOFs, scenario has " +
                                std::to_string(dofs.free_count));
  if (cb && rm.partition.master_dofs != reduction_partition(sc, dofs).master_dofs)
    throw std::invalid_argument("reduced model master DOFs do not match the scenario contact zone");
}

}  // namespace detail

/// Offline phase only: assembly, partition and reduction for a ROM mode.
inline mor::ReducedModel build_reduced_model(const Scenario& sc) {
  sc.mesh.validate();
  const DofMap dofs = make_dof_map(sc.mesh);
  fem::SystemMatrices sys = fem::assemble(sc.mesh, sc.materials, dofs);
  sys.load_position = fem::LoadHistory(sc.loads, dofs).position();
  return detail::build_model(sc, dofs, sys, contact::assemble_constraints(sc.mesh, sc.mesh.contact, dofs));
}

/// Offline phase (assembly, partition, reduction) and online time march.
/// A precomputed reduced model replaces the reduction step. Solver failures
/// end the march early with ok = false and a partial trajectory; invalid
/// input throws.
inline Trajectory run(const Scenario& sc, const mor::ReducedModel* precomputed = nullptr) {
  const detail::Clock::time_point t_offline = detail::Clock::now();
  sc.time.validate();
  sc.mesh.validate();
  Trajectory out;
  out.scenario = sc.name;
  out.mode = sc.mode;
  out.columns = detail::sensor_columns(sc.sensors);

  detail::RunState rs;
  rs.sc = &sc;
  rs.out = &out;
  rs.dofs = make_dof_map(sc.mesh);
  fem::SystemMatrices sys = fem::assemble(sc.mesh, sc.materials, rs.dofs);
  rs.loads = fem::LoadHistory(sc.loads, rs.dofs);
  sys.load_position = rs.loads.position();
  rs.pairing = sc.mesh.contact;
  rs.full_constraints = contact::assemble_constraints(sc.mesh, rs.pairing, rs.dofs);
  for (std::size_t k = 0; k < rs.full_constraints.constraints.size(); ++k) {
    out.columns.push_back("lambda_" + std::to_string(k));
    out.columns.push_back("g_" + std::to_string(k));
  }

  const Index big_n = rs.dofs.free_count;
  MatrixXd patterns(big_n, static_cast<Index>(rs.loads.patterns().size()));
  for (std::size_t i = 0; i < rs.loads.patterns().size(); ++i) patterns.col(static_cast<Index>(i)) = rs.loads.patterns()[i];
  const VectorXd q0 = detail::nodal_to_free(sc.initial_displacement, rs.dofs);
  const VectorXd v0 = detail::nodal_to_free(sc.initial_velocity, rs.dofs);
  const VectorXd q1 = q0 + sc.time.h * v0;

  const Index k = sc.sensors.contact_constraint;
  if (rs.full_constraints.count() > 0 && (k < 0 || k >= rs.full_constraints.count()))
    throw std::invalid_argument("sensor: contact constraint " + std::to_string(k) + " does not exist");

  out.total_dofs = rs.dofs.total_count();
  out.free_dofs = big_n;
  out.constraint_count = rs.full_constraints.count();

  if (sc.mode == Mode::Full) {
    out.reduced_dofs = big_n;
    out.offline_seconds = detail::seconds_since(t_offline);
    detail::march(rs, sys.mass, sys.stiffness, patterns, q0, q1);
    return out;
  }

  if (precomputed) {
    detail::check_model(sc, rs.dofs, *precomputed);
    out.model = *precomputed;
  } else {
    out.model = detail::build_model(sc, rs.dofs, sys, rs.full_constraints);
  }
  rs.rm = &*out.model;
  out.reduced_dofs = rs.rm->size();
  out.master_dofs = rs.rm->master_count();
  out.krylov_dim = rs.rm->krylov_dim;

  std::set<Index> rows;
  auto add_node = [&](Index n) {
    for (int c = 0; c < 2; ++c)
      if (rs.dofs.dof(n, c) >= 0) rows.insert(rs.dofs.dof(n, c));
  };
  for (Index n : rs.pairing.contact_nodes()) add_node(n);
  for (Index n : sc.sensors.displacement_nodes) add_node(n);
  for (Index n : detail::stress_neighborhood(sc.mesh, sc.sensors.stress_nodes)) add_node(n);
  rs.observed_rows.assign(rows.begin(), rows.end());
  rs.tracked = mor::TrackedRows(*rs.rm, rs.observed_rows);

  const MatrixXd red_patterns = rs.rm->basis.transpose() * patterns;
  const VectorXd w0 = mor::project_state(*rs.rm, q0);
  const VectorXd w1 = mor::project_state(*rs.rm, q1);
  out.offline_seconds = detail::seconds_since(t_offline);
  detail::march(rs, rs.rm->mass, rs.rm->stiffness, red_patterns, w0, w1);
  return out;
}

}  // namespace contactrom::sim
