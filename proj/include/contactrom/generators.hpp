#pragma once

// The two reference problems at adjustable resolution.
//
// crack: unit square, left edge clamped, oscillating horizontal force on the
// right edge. A vertical crack runs down from the top edge at x ~ 0.7 over
// ~30% of the height; the left crack face carries the segments and the
// duplicated right-face nodes are the penetrating nodes.
//
// wheelrail: the lower half of a wheel (annulus) resting on a clamped rail
// block. The wheel is free; its nodes carry a constant vertical load and an
// oscillating horizontal (centripetal) load. Rim nodes near the bottom
// penetrate the rail-top segments.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "contactrom/fem.hpp"
#include "contactrom/mesh.hpp"
#include "contactrom/sim.hpp"

namespace contactrom::gen {

struct CrackParams {
  Index nx = 40;
  Index ny = 40;
  double t_end = 20.0;
  double h = 0.05;
  Index krylov_dim = 3;
  double amplitude = 1.5;
  double angular_frequency = 0.1 * std::numbers::pi;
};

struct CrackProblem {
  sim::Scenario scenario;
  CrackFaces faces;
  Index crack_column = 0;
  Index crack_rows = 0;
};

/// Crack column round(0.7 nx), crack length round(0.3 ny) elements.
inline CrackProblem crack_problem(const CrackParams& p) {
  if (p.nx < 3 || p.ny < 3) throw std::invalid_argument("crack: at least 3 x 3 elements are required");
  CrackProblem out;
  out.crack_column = std::clamp<Index>(std::llround(0.7 * static_cast<double>(p.nx)), 1, p.nx - 1);
  out.crack_rows = std::clamp<Index>(std::llround(0.3 * static_cast<double>(p.ny)), 1, p.ny - 1);
  const double xc = static_cast<double>(out.crack_column) / static_cast<double>(p.nx);
  const double y_tip = 1.0 - static_cast<double>(out.crack_rows) / static_cast<double>(p.ny);
  RectMesh rect = build_rect_mesh(p.nx, p.ny, 1.0, 1.0, CrackSpec{Vec2(xc, 1.0), Vec2(xc, y_tip)});
  out.faces = rect.crack;
  Mesh2D& mesh = rect.mesh;
  mesh.dirichlet_nodes = nodes_where(mesh, [](const Vec2& x) { return x.x() < 1e-12; });

  // Segments along the left face from the mouth down to the tip, oriented so
  // that the unnormalised normal points into the right face (+x).
  ContactPairing& pairing = mesh.contact;
  const auto& a = out.faces.face_a;
  const auto& b = out.faces.face_b;
  for (std::size_t k = 0; k + 1 < a.size(); ++k) pairing.segments.push_back({a[k], a[k + 1]});
  for (std::size_t k = 0; k + 1 < a.size(); ++k) {
    pairing.nodes.push_back(b[k]);
    pairing.selecting.push_back(static_cast<Index>(k));
  }

  sim::Scenario& sc = out.scenario;
  sc.name = "crack_" + std::to_string(p.nx) + "x" + std::to_string(p.ny);
  sc.materials = {fem::Material{1000.0, 0.3, 1.0}};
  fem::LoadSpec load;
  load.loaded_nodes = nodes_where(mesh, [](const Vec2& x) { return std::abs(x.x() - 1.0) < 1e-12; });
  load.direction = Vec2::UnitX();
  load.magnitude = fem::Waveform::sine(p.amplitude, p.angular_frequency);
  sc.loads = {load};
  sc.time = {0.0, p.h, p.t_end};
  sc.reduction.krylov_dim = p.krylov_dim;
  // Sensors: the crack mouth on the penetrating side and the top right corner.
  const Index corner = nodes_where(mesh, [](const Vec2& x) {
                         return std::abs(x.x() - 1.0) < 1e-12 && std::abs(x.y() - 1.0) < 1e-12;
                       }).front();
  sc.sensors.displacement_nodes = {b.front(), corner};
  sc.sensors.contact_constraint = 0;
  sc.mesh = std::move(mesh);
  return out;
}

struct WheelRailParams {
  Index wheel_radial = 4;
  Index wheel_angular = 47;  // odd: the wheel rests on a rim edge, not on a vertex
  double wheel_radius = 0.46;
  double hub_radius = 0.1;
  Index rail_nx = 41;
  Index rail_ny = 10;
  double rail_half_width = 0.205;
  double rail_height = 0.1;
  Index contact_nodes_per_side = 3;
  double segment_half_width = 0.1;  // rail-top segments cover |x| <= this
  double vertical_load = 80000.0;
  double horizontal_load = 25000.0;
  double frequency_hz = 4.0;
  double t_end = 0.5;
  double h = 1e-3;
  Index krylov_dim = 3;
};

inline sim::Scenario wheelrail_scenario(const WheelRailParams& p) {
  if (p.wheel_radial < 1 || p.wheel_angular < 3 || p.rail_nx < 2 || p.rail_ny < 1)
    throw std::invalid_argument("wheelrail: resolution too small");
  if (!(p.hub_radius > 0 && p.hub_radius < p.wheel_radius))
    throw std::invalid_argument("wheelrail: need 0 < hub radius < wheel radius");
  Mesh2D mesh;
  mesh.kind = ElementKind::Q4;
  const double pi = std::numbers::pi;
  const double dtheta = pi / static_cast<double>(p.wheel_angular);
  // Lowest rim point of the polygonal rim sits at y = 0.
  const double lowest = (p.wheel_angular % 2 == 1) ? std::cos(0.5 * dtheta) : 1.0;
  const Vec2 centre(0.0, p.wheel_radius * lowest);

  // Wheel: node (ir, it) at radius r_ir and angle pi + it dtheta.
  const Index nr = p.wheel_radial, nt = p.wheel_angular;
  auto wheel_id = [&](Index ir, Index it) { return it * (nr + 1) + ir; };
  for (Index it = 0; it <= nt; ++it) {
    const double th = pi + static_cast<double>(it) * dtheta;
    for (Index ir = 0; ir <= nr; ++ir) {
      const double r = p.hub_radius + (p.wheel_radius - p.hub_radius) * static_cast<double>(ir) / static_cast<double>(nr);
      mesh.nodes.push_back(centre + r * Vec2(std::cos(th), std::sin(th)));
      mesh.body_id.push_back(0);
    }
  }
  for (Index it = 0; it < nt; ++it)
    for (Index ir = 0; ir < nr; ++ir)
      mesh.elements.push_back({wheel_id(ir, it), wheel_id(ir + 1, it), wheel_id(ir + 1, it + 1), wheel_id(ir, it + 1)});
  const Index n_wheel = mesh.node_count();

  // Rail block [-w, w] x [-height, 0], bottom clamped.
  const Index rx = p.rail_nx, ry = p.rail_ny;
  auto rail_id = [&](Index i, Index j) { return n_wheel + j * (rx + 1) + i; };
  for (Index j = 0; j <= ry; ++j)
    for (Index i = 0; i <= rx; ++i) {
      mesh.nodes.emplace_back(-p.rail_half_width + 2.0 * p.rail_half_width * static_cast<double>(i) / static_cast<double>(rx),
                              -p.rail_height + p.rail_height * static_cast<double>(j) / static_cast<double>(ry));
      mesh.body_id.push_back(1);
    }
  for (Index j = 0; j < ry; ++j)
    for (Index i = 0; i < rx; ++i)
      mesh.elements.push_back({rail_id(i, j), rail_id(i + 1, j), rail_id(i + 1, j + 1), rail_id(i, j + 1)});
  for (Index i = 0; i <= rx; ++i) mesh.dirichlet_nodes.push_back(rail_id(i, 0));

  // Rail-top segments, left to right (normal +y).
  ContactPairing& pairing = mesh.contact;
  std::vector<Index> top;
  for (Index i = 0; i <= rx; ++i)
    if (std::abs(mesh.nodes[rail_id(i, ry)].x()) <= p.segment_half_width + 1e-12) top.push_back(rail_id(i, ry));
  if (top.size() < 2) throw std::invalid_argument("wheelrail: no rail-top segments");
  for (std::size_t s = 0; s + 1 < top.size(); ++s) pairing.segments.push_back({top[s], top[s + 1]});

  // Rim nodes closest to the bottom, each paired with the segment below it.
  std::vector<Index> rim;
  for (Index it = 0; it <= nt; ++it) rim.push_back(wheel_id(nr, it));
  std::sort(rim.begin(), rim.end(), [&](Index a, Index b) {
    const double ya = mesh.nodes[a].y(), yb = mesh.nodes[b].y();
    return ya != yb ? ya < yb : mesh.nodes[a].x() < mesh.nodes[b].x();
  });
  const Index want = std::min<Index>(2 * p.contact_nodes_per_side - (nt % 2 == 0 ? 1 : 0), static_cast<Index>(rim.size()));
  rim.resize(want);
  std::sort(rim.begin(), rim.end(), [&](Index a, Index b) { return mesh.nodes[a].x() < mesh.nodes[b].x(); });
  for (Index r : rim) {
    const double x = mesh.nodes[r].x();
    Index seg = -1;
    for (std::size_t s = 0; s < pairing.segments.size(); ++s) {
      const double x0 = mesh.nodes[pairing.segments[s].start].x(), x1 = mesh.nodes[pairing.segments[s].end].x();
      if (x >= x0 - 1e-12 && x <= x1 + 1e-12) {
        seg = static_cast<Index>(s);
        break;
      }
    }
    if (seg < 0) throw std::invalid_argument("wheelrail: rim node outside the segment range");
    pairing.nodes.push_back(r);
    pairing.selecting.push_back(seg);
  }

  sim::Scenario sc;
  sc.name = "wheelrail";
  const fem::Material steel{206940e6, 0.288, 7850.0};
  sc.materials = {steel, steel};
  std::vector<Index> wheel_nodes(static_cast<std::size_t>(n_wheel));
  for (Index i = 0; i < n_wheel; ++i) wheel_nodes[i] = i;
  const double per_node = 1.0 / static_cast<double>(n_wheel);
  fem::LoadSpec vertical{wheel_nodes, Vec2(0.0, -1.0), fem::Waveform::constant(p.vertical_load * per_node)};
  // cos waveform: starts at full amplitude, so the horizontal motion does not drift.
  fem::LoadSpec horizontal{wheel_nodes, Vec2::UnitX(),
                           fem::Waveform::sine_hz(p.horizontal_load * per_node, p.frequency_hz, 0.5 * pi)};
  sc.loads = {vertical, horizontal};
  sc.time = {0.0, p.h, p.t_end};
  sc.reduction.krylov_dim = p.krylov_dim;
  sc.contact_update = true;

  // Sensor: the rim node closest to the wheel's vertical axis (left one on a tie).
  Index sensor_k = 0;
  for (Index k = 1; k < pairing.constraint_count(); ++k)
    if (std::abs(mesh.nodes[pairing.nodes[k]].x()) < std::abs(mesh.nodes[pairing.nodes[sensor_k]].x()) - 1e-12)
      sensor_k = k;
  sc.sensors.contact_constraint = sensor_k;
  sc.sensors.displacement_nodes = {pairing.nodes[sensor_k]};
  const Index rail_sensor = pairing.segments[pairing.selecting[sensor_k]].end;
  sc.sensors.stress_nodes = {pairing.nodes[sensor_k], rail_sensor};
  sc.mesh = std::move(mesh);
  return sc;
}

}  // namespace contactrom::gen
