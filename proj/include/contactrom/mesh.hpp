#pragma once

/**
 * @file mesh.hpp
 * @brief Planar meshes, the line-oriented mesh file format, structured
 *        rectangle generation (with optional crack) and DOF bookkeeping.
 *
 * Mesh file layout (0-based indices, '#' starts a comment):
 *
 *     NODES n
 *     x y [body_id]                 (n lines)
 *     ELEMENTS k Q4|T3
 *     i j k [l]                     (k lines)
 *     DIRICHLET d
 *     i                             (d indices, whitespace separated)
 *     CONTACT_SEGMENTS s
 *     p p_tilde                     (s lines, stored in adjacency order)
 *     CONTACT_NODES c
 *     r segment_position            (c lines)
 *
 * save_mesh() emits the canonical form: sections in the order above, empty
 * optional sections omitted, body ids written only for multi-body meshes,
 * numbers in shortest round-trip form.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "contactrom/format.hpp"
#include "contactrom/shape.hpp"

namespace contactrom {

using Index = Eigen::Index;
using Vec2 = Eigen::Vector2d;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ElementKind { Q4, T3 };

inline int nodes_per_element(ElementKind kind) { return kind == ElementKind::Q4 ? 4 : 3; }

inline std::string_view to_string(ElementKind kind) {
  return kind == ElementKind::Q4 ? "Q4" : "T3";
}

/// Contact segment between two neighbouring surface nodes.
struct Segment {
  Index start = 0;
  Index end = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Penetrating nodes, the ordered segment list and the selecting function
/// (node position -> segment position). `version` counts pairing updates.
struct ContactPairing {
  std::vector<Index> nodes;
  std::vector<Segment> segments;
  std::vector<Index> selecting;
  int version = 0;

  bool empty() const { return nodes.empty() && segments.empty(); }
  Index constraint_count() const { return static_cast<Index>(nodes.size()); }

  /// Every node touched by the contact zone, ascending and unique.
  std::vector<Index> contact_nodes() const {
    std::vector<Index> all(nodes);
    for (const auto& s : segments) {
      all.push_back(s.start);
      all.push_back(s.end);
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
  }

  void validate(Index node_count) const {
    if (selecting.size() != nodes.size())
      throw MeshError("contact pairing: selecting function must cover every contact node");
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s];
      if (seg.start < 0 || seg.start >= node_count || seg.end < 0 || seg.end >= node_count)
        throw MeshError("contact segment " + std::to_string(s) + " references a missing node");
      if (seg.start == seg.end)
        throw MeshError("contact segment " + std::to_string(s) + " has coincident end nodes");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] < 0 || nodes[i] >= node_count)
        throw MeshError("contact node " + std::to_string(i) + " references a missing node");
      if (selecting[i] < 0 || selecting[i] >= static_cast<Index>(segments.size()))
        throw MeshError("contact node " + std::to_string(i) + " selects a missing segment");
      const auto& seg = segments[selecting[i]];
      if (seg.start == nodes[i] || seg.end == nodes[i])
        throw MeshError("contact node " + std::to_string(i) + " is an end node of its own segment");
    }
  }
};

struct Mesh2D {
  std::vector<Vec2> nodes;
  ElementKind kind = ElementKind::Q4;
  /// Node indices per element; only the first nodes_per_element(kind) are used.
  std::vector<std::array<Index, 4>> elements;
  std::vector<Index> dirichlet_nodes;
  std::vector<int> body_id;
  ContactPairing contact;

  Index node_count() const { return static_cast<Index>(nodes.size()); }
  Index element_count() const { return static_cast<Index>(elements.size()); }
  int element_size() const { return nodes_per_element(kind); }
  int body_of(Index node) const { return body_id.empty() ? 0 : body_id[node]; }

  bool multi_body() const {
    return std::any_of(body_id.begin(), body_id.end(), [](int b) { return b != 0; });
  }

  Eigen::Matrix<double, 2, Eigen::Dynamic> element_coords(Index e) const {
    const int n = element_size();
    Eigen::Matrix<double, 2, Eigen::Dynamic> xy(2, n);
    for (int a = 0; a < n; ++a) xy.col(a) = nodes[elements[e][a]];
    return xy;
  }

  /// Throws MeshError naming the offending element/node.
  void validate() const {
    const Index n = node_count();
    if (!body_id.empty() && static_cast<Index>(body_id.size()) != n)
      throw MeshError("body_id list length does not match node count");
    const int per = element_size();
    for (Index e = 0; e < element_count(); ++e) {
      const auto& el = elements[e];
      for (int a = 0; a < per; ++a) {
        if (el[a] < 0 || el[a] >= n)
          throw MeshError("element " + std::to_string(e) + " references node " +
                          std::to_string(el[a]) + " of " + std::to_string(n));
      }
      for (int a = 1; a < per; ++a) {
        if (body_of(el[a]) != body_of(el[0]))
          throw MeshError("element " + std::to_string(e) + " spans two bodies");
      }
      if (kind == ElementKind::T3) {
        if (!(shape::t3_twice_area(nodes[el[0]], nodes[el[1]], nodes[el[2]]) > 0.0))
          throw MeshError("element " + std::to_string(e) + " is degenerate (non-positive area)");
      } else {
        Eigen::Matrix<double, 2, 4> xy;
        for (int a = 0; a < 4; ++a) xy.col(a) = nodes[el[a]];
        for (const auto& gp : shape::kQ4GaussPoints) {
          const Eigen::Matrix2d jac = shape::q4_local_gradients(gp[0], gp[1]) * xy.transpose();
          if (!(jac.determinant() > 0.0))
            throw MeshError("element " + std::to_string(e) +
                            " is degenerate (non-positive Jacobian at a Gauss point)");
        }
      }
    }
    for (Index d : dirichlet_nodes) {
      if (d < 0 || d >= n)
        throw MeshError("Dirichlet node " + std::to_string(d) + " does not exist");
    }
    contact.validate(n);
  }
};

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

namespace detail {

struct LineReader {
  std::istream& in;
  int line_no = 0;

  /// Next non-empty line with comments stripped; false at EOF.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      tokens.clear();
      for (std::string tok; ss >> tok;) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw MeshError("mesh parse error at line " + std::to_string(line_no) + ": " + what);
  }

  Index count(const std::vector<std::string>& tokens, std::size_t pos) const {
    long long v = 0;
    if (tokens.size() <= pos || !parse_int(tokens[pos], v) || v < 0)
      fail("expected a non-negative count after " + tokens[0]);
    return static_cast<Index>(v);
  }

  Index index(const std::string& tok) const {
    long long v = 0;
    if (!parse_int(tok, v)) fail("expected an integer index, got '" + tok + "'");
    return static_cast<Index>(v);
  }

  double real(const std::string& tok) const {
    double v = 0;
    if (!parse_double(tok, v)) fail("expected a number, got '" + tok + "'");
    return v;
  }
};

}  // namespace detail

inline Mesh2D parse_mesh(std::istream& in) {
  detail::LineReader reader{in};
  Mesh2D mesh;
  std::vector<std::string> tok;
  bool have_nodes = false, have_elements = false;
  std::vector<std::pair<Index, Index>> contact_rows;

  auto expect_row = [&](std::size_t min_tokens, std::size_t max_tokens, const char* section) {
    if (!reader.next(tok)) reader.fail(std::string("unexpected end of file in ") + section);
    if (tok.size() < min_tokens || tok.size() > max_tokens)
      reader.fail(std::string("wrong number of fields in ") + section + " row");
  };

  while (reader.next(tok)) {
    const std::string& key = tok[0];
    if (key == "NODES") {
      const Index n = reader.count(tok, 1);
      mesh.nodes.resize(n);
      std::vector<int> bodies(n, 0);
      bool any_body = false;
      for (Index i = 0; i < n; ++i) {
        expect_row(2, 3, "NODES");
        mesh.nodes[i] = Vec2(reader.real(tok[0]), reader.real(tok[1]));
        if (tok.size() == 3) {
          bodies[i] = static_cast<int>(reader.index(tok[2]));
          any_body = true;
        }
      }
      if (any_body) mesh.body_id = std::move(bodies);
      have_nodes = true;
    } else if (key == "ELEMENTS") {
      const Index k = reader.count(tok, 1);
      if (tok.size() != 3) reader.fail("ELEMENTS header needs a count and a kind");
      if (tok[2] == "Q4") {
        mesh.kind = ElementKind::Q4;
      } else if (tok[2] == "T3") {
        mesh.kind = ElementKind::T3;
      } else {
        reader.fail("unknown element kind '" + tok[2] + "'");
      }
      const auto per = static_cast<std::size_t>(mesh.element_size());
      mesh.elements.resize(k);
      for (Index e = 0; e < k; ++e) {
        expect_row(per, per, "ELEMENTS");
        std::array<Index, 4> el{0, 0, 0, 0};
        for (std::size_t a = 0; a < per; ++a) el[a] = reader.index(tok[a]);
        mesh.elements[e] = el;
      }
      have_elements = true;
    } else if (key == "DIRICHLET") {
      const Index d = reader.count(tok, 1);
      mesh.dirichlet_nodes.clear();
      while (static_cast<Index>(mesh.dirichlet_nodes.size()) < d) {
        if (!reader.next(tok)) reader.fail("unexpected end of file in DIRICHLET");
        for (const auto& t : tok) mesh.dirichlet_nodes.push_back(reader.index(t));
      }
      if (static_cast<Index>(mesh.dirichlet_nodes.size()) != d)
        reader.fail("DIRICHLET lists more indices than declared");
    } else if (key == "CONTACT_SEGMENTS") {
      const Index s = reader.count(tok, 1);
      mesh.contact.segments.resize(s);
      for (Index i = 0; i < s; ++i) {
        expect_row(2, 2, "CONTACT_SEGMENTS");
        mesh.contact.segments[i] = {reader.index(tok[0]), reader.index(tok[1])};
      }
    } else if (key == "CONTACT_NODES") {
      const Index c = reader.count(tok, 1);
      contact_rows.resize(c);
      for (Index i = 0; i < c; ++i) {
        expect_row(2, 2, "CONTACT_NODES");
        contact_rows[i] = {reader.index(tok[0]), reader.index(tok[1])};
      }
    } else {
      reader.fail("unknown section '" + key + "'");
    }
  }
  if (!have_nodes) throw MeshError("mesh parse error: missing NODES section");
  if (!have_elements) throw MeshError("mesh parse error: missing ELEMENTS section");
  for (const auto& [node, seg] : contact_rows) {
    mesh.contact.nodes.push_back(node);
    mesh.contact.selecting.push_back(seg);
  }
  std::sort(mesh.dirichlet_nodes.begin(), mesh.dirichlet_nodes.end());
  mesh.validate();
  return mesh;
}

inline Mesh2D load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");
  return parse_mesh(in);
}

inline void write_mesh(std::ostream& out, const Mesh2D& mesh) {
  const bool bodies = mesh.multi_body();
  out << "NODES " << mesh.node_count() << '\n';
  for (Index i = 0; i < mesh.node_count(); ++i) {
    out << format_double(mesh.nodes[i].x()) << ' ' << format_double(mesh.nodes[i].y());
    if (bodies) out << ' ' << mesh.body_id[i];
    out << '\n';
  }
  out << "ELEMENTS " << mesh.element_count() << ' ' << to_string(mesh.kind) << '\n';
  for (const auto& el : mesh.elements) {
    for (int a = 0; a < mesh.element_size(); ++a) out << (a ? " " : "") << el[a];
    out << '\n';
  }
  if (!mesh.dirichlet_nodes.empty()) {
    out << "DIRICHLET " << mesh.dirichlet_nodes.size() << '\n';
    for (Index d : mesh.dirichlet_nodes) out << d << '\n';
  }
  if (!mesh.contact.segments.empty()) {
    out << "CONTACT_SEGMENTS " << mesh.contact.segments.size() << '\n';
    for (const auto& s : mesh.contact.segments) out << s.start << ' ' << s.end << '\n';
  }
  if (!mesh.contact.nodes.empty()) {
    out << "CONTACT_NODES " << mesh.contact.nodes.size() << '\n';
    for (std::size_t i = 0; i < mesh.contact.nodes.size(); ++i)
      out << mesh.contact.nodes[i] << ' ' << mesh.contact.selecting[i] << '\n';
  }
}

inline void save_mesh(const std::string& path, const Mesh2D& mesh) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path + "'");
  write_mesh(out, mesh);
}

// ---------------------------------------------------------------------------
// Structured rectangle with an optional crack
// ---------------------------------------------------------------------------

/// Straight crack along a grid line, given by its two end points. An end
/// point on the outer boundary is a crack mouth (split); an interior end
/// point is a tip (shared by both faces).
struct CrackSpec {
  Vec2 from;
  Vec2 to;
};

/// Face-pairing table of a generated crack. `face_a[i]` is the node on the
/// -x (vertical crack) or -y (horizontal crack) side, `face_b[i]` its
/// partner on the other side; the two coincide at tips. Ordered from
/// CrackSpec::from to CrackSpec::to.
struct CrackFaces {
  std::vector<Index> face_a;
  std::vector<Index> face_b;

  Index duplicated_count() const {
    Index n = 0;
    for (std::size_t i = 0; i < face_a.size(); ++i) n += face_a[i] != face_b[i];
    return n;
  }
};

struct RectMesh {
  Mesh2D mesh;
  CrackFaces crack;
};

/// Conforming Q4 grid on [0,width] x [0,height]; nodes ordered
/// lexicographically by (y, x), a crack duplicate directly after its original.
inline RectMesh build_rect_mesh(Index nx, Index ny, double width, double height,
                                const std::optional<CrackSpec>& crack = std::nullopt) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_rect_mesh: nx and ny must be >= 1");
  if (!(width > 0) || !(height > 0))
    throw std::invalid_argument("build_rect_mesh: width and height must be positive");
  const double dx = width / static_cast<double>(nx), dy = height / static_cast<double>(ny);

  // Crack in grid coordinates.
  bool vertical = false;
  Index line = -1, lo = 0, hi = -1;
  bool reversed = false;
  if (crack) {
    auto snap = [](double v, double step, Index count, const char* what) {
      const double s = v / step;
      const double r = std::round(s);
      if (std::abs(s - r) > 1e-9 * std::max<double>(1.0, static_cast<double>(count)) || r < 0 ||
          r > static_cast<double>(count))
        throw MeshError(std::string("crack end point is not on a mesh line (") + what + " = " +
                        format_double(v) + ")");
      return static_cast<Index>(r);
    };
    const Index i0 = snap(crack->from.x(), dx, nx, "x"), j0 = snap(crack->from.y(), dy, ny, "y");
    const Index i1 = snap(crack->to.x(), dx, nx, "x"), j1 = snap(crack->to.y(), dy, ny, "y");
    if (i0 == i1 && j0 != j1) {
      vertical = true;
      line = i0;
      lo = std::min(j0, j1);
      hi = std::max(j0, j1);
      reversed = j0 > j1;
      if (line == 0 || line == nx) throw MeshError("crack lies on the outer boundary");
    } else if (j0 == j1 && i0 != i1) {
      vertical = false;
      line = j0;
      lo = std::min(i0, i1);
      hi = std::max(i0, i1);
      reversed = i0 > i1;
      if (line == 0 || line == ny) throw MeshError("crack lies on the outer boundary");
    } else {
      throw MeshError("crack must be a non-degenerate axis-aligned mesh line");
    }
    const Index along_max = vertical ? ny : nx;
    if (lo == 0 && hi == along_max) throw MeshError("crack would split the body in two");
  }
  const Index along_max = vertical ? ny : nx;

  auto on_crack = [&](Index i, Index j) {
    if (line < 0) return false;
    const Index across = vertical ? i : j, along = vertical ? j : i;
    return across == line && along >= lo && along <= hi;
  };
  auto duplicated = [&](Index i, Index j) {
    if (!on_crack(i, j)) return false;
    const Index along = vertical ? j : i;
    const bool tip = (along == lo && lo != 0) || (along == hi && hi != along_max);
    return !tip;
  };

  RectMesh out;
  Mesh2D& mesh = out.mesh;
  mesh.kind = ElementKind::Q4;
  std::vector<Index> id((nx + 1) * (ny + 1)), dup((nx + 1) * (ny + 1), -1);
  for (Index j = 0; j <= ny; ++j) {
    for (Index i = 0; i <= nx; ++i) {
      const Vec2 xy(static_cast<double>(i) * dx, static_cast<double>(j) * dy);
      id[j * (nx + 1) + i] = mesh.node_count();
      mesh.nodes.push_back(xy);
      if (duplicated(i, j)) {
        dup[j * (nx + 1) + i] = mesh.node_count();
        mesh.nodes.push_back(xy);
      }
    }
  }
  for (Index ej = 0; ej < ny; ++ej) {
    for (Index ei = 0; ei < nx; ++ei) {
      std::array<Index, 2> is{ei, ei + 1}, js{ej, ej + 1};
      std::array<std::array<Index, 2>, 4> corners{{{is[0], js[0]}, {is[1], js[0]},
                                                   {is[1], js[1]}, {is[0], js[1]}}};
      // Elements on the +x / +y side of the crack take the duplicates.
      const bool b_side = line >= 0 && (vertical ? (ei == line && ej >= lo && ej < hi)
                                                 : (ej == line && ei >= lo && ei < hi));
      std::array<Index, 4> el{};
      for (int a = 0; a < 4; ++a) {
        const Index k = corners[a][1] * (nx + 1) + corners[a][0];
        el[a] = (b_side && dup[k] >= 0) ? dup[k] : id[k];
      }
      mesh.elements.push_back(el);
    }
  }
  if (line >= 0) {
    for (Index s = lo; s <= hi; ++s) {
      const Index i = vertical ? line : s, j = vertical ? s : line;
      const Index k = j * (nx + 1) + i;
      out.crack.face_a.push_back(id[k]);
      out.crack.face_b.push_back(dup[k] >= 0 ? dup[k] : id[k]);
    }
    if (reversed) {
      std::reverse(out.crack.face_a.begin(), out.crack.face_a.end());
      std::reverse(out.crack.face_b.begin(), out.crack.face_b.end());
    }
  }
  return out;
}

/// Nodes whose coordinates satisfy `pred`, ascending.
template <class Pred>
std::vector<Index> nodes_where(const Mesh2D& mesh, Pred pred) {
  std::vector<Index> out;
  for (Index i = 0; i < mesh.node_count(); ++i)
    if (pred(mesh.nodes[i])) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// DOF numbering and master/slave partition
// ---------------------------------------------------------------------------

/// Node DOFs 2i (x) and 2i+1 (y); Dirichlet DOFs are eliminated and the rest
/// renumbered consecutively in node order.
struct DofMap {
  std::vector<Index> free_index;  // per full DOF, -1 when fixed
  Index free_count = 0;

  Index total_count() const { return static_cast<Index>(free_index.size()); }
  Index dof(Index node, int component) const { return free_index[2 * node + component]; }
};

inline DofMap make_dof_map(const Mesh2D& mesh, bool eliminate_dirichlet = true) {
  DofMap map;
  map.free_index.assign(2 * mesh.node_count(), 0);
  if (eliminate_dirichlet) {
    for (Index d : mesh.dirichlet_nodes) {
      map.free_index[2 * d] = -1;
      map.free_index[2 * d + 1] = -1;
    }
  }
  for (auto& f : map.free_index) f = (f < 0) ? -1 : map.free_count++;
  return map;
}

/// Free DOFs split into masters (both DOFs of every contact node) followed by
/// slaves (everything else), each block in ascending free-DOF order.
struct DofPartition {
  std::vector<Index> master_dofs;
  std::vector<Index> slave_dofs;
  std::vector<Index> full_to_reordered;  // free DOF -> position in [master; slave]

  Index master_count() const { return static_cast<Index>(master_dofs.size()); }
  Index slave_count() const { return static_cast<Index>(slave_dofs.size()); }
  Index size() const { return master_count() + slave_count(); }

  /// Position of a free DOF inside the master block, -1 for slaves.
  Index master_position(Index free_dof) const {
    const Index p = full_to_reordered[free_dof];
    return p < master_count() ? p : -1;
  }

  Eigen::VectorXd reorder(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out[full_to_reordered[i]] = v[i];
    return out;
  }

  Eigen::VectorXd restore(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out[i] = v[full_to_reordered[i]];
    return out;
  }
};

inline DofPartition partition_dofs(const Mesh2D& mesh, const DofMap& map,
                                   std::vector<Index> contact_nodes) {
  std::sort(contact_nodes.begin(), contact_nodes.end());
  contact_nodes.erase(std::unique(contact_nodes.begin(), contact_nodes.end()), contact_nodes.end());
  DofPartition part;
  std::vector<char> is_master(map.free_count, 0);
  for (Index node : contact_nodes) {
    if (node < 0 || node >= mesh.node_count())
      throw MeshError("contact node " + std::to_string(node) + " does not exist");
    for (int c = 0; c < 2; ++c) {
      const Index d = map.dof(node, c);
      if (d < 0)
        throw MeshError("contact node " + std::to_string(node) + " is Dirichlet-fixed");
      part.master_dofs.push_back(d);
      is_master[d] = 1;
    }
  }
  for (Index d = 0; d < map.free_count; ++d)
    if (!is_master[d]) part.slave_dofs.push_back(d);
  part.full_to_reordered.assign(map.free_count, -1);
  for (Index p = 0; p < part.master_count(); ++p) part.full_to_reordered[part.master_dofs[p]] = p;
  for (Index p = 0; p < part.slave_count(); ++p)
    part.full_to_reordered[part.slave_dofs[p]] = part.master_count() + p;
  return part;
}

inline DofPartition partition_dofs(const Mesh2D& mesh, std::vector<Index> contact_nodes) {
  return partition_dofs(mesh, make_dof_map(mesh), std::move(contact_nodes));
}

}  // namespace contactrom
