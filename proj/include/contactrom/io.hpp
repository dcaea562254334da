#pragma once

// Text artifacts around a simulation: the JSON scenario file (which points
// at a mesh file), the trajectory CSV, the JSON run summary and the
// comparison of two trajectories.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "contactrom/format.hpp"
#include "contactrom/mesh.hpp"
#include "contactrom/ncp.hpp"
#include "contactrom/sim.hpp"

namespace contactrom::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Missing or unreadable files; the CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

namespace detail {

inline Json vec2_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Vec2 vec2_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument(what + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
T value_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Json waveform_json(const fem::Waveform& w) {
  Json j;
  if (w.kind == fem::Waveform::Kind::Constant) {
    j["kind"] = "constant";
    j["amplitude"] = w.amplitude;
  } else {
    j["kind"] = "sine";
    j["amplitude"] = w.amplitude;
    j["angular_frequency"] = w.angular_frequency;
    j["phase"] = w.phase;
  }
  return j;
}

inline fem::Waveform waveform_from(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return fem::Waveform::constant(j.at("amplitude").get<double>());
  if (kind == "sine") {
    if (j.contains("frequency_hz"))
      return fem::Waveform::sine_hz(j.at("amplitude").get<double>(), j.at("frequency_hz").get<double>(),
                                    value_or(j, "phase", 0.0));
    return fem::Waveform::sine(j.at("amplitude").get<double>(), j.at("angular_frequency").get<double>(),
                               value_or(j, "phase", 0.0));
  }
  throw std::invalid_argument("waveform: unknown kind '" + kind + "'");
}

inline Json nodal_json(const std::vector<sim::NodalVector>& v) {
  Json a = Json::array();
  for (const auto& nv : v) a.push_back(Json{{"node", nv.node}, {"value", vec2_json(nv.value)}});
  return a;
}

inline std::vector<sim::NodalVector> nodal_from(const Json& j) {
  std::vector<sim::NodalVector> out;
  for (const auto& e : j) out.push_back({e.at("node").get<Index>(), vec2_from(e.at("value"), "initial value")});
  return out;
}

}  // namespace detail

/// Scenario document; `mesh_file` is stored verbatim (relative paths are
/// resolved against the scenario file's directory on load).
inline Json scenario_json(const sim::Scenario& sc, const std::string& mesh_file) {
  Json j;
  j["name"] = sc.name;
  j["mesh"] = mesh_file;
  Json mats = Json::array();
  for (const auto& m : sc.materials)
    mats.push_back(Json{{"young_modulus", m.young_modulus}, {"poisson_ratio", m.poisson_ratio}, {"density", m.density}});
  j["materials"] = mats;
  Json loads = Json::array();
  for (const auto& l : sc.loads)
    loads.push_back(Json{{"nodes", l.loaded_nodes},
                         {"direction", detail::vec2_json(l.direction)},
                         {"waveform", detail::waveform_json(l.magnitude)}});
  j["loads"] = loads;
  j["time"] = Json{{"t0", sc.time.t0}, {"h", sc.time.h}, {"t_end", sc.time.t_end}};
  j["initial"] = Json{{"displacement", detail::nodal_json(sc.initial_displacement)},
                      {"velocity", detail::nodal_json(sc.initial_velocity)}};
  j["contact"] = Json{{"update", sc.contact_update}, {"tolerance", sc.contact_update_tol}};
  j["solver"] = Json{{"tol", sc.ncp.tol}, {"max_iter", sc.ncp.max_iter}, {"lagged_stiffness", sc.ncp.lagged_stiffness}};
  j["reduction"] = Json{{"mode", std::string(sim::to_string(sc.mode))},
                        {"krylov_dim", sc.reduction.krylov_dim},
                        {"plain_dim", sc.reduction.plain_dim},
                        {"extra_master_nodes", sc.reduction.extra_master_nodes},
                        {"promote_stress_neighbors", sc.reduction.promote_stress_neighbors}};
  j["sensors"] = Json{{"displacement_nodes", sc.sensors.displacement_nodes},
                      {"contact_constraint", sc.sensors.contact_constraint},
                      {"stress_nodes", sc.sensors.stress_nodes}};
  return j;
}

/// Builds a scenario from a parsed document; `base` resolves the mesh path.
inline sim::Scenario scenario_from_json(const Json& j, const fs::path& base) {
  sim::Scenario sc;
  try {
    sc.name = detail::value_or<std::string>(j, "name", "scenario");
    fs::path mesh_path = j.at("mesh").get<std::string>();
    if (mesh_path.is_relative()) mesh_path = base / mesh_path;
    if (!fs::exists(mesh_path)) throw IoError("mesh file not found: " + mesh_path.string());
    sc.mesh = load_mesh(mesh_path.string());
    for (const auto& m : j.at("materials"))
      sc.materials.push_back(
          {m.at("young_modulus").get<double>(), m.at("poisson_ratio").get<double>(), m.at("density").get<double>()});
    if (j.contains("loads"))
      for (const auto& l : j.at("loads"))
        sc.loads.push_back({l.at("nodes").get<std::vector<Index>>(), detail::vec2_from(l.at("direction"), "load direction"),
                            detail::waveform_from(l.at("waveform"))});
    const Json& t = j.at("time");
    sc.time = {detail::value_or(t, "t0", 0.0), t.at("h").get<double>(), t.at("t_end").get<double>()};
    if (j.contains("initial")) {
      const Json& ini = j.at("initial");
      if (ini.contains("displacement")) sc.initial_displacement = detail::nodal_from(ini.at("displacement"));
      if (ini.contains("velocity")) sc.initial_velocity = detail::nodal_from(ini.at("velocity"));
    }
    if (j.contains("contact")) {
      sc.contact_update = detail::value_or(j.at("contact"), "update", false);
      sc.contact_update_tol = detail::value_or(j.at("contact"), "tolerance", contact::kDefaultPairingTolerance);
    }
    if (j.contains("solver")) {
      const Json& s = j.at("solver");
      sc.ncp.tol = detail::value_or(s, "tol", 0.0);
      sc.ncp.max_iter = detail::value_or(s, "max_iter", sc.ncp.max_iter);
      sc.ncp.lagged_stiffness = detail::value_or(s, "lagged_stiffness", false);
    }
    if (j.contains("reduction")) {
      const Json& r = j.at("reduction");
      const std::string mode = detail::value_or<std::string>(r, "mode", "full");
      const auto m = sim::parse_mode(mode);
      if (!m) throw std::invalid_argument("reduction.mode: unknown mode '" + mode + "'");
      sc.mode = *m;
      sc.reduction.krylov_dim = detail::value_or<Index>(r, "krylov_dim", sc.reduction.krylov_dim);
      sc.reduction.plain_dim = detail::value_or<Index>(r, "plain_dim", 0);
      sc.reduction.extra_master_nodes = detail::value_or(r, "extra_master_nodes", std::vector<Index>{});
      sc.reduction.promote_stress_neighbors = detail::value_or(r, "promote_stress_neighbors", false);
    }
    if (j.contains("sensors")) {
      const Json& s = j.at("sensors");
      sc.sensors.displacement_nodes = detail::value_or(s, "displacement_nodes", std::vector<Index>{});
      sc.sensors.contact_constraint = detail::value_or<Index>(s, "contact_constraint", 0);
      sc.sensors.stress_nodes = detail::value_or(s, "stress_nodes", std::vector<Index>{});
    }
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  for (const auto& m : sc.materials) m.validate();
  for (Index n : sc.sensors.displacement_nodes)
    if (n < 0 || n >= sc.mesh.node_count()) throw std::invalid_argument("sensor node " + std::to_string(n) + " does not exist");
  for (Index n : sc.sensors.stress_nodes)
    if (n < 0 || n >= sc.mesh.node_count()) throw std::invalid_argument("stress node " + std::to_string(n) + " does not exist");
  return sc;
}

inline sim::Scenario load_scenario(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("scenario file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

/// Writes <dir>/<stem>.json and <dir>/<stem>.mesh.
inline void save_scenario(const fs::path& dir, const std::string& stem, const sim::Scenario& sc) {
  fs::create_directories(dir);
  save_mesh((dir / (stem + ".mesh")).string(), sc.mesh);
  write_text(dir / (stem + ".json"), scenario_json(sc, stem + ".mesh").dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

/// Header row with the column names, then one row per recorded step; values
/// use the shortest round-trip decimal form.
inline std::string trajectory_csv(const sim::Trajectory& tr) {
  std::string out;
  for (std::size_t c = 0; c < tr.columns.size(); ++c) out += (c ? "," : "") + tr.columns[c];
  out += "\n";
  for (const auto& s : tr.steps) {
    for (std::size_t c = 0; c < s.row.size(); ++c) out += (c ? "," : "") + format_double(s.row[c]);
    out += "\n";
  }
  return out;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  Index find(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<Index>(it - columns.begin());
  }
  std::vector<double> column(Index c) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

inline Table parse_csv(const std::string& text, const std::string& origin) {
  Table t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line) || line.empty()) throw std::invalid_argument(origin + ": missing header row");
  t.columns = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.columns.size()) + " values");
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (!parse_double(cells[c], row[c]))
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad number '" + cells[c] + "'");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table load_csv(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("trajectory file not found: " + path.string());
  return parse_csv(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

inline std::map<int, long> iteration_histogram(const std::vector<int>& iterations) {
  std::map<int, long> h;
  for (int i : iterations) ++h[i];
  return h;
}

inline Json histogram_json(const std::map<int, long>& h) {
  Json j = Json::object();
  for (const auto& [k, v] : h) j[std::to_string(k)] = v;
  return j;
}

inline Json summary_json(const sim::Scenario& sc, const sim::Trajectory& tr) {
  std::vector<int> its;
  for (std::size_t i = 2; i < tr.steps.size(); ++i) its.push_back(tr.steps[i].iterations);
  Json j;
  j["scenario"] = tr.scenario;
  j["mode"] = std::string(sim::to_string(tr.mode));
  j["ok"] = tr.ok;
  j["message"] = tr.message;
  j["dims"] = Json{{"total_dofs", tr.total_dofs},  {"N", tr.free_dofs},
                   {"n", tr.reduced_dofs},         {"master_dofs", tr.master_dofs},
                   {"krylov_dim", tr.krylov_dim},  {"m", tr.constraint_count}};
  j["tolerances"] = Json{{"ncp_tol", sc.ncp.tol},
                         {"ncp_tol_rule", sc.ncp.tol > 0 ? "absolute" : "1e-10 (1 + max(|lambda0|, |z_l|))"},
                         {"ncp_max_iter", sc.ncp.max_iter},
                         {"certificate", "1e-8 (1 + |lambda|) (1 + |g|)"},
                         {"contact_update_tol", sc.contact_update_tol}};
  j["totals"] = Json{{"steps", static_cast<long>(tr.steps.size())},
                     {"ncp_iterations", tr.total_iterations()},
                     {"lcp_restarts", tr.lcp_restarts},
                     {"pairing_changes", tr.pairing_changes},
                     {"certificate_failures", tr.certificate_failures()}};
  j["iteration_histogram"] = histogram_json(iteration_histogram(its));
  j["seconds"] = Json{{"offline", tr.offline_seconds}, {"online", tr.online_seconds}};
  return j;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Time grids differ; `t` is the first time value that does not match.
class GridMismatch : public std::runtime_error {
 public:
  GridMismatch(const std::string& what, double t) : std::runtime_error(what), t(t) {}
  double t;
};

struct ColumnError {
  std::string name;
  double max_abs = 0.0;
  double max_rel = 0.0;  // max |a - b| / max |a|
  double l2_rel = 0.0;   // |a - b|_2 / |a|_2
};

struct CertificateSummary {
  long rows = 0;
  long failures = 0;
  double first_failure_t = 0.0;
};

struct ComparisonReport {
  std::vector<ColumnError> columns;
  CertificateSummary certificate_a, certificate_b;
  std::map<int, long> histogram_a, histogram_b;
  std::optional<double> speedup;  // online seconds of A / online seconds of B

  const ColumnError* find(const std::string& name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Re-checks lambda >= 0, g >= -eps, |lambda^T g| <= eps on every row, with
/// the per-constraint columns when present and the contact sensor otherwise.
inline CertificateSummary verify_table(const Table& t) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index k = 0;; ++k) {
    const Index l = t.find("lambda_" + std::to_string(k)), g = t.find("g_" + std::to_string(k));
    if (l < 0 || g < 0) break;
    pairs.emplace_back(l, g);
  }
  if (pairs.empty() && t.find("p_CN") >= 0) pairs.emplace_back(t.find("p_CN"), t.find("g_CN"));
  CertificateSummary s;
  const Index tc = t.find("t");
  for (const auto& row : t.rows) {
    Eigen::VectorXd lambda(static_cast<Index>(pairs.size())), gap(static_cast<Index>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      lambda[static_cast<Index>(k)] = row[pairs[k].first];
      gap[static_cast<Index>(k)] = row[pairs[k].second];
    }
    ++s.rows;
    if (!ncp::check_complementarity(lambda, gap).ok) {
      if (s.failures++ == 0) s.first_failure_t = tc >= 0 ? row[tc] : 0.0;
    }
  }
  return s;
}

inline void check_grids(const Table& a, const Table& b) {
  const Index ta = a.find("t"), tb = b.find("t");
  if (ta < 0 || tb < 0) throw std::invalid_argument("compare: both trajectories need a t column");
  const std::size_t n = std::min(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.rows[i][ta], y = b.rows[i][tb];
    if (std::abs(x - y) > 1e-12 * std::max(1.0, std::abs(x)))
      throw GridMismatch("time grids differ at row " + std::to_string(i) + ": t = " + format_double(x) + " vs " +
                             format_double(y),
                         x);
  }
  if (a.rows.size() != b.rows.size()) {
    const Table& longer = a.rows.size() > b.rows.size() ? a : b;
    const double t = longer.rows[n][longer.find("t")];
    throw GridMismatch("time grids differ in length (" + std::to_string(a.rows.size()) + " vs " +
                           std::to_string(b.rows.size()) + " rows); first unmatched t = " + format_double(t),
                       t);
  }
}

inline std::vector<int> iterations_of(const Table& t) {
  std::vector<int> its;
  const Index c = t.find("ncp_iterations");
  if (c < 0) return its;
  for (const auto& r : t.rows)
    if (r[c] > 0) its.push_back(static_cast<int>(r[c]));
  return its;
}

/// Errors of B against the reference A over every shared data column.
inline ComparisonReport compare(const Table& a, const Table& b) {
  check_grids(a, b);
  ComparisonReport rep;
  for (std::size_t c = 0; c < a.columns.size(); ++c) {
    const std::string& name = a.columns[c];
    if (name == "t" || name == "ncp_iterations" || name == "pairing_version") continue;
    const Index cb = b.find(name);
    if (cb < 0) continue;
    ColumnError e;
    e.name = name;
    double ref_max = 0, diff2 = 0, ref2 = 0;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const double x = a.rows[i][c], d = b.rows[i][cb] - x;
      e.max_abs = std::max(e.max_abs, std::abs(d));
      ref_max = std::max(ref_max, std::abs(x));
      diff2 += d * d;
      ref2 += x * x;
    }
    e.max_rel = ref_max > 0 ? e.max_abs / ref_max : e.max_abs;
    e.l2_rel = ref2 > 0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
    rep.columns.push_back(e);
  }
  rep.certificate_a = verify_table(a);
  rep.certificate_b = verify_table(b);
  rep.histogram_a = iteration_histogram(iterations_of(a));
  rep.histogram_b = iteration_histogram(iterations_of(b));
  return rep;
}

inline Json report_json(const ComparisonReport& rep) {
  Json j;
  Json cols = Json::object();
  for (const auto& c : rep.columns) cols[c.name] = Json{{"max_abs", c.max_abs}, {"max_rel", c.max_rel}, {"l2_rel", c.l2_rel}};
  j["columns"] = cols;
  if (const ColumnError* p = rep.find("p_CN")) j["pressure_l2_rel"] = p->l2_rel;
  if (const ColumnError* g = rep.find("g_CN")) j["gap_l2_rel"] = g->l2_rel;
  auto cert = [](const CertificateSummary& s) {
    Json c{{"rows", s.rows}, {"failures", s.failures}};
    if (s.failures) c["first_failure_t"] = s.first_failure_t;
    return c;
  };
  j["certificate"] = Json{{"a", cert(rep.certificate_a)}, {"b", cert(rep.certificate_b)}};
  j["iteration_histogram"] = Json{{"a", histogram_json(rep.histogram_a)}, {"b", histogram_json(rep.histogram_b)}};
  j["speedup"] = rep.speedup ? Json(*rep.speedup) : Json(nullptr);
  return j;
}

inline std::string report_csv(const ComparisonReport& rep) {
  std::string out = "column,max_abs,max_rel,l2_rel\n";
  for (const auto& c : rep.columns)
    out += c.name + "," + format_double(c.max_abs) + "," + format_double(c.max_rel) + "," + format_double(c.l2_rel) + "\n";
  return out;
}

/// Online wall-clock of the run summary stored next to a trajectory CSV.
inline std::optional<double> online_seconds(const fs::path& csv) {
  fs::path summary = csv;
  summary.replace_extension(".json");
  if (!fs::exists(summary)) return std::nullopt;
  try {
    const Json j = Json::parse(read_text(summary));
    return j.at("seconds").at("online").get<double>();
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

}  // namespace contactrom::io
