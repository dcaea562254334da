// contactrom: generate, reduce, run and compare contact scenarios.
//
// Exit codes: 0 success, 1 solver failure, 2 usage or I/O error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "contactrom/generators.hpp"
#include "contactrom/io.hpp"
#include "contactrom/linalg.hpp"
#include "contactrom/mor.hpp"
#include "contactrom/ncp.hpp"
#include "contactrom/sim.hpp"

namespace fs = std::filesystem;
using namespace contactrom;

namespace {

constexpr int kOk = 0;
constexpr int kSolverFailure = 1;
constexpr int kUsage = 2;

// Solver-side exceptions; everything else thrown while reading input is a
// usage error.
bool is_solver_error(const std::exception& e) {
  return dynamic_cast<const linalg::FactorizationError*>(&e) || dynamic_cast<const ncp::SystemError*>(&e);
}

unsigned thread_cap() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CONTACTROM_THREADS")) {
    unsigned v = 0;
    if (parse_int(std::string_view(env), v) && v > 0) cap = v;
  }
  return cap;
}

std::string histogram_text(const sim::Trajectory& tr) {
  std::vector<int> its;
  for (std::size_t i = 2; i < tr.steps.size(); ++i) its.push_back(tr.steps[i].iterations);
  std::string s;
  for (const auto& [k, v] : io::iteration_histogram(its)) s += (s.empty() ? "" : " ") + std::to_string(k) + ":" + std::to_string(v);
  return s;
}

struct RunResult {
  sim::Mode mode;
  int code = kOk;
  std::string text;
};

RunResult run_one(sim::Scenario sc, sim::Mode mode, const fs::path& out_dir, const std::string& model_path) {
  RunResult r;
  r.mode = mode;
  sc.mode = mode;
  const std::string stem = sc.name + "_" + std::string(sim::to_string(mode));
  try {
    std::optional<mor::ReducedModel> pre;
    if (!model_path.empty()) {
      if (!fs::exists(model_path)) throw io::IoError("reduced model file not found: " + model_path);
      pre = mor::load_sidecar(model_path);
    }
    const sim::Trajectory tr = sim::run(sc, pre ? &*pre : nullptr);
    io::write_text(out_dir / (stem + ".csv"), io::trajectory_csv(tr));
    io::write_text(out_dir / (stem + ".json"), io::summary_json(sc, tr).dump(2) + "\n");
    if (tr.model) mor::save_sidecar((out_dir / (stem + ".rom")).string(), *tr.model);
    r.text = stem + ": " + (tr.ok ? "ok" : "FAILED") + "  N " + std::to_string(tr.free_dofs) + " (total " +
             std::to_string(tr.total_dofs) + ")  n " + std::to_string(tr.reduced_dofs) + "  m " +
             std::to_string(tr.constraint_count) + "  steps " + std::to_string(tr.steps.size()) + "  iterations {" +
             histogram_text(tr) + "}  certificate failures " + std::to_string(tr.certificate_failures()) +
             "  offline " + format_double(tr.offline_seconds) + " s  online " + format_double(tr.online_seconds) + " s";
    if (!tr.ok) {
      r.text += "\n  " + tr.message;
      r.code = kSolverFailure;
    } else if (tr.certificate_failures() > 0) {
      r.code = kSolverFailure;
    }
  } catch (const io::IoError& e) {
    r.code = kUsage;
    r.text = stem + ": " + e.what();
  } catch (const std::exception& e) {
    r.code = is_solver_error(e) ? kSolverFailure : kUsage;
    r.text = stem + ": " + e.what();
  }
  return r;
}

int cmd_run(const std::string& scenario_path, const std::string& mode_text, const std::string& out,
            const std::string& model_path) {
  const sim::Scenario sc = io::load_scenario(scenario_path);
  std::vector<sim::Mode> modes;
  if (mode_text == "all") {
    modes = {sim::Mode::Full, sim::Mode::ReducedCB, sim::Mode::ReducedPlain};
  } else if (mode_text.empty()) {
    modes = {sc.mode};
  } else {
    modes = {*sim::parse_mode(mode_text)};
  }
  if (!model_path.empty() && modes.size() != 1) throw std::invalid_argument("--model needs a single --mode");
  fs::create_directories(out);

  std::vector<RunResult> results(modes.size());
  const unsigned workers = std::min<unsigned>(thread_cap(), static_cast<unsigned>(modes.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < modes.size(); ++i) results[i] = run_one(sc, modes[i], out, model_path);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= modes.size()) return;
            i = next++;
          }
          results[i] = run_one(sc, modes[i], out, model_path);
        }
      });
    for (auto& t : pool) t.join();
  }
  int code = kOk;
  for (const auto& r : results) {
    (r.code == kOk ? std::cout : std::cerr) << r.text << "\n";
    code = std::max(code, r.code);
  }
  return code;
}

int cmd_reduce(const std::string& scenario_path, const std::string& mode_text, const std::string& out) {
  sim::Scenario sc = io::load_scenario(scenario_path);
  if (!mode_text.empty()) sc.mode = *sim::parse_mode(mode_text);
  if (sc.mode == sim::Mode::Full) throw std::invalid_argument("reduce: mode must be rom-cb or rom-plain");
  const mor::ReducedModel rm = sim::build_reduced_model(sc);
  const fs::path path = out.empty() ? fs::path(sc.name + "_" + std::string(sim::to_string(sc.mode)) + ".rom") : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  mor::save_sidecar(path.string(), rm);
  std::cout << path.string() << ": " << mor::to_string(rm.kind) << "  N " << rm.full_size() << "  n " << rm.size()
            << "  masters " << rm.master_count() << "  krylov " << rm.krylov_dim << "  m "
            << rm.constraints.count() << "\n";
  return kOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& csv_out) {
  const io::Table a = io::load_csv(a_path), b = io::load_csv(b_path);
  io::ComparisonReport rep;
  try {
    rep = io::compare(a, b);
  } catch (const io::GridMismatch& e) {
    std::cerr << "compare: " << e.what() << "\n";
    return kSolverFailure;
  }
  const auto ta = io::online_seconds(a_path), tb = io::online_seconds(b_path);
  if (ta && tb && *tb > 0) rep.speedup = *ta / *tb;
  std::cout << io::report_json(rep).dump(2) << "\n";
  if (!csv_out.empty()) io::write_text(csv_out, io::report_csv(rep));
  return rep.certificate_a.failures || rep.certificate_b.failures ? kSolverFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frictionless node-to-segment contact with Craig-Bampton model order reduction"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "write a reference scenario (JSON + mesh)");
  gen->require_subcommand(1);
  std::string gen_out = "scenarios", gen_name;
  gen::CrackParams crack;
  auto* gen_crack = gen->add_subcommand("crack", "unit square with an edge crack");
  gen_crack->add_option("--nx", crack.nx, "elements in x")->capture_default_str()->check(CLI::Range(3, 100000));
  gen_crack->add_option("--ny", crack.ny, "elements in y")->capture_default_str()->check(CLI::Range(3, 100000));
  gen_crack->add_option("--t-end", crack.t_end, "end time")->capture_default_str();
  gen_crack->add_option("--dt", crack.h, "time step")->capture_default_str();
  gen_crack->add_option("--krylov", crack.krylov_dim, "slave Krylov vectors")->capture_default_str();
  gen::WheelRailParams wr;
  auto* gen_wr = gen->add_subcommand("wheelrail", "half wheel on a rail block");
  gen_wr->add_option("--t-end", wr.t_end, "end time")->capture_default_str();
  gen_wr->add_option("--dt", wr.h, "time step")->capture_default_str();
  gen_wr->add_option("--krylov", wr.krylov_dim, "slave Krylov vectors")->capture_default_str();
  for (auto* sub : {gen_crack, gen_wr}) {
    sub->add_option("--out", gen_out, "output directory")->capture_default_str();
    sub->add_option("--name", gen_name, "file stem and scenario name");
  }

  auto* run = app.add_subcommand("run", "simulate a scenario");
  std::string scenario, mode, out = "out", model;
  run->add_option("--scenario", scenario, "scenario JSON file")->required();
  run->add_option("--mode", mode, "full, rom-cb, rom-plain or all (default: the scenario's mode)")
      ->check(CLI::IsMember({"full", "rom-cb", "rom-plain", "all"}));
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--model", model, "precomputed reduced model sidecar");

  auto* reduce = app.add_subcommand("reduce", "offline phase only: write the reduced model sidecar");
  std::string reduce_scenario, reduce_mode, reduce_out;
  reduce->add_option("--scenario", reduce_scenario, "scenario JSON file")->required();
  reduce->add_option("--mode", reduce_mode, "rom-cb or rom-plain")->check(CLI::IsMember({"rom-cb", "rom-plain"}));
  reduce->add_option("--out", reduce_out, "sidecar path");

  auto* cmp = app.add_subcommand("compare", "errors of trajectory B against reference A");
  std::string a_path, b_path, cmp_csv;
  cmp->add_option("reference", a_path, "trajectory CSV (reference)")->required();
  cmp->add_option("candidate", b_path, "trajectory CSV")->required();
  cmp->add_option("--csv", cmp_csv, "also write per-column errors as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_crack->parsed()) {
      const gen::CrackProblem p = gen::crack_problem(crack);
      sim::Scenario sc = p.scenario;
      sc.name = gen_name.empty() ? "crack" : gen_name;
      io::save_scenario(gen_out, sc.name, sc);
      std::cout << (fs::path(gen_out) / (sc.name + ".json")).string() << "\n";
      return kOk;
    }
    if (gen_wr->parsed()) {
      sim::Scenario sc = gen::wheelrail_scenario(wr);
      sc.name = gen_name.empty() ? "wheelrail" : gen_name;
      io::save_scenario(gen_out, sc.name, sc);
      std::cout << (fs::path(gen_out) / (sc.name + ".json")).string() << "\n";
      return kOk;
    }
    if (run->parsed()) return cmd_run(scenario, mode, out, model);
    if (reduce->parsed()) return cmd_reduce(reduce_scenario, reduce_mode, reduce_out);
    if (cmp->parsed()) return cmd_compare(a_path, b_path, cmp_csv);
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_solver_error(e) ? kSolverFailure : kUsage;
  }
  return kUsage;
}
