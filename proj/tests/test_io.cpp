#include <gtest/gtest.h>

#include <filesystem>

#include "contactrom/generators.hpp"
#include "contactrom/io.hpp"
#include "contactrom/sim.hpp"

using namespace contactrom;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("contactrom_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

sim::Scenario small_crack(double t_end = 2.0) {
  return gen::crack_problem({.nx = 6, .ny = 6, .t_end = t_end}).scenario;
}

}  // namespace

TEST(ScenarioFile, RoundTrip) {
  const fs::path dir = scratch("roundtrip");
  sim::Scenario sc = small_crack();
  sc.name = "rt";
  sc.mode = sim::Mode::ReducedCB;
  sc.reduction.krylov_dim = 5;
  sc.reduction.extra_master_nodes = {3};
  sc.initial_velocity = {{10, Vec2(0.5, -0.25)}};
  sc.contact_update = true;
  sc.contact_update_tol = 0.2;
  sc.ncp.max_iter = 9;
  sc.sensors.stress_nodes = {12};
  io::save_scenario(dir, "rt", sc);
  sim::Scenario back = io::load_scenario(dir / "rt.json");
  EXPECT_EQ(io::scenario_json(back, "rt.mesh"), io::scenario_json(sc, "rt.mesh"));
  std::ostringstream a, b;
  write_mesh(a, sc.mesh);
  write_mesh(b, back.mesh);
  EXPECT_EQ(a.str(), b.str());
  // Same trajectory from the reloaded scenario.
  sc.mode = back.mode = sim::Mode::Full;
  EXPECT_EQ(io::trajectory_csv(sim::run(sc)), io::trajectory_csv(sim::run(back)));
}

TEST(ScenarioFile, MissingFilesNamed) {
  const fs::path dir = scratch("missing");
  try {
    io::load_scenario(dir / "nope.json");
    FAIL();
  } catch (const io::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.json"), std::string::npos);
  }
  io::save_scenario(dir, "s", small_crack());
  fs::remove(dir / "s.mesh");
  EXPECT_THROW(io::load_scenario(dir / "s.json"), io::IoError);
}

TEST(ScenarioFile, InvalidDocuments) {
  const fs::path dir = scratch("invalid");
  io::save_scenario(dir, "s", small_crack());
  io::Json j = io::Json::parse(io::read_text(dir / "s.json"));
  auto bad = j;
  bad["reduction"]["mode"] = "rom-magic";
  EXPECT_THROW(io::scenario_from_json(bad, dir), std::invalid_argument);
  bad = j;
  bad["materials"][0]["poisson_ratio"] = 0.5;
  EXPECT_THROW(io::scenario_from_json(bad, dir), std::invalid_argument);
  bad = j;
  bad.erase("time");
  EXPECT_THROW(io::scenario_from_json(bad, dir), std::invalid_argument);
  bad = j;
  bad["sensors"]["displacement_nodes"] = {100000};
  EXPECT_THROW(io::scenario_from_json(bad, dir), std::invalid_argument);
  io::write_text(dir / "broken.json", "{ not json");
  EXPECT_THROW(io::load_scenario(dir / "broken.json"), std::invalid_argument);
}

TEST(ScenarioFile, FrequencyInHertz) {
  const fs::path dir = scratch("hz");
  io::save_scenario(dir, "s", small_crack());
  io::Json j = io::Json::parse(io::read_text(dir / "s.json"));
  j["loads"][0]["waveform"] = {{"kind", "sine"}, {"amplitude", 2.0}, {"frequency_hz", 4.0}};
  const sim::Scenario sc = io::scenario_from_json(j, dir);
  EXPECT_NEAR(sc.loads[0].magnitude.angular_frequency, 8.0 * std::numbers::pi, 1e-15);
  EXPECT_EQ(sc.loads[0].magnitude.phase, 0.0);
}

TEST(Csv, TrajectoryRoundTripIsExact) {
  const sim::Trajectory tr = sim::run(small_crack());
  const io::Table t = io::parse_csv(io::trajectory_csv(tr), "mem");
  ASSERT_EQ(t.columns, tr.columns);
  ASSERT_EQ(t.rows.size(), tr.steps.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) EXPECT_EQ(t.rows[i], tr.steps[i].row);
}

TEST(Csv, ParseErrorsNameTheLine) {
  EXPECT_THROW(io::parse_csv("", "x"), std::invalid_argument);
  try {
    io::parse_csv("t,a\n0,1\n0.1,zz\n", "f.csv");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::parse_csv("t,a\n0,1,2\n", "x"), std::invalid_argument);
  EXPECT_THROW(io::load_csv("/nonexistent/traj.csv"), io::IoError);
}

TEST(Compare, SelfComparisonIsZero) {
  const io::Table t = io::parse_csv(io::trajectory_csv(sim::run(small_crack(4.0))), "mem");
  const io::ComparisonReport rep = io::compare(t, t);
  ASSERT_FALSE(rep.columns.empty());
  for (const auto& c : rep.columns) {
    EXPECT_EQ(c.max_abs, 0.0) << c.name;
    EXPECT_EQ(c.l2_rel, 0.0) << c.name;
  }
  EXPECT_EQ(rep.certificate_a.failures, 0);
  EXPECT_EQ(rep.certificate_a.rows, static_cast<long>(t.rows.size()));
  EXPECT_EQ(rep.histogram_a, rep.histogram_b);
  EXPECT_EQ(rep.find("t"), nullptr);
  EXPECT_EQ(rep.find("ncp_iterations"), nullptr);
  EXPECT_NE(rep.find("p_CN"), nullptr);
}

TEST(Compare, KnownErrors) {
  const io::Table a = io::parse_csv("t,x,p_CN,g_CN\n0,1,0,1\n1,2,0,1\n", "a");
  const io::Table b = io::parse_csv("t,x,p_CN,g_CN\n0,1,0,1\n1,2.5,0,1\n", "b");
  const io::ComparisonReport rep = io::compare(a, b);
  const io::ColumnError* x = rep.find("x");
  ASSERT_NE(x, nullptr);
  EXPECT_DOUBLE_EQ(x->max_abs, 0.5);
  EXPECT_DOUBLE_EQ(x->max_rel, 0.25);
  EXPECT_DOUBLE_EQ(x->l2_rel, 0.5 / std::sqrt(5.0));
}

TEST(Compare, GridMismatch) {
  const io::Table a = io::parse_csv("t,x\n0,1\n0.05,2\n", "a");
  const io::Table b = io::parse_csv("t,x\n0,1\n0.001,2\n", "b");
  try {
    io::compare(a, b);
    FAIL();
  } catch (const io::GridMismatch& e) {
    EXPECT_EQ(e.t, 0.05);
  }
  const io::Table shorter = io::parse_csv("t,x\n0,1\n", "c");
  EXPECT_THROW(io::compare(a, shorter), io::GridMismatch);
}

TEST(Compare, CertificateFailuresCounted) {
  // Row 1: lambda > 0 with an open gap.
  const io::Table t = io::parse_csv("t,lambda_0,g_0\n0,0,1\n1,2,1\n2,1,0\n", "x");
  const io::CertificateSummary s = io::verify_table(t);
  EXPECT_EQ(s.rows, 3);
  EXPECT_EQ(s.failures, 1);
  EXPECT_EQ(s.first_failure_t, 1.0);
}

TEST(Summary, Fields) {
  const sim::Scenario sc = small_crack();
  const sim::Trajectory tr = sim::run(sc);
  const io::Json j = io::summary_json(sc, tr);
  EXPECT_EQ(j.at("dims").at("N").get<Index>(), tr.free_dofs);
  EXPECT_EQ(j.at("dims").at("m").get<Index>(), tr.constraint_count);
  EXPECT_EQ(j.at("totals").at("steps").get<long>(), static_cast<long>(tr.steps.size()));
  long counted = 0;
  for (const auto& [k, v] : j.at("iteration_histogram").items()) counted += v.get<long>();
  EXPECT_EQ(counted, static_cast<long>(tr.steps.size()) - 2);
  EXPECT_EQ(io::iteration_histogram({1, 1, 3}), (std::map<int, long>{{1, 2}, {3, 1}}));
}

TEST(Summary, OnlineSecondsFromSibling) {
  const fs::path dir = scratch("summary");
  io::write_text(dir / "a.csv", "t\n0\n");
  EXPECT_FALSE(io::online_seconds(dir / "a.csv"));
  io::write_text(dir / "a.json", R"({"seconds": {"online": 1.5}})");
  EXPECT_EQ(io::online_seconds(dir / "a.csv"), 1.5);
}
