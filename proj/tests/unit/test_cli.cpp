#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "commands.hpp"

using namespace cpmp::cli;
using nlohmann::json;

namespace {

const std::string dir = CPMP_PROBLEMS_DIR;

std::string problem(const std::string& name) { return dir + "/" + name + ".json"; }

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cpmp_cli_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Options files(const std::string& tag) {
  Options o;
  o.out = tmp(tag + ".csv");
  o.report = tmp(tag + ".json");
  return o;
}

json report(const Options& o) { return json::parse(slurp(o.report)); }

std::size_t rows(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

}  // namespace

TEST_CASE("solve: LQ problem") {
  std::ostringstream err;
  Options o = files("lq");
  REQUIRE(cmd_solve(problem("lq"), o, err) == 0);
  const json r = report(o);
  CHECK(r["branch"] == "normal");
  CHECK(r["terminal_residual"].get<double>() <= 1e-8);
  CHECK(r["passed"].get<bool>());
  const std::string csv = slurp(o.out);
  CHECK(csv.rfind("t,x0,x,p0,p_x,u,H,dH_du\n", 0) == 0);
  CHECK(rows(csv) == r["accepted_steps"].get<std::size_t>() + 1);
  CHECK(csv.find('\r') == std::string::npos);

  // Same seed, same bytes.
  Options again = files("lq_again");
  REQUIRE(cmd_solve(problem("lq"), again, err) == 0);
  CHECK(slurp(again.out) == csv);

  Options fixed = files("lq_steps");
  fixed.steps = 200;
  REQUIRE(cmd_solve(problem("lq"), fixed, err) == 0);
  CHECK(report(fixed)["accepted_steps"] == 200);
}

TEST_CASE("solve: exit codes") {
  std::ostringstream err;
  Options o = files("bad");
  CHECK(cmd_solve(problem("malformed"), o, err) == 1);
  CHECK(err.str().find("problem.dynamics.x") != std::string::npos);
  CHECK(err.str().find("offset 3") != std::string::npos);
  CHECK(cmd_solve(tmp("missing.json"), o, err) == 1);

  Options s = files("singular");
  s.depth = 3;
  CHECK(cmd_solve(problem("singular"), s, err) == 2);
  const json r = report(s);
  REQUIRE(r.contains("constraints"));
  CHECK(r["constraints"]["levels"].size() >= 2);
  CHECK(r["error"].get<std::string>().find("control elimination") != std::string::npos);
}

TEST_CASE("verify: invariant batteries") {
  std::ostringstream err;
  for (const char* name : {"lq", "damped_oscillator", "damped_lagrangian", "contact_z", "damped_contact", "gas_piston"}) {
    Options o = files(std::string("verify_") + name);
    CHECK_MESSAGE(cmd_verify(problem(name), o, err) == 0, name);
    CHECK(report(o)["passed"].get<bool>());
  }
  Options o = files("verify_lq_p0");
  REQUIRE(cmd_verify(problem("lq"), o, err) == 0);
  bool drift = false;
  const json checks = report(o)["checks"];
  for (const auto& c : checks) {
    if (c["name"] == "p0 drift") drift = c["value"].get<double>() <= 1e-9;
  }
  CHECK(drift);

  Options bad = files("verify_negative_damping");
  CHECK(cmd_verify(problem("gas_piston_negative_damping"), bad, err) == 2);
  CHECK_FALSE(report(bad)["passed"].get<bool>());
}

TEST_CASE("oracle: gap to the indirect solution") {
  std::ostringstream err;
  Options o = files("oracle_lq");
  o.N = 64;
  o.refine = true;
  REQUIRE(cmd_oracle(problem("lq"), o, err) == 0);
  const json r = report(o);
  CHECK(r["runs"].size() == 5);
  CHECK(r["runs"].back()["interior_gap"].get<double>() <= 1e-2);
  CHECK(r["refinement"]["objective_gap_decreases"].get<bool>());
  CHECK(r["refinement"]["interior_gap_finest"].get<double>() < r["refinement"]["interior_gap_coarsest"].get<double>());
  CHECK(rows(slurp(o.out)) == 65);

  Options c = files("oracle_contact");
  CHECK(cmd_oracle(problem("contact_z"), c, err) == 1);
}

TEST_CASE("demo: gas piston") {
  std::ostringstream err;
  Options o = files("demo");
  REQUIRE(cmd_demo_gas_piston("", o, err) == 0);
  const json r = report(o);
  CHECK(r["accepted_steps"].get<std::size_t>() >= 1000);
  CHECK(r["lifted"]["elimination_level"] == 2);
  CHECK(r["lifted"]["alpha_residual"].get<double>() <= 1e-9);
  CHECK(r["lifted"]["flow"]["constraint_drift"].get<double>() <= 1e-6);
  CHECK(r["lifted"]["discrepant_terms"].size() == 3);

  Options c = files("demo_config");
  CHECK(cmd_demo_gas_piston(problem("gas_piston"), c, err) == 0);
  Options bad = files("demo_bad");
  CHECK(cmd_demo_gas_piston(problem("gas_piston_negative_damping"), bad, err) == 2);
}
