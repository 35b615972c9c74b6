#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Optimal control with dissipation via contact Hamiltonian geometry"};
  app.require_subcommand(1);
  cpmp::cli::Options opt;
  double tol = 0.0, lambda0 = 0.0;
  int steps = 0;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out, "trajectory CSV path");
    sub->add_option("--report", opt.report, "JSON report path (stdout if omitted)");
    sub->add_option("--seed", opt.seed, "seed for shooting restarts");
    sub->add_option("--tol", tol, "shooting tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--steps", steps, "fixed RK4 step count")->check(CLI::PositiveNumber);
    sub->add_option("--depth", opt.depth, "constraint algorithm depth")->check(CLI::NonNegativeNumber);
    sub->add_option("--lambda0", lambda0, "normalization of the cost multiplier");
  };

  std::string problem;
  CLI::App* solve = app.add_subcommand("solve", "solve a problem file");
  CLI::App* verify = app.add_subcommand("verify", "run the invariant checks for a problem file");
  CLI::App* oracle = app.add_subcommand("oracle", "direct transcription and gap to the indirect solution");
  for (CLI::App* sub : {solve, verify, oracle}) {
    sub->add_option("problem", problem, "problem JSON file")->required();
    common(sub);
  }
  oracle->add_option("--N", opt.N, "transcription intervals")->check(CLI::Range(4, 1 << 20));
  oracle->add_flag("--refine", opt.refine, "also run N/16 .. N/2");

  std::string demo_name, config;
  CLI::App* demo = app.add_subcommand("demo", "built-in demonstrations");
  demo->add_option("name", demo_name, "demonstration name")->required()->check(CLI::IsMember({"gas-piston"}));
  demo->add_option("--config", config, "demo configuration JSON");
  common(demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (CLI::App* sub : {solve, verify, oracle, demo}) {
    if (sub->count("--tol")) opt.tol = tol;
    if (sub->count("--steps")) opt.steps = steps;
    if (sub->count("--lambda0")) opt.lambda0 = lambda0;
  }

  if (*solve) return cpmp::cli::cmd_solve(problem, opt, std::cerr);
  if (*verify) return cpmp::cli::cmd_verify(problem, opt, std::cerr);
  if (*oracle) return cpmp::cli::cmd_oracle(problem, opt, std::cerr);
  return cpmp::cli::cmd_demo_gas_piston(config, opt, std::cerr);
}
