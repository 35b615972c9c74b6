#pragma once

// Problem files: one JSON object whose "kind" selects the pipeline.

#include <optional>
#include <string>

#include "json.hpp"

#include "cpmp/geometry.hpp"
#include "cpmp/herglotz_ocp.hpp"
#include "cpmp/lagrangian.hpp"
#include "cpmp/ocp.hpp"
#include "cpmp/thermo.hpp"

namespace cpmp::cli {

enum class Kind { Ocp, HerglotzOcp, HerglotzLagrangian, Contact, GasPiston };

struct ContactProblem {
  ContactSystem system;
  Vec start;
  Vec params;
};

struct LagrangianProblem {
  HerglotzLagrangian lagrangian;
  Vec q_start, q_end;
  double z_start = 0.0;
};

struct GasPistonProblem {
  GasPistonParams params;
  ControlLaw law;
  double V = 1.0, pi = 0.5, S = 0.0;
  double horizon = 10.0;
};

struct Problem {
  Kind kind = Kind::Ocp;
  std::string kind_name;
  double a = 0.0, b = 1.0;

  OcpProblem ocp;
  HerglotzOcpProblem herglotz;
  /// "full" or "reduced" for herglotz_ocp.
  std::string form = "full";
  LagrangianProblem lagrangian;
  ContactProblem contact;
  GasPistonProblem gas;

  std::optional<double> lambda0;
  IntegratorConfig integrator = IntegratorConfig::rk45(1e-11, 1e-13);
  ShootConfig shooting;
  Vec p_guess, u_guess;
  double pz_guess = 0.0;
};

/// Throws InputError naming the offending JSON path.
Problem parse_problem(const nlohmann::json& j);
Problem load_problem(const std::string& path);

/// Gas-piston demo configuration: {m, d, U, box, u, start, horizon}.
GasPistonProblem parse_gas_piston(const nlohmann::json& j, const std::string& path = "config");

}  // namespace cpmp::cli
