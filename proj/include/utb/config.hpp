#pragma once

#include "utb/device.hpp"
#include "utb/ekgrid.hpp"
#include "utb/leads.hpp"
#include "utb/poisson.hpp"
#include "utb/scattering.hpp"
#include "utb/solver.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace utb {

struct GridSettings {
  double e_min_ev = -6.0;
  double e_max_ev = -4.5;
  std::size_t points_per_eop = 15;
  std::size_t n_k = 4;
  GridMode mode = GridMode::HOMOGENEOUS;
  std::size_t adaptive_budget = 0;
};

struct BiasSettings {
  std::vector<double> v_gate;
  double v_drain = 0.0;
  double mu_source_ev = 0.0;
  std::optional<double> ensemble_v_gate;
};

struct SolverSettings {
  BornOptions born;
  double poisson_beta = 0.1;
  double tol_phi_v = 1e-5;
  int max_outer = 100;
  DecimationOptions lead;
};

struct EnsembleSettings {
  std::size_t n_samples = 8;
  std::uint64_t base_seed = 1;
  bool ballistic = true;
};

struct RunConfig {
  DeviceSpec device;
  MaterialParams materials;
  ScatteringParams scattering;
  GridSettings grid;
  Electrostatics electrostatics;
  BiasSettings bias;
  SolverSettings solver;
  ParallelOptions parallel;
  std::string output_directory = "out";
  bool trace_scf = false;  // per-iteration SCF lines on stderr
  bool record_wall_time = true;
  std::optional<EnsembleSettings> ensemble;

  double mu_drain_ev(double v_drain) const { return bias.mu_source_ev - v_drain; }
};

// Flat "[section]" + "key = value" text; '#' starts a comment. Every problem
// (syntax, unknown key, bad value, failed invariant) is collected before a
// single ConfigError is thrown.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Invariant checks on an assembled config; returns every violation.
std::vector<std::string> validate_config(const RunConfig& cfg);

}  // namespace utb
