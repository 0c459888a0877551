#pragma once

#include "utb/leads.hpp"
#include "utb/rgf.hpp"
#include "utb/types.hpp"

#include <span>
#include <vector>

namespace utb {

// Material constants are user inputs; the defaults are illustrative only.
struct ScatteringParams {
  double D_acoustic_ev = 3.0;
  double sound_velocity_nm_per_ps = 9.0;
  double debye_energy_ev = 0.06;
  double optical_energy_ev = 0.06;
  double D_optical_ev_per_nm = 40.0;
  double mass_density_amu_per_nm3 = 1402.6;
  double area_nm2 = 0.0625;
  double temperature_k = 300.0;
  double coupling_scale = 1.0;  // multiplies both coupling constants; 0 gives ballistic runs

  double n0() const;
  void validate() const;
};

// Prefactors of the acoustic and optical self-energies in eV^2 nm, so that
// K * sum_k w_k diag G(k) comes out in eV for G in 1/eV and w_k in 1/nm.
struct CouplingConstants {
  double K_ac = 0.0;
  double K_op = 0.0;
};

CouplingConstants coupling_constants(const ScatteringParams& p);

double bose_occupation(double e_op, double temperature);

// sum_k' w_k' diag G(k') scaled by K_ac; the output does not depend on k.
VecC acoustic_self_energy(std::span<const VecC> g_diags, std::span<const double> k_weights, double K_ac);

// Empty spans stand for shifted energies outside the grid.
VecC optical_lesser_self_energy(std::span<const VecC> gl_plus, std::span<const VecC> gl_minus,
                                std::span<const double> k_weights, double K_op, double n0);

VecC optical_retarded_self_energy(std::span<const VecC> gr_minus, std::span<const VecC> gr_plus,
                                  std::span<const VecC> gl_minus, std::span<const VecC> gl_plus,
                                  std::span<const double> k_weights, double K_op, double n0);

// Momentum-integrated diagonals at one energy: sum_k w_k diag G^{R,<}(k, E).
struct KSums {
  VecC retarded;
  VecC lesser;
};

struct PhononSigma {
  VecC retarded;
  VecC lesser;
};

// Same result as the span-based functions, from pre-reduced momentum sums.
// Null shifted sums contribute zero.
PhononSigma phonon_self_energy(const KSums& at_e, const KSums* plus, const KSums* minus, const CouplingConstants& K,
                               double n0);

struct TotalSelfEnergy {
  SelfEnergyBlocks<cplx> retarded;
  SelfEnergyBlocks<cplx> lesser;
};

// Splits the flat phonon diagonals into slabs and adds the lead blocks on the
// boundary slabs.
TotalSelfEnergy assemble_total(const LeadSelfEnergy& first, const LeadSelfEnergy& last, const PhononSigma& phonon,
                               const std::vector<Eigen::Index>& ranks);

// Largest |new - old| / (|old| + floor) over all entries.
double relative_change(const VecC& next, const VecC& prev, double floor = 1e-12);

}  // namespace utb
