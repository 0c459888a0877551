#include "utb/scattering.hpp"

#include <cmath>
#include <string>

namespace utb {

double bose_occupation(double e_op, double temperature) {
  if (!(e_op > 0.0) || !(temperature > 0.0)) throw Error("Bose occupation needs E_op > 0 and T > 0");
  return 1.0 / std::expm1(e_op / (units::k_B * temperature));
}

double ScatteringParams::n0() const { return bose_occupation(optical_energy_ev, temperature_k); }

void ScatteringParams::validate() const {
  for (double v : {D_acoustic_ev, sound_velocity_nm_per_ps, debye_energy_ev, optical_energy_ev, D_optical_ev_per_nm,
                   mass_density_amu_per_nm3, area_nm2, temperature_k})
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("scattering parameters must be positive and finite");
  if (!(coupling_scale >= 0.0)) throw Error("coupling scale must be nonnegative");
}

CouplingConstants coupling_constants(const ScatteringParams& p) {
  p.validate();
  using namespace units;
  const double kT = k_B * p.temperature_k;
  const double omega_d = p.debye_energy_ev / hbar;    // 1/ps
  const double omega_0 = p.optical_energy_ev / hbar;  // 1/ps
  const double rho_v2 = p.mass_density_amu_per_nm3 * p.sound_velocity_nm_per_ps * p.sound_velocity_nm_per_ps *
                        amu_nm2_per_ps2;  // eV/nm^3
  CouplingConstants K;
  K.K_ac = p.coupling_scale * p.D_acoustic_ev * p.D_acoustic_ev * kT / (2.0 * h * omega_d * rho_v2 * p.area_nm2);
  K.K_op = p.coupling_scale * h * p.D_optical_ev_per_nm * p.D_optical_ev_per_nm /
           (8.0 * pi * pi * omega_0 * p.area_nm2);
  return K;
}

namespace {

void check_weights(std::span<const VecC> d, std::span<const double> w) {
  if (!d.empty() && d.size() != w.size())
    throw Error("got " + std::to_string(d.size()) + " diagonals for " + std::to_string(w.size()) + " weights");
}

Eigen::Index diag_size(std::initializer_list<std::span<const VecC>> sets) {
  for (auto s : sets)
    if (!s.empty()) return s.front().size();
  return 0;
}

VecC weighted(std::span<const VecC> d, std::span<const double> w, Eigen::Index n) {
  VecC s = VecC::Zero(n);
  for (std::size_t j = 0; j < d.size(); ++j) s += w[j] * d[j];
  return s;
}

}  // namespace

VecC acoustic_self_energy(std::span<const VecC> g_diags, std::span<const double> k_weights, double K_ac) {
  if (g_diags.empty()) throw Error("acoustic self-energy needs at least one momentum");
  check_weights(g_diags, k_weights);
  return K_ac * weighted(g_diags, k_weights, g_diags.front().size());
}

VecC optical_lesser_self_energy(std::span<const VecC> gl_plus, std::span<const VecC> gl_minus,
                                std::span<const double> k_weights, double K_op, double n0) {
  check_weights(gl_plus, k_weights);
  check_weights(gl_minus, k_weights);
  const auto n = diag_size({gl_plus, gl_minus});
  return K_op * ((1.0 + n0) * weighted(gl_plus, k_weights, n) + n0 * weighted(gl_minus, k_weights, n));
}

VecC optical_retarded_self_energy(std::span<const VecC> gr_minus, std::span<const VecC> gr_plus,
                                  std::span<const VecC> gl_minus, std::span<const VecC> gl_plus,
                                  std::span<const double> k_weights, double K_op, double n0) {
  for (auto s : {gr_minus, gr_plus, gl_minus, gl_plus}) check_weights(s, k_weights);
  const auto n = diag_size({gr_minus, gr_plus, gl_minus, gl_plus});
  return K_op * ((1.0 + n0) * weighted(gr_minus, k_weights, n) + n0 * weighted(gr_plus, k_weights, n) +
                 0.5 * weighted(gl_minus, k_weights, n) - 0.5 * weighted(gl_plus, k_weights, n));
}

PhononSigma phonon_self_energy(const KSums& at_e, const KSums* plus, const KSums* minus, const CouplingConstants& K,
                               double n0) {
  PhononSigma s;
  s.retarded = K.K_ac * at_e.retarded;
  s.lesser = K.K_ac * at_e.lesser;
  if (K.K_op == 0.0) return s;
  if (plus) {
    s.lesser += (K.K_op * (1.0 + n0)) * plus->lesser;
    s.retarded += (K.K_op * n0) * plus->retarded - (0.5 * K.K_op) * plus->lesser;
  }
  if (minus) {
    s.lesser += (K.K_op * n0) * minus->lesser;
    s.retarded += (K.K_op * (1.0 + n0)) * minus->retarded + (0.5 * K.K_op) * minus->lesser;
  }
  return s;
}

TotalSelfEnergy assemble_total(const LeadSelfEnergy& first, const LeadSelfEnergy& last, const PhononSigma& phonon,
                               const std::vector<Eigen::Index>& ranks) {
  if (first.energy != last.energy || first.momentum != last.momentum)
    throw Error("lead self-energies carry different (E, k) tags");
  Eigen::Index total = 0;
  for (auto r : ranks) total += r;
  if (phonon.retarded.size() != total || phonon.lesser.size() != total)
    throw Error("phonon self-energy length does not match device rank");
  if (first.sigma_r.rows() != ranks.front() || last.sigma_r.rows() != ranks.back())
    throw Error("lead block rank does not match boundary slab");
  TotalSelfEnergy t;
  Eigen::Index off = 0;
  for (auto r : ranks) {
    t.retarded.diag.push_back(phonon.retarded.segment(off, r));
    t.lesser.diag.push_back(phonon.lesser.segment(off, r));
    off += r;
  }
  t.retarded.first = first.sigma_r;
  t.retarded.last = last.sigma_r;
  t.lesser.first = first.sigma_lesser;
  t.lesser.last = last.sigma_lesser;
  return t;
}

double relative_change(const VecC& next, const VecC& prev, double floor) {
  if (next.size() != prev.size()) throw Error("self-energy size changed between iterations");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < next.size(); ++i)
    worst = std::max(worst, std::abs(next[i] - prev[i]) / (std::abs(prev[i]) + floor));
  return worst;
}

}  // namespace utb
