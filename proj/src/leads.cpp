#include "utb/leads.hpp"

#include <cmath>

namespace utb {

double fermi(double e_minus_mu, double temperature) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  const double x = e_minus_mu / (units::k_B * temperature);
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

MatC lead_lesser(const MatC& sigma_r, double mu, double energy, double temperature) {
  return cplx(0.0, fermi(energy - mu, temperature)) * broadening(sigma_r);
}

LeadSelfEnergy compute_lead(const LeadModel& lead, double energy, double momentum, double temperature,
                            const DecimationOptions& opt) {
  LeadSelfEnergy out;
  out.energy = energy;
  out.momentum = momentum;
  if (lead.attach == LeadSide::LAST) {
    const MatC g = surface_greens_function<cplx>(lead.h00, lead.h01, energy, opt);
    out.sigma_r = lead_self_energy<cplx>(g, lead.h01);
  } else {
    const MatC up = lead.h01.adjoint();
    const MatC g = surface_greens_function<cplx>(lead.h00, up, energy, opt);
    out.sigma_r = lead_self_energy<cplx>(g, up);
  }
  out.gamma = broadening(out.sigma_r);
  out.sigma_lesser = cplx(0.0, fermi(energy - lead.mu, temperature)) * out.gamma;
  return out;
}

}  // namespace utb
