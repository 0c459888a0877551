#pragma once

#include "utb/block_tridiagonal.hpp"
#include "utb/ekgrid.hpp"
#include "utb/leads.hpp"
#include "utb/rgf.hpp"

#include <span>
#include <vector>

namespace utb {

// Per tuple and interface i: Tr[tau_i G<_{i+1,i} - G<_{i,i+1} tau_i^+] with
// tau_i = H_{i,i+1}; positive for electrons moving towards higher slab index.
std::vector<double> interface_traces(const BlockTridiagonal<cplx>& h, const LesserPart<cplx>& gl);

struct CurrentResult {
  std::vector<double> interface_current;  // A per transverse nm
  std::vector<double> spectrum;           // interface-averaged j(E), A/(nm eV)
  double mean() const;
  double nonuniformity() const;  // max_i |I_i - mean| / |mean|
};

// traces[t] holds the interface traces of tuple t.
CurrentResult current_density(std::span<const std::vector<double>> traces, const EkGrid& grid);

// Tr[Gamma_L G^R_{1N} Gamma_R G^R_{1N}^+] from a dense inverse.
double ballistic_transmission(const BlockTridiagonal<cplx>& h, const MatC& sigma_first, const MatC& sigma_last,
                              double energy);

}  // namespace utb
