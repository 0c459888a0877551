#include "utb/observables.hpp"

#include <cmath>
#include <numeric>

namespace utb {

std::vector<double> interface_traces(const BlockTridiagonal<cplx>& h, const LesserPart<cplx>& gl) {
  std::vector<double> c(h.upper.size());
  for (std::size_t i = 0; i < h.upper.size(); ++i) {
    // G<_{i+1,i} = -(G<_{i,i+1})^+, so the trace is -2 Re Tr[G<_{i,i+1} tau^+].
    const cplx z = (gl.upper[i].array() * h.upper[i].conjugate().array()).sum();
    c[i] = -2.0 * z.real();
  }
  return c;
}

double CurrentResult::mean() const {
  if (interface_current.empty()) return 0.0;
  return std::accumulate(interface_current.begin(), interface_current.end(), 0.0) /
         static_cast<double>(interface_current.size());
}

double CurrentResult::nonuniformity() const {
  const double m = mean();
  double worst = 0.0;
  for (double v : interface_current) worst = std::max(worst, std::abs(v - m));
  return m == 0.0 ? worst : worst / std::abs(m);
}

CurrentResult current_density(std::span<const std::vector<double>> traces, const EkGrid& grid) {
  if (traces.size() != grid.n_tuples()) throw Error("current needs interface traces at every tuple");
  const auto n_if = traces.empty() ? 0 : traces.front().size();
  const double pref = units::e_over_h / units::pi;
  CurrentResult r;
  r.interface_current.assign(n_if, 0.0);
  r.spectrum.assign(grid.n_e(), 0.0);
  for (std::size_t e = 0; e < grid.n_e(); ++e) {
    std::vector<double> row(n_if, 0.0);
    for (std::size_t j = 0; j < grid.n_k(); ++j) {
      const auto& c = traces[grid.tuple(e, j)];
      if (c.size() != n_if) throw Error("missing off-diagonal blocks at tuple " + std::to_string(grid.tuple(e, j)));
      for (std::size_t i = 0; i < n_if; ++i) row[i] += grid.momentum_weights[j] * c[i];
    }
    double avg = 0.0;
    for (std::size_t i = 0; i < n_if; ++i) {
      r.interface_current[i] += pref * grid.energy_weights[e] * row[i];
      avg += row[i];
    }
    r.spectrum[e] = n_if ? pref * avg / static_cast<double>(n_if) : 0.0;
  }
  return r;
}

double ballistic_transmission(const BlockTridiagonal<cplx>& h, const MatC& sigma_first, const MatC& sigma_last,
                              double energy) {
  const auto r0 = h.rank(0);
  const auto rn = h.rank(h.n_blocks() - 1);
  MatC a = -to_dense(h);
  a.diagonal().array() += energy;
  a.topLeftCorner(r0, r0) -= sigma_first;
  a.bottomRightCorner(rn, rn) -= sigma_last;
  const MatC g = a.partialPivLu().inverse();
  const MatC g1n = g.topRightCorner(r0, rn);
  const MatC gl = broadening(sigma_first);
  const MatC gr = broadening(sigma_last);
  return (gl * g1n * gr * g1n.adjoint()).trace().real();
}

}  // namespace utb
