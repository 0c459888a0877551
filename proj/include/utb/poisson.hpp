#pragma once

#include "utb/device.hpp"
#include "utb/ekgrid.hpp"

#include <span>
#include <vector>

namespace utb {

// Structured 2D finite-volume mesh, node index iz * nx + ix, spacing h in both
// directions. Quantities are per unit length along the periodic direction.
struct PoissonMesh {
  std::size_t nx = 0;
  std::size_t nz = 1;
  double h_nm = 1.0;
  std::vector<double> eps_r;
  std::vector<double> doping;           // N_D, 1/nm^3, signed
  std::vector<char> dirichlet;
  std::vector<double> dirichlet_value;  // V

  std::size_t size() const { return nx * nz; }
  std::size_t node(std::size_t ix, std::size_t iz) const { return iz * nx + ix; }
  void validate() const;
};

// n - N_D enters as e (n - N_D) with e = |e|: div(eps grad phi) = e (n - N_D).
std::vector<double> assemble_and_solve(const PoissonMesh& mesh, std::span<const double> n_node);

// Net charge of free nodes vs. flux into Dirichlet nodes, relative.
double gauss_law_residual(const PoissonMesh& mesh, std::span<const double> n_node, std::span<const double> phi);

struct Electrostatics {
  std::size_t oxide_layers = 2;
  double eps_body = 11.7;
  double eps_oxide = 3.9;
  std::size_t source_slabs = 6;
  std::size_t drain_slabs = 6;
  double doping_sd_per_nm3 = 0.1;
  double doping_channel_per_nm3 = 0.0;
  double gate_offset_v = 0.0;  // gate potential = V_gate - offset
  double mu_source_ev = 0.0;
};

// Body nodes sit at (slab, oxide_layers + layer); gates cover the channel
// slabs on the outermost oxide rows; contact columns are pinned to the
// terminal potentials.
struct DeviceMesh {
  PoissonMesh mesh;
  std::size_t oxide_layers = 0;
  std::size_t layers = 0;
  std::size_t width = 1;

  std::size_t body_node(std::size_t slab, std::size_t layer) const {
    return mesh.node(slab, oxide_layers + layer);
  }
};

DeviceMesh build_device_mesh(const DeviceGraph& graph, const Electrostatics& es, double v_gate, double v_drain);

// Per-site density (1/nm^3) from lesser diagonals at every tuple; site volume
// is the per-atom area A over the columns per transverse period.
std::vector<double> density_from_G(std::span<const VecC> gl_diags, const EkGrid& grid, const DeviceGraph& graph);

// Average over columns per (slab, layer); removed sites count as empty.
std::vector<double> node_density(const DeviceMesh& dm, const DeviceGraph& graph, std::span<const double> site_n);

// Node potential copied onto every active site of its (slab, layer).
std::vector<double> site_potential(const DeviceMesh& dm, const DeviceGraph& graph, std::span<const double> phi);

}  // namespace utb
