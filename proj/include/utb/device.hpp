#pragma once

#include "utb/block_tridiagonal.hpp"
#include "utb/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace utb {

enum class DisorderMode { VCA, RANDOM };
enum class Species : std::uint8_t { Si, Ge };

struct RoughnessSpec {
  int amplitude = 0;                       // max removed layers per surface
  double correlation_length_nm = 1.0;      // infinity freezes the profile
  std::uint64_t seed = 1;
};

struct MaterialParams {
  double onsite_si_ev = 0.0;
  double onsite_ge_ev = 0.0;
  double hopping_si_ev = -1.0;
  double hopping_ge_ev = -1.0;
  double hopping_sige_ev = -1.0;
  double orbital_splitting_ev = 1.0;  // onsite offset of the second orbital

  void validate() const;
};

// Slab sites are laid out as layer * width + column; columns wrap periodically.
struct DeviceSpec {
  std::size_t n_slabs = 3;
  std::size_t sites_per_slab = 1;
  std::size_t body_layers = 1;
  double lattice_constant_nm = 0.25;
  double cross_section_area_nm2 = 0.0625;
  int orbitals_per_site = 1;
  double alloy_fraction = 0.0;
  DisorderMode disorder_mode = DisorderMode::VCA;
  std::uint64_t rng_seed = 1;
  std::optional<RoughnessSpec> roughness;

  std::size_t width() const { return sites_per_slab / body_layers; }
  double transverse_period_nm() const { return static_cast<double>(width()) * lattice_constant_nm; }
  void validate() const;
};

struct Site {
  std::size_t slab;
  std::size_t transverse;
  std::size_t layer;
  std::size_t column;
  Species species = Species::Si;
  bool active = true;
};

struct Bond {
  std::size_t i;
  std::size_t j;
  bool inter_slab;
  bool wrap;  // j sits one transverse period beyond i
};

struct DeviceGraph {
  DeviceSpec spec;
  std::vector<Site> sites;
  std::vector<Bond> bonds;

  std::size_t site_id(std::size_t slab, std::size_t transverse) const {
    return slab * spec.sites_per_slab + transverse;
  }
  // Active sites of one slab in matrix-row order.
  std::vector<std::size_t> slab_members(std::size_t slab) const;
  // Active-site ordinal of every site (-1 for removed sites).
  std::vector<long> active_ordinals() const;
  std::size_t n_active() const;
  std::vector<Eigen::Index> slab_ranks() const;
  bool connected() const;
};

struct AlloyAssignment {
  DisorderMode mode = DisorderMode::VCA;
  MaterialParams params;
  double x = 0.0;
  std::vector<Species> species;
  std::vector<double> onsite_ev;

  double bond_hopping(std::size_t i, std::size_t j) const;
  double vca_hopping() const { return (1.0 - x) * params.hopping_si_ev + x * params.hopping_ge_ev; }
  double vca_onsite() const { return (1.0 - x) * params.onsite_si_ev + x * params.onsite_ge_ev; }
};

DeviceGraph build_device(const DeviceSpec& spec);

AlloyAssignment assign_alloy(const DeviceGraph& graph, const MaterialParams& params, double x,
                             DisorderMode mode, std::uint64_t seed);

// Correlated Gaussian field along transport for one surface column; rho = exp(-a/L).
std::vector<double> correlated_gaussian_profile(std::size_t n, double rho, std::uint64_t seed);

DeviceGraph apply_surface_roughness(const DeviceGraph& graph, const RoughnessSpec& spec);

// phi holds one potential (V) per active site in active-ordinal order.
BlockTridiagonal<cplx> assemble_hamiltonian(const DeviceGraph& graph, const AlloyAssignment& alloy,
                                            double k, std::span<const double> phi);

// Principal layer of the pristine VCA contact: onsite block and coupling to the next layer.
struct ContactBlocks {
  MatC h00;
  MatC h01;
};
ContactBlocks pristine_contact(const DeviceSpec& spec, const MaterialParams& params, double k);

// Convenience: spec -> graph with alloy and roughness applied.
struct DeviceInstance {
  DeviceGraph graph;
  AlloyAssignment alloy;
};
DeviceInstance make_device(const DeviceSpec& spec, const MaterialParams& params);

}  // namespace utb
