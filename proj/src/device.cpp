#include "utb/device.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <string>

namespace utb {

void MaterialParams::validate() const {
  for (double v : {onsite_si_ev, onsite_ge_ev, hopping_si_ev, hopping_ge_ev, hopping_sige_ev,
                   orbital_splitting_ev})
    if (!std::isfinite(v)) throw Error("material parameters must be finite");
  if (hopping_si_ev == 0.0 || hopping_ge_ev == 0.0 || hopping_sige_ev == 0.0)
    throw Error("hoppings must be nonzero");
}

void DeviceSpec::validate() const {
  if (n_slabs < 3) throw Error("n_slabs must be at least 3");
  if (sites_per_slab < 1) throw Error("sites_per_slab must be at least 1");
  if (body_layers < 1 || sites_per_slab % body_layers != 0)
    throw Error("body_layers must divide sites_per_slab");
  if (!(lattice_constant_nm > 0.0)) throw Error("lattice constant must be positive");
  if (!(cross_section_area_nm2 > 0.0)) throw Error("cross-section area must be positive");
  if (orbitals_per_site < 1 || orbitals_per_site > 2) throw Error("orbitals_per_site must be 1 or 2");
  if (!(alloy_fraction >= 0.0 && alloy_fraction <= 1.0))
    throw Error("alloy fraction must lie in [0, 1]");
  if (roughness && roughness->amplitude < 0) throw Error("roughness amplitude must be nonnegative");
  if (roughness && static_cast<std::size_t>(roughness->amplitude) >= body_layers && roughness->amplitude > 0)
    throw Error("roughness amplitude must be below the body thickness in layers");
}

std::vector<std::size_t> DeviceGraph::slab_members(std::size_t slab) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < spec.sites_per_slab; ++t) {
    const auto id = site_id(slab, t);
    if (sites[id].active) out.push_back(id);
  }
  return out;
}

std::vector<long> DeviceGraph::active_ordinals() const {
  std::vector<long> ord(sites.size(), -1);
  long next = 0;
  for (std::size_t id = 0; id < sites.size(); ++id)
    if (sites[id].active) ord[id] = next++;
  return ord;
}

std::size_t DeviceGraph::n_active() const {
  return static_cast<std::size_t>(std::count_if(sites.begin(), sites.end(), [](const Site& s) { return s.active; }));
}

std::vector<Eigen::Index> DeviceGraph::slab_ranks() const {
  std::vector<Eigen::Index> r(spec.n_slabs, 0);
  for (const auto& s : sites)
    if (s.active) r[s.slab] += spec.orbitals_per_site;
  return r;
}

bool DeviceGraph::connected() const {
  std::vector<std::vector<std::size_t>> adj(sites.size());
  for (const auto& b : bonds) {
    if (!sites[b.i].active || !sites[b.j].active) continue;
    adj[b.i].push_back(b.j);
    adj[b.j].push_back(b.i);
  }
  const auto start = std::find_if(sites.begin(), sites.end(), [](const Site& s) { return s.active; });
  if (start == sites.end()) return false;
  std::vector<char> seen(sites.size(), 0);
  std::queue<std::size_t> q;
  const auto s0 = static_cast<std::size_t>(start - sites.begin());
  q.push(s0);
  seen[s0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
  }
  return reached == n_active();
}

DeviceGraph build_device(const DeviceSpec& spec) {
  spec.validate();
  DeviceGraph g;
  g.spec = spec;
  const auto width = spec.width();
  g.sites.reserve(spec.n_slabs * spec.sites_per_slab);
  for (std::size_t s = 0; s < spec.n_slabs; ++s)
    for (std::size_t t = 0; t < spec.sites_per_slab; ++t)
      g.sites.push_back({s, t, t / width, t % width, Species::Si, true});

  for (std::size_t s = 0; s < spec.n_slabs; ++s) {
    for (std::size_t l = 0; l < spec.body_layers; ++l) {
      for (std::size_t c = 0; c + 1 < width; ++c)
        g.bonds.push_back({g.site_id(s, l * width + c), g.site_id(s, l * width + c + 1), false, false});
      if (width >= 2)
        g.bonds.push_back({g.site_id(s, l * width + width - 1), g.site_id(s, l * width), false, true});
      if (l + 1 < spec.body_layers)
        for (std::size_t c = 0; c < width; ++c)
          g.bonds.push_back({g.site_id(s, l * width + c), g.site_id(s, (l + 1) * width + c), false, false});
    }
    if (s + 1 < spec.n_slabs)
      for (std::size_t t = 0; t < spec.sites_per_slab; ++t)
        g.bonds.push_back({g.site_id(s, t), g.site_id(s + 1, t), true, false});
  }
  return g;
}

double AlloyAssignment::bond_hopping(std::size_t i, std::size_t j) const {
  if (mode == DisorderMode::VCA) return vca_hopping();
  const auto a = species[i];
  const auto b = species[j];
  if (a != b) return params.hopping_sige_ev;
  return a == Species::Si ? params.hopping_si_ev : params.hopping_ge_ev;
}

AlloyAssignment assign_alloy(const DeviceGraph& graph, const MaterialParams& params, double x,
                             DisorderMode mode, std::uint64_t seed) {
  if (!(x >= 0.0 && x <= 1.0)) throw Error("alloy fraction must lie in [0, 1]");
  params.validate();
  AlloyAssignment a;
  a.mode = mode;
  a.params = params;
  a.x = x;
  const auto n = graph.sites.size();
  a.species.assign(n, Species::Si);
  a.onsite_ev.assign(n, a.vca_onsite());
  if (mode == DisorderMode::RANDOM) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution ge(x);
    for (std::size_t i = 0; i < n; ++i) {
      a.species[i] = ge(rng) ? Species::Ge : Species::Si;
      a.onsite_ev[i] = a.species[i] == Species::Ge ? params.onsite_ge_ev : params.onsite_si_ev;
    }
  }
  return a;
}

std::vector<double> correlated_gaussian_profile(std::size_t n, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> g(n);
  const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t i = 0; i < n; ++i) g[i] = i == 0 ? z(rng) : rho * g[i - 1] + innovation * z(rng);
  return g;
}

DeviceGraph apply_surface_roughness(const DeviceGraph& graph, const RoughnessSpec& spec) {
  const auto& ds = graph.spec;
  if (spec.amplitude < 0 || (spec.amplitude > 0 && static_cast<std::size_t>(spec.amplitude) >= ds.body_layers))
    throw Error("invalid roughness: amplitude must be below the body thickness in layers");
  DeviceGraph out = graph;
  if (spec.amplitude == 0) return out;
  if (!(spec.correlation_length_nm > 0.0)) throw Error("invalid roughness: correlation length must be positive");

  const double rho = std::exp(-ds.lattice_constant_nm / spec.correlation_length_nm);
  const auto width = ds.width();
  const std::size_t interior = ds.n_slabs - 2;
  const double amp = spec.amplitude;
  for (std::size_t surface = 0; surface < 2; ++surface) {
    for (std::size_t c = 0; c < width; ++c) {
      const auto g = correlated_gaussian_profile(interior, rho, spec.seed * 1000003ULL + surface * 7919ULL + c);
      for (std::size_t s = 1; s + 1 < ds.n_slabs; ++s) {
        const double u = 0.5 * std::erfc(-g[s - 1] / std::sqrt(2.0));
        const auto depth = static_cast<std::size_t>(std::clamp(std::ceil(amp * u), 1.0, amp));
        for (std::size_t d = 0; d < depth; ++d) {
          const auto layer = surface == 0 ? d : ds.body_layers - 1 - d;
          out.sites[out.site_id(s, layer * width + c)].active = false;
        }
      }
    }
  }
  for (std::size_t s = 0; s < ds.n_slabs; ++s)
    if (out.slab_members(s).empty())
      throw Error("invalid roughness: slab " + std::to_string(s) + " would be empty");
  if (!out.connected()) throw Error("invalid roughness: profile disconnects the device");
  return out;
}

namespace {

void add_site_block(MatC& m, Eigen::Index row, int orbitals, double onsite, double split) {
  for (int o = 0; o < orbitals; ++o) m(row + o, row + o) += onsite + o * split;
}

void add_hop(MatC& m, Eigen::Index r, Eigen::Index c, int orbitals, cplx v) {
  for (int o = 0; o < orbitals; ++o) m(r + o, c + o) += v;
}

}  // namespace

BlockTridiagonal<cplx> assemble_hamiltonian(const DeviceGraph& graph, const AlloyAssignment& alloy,
                                            double k, std::span<const double> phi) {
  const auto& ds = graph.spec;
  if (phi.size() != graph.n_active())
    throw Error("potential has " + std::to_string(phi.size()) + " entries, expected " +
                std::to_string(graph.n_active()));
  const int orb = ds.orbitals_per_site;
  const auto ranks = graph.slab_ranks();
  std::vector<Eigen::Index> row(graph.sites.size(), -1);
  for (std::size_t s = 0; s < ds.n_slabs; ++s) {
    Eigen::Index r = 0;
    for (auto id : graph.slab_members(s)) {
      row[id] = r;
      r += orb;
    }
  }

  BlockTridiagonal<cplx> h;
  h.diag.reserve(ds.n_slabs);
  for (std::size_t s = 0; s < ds.n_slabs; ++s) h.diag.push_back(MatC::Zero(ranks[s], ranks[s]));
  for (std::size_t s = 0; s + 1 < ds.n_slabs; ++s) h.upper.push_back(MatC::Zero(ranks[s], ranks[s + 1]));

  const auto ord = graph.active_ordinals();
  for (std::size_t id = 0; id < graph.sites.size(); ++id) {
    if (ord[id] < 0) continue;
    const auto& site = graph.sites[id];
    add_site_block(h.diag[site.slab], row[id], orb, alloy.onsite_ev[id] - phi[static_cast<std::size_t>(ord[id])],
                   alloy.params.orbital_splitting_ev);
  }

  const cplx phase = std::polar(1.0, k * ds.transverse_period_nm());
  for (const auto& b : graph.bonds) {
    if (ord[b.i] < 0 || ord[b.j] < 0) continue;
    const auto si = graph.sites[b.i].slab;
    const auto sj = graph.sites[b.j].slab;
    const cplx v = alloy.bond_hopping(b.i, b.j) * (b.wrap ? phase : cplx(1.0));
    if (si == sj) {
      add_hop(h.diag[si], row[b.i], row[b.j], orb, v);
      add_hop(h.diag[si], row[b.j], row[b.i], orb, std::conj(v));
    } else if (sj == si + 1) {
      add_hop(h.upper[si], row[b.i], row[b.j], orb, v);
    } else {
      throw Error("bond spans more than one slab");
    }
  }
  return h;
}

ContactBlocks pristine_contact(const DeviceSpec& spec, const MaterialParams& params, double k) {
  DeviceSpec lead = spec;
  lead.n_slabs = 3;
  lead.roughness.reset();
  const auto g = build_device(lead);
  const auto alloy = assign_alloy(g, params, spec.alloy_fraction, DisorderMode::VCA, 0);
  const std::vector<double> phi(g.n_active(), 0.0);
  const auto h = assemble_hamiltonian(g, alloy, k, phi);
  return {h.diag[0], h.upper[0]};
}

DeviceInstance make_device(const DeviceSpec& spec, const MaterialParams& params) {
  auto graph = build_device(spec);
  if (spec.roughness) graph = apply_surface_roughness(graph, *spec.roughness);
  auto alloy = assign_alloy(graph, params, spec.alloy_fraction, spec.disorder_mode, spec.rng_seed);
  return {std::move(graph), std::move(alloy)};
}

}  // namespace utb
