#include "utb/poisson.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace utb {

void PoissonMesh::validate() const {
  const auto n = size();
  if (n == 0) throw Error("empty Poisson mesh");
  if (eps_r.size() != n || doping.size() != n || dirichlet.size() != n || dirichlet_value.size() != n)
    throw Error("Poisson mesh arrays do not match node count");
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eps_r[i] > 0.0)) throw Error("permittivity must be positive at node " + std::to_string(i));
    any = any || dirichlet[i];
  }
  if (!any) throw Error("Poisson mesh needs at least one Dirichlet node");
}

namespace {

double face_eps(double a, double b) { return 2.0 * a * b / (a + b); }

template <typename F>
void for_each_face(const PoissonMesh& m, F&& f) {
  for (std::size_t iz = 0; iz < m.nz; ++iz)
    for (std::size_t ix = 0; ix < m.nx; ++ix) {
      const auto p = m.node(ix, iz);
      if (ix + 1 < m.nx) f(p, m.node(ix + 1, iz));
      if (iz + 1 < m.nz) f(p, m.node(ix, iz + 1));
    }
}

}  // namespace

std::vector<double> assemble_and_solve(const PoissonMesh& mesh, std::span<const double> n_node) {
  mesh.validate();
  const auto n = mesh.size();
  if (n_node.size() != n) throw Error("density does not match Poisson mesh");

  std::vector<long> free_index(n, -1);
  long nf = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!mesh.dirichlet[i]) free_index[i] = nf++;

  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (mesh.dirichlet[i]) phi[i] = mesh.dirichlet_value[i];
  if (nf == 0) return phi;

  // -sum eps_f (phi_nb - phi_p) = -(n - N_D) h^2 / eps0, symmetric positive definite.
  const double scale = mesh.h_nm * mesh.h_nm / units::eps0;
  Eigen::VectorXd rhs(nf);
  for (std::size_t i = 0; i < n; ++i)
    if (free_index[i] >= 0) rhs[free_index[i]] = -(n_node[i] - mesh.doping[i]) * scale;

  std::vector<Eigen::Triplet<double>> trip;
  for_each_face(mesh, [&](std::size_t p, std::size_t q) {
    const double c = face_eps(mesh.eps_r[p], mesh.eps_r[q]);
    const long fp = free_index[p];
    const long fq = free_index[q];
    if (fp >= 0) trip.emplace_back(fp, fp, c);
    if (fq >= 0) trip.emplace_back(fq, fq, c);
    if (fp >= 0 && fq >= 0) {
      trip.emplace_back(fp, fq, -c);
      trip.emplace_back(fq, fp, -c);
    } else if (fp >= 0) {
      rhs[fp] += c * mesh.dirichlet_value[q];
    } else if (fq >= 0) {
      rhs[fq] += c * mesh.dirichlet_value[p];
    }
  });
  Eigen::SparseMatrix<double> a(nf, nf);
  a.setFromTriplets(trip.begin(), trip.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw Error("Poisson matrix factorization failed");
  const Eigen::VectorXd x = solver.solve(rhs);
  const double res = (a * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  if (!(res < 1e-10) && rhs.norm() > 0.0)
    throw Error("Poisson solve residual " + std::to_string(res) + " above 1e-10");
  for (std::size_t i = 0; i < n; ++i)
    if (free_index[i] >= 0) phi[i] = x[free_index[i]];
  return phi;
}

double gauss_law_residual(const PoissonMesh& mesh, std::span<const double> n_node, std::span<const double> phi) {
  double charge = 0.0;
  double charge_mag = 0.0;
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if (!mesh.dirichlet[i]) {
      const double q = (n_node[i] - mesh.doping[i]) * mesh.h_nm * mesh.h_nm;
      charge += q;
      charge_mag += std::abs(q);
    }
  double flux = 0.0;
  double flux_mag = 0.0;
  for_each_face(mesh, [&](std::size_t p, std::size_t q) {
    if (mesh.dirichlet[p] == mesh.dirichlet[q]) return;
    const auto d = mesh.dirichlet[p] ? p : q;
    const auto f = mesh.dirichlet[p] ? q : p;
    const double v = units::eps0 * face_eps(mesh.eps_r[p], mesh.eps_r[q]) * (phi[d] - phi[f]);
    flux += v;
    flux_mag += std::abs(v);
  });
  const double denom = std::max({charge_mag, flux_mag, 1e-300});
  return std::abs(charge - flux) / denom;
}

DeviceMesh build_device_mesh(const DeviceGraph& graph, const Electrostatics& es, double v_gate, double v_drain) {
  const auto& ds = graph.spec;
  if (es.source_slabs + es.drain_slabs >= ds.n_slabs) throw Error("source and drain regions leave no channel");
  DeviceMesh dm;
  dm.oxide_layers = es.oxide_layers;
  dm.layers = ds.body_layers;
  dm.width = ds.width();
  auto& m = dm.mesh;
  m.nx = ds.n_slabs;
  m.nz = ds.body_layers + 2 * es.oxide_layers;
  m.h_nm = ds.lattice_constant_nm;
  const auto n = m.size();
  m.eps_r.assign(n, es.eps_oxide);
  m.doping.assign(n, 0.0);
  m.dirichlet.assign(n, 0);
  m.dirichlet_value.assign(n, 0.0);

  const auto w = dm.width;
  for (std::size_t s = 0; s < ds.n_slabs; ++s) {
    const bool channel = s >= es.source_slabs && s + es.drain_slabs < ds.n_slabs;
    for (std::size_t l = 0; l < ds.body_layers; ++l) {
      std::size_t active = 0;
      for (std::size_t c = 0; c < w; ++c) active += graph.sites[graph.site_id(s, l * w + c)].active ? 1 : 0;
      const double frac = static_cast<double>(active) / static_cast<double>(w);
      const auto p = dm.body_node(s, l);
      m.eps_r[p] = frac * es.eps_body + (1.0 - frac) * es.eps_oxide;
      m.doping[p] = frac * (channel ? es.doping_channel_per_nm3 : es.doping_sd_per_nm3);
    }
  }
  for (std::size_t l = 0; l < ds.body_layers; ++l) {
    const auto ps = dm.body_node(0, l);
    const auto pd = dm.body_node(ds.n_slabs - 1, l);
    m.dirichlet[ps] = 1;
    m.dirichlet_value[ps] = 0.0;
    m.dirichlet[pd] = 1;
    m.dirichlet_value[pd] = v_drain;
  }
  if (es.oxide_layers > 0)
    for (std::size_t s = es.source_slabs; s + es.drain_slabs < ds.n_slabs; ++s)
      for (auto iz : {std::size_t{0}, m.nz - 1}) {
        const auto p = m.node(s, iz);
        m.dirichlet[p] = 1;
        m.dirichlet_value[p] = v_gate - es.gate_offset_v;
      }
  return dm;
}

std::vector<double> density_from_G(std::span<const VecC> gl_diags, const EkGrid& grid, const DeviceGraph& graph) {
  if (gl_diags.size() != grid.n_tuples()) throw Error("density needs a lesser diagonal at every tuple");
  const auto n_sites = graph.n_active();
  const int orb = graph.spec.orbitals_per_site;
  const double volume = graph.spec.cross_section_area_nm2 / static_cast<double>(graph.spec.width());
  const double pref = 1.0 / (4.0 * units::pi * units::pi * volume);
  std::vector<double> n(n_sites, 0.0);
  for (std::size_t t = 0; t < gl_diags.size(); ++t) {
    const auto& d = gl_diags[t];
    if (static_cast<std::size_t>(d.size()) != n_sites * static_cast<std::size_t>(orb))
      throw Error("lesser diagonal length does not match device");
    const double w = grid.energy_weights[grid.energy_index(t)] * grid.momentum_weights[grid.momentum_index(t)];
    for (std::size_t s = 0; s < n_sites; ++s) {
      double im = 0.0;
      for (int o = 0; o < orb; ++o) im += d[static_cast<Eigen::Index>(s) * orb + o].imag();
      n[s] += pref * w * im;
    }
  }
  return n;
}

std::vector<double> node_density(const DeviceMesh& dm, const DeviceGraph& graph, std::span<const double> site_n) {
  std::vector<double> out(dm.mesh.size(), 0.0);
  const auto ord = graph.active_ordinals();
  for (std::size_t id = 0; id < graph.sites.size(); ++id) {
    if (ord[id] < 0) continue;
    const auto& s = graph.sites[id];
    out[dm.body_node(s.slab, s.layer)] += site_n[static_cast<std::size_t>(ord[id])] / static_cast<double>(dm.width);
  }
  return out;
}

std::vector<double> site_potential(const DeviceMesh& dm, const DeviceGraph& graph, std::span<const double> phi) {
  std::vector<double> out;
  out.reserve(graph.n_active());
  for (const auto& s : graph.sites)
    if (s.active) out.push_back(phi[dm.body_node(s.slab, s.layer)]);
  return out;
}

}  // namespace utb
