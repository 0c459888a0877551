#include "utb/device.hpp"
#include "utb/partition.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace utb;

namespace {

DeviceSpec chain(std::size_t slabs) {
  DeviceSpec s;
  s.n_slabs = slabs;
  return s;
}

DeviceSpec slab_device(std::size_t slabs, std::size_t width, std::size_t layers) {
  DeviceSpec s;
  s.n_slabs = slabs;
  s.sites_per_slab = width * layers;
  s.body_layers = layers;
  return s;
}

MaterialParams sige() {
  MaterialParams p;
  p.onsite_si_ev = 0.0;
  p.onsite_ge_ev = 0.3;
  p.hopping_si_ev = -1.0;
  p.hopping_ge_ev = -0.8;
  p.hopping_sige_ev = -0.9;
  return p;
}

std::size_t ge_count(const AlloyAssignment& a) {
  return static_cast<std::size_t>(std::count(a.species.begin(), a.species.end(), Species::Ge));
}

}  // namespace

TEST_CASE("minimal chain has two inter-slab bonds and no wrap") {
  const auto g = build_device(chain(3));
  CHECK(g.sites.size() == 3);
  CHECK(std::count_if(g.bonds.begin(), g.bonds.end(), [](const Bond& b) { return b.inter_slab; }) == 2);
  CHECK(std::none_of(g.bonds.begin(), g.bonds.end(), [](const Bond& b) { return b.wrap; }));
  CHECK(g.connected());
}

TEST_CASE("20 slabs of 12 sites give rank-12 blocks") {
  DeviceSpec s = chain(20);
  s.sites_per_slab = 12;
  const auto g = build_device(s);
  CHECK(g.sites.size() == 240);
  for (auto r : g.slab_ranks()) CHECK(r == 12);
  CHECK(std::any_of(g.bonds.begin(), g.bonds.end(), [](const Bond& b) { return b.wrap; }));
}

TEST_CASE("rank-240 cross-section gives 240x240 blocks") {
  const auto dev = make_device(slab_device(3, 40, 6), MaterialParams{});
  const std::vector<double> phi(dev.graph.n_active(), 0.0);
  const auto h = assemble_hamiltonian(dev.graph, dev.alloy, 0.0, phi);
  for (const auto& d : h.diag) {
    CHECK(d.rows() == 240);
    CHECK(d.cols() == 240);
  }
  CHECK(h.upper[0].size() == 240 * 240);
}

TEST_CASE("build_device rejects bad geometry") {
  CHECK_THROWS_AS(build_device(chain(2)), Error);
  DeviceSpec s = chain(3);
  s.sites_per_slab = 0;
  CHECK_THROWS_AS(build_device(s), Error);
}

TEST_CASE("VCA averages onsite energies") {
  MaterialParams p;
  p.onsite_si_ev = 0.0;
  p.onsite_ge_ev = 1.0;
  const auto g = build_device(slab_device(4, 3, 1));
  const auto a = assign_alloy(g, p, 0.1, DisorderMode::VCA, 7);
  for (double e : a.onsite_ev) CHECK(e == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("random alloy with x = 0 is pure Si for any seed") {
  const auto g = build_device(slab_device(5, 4, 2));
  for (std::uint64_t seed : {1u, 2u, 99u}) CHECK(ge_count(assign_alloy(g, sige(), 0.0, DisorderMode::RANDOM, seed)) == 0);
}

TEST_CASE("random alloy Ge count follows binomial statistics") {
  // 24000 sites: 100 slabs of 240.
  const auto g = build_device(slab_device(100, 40, 6));
  REQUIRE(g.sites.size() == 24000);
  const double x = 0.1;
  const double sigma = std::sqrt(24000.0 * x * (1.0 - x));
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed)
    mean += static_cast<double>(ge_count(assign_alloy(g, sige(), x, DisorderMode::RANDOM, seed)));
  mean /= 200.0;
  CHECK(std::abs(mean - 2400.0) < 3.0 * sigma);
  // Standard error of the 200-seed mean is sigma / sqrt(200).
  CHECK(std::abs(mean - 2400.0) < 3.0 * sigma / std::sqrt(200.0));
}

TEST_CASE("random onsite ensemble average converges to VCA") {
  const auto g = build_device(slab_device(3, 2, 1));
  const auto p = sige();
  const double x = 0.25;
  const double vca = assign_alloy(g, p, x, DisorderMode::VCA, 0).onsite_ev.front();
  const std::size_t seeds = 1000;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto a = assign_alloy(g, p, x, DisorderMode::RANDOM, seed);
    sum = std::accumulate(a.onsite_ev.begin(), a.onsite_ev.end(), sum);
    n += a.onsite_ev.size();
  }
  const double spread = std::abs(p.onsite_ge_ev - p.onsite_si_ev) * std::sqrt(x * (1.0 - x) / static_cast<double>(n));
  CHECK(std::abs(sum / static_cast<double>(n) - vca) < 3.0 * spread);
}

TEST_CASE("alloy assignment is a pure function of the seed") {
  const auto g = build_device(slab_device(6, 4, 2));
  const auto a = assign_alloy(g, sige(), 0.3, DisorderMode::RANDOM, 42);
  const auto b = assign_alloy(g, sige(), 0.3, DisorderMode::RANDOM, 42);
  const auto c = assign_alloy(g, sige(), 0.3, DisorderMode::RANDOM, 43);
  CHECK(a.species == b.species);
  CHECK(a.onsite_ev == b.onsite_ev);
  CHECK(a.species != c.species);
}

TEST_CASE("random-alloy bonds use the species-pair hopping") {
  const auto g = build_device(chain(40));
  const auto p = sige();
  const auto a = assign_alloy(g, p, 0.5, DisorderMode::RANDOM, 3);
  for (const auto& b : g.bonds) {
    const auto si = a.species[b.i], sj = a.species[b.j];
    const double expect = si != sj ? p.hopping_sige_ev : (si == Species::Ge ? p.hopping_ge_ev : p.hopping_si_ev);
    CHECK(a.bond_hopping(b.i, b.j) == expect);
  }
}

TEST_CASE("roughness with zero amplitude leaves the graph unchanged") {
  const auto g = build_device(slab_device(8, 4, 3));
  const auto r = apply_surface_roughness(g, RoughnessSpec{0, 1.0, 5});
  CHECK(r.n_active() == g.n_active());
  CHECK(r.bonds.size() == g.bonds.size());
}

TEST_CASE("roughness is deterministic per seed and keeps the device connected") {
  const auto g = build_device(slab_device(16, 4, 4));
  const RoughnessSpec spec{1, 0.5, 11};
  const auto a = apply_surface_roughness(g, spec);
  const auto b = apply_surface_roughness(g, spec);
  CHECK(a.active_ordinals() == b.active_ordinals());
  CHECK(a.connected());
  CHECK(a.n_active() < g.n_active());
  // One layer of amplitude always removes exactly one layer; seeds show at depth 2.
  const auto deep = build_device(slab_device(16, 4, 6));
  const auto c = apply_surface_roughness(deep, RoughnessSpec{2, 0.5, 11});
  const auto d = apply_surface_roughness(deep, RoughnessSpec{2, 0.5, 12});
  CHECK(c.active_ordinals() != d.active_ordinals());
}

TEST_CASE("infinite correlation length gives one uniform thinned layer") {
  const auto g = build_device(slab_device(10, 4, 3));
  const auto r = apply_surface_roughness(g, RoughnessSpec{1, std::numeric_limits<double>::infinity(), 9});
  const auto ranks = r.slab_ranks();
  // Contact slabs stay pristine; every interior slab has the same pattern.
  CHECK(ranks.front() == 12);
  CHECK(ranks.back() == 12);
  for (std::size_t s = 1; s + 1 < r.spec.n_slabs; ++s) {
    CHECK(ranks[s] == ranks[1]);
    for (std::size_t t = 0; t < r.spec.sites_per_slab; ++t)
      CHECK(r.sites[r.site_id(s, t)].active == r.sites[r.site_id(1, t)].active);
  }
  // Amplitude one removes at most a single layer per surface.
  CHECK(ranks[1] >= 4);
  CHECK(ranks[1] < 12);
}

TEST_CASE("correlated profile follows the exponential kernel") {
  const double rho = std::exp(-0.25 / 1.0);
  const auto v = correlated_gaussian_profile(200000, rho, 4);
  double c0 = 0.0, c1 = 0.0, c4 = 0.0;
  for (std::size_t i = 0; i + 4 < v.size(); ++i) {
    c0 += v[i] * v[i];
    c1 += v[i] * v[i + 1];
    c4 += v[i] * v[i + 4];
  }
  CHECK(c1 / c0 == doctest::Approx(rho).epsilon(0.02));
  CHECK(c4 / c0 == doctest::Approx(std::pow(rho, 4)).epsilon(0.03));
  CHECK(c0 / static_cast<double>(v.size() - 4) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("roughness deeper than the body is rejected") {
  const auto g = build_device(slab_device(8, 4, 2));
  CHECK_THROWS_AS(apply_surface_roughness(g, RoughnessSpec{2, 1.0, 1}), Error);
}

TEST_CASE("k = 0 with zero potential is real symmetric") {
  const auto dev = make_device(slab_device(5, 4, 2), sige());
  const std::vector<double> phi(dev.graph.n_active(), 0.0);
  const MatC h = to_dense(assemble_hamiltonian(dev.graph, dev.alloy, 0.0, phi));
  CHECK(h.imag().cwiseAbs().maxCoeff() == 0.0);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("H(k) is Hermitian and H(-k) is its conjugate") {
  DeviceSpec s = slab_device(6, 4, 2);
  s.orbitals_per_site = 2;
  s.alloy_fraction = 0.2;
  s.disorder_mode = DisorderMode::RANDOM;
  s.roughness = RoughnessSpec{0, 1.0, 1};
  const auto dev = make_device(s, sige());
  std::vector<double> phi(dev.graph.n_active());
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = 0.01 * static_cast<double>(i % 7);
  for (double k : {0.3, 1.7, -2.2}) {
    const auto op = assemble_hamiltonian(dev.graph, dev.alloy, k, phi);
    const MatC h = to_dense(op);
    CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(hermiticity_defect(op) < 1e-14);
    const MatC hm = to_dense(assemble_hamiltonian(dev.graph, dev.alloy, -k, phi));
    CHECK((hm - h.conjugate()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("bonds never span more than one slab") {
  DeviceSpec s = slab_device(12, 4, 3);
  s.roughness = RoughnessSpec{1, 0.4, 2};
  const auto dev = make_device(s, sige());
  for (const auto& b : dev.graph.bonds) {
    const auto si = dev.graph.sites[b.i].slab, sj = dev.graph.sites[b.j].slab;
    CHECK((si == sj || si + 1 == sj || sj + 1 == si));
  }
  // The dense matrix vanishes outside the block tridiagonal band.
  const std::vector<double> phi(dev.graph.n_active(), 0.0);
  const auto op = assemble_hamiltonian(dev.graph, dev.alloy, 0.5, phi);
  const auto off = op.offsets();
  const MatC h = to_dense(op);
  for (std::size_t i = 0; i < op.n_blocks(); ++i)
    for (std::size_t j = i + 2; j < op.n_blocks(); ++j)
      CHECK(h.block(off[i], off[j], op.rank(i), op.rank(j)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("potential shifts the onsite energies by -phi") {
  const auto dev = make_device(chain(4), MaterialParams{});
  const std::vector<double> phi{0.1, -0.2, 0.3, 0.0};
  const auto op = assemble_hamiltonian(dev.graph, dev.alloy, 0.0, phi);
  for (std::size_t i = 0; i < 4; ++i) CHECK(op.diag[i](0, 0).real() == doctest::Approx(-phi[i]));
  CHECK_THROWS_AS(assemble_hamiltonian(dev.graph, dev.alloy, 0.0, std::vector<double>{0.0}), Error);
}

TEST_CASE("1D chain spectrum samples the -2cos band") {
  const std::size_t n = 10;
  const auto dev = make_device(chain(n), MaterialParams{});
  const std::vector<double> phi(n, 0.0);
  const MatC h = to_dense(assemble_hamiltonian(dev.graph, dev.alloy, 0.0, phi));
  Eigen::SelfAdjointEigenSolver<MatC> es(h);
  std::vector<double> expect;
  for (std::size_t m = 1; m <= n; ++m)
    expect.push_back(-2.0 * std::cos(static_cast<double>(m) * units::pi / static_cast<double>(n + 1)));
  std::sort(expect.begin(), expect.end());
  for (std::size_t m = 0; m < n; ++m) CHECK(es.eigenvalues()[static_cast<Eigen::Index>(m)] == doctest::Approx(expect[m]).epsilon(1e-12));
}

TEST_CASE("thinned slab lowers the cost estimate") {
  const auto pristine = build_device(slab_device(10, 4, 3));
  DeviceSpec s = slab_device(10, 4, 3);
  s.roughness = RoughnessSpec{1, 0.5, 3};
  const auto rough = make_device(s, MaterialParams{});
  CHECK(estimate_cost(rough.graph) < estimate_cost(pristine));
}
