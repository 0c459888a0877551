#include "utb/device.hpp"
#include "utb/leads.hpp"
#include "utb/rgf.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace utb;

namespace {

MatC scalar(cplx v) { return MatC::Constant(1, 1, v); }

// Semi-infinite chain surface Green's function on the retarded branch.
cplx chain_oracle(double e, double t) {
  if (std::abs(e) < 2.0 * std::abs(t)) return cplx(e, -std::sqrt(4.0 * t * t - e * e)) / (2.0 * t * t);
  const double s = std::copysign(std::sqrt(e * e - 4.0 * t * t), e);
  return (e - s) / (2.0 * t * t);
}

double min_eig(const MatC& herm) { return Eigen::SelfAdjointEigenSolver<MatC>(herm).eigenvalues().minCoeff(); }

}  // namespace

TEST_CASE("chain surface Green's function at band centre is -i") {
  const auto g = surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.0);
  CHECK(std::abs(g(0, 0) - cplx(0.0, -1.0)) < 1e-6);
}

TEST_CASE("chain surface Green's function matches the closed form across the band") {
  for (double e : {-3.0, -1.99, -1.5, -0.7, 0.3, 1.2, 1.95, 2.5, 7.0}) {
    CAPTURE(e);
    const auto g = surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), e);
    CHECK(std::abs(g(0, 0) - chain_oracle(e, -1.0)) < 1e-4);
    // Fixed-point residual below the tolerance.
    const cplx z(e, 1e-6);
    CHECK(std::abs((z - g(0, 0)) * g(0, 0) - 1.0) < 1e-12);
  }
}

TEST_CASE("far above the band g tends to 1/E") {
  const auto g = surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 100.0);
  CHECK(std::abs(g(0, 0) - 0.01) < 2e-6);
  CHECK(std::abs(g(0, 0).imag()) < 1e-9);
}

TEST_CASE("decoupled layers give the bare resolvent") {
  MatC h00(2, 2);
  h00 << 0.3, cplx(0.1, 0.2), cplx(0.1, -0.2), -0.4;
  const MatC h01 = MatC::Zero(2, 2);
  DecimationOptions opt;
  const double e = 0.7;
  const auto g = surface_greens_function<cplx>(h00, h01, e, opt);
  MatC a = -h00;
  a.diagonal().array() += cplx(e, opt.eta);
  CHECK((g - a.inverse()).norm() < 1e-14);
}

TEST_CASE("decimation rejects bad options and reports non-convergence") {
  CHECK_THROWS_AS(surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.0, {0.0, 1e-12, 200}), Error);
  CHECK_THROWS_AS(surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.0, {1e-6, 1e-12, 3}), ConvergenceError);
  try {
    surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.0, {1e-6, 1e-12, 3});
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() == 3);
  }
}

TEST_CASE("lead self-energy of the chain at E = 0") {
  const auto g = surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.0);
  const MatC sigma = lead_self_energy<cplx>(g, scalar(-1.0));
  CHECK(std::abs(sigma(0, 0) - cplx(0.0, -1.0)) < 1e-6);
  CHECK(std::abs(broadening(sigma)(0, 0) - 2.0) < 2e-6);
}

TEST_CASE("zero coupling gives zero self-energy; scaling is quadratic") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  MatC g(3, 3), c(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) {
    g.data()[i] = cplx(n(rng), n(rng));
    c.data()[i] = cplx(n(rng), n(rng));
  }
  CHECK(lead_self_energy<cplx>(g, MatC::Zero(3, 3)).norm() == 0.0);
  const cplx s(0.6, -1.3);
  const MatC base = lead_self_energy<cplx>(g, c);
  CHECK((lead_self_energy<cplx>(g, MatC(s * c)) - std::norm(s) * base).norm() < 1e-12 * base.norm());
  CHECK(lead_self_energy<cplx>(g, MatC::Zero(2, 3)).rows() == 2);
  CHECK_THROWS_AS(lead_self_energy<cplx>(g, MatC::Zero(3, 2)), Error);
}

TEST_CASE("lead lesser self-energy carries the Fermi factor") {
  const auto g = surface_greens_function<cplx>(scalar(0.0), scalar(-1.0), 0.4);
  const MatC sigma = lead_self_energy<cplx>(g, scalar(-1.0));
  const MatC gamma = broadening(sigma);
  const double T = 300.0;
  CHECK((lead_lesser(sigma, 0.4, 0.4, T) - cplx(0.0, 0.5) * gamma).norm() < 1e-15);
  const double kt = units::k_B * T;
  CHECK(lead_lesser(sigma, 0.4 - 10.0 * kt, 0.4, T).norm() <= 5e-5 * gamma.norm());
  CHECK(lead_lesser(MatC::Zero(2, 2), 0.0, 1.0, T).norm() == 0.0);
  const MatC sl = lead_lesser(sigma, 0.3, 0.4, T);
  CHECK((sl + sl.adjoint()).norm() < 1e-15);
}

TEST_CASE("Fermi function is stable far from the chemical potential") {
  CHECK(fermi(0.0, 300.0) == 0.5);
  CHECK(fermi(50.0, 1.0) == doctest::Approx(0.0));
  CHECK(fermi(-50.0, 1.0) == doctest::Approx(1.0));
  CHECK(std::isfinite(fermi(1e6, 1.0)));
  CHECK_THROWS_AS(fermi(0.0, 0.0), Error);
}

TEST_CASE("contact broadening is positive semidefinite on the retarded branch") {
  DeviceSpec spec;
  spec.n_slabs = 5;
  spec.sites_per_slab = 8;
  spec.body_layers = 2;
  spec.orbitals_per_site = 2;
  MaterialParams p;
  p.orbital_splitting_ev = 0.7;
  for (double k : {0.0, 1.1, 3.0}) {
    const auto c = pristine_contact(spec, p, k);
    for (double e = -7.0; e <= 7.0; e += 0.37) {
      CAPTURE(e);
      for (auto side : {LeadSide::FIRST, LeadSide::LAST}) {
        const auto lead = compute_lead({c.h00, c.h01, 0.0, side}, e, k, 300.0);
        const double scale = std::max(lead.gamma.norm(), 1e-300);
        CHECK((lead.gamma - lead.gamma.adjoint()).norm() < 1e-10 * std::max(scale, 1.0));
        CHECK(min_eig(lead.gamma) >= -1e-10 * scale);
        const MatC sl = lead.sigma_lesser;
        CHECK((sl + sl.adjoint()).norm() < 1e-12 * std::max(scale, 1.0));
      }
      const MatC g = surface_greens_function<cplx>(c.h00, c.h01, e);
      const MatC s = c.h01 * g * c.h01.adjoint();
      const MatC anti = (s - s.adjoint()) / cplx(0.0, 2.0);
      CHECK(Eigen::SelfAdjointEigenSolver<MatC>(anti).eigenvalues().maxCoeff() <= 1e-10 * std::max(1.0, s.norm()));
    }
  }
}

TEST_CASE("ballistic equilibrium obeys fluctuation-dissipation") {
  DeviceSpec spec;
  spec.n_slabs = 8;
  spec.sites_per_slab = 6;
  spec.body_layers = 2;
  const MaterialParams p;
  const auto dev = make_device(spec, p);
  const double mu = -1.0, T = 300.0, k = 0.9;
  const std::vector<double> phi(dev.graph.n_active(), 0.0);
  const auto h = assemble_hamiltonian(dev.graph, dev.alloy, k, phi);
  const auto c = pristine_contact(spec, p, k);
  for (double e : {-3.1, -1.05, -0.98, 0.4}) {
    const auto first = compute_lead({c.h00, c.h01, mu, LeadSide::FIRST}, e, k, T);
    const auto last = compute_lead({c.h00, c.h01, mu, LeadSide::LAST}, e, k, T);
    auto sr = SelfEnergyBlocks<cplx>::zeros(dev.graph.slab_ranks());
    auto sl = sr;
    sr.first = first.sigma_r;
    sr.last = last.sigma_r;
    sl.first = first.sigma_lesser;
    sl.last = last.sigma_lesser;
    const auto gr = solve_retarded(h, sr, cplx(e));
    const auto gl = solve_lesser(h, gr, sl);
    const double f = fermi(e - mu, T);
    for (std::size_t i = 0; i < gr.diag.size(); ++i) {
      const MatC spectral = cplx(0.0, 1.0) * (gr.diag[i] - gr.diag[i].adjoint());
      const MatC expect = cplx(0.0, f) * spectral;
      CHECK((gl.diag[i] - expect).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, spectral.cwiseAbs().maxCoeff()));
    }
  }
}
