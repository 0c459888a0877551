#include "utb/ekgrid.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace utb;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double lorentzian(double e, double e0, double g) { return g / ((e - e0) * (e - e0) + g * g); }

}  // namespace

TEST_CASE("homogeneous spacing and shift stride") {
  const auto g = build_homogeneous(-1.0, 1.0, 0.06, 3, 4, 1.0);
  CHECK(g.energies[1] - g.energies[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(g.mode == GridMode::HOMOGENEOUS);
  for (std::size_t i = 0; i < g.n_e(); ++i) {
    if (i + 3 < g.n_e()) {
      REQUIRE(g.shift_plus[i].has_value());
      CHECK(g.shift_plus[i]->exact());
      CHECK(g.shift_plus[i]->lower == i + 3);
    } else {
      CHECK_FALSE(g.shift_plus[i].has_value());
    }
    if (i >= 3) {
      REQUIRE(g.shift_minus[i].has_value());
      CHECK(g.shift_minus[i]->lower == i - 3);
    } else {
      CHECK_FALSE(g.shift_minus[i].has_value());
    }
  }
}

TEST_CASE("range is expanded to a whole number of steps") {
  const auto g = build_homogeneous(0.0, 0.1, 0.06, 3, 1, 1.0);
  // 0.1 / 0.02 = 5 intervals exactly; 0.11 needs 6.
  CHECK(g.n_e() == 6);
  const auto h = build_homogeneous(0.0, 0.11, 0.06, 3, 1, 1.0);
  CHECK(h.n_e() == 7);
  CHECK(h.energies.back() == doctest::Approx(0.12).epsilon(1e-12));
  CHECK_THROWS_AS(build_homogeneous(1.0, 1.0, 0.06, 3, 1, 1.0), Error);
  CHECK_THROWS_AS(build_homogeneous(0.0, 1.0, 0.06, 0, 1, 1.0), Error);
}

TEST_CASE("momentum grid covers the zone") {
  const auto one = build_homogeneous(0.0, 1.0, 0.06, 3, 1, 0.5);
  REQUIRE(one.n_k() == 1);
  CHECK(one.momenta[0] == 0.0);
  CHECK(one.momentum_weights[0] == doctest::Approx(2.0 * units::pi / 0.5).epsilon(1e-14));
  for (std::size_t nk : {2u, 4u, 9u}) {
    const auto g = build_homogeneous(0.0, 1.0, 0.06, 3, nk, 0.25);
    CHECK(sum(g.momentum_weights) == doctest::Approx(g.zone_length()).epsilon(1e-14));
    CHECK(g.momenta.back() == doctest::Approx(units::pi / 0.25).epsilon(1e-14));
    if (nk > 2) CHECK(g.momentum_weights.front() == doctest::Approx(0.5 * g.momentum_weights[1]).epsilon(1e-14));
  }
}

TEST_CASE("quadrature is exact for constants and lines") {
  const auto g = build_homogeneous(-2.0, 1.3, 0.06, 7, 1, 1.0);
  const double len = g.energies.back() - g.energies.front();
  std::vector<double> one(g.n_e(), 1.0), lin(g.n_e());
  for (std::size_t i = 0; i < g.n_e(); ++i) lin[i] = 3.0 * g.energies[i] - 0.5;
  CHECK(std::abs(integrate_energy(one, g) - len) < 1e-14 * std::max(1.0, len) * 4);
  const double a = g.energies.front(), b = g.energies.back();
  const double exact = 1.5 * (b * b - a * a) - 0.5 * (b - a);
  CHECK(std::abs(integrate_energy(lin, g) - exact) < 1e-14 * 20);
  CHECK_THROWS_AS(integrate_energy(std::vector<double>(3, 1.0), g), Error);
  CHECK_THROWS_AS(integrate_momentum(std::vector<double>(3, 1.0), g), Error);
}

TEST_CASE("Lorentzian against a ten times finer grid") {
  const double e0 = 0.013, gam = 0.02;
  const auto coarse = build_homogeneous(-1.0, 1.0, 0.06, 15, 1, 1.0);
  const auto fine = build_homogeneous(-1.0, 1.0, 0.06, 150, 1, 1.0);
  auto integral = [&](const EkGrid& g) {
    std::vector<double> v(g.n_e());
    for (std::size_t i = 0; i < g.n_e(); ++i) v[i] = lorentzian(g.energies[i], e0, gam);
    return integrate_energy(v, g);
  };
  const double ref = integral(fine);
  CHECK(std::abs(integral(coarse) - ref) / ref < 1e-3);
}

TEST_CASE("refinement: zero budget, determinism, weights") {
  const auto g = build_homogeneous(0.0, 1.0, 0.06, 3, 2, 1.0);
  std::vector<double> ind(g.n_e(), 1.0);
  CHECK(refine_adaptive(g, ind, 0) == g);
  CHECK_THROWS_AS(refine_adaptive(g, std::vector<double>(2, 1.0), 3), Error);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : ind) x = u(rng);
  const auto r1 = refine_adaptive(g, ind, 37);
  const auto r2 = refine_adaptive(g, ind, 37);
  CHECK(r1 == r2);
  CHECK(r1.mode == GridMode::ADAPTIVE);
  CHECK(r1.n_e() == g.n_e() + 37);
  CHECK(std::is_sorted(r1.energies.begin(), r1.energies.end()));
  for (double e : g.energies) CHECK(std::find(r1.energies.begin(), r1.energies.end(), e) != r1.energies.end());
  for (double w : r1.energy_weights) CHECK(w > 0.0);
  CHECK(std::abs(sum(r1.energy_weights) - (g.energies.back() - g.energies.front())) < 1e-14);
}

TEST_CASE("flat indicator fills widest intervals, lower index first") {
  // Uneven start: intervals of width 0.2, 0.1, 0.2.
  EkGrid g = build_homogeneous(0.0, 0.5, 0.06, 1, 1, 1.0);
  g.energies = {0.0, 0.2, 0.3, 0.5};
  g.energy_weights = trapezoid_weights(g.energies);
  g.origin = {0, 1, 2, 3};
  resolve_shifts(g);
  const std::vector<double> flat(4, 1.0);
  const auto one = refine_adaptive(g, flat, 1);
  CHECK(one.energies == std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.5});
  const auto two = refine_adaptive(g, flat, 2);
  CHECK(two.energies == std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
}

TEST_CASE("resonance attracts most of the budget") {
  const auto g = build_homogeneous(-1.0, 1.0, 0.06, 3, 1, 1.0);
  const double e0 = 0.31, gam = 0.002;
  std::vector<double> ind(g.n_e());
  for (std::size_t i = 0; i < g.n_e(); ++i) ind[i] = lorentzian(g.energies[i], e0, gam);
  const std::size_t budget = 50;
  const auto r = refine_adaptive(g, ind, budget);
  // Original interval holding the resonance.
  const auto hi = static_cast<std::size_t>(std::upper_bound(g.energies.begin(), g.energies.end(), e0) - g.energies.begin());
  const double lo_e = g.energies[hi - 1] - 1e-12, hi_e = g.energies[hi] + 1e-12;
  std::size_t inside = 0;
  for (double e : r.energies)
    if (e > lo_e && e < hi_e && std::find(g.energies.begin(), g.energies.end(), e) == g.energies.end()) ++inside;
  // Midpoint indicators are interpolated, so the tails keep a share.
  CHECK(static_cast<double>(inside) >= 0.5 * static_cast<double>(budget));
}

TEST_CASE("refined shifts interpolate and origins track the base grid") {
  const auto g = build_homogeneous(0.0, 1.0, 0.06, 3, 1, 1.0);
  std::vector<double> ind(g.n_e(), 0.0);
  ind[10] = ind[11] = 1.0;
  const auto r = refine_adaptive(g, ind, 5);
  for (std::size_t i = 0; i < r.n_e(); ++i) {
    CHECK(r.energies[r.origin[i] == i ? i : i] >= g.energies[r.origin[i]] - 1e-15);
    if (!r.shift_plus[i]) {
      CHECK(r.energies[i] + r.e_op > r.energies.back() - 1e-9);
      continue;
    }
    const auto& s = *r.shift_plus[i];
    const double target = r.energies[i] + r.e_op;
    const double interp = (1.0 - s.fraction) * r.energies[s.lower] + s.fraction * r.energies[s.upper];
    CHECK(interp == doctest::Approx(target).epsilon(1e-12));
    CHECK(s.fraction >= 0.0);
    CHECK(s.fraction < 1.0);
  }
}
