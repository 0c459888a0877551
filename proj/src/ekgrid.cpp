#include "utb/ekgrid.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace utb {

double EkGrid::zone_length() const { return 2.0 * units::pi / period_nm; }

std::vector<double> trapezoid_weights(std::span<const double> nodes) {
  std::vector<double> w(nodes.size(), 0.0);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double half = 0.5 * (nodes[i + 1] - nodes[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  return w;
}

void fill_momenta(EkGrid& grid, std::size_t n_k, double period_nm) {
  if (n_k < 1) throw Error("momentum grid needs at least one point");
  if (!(period_nm > 0.0)) throw Error("transverse period must be positive");
  grid.period_nm = period_nm;
  if (n_k == 1) {
    grid.momenta = {0.0};
    grid.momentum_weights = {grid.zone_length()};
    return;
  }
  const double kmax = units::pi / period_nm;
  grid.momenta.resize(n_k);
  for (std::size_t j = 0; j < n_k; ++j) grid.momenta[j] = kmax * static_cast<double>(j) / static_cast<double>(n_k - 1);
  grid.momentum_weights = trapezoid_weights(grid.momenta);
  for (auto& w : grid.momentum_weights) w *= 2.0;
}

EkGrid build_homogeneous(double e_min, double e_max, double e_op, std::size_t points_per_eop, std::size_t n_k,
                         double period_nm) {
  if (!(e_max > e_min)) throw Error("energy range is degenerate");
  if (points_per_eop < 1) throw Error("points_per_Eop must be at least 1");
  if (!(e_op > 0.0)) throw Error("optical phonon energy must be positive");
  EkGrid g;
  g.e_op = e_op;
  const double de = e_op / static_cast<double>(points_per_eop);
  const auto intervals = static_cast<std::size_t>(std::ceil((e_max - e_min) / de - 1e-9));
  g.energies.resize(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) g.energies[i] = e_min + static_cast<double>(i) * de;
  g.energy_weights = trapezoid_weights(g.energies);
  g.origin.resize(g.energies.size());
  for (std::size_t i = 0; i < g.origin.size(); ++i) g.origin[i] = i;
  fill_momenta(g, n_k, period_nm);

  const auto n = g.energies.size();
  g.shift_plus.assign(n, std::nullopt);
  g.shift_minus.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    if (i + points_per_eop < n) g.shift_plus[i] = ShiftStencil{i + points_per_eop, i + points_per_eop, 0.0};
    if (i >= points_per_eop) g.shift_minus[i] = ShiftStencil{i - points_per_eop, i - points_per_eop, 0.0};
  }
  return g;
}

namespace {

std::optional<ShiftStencil> locate(const std::vector<double>& e, double target, double snap) {
  if (target < e.front() - snap || target > e.back() + snap) return std::nullopt;
  auto it = std::lower_bound(e.begin(), e.end(), target - snap);
  auto hi = static_cast<std::size_t>(it - e.begin());
  if (hi < e.size() && std::abs(e[hi] - target) <= snap) return ShiftStencil{hi, hi, 0.0};
  if (hi == 0 || hi >= e.size()) return std::nullopt;
  const auto lo = hi - 1;
  if (std::abs(e[lo] - target) <= snap) return ShiftStencil{lo, lo, 0.0};
  return ShiftStencil{lo, hi, (target - e[lo]) / (e[hi] - e[lo])};
}

}  // namespace

void resolve_shifts(EkGrid& grid) {
  const auto& e = grid.energies;
  double min_gap = e.size() > 1 ? e.back() - e.front() : 1.0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) min_gap = std::min(min_gap, e[i + 1] - e[i]);
  const double snap = 1e-9 * min_gap;
  grid.shift_plus.assign(e.size(), std::nullopt);
  grid.shift_minus.assign(e.size(), std::nullopt);
  for (std::size_t i = 0; i < e.size(); ++i) {
    grid.shift_plus[i] = locate(e, e[i] + grid.e_op, snap);
    grid.shift_minus[i] = locate(e, e[i] - grid.e_op, snap);
  }
}

EkGrid refine_adaptive(const EkGrid& grid, std::span<const double> indicator, std::size_t budget) {
  if (indicator.size() != grid.n_e())
    throw Error("indicator has " + std::to_string(indicator.size()) + " values for " +
                std::to_string(grid.n_e()) + " energies");
  if (budget == 0) return grid;

  struct Interval {
    double lo, hi, ind_lo, ind_hi;
    std::size_t origin;
    double score() const { return 0.5 * (ind_lo + ind_hi) * (hi - lo); }
  };
  auto worse = [](const Interval& a, const Interval& b) {
    if (a.score() != b.score()) return a.score() < b.score();
    return a.lo > b.lo;  // lower energy wins ties
  };
  std::priority_queue<Interval, std::vector<Interval>, decltype(worse)> queue(worse);
  for (std::size_t i = 0; i + 1 < grid.n_e(); ++i)
    queue.push({grid.energies[i], grid.energies[i + 1], indicator[i], indicator[i + 1], grid.origin[i]});

  struct Point {
    double e;
    std::size_t origin;
  };
  std::vector<Point> points;
  for (std::size_t i = 0; i < grid.n_e(); ++i) points.push_back({grid.energies[i], grid.origin[i]});
  for (std::size_t b = 0; b < budget && !queue.empty(); ++b) {
    const auto top = queue.top();
    queue.pop();
    const double mid = 0.5 * (top.lo + top.hi);
    const double ind_mid = 0.5 * (top.ind_lo + top.ind_hi);
    points.push_back({mid, top.origin});
    queue.push({top.lo, mid, top.ind_lo, ind_mid, top.origin});
    queue.push({mid, top.hi, ind_mid, top.ind_hi, top.origin});
  }
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.e < b.e; });

  EkGrid out;
  out.mode = GridMode::ADAPTIVE;
  out.e_op = grid.e_op;
  out.period_nm = grid.period_nm;
  out.momenta = grid.momenta;
  out.momentum_weights = grid.momentum_weights;
  for (const auto& p : points) {
    out.energies.push_back(p.e);
    out.origin.push_back(p.origin);
  }
  out.energy_weights = trapezoid_weights(out.energies);
  resolve_shifts(out);
  return out;
}

double integrate_energy(std::span<const double> values, const EkGrid& grid) {
  if (values.size() != grid.n_e()) throw Error("energy integrand length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += grid.energy_weights[i] * values[i];
  return s;
}

double integrate_momentum(std::span<const double> values, const EkGrid& grid) {
  if (values.size() != grid.n_k()) throw Error("momentum integrand length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) s += grid.momentum_weights[j] * values[j];
  return s;
}

}  // namespace utb
