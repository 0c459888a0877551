#pragma once

#include "utb/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace utb {

enum class GridMode { HOMOGENEOUS, ADAPTIVE };

// Value at a shifted energy: (1 - fraction) * v[lower] + fraction * v[upper].
// Exact hits have lower == upper and fraction 0.
struct ShiftStencil {
  std::size_t lower = 0;
  std::size_t upper = 0;
  double fraction = 0.0;

  bool exact() const { return lower == upper; }
  bool operator==(const ShiftStencil&) const = default;
};

struct EkGrid {
  std::vector<double> energies;
  std::vector<double> energy_weights;
  std::vector<double> momenta;
  std::vector<double> momentum_weights;
  std::vector<std::optional<ShiftStencil>> shift_plus;   // E + E_op
  std::vector<std::optional<ShiftStencil>> shift_minus;  // E - E_op
  // Index of the energy in the grid this one was refined from (lower endpoint
  // of the enclosing original interval); identity for unrefined grids.
  std::vector<std::size_t> origin;
  GridMode mode = GridMode::HOMOGENEOUS;
  double e_op = 0.0;
  double period_nm = 1.0;

  std::size_t n_e() const { return energies.size(); }
  std::size_t n_k() const { return momenta.size(); }
  std::size_t n_tuples() const { return n_e() * n_k(); }
  std::size_t tuple(std::size_t e, std::size_t j) const { return e * n_k() + j; }
  std::size_t energy_index(std::size_t t) const { return t / n_k(); }
  std::size_t momentum_index(std::size_t t) const { return t % n_k(); }
  double zone_length() const;
  bool operator==(const EkGrid&) const = default;
};

// Uniform half-zone k grid on [0, pi/W] with doubled trapezoid weights.
void fill_momenta(EkGrid& grid, std::size_t n_k, double period_nm);

EkGrid build_homogeneous(double e_min, double e_max, double e_op, std::size_t points_per_eop, std::size_t n_k,
                         double period_nm);

std::vector<double> trapezoid_weights(std::span<const double> nodes);

// Resolves +-E_op targets by search; targets outside the grid are absent.
void resolve_shifts(EkGrid& grid);

EkGrid refine_adaptive(const EkGrid& grid, std::span<const double> indicator, std::size_t budget);

double integrate_energy(std::span<const double> values, const EkGrid& grid);
double integrate_momentum(std::span<const double> values, const EkGrid& grid);

}  // namespace utb
