#pragma once

#include "utb/ekgrid.hpp"
#include "utb/partition.hpp"
#include "utb/scattering.hpp"
#include "utb/schedule.hpp"
#include "utb/transport.hpp"

#include <map>

namespace utb {

struct TupleDiagonals {
  VecC retarded;
  VecC lesser;
};

// Momentum sums for every row a worker needs, keyed by energy index.
using RowSums = std::map<std::size_t, KSums>;

// Canonical reduction: terms w_j * d_j added in increasing j. Every caller
// goes through this function so results do not depend on data placement.
VecC canonical_row_sum(std::span<const VecC> terms);

// (a) local rows and local terms, (b) schedule-ordered blocking exchange,
// (c) remaining rows summed in canonical order.
RowSums execute_round(int worker, const CommSchedule& schedule, const Partition& partition, const EkGrid& grid,
                      const std::map<std::size_t, TupleDiagonals>& local, Transport& transport);

// Momentum sums at E +- E_op from the needed rows; interpolates on adaptive grids.
std::optional<KSums> shifted_sums(const RowSums& rows, const std::optional<ShiftStencil>& stencil);

PhononSigma phonon_at(std::size_t e, const RowSums& rows, const EkGrid& grid, const CouplingConstants& K, double n0);

}  // namespace utb
