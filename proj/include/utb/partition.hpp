#pragma once

#include "utb/device.hpp"
#include "utb/ekgrid.hpp"

#include <span>
#include <vector>

namespace utb {

struct Partition {
  std::vector<int> assignment;  // tuple -> worker
  std::vector<double> costs;
  int n_workers = 1;

  std::vector<double> loads() const;
  double imbalance() const;  // max_load / mean_load - 1
  std::vector<std::vector<std::size_t>> owned() const;
};

// Dominant RGF work per tuple: sum over slabs of rank^3.
double estimate_cost(std::span<const Eigen::Index> slab_ranks);
double estimate_cost(const DeviceGraph& graph);

// Longest-processing-time greedy; ties go to the lower tuple index and the
// lower worker id.
Partition partition_tuples(std::span<const double> costs, int n_workers);

// Carries a partition over to a refined grid: every tuple goes to the owner of
// the unrefined tuple at its origin energy and the same momentum.
Partition inherit_partition(const Partition& base, const EkGrid& refined);

}  // namespace utb
