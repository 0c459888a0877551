#include "utb/partition.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace utb {

std::vector<double> Partition::loads() const {
  std::vector<double> l(static_cast<std::size_t>(n_workers), 0.0);
  for (std::size_t t = 0; t < assignment.size(); ++t) l[static_cast<std::size_t>(assignment[t])] += costs[t];
  return l;
}

double Partition::imbalance() const {
  const auto l = loads();
  const double total = std::accumulate(l.begin(), l.end(), 0.0);
  if (total <= 0.0) return 0.0;
  return *std::max_element(l.begin(), l.end()) / (total / static_cast<double>(n_workers)) - 1.0;
}

std::vector<std::vector<std::size_t>> Partition::owned() const {
  std::vector<std::vector<std::size_t>> o(static_cast<std::size_t>(n_workers));
  for (std::size_t t = 0; t < assignment.size(); ++t) o[static_cast<std::size_t>(assignment[t])].push_back(t);
  return o;
}

double estimate_cost(std::span<const Eigen::Index> slab_ranks) {
  double c = 0.0;
  for (auto r : slab_ranks) c += static_cast<double>(r) * static_cast<double>(r) * static_cast<double>(r);
  return c;
}

double estimate_cost(const DeviceGraph& graph) {
  const auto r = graph.slab_ranks();
  return estimate_cost(std::span<const Eigen::Index>(r));
}

Partition partition_tuples(std::span<const double> costs, int n_workers) {
  if (n_workers < 1) throw Error("need at least one worker");
  Partition p;
  p.n_workers = n_workers;
  p.costs.assign(costs.begin(), costs.end());
  p.assignment.assign(costs.size(), 0);

  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] > costs[b]; });

  using Slot = std::pair<double, int>;
  std::priority_queue<Slot, std::vector<Slot>, std::greater<>> heap;
  for (int w = 0; w < n_workers; ++w) heap.push({0.0, w});
  for (auto t : order) {
    auto [load, w] = heap.top();
    heap.pop();
    p.assignment[t] = w;
    heap.push({load + costs[t], w});
  }
  return p;
}

Partition inherit_partition(const Partition& base, const EkGrid& refined) {
  Partition p;
  p.n_workers = base.n_workers;
  const auto nk = refined.n_k();
  const double unit = base.costs.empty() ? 1.0 : base.costs.front();
  for (std::size_t e = 0; e < refined.n_e(); ++e)
    for (std::size_t j = 0; j < nk; ++j) {
      const auto src = refined.origin[e] * nk + j;
      if (src >= base.assignment.size()) throw Error("refined grid does not descend from the partitioned grid");
      p.assignment.push_back(base.assignment[src]);
      p.costs.push_back(unit);
    }
  return p;
}

}  // namespace utb
