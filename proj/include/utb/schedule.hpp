#pragma once

#include "utb/ekgrid.hpp"
#include "utb/partition.hpp"

#include <cstdint>
#include <vector>

namespace utb {

enum class PayloadKind : std::uint8_t { GR_DIAG = 0, GL_DIAG = 1 };

struct ExchangeTask {
  std::size_t tuple;
  PayloadKind kind;
  int sender;
  int receiver;

  auto operator<=>(const ExchangeTask&) const = default;
};

struct CommSchedule {
  int n_workers = 1;
  std::vector<ExchangeTask> tasks;                 // global total order
  std::vector<std::vector<std::size_t>> per_worker;  // indices into tasks
};

// Energy rows worker w must see in full: its own rows and their +-E_op stencil rows.
std::vector<std::size_t> needed_rows(int worker, const Partition& partition, const EkGrid& grid);

CommSchedule build_comm_schedule(const Partition& partition, const EkGrid& grid);

// Both endpoints of every pair meet their shared tasks in the same order.
bool pairwise_consistent(const CommSchedule& s);

// Edges join consecutive tasks of each worker; true when the graph has no cycle.
bool wait_for_graph_acyclic(const CommSchedule& s);

}  // namespace utb
