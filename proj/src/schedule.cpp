#include "utb/schedule.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

namespace utb {

namespace {

void add_stencil(std::set<std::size_t>& rows, const std::optional<ShiftStencil>& s) {
  if (!s) return;
  rows.insert(s->lower);
  rows.insert(s->upper);
}

}  // namespace

std::vector<std::size_t> needed_rows(int worker, const Partition& partition, const EkGrid& grid) {
  if (partition.assignment.size() != grid.n_tuples()) throw Error("partition does not match grid");
  std::set<std::size_t> rows;
  for (std::size_t t = 0; t < grid.n_tuples(); ++t) {
    if (partition.assignment[t] != worker) continue;
    const auto e = grid.energy_index(t);
    rows.insert(e);
    add_stencil(rows, grid.shift_plus[e]);
    add_stencil(rows, grid.shift_minus[e]);
  }
  return {rows.begin(), rows.end()};
}

CommSchedule build_comm_schedule(const Partition& partition, const EkGrid& grid) {
  if (partition.assignment.size() != grid.n_tuples()) throw Error("partition does not match grid");
  for (std::size_t e = 0; e < grid.n_e(); ++e)
    for (const auto* s : {&grid.shift_plus[e], &grid.shift_minus[e]})
      if (*s && ((*s)->lower >= grid.n_e() || (*s)->upper >= grid.n_e() || (*s)->fraction < 0.0 ||
                 (*s)->fraction > 1.0))
        throw Error("unresolvable optical shift at energy index " + std::to_string(e));

  CommSchedule s;
  s.n_workers = partition.n_workers;
  for (int w = 0; w < partition.n_workers; ++w)
    for (auto e : needed_rows(w, partition, grid))
      for (std::size_t j = 0; j < grid.n_k(); ++j) {
        const auto t = grid.tuple(e, j);
        const int owner = partition.assignment[t];
        if (owner == w) continue;
        for (auto kind : {PayloadKind::GR_DIAG, PayloadKind::GL_DIAG}) s.tasks.push_back({t, kind, owner, w});
      }
  std::sort(s.tasks.begin(), s.tasks.end());
  s.per_worker.assign(static_cast<std::size_t>(s.n_workers), {});
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    s.per_worker[static_cast<std::size_t>(s.tasks[i].sender)].push_back(i);
    s.per_worker[static_cast<std::size_t>(s.tasks[i].receiver)].push_back(i);
  }
  return s;
}

bool pairwise_consistent(const CommSchedule& s) {
  // Shared-task subsequence of each pair as seen from both ends.
  std::map<std::pair<int, int>, std::vector<std::size_t>> low_view, high_view;
  for (int w = 0; w < s.n_workers; ++w)
    for (auto i : s.per_worker[static_cast<std::size_t>(w)]) {
      const auto& t = s.tasks[i];
      const int other = w == t.sender ? t.receiver : t.sender;
      const std::pair<int, int> key{std::min(w, other), std::max(w, other)};
      (w < other ? low_view : high_view)[key].push_back(i);
    }
  return low_view == high_view;
}

bool wait_for_graph_acyclic(const CommSchedule& s) {
  const auto n = s.tasks.size();
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& view : s.per_worker)
    for (std::size_t i = 1; i < view.size(); ++i) {
      out[view[i - 1]].push_back(view[i]);
      ++indeg[view[i]];
    }
  std::queue<std::size_t> q;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) q.push(i);
  std::size_t seen = 0;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    ++seen;
    for (auto v : out[u])
      if (--indeg[v] == 0) q.push(v);
  }
  return seen == n;
}

}  // namespace utb
