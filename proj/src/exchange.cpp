#include "utb/exchange.hpp"

#include <string>

namespace utb {

VecC canonical_row_sum(std::span<const VecC> terms) {
  if (terms.empty()) throw Error("empty momentum row");
  VecC s = terms[0];
  for (std::size_t j = 1; j < terms.size(); ++j) s += terms[j];
  return s;
}

RowSums execute_round(int worker, const CommSchedule& schedule, const Partition& partition, const EkGrid& grid,
                      const std::map<std::size_t, TupleDiagonals>& local, Transport& transport) {
  const auto nk = grid.n_k();
  const auto rows = needed_rows(worker, partition, grid);

  // Weighted terms per needed row, filled locally first and remotely after.
  struct RowTerms {
    std::vector<VecC> retarded;
    std::vector<VecC> lesser;
    std::size_t filled = 0;
  };
  std::map<std::size_t, RowTerms> pending;
  RowSums out;
  for (auto e : rows) {
    RowTerms rt;
    rt.retarded.resize(nk);
    rt.lesser.resize(nk);
    for (std::size_t j = 0; j < nk; ++j) {
      const auto t = grid.tuple(e, j);
      if (partition.assignment[t] != worker) continue;
      const auto it = local.find(t);
      if (it == local.end()) throw Error("worker " + std::to_string(worker) + " lacks local tuple " + std::to_string(t));
      rt.retarded[j] = grid.momentum_weights[j] * it->second.retarded;
      rt.lesser[j] = grid.momentum_weights[j] * it->second.lesser;
      ++rt.filled;
    }
    if (rt.filled == nk)
      out[e] = KSums{canonical_row_sum(rt.retarded), canonical_row_sum(rt.lesser)};
    else
      pending.emplace(e, std::move(rt));
  }

  for (auto idx : schedule.per_worker[static_cast<std::size_t>(worker)]) {
    const auto& task = schedule.tasks[idx];
    const auto tuple32 = static_cast<std::uint32_t>(task.tuple);
    if (task.sender == worker) {
      const auto& d = local.at(task.tuple);
      const auto& v = task.kind == PayloadKind::GR_DIAG ? d.retarded : d.lesser;
      transport.send(worker, task.receiver, tuple32, task.kind, std::span<const cplx>(v.data(), v.size()));
    } else {
      auto v = transport.receive(worker, task.sender, tuple32, task.kind);
      const auto e = grid.energy_index(task.tuple);
      const auto j = grid.momentum_index(task.tuple);
      auto& rt = pending.at(e);
      (task.kind == PayloadKind::GR_DIAG ? rt.retarded[j] : rt.lesser[j]) = grid.momentum_weights[j] * v;
      if (task.kind == PayloadKind::GL_DIAG) ++rt.filled;
    }
  }

  for (auto& [e, rt] : pending) {
    if (rt.filled != nk) throw Error("row " + std::to_string(e) + " incomplete after exchange");
    out[e] = KSums{canonical_row_sum(rt.retarded), canonical_row_sum(rt.lesser)};
  }
  return out;
}

std::optional<KSums> shifted_sums(const RowSums& rows, const std::optional<ShiftStencil>& stencil) {
  if (!stencil) return std::nullopt;
  const auto& lo = rows.at(stencil->lower);
  if (stencil->exact()) return lo;
  const auto& hi = rows.at(stencil->upper);
  const double f = stencil->fraction;
  return KSums{(1.0 - f) * lo.retarded + f * hi.retarded, (1.0 - f) * lo.lesser + f * hi.lesser};
}

PhononSigma phonon_at(std::size_t e, const RowSums& rows, const EkGrid& grid, const CouplingConstants& K, double n0) {
  const auto plus = shifted_sums(rows, grid.shift_plus[e]);
  const auto minus = shifted_sums(rows, grid.shift_minus[e]);
  return phonon_self_energy(rows.at(e), plus ? &*plus : nullptr, minus ? &*minus : nullptr, K, n0);
}

}  // namespace utb
