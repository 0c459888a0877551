#include "utb/solver.hpp"

#include <time.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

namespace utb {

namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

std::size_t bytes_of(const std::vector<MatC>& v) {
  std::size_t b = 0;
  for (const auto& m : v) b += static_cast<std::size_t>(m.size()) * sizeof(cplx);
  return b;
}

VecC flatten_diagonal(const std::vector<MatC>& blocks, Eigen::Index total) {
  VecC d(total);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    d.segment(off, b.rows()) = b.diagonal();
    off += b.rows();
  }
  return d;
}

}  // namespace

std::size_t GreensSlice::bytes() const {
  return bytes_of(gR_diag) + bytes_of(gR_offdiag) + bytes_of(gL_diag) + bytes_of(gL_offdiag);
}

NegfEngine::NegfEngine(DeviceInstance device, const ScatteringParams& scattering, EkGrid grid,
                       ParallelOptions parallel, std::optional<Partition> partition, DecimationOptions decimation)
    : device_(std::move(device)),
      scattering_(scattering),
      K_(coupling_constants(scattering)),
      n0_(scattering.n0()),
      grid_(std::move(grid)),
      parallel_(parallel),
      decimation_(decimation) {
  if (parallel_.n_workers < 1) throw Error("need at least one worker");
  ranks_ = device_.graph.slab_ranks();
  if (partition) {
    if (partition->assignment.size() != grid_.n_tuples() || partition->n_workers != parallel_.n_workers)
      throw Error("supplied partition does not match grid and worker count");
    partition_ = std::move(*partition);
  } else {
    const std::vector<double> costs(grid_.n_tuples(), estimate_cost(device_.graph));
    partition_ = partition_tuples(costs, parallel_.n_workers);
  }
  schedule_ = build_comm_schedule(partition_, grid_);
  transport_ = make_transport(parallel_.transport, parallel_.n_workers, parallel_.delay, parallel_.timeout);
  phi_.assign(device_.graph.n_active(), 0.0);

  Eigen::Index total = 0;
  for (auto r : ranks_) total += r;
  const auto owned = partition_.owned();
  workers_.resize(static_cast<std::size_t>(parallel_.n_workers));
  for (int w = 0; w < parallel_.n_workers; ++w) {
    auto& ws = workers_[static_cast<std::size_t>(w)];
    ws.rank = w;
    ws.profiler = Profiler(w);
    ws.tuples = owned[static_cast<std::size_t>(w)];
    std::set<std::size_t> es;
    for (auto t : ws.tuples) es.insert(grid_.energy_index(t));
    ws.energies.assign(es.begin(), es.end());
    for (auto e : ws.energies) ws.sigma[e] = PhononSigma{VecC::Zero(total), VecC::Zero(total)};
    ws.memory.add(static_cast<std::size_t>(2 * total) * sizeof(cplx) * ws.energies.size());
  }
}

NegfEngine::~NegfEngine() = default;

void NegfEngine::set_potential(std::vector<double> site_phi) {
  if (site_phi.size() != device_.graph.n_active()) throw Error("potential length does not match active sites");
  phi_ = std::move(site_phi);
  for (auto& w : workers_) w.hamiltonians.clear();
}

void NegfEngine::set_terminals(const Terminals& t) {
  terminals_ = t;
  for (auto& w : workers_) w.leads.clear();
}

template <typename F>
void NegfEngine::run_workers(F&& f) {
  const auto n = workers_.size();
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t w) {
    const double t0 = thread_cpu_seconds();
    try {
      f(workers_[w]);
    } catch (...) {
      errors[w] = std::current_exception();
      transport_->abort();
    }
    workers_[w].busy_cpu_seconds += thread_cpu_seconds() - t0;
  };
  if (n == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t w = 0; w < n; ++w) threads.emplace_back(body, w);
    for (auto& t : threads) t.join();
  }
  // Report the root cause rather than the aborts it triggered in other workers.
  std::exception_ptr first;
  for (auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const TransportError& te) {
      if (std::string(te.what()).find("aborted") == std::string::npos && !first) first = e;
    } catch (...) {
      if (!first) first = e;
    }
  }
  for (auto& e : errors)
    if (e && !first) first = e;
  if (first) {
    transport_ = make_transport(parallel_.transport, parallel_.n_workers, parallel_.delay, parallel_.timeout);
    std::rethrow_exception(first);
  }
}

void NegfEngine::solve_tuple(WorkerState& w, std::size_t t) {
  const auto e = grid_.energy_index(t);
  const auto j = grid_.momentum_index(t);
  const double energy = grid_.energies[e];
  const double k = grid_.momenta[j];

  auto hit = w.hamiltonians.find(j);
  if (hit == w.hamiltonians.end())
    hit = w.hamiltonians.emplace(j, assemble_hamiltonian(device_.graph, device_.alloy, k, phi_)).first;
  const auto& h = hit->second;

  auto lit = w.leads.find(t);
  if (lit == w.leads.end()) {
    const auto c = pristine_contact(device_.graph.spec, device_.alloy.params, k);
    LeadModel left{c.h00, c.h01, terminals_.mu_source_ev, LeadSide::FIRST};
    left.h00.diagonal().array() -= terminals_.v_source;
    LeadModel right{c.h00, c.h01, terminals_.mu_drain_ev, LeadSide::LAST};
    right.h00.diagonal().array() -= terminals_.v_drain;
    const double T = scattering_.temperature_k;
    lit = w.leads.emplace(t, std::make_pair(compute_lead(left, energy, k, T, decimation_),
                                            compute_lead(right, energy, k, T, decimation_))).first;
  }

  const auto total = assemble_total(lit->second.first, lit->second.second, w.sigma.at(e), ranks_);
  const auto gr = solve_retarded(h, total.retarded, cplx(energy));
  const auto gl = solve_lesser(h, gr, total.lesser);
  const Eigen::Index n = std::accumulate(ranks_.begin(), ranks_.end(), Eigen::Index{0});

  auto& d = w.diagonals[t];
  d.retarded = flatten_diagonal(gr.diag, n);
  d.lesser = flatten_diagonal(gl.diag, n);
  w.traces[t] = interface_traces(h, gl);

  const std::size_t workspace = bytes_of(gr.left) + bytes_of(gr.diag) + bytes_of(gr.upper) + bytes_of(gr.lower) +
                                bytes_of(gl.diag) + bytes_of(gl.upper);
  w.memory.touch(workspace);
  if (retain_slices_) {
    GreensSlice s{energy, k, gr.diag, gr.upper, gl.diag, gl.upper};
    auto [it, inserted] = w.retained.insert_or_assign(t, std::move(s));
    if (inserted) w.memory.add(it->second.bytes());
  }
}

BornResult NegfEngine::born_iteration(const BornOptions& opt) {
  if (!(opt.mixing > 0.0 && opt.mixing <= 1.0)) throw Error("Born mixing must lie in (0, 1]");
  if (!(opt.tol > 0.0) || opt.max_iter < 1) throw Error("Born iteration needs tol > 0 and max_iter >= 1");
  BornResult r;
  for (int it = 0; it < opt.max_iter; ++it) {
    run_workers([&](WorkerState& w) {
      w.profiler.tic("born_iteration");
      w.profiler.tic("solve");
      for (auto t : w.tuples) solve_tuple(w, t);
      w.profiler.toc("solve");
      w.profiler.tic("exchange");
      w.last_rows = execute_round(w.rank, schedule_, partition_, grid_, w.diagonals, *transport_);
      w.profiler.toc("exchange");
      w.profiler.tic("self_energy");
      double worst = 0.0;
      for (auto e : w.energies) {
        auto next = phonon_at(e, w.last_rows, grid_, K_, n0_);
        // The exact lesser diagonal is imaginary. Round-off leaves a real part
        // that the lesser map amplifies from one iteration to the next.
        next.lesser = cplx(0.0, 1.0) * next.lesser.imag().cast<cplx>();
        auto& cur = w.sigma.at(e);
        worst = std::max({worst, relative_change(next.retarded, cur.retarded), relative_change(next.lesser, cur.lesser)});
        if (opt.mixing == 1.0) {
          cur = std::move(next);
        } else {
          cur.retarded = (1.0 - opt.mixing) * cur.retarded + opt.mixing * next.retarded;
          cur.lesser = (1.0 - opt.mixing) * cur.lesser + opt.mixing * next.lesser;
        }
      }
      w.last_residual = worst;
      w.profiler.toc("self_energy");
      w.profiler.toc("born_iteration");
    });
    double residual = 0.0;
    for (const auto& w : workers_) residual = std::max(residual, w.last_residual);
    r.residual_history.push_back(residual);
    r.iterations = it + 1;
    if (residual < opt.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

std::vector<double> NegfEngine::density() const {
  std::vector<VecC> gl(grid_.n_tuples());
  for (std::size_t t = 0; t < grid_.n_tuples(); ++t) {
    const auto& w = workers_[static_cast<std::size_t>(partition_.assignment[t])];
    gl[t] = w.diagonals.at(t).lesser;
  }
  return density_from_G(gl, grid_, device_.graph);
}

CurrentResult NegfEngine::current() const {
  std::vector<std::vector<double>> tr(grid_.n_tuples());
  for (std::size_t t = 0; t < grid_.n_tuples(); ++t)
    tr[t] = workers_[static_cast<std::size_t>(partition_.assignment[t])].traces.at(t);
  return current_density(tr, grid_);
}

std::vector<PhononSigma> NegfEngine::phonon_sigma() const {
  std::vector<PhononSigma> out(grid_.n_e());
  std::vector<char> have(grid_.n_e(), 0);
  for (const auto& w : workers_)
    for (auto e : w.energies)
      if (!have[e]) {
        out[e] = w.sigma.at(e);
        have[e] = 1;
      }
  return out;
}

std::vector<KSums> NegfEngine::row_sums() const {
  std::vector<KSums> out(grid_.n_e());
  std::vector<char> have(grid_.n_e(), 0);
  for (const auto& w : workers_)
    for (const auto& [e, s] : w.last_rows)
      if (!have[e]) {
        out[e] = s;
        have[e] = 1;
      }
  return out;
}

std::string NegfEngine::profile_xml() {
  std::vector<const Profiler*> ps;
  for (auto& w : workers_) {
    w.profiler.finish();
    ps.push_back(&w.profiler);
  }
  return emit_profile(ps);
}

ScfResult outer_scf(NegfEngine& engine, const DeviceMesh& mesh, const ScfOptions& opt, std::vector<double> phi_init,
                    const std::vector<double>* fixed_density) {
  if (!(opt.beta > 0.0 && opt.beta <= 1.0)) throw Error("Poisson mixing beta must lie in (0, 1]");
  const auto& graph = engine.device().graph;
  auto& prof = engine.coordinator_profiler();
  ScfResult r;

  auto nodes_from = [&](const std::vector<double>& site_n) { return node_density(mesh, graph, site_n); };
  std::vector<double> phi = std::move(phi_init);
  if (phi.empty()) {
    const auto n0 = fixed_density ? nodes_from(*fixed_density) : mesh.mesh.doping;
    phi = assemble_and_solve(mesh.mesh, n0);
  }
  if (phi.size() != mesh.mesh.size()) throw Error("initial potential does not match the Poisson mesh");

  // The inner tolerance follows the last potential update, so early outer
  // iterations do not polish self-energies for a potential about to change.
  double dphi_prev = std::numeric_limits<double>::infinity();
  bool inner_tight = true;
  for (int outer = 1; outer <= opt.max_outer; ++outer) {
    ScfTraceEntry entry;
    entry.outer = outer;
    std::vector<double> site_n;
    if (fixed_density) {
      site_n = *fixed_density;
    } else {
      engine.set_potential(site_potential(mesh, graph, phi));
      BornOptions inner = opt.born;
      if (opt.inexact_inner)
        inner.tol = std::clamp(opt.born.tol * 0.1 * dphi_prev / opt.tol_phi, opt.born.tol,
                               std::max(opt.born.tol, 1e-2));
      inner_tight = inner.tol <= opt.born.tol;
      prof.tic("negf");
      const auto born = engine.born_iteration(inner);
      prof.toc("negf");
      entry.inner = born.iterations;
      entry.born_residual = born.residual_history.empty() ? 0.0 : born.residual_history.back();
      r.inner_iterations_total += born.iterations;
      r.born_converged = born.converged && inner_tight;
      prof.tic("density");
      site_n = engine.density();
      prof.toc("density");
    }
    prof.tic("poisson");
    const auto n_nodes = nodes_from(site_n);
    const auto phi_new = assemble_and_solve(mesh.mesh, n_nodes);
    prof.toc("poisson");
    double dphi = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) dphi = std::max(dphi, std::abs(phi_new[i] - phi[i]));
    entry.dphi = dphi;
    r.trace.push_back(entry);
    if (opt.on_iteration) opt.on_iteration(entry);
    r.outer_iterations = outer;
    r.site_density = site_n;
    dphi_prev = dphi;
    if (dphi < opt.tol_phi && (fixed_density || r.born_converged)) {
      r.converged = true;
      r.gauss_residual = gauss_law_residual(mesh.mesh, n_nodes, phi_new);
      break;
    }
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = (1.0 - opt.beta) * phi[i] + opt.beta * phi_new[i];
  }
  r.phi_nodes = phi;
  if (!fixed_density) r.current = engine.current();
  return r;
}

}  // namespace utb
