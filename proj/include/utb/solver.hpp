#pragma once

#include "utb/device.hpp"
#include "utb/ekgrid.hpp"
#include "utb/exchange.hpp"
#include "utb/leads.hpp"
#include "utb/observables.hpp"
#include "utb/partition.hpp"
#include "utb/poisson.hpp"
#include "utb/profiler.hpp"
#include "utb/scattering.hpp"
#include "utb/schedule.hpp"
#include "utb/transport.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace utb {

struct BornOptions {
  double tol = 1e-6;
  int max_iter = 100;
  double mixing = 1.0;
};

struct BornResult {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;
};

struct ParallelOptions {
  int n_workers = 1;
  TransportKind transport = TransportKind::INPROCESS;
  DelayModel delay;
  std::chrono::milliseconds timeout{60000};
};

struct Terminals {
  double mu_source_ev = 0.0;
  double mu_drain_ev = 0.0;
  double v_source = 0.0;
  double v_drain = 0.0;
};

struct GreensSlice {
  double energy = 0.0;
  double momentum = 0.0;
  std::vector<MatC> gR_diag;
  std::vector<MatC> gR_offdiag;
  std::vector<MatC> gL_diag;
  std::vector<MatC> gL_offdiag;

  std::size_t bytes() const;
};

// Bytes held by the numerical state of one worker.
struct MemoryLedger {
  std::size_t current = 0;
  std::size_t peak = 0;
  void add(std::size_t b) {
    current += b;
    peak = std::max(peak, current);
  }
  void release(std::size_t b) { current -= std::min(current, b); }
  void touch(std::size_t transient) { peak = std::max(peak, current + transient); }
};

struct WorkerState {
  int rank = 0;
  std::vector<std::size_t> tuples;    // ascending
  std::vector<std::size_t> energies;  // ascending, rows with an owned tuple
  std::map<std::size_t, PhononSigma> sigma;
  std::map<std::size_t, TupleDiagonals> diagonals;
  std::map<std::size_t, std::vector<double>> traces;
  std::map<std::size_t, std::pair<LeadSelfEnergy, LeadSelfEnergy>> leads;
  std::map<std::size_t, BlockTridiagonal<cplx>> hamiltonians;  // by momentum index
  std::map<std::size_t, GreensSlice> retained;
  RowSums last_rows;
  Profiler profiler;
  MemoryLedger memory;
  double busy_cpu_seconds = 0.0;
  double last_residual = 0.0;
};

// Owns the (E, k) tuples of one device across a worker pool. Each worker keeps
// the phonon self-energy of the energies it owns; workers meet only through
// the transport during execute_round.
class NegfEngine {
 public:
  NegfEngine(DeviceInstance device, const ScatteringParams& scattering, EkGrid grid, ParallelOptions parallel,
             std::optional<Partition> partition = std::nullopt, DecimationOptions decimation = {});
  ~NegfEngine();

  void set_potential(std::vector<double> site_phi);
  void set_terminals(const Terminals& t);
  void set_retain_slices(bool on) { retain_slices_ = on; }

  BornResult born_iteration(const BornOptions& opt);

  std::vector<double> density() const;
  CurrentResult current() const;
  // Phonon self-energy per energy, taken from the lowest-rank owner.
  std::vector<PhononSigma> phonon_sigma() const;
  // Momentum sums per energy from the last exchange, lowest-rank owner first.
  std::vector<KSums> row_sums() const;

  const DeviceInstance& device() const { return device_; }
  const EkGrid& grid() const { return grid_; }
  const Partition& partition() const { return partition_; }
  const CommSchedule& schedule() const { return schedule_; }
  const CouplingConstants& couplings() const { return K_; }
  int n_workers() const { return parallel_.n_workers; }
  std::vector<WorkerState>& workers() { return workers_; }
  const std::vector<WorkerState>& workers() const { return workers_; }
  Profiler& coordinator_profiler() { return workers_.front().profiler; }
  std::string profile_xml();
  double temperature() const { return scattering_.temperature_k; }

 private:
  void solve_tuple(WorkerState& w, std::size_t t);
  template <typename F>
  void run_workers(F&& f);

  DeviceInstance device_;
  ScatteringParams scattering_;
  CouplingConstants K_;
  double n0_;
  EkGrid grid_;
  ParallelOptions parallel_;
  Partition partition_;
  CommSchedule schedule_;
  DecimationOptions decimation_;
  std::vector<Eigen::Index> ranks_;
  std::vector<double> phi_;
  Terminals terminals_;
  bool retain_slices_ = false;
  std::unique_ptr<Transport> transport_;
  std::vector<WorkerState> workers_;
};

struct ScfTraceEntry {
  int outer = 0;
  int inner = 0;
  double dphi = 0.0;
  double born_residual = 0.0;
};

struct ScfOptions {
  double beta = 0.1;
  double tol_phi = 1e-5;
  int max_outer = 100;
  BornOptions born;
  bool inexact_inner = true;  // loosen the Born tolerance while the potential moves
  std::function<void(const ScfTraceEntry&)> on_iteration;
};


struct ScfResult {
  bool converged = false;
  bool born_converged = true;
  int outer_iterations = 0;
  int inner_iterations_total = 0;
  std::vector<double> phi_nodes;
  std::vector<double> site_density;
  CurrentResult current;
  double gauss_residual = 0.0;
  std::vector<ScfTraceEntry> trace;
};

// Alternates the Born loop at fixed potential with a Poisson update mixed by
// beta. The initial potential (when phi_init is empty) solves Poisson with
// the fixed density if given, else with neutral charge. A fixed density skips
// the NEGF solve entirely.
ScfResult outer_scf(NegfEngine& engine, const DeviceMesh& mesh, const ScfOptions& opt,
                    std::vector<double> phi_init = {}, const std::vector<double>* fixed_density = nullptr);

}  // namespace utb
