#include "utb/runtime.hpp"

#include <malloc.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

namespace utb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string csv_row(const IvRecord& r, bool record_wall_time) {
  std::string s = fmt_double(r.v_gate) + "," + fmt_double(r.v_drain) + ",";
  if (r.sample_seed) s += std::to_string(*r.sample_seed);
  s += r.ballistic ? ",ballistic," : ",scattered,";
  s += fmt_double(r.current_a_per_nm) + "," + std::to_string(r.outer_iters) + "," +
       std::to_string(r.inner_iters_total) + "," + fmt_double(r.max_current_nonuniformity) + "," + r.status + "," +
       fmt_double(record_wall_time ? r.wall_seconds : 0.0);
  return s;
}

CsvWriter::CsvWriter(const std::string& path, bool record_wall_time) : out_(path), record_wall_(record_wall_time) {
  if (!out_) throw Error("cannot open '" + path + "' for writing");
  out_ << csv_version_line << '\n' << csv_columns << '\n';
  out_.flush();
}

void CsvWriter::append(const IvRecord& r) {
  out_ << csv_row(r, record_wall_) << '\n';
  out_.flush();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

Terminals terminals_for(const RunConfig& cfg) {
  return {cfg.bias.mu_source_ev, cfg.mu_drain_ev(cfg.bias.v_drain), 0.0, cfg.bias.v_drain};
}

// Energy-resolved density of states from one ballistic pass at flat potential;
// peaks at subband edges mark where refinement pays off.
std::vector<double> dos_indicator(const DeviceInstance& dev, const RunConfig& cfg, const EkGrid& grid) {
  ScatteringParams sp = cfg.scattering;
  sp.coupling_scale = 0.0;
  ParallelOptions po;
  NegfEngine engine(dev, sp, grid, po, std::nullopt, cfg.solver.lead);
  engine.set_terminals(terminals_for(cfg));
  engine.born_iteration({1.0, 1, 1.0});
  std::vector<double> ind(grid.n_e(), 0.0);
  const auto& w = engine.workers().front();
  for (std::size_t t = 0; t < grid.n_tuples(); ++t)
    ind[grid.energy_index(t)] += grid.momentum_weights[grid.momentum_index(t)] *
                                 std::abs(w.diagonals.at(t).retarded.imag().sum());
  return ind;
}

}  // namespace

EkGrid build_grid(const RunConfig& cfg, const DeviceGraph& graph) {
  const auto& g = cfg.grid;
  auto grid = build_homogeneous(g.e_min_ev, g.e_max_ev, cfg.scattering.optical_energy_ev, g.points_per_eop, g.n_k,
                                graph.spec.transverse_period_nm());
  if (g.mode == GridMode::ADAPTIVE) {
    DeviceInstance dev{graph, assign_alloy(graph, cfg.materials, cfg.device.alloy_fraction, DisorderMode::VCA, 0)};
    const auto ind = dos_indicator(dev, cfg, grid);
    grid = refine_adaptive(grid, ind, g.adaptive_budget);
  }
  return grid;
}

BiasRunner::BiasRunner(const RunConfig& cfg, bool ballistic, std::optional<std::uint64_t> sample_seed)
    : cfg_(cfg), ballistic_(ballistic), seed_(sample_seed) {
  DeviceSpec spec = cfg_.device;
  if (seed_) {
    spec.disorder_mode = DisorderMode::RANDOM;
    spec.rng_seed = *seed_;
  }
  auto dev = make_device(spec, cfg_.materials);
  auto grid = build_grid(cfg_, dev.graph);
  ScatteringParams sp = cfg_.scattering;
  if (ballistic_) sp.coupling_scale = 0.0;
  engine_ = std::make_unique<NegfEngine>(std::move(dev), sp, std::move(grid), cfg_.parallel, std::nullopt,
                                         cfg_.solver.lead);
  engine_->set_terminals(terminals_for(cfg_));
}

IvRecord BiasRunner::solve(double v_gate, const std::vector<double>& phi_hint) {
  const auto t0 = Clock::now();
  IvRecord r;
  r.v_gate = v_gate;
  r.v_drain = cfg_.bias.v_drain;
  r.sample_seed = seed_;
  r.ballistic = ballistic_;
  mesh_ = build_device_mesh(engine_->device().graph, cfg_.electrostatics, v_gate, cfg_.bias.v_drain);
  ScfOptions opt;
  opt.beta = cfg_.solver.poisson_beta;
  opt.tol_phi = cfg_.solver.tol_phi_v;
  opt.max_outer = cfg_.solver.max_outer;
  opt.born = cfg_.solver.born;
  if (cfg_.trace_scf)
    opt.on_iteration = [this, v_gate](const ScfTraceEntry& e) {
      std::fprintf(stderr, "[%s vg=%.3f] outer %d  inner %d  born_res %.2e  dphi %.2e\n",
                   ballistic_ ? "ballistic" : "scattered", v_gate, e.outer, e.inner, e.born_residual, e.dphi);
    };
  try {
    auto& prof = engine_->coordinator_profiler();
    prof.tic(ballistic_ ? "bias_point_ballistic" : "bias_point_scattered");
    last_ = outer_scf(*engine_, mesh_, opt, phi_hint.empty() ? phi_ : phi_hint);
    prof.toc(ballistic_ ? "bias_point_ballistic" : "bias_point_scattered");
    phi_ = last_.phi_nodes;
    r.current_a_per_nm = last_.current.mean();
    r.max_current_nonuniformity = last_.current.nonuniformity();
    r.outer_iters = last_.outer_iterations;
    r.inner_iters_total = last_.inner_iterations_total;
    if (!last_.converged) r.status = "outer_not_converged";
    else if (!last_.born_converged) r.status = "born_not_converged";
  } catch (const TransportError&) {
    throw;
  } catch (const Error& e) {
    // The profiler may hold open timers after a failure; start it fresh.
    auto& w = engine_->workers();
    for (auto& ws : w) ws.profiler = Profiler(ws.rank);
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == ',' || c == '\n') c = ';';
    r.status = "error: " + msg;
    phi_.clear();
  }
  r.wall_seconds = seconds_since(t0);
  return r;
}

namespace {

void write_profile(NegfEngine& engine, const std::string& path) {
  std::ofstream f(path);
  f << engine.profile_xml();
}

void write_dat(const std::string& path, const std::vector<IvRecord>& recs) {
  std::ofstream f(path);
  f << "# vg_V current_ballistic_A_per_nm current_scattered_A_per_nm\n";
  std::vector<double> vgs;
  for (const auto& r : recs)
    if (std::find(vgs.begin(), vgs.end(), r.v_gate) == vgs.end()) vgs.push_back(r.v_gate);
  for (double vg : vgs) {
    double b = std::nan(""), s = std::nan("");
    for (const auto& r : recs)
      if (r.v_gate == vg) (r.ballistic ? b : s) = r.current_a_per_nm;
    f << fmt_double(vg) << ' ' << fmt_double(b) << ' ' << fmt_double(s) << '\n';
  }
}

}  // namespace

SweepOutput iv_sweep(const RunConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  SweepOutput out;
  out.csv_path = out_dir + "/iv.csv";
  CsvWriter csv(out.csv_path, cfg.record_wall_time);
  if (cfg.bias.v_gate.empty()) return out;
  BiasRunner ballistic(cfg, true);
  BiasRunner scattered(cfg, false);
  for (double vg : cfg.bias.v_gate) {
    auto rb = ballistic.solve(vg);
    // The ballistic potential at the same gate is the closer starting point.
    auto rs = scattered.solve(vg, ballistic.potential());
    for (auto* r : {&rb, &rs}) {
      if (r->status != "ok") out.exit_code = 3;
      csv.append(*r);
      out.records.push_back(std::move(*r));
    }
  }
  write_dat(out_dir + "/iv.dat", out.records);
  write_profile(ballistic.engine(), out_dir + "/profile_ballistic.xml");
  write_profile(scattered.engine(), out_dir + "/profile_scattered.xml");
  return out;
}

SweepOutput run_ensemble(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.ensemble) throw ConfigError({"[ensemble] section is required for ensemble runs"});
  if (cfg.bias.v_gate.empty() && !cfg.bias.ensemble_v_gate)
    throw ConfigError({"[bias]: ensemble needs ensemble_v_gate_v or a v_gate_list_v entry"});
  std::filesystem::create_directories(out_dir);
  const double vg = cfg.bias.ensemble_v_gate.value_or(cfg.bias.v_gate.back());
  SweepOutput out;
  out.csv_path = out_dir + "/ensemble.csv";
  CsvWriter csv(out.csv_path, cfg.record_wall_time);
  std::ofstream dat(out_dir + "/ensemble.dat");
  dat << "# sample_seed current_A_per_nm\n";
  for (std::size_t i = 0; i < cfg.ensemble->n_samples; ++i) {
    const auto seed = derive_seed(cfg.ensemble->base_seed, i);
    BiasRunner runner(cfg, cfg.ensemble->ballistic, seed);
    auto r = runner.solve(vg);
    if (r.status != "ok") out.exit_code = 3;
    csv.append(r);
    dat << seed << ' ' << fmt_double(r.current_a_per_nm) << '\n';
    out.records.push_back(std::move(r));
  }
  return out;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("line fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

namespace {

long status_kb(const char* key) {
  std::ifstream f("/proc/self/status");
  std::string line;
  const std::string k = key;
  while (std::getline(f, line))
    if (line.rfind(k, 0) == 0) return std::stol(line.substr(k.size()));
  return 0;
}

MemoryPoint memory_child(const DeviceSpec& spec, const MaterialParams& materials, std::size_t count, bool retain) {
  // Large blocks map and unmap individually so resident size follows live data.
  mallopt(M_MMAP_THRESHOLD, 4096);
  mallopt(M_TRIM_THRESHOLD, 0);
  const double start = static_cast<double>(status_kb("VmRSS:")) * 1024.0;
  const auto dev = make_device(spec, materials);
  const double de = 0.01;
  const double e0 = -4.0 * std::abs(materials.hopping_si_ev);
  EkGrid grid = build_homogeneous(e0, e0 + de * static_cast<double>(std::max<std::size_t>(count, 2) - 1), 6 * de, 6, 1,
                                  spec.transverse_period_nm());
  grid.energies.resize(count);
  grid.energy_weights = trapezoid_weights(grid.energies);
  grid.origin.resize(count);
  grid.shift_plus.resize(count);
  grid.shift_minus.resize(count);
  resolve_shifts(grid);
  ScatteringParams sp;
  sp.area_nm2 = spec.cross_section_area_nm2;
  NegfEngine engine(dev, sp, grid, ParallelOptions{});
  engine.set_retain_slices(retain);
  engine.born_iteration({1.0, 1, 1.0});
  MemoryPoint p;
  p.tuples_in_series = count;
  p.peak_rss_bytes = static_cast<double>(status_kb("VmHWM:")) * 1024.0 - start;
  p.tracked_bytes = static_cast<double>(engine.workers().front().memory.peak);
  return p;
}

}  // namespace

MemoryReport memory_step_report(const DeviceSpec& spec, const MaterialParams& materials,
                                std::span<const std::size_t> counts, bool retain_slices) {
  MemoryReport rep;
  for (auto count : counts) {
    if (count < 1) throw Error("memory report needs at least one tuple per run");
    int fds[2];
    if (::pipe(fds) != 0) throw Error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw Error("fork failed");
    if (pid == 0) {
      ::close(fds[0]);
      double msg[3] = {0, -1, -1};
      try {
        const auto p = memory_child(spec, materials, count, retain_slices);
        msg[0] = 1;
        msg[1] = p.peak_rss_bytes;
        msg[2] = p.tracked_bytes;
      } catch (...) {
      }
      [[maybe_unused]] auto n = ::write(fds[1], msg, sizeof msg);
      ::_exit(0);
    }
    ::close(fds[1]);
    double msg[3] = {0, 0, 0};
    const auto got = ::read(fds[0], msg, sizeof msg);
    ::close(fds[0]);
    int st = 0;
    ::waitpid(pid, &st, 0);
    if (got != static_cast<ssize_t>(sizeof msg) || msg[0] != 1) throw Error("memory measurement child failed");
    rep.points.push_back({count, msg[1], msg[2]});
  }
  std::vector<double> x, y, z;
  for (const auto& p : rep.points) {
    x.push_back(static_cast<double>(p.tuples_in_series));
    y.push_back(p.peak_rss_bytes);
    z.push_back(p.tracked_bytes);
  }
  if (x.size() >= 2) {
    rep.rss_fit = fit_line(x, y);
    rep.tracked_fit = fit_line(x, z);
  }
  return rep;
}

std::vector<BenchPoint> strong_scaling(const RunConfig& cfg, std::span<const int> worker_counts, int born_iterations) {
  const auto dev = make_device(cfg.device, cfg.materials);
  RunConfig hc = cfg;
  hc.grid.mode = GridMode::HOMOGENEOUS;
  const auto grid = build_grid(hc, dev.graph);
  std::vector<BenchPoint> out;
  double t1 = 0.0;
  for (int n : worker_counts) {
    ParallelOptions po = cfg.parallel;
    po.n_workers = n;
    NegfEngine engine(dev, cfg.scattering, grid, po, std::nullopt, cfg.solver.lead);
    engine.set_terminals(terminals_for(cfg));
    engine.born_iteration({1.0, 1, 1.0});  // warm caches outside the timed region
    for (auto& w : engine.workers()) w.busy_cpu_seconds = 0.0;
    const auto t0 = Clock::now();
    engine.born_iteration({1e-300, born_iterations, 1.0});
    BenchPoint b;
    b.workers = n;
    b.wall_seconds = seconds_since(t0);
    std::vector<double> busy;
    for (const auto& w : engine.workers()) busy.push_back(w.busy_cpu_seconds);
    const double total = std::accumulate(busy.begin(), busy.end(), 0.0);
    const double mx = *std::max_element(busy.begin(), busy.end());
    b.cpu_imbalance = mx / (total / n) - 1.0;
    b.critical_path_efficiency = total / (n * mx);
    if (out.empty() && n == 1) t1 = b.wall_seconds;
    b.efficiency = t1 > 0.0 ? t1 / (n * b.wall_seconds) : std::nan("");
    out.push_back(b);
  }
  return out;
}

namespace {

double busy_imbalance(NegfEngine& engine) {
  engine.born_iteration({1.0, 1, 1.0});
  for (auto& w : engine.workers()) w.busy_cpu_seconds = 0.0;
  engine.born_iteration({1e-300, 3, 1.0});
  std::vector<double> busy;
  for (const auto& w : engine.workers()) busy.push_back(w.busy_cpu_seconds);
  const double mean = std::accumulate(busy.begin(), busy.end(), 0.0) / static_cast<double>(busy.size());
  return *std::max_element(busy.begin(), busy.end()) / mean - 1.0;
}

}  // namespace

BalancePair load_balance_pair(const RunConfig& cfg, int workers, std::size_t budget) {
  const auto dev = make_device(cfg.device, cfg.materials);
  RunConfig hc = cfg;
  hc.grid.mode = GridMode::HOMOGENEOUS;
  const auto homo = build_grid(hc, dev.graph);
  if (budget >= homo.n_e()) throw Error("refinement budget exceeds the grid size");

  // Coarser base with the same range; refinement restores the tuple count.
  EkGrid base = homo;
  base.mode = GridMode::ADAPTIVE;
  const auto nb = homo.n_e() - budget;
  base.energies.resize(nb);
  for (std::size_t i = 0; i < nb; ++i)
    base.energies[i] = homo.energies.front() +
                       (homo.energies.back() - homo.energies.front()) * static_cast<double>(i) / static_cast<double>(nb - 1);
  base.energy_weights = trapezoid_weights(base.energies);
  base.origin.resize(nb);
  std::iota(base.origin.begin(), base.origin.end(), std::size_t{0});
  resolve_shifts(base);

  ParallelOptions po = cfg.parallel;
  po.n_workers = workers;
  const std::vector<double> costs(base.n_tuples(), estimate_cost(dev.graph));
  const auto base_part = partition_tuples(costs, workers);
  const auto refined = refine_adaptive(base, dos_indicator(dev, cfg, base), budget);
  const auto inherited = inherit_partition(base_part, refined);

  BalancePair r;
  {
    NegfEngine e(dev, cfg.scattering, homo, po, std::nullopt, cfg.solver.lead);
    e.set_terminals(terminals_for(cfg));
    r.homogeneous_imbalance = busy_imbalance(e);
  }
  {
    NegfEngine e(dev, cfg.scattering, refined, po, inherited, cfg.solver.lead);
    e.set_terminals(terminals_for(cfg));
    r.adaptive_imbalance = busy_imbalance(e);
  }
  return r;
}

}  // namespace utb
