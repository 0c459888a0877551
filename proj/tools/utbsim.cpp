#include "utb/runtime.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

enum Exit { OK = 0, FAILURE = 1, CONFIG = 2, NONCONVERGED = 3, TRANSPORT = 4 };

struct Flags {
  std::string config;
  std::optional<int> workers;
  std::optional<std::string> transport;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool ballistic = false;
  bool verbose = false;
};

utb::RunConfig resolve(const Flags& f) {
  auto cfg = utb::load_config(f.config);
  std::vector<std::string> problems;
  if (f.workers) cfg.parallel.n_workers = *f.workers;
  if (f.transport) {
    if (*f.transport == "inprocess") cfg.parallel.transport = utb::TransportKind::INPROCESS;
    else if (*f.transport == "socket") cfg.parallel.transport = utb::TransportKind::SOCKET;
    else problems.push_back("--transport must be inprocess or socket");
  }
  if (f.out) cfg.output_directory = *f.out;
  cfg.trace_scf = f.verbose;
  if (f.seed) {
    cfg.device.rng_seed = *f.seed;
    if (cfg.ensemble) cfg.ensemble->base_seed = *f.seed;
  }
  for (auto& p : utb::validate_config(cfg)) problems.push_back(std::move(p));
  if (!problems.empty()) throw utb::ConfigError(problems);
  return cfg;
}

void print(const utb::IvRecord& r) {
  std::printf("vg=%.4f V  vd=%.4f V  %-9s  I=%.6e A/nm  outer=%d inner=%d  nonuniformity=%.2e  %s\n", r.v_gate,
              r.v_drain, r.ballistic ? "ballistic" : "scattered", r.current_a_per_nm, r.outer_iters,
              r.inner_iters_total, r.max_current_nonuniformity, r.status.c_str());
}

int cmd_run(const Flags& f) {
  const auto cfg = resolve(f);
  if (cfg.bias.v_gate.empty()) throw utb::ConfigError({"[bias]: run needs at least one v_gate_list_v entry"});
  std::filesystem::create_directories(cfg.output_directory);
  const auto sample = cfg.device.disorder_mode == utb::DisorderMode::RANDOM
                          ? std::optional<std::uint64_t>(cfg.device.rng_seed)
                          : std::nullopt;
  utb::BiasRunner runner(cfg, f.ballistic, sample);
  const auto r = runner.solve(cfg.bias.v_gate.front());
  utb::CsvWriter csv(cfg.output_directory + "/run.csv", cfg.record_wall_time);
  csv.append(r);
  print(r);

  const auto& res = runner.last();
  if (!res.site_density.empty()) {
    std::ofstream dat(cfg.output_directory + "/profile_density.dat");
    dat << "# site density_per_nm3\n";
    for (std::size_t i = 0; i < res.site_density.size(); ++i) dat << i << ' ' << res.site_density[i] << '\n';
    std::ofstream pot(cfg.output_directory + "/potential.dat");
    pot << "# slab phi_mid_layer_V\n";
    const auto& dm = runner.mesh();
    for (std::size_t s = 0; s < cfg.device.n_slabs; ++s)
      pot << s << ' ' << res.phi_nodes[dm.body_node(s, dm.layers / 2)] << '\n';
    std::ofstream cur(cfg.output_directory + "/current_spectrum.dat");
    cur << "# energy_ev j_A_per_nm_per_ev\n";
    const auto& g = runner.engine().grid();
    for (std::size_t e = 0; e < res.current.spectrum.size(); ++e)
      cur << g.energies[e] << ' ' << res.current.spectrum[e] << '\n';
  }
  std::ofstream(cfg.output_directory + "/profile.xml") << runner.engine().profile_xml();
  return r.status == "ok" ? OK : NONCONVERGED;
}

int cmd_sweep(const Flags& f) {
  const auto cfg = resolve(f);
  const auto out = utb::iv_sweep(cfg, cfg.output_directory);
  for (const auto& r : out.records) print(r);
  std::printf("wrote %s\n", out.csv_path.c_str());
  return out.exit_code;
}

int cmd_ensemble(const Flags& f) {
  auto cfg = resolve(f);
  if (!cfg.ensemble) throw utb::ConfigError({"[ensemble] section is required for the ensemble verb"});
  const auto out = utb::run_ensemble(cfg, cfg.output_directory);
  double mean = 0.0, var = 0.0;
  for (const auto& r : out.records) mean += r.current_a_per_nm;
  mean /= static_cast<double>(out.records.size());
  for (const auto& r : out.records) var += (r.current_a_per_nm - mean) * (r.current_a_per_nm - mean);
  var /= static_cast<double>(std::max<std::size_t>(out.records.size() - 1, 1));
  for (const auto& r : out.records) print(r);
  std::printf("samples=%zu mean=%.6e A/nm std=%.6e A/nm\n", out.records.size(), mean, std::sqrt(var));
  return out.exit_code;
}

int cmd_validate(const Flags& f) {
  const auto cfg = resolve(f);
  const auto dev = utb::make_device(cfg.device, cfg.materials);
  const auto grid = utb::build_grid(cfg, dev.graph);
  const auto K = utb::coupling_constants(cfg.scattering);
  std::printf("config ok: %zu slabs, total rank %zu, %zu energies x %zu momenta, K_ac=%.4e K_op=%.4e\n",
              cfg.device.n_slabs, dev.graph.n_active() * cfg.device.orbitals_per_site, grid.n_e(), grid.n_k(),
              K.K_ac, K.K_op);
  return OK;
}

int cmd_bench(const Flags& f) {
  const auto cfg = resolve(f);
  std::vector<int> counts;
  for (int n = 1; n <= cfg.parallel.n_workers; n *= 2) counts.push_back(n);
  if (counts.back() != cfg.parallel.n_workers) counts.push_back(cfg.parallel.n_workers);
  const auto pts = utb::strong_scaling(cfg, counts, 2);
  std::filesystem::create_directories(cfg.output_directory);
  std::ofstream dat(cfg.output_directory + "/bench.dat");
  dat << "# workers wall_s efficiency cpu_imbalance critical_path_efficiency\n";
  std::printf("%8s %12s %11s %14s %14s\n", "workers", "wall_s", "efficiency", "cpu_imbalance", "critical_path");
  for (const auto& p : pts) {
    std::printf("%8d %12.4f %11.3f %14.4f %14.3f\n", p.workers, p.wall_seconds, p.efficiency, p.cpu_imbalance,
                p.critical_path_efficiency);
    dat << p.workers << ' ' << p.wall_seconds << ' ' << p.efficiency << ' ' << p.cpu_imbalance << ' '
        << p.critical_path_efficiency << '\n';
  }
  return OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel NEGF simulator for ultra-thin-body transistors"};
  app.require_subcommand(1);
  Flags f;
  const auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--workers", f.workers, "Worker count")->check(CLI::PositiveNumber);
    sub->add_option("--transport", f.transport, "inprocess or socket");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Device / ensemble base seed");
    sub->add_flag("-v,--verbose", f.verbose, "Print each outer iteration to stderr");
  };
  auto* run = app.add_subcommand("run", "Single bias point (first gate voltage)");
  add_common(run);
  run->add_flag("--ballistic", f.ballistic, "Disable phonon scattering");
  auto* sweep = app.add_subcommand("sweep", "IV sweep, ballistic and scattered");
  add_common(sweep);
  auto* ens = app.add_subcommand("ensemble", "Random-alloy ensemble at one bias");
  add_common(ens);
  auto* val = app.add_subcommand("validate", "Check a config and exit");
  add_common(val);
  auto* bench = app.add_subcommand("bench", "Strong scaling over 1..--workers");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? OK : CONFIG;
  }

  try {
    if (run->parsed()) return cmd_run(f);
    if (sweep->parsed()) return cmd_sweep(f);
    if (ens->parsed()) return cmd_ensemble(f);
    if (val->parsed()) return cmd_validate(f);
    if (bench->parsed()) return cmd_bench(f);
  } catch (const utb::ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return CONFIG;
  } catch (const utb::TransportError& e) {
    std::cerr << "transport failure: " << e.what() << '\n';
    return TRANSPORT;
  } catch (const utb::ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return NONCONVERGED;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return FAILURE;
  }
  return FAILURE;
}
