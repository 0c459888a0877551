#pragma once

#include "utb/config.hpp"
#include "utb/solver.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace utb {

struct IvRecord {
  double v_gate = 0.0;
  double v_drain = 0.0;
  std::optional<std::uint64_t> sample_seed;
  bool ballistic = false;
  double current_a_per_nm = 0.0;
  int outer_iters = 0;
  int inner_iters_total = 0;
  double max_current_nonuniformity = 0.0;
  std::string status = "ok";
  double wall_seconds = 0.0;
};

inline constexpr const char* csv_version_line = "# utbsim iv-csv schema 1";
inline constexpr const char* csv_columns =
    "vg,vd,sample_seed,mode,current_A_per_nm,outer_iters,inner_iters_total,max_current_nonuniformity,status,wall_s";

std::string csv_row(const IvRecord& r, bool record_wall_time);

// Writes the versioned header on open and flushes after every row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, bool record_wall_time);
  void append(const IvRecord& r);

 private:
  std::ofstream out_;
  bool record_wall_;
};

// splitmix64 of base + index; distinct for distinct indices.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

EkGrid build_grid(const RunConfig& cfg, const DeviceGraph& graph);

// One mode of the simulation: engine plus its latest potential, reused along
// a sweep so each bias point starts from the previous one.
class BiasRunner {
 public:
  BiasRunner(const RunConfig& cfg, bool ballistic, std::optional<std::uint64_t> sample_seed = std::nullopt);

  // An empty hint starts from the previous bias point (or neutral charge).
  IvRecord solve(double v_gate, const std::vector<double>& phi_hint = {});
  const ScfResult& last() const { return last_; }
  const std::vector<double>& potential() const { return phi_; }
  NegfEngine& engine() { return *engine_; }
  const DeviceMesh& mesh() const { return mesh_; }

 private:
  RunConfig cfg_;
  bool ballistic_;
  std::optional<std::uint64_t> seed_;
  std::unique_ptr<NegfEngine> engine_;
  DeviceMesh mesh_;
  std::vector<double> phi_;
  ScfResult last_;
};

struct SweepOutput {
  std::vector<IvRecord> records;
  std::string csv_path;
  int exit_code = 0;  // 0, or 3 when any point failed to converge
};

// Both modes at every gate voltage; rows are flushed as they complete.
SweepOutput iv_sweep(const RunConfig& cfg, const std::string& out_dir);

// Random-alloy samples at one bias, seeds derived from the base seed.
SweepOutput run_ensemble(const RunConfig& cfg, const std::string& out_dir);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct MemoryPoint {
  std::size_t tuples_in_series = 0;
  double peak_rss_bytes = 0.0;   // measured in a forked child, above its start
  double tracked_bytes = 0.0;    // numerical state accounted by the worker
};

struct MemoryReport {
  std::vector<MemoryPoint> points;
  LinearFit rss_fit;
  LinearFit tracked_fit;
};

// Solves `count` tuples in series on one worker for each count, with or
// without keeping the finished slices.
MemoryReport memory_step_report(const DeviceSpec& spec, const MaterialParams& materials,
                                std::span<const std::size_t> counts, bool retain_slices);

struct BenchPoint {
  int workers = 1;
  double wall_seconds = 0.0;
  double cpu_imbalance = 0.0;        // max/mean - 1 of per-worker busy CPU time
  double efficiency = 1.0;           // T1 / (n * Tn)
  double critical_path_efficiency = 1.0;  // total busy / (n * max busy)
};

// Timed Born iterations on the configured homogeneous grid for each worker count.
std::vector<BenchPoint> strong_scaling(const RunConfig& cfg, std::span<const int> worker_counts, int born_iterations);

struct BalancePair {
  double homogeneous_imbalance = 0.0;
  double adaptive_imbalance = 0.0;
};

// Homogeneous grid vs. an adaptive grid of equal tuple count refined after
// partitioning; each run measures per-worker busy CPU time.
BalancePair load_balance_pair(const RunConfig& cfg, int workers, std::size_t budget);

}  // namespace utb
