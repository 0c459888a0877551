#include "utb/config.hpp"
#include "utb/runtime.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace utb;
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("utb_runtime_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* small_config = R"(
[device]
n_slabs = 8
sites_per_slab = 2
body_layers = 1

[grid]
e_min_ev = -2.4
e_max_ev = -1.2
points_per_eop = 3
n_k = 2

[electrostatics]
oxide_layers = 1
source_slabs = 2
drain_slabs = 2
doping_sd_per_nm3 = 0.5

[bias]
v_gate_list_v = 0.0
v_drain_v = 0.05
mu_source_ev = -1.8

[solver]
poisson_beta = 0.3
)";

}  // namespace

TEST_CASE("config parses sections, lists and defaults") {
  const auto c = parse_config(small_config);
  CHECK(c.device.n_slabs == 8);
  CHECK(c.bias.v_gate.size() == 1);
  CHECK(c.bias.v_drain == doctest::Approx(0.05));
  CHECK(c.mu_drain_ev(0.05) == doctest::Approx(-1.85));
  CHECK(c.grid.mode == GridMode::HOMOGENEOUS);
  CHECK_FALSE(c.ensemble.has_value());

  std::string text = small_config;
  text.replace(text.find("v_gate_list_v = 0.0"), 19, "v_gate_list_v = -0.2, 0.0,0.3  # comment");
  const auto l = parse_config(text);
  REQUIRE(l.bias.v_gate.size() == 3);
  CHECK(l.bias.v_gate[2] == doctest::Approx(0.3));
}

TEST_CASE("config errors carry line numbers and are all collected") {
  const std::string text =
      "[device]\n"
      "n_slabs = many\n"
      "colour = blue\n"
      "[nowhere]\n"
      "[solver]\n"
      "poisson_beta = 1.5\n"
      "just text\n";
  try {
    parse_config(text);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    const auto& p = e.problems();
    REQUIRE(p.size() >= 5);
    CHECK(p[0].rfind("line 2:", 0) == 0);
    CHECK(p[1].rfind("line 3:", 0) == 0);
    CHECK(p[1].find("colour") != std::string::npos);
    CHECK(p[2].rfind("line 4:", 0) == 0);
    CHECK(p[3].rfind("line 7:", 0) == 0);
    bool beta = false;
    for (const auto& s : p) beta = beta || s.find("poisson_beta") != std::string::npos;
    CHECK(beta);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
  CHECK_THROWS_AS(parse_config("n_slabs = 3\n"), ConfigError);
}

TEST_CASE("shipped configs validate") {
  const char* dir = std::getenv("UTB_CONFIGS");
  if (!dir) return;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".cfg") CHECK_NOTHROW(load_config(entry.path().string()));
}

TEST_CASE("csv header, rows and the empty sweep") {
  const auto dir = scratch("csv");
  auto cfg = parse_config(small_config);
  cfg.bias.v_gate.clear();
  const auto out = iv_sweep(cfg, dir.string());
  CHECK(out.records.empty());
  CHECK(out.exit_code == 0);
  CHECK(read_file(out.csv_path) == std::string(csv_version_line) + "\n" + csv_columns + "\n");

  IvRecord r;
  r.v_gate = 0.2;
  r.v_drain = 0.1;
  r.sample_seed = 7;
  r.current_a_per_nm = 1.5e-6;
  r.outer_iters = 3;
  r.inner_iters_total = 12;
  r.wall_seconds = 4.25;
  const auto with = csv_row(r, true);
  const auto without = csv_row(r, false);
  CHECK(with.find("scattered") != std::string::npos);
  CHECK(with.find(",7,") != std::string::npos);
  CHECK(without.substr(0, without.rfind(',')) == with.substr(0, with.rfind(',')));
  CHECK(without.substr(without.rfind(',') + 1) == "0");
  std::size_t commas = 0;
  for (char c : with) commas += c == ',' ? 1 : 0;
  std::size_t header_commas = 0;
  for (const char* c = csv_columns; *c; ++c) header_commas += *c == ',' ? 1 : 0;
  CHECK(commas == header_commas);
}

TEST_CASE("derived seeds are distinct and reproducible") {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < 1000; ++i) s.push_back(derive_seed(42, i));
  CHECK(derive_seed(42, 5) == s[5]);
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
}

TEST_CASE("profiler nesting, accumulation and misuse") {
  Profiler p(3);
  p.tic("solve");
  p.tic("rgf");
  p.toc("rgf");
  p.tic("rgf");
  p.toc("rgf");
  p.toc("solve");
  p.finish();
  const auto& root = p.root();
  REQUIRE(root.children.size() == 1);
  const auto& solve = *root.children[0];
  CHECK(solve.name == "solve");
  CHECK(solve.calls == 1);
  REQUIRE(solve.children.size() == 1);
  CHECK(solve.children[0]->calls == 2);
  CHECK(solve.children[0]->wall_seconds <= solve.wall_seconds);

  Profiler q;
  q.tic("a");
  q.tic("b");
  CHECK(q.open_stack() == std::vector<std::string>{"a", "b"});
  try {
    q.toc("a");
    FAIL("mismatched toc accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
  }
  CHECK_THROWS_AS(q.finish(), Error);
  Profiler r;
  CHECK_THROWS_AS(r.toc("x"), Error);
  {
    ScopedTimer t(r, "scoped");
  }
  CHECK(r.open_stack().empty());
}

TEST_CASE("profile XML has one strictly nested tree per worker") {
  auto cfg = parse_config(small_config);
  cfg.parallel.n_workers = 4;
  const auto dev = make_device(cfg.device, cfg.materials);
  NegfEngine engine(dev, cfg.scattering, build_grid(cfg, dev.graph), cfg.parallel);
  engine.set_terminals({-1.8, -1.85, 0.0, 0.05});
  engine.born_iteration({1e-300, 2, 1.0});
  std::istringstream xml(engine.profile_xml());
  pt::ptree tree;
  pt::read_xml(xml, tree);
  const auto& profile = tree.get_child("profile");
  CHECK(profile.get<int>("<xmlattr>.workers") == 4);
  std::vector<int> ranks;
  std::function<void(const pt::ptree&, double)> walk = [&](const pt::ptree& node, double parent) {
    const double wall = node.get<double>("<xmlattr>.wall_s");
    CHECK(wall <= parent * 1.01 + 1e-9);
    CHECK(node.get<long>("<xmlattr>.calls") >= 1);
    for (const auto& [tag, child] : node)
      if (tag == "timer") walk(child, wall);
  };
  for (const auto& [tag, t] : profile) {
    if (tag != "timer") continue;
    CHECK(t.get<std::string>("<xmlattr>.name") == "worker");
    ranks.push_back(t.get<int>("<xmlattr>.rank"));
    walk(t, 1e300);
  }
  CHECK(ranks == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("chain current equals the Landauer integral of unit transmission") {
  DeviceSpec s;
  s.n_slabs = 20;
  const double t = MaterialParams{}.hopping_si_ev;
  const double mu_s = -0.8, mu_d = -0.9, T = 300.0;
  const auto grid = build_homogeneous(-2.603, 0.4, 0.06, 6, 1, s.transverse_period_nm());
  ScatteringParams sp;
  sp.coupling_scale = 0.0;
  sp.temperature_k = T;
  const auto dev = make_device(s, MaterialParams{});
  NegfEngine engine(dev, sp, grid, ParallelOptions{});
  engine.set_terminals({mu_s, mu_d, 0.0, 0.0});
  engine.set_potential(std::vector<double>(s.n_slabs, 0.0));
  engine.born_iteration({});
  const auto cur = engine.current();

  double oracle = 0.0;
  for (std::size_t e = 0; e < grid.n_e(); ++e) {
    const double E = grid.energies[e];
    const double trans = std::abs(E) < 2.0 * std::abs(t) ? 1.0 : 0.0;
    oracle += grid.energy_weights[e] * grid.momentum_weights[0] * trans * (fermi(E - mu_s, T) - fermi(E - mu_d, T));
  }
  oracle *= units::e_over_h / units::pi;
  CHECK(oracle > 0.0);
  CHECK(std::abs(cur.mean() - oracle) / oracle < 1e-6);
  CHECK(cur.nonuniformity() < 1e-8);
}

TEST_CASE("dense transmission of a chain: unit in band, zero outside, reduced by a weak link") {
  const double t = -1.0;
  const int n = 10;
  const auto chain = [&](double weak) {
    BlockTridiagonal<cplx> h;
    for (int i = 0; i < n; ++i) h.diag.push_back(MatC::Zero(1, 1));
    for (int i = 0; i + 1 < n; ++i) h.upper.push_back(MatC::Constant(1, 1, cplx(i == n / 2 ? weak * t : t)));
    return h;
  };
  const auto sigma = [&](double E) {
    const MatC h00 = MatC::Zero(1, 1);
    const MatC h01 = MatC::Constant(1, 1, cplx(t));
    return lead_self_energy<cplx>(surface_greens_function<cplx>(h00, h01, E), h01);
  };
  for (double E : {-1.9, -1.0, 0.0, 0.7, 1.5}) {
    CHECK(std::abs(ballistic_transmission(chain(1.0), sigma(E), sigma(E), E) - 1.0) < 1e-10);
    const double weak = ballistic_transmission(chain(0.3), sigma(E), sigma(E), E);
    CHECK(weak < 1.0);
    CHECK(weak > 0.0);
  }
  for (double E : {-2.5, 2.2, 3.0}) CHECK(ballistic_transmission(chain(1.0), sigma(E), sigma(E), E) < 1e-12);
}

TEST_CASE("equilibrium carries no current") {
  auto cfg = parse_config(small_config);
  const auto dev = make_device(cfg.device, cfg.materials);
  cfg.scattering.coupling_scale = 0.5;
  NegfEngine engine(dev, cfg.scattering, build_grid(cfg, dev.graph), ParallelOptions{});
  engine.set_terminals({-1.8, -1.8, 0.0, 0.0});
  const auto r = engine.born_iteration({1e-8, 100, 1.0});
  CHECK(r.converged);
  const double scale = units::e_over_h * units::k_B * cfg.scattering.temperature_k;
  for (double i : engine.current().interface_current) CHECK(std::abs(i) < 1e-10 * scale);
}

TEST_CASE("single bias point converges with consistent records") {
  const auto cfg = parse_config(small_config);
  BiasRunner runner(cfg, false);
  const auto rec = runner.solve(0.0);
  CHECK(rec.status == "ok");
  CHECK(rec.outer_iters >= 1);
  CHECK(rec.inner_iters_total >= rec.outer_iters);
  CHECK(rec.current_a_per_nm > 0.0);
  CHECK(runner.last().gauss_residual < 1e-8);
  CHECK(rec.max_current_nonuniformity < 10.0 * cfg.solver.born.tol);
}

TEST_CASE("memory growth per tuple tracks retained slices") {
  DeviceSpec s;
  s.n_slabs = 6;
  s.sites_per_slab = 2;
  s.body_layers = 1;
  const std::vector<std::size_t> counts{4, 8, 12, 16};
  const auto diag_only = memory_step_report(s, MaterialParams{}, counts, false);
  const auto kept = memory_step_report(s, MaterialParams{}, counts, true);
  REQUIRE(diag_only.points.size() == counts.size());
  // Without slices only the per-tuple diagonals remain: 2 vectors of 12 entries.
  CHECK(diag_only.tracked_fit.slope == doctest::Approx(2.0 * 12 * sizeof(cplx)).epsilon(0.01));
  CHECK(kept.tracked_fit.r2 > 0.99);
  const double slices = kept.tracked_fit.slope - diag_only.tracked_fit.slope;
  CHECK(slices > diag_only.tracked_fit.slope);

  DeviceSpec wide = s;
  wide.sites_per_slab = 4;
  const auto wide_diag = memory_step_report(wide, MaterialParams{}, counts, false);
  const auto wide_kept = memory_step_report(wide, MaterialParams{}, counts, true);
  const double ratio = (wide_kept.tracked_fit.slope - wide_diag.tracked_fit.slope) / slices;
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.01));
  CHECK(wide_diag.tracked_fit.slope / diag_only.tracked_fit.slope == doctest::Approx(2.0).epsilon(0.01));
  CHECK_THROWS_AS(memory_step_report(s, MaterialParams{}, std::vector<std::size_t>{0}, false), Error);
}

TEST_CASE("line fit recovers an exact line") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

TEST_CASE("CLI exit codes") {
  const char* exe = std::getenv("UTBSIM");
  if (!exe) return;
  const auto dir = scratch("cli");
  const auto good = dir / "good.cfg";
  const auto bad = dir / "bad.cfg";
  std::ofstream(good) << small_config;
  std::ofstream(bad) << "[device]\nn_slabs = -3\nfoo = 1\n";
  const auto code = [&](const std::string& args) {
    const int st = std::system((std::string(exe) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  CHECK(code("validate --config " + good.string()) == 0);
  CHECK(code("validate --config " + bad.string()) == 2);
  CHECK(code("validate --config " + (dir / "missing.cfg").string()) == 2);
  CHECK(code("frobnicate") == 2);
  CHECK(code("run --ballistic --config " + good.string() + " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out"));
}
