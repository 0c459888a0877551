#include "utb/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace utb {

namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string s = "invalid configuration:";
  for (const auto& m : p) s += "\n  " + m;
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct Parser {
  RunConfig cfg;
  std::vector<std::string> problems;
  int line = 0;

  void fail(const std::string& msg) { problems.push_back("line " + std::to_string(line) + ": " + msg); }

  bool to_double(const std::string& v, double& out) {
    const char* b = v.data();
    const char* e = b + v.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e && std::isfinite(out);
  }

  template <typename Int>
  bool to_int(const std::string& v, Int& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc() && p == v.data() + v.size();
  }

  auto real(double& dst) {
    return [this, &dst](const std::string& v) {
      if (!to_double(v, dst)) fail("expected a number, got '" + v + "'");
    };
  }
  template <typename Int>
  auto integer(Int& dst) {
    return [this, &dst](const std::string& v) {
      if (!to_int(v, dst)) fail("expected an integer, got '" + v + "'");
    };
  }
  auto boolean(bool& dst) {
    return [this, &dst](const std::string& v) {
      const auto l = lower(v);
      if (l == "true" || l == "1" || l == "yes") dst = true;
      else if (l == "false" || l == "0" || l == "no") dst = false;
      else fail("expected true or false, got '" + v + "'");
    };
  }
  auto real_list(std::vector<double>& dst) {
    return [this, &dst](const std::string& v) {
      dst.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto t = trim(item);
        if (t.empty()) continue;
        double d = 0.0;
        if (!to_double(t, d)) {
          fail("expected a comma-separated number list, got '" + v + "'");
          return;
        }
        dst.push_back(d);
      }
    };
  }

  using Setter = std::function<void(const std::string&)>;
  std::map<std::string, std::map<std::string, Setter>> table;
  std::optional<RoughnessSpec> rough;
  bool rough_seen = false;
  std::optional<double> area_override;
  bool ensemble_seen = false;
  EnsembleSettings ens;
  double ensemble_vg = 0.0;
  bool ensemble_vg_seen = false;

  Parser() {
    auto& d = cfg.device;
    rough = RoughnessSpec{};
    table["device"] = {
        {"n_slabs", integer(d.n_slabs)},
        {"sites_per_slab", integer(d.sites_per_slab)},
        {"body_layers", integer(d.body_layers)},
        {"lattice_constant_nm", real(d.lattice_constant_nm)},
        {"cross_section_area_nm2", real(d.cross_section_area_nm2)},
        {"orbitals_per_site", integer(d.orbitals_per_site)},
        {"alloy_fraction", real(d.alloy_fraction)},
        {"disorder_mode",
         [this, &d](const std::string& v) {
           const auto l = lower(v);
           if (l == "vca") d.disorder_mode = DisorderMode::VCA;
           else if (l == "random") d.disorder_mode = DisorderMode::RANDOM;
           else fail("disorder_mode must be vca or random, got '" + v + "'");
         }},
        {"rng_seed", integer(d.rng_seed)},
        {"roughness_amplitude_layers",
         [this](const std::string& v) {
           rough_seen = true;
           integer(rough->amplitude)(v);
         }},
        {"roughness_correlation_length_nm",
         [this](const std::string& v) {
           rough_seen = true;
           real(rough->correlation_length_nm)(v);
         }},
        {"roughness_seed",
         [this](const std::string& v) {
           rough_seen = true;
           integer(rough->seed)(v);
         }},
    };
    auto& m = cfg.materials;
    table["materials"] = {
        {"onsite_si_ev", real(m.onsite_si_ev)},       {"onsite_ge_ev", real(m.onsite_ge_ev)},
        {"hopping_si_ev", real(m.hopping_si_ev)},     {"hopping_ge_ev", real(m.hopping_ge_ev)},
        {"hopping_sige_ev", real(m.hopping_sige_ev)}, {"orbital_splitting_ev", real(m.orbital_splitting_ev)},
    };
    auto& s = cfg.scattering;
    table["scattering"] = {
        {"D_acoustic_ev", real(s.D_acoustic_ev)},
        {"sound_velocity_nm_per_ps", real(s.sound_velocity_nm_per_ps)},
        {"debye_energy_ev", real(s.debye_energy_ev)},
        {"optical_energy_ev", real(s.optical_energy_ev)},
        {"D_optical_ev_per_nm", real(s.D_optical_ev_per_nm)},
        {"mass_density_amu_per_nm3", real(s.mass_density_amu_per_nm3)},
        {"area_nm2",
         [this](const std::string& v) {
           double a = 0.0;
           real(a)(v);
           area_override = a;
         }},
        {"temperature_k", real(s.temperature_k)},
        {"coupling_scale", real(s.coupling_scale)},
    };
    auto& g = cfg.grid;
    table["grid"] = {
        {"e_min_ev", real(g.e_min_ev)},
        {"e_max_ev", real(g.e_max_ev)},
        {"points_per_eop", integer(g.points_per_eop)},
        {"n_k", integer(g.n_k)},
        {"mode",
         [this, &g](const std::string& v) {
           const auto l = lower(v);
           if (l == "homogeneous") g.mode = GridMode::HOMOGENEOUS;
           else if (l == "adaptive") g.mode = GridMode::ADAPTIVE;
           else fail("grid mode must be homogeneous or adaptive, got '" + v + "'");
         }},
        {"adaptive_budget", integer(g.adaptive_budget)},
    };
    auto& e = cfg.electrostatics;
    table["electrostatics"] = {
        {"oxide_layers", integer(e.oxide_layers)},
        {"eps_body", real(e.eps_body)},
        {"eps_oxide", real(e.eps_oxide)},
        {"source_slabs", integer(e.source_slabs)},
        {"drain_slabs", integer(e.drain_slabs)},
        {"doping_sd_per_nm3", real(e.doping_sd_per_nm3)},
        {"doping_channel_per_nm3", real(e.doping_channel_per_nm3)},
        {"gate_offset_v", real(e.gate_offset_v)},
    };
    auto& b = cfg.bias;
    table["bias"] = {
        {"v_gate_list_v", real_list(b.v_gate)},
        {"v_drain_v", real(b.v_drain)},
        {"mu_source_ev", real(b.mu_source_ev)},
        {"ensemble_v_gate_v",
         [this](const std::string& v) {
           ensemble_vg_seen = true;
           real(ensemble_vg)(v);
         }},
    };
    auto& so = cfg.solver;
    table["solver"] = {
        {"born_tol", real(so.born.tol)},
        {"born_max_iter", integer(so.born.max_iter)},
        {"born_mixing", real(so.born.mixing)},
        {"poisson_beta", real(so.poisson_beta)},
        {"tol_phi_v", real(so.tol_phi_v)},
        {"max_outer", integer(so.max_outer)},
        {"lead_eta_ev", real(so.lead.eta)},
        {"lead_tol", real(so.lead.tol)},
        {"lead_max_doublings", integer(so.lead.max_doublings)},
    };
    auto& p = cfg.parallel;
    table["parallel"] = {
        {"workers", integer(p.n_workers)},
        {"transport",
         [this, &p](const std::string& v) {
           const auto l = lower(v);
           if (l == "inprocess") p.transport = TransportKind::INPROCESS;
           else if (l == "socket") p.transport = TransportKind::SOCKET;
           else fail("transport must be inprocess or socket, got '" + v + "'");
         }},
    };
    table["output"] = {
        {"directory", [this](const std::string& v) { cfg.output_directory = v; }},
        {"record_wall_time", boolean(cfg.record_wall_time)},
    };
    table["ensemble"] = {
        {"n_samples",
         [this](const std::string& v) {
           ensemble_seen = true;
           integer(ens.n_samples)(v);
         }},
        {"base_seed",
         [this](const std::string& v) {
           ensemble_seen = true;
           integer(ens.base_seed)(v);
         }},
        {"mode",
         [this](const std::string& v) {
           ensemble_seen = true;
           const auto l = lower(v);
           if (l == "ballistic") ens.ballistic = true;
           else if (l == "scattered") ens.ballistic = false;
           else fail("mode must be ballistic or scattered, got '" + v + "'");
         }},
    };
  }

  void run(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const auto body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (body.empty()) continue;
      if (body.front() == '[') {
        if (body.back() != ']') {
          fail("unterminated section header");
          continue;
        }
        section = trim(body.substr(1, body.size() - 2));
        if (!table.count(section)) fail("unknown section [" + section + "]");
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        fail("expected key = value");
        continue;
      }
      const auto key = trim(body.substr(0, eq));
      const auto value = trim(body.substr(eq + 1));
      if (section.empty()) {
        fail("key '" + key + "' outside any section");
        continue;
      }
      auto sit = table.find(section);
      if (sit == table.end()) continue;
      auto kit = sit->second.find(key);
      if (kit == sit->second.end()) {
        fail("unknown key '" + key + "' in [" + section + "]");
        continue;
      }
      if (value.empty()) {
        fail("empty value for '" + key + "'");
        continue;
      }
      kit->second(value);
    }
    if (rough_seen) cfg.device.roughness = rough;
    cfg.scattering.area_nm2 = area_override.value_or(cfg.device.cross_section_area_nm2);
    if (ensemble_seen) cfg.ensemble = ens;
    if (ensemble_vg_seen) cfg.bias.ensemble_v_gate = ensemble_vg;
  }
};

template <typename F>
void check(std::vector<std::string>& out, const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    out.push_back(where + ": " + e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems) : Error(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> p;
  check(p, "[device]", [&] { c.device.validate(); });
  check(p, "[materials]", [&] { c.materials.validate(); });
  check(p, "[scattering]", [&] { c.scattering.validate(); });
  if (!(c.grid.e_max_ev > c.grid.e_min_ev)) p.push_back("[grid]: e_max_ev must exceed e_min_ev");
  if (c.grid.points_per_eop < 1) p.push_back("[grid]: points_per_eop must be at least 1");
  if (c.grid.n_k < 1) p.push_back("[grid]: n_k must be at least 1");
  if (c.electrostatics.source_slabs + c.electrostatics.drain_slabs >= c.device.n_slabs)
    p.push_back("[electrostatics]: source and drain slabs leave no channel");
  if (c.electrostatics.source_slabs < 1 || c.electrostatics.drain_slabs < 1)
    p.push_back("[electrostatics]: source and drain regions need at least one slab");
  if (!(c.electrostatics.eps_body > 0.0) || !(c.electrostatics.eps_oxide > 0.0))
    p.push_back("[electrostatics]: permittivities must be positive");
  if (!(c.solver.born.tol > 0.0)) p.push_back("[solver]: born_tol must be positive");
  if (c.solver.born.max_iter < 1) p.push_back("[solver]: born_max_iter must be at least 1");
  if (!(c.solver.born.mixing > 0.0 && c.solver.born.mixing <= 1.0)) p.push_back("[solver]: born_mixing must lie in (0, 1]");
  if (!(c.solver.poisson_beta > 0.0 && c.solver.poisson_beta <= 1.0))
    p.push_back("[solver]: poisson_beta must lie in (0, 1]");
  if (!(c.solver.tol_phi_v > 0.0)) p.push_back("[solver]: tol_phi_v must be positive");
  if (c.solver.max_outer < 1) p.push_back("[solver]: max_outer must be at least 1");
  if (!(c.solver.lead.eta > 0.0) || !(c.solver.lead.tol > 0.0)) p.push_back("[solver]: lead_eta_ev and lead_tol must be positive");
  if (c.parallel.n_workers < 1) p.push_back("[parallel]: workers must be at least 1");
  if (c.output_directory.empty()) p.push_back("[output]: directory must not be empty");
  if (c.ensemble && c.ensemble->n_samples < 1) p.push_back("[ensemble]: n_samples must be at least 1");
  return p;
}

RunConfig parse_config(const std::string& text) {
  Parser parser;
  parser.run(text);
  auto problems = std::move(parser.problems);
  for (auto& v : validate_config(parser.cfg)) problems.push_back(std::move(v));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return parser.cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot open config file '" + path + "'"});
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace utb
