#pragma once

// Command-line front end: single-point evaluation, parameter optimization,
// grid scans with CSV + JSON-manifest output, and Monte-Carlo validation of
// the estimator chain. Output is deterministic: fixed column order,
// full-precision scientific notation, rows sorted by (protocol, distance,
// omega), and a stable manifest key order.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkd/baseline3.hpp"
#include "qkd/bounds.hpp"
#include "qkd/channel.hpp"
#include "qkd/io.hpp"
#include "qkd/mcsim.hpp"
#include "qkd/optimizer.hpp"
#include "qkd/version.hpp"

namespace qkd::cli {

namespace detail {

// reference operating points used when no config file is given
inline SourceConfig default_config4(double omega) {
  return SourceConfig::from_free(0.47, 0.183, 0.32, omega, 0.16, 0.407, 0.22,
                                 0.82);
}

inline SourceConfig3 default_config3(double omega) {
  return SourceConfig3::from_free(0.551, 0.188, omega, 0.127, 0.599, 0.669);
}

inline SourceConfig config4_from_map(
    const std::map<std::string, std::string>& m) {
  return SourceConfig::from_free(
      config_double(m, "mu"), config_double(m, "v1"), config_double(m, "v2"),
      config_double_or(m, "omega", 2e-4), config_double(m, "p_mu"),
      config_double(m, "p_v1"), config_double(m, "p_v2"),
      config_double(m, "p_z"));
}

inline SourceConfig3 config3_from_map(
    const std::map<std::string, std::string>& m) {
  return SourceConfig3::from_free(
      config_double(m, "mu"), config_double(m, "v"),
      config_double_or(m, "omega", 2e-4), config_double(m, "p_mu"),
      config_double(m, "p_v"), config_double(m, "p_z"));
}

inline void apply_overrides(const std::map<std::string, std::string>& m,
                            SystemParams& sys, SecurityParams& sec) {
  sys.p_dc = config_double_or(m, "p_dc", sys.p_dc);
  sys.p_ap = config_double_or(m, "p_ap", sys.p_ap);
  sys.e_mis = config_double_or(m, "e_mis", sys.e_mis);
  sys.eta_b = config_double_or(m, "eta_b", sys.eta_b);
  sys.alpha = config_double_or(m, "alpha", sys.alpha);
  sys.n_pulses = config_double_or(m, "pulses", sys.n_pulses);
  sec.eps_cor = config_double_or(m, "eps_cor", sec.eps_cor);
  sec.kappa = config_double_or(m, "kappa", sec.kappa);
  sec.f_ec = config_double_or(m, "f_ec", sec.f_ec);
}

inline std::map<std::string, std::string> load_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in);
}

// grid forms: "x" | "a,b,c" | "lo:hi:step" | "lo:hi:log" | "lo:hi:logN"
inline std::vector<double> parse_grid(const std::string& text) {
  auto to_double = [](const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::runtime_error("bad number '" + s + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(',') != std::string::npos) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(to_double(item));
    }
  } else if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(trim(item));
    if (parts.size() != 3)
      throw std::runtime_error("grid must be lo:hi:step or lo:hi:log[N]");
    const double lo = to_double(parts[0]);
    const double hi = to_double(parts[1]);
    if (!(hi >= lo)) throw std::runtime_error("grid needs hi >= lo");
    if (parts[2].rfind("log", 0) == 0) {
      if (!(lo > 0.0)) throw std::runtime_error("log grid needs lo > 0");
      const std::string count_text = parts[2].substr(3);
      const double decades = std::log10(hi / lo);
      const int n = count_text.empty()
                        ? static_cast<int>(std::lround(decades)) + 1
                        : std::stoi(count_text);
      if (n < 1) throw std::runtime_error("log grid needs >= 1 points");
      for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        out.push_back(lo * std::pow(hi / lo, t));
      }
    } else {
      const double step = to_double(parts[2]);
      if (!(step > 0.0)) throw std::runtime_error("grid step must be > 0");
      for (double v = lo; v <= hi + 1e-9 * std::max(1.0, std::abs(hi));
           v += step)
        out.push_back(v);
    }
  } else {
    out.push_back(to_double(trim(text)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw std::runtime_error("empty grid: " + text);
  return out;
}

inline std::string flags_string(const EvalFlags& f) {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ';';
    s += name;
  };
  add(f.s_z0_clamped, "s_z0_clamped");
  add(f.s_z1_clamped, "s_z1_clamped");
  add(f.s_x1_clamped, "s_x1_clamped");
  add(f.v_x1_clamped_low, "v_x1_clamped_low");
  add(f.v_x1_clamped_high, "v_x1_clamped_high");
  add(f.e1_capped, "e1_capped");
  add(f.b_regularized, "b_regularized");
  add(f.b_degenerate, "b_degenerate");
  return s;
}

struct ResultRow {
  double distance_km = 0.0;
  double omega = 0.0;
  std::string protocol;  // "four" or "three"
  // source parameters; v2/p_v2 unused for protocol "three"
  double mu = 0.0, v1 = 0.0, v2 = 0.0;
  double p_mu = 0.0, p_v1 = 0.0, p_v2 = 0.0, p_z = 0.0;
  bool has_v2 = true;
  KeyRateReport report;
};

inline ResultRow make_row4(double distance, const SourceConfig& c,
                           const KeyRateReport& r) {
  ResultRow row;
  row.distance_km = distance;
  row.omega = c.omega;
  row.protocol = "four";
  row.mu = c.mu;
  row.v1 = c.v1;
  row.v2 = c.v2;
  row.p_mu = c.p_mu;
  row.p_v1 = c.p_v1;
  row.p_v2 = c.p_v2;
  row.p_z = c.p_z_bob;
  row.report = r;
  return row;
}

inline ResultRow make_row3(double distance, const SourceConfig3& c,
                           const KeyRateReport& r) {
  ResultRow row;
  row.distance_km = distance;
  row.omega = c.omega;
  row.protocol = "three";
  row.mu = c.mu;
  row.v1 = c.v;
  row.has_v2 = false;
  row.p_mu = c.p_mu;
  row.p_v1 = c.p_v;
  row.p_z = c.p_z_alice;
  row.report = r;
  return row;
}

inline const std::vector<std::string>& csv_header() {
  static const std::vector<std::string> header = {
      "distance_km", "omega", "protocol", "feasible", "fp_converged",
      "R",           "l",     "eps_sec",  "mu",       "v1",
      "v2",          "p_mu",  "p_v1",     "p_v2",     "p_z",
      "s_z0",        "s_z1",  "s_x1",     "v_x1",     "e1_pz",
      "lambda_ec",   "flags"};
  return header;
}

inline void write_rows(std::ostream& os, std::vector<ResultRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) {
                     if (a.protocol != b.protocol)
                       return a.protocol < b.protocol;
                     if (a.distance_km != b.distance_km)
                       return a.distance_km < b.distance_km;
                     return a.omega < b.omega;
                   });
  CsvWriter csv(os);
  csv.row(csv_header());
  for (const auto& row : rows) {
    const KeyRateReport& r = row.report;
    csv.row({format_double(row.distance_km), format_double(row.omega),
             row.protocol, r.feasible ? "1" : "0",
             r.flags.fp_converged ? "1" : "0", format_double(r.rate),
             std::to_string(r.l), format_double(r.eps_sec),
             format_double(row.mu), format_double(row.v1),
             row.has_v2 ? format_double(row.v2) : "",
             format_double(row.p_mu), format_double(row.p_v1),
             row.has_v2 ? format_double(row.p_v2) : "",
             format_double(row.p_z), format_double(r.s_z0),
             format_double(r.s_z1), format_double(r.s_x1),
             format_double(r.v_x1), format_double(r.e1_pz),
             format_double(r.lambda_ec), flags_string(r.flags)});
  }
}

class OutputFile {
 public:
  explicit OutputFile(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_)
        throw std::runtime_error("cannot open output file: " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

inline nlohmann::ordered_json system_json(const SystemParams& sys) {
  return {{"p_dc", sys.p_dc},     {"p_ap", sys.p_ap},
          {"e_mis", sys.e_mis},   {"eta_b", sys.eta_b},
          {"alpha_db_per_km", sys.alpha}, {"n_pulses", sys.n_pulses}};
}

inline nlohmann::ordered_json security_json(const SecurityParams& sec) {
  return {{"eps_cor", sec.eps_cor}, {"kappa", sec.kappa}, {"f_ec", sec.f_ec}};
}

inline void write_manifest(const std::string& path,
                           nlohmann::ordered_json manifest) {
  if (path.empty()) return;
  manifest["tool"] = "qkd-keyrate";
  manifest["version"] = version_string;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open manifest file: " + path);
  out << manifest.dump(2) << '\n';
}

inline std::vector<std::string> protocols_from(const std::string& name) {
  if (name == "both") return {"four", "three"};
  if (name == "four" || name == "three") return {name};
  throw std::runtime_error("protocol must be four, three, or both");
}

}  // namespace detail

// Entry point; args excludes the program name. Returns a process exit code.
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"finite-key rate analysis for decoy-state BB84"};
  app.set_version_flag("--version", version_string);
  app.require_subcommand(1);

  std::string config_path, output_path, manifest_path;
  std::string protocol = "four";
  double distance = 100.0;
  double pulses = 1e9;
  double omega = 2e-4;
  std::uint64_t seed = 1;
  int restarts = 24;
  std::string distances_text = "0:100:10";
  std::string omega_text;
  long long trials = 10000;
  double mc_eps = 1e-3;
  std::optional<double> fixed_eps;
  bool no_deviations = false;

  auto add_common = [&](CLI::App* cmd, bool with_protocol) {
    cmd->add_option("--config", config_path,
                    "key=value file with source and system parameters");
    cmd->add_option("--pulses", pulses, "number of transmitted pulses");
    cmd->add_option("--output", output_path, "CSV output path (default: stdout)");
    if (with_protocol)
      cmd->add_option("--protocol", protocol, "four, three, or both");
  };

  CLI::App* cmd_eval =
      app.add_subcommand("evaluate", "key rate at fixed source parameters");
  add_common(cmd_eval, true);
  cmd_eval->add_option("--distance", distance, "fiber length in km");
  cmd_eval->add_option("--eps-sec", fixed_eps,
                       "evaluate at this fixed secrecy budget instead of "
                       "solving the budget/length coupling");
  cmd_eval->add_flag("--no-deviations", no_deviations,
                     "drop finite-sample deviation terms (diagnostic)");

  CLI::App* cmd_opt =
      app.add_subcommand("optimize", "optimized key rate at one distance");
  add_common(cmd_opt, true);
  cmd_opt->add_option("--distance", distance, "fiber length in km");
  cmd_opt->add_option("--omega", omega, "weakest decoy intensity");
  cmd_opt->add_option("--seed", seed, "optimizer seed");
  cmd_opt->add_option("--restarts", restarts, "optimizer restarts");

  CLI::App* cmd_scan =
      app.add_subcommand("scan", "optimized key rates over a distance grid");
  add_common(cmd_scan, true);
  cmd_scan->add_option("--distances", distances_text,
                       "grid: lo:hi:step, lo:hi:log[N], or comma list");
  cmd_scan->add_option("--omega", omega_text,
                       "weakest-intensity grid (same forms)");
  cmd_scan->add_option("--seed", seed, "optimizer seed");
  cmd_scan->add_option("--restarts", restarts, "optimizer restarts");
  cmd_scan->add_option("--manifest", manifest_path,
                       "write a JSON run manifest to this path");

  CLI::App* cmd_mc = app.add_subcommand(
      "mc-validate", "Monte-Carlo coverage check of the estimator chain");
  cmd_mc->add_option("--config", config_path,
                     "key=value file with source and system parameters");
  cmd_mc->add_option("--distance", distance, "fiber length in km");
  cmd_mc->add_option("--pulses", pulses, "pulses per trial");
  cmd_mc->add_option("--trials", trials, "number of simulated experiments");
  cmd_mc->add_option("--eps", mc_eps, "per-estimator violation budget");
  cmd_mc->add_option("--seed", seed, "simulation seed");

  std::vector<std::string> argv_storage = args;
  std::vector<const char*> argv;
  argv.push_back("qkd");
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  // scan covers both protocols unless narrowed explicitly
  if (cmd_scan->parsed() && cmd_scan->count("--protocol") == 0)
    protocol = "both";

  try {
    SystemParams sys;
    SecurityParams sec;
    std::map<std::string, std::string> cfg_map;
    if (!config_path.empty()) cfg_map = detail::load_config_file(config_path);
    detail::apply_overrides(cfg_map, sys, sec);
    if (cmd_scan->parsed() || cmd_eval->parsed() || cmd_opt->parsed() ||
        cmd_mc->parsed()) {
      // command-line --pulses wins over config when given explicitly
      bool pulses_given = false;
      for (auto* cmd : {cmd_eval, cmd_opt, cmd_scan, cmd_mc})
        if (cmd->parsed() && cmd->count("--pulses") > 0) pulses_given = true;
      if (pulses_given || cfg_map.find("pulses") == cfg_map.end())
        sys.n_pulses = pulses;
    }

    if (cmd_eval->parsed()) {
      if (protocol == "both")
        throw std::runtime_error("evaluate needs a single protocol");
      sys.length_km = distance;
      EvalOptions opts;
      opts.fixed_eps_sec = fixed_eps;
      opts.deviations = !no_deviations;
      std::vector<detail::ResultRow> rows;
      if (protocol == "four") {
        sec.error_terms = 17;
        const SourceConfig c = cfg_map.count("mu")
                                   ? detail::config4_from_map(cfg_map)
                                   : detail::default_config4(omega);
        const auto r =
            evaluate(c, expected_counts(c, sys), sys.n_pulses, sec, opts);
        rows.push_back(detail::make_row4(distance, c, r));
      } else {
        sec.error_terms = 21;
        const SourceConfig3 c = cfg_map.count("mu")
                                    ? detail::config3_from_map(cfg_map)
                                    : detail::default_config3(omega);
        const auto r =
            evaluate3(c, expected_counts3(c, sys), sys.n_pulses, sec, opts);
        rows.push_back(detail::make_row3(distance, c, r));
      }
      detail::OutputFile out(output_path);
      detail::write_rows(out.stream(), std::move(rows));
      return 0;
    }

    if (cmd_opt->parsed()) {
      sys.length_km = distance;
      std::vector<detail::ResultRow> rows;
      for (const auto& name : detail::protocols_from(protocol)) {
        OptProblem prob;
        prob.sys = sys;
        prob.sec = sec;
        prob.omega = omega;
        prob.restarts = restarts;
        prob.protocol = name == "four" ? Protocol::four : Protocol::three;
        const OptResult res = optimize(prob, seed);
        rows.push_back(name == "four"
                           ? detail::make_row4(distance, res.cfg, res.report)
                           : detail::make_row3(distance, res.cfg3, res.report));
      }
      detail::OutputFile out(output_path);
      detail::write_rows(out.stream(), std::move(rows));
      return 0;
    }

    if (cmd_scan->parsed()) {
      const auto distances = detail::parse_grid(distances_text);
      const auto omegas = omega_text.empty() ? std::vector<double>{2e-4}
                                             : detail::parse_grid(omega_text);
      std::vector<detail::ResultRow> rows;
      for (const auto& name : detail::protocols_from(protocol)) {
        OptProblem prob;
        prob.sys = sys;
        prob.sec = sec;
        prob.restarts = restarts;
        prob.protocol = name == "four" ? Protocol::four : Protocol::three;
        const auto points = scan(prob, distances, omegas, seed);
        for (const auto& pt : points)
          rows.push_back(
              name == "four"
                  ? detail::make_row4(pt.distance_km, pt.result.cfg,
                                      pt.result.report)
                  : detail::make_row3(pt.distance_km, pt.result.cfg3,
                                      pt.result.report));
      }
      const std::size_t n_rows = rows.size();
      detail::OutputFile out(output_path);
      detail::write_rows(out.stream(), std::move(rows));
      nlohmann::ordered_json manifest;
      manifest["command"] = "scan";
      manifest["protocols"] = detail::protocols_from(protocol);
      manifest["distances_km"] = distances;
      manifest["omegas"] = omegas;
      manifest["seed"] = seed;
      manifest["restarts"] = restarts;
      manifest["system"] = detail::system_json(sys);
      manifest["security"] = detail::security_json(sec);
      manifest["rows"] = n_rows;
      manifest["csv"] = output_path.empty() ? "-" : output_path;
      detail::write_manifest(manifest_path, std::move(manifest));
      return 0;
    }

    // mc-validate
    sys.length_km = distance;
    sec.error_terms = 17;
    const SourceConfig c = cfg_map.count("mu")
                               ? detail::config4_from_map(cfg_map)
                               : detail::default_config4(omega);
    const ValidationReport rep =
        validate_bounds(c, sys, sec, trials, seed, mc_eps);
    bool ok = true;
    auto line = [&](const char* name, const EstimatorCheck& chk) {
      const bool pass = chk.frequency() <= mc_eps;
      ok = ok && pass;
      std::cout << name << ": checked=" << chk.checked
                << " violations=" << chk.violations
                << " frequency=" << format_double(chk.frequency())
                << " budget=" << format_double(mc_eps) << ' '
                << (pass ? "PASS" : "FAIL") << '\n';
    };
    line("s_z0", rep.s_z0);
    line("s_z1", rep.s_z1);
    line("s_x1", rep.s_x1);
    line("v_x1", rep.v_x1);
    line("e1_pz", rep.e1_pz);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace qkd::cli
