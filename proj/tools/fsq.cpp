// fsq: command-line front end for the scenario runner and the analysis tools.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

#include "fsq/config.hpp"
#include "fsq/dsp.hpp"
#include "fsq/errors.hpp"
#include "fsq/harness.hpp"
#include "fsq/trap.hpp"
#include "fsq/units.hpp"

#ifndef FSQ_DATA_DIR
#define FSQ_DATA_DIR "data"
#endif

namespace {

using namespace fsq;
using nlohmann::ordered_json;

enum Exit { ok = 0, config_error = 2, numerical_error = 3, check_failed = 4 };

struct RunArgs {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool dry_run = false;
  bool fixed_timestamp = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--out", a.out, "run directory (default: scenario output or runs/<name>)");
  cmd->add_option("--seed", a.seed, "override the scenario seed");
  cmd->add_option("--workers", a.workers, "worker threads (0 = all cores)");
  cmd->add_flag("--dry-run", a.dry_run, "validate and print the resolved parameters, compute nothing");
  cmd->add_flag("--fixed-timestamp", a.fixed_timestamp, "write a constant timestamp into manifest.json");
}

harness::RunSettings settings(const RunArgs& a, std::string part = {}) {
  harness::RunSettings s;
  s.output_dir = a.out;
  s.seed = a.seed;
  s.workers = a.workers;
  s.part = std::move(part);
  s.timestamp = !a.fixed_timestamp;
  return s;
}

void print_bundle(const harness::Bundle& b) {
  std::cout << "run directory: " << b.directory.string() << "\n";
  for (const auto& [k, v] : b.values.items()) std::cout << "  " << k << " = " << v.dump() << "\n";
  for (const auto& w : b.warnings) std::cout << "  warning: " << w << "\n";
  for (const auto& c : b.checks) {
    std::cout << "  [" << (c.pass() ? "PASS" : "FAIL") << "] " << c.name << " = " << harness::format_value(c.value)
              << " in [" << harness::format_value(c.low) << ", " << harness::format_value(c.high) << "]\n";
  }
}

int run_file(const RunArgs& a, const std::vector<std::string>& kinds, const std::string& part) {
  const auto sc = harness::load_scenario(a.scenario);
  if (std::find(kinds.begin(), kinds.end(), sc.kind) == kinds.end()) {
    throw ConfigError(a.scenario + ": scenario kind '" + sc.kind + "' does not fit this command");
  }
  if (a.dry_run) {
    std::cout << harness::describe(sc);
    return ok;
  }
  print_bundle(harness::run_scenario(sc, settings(a, part)));
  return ok;
}

std::vector<double> column_or_throw(const harness::Table& t, std::size_t j, const std::string& src) {
  if (t.columns.size() <= j) throw ConfigError(src + ": expected at least " + std::to_string(j + 1) + " columns");
  return t.column(t.columns[j]);
}

double time_scale(const std::string& unit) {
  static const std::map<std::string, double> f{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
  const auto it = f.find(unit);
  if (it == f.end()) throw ConfigError("time unit must be s, ms, us or ns");
  return it->second;
}

int analyze(const std::string& what, const std::string& input, const std::string& unit, bool dry_run) {
  const auto table = harness::read_table(input);
  auto t = column_or_throw(table, 0, input);
  const auto y = column_or_throw(table, 1, input);
  for (double& v : t) v *= time_scale(unit);
  ordered_json out;
  out["input"] = input;
  out["samples"] = t.size();
  if (dry_run) {
    out["analysis"] = what;
    out["time_unit"] = unit;
    std::cout << out.dump(2) << "\n";
    return ok;
  }
  if (what == "rabi") {
    const auto ex = dsp::extract_rabi(dsp::trace_from_samples(t, y, input));
    out["rabi_hz"] = units::to_hz(ex.rabi);
    out["rabi_sigma_hz"] = units::to_hz(ex.rabi_sigma);
    out["tau_s"] = ex.tau;
    out["tau_sigma_s"] = ex.tau_sigma;
    out["cycles"] = ex.cycles;
    out["cycles_sigma"] = ex.cycles_sigma;
    out["non_decaying"] = ex.non_decaying;
    out["warnings"] = ex.warnings;
  } else if (what == "ramsey") {
    const auto f = dsp::fit_gaussian_decay(t, y);
    out["t2_s"] = f.value("t2");
    out["t2_sigma_s"] = f.error("t2");
    out["c0"] = f.value("c0");
  } else {
    // plain exponential A exp(-t / tau)
    const double tau0 = 0.5 * (t.back() - t.front());
    const dsp::PointModel model = [](double x, const Eigen::VectorXd& p) { return p[0] * std::exp(-x * p[1]); };
    const auto f = dsp::nlls(model, t, y, Eigen::Vector2d(y.front(), 1.0 / tau0), {"amplitude", "rate"});
    const double rate = f.value("rate");
    out["rate_per_s"] = rate;
    out["rate_sigma"] = f.error("rate");
    out["tau_s"] = 1.0 / rate;
    out["tau_sigma_s"] = f.error("rate") / (rate * rate);
    out["amplitude"] = f.value("amplitude");
  }
  std::cout << out.dump(2) << "\n";
  return ok;
}

int trap_cmd(const std::string& what, const std::string& wavelength, const std::string& angle, std::string table_path,
             bool dry_run) {
  const double wl = config::parse_quantity(wavelength, config::Dimension::Length);
  ordered_json out;
  out["wavelength_nm"] = wl;
  if (what != "recoil" && table_path.empty()) table_path = std::string(FSQ_DATA_DIR) + "/polarizability_sample.csv";
  if (what != "recoil") out["table"] = table_path;
  if (what == "slope") out["angle_deg"] = config::parse_quantity(angle, config::Dimension::Angle) / units::deg;
  if (dry_run) {
    std::cout << out.dump(2) << "\n";
    return ok;
  }
  if (what == "recoil") {
    const auto r = trap::recoil_energy(wl);
    out["recoil_hz"] = r.hz;
    out["recoil_uk"] = r.uk;
  } else if (what == "magic") {
    const auto m = trap::magic_angle(wl, trap::load_polarizability_csv(table_path));
    out["magic_angle_deg"] = m.angle ? ordered_json(*m.angle / units::deg) : ordered_json(nullptr);
    out["magic_angle_sigma_deg"] = m.sigma / units::deg;
  } else {
    const auto s = trap::shift_slope(trap::load_polarizability_csv(table_path), wl,
                                     config::parse_quantity(angle, config::Dimension::Angle));
    out["slope_hz_per_uk"] = s.value;
    out["slope_sigma"] = s.sigma;
  }
  std::cout << out.dump(2) << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsq: Raman qubit simulation, analysis and figure reproduction"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::string which;

  auto* simulate = app.add_subcommand("simulate", "run a scenario file (rabi, lz, ramsey, echo, scatter)");
  simulate->add_option("what", which, "experiment")->required()->check(CLI::IsMember({"rabi", "lz", "ramsey", "echo", "scatter"}));
  simulate->add_option("scenario", run_args.scenario, "scenario file")->required();
  add_run_options(simulate, run_args);

  auto* scan = app.add_subcommand("scan", "run a spectroscopic scan (autler-townes, cpt, detuning)");
  scan->add_option("what", which, "scan type")->required()->check(CLI::IsMember({"autler-townes", "cpt", "detuning"}));
  scan->add_option("scenario", run_args.scenario, "scenario file")->required();
  add_run_options(scan, run_args);

  std::string input, time_unit = "s";
  bool analyze_dry = false;
  auto* an = app.add_subcommand("analyze", "analyse a measured trace (rabi, ramsey, decay)");
  an->add_option("what", which, "analysis")->required()->check(CLI::IsMember({"rabi", "ramsey", "decay"}));
  an->add_option("--input", input, "two-column CSV with a header: time, value")->required();
  an->add_option("--time-unit", time_unit, "unit of the time column (s, ms, us, ns)");
  an->add_flag("--dry-run", analyze_dry, "validate the input and print the settings");

  std::string wavelength = "914 nm", angle = "90 deg", table;
  bool trap_dry = false;
  auto* tr = app.add_subcommand("trap", "lattice numbers (magic, recoil, slope)");
  tr->add_option("what", which, "quantity")->required()->check(CLI::IsMember({"magic", "recoil", "slope"}));
  tr->add_option("--wavelength", wavelength, "lattice wavelength with unit, e.g. \"914 nm\"");
  tr->add_option("--angle", angle, "polarisation angle with unit, for slope");
  tr->add_option("--table", table, "polarizability CSV (default: bundled sample)");
  tr->add_flag("--dry-run", trap_dry, "print the resolved inputs only");

  std::string figure, data_dir = FSQ_DATA_DIR;
  auto* rep = app.add_subcommand("reproduce", "run a figure preset and check it against the reference windows");
  rep->add_option("figure", figure, "preset id")->required();
  rep->add_option("--data-dir", data_dir, "directory holding scenarios/ and the atom data");
  add_run_options(rep, run_args);

  std::string verify_dir;
  auto* ver = app.add_subcommand("verify", "recompute the pass flags of a run directory from checks.csv");
  ver->add_option("directory", verify_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      if (which == "rabi") return run_file(run_args, {"rabi", "excitation", "pipeline"}, "");
      if (which == "lz") return run_file(run_args, {"lz"}, "");
      if (which == "scatter") return run_file(run_args, {"scatter"}, "");
      return run_file(run_args, {"coherence"}, which);
    }
    if (scan->parsed()) return run_file(run_args, {which}, "");
    if (an->parsed()) return analyze(which, input, time_unit, analyze_dry);
    if (tr->parsed()) return trap_cmd(which, wavelength, angle, table, trap_dry);
    if (rep->parsed()) {
      const auto path = harness::preset_path(figure, data_dir);
      if (run_args.dry_run) {
        std::cout << harness::describe(harness::load_scenario(path));
        return ok;
      }
      const auto bundle = harness::reproduce(figure, data_dir, settings(run_args));
      print_bundle(bundle);
      std::cout << (bundle.passed() ? "all checks passed" : "some checks FAILED") << "\n";
      return bundle.passed() ? ok : check_failed;
    }
    if (ver->parsed()) {
      const auto bad = harness::recheck(verify_dir);
      for (const auto& b : bad) std::cout << "mismatch: " << b << "\n";
      std::cout << (bad.empty() ? "summary flags match checks.csv" : "summary flags DIFFER from checks.csv") << "\n";
      return bad.empty() ? ok : check_failed;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return config_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_error;
  }
  return ok;
}
