// Acceptance runner: one PASS/FAIL line per criterion.
//   fsq_acceptance                 all criteria
//   fsq_acceptance --criterion 4   one criterion (exit 0 only if it passes)

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "fsq/errors.hpp"
#include "fsq/evolver.hpp"
#include "fsq/harness.hpp"
#include "fsq/units.hpp"

namespace {

using namespace fsq;
using namespace fsq::evolver;

std::filesystem::path g_data = FSQ_DATA_DIR;
std::filesystem::path g_out = "acceptance_runs";

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void expect(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string num(double v) { return harness::format_value(v); }

// Reproduce a preset and copy named checks into the outcome.
harness::Bundle preset(Outcome& o, const std::string& fig, const std::vector<std::string>& checks,
                       harness::RunSettings rs = {}) {
  if (rs.output_dir.empty()) rs.output_dir = g_out / fig;
  const auto b = harness::reproduce(fig, g_data, rs);
  for (const auto& name : checks) {
    const auto* c = b.check(name);
    if (!c) {
      o.expect(false, fig + ": check " + name + " missing");
      continue;
    }
    o.expect(c->pass(), fig + ": " + name + " = " + num(c->value) + " in [" + num(c->low) + ", " + num(c->high) + "]");
  }
  const auto mismatched = harness::recheck(b.directory);
  o.expect(mismatched.empty(), fig + ": summary.json flags recomputed from checks.csv");
  return b;
}

RotatingFrameModel two_level(double rabi, double detuning, double gamma) {
  RotatingFrameModel m;
  m.labels = {"g", "e"};
  m.refs = {atom::ref_g, atom::ref_up};
  m.hamiltonian = Matrix::Zero(2, 2);
  m.hamiltonian(1, 1) = -detuning;
  m.hamiltonian(0, 1) = m.hamiltonian(1, 0) = 0.5 * rabi;
  m.detuning_axes = {{"drive", Eigen::Vector2d(0.0, -1.0)}};
  if (gamma > 0) m.collapse.push_back({0, {{1, cplx(std::sqrt(gamma), 0.0)}}, "e->g"});
  return m;
}

// closed lambda: up - s - down, s decays back into both ground states
RotatingFrameModel lambda(double om_up, double om_down, double delta, double two_photon, double gamma) {
  RotatingFrameModel m;
  m.labels = {"up", "s", "down"};
  m.refs = {atom::ref_up, atom::ref_s, atom::ref_down};
  m.hamiltonian = Matrix::Zero(3, 3);
  m.hamiltonian(1, 1) = -delta;
  m.hamiltonian(2, 2) = -two_photon;
  m.hamiltonian(0, 1) = m.hamiltonian(1, 0) = 0.5 * om_up;
  m.hamiltonian(2, 1) = m.hamiltonian(1, 2) = 0.5 * om_down;
  m.collapse.push_back({0, {{1, cplx(std::sqrt(0.6 * gamma), 0.0)}}, "s->up"});
  m.collapse.push_back({2, {{1, cplx(std::sqrt(0.4 * gamma), 0.0)}}, "s->down"});
  return m;
}

Outcome criterion1() {
  Outcome o;
  // resonant Rabi flop
  const double rabi = units::two_pi * 250e3;
  const auto m = two_level(rabi, 0.0, 0.0);
  std::vector<double> t;
  for (int i = 1; i <= 400; ++i) t.push_back(i * 5.0 * units::two_pi / rabi / 400.0);
  for (Method method : {Method::Propagator, Method::RungeKutta}) {
    EvolveOptions eo;
    eo.method = method;
    const auto tr = evolve(m, DensityMatrix::pure(2, 0), t, eo);
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      worst = std::max(worst, std::abs(tr.populations[i][1] - std::pow(std::sin(rabi * t[i] / 2), 2)));
    }
    o.expect(worst < 1e-6, std::string(method == Method::Propagator ? "propagator" : "Dormand-Prince") +
                               " max |P_e - sin^2(Omega t / 2)| = " + num(worst) + " < 1e-6");
  }

  // trace drift over 1 ms of driven, decaying evolution
  const double gamma = units::two_pi * 11e6;
  const auto lm = lambda(units::two_pi * 5e6, units::two_pi * 4e6, units::two_pi * 20e6, units::two_pi * 0.3e6, gamma);
  const auto tl = two_level(units::two_pi * 5e6, units::two_pi * 2e6, gamma);
  for (Method method : {Method::Propagator, Method::RungeKutta}) {
    EvolveOptions eo;
    eo.method = method;
    const auto tr = evolve(lm, DensityMatrix::pure(3, 0), 1e-3, 11, eo);
    double drift = 0.0;
    for (const auto& p : tr.populations) drift = std::max(drift, std::abs(p[0] + p[1] + p[2] - 1.0));
    o.expect(drift < 1e-8, std::string(method == Method::Propagator ? "propagator" : "Dormand-Prince") +
                               " lambda trace drift over 1 ms = " + num(drift) + " < 1e-8");
  }

  // steady state against long evolution
  for (const auto* model : {&tl, &lm}) {
    const auto ss = steady_state(*model);
    const double horizon = 60.0 / slowest_rate(*model);
    const auto late = evolve_state(*model, DensityMatrix::pure(model->labels.size(), 0), horizon);
    const double d = trace_distance(ss, late);
    o.expect(d < 1e-6, std::to_string(model->labels.size()) + "-level steady state vs evolution to " + num(horizon) +
                           " s: trace distance " + num(d) + " < 1e-6");
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  preset(o, "fig3e", {"rabi_exponent", "rabi_vs_closed_form"});
  return o;
}

Outcome criterion3() {
  Outcome o;
  preset(o, "figS2", {"median_rabi_error", "median_tau_error", "median_cycles"});
  return o;
}

Outcome criterion4() {
  Outcome o;
  preset(o, "figS3", {"scattering_rate", "tau_coefficient", "tau_identity"});
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto b = preset(o, "fig1c", {"lz_max_deviation", "lz_inverted_fidelity"});
  // the validation grid must span 50 .. 400 Hz
  const auto t = harness::read_table(b.directory / "lz_validation.csv");
  const auto hz = t.column("rabi_hz");
  o.expect(*std::min_element(hz.begin(), hz.end()) <= 50.0 && *std::max_element(hz.begin(), hz.end()) >= 400.0,
           "fig1c: Rabi grid covers 2pi x [50, 400] Hz");
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto b = preset(o, "fig2a", {"splitting_accuracy", "calibration_within_sigma"});
  o.expect(b.values.value("columns_above_5_gamma", 0) >= 3, "fig2a: at least 3 powers with Omega >= 5 Gamma_s");
  preset(o, "fig2b", {"splitting_accuracy"});
  return o;
}

Outcome criterion7() {
  Outcome o;
  preset(o, "fig2c", {"cpt_dip_at_resonance", "cpt_fwhm_ratio"});
  return o;
}

Outcome criterion8() {
  Outcome o;
  preset(o, "fig4c",
         {"ramsey_vs_analytic", "echo_static_contrast", "t2_star_simulated", "t2_star_roundtrip", "t2_echo_roundtrip"});
  return o;
}

Outcome criterion9() {
  Outcome o;
  preset(o, "fig3d", {"cycles"});
  return o;
}

Outcome criterion10() {
  Outcome o;
  preset(o, "fig4e", {"magic_angle_914", "magic_angle_1064_found", "recoil_914_khz", "lightshift_slope"});
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion11() {
  Outcome o;
  auto run = [&](const std::string& dir, std::size_t workers) {
    harness::RunSettings rs;
    rs.output_dir = g_out / dir;
    rs.workers = workers;
    rs.timestamp = false;
    std::filesystem::remove_all(rs.output_dir);
    return harness::reproduce("fig3d", g_data, rs);
  };
  const auto a = run("fig3d_run1", 1);
  const auto b = run("fig3d_run2", 1);
  const auto c = run("fig3d_workers3", 3);
  std::size_t csv = 0;
  bool same_ab = true, same_ac = true;
  for (const auto& f : a.files) {
    if (std::filesystem::path(f).extension() != ".csv") continue;
    ++csv;
    const auto ref = slurp(a.directory / f);
    same_ab = same_ab && ref == slurp(b.directory / f);
    same_ac = same_ac && ref == slurp(c.directory / f);
    o.lines.push_back("     " + f + " sha256 " + harness::sha256_hex(ref).substr(0, 16));
  }
  o.expect(csv >= 3, "fig3d wrote " + std::to_string(csv) + " CSV files");
  o.expect(same_ab, "same seed, same workers: byte-identical CSVs");
  o.expect(same_ac, "1 worker vs 3 workers: byte-identical CSVs");
  o.expect(a.values == c.values, "summary values independent of worker count");
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
    {"master-equation correctness", criterion1},
    {"effective-model oracle (fig3e)", criterion2},
    {"pipeline round trip (figS2)", criterion3},
    {"scattering physics (figS3)", criterion4},
    {"Landau-Zener (fig1c)", criterion5},
    {"Autler-Townes (fig2a, fig2b)", criterion6},
    {"CPT (fig2c)", criterion7},
    {"coherence scans (fig4c)", criterion8},
    {"ensemble saturation (fig3d)", criterion9},
    {"trap module (fig4e)", criterion10},
    {"reproducibility (fig3d)", criterion11},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  bool verbose = false;
  std::string out = g_out.string(), data = g_data.string();
  app.add_option("--criterion", only, "run only this criterion")->check(CLI::Range(1, 11));
  app.add_option("--out", out, "directory for run bundles");
  app.add_option("--data-dir", data, "data directory with scenarios/");
  app.add_flag("-v,--verbose", verbose, "print every sub-check");
  CLI11_PARSE(app, argc, argv);
  g_out = out;
  g_data = data;

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.expect(false, std::string("exception: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[160];
    std::snprintf(head, sizeof head, "criterion %2d %s  %s  (%.1f s)", id, r.pass ? "PASS" : "FAIL",
                  criteria[i].first.c_str(), s);
    std::cout << head << "\n";
    if (verbose || !r.pass || only) {
      for (const auto& l : r.lines) std::cout << "    " << l << "\n";
    }
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
