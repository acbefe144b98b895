#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fsq/atom.hpp"
#include "fsq/closedform.hpp"
#include "fsq/dsp.hpp"
#include "fsq/errors.hpp"
#include "fsq/harness.hpp"
#include "fsq/parallel.hpp"
#include "fsq/rates.hpp"
#include "fsq/rng.hpp"
#include "fsq/sequences.hpp"
#include "fsq/trap.hpp"
#include "fsq/units.hpp"
#include "run_context.hpp"

namespace fsq::harness {

namespace {

using detail::RunContext;
using namespace fsq::sequences;

constexpr double nan = std::numeric_limits<double>::quiet_NaN();
constexpr double inf = std::numeric_limits<double>::infinity();

const std::vector<std::string> preset_ids = {"fig1c", "fig2a", "fig2b", "fig2c", "fig3d", "fig3e",
                                             "fig4c", "fig4e", "figS1", "figS2", "figS3"};

bool is_preset(const std::string& name) {
  return std::find(preset_ids.begin(), preset_ids.end(), name) != preset_ids.end();
}

std::string line_of(const config::Config& cfg, std::string_view section, std::string_view key) {
  const auto* e = cfg.find(section, key);
  return cfg.source() + (e ? ":" + std::to_string(e->line) : "");
}

std::filesystem::path resolve(const Scenario& s, const std::string& file) {
  std::filesystem::path p(file);
  if (p.is_relative()) p = s.base_directory() / p;
  if (!std::filesystem::exists(p)) throw ConfigError("file '" + file + "' not found (looked for " + p.string() + ")");
  return p.lexically_normal();
}

atom::AtomData scenario_atom(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  atom::AtomData a = atom::strontium88();
  if (cfg.has("atom", "file")) {
    const auto p = resolve(ctx.scenario, cfg.text("atom", "file"));
    ctx.input(p);
    a = atom::load_atom_data(p);
  }
  if (cfg.has("atom", "magnetic_field")) a.magnetic.field_gauss = cfg.number("atom", "magnetic_field");
  return a;
}

driven::Elimination elimination(const config::Config& cfg) {
  const auto mode = cfg.text_or("raman", "elimination", "auto");
  if (mode == "auto") return driven::Elimination::Auto;
  if (mode == "full") return driven::Elimination::ForceFull;
  if (mode == "effective") return driven::Elimination::ForceEffective;
  throw ConfigError(line_of(cfg, "raman", "elimination") + ": elimination must be auto, full or effective");
}

RunOptions base_run(RunContext& ctx, const atom::AtomData& atom) {
  const auto& cfg = ctx.scenario.config;
  RunOptions o;
  o.atom = atom;
  o.model.elimination = elimination(cfg);
  o.model.scattering = cfg.flag_or("raman", "scattering", true);
  o.workers = ctx.workers;
  return o;
}

driven::RamanConfig raman(const config::Config& cfg) {
  return driven::RamanConfig::make(cfg.number("raman", "rabi_up"), cfg.number("raman", "rabi_down"),
                                   cfg.number("raman", "detuning"), cfg.number_or("raman", "two_photon_detuning", 0.0));
}

dsp::ExtractOptions extract_options(const config::Config& cfg) {
  dsp::ExtractOptions o;
  o.band_fraction = cfg.number_or("analysis", "band_fraction", o.band_fraction);
  o.lorentzian_half_window = static_cast<std::size_t>(
      cfg.count_or("analysis", "half_window", static_cast<long>(o.lorentzian_half_window)));
  o.fit_loss = cfg.flag_or("analysis", "fit_loss", o.fit_loss);
  return o;
}

std::size_t sample_count(const config::Config& cfg, double duration, double step) {
  const double n = std::round(duration / step);
  if (n < 8 || n > 5e6) {
    throw ConfigError(line_of(cfg, "trace", "step") + ": trace needs between 8 and 5e6 samples, got " +
                      format_value(n));
  }
  return static_cast<std::size_t>(n);
}

Series line(std::string label, std::vector<double> x, std::vector<double> y) {
  Series s;
  s.label = std::move(label);
  s.x = std::move(x);
  s.y = std::move(y);
  return s;
}

Series points(std::string label, std::vector<double> x, std::vector<double> y, Marker m = Marker::Circle,
              std::vector<double> err = {}) {
  Series s = line(std::move(label), std::move(x), std::move(y));
  s.line = false;
  s.marker = m;
  s.yerr = std::move(err);
  return s;
}

std::vector<double> scaled(const std::vector<double>& v, double factor) {
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(x * factor);
  return out;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  if (at <= x.front()) return y.front();
  if (at >= x.back()) return y.back();
  const auto k = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), at) - x.begin()) - 1;
  const double w = (at - x[k]) / (x[k + 1] - x[k]);
  return y[k] + w * (y[k + 1] - y[k]);
}

// ------------------------------------------------------------ Landau-Zener

void run_lz(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto opts = base_run(ctx, scenario_atom(ctx));
  const auto rabis = cfg.list("lz", "rabi");
  const double range = cfg.number("lz", "sweep_range");
  const double ramp = cfg.number("lz", "ramp");
  if (!(ramp > 0.0 && range > 0.0)) throw ConfigError(line_of(cfg, "lz", "ramp") + ": ramp and range must be > 0");
  const double duration = range / ramp;
  const double range_hz = units::to_hz(range);
  const double target = cfg.number_or("lz", "target_fidelity", 0.975);
  const double hz_per_ms = units::hz * 1e3;

  const auto sims = parallel_map<LandauZener>(
      rabis.size() + 1,
      [&](std::size_t i) {
        const double om = i < rabis.size() ? rabis[i] : closedform::lz_rabi_for_fidelity(target, ramp);
        RunOptions o = opts;
        o.workers = 1;
        return landau_zener(om, range_hz, duration, o);
      },
      ctx.workers);

  Table val{{"rabi_hz", "fidelity", "analytic", "difference"}, {}};
  double worst = 0.0;
  for (std::size_t i = 0; i < rabis.size(); ++i) {
    const auto& r = sims[i];
    if (!r.warning.empty()) ctx.warn("Rabi " + format_value(units::to_hz(rabis[i])) + " Hz: " + r.warning);
    val.add({units::to_hz(rabis[i]), r.fidelity, r.analytic, r.fidelity - r.analytic});
    worst = std::max(worst, std::abs(r.fidelity - r.analytic));
  }
  ctx.table("lz_validation.csv", val);

  const double inverted = closedform::lz_rabi_for_fidelity(target, ramp);
  const auto& inv = sims.back();
  Table invt{{"rabi_hz", "ramp_hz_per_ms", "sweep_range_hz", "fidelity", "analytic"}, {}};
  invt.add({units::to_hz(inverted), ramp / hz_per_ms, range_hz, inv.fidelity, inv.analytic});
  ctx.table("lz_inverted.csv", invt);
  ctx.bundle.values["inverted_rabi_hz"] = units::to_hz(inverted);
  ctx.bundle.values["sweep_duration_s"] = duration;

  // dense analytic curve
  const double lo = *std::min_element(rabis.begin(), rabis.end());
  const double hi = *std::max_element(rabis.begin(), rabis.end());
  std::vector<double> cx, cy;
  for (double om : linspace(lo, hi, 60)) {
    cx.push_back(units::to_hz(om));
    cy.push_back(closedform::lz_probability(om, ramp));
  }
  ctx.plot("lz_fidelity.svg",
           {line("1 - exp(-pi Omega^2 / 2 alpha)", cx, cy),
            points("simulation", val.column("rabi_hz"), val.column("fidelity")),
            points("inverted Omega", {units::to_hz(inverted)}, {inv.fidelity}, Marker::Diamond)},
           {"Landau-Zener transfer at " + format_value(ramp / hz_per_ms) + " Hz/ms", {"Rabi frequency", "Hz"},
            {"transfer probability", ""}});

  if (cfg.has("lz", "panel_range") && cfg.has("lz", "panel_ramps")) {
    const double prange = cfg.number("lz", "panel_range");
    const auto pramps = cfg.list("lz", "panel_ramps");
    const auto panel = parallel_map<LandauZener>(
        pramps.size(),
        [&](std::size_t i) {
          RunOptions o = opts;
          o.workers = 1;
          return landau_zener(inverted, units::to_hz(prange), prange / pramps[i], o);
        },
        ctx.workers);
    Table pt{{"ramp_hz_per_ms", "duration_ms", "fidelity", "analytic"}, {}};
    for (std::size_t i = 0; i < pramps.size(); ++i) {
      pt.add({pramps[i] / hz_per_ms, 1e3 * prange / pramps[i], panel[i].fidelity, panel[i].analytic});
    }
    ctx.table("lz_panel.csv", pt);
    ctx.plot("lz_panel.svg",
             {points("simulation", pt.column("ramp_hz_per_ms"), pt.column("fidelity")),
              line("analytic", pt.column("ramp_hz_per_ms"), pt.column("analytic"))},
             {"sweep over " + format_value(units::to_hz(prange)) + " Hz at the inverted Rabi frequency",
              {"ramp", "Hz/ms", true},
              {"transfer probability", ""}});
  }

  if (ctx.preset) {
    ctx.check("lz_max_deviation", worst, 0.0, 0.005, "|simulation - analytic| <= 0.5 % over the Rabi list");
    ctx.check("lz_inverted_fidelity", inv.fidelity, target - 0.002, target + 0.002,
              "inverted-Omega transfer 97.5 % +- 0.2 %");
  }
}

// ---------------------------------------------------------- Autler-Townes

void run_autler_townes(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  AutlerTownesOptions o;
  o.run = base_run(ctx, atom);
  o.probe_rabi = cfg.number_or("probe", "rabi", 0.0);
  o.duration = cfg.number_or("probe", "duration", o.duration);
  o.exchange_roles = cfg.flag_or("probe", "exchange_roles", false);
  const double calibration = cfg.number("probe", "calibration");
  const double calib_mhz = calibration / units::mhz;
  const double noise = cfg.number_or("probe", "noise", 0.0);
  const auto powers = cfg.list("scan", "powers");
  const double start = cfg.number("scan", "start"), stop = cfg.number("scan", "stop"), step = cfg.number("scan", "step");
  if (!(stop > start) || !(step > 0.0)) throw ConfigError(line_of(cfg, "scan", "step") + ": need start < stop and step > 0");
  const auto n = static_cast<std::size_t>(std::llround((stop - start) / step)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < n; ++i) grid.push_back(start + step * static_cast<double>(i));

  const auto scan = autler_townes_scan(powers, grid, calib_mhz, o);
  const double gamma = atom.decay.gamma_s;

  Table spectra;
  spectra.columns = {"detuning_mhz"};
  for (double p : powers) spectra.columns.push_back("signal_" + format_value(p) + "mW");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> row{grid[i] / units::mhz};
    for (const auto& c : scan.columns) row.push_back(c.signal[i]);
    spectra.add(row);
  }
  ctx.table("spectra.csv", spectra);

  // Synthetic measurement: Gaussian noise relative to each column's peak.
  const CounterRng root(ctx.seed);
  std::vector<std::vector<double>> noisy(scan.columns.size());
  std::vector<std::optional<dsp::FitResult>> noisy_fit(scan.columns.size());
  Table split{{"power_mw", "dressing_mhz", "splitting_mhz", "splitting_sigma_mhz", "relative_error", "noisy_splitting_mhz",
               "noisy_sigma_mhz"},
              {}};
  double worst = 0.0;
  std::size_t strong = 0;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < scan.columns.size(); ++k) {
    const auto& c = scan.columns[k];
    if (!c.note.empty()) ctx.warn(format_value(c.power_mw) + " mW: " + c.note);
    const double peak = *std::max_element(c.signal.begin(), c.signal.end());
    const auto r = root.split(k);
    noisy[k] = c.signal;
    for (std::size_t i = 0; i < grid.size(); ++i) noisy[k][i] += noise * peak * r.normal(i);
    double w = nan, ws = nan;
    if (c.splitting && noise > 0.0) {
      try {
        noisy_fit[k] = fit_autler_townes(grid, noisy[k], c.dressing_rabi, gamma);
        w = noisy_fit[k]->value("splitting") / units::mhz;
        ws = noisy_fit[k]->error("splitting") / units::mhz;
        const double x = std::sqrt(c.power_mw);
        sxx += x * x / (ws * ws);
        sxy += x * w / (ws * ws);
      } catch (const FitError& e) {
        ctx.warn(format_value(c.power_mw) + " mW noisy fit failed: " + e.what());
      }
    }
    const double rel = c.splitting ? *c.splitting / c.dressing_rabi - 1.0 : nan;
    if (c.splitting && c.dressing_rabi >= 5.0 * gamma) {
      worst = std::max(worst, std::abs(rel));
      ++strong;
    }
    split.add({c.power_mw, c.dressing_rabi / units::mhz, c.splitting ? *c.splitting / units::mhz : nan,
               c.splitting ? c.splitting_sigma / units::mhz : nan, rel, w, ws});
  }
  ctx.table("splittings.csv", split);
  ctx.bundle.values["gamma_s_mhz"] = gamma / units::mhz;
  ctx.bundle.values["columns_above_5_gamma"] = strong;

  std::optional<double> slope, slope_sigma;
  if (noise > 0.0 && sxx > 0.0) {
    slope = sxy / sxx;
    slope_sigma = 1.0 / std::sqrt(sxx);
    Table cal{{"slope_mhz_per_sqrt_mw", "slope_sigma", "truth", "z"}, {}};
    cal.add({*slope, *slope_sigma, calib_mhz, (*slope - calib_mhz) / *slope_sigma});
    ctx.table("calibration.csv", cal);
    ctx.bundle.values["calibration_mhz_per_sqrt_mw"] = *slope;
    ctx.bundle.values["calibration_sigma"] = *slope_sigma;
  }

  // example spectrum closest to the requested power
  const double example = cfg.number_or("probe", "example_power", powers[powers.size() / 2]);
  std::size_t ex = 0;
  for (std::size_t k = 0; k < powers.size(); ++k) {
    if (std::abs(powers[k] - example) < std::abs(powers[ex] - example)) ex = k;
  }
  const auto gx = scaled(grid, 1.0 / units::mhz);
  std::vector<Series> sp{points("simulated signal", gx, noise > 0.0 ? noisy[ex] : scan.columns[ex].signal)};
  const auto& exfit = noise > 0.0 ? noisy_fit[ex] : scan.columns[ex].fit;
  if (exfit) {
    std::vector<double> fy;
    for (double d : grid) {
      fy.push_back(autler_townes_lineshape(d, exfit->value("center"), exfit->value("splitting"), exfit->value("width"),
                                           exfit->value("amplitude"), exfit->value("offset")));
    }
    sp.push_back(line("EIT-type fit", gx, fy));
  }
  ctx.plot("spectrum.svg", sp,
           {"probe spectrum at " + format_value(powers[ex]) + " mW dressing power", {"probe detuning", "MHz"},
            {o.exchange_roles ? "3S1 population (from down)" : "3S1 population (from up)", ""}});

  std::vector<double> rootp, wv, we, fx, fy;
  for (std::size_t k = 0; k < scan.columns.size(); ++k) {
    const auto& row = split.rows[k];
    const double w = noise > 0.0 ? row[5] : row[2];
    const double e = noise > 0.0 ? row[6] : row[3];
    if (std::isnan(w)) continue;
    rootp.push_back(std::sqrt(powers[k]));
    wv.push_back(w);
    we.push_back(e);
  }
  if (!rootp.empty()) {
    std::vector<Series> ss{points("extracted splitting", rootp, wv, Marker::Circle, we)};
    fx = linspace(0.0, *std::max_element(rootp.begin(), rootp.end()), 2);
    for (double x : fx) fy.push_back((slope ? *slope : calib_mhz) * x);
    ss.push_back(line(slope ? "fit Omega = c sqrt(P)" : "calibration", fx, fy));
    ctx.plot("calibration.svg", ss, {"Autler-Townes calibration", {"sqrt(power)", "sqrt(mW)"}, {"splitting", "MHz"}});
  }

  if (ctx.preset) {
    ctx.check("splitting_accuracy", strong ? worst : nan, 0.0, 0.02,
              "|splitting / Omega - 1| <= 2 % for Omega >= 5 Gamma_s");
    if (slope) {
      ctx.check("calibration_within_sigma", std::abs(*slope - calib_mhz) / *slope_sigma, 0.0, 1.0,
                "fitted slope within one fit sigma of the generating calibration");
    }
  }
}

// ------------------------------------------------------------------- CPT

void run_cpt(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const double up = cfg.number("cpt", "calibration_up") * std::sqrt(cfg.number("cpt", "power_up"));
  const double down = cfg.number("cpt", "calibration_down") * std::sqrt(cfg.number("cpt", "power_down"));
  const double span = cfg.number("cpt", "span");
  const auto points_n = static_cast<std::size_t>(cfg.count_or("cpt", "points", 81));
  if (points_n % 2 == 0) throw ConfigError(line_of(cfg, "cpt", "points") + ": points must be odd so delta = 0 is sampled");
  std::vector<double> grid = linspace(-0.5 * span, 0.5 * span, points_n);
  grid[points_n / 2] = 0.0;

  CptOptions o;
  o.run = base_run(ctx, atom);
  o.one_photon_detuning = cfg.number_or("cpt", "one_photon_detuning", 0.0);
  o.ground_dephasing = cfg.number_or("cpt", "dephasing", 0.0);
  const auto s = cpt_scan(up, down, grid, o);
  CptOptions clean = o;
  clean.ground_dephasing = 0.0;
  const double dip = o.ground_dephasing > 0.0 ? cpt_scan(up, down, {0.0}, clean)[0] : s[points_n / 2];

  const auto dx = scaled(grid, 1.0 / units::hz);
  const auto fit = dsp::fit_lorentzian(dx, s);
  Table t{{"delta_hz", "s_population", "lorentzian"}, {}};
  std::vector<double> fy;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    fy.push_back(dsp::lorentzian(dx[i], fit.value("center"), fit.value("fwhm"), fit.value("amplitude"),
                                 fit.value("offset")));
    t.add({dx[i], s[i], fy.back()});
  }
  ctx.table("cpt.csv", t);
  Table r{{"rabi_up_khz", "rabi_down_khz", "fwhm_hz", "fwhm_sigma_hz", "dip_no_dephasing", "power_broadened_hz"}, {}};
  const double estimate = units::to_hz((up * up + down * down) / atom.decay.gamma_s);
  r.add({up / units::khz, down / units::khz, fit.value("fwhm"), fit.error("fwhm"), dip, estimate});
  ctx.table("cpt_fit.csv", r);
  ctx.bundle.values["fwhm_hz"] = fit.value("fwhm");
  ctx.bundle.values["power_broadened_estimate_hz"] = estimate;

  ctx.plot("cpt.svg", {points("3S1 population", dx, s), line("Lorentzian fit", dx, fy)},
           {"dark resonance", {"two-photon detuning", "Hz"}, {"3S1 population", ""}});
  if (ctx.preset) {
    ctx.check("cpt_dip_at_resonance", std::abs(dip), 0.0, 1e-8, "dark state: zero excitation at delta = 0 without dephasing");
    ctx.check("cpt_fwhm_ratio", fit.value("fwhm") / 710.0, 1.0 / 3.0, 3.0, "FWHM within a factor 3 of 0.71 kHz");
  }
}

// ------------------------------------------------------------------ Rabi

struct RabiRun {
  std::vector<double> t;
  std::vector<double> y;
  dsp::RabiExtraction ex;
};

void write_extraction(RunContext& ctx, const dsp::Trace& trace, const dsp::RabiExtraction& ex, const std::string& prefix) {
  const auto spec = dsp::fft_spectrum(trace);
  const double f0 = ex.spectrum_fit.value("center");
  const auto& sf = ex.spectrum_fit;
  Table st{{"frequency_khz", "magnitude", "lorentzian"}, {}};
  for (std::size_t i = 0; i < spec.frequency.size() && spec.frequency[i] <= 3.0 * f0; ++i) {
    st.add({spec.frequency[i] / 1e3, spec.magnitude[i],
            dsp::lorentzian(spec.frequency[i], f0, sf.value("fwhm"), sf.value("amplitude"), sf.value("offset"))});
  }
  ctx.table(prefix + "spectrum.csv", st);
  const double a = ex.envelope_fit.amplitude;
  Table et{{"t_us", "filtered", "envelope", "envelope_fit", "valid"}, {}};
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double t = trace.time(i);
    et.add({t / units::us, ex.filtered.y[i], ex.envelope.envelope.y[i],
            ex.non_decaying ? a : a * std::exp(-t / ex.tau), ex.envelope.valid(i) ? 1.0 : 0.0});
  }
  ctx.table(prefix + "envelope.csv", et);
  const auto fk = st.column("frequency_khz");
  ctx.plot(prefix + "spectrum.svg",
           {points("FFT magnitude", fk, st.column("magnitude"), Marker::Circle),
            line("Lorentzian fit", fk, st.column("lorentzian"))},
           {"Fourier spectrum", {"frequency", "kHz"}, {"amplitude", ""}});
  const auto tu = et.column("t_us");
  ctx.plot(prefix + "envelope.svg",
           {line("band-passed", tu, et.column("filtered")), line("Hilbert envelope", tu, et.column("envelope")),
            line("exponential fit", tu, et.column("envelope_fit"))},
           {"band-pass and envelope", {"time", "us"}, {"signal", ""}});
}

void run_rabi(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const auto rc = raman(cfg);
  const double duration = cfg.number("trace", "duration");
  const double step = cfg.number("trace", "step");
  const std::size_t n = sample_count(cfg, duration, step);
  const std::string readout = cfg.text_or("trace", "readout", "up");

  PulseSequence seq;
  seq.initial = cfg.text_or("trace", "initial", "up");
  seq.fields = raman_fields(rc);
  seq.segments = {ConstantDrive{{}, static_cast<double>(n) * step}};
  seq.readout = {readout};
  RunOptions o = base_run(ctx, atom);
  o.samples_per_segment = n;
  o.workers = 1;
  validate(seq, o);

  EnsembleSpec es;
  es.rabi_spread = cfg.number_or("ensemble", "rabi_spread", 0.0);
  es.detuning_spread = cfg.number_or("ensemble", "detuning_spread", 0.0);
  es.samples = static_cast<std::size_t>(cfg.count_or("ensemble", "samples", 1));
  es.quadrature = cfg.flag_or("ensemble", "quadrature", false);
  es.seed = ctx.seed;
  auto y = ensemble_average(
      es,
      [&](const EnsembleDraw& d) {
        const auto r = run(seq, o, Perturbation{d.rabi_scale, d.detuning_offset, nullptr});
        std::vector<double> col;
        for (const auto& row : r.trajectory.populations) col.push_back(row[0]);
        return col;
      },
      ctx.workers);
  const double noise = cfg.number_or("trace", "noise", 0.0);
  if (noise > 0.0) {
    // separate stream from the ensemble draws
    const CounterRng r = CounterRng(ctx.seed).split(1'000'003);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise * r.normal(i);
  }
  dsp::Trace tr;
  tr.dt = step;
  tr.t0 = 0.0;
  tr.y = y;
  const auto ex = dsp::extract_rabi(tr, extract_options(cfg));
  for (const auto& w : ex.warnings) ctx.warn(w);

  const double closed = closedform::raman_rabi(rc.up_field.rabi, rc.down_field.rabi, rc.one_photon_detuning()).value;
  double off = 0.5, amp = 0.0, rate = 0.0;
  if (ex.loss_fit) {
    off = ex.loss_fit->value("offset") + 0.5;
    amp = ex.loss_fit->value("amplitude");
    rate = ex.loss_fit->value("rate");
  }
  Table trace{{"t_us", "population", "model"}, {}};
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.time(i);
    const double env = ex.non_decaying ? 1.0 : std::exp(-t / ex.tau);
    const double sign = readout == "down" ? -1.0 : 1.0;
    trace.add({t / units::us, y[i], off + sign * 0.5 * std::cos(ex.rabi * t) * env + amp * std::expm1(-rate * t)});
  }
  ctx.table("trace.csv", trace);
  Table res{{"rabi_khz", "rabi_sigma_khz", "tau_us", "tau_sigma_us", "cycles", "cycles_sigma", "closed_form_rabi_khz",
             "members"},
            {}};
  res.add({ex.rabi / units::khz, ex.rabi_sigma / units::khz, ex.tau / units::us, ex.tau_sigma / units::us, ex.cycles,
           ex.cycles_sigma, closed / units::khz, static_cast<double>(es.samples)});
  ctx.table("results.csv", res);
  ctx.bundle.values["rabi_khz"] = ex.rabi / units::khz;
  ctx.bundle.values["tau_us"] = ex.tau / units::us;
  ctx.bundle.values["cycles"] = ex.cycles;
  write_extraction(ctx, tr, ex, "");

  const auto tu = trace.column("t_us");
  ctx.plot("trace.svg", {line("simulated " + readout, tu, y), line("damped model", tu, trace.column("model"))},
           {"Rabi oscillation", {"time", "us"}, {readout + " population", ""}});
  if (ctx.preset) {
    ctx.check("cycles", ex.cycles, 40.0, 80.0, "pipeline cycles in [40, 80] (about 69 observed)");
  }
}

// --------------------------------------------------------- detuning scan

void run_detuning(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const double up = cfg.number("raman", "rabi_up"), down = cfg.number("raman", "rabi_down");
  const auto deltas = cfg.list("scan", "detunings");
  const double periods = static_cast<double>(cfg.count_or("scan", "periods", 400));
  const double per = static_cast<double>(cfg.count_or("scan", "samples_per_period", 40));
  const double decays = static_cast<double>(cfg.count_or("scan", "decay_times", 3));
  const double gamma = atom.decay.gamma_s;
  const auto opts = base_run(ctx, atom);

  struct Row {
    double rabi, rabi_sigma, tau, tau_sigma, cycles, closed, tau_max;
  };
  const auto rows = parallel_map<Row>(
      deltas.size(),
      [&](std::size_t k) {
        const double d = deltas[k];
        if (d == 0.0) throw ConfigError(line_of(cfg, "scan", "detunings") + ": detuning 0 in a Raman scan");
        const double closed = closedform::raman_rabi(up, down, d).value;
        const double tmax = closedform::max_decay_time(up, d, gamma);
        const double period = units::two_pi / closed;
        const double dt = period / per;
        double window = periods * period;
        if (std::isfinite(tmax) && decays > 0) window = std::min(window, decays * tmax);
        const auto n = static_cast<std::size_t>(std::ceil(window / dt));
        PulseSequence seq;
        seq.initial = "up";
        seq.fields = raman_fields(driven::RamanConfig::make(up, down, d));
        seq.segments = {ConstantDrive{{}, static_cast<double>(n) * dt}};
        seq.readout = {"up"};
        RunOptions o = opts;
        o.samples_per_segment = n;
        o.workers = 1;
        const auto r = run(seq, o);
        dsp::Trace tr;
        tr.dt = dt;
        for (const auto& row : r.trajectory.populations) tr.y.push_back(row[0]);
        const auto ex = dsp::extract_rabi(tr, extract_options(cfg));
        return Row{ex.rabi, ex.rabi_sigma, ex.tau, ex.tau_sigma, ex.cycles, closed, tmax};
      },
      ctx.workers);

  Table t{{"detuning_ghz", "rabi_khz", "rabi_sigma_khz", "closed_form_rabi_khz", "relative_error", "tau_us",
           "tau_sigma_us", "tau_max_us", "cycles", "cycles_scattering_limit", "detuning_over_rabi"},
          {}};
  std::vector<double> lx, ly;
  double worst = 0.0;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const auto& r = rows[k];
    const double ratio = std::abs(deltas[k]) / std::max(up, down);
    const double rel = r.rabi / r.closed - 1.0;
    if (ratio >= 50.0) worst = std::max(worst, std::abs(rel));
    t.add({deltas[k] / units::ghz, r.rabi / units::khz, r.rabi_sigma / units::khz, r.closed / units::khz, rel,
           r.tau / units::us, r.tau_sigma / units::us, r.tau_max / units::us, r.cycles,
           closedform::cycles(r.closed, r.tau_max), ratio});
    lx.push_back(std::log(std::abs(deltas[k])));
    ly.push_back(std::log(r.rabi));
  }
  ctx.table("detuning_scan.csv", t);
  const auto fit = dsp::fit_linear(lx, ly);
  Table ft{{"exponent", "exponent_sigma", "intercept"}, {}};
  ft.add({fit.value("slope"), fit.error("slope"), fit.value("intercept")});
  ctx.table("exponent.csv", ft);
  ctx.bundle.values["exponent"] = fit.value("slope");
  ctx.bundle.values["exponent_sigma"] = fit.error("slope");

  std::vector<double> ad;
  for (double d : deltas) ad.push_back(std::abs(d) / units::ghz);
  std::vector<double> fx = linspace(*std::min_element(ad.begin(), ad.end()), *std::max_element(ad.begin(), ad.end()), 40);
  std::vector<double> fy;
  for (double x : fx) fy.push_back(std::exp(fit.value("intercept") + fit.value("slope") * std::log(x * units::ghz)) / units::khz);
  ctx.plot("rabi.svg", {points("extracted", ad, t.column("rabi_khz"), Marker::Square), line("power-law fit", fx, fy)},
           {"Rabi frequency", {"|detuning|", "GHz", true}, {"Rabi frequency", "kHz", true}});
  ctx.plot("tau.svg",
           {points("envelope decay", ad, t.column("tau_us"), Marker::Circle),
            line("scattering limit", ad, t.column("tau_max_us"))},
           {"decay time", {"|detuning|", "GHz"}, {"tau", "us"}});
  ctx.plot("cycles.svg",
           {points("Omega tau / 2 pi", ad, t.column("cycles"), Marker::Circle),
            line("scattering limit", ad, t.column("cycles_scattering_limit"))},
           {"cycles", {"|detuning|", "GHz"}, {"cycles", ""}});
  if (ctx.preset) {
    ctx.check("rabi_exponent", fit.value("slope"), -1.02, -0.98, "Omega ~ 1/Delta, exponent -1.00 +- 0.02");
    ctx.check("rabi_vs_closed_form", worst, 0.0, 0.01, "extracted Omega within 1 % of Omega_up Omega_down / 2|Delta|");
  }
}

// ------------------------------------------------------------- coherence

void run_coherence(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const std::string part = ctx.settings.part;
  const bool do_ramsey = part.empty() || part == "ramsey";
  const bool do_echo = part.empty() || part == "echo";
  const auto nph = static_cast<std::size_t>(cfg.count_or("coherence", "phases", 12));
  std::vector<double> phases;
  for (std::size_t i = 0; i < nph; ++i) phases.push_back(units::two_pi * static_cast<double>(i) / static_cast<double>(nph));

  CoherenceOptions base;
  base.run = base_run(ctx, atom);
  base.raman = raman(cfg);
  const double t2s = cfg.number("coherence", "t2_star");
  const double sigma = std::sqrt(2.0) / t2s;
  const auto nodes = static_cast<std::size_t>(cfg.count_or("coherence", "nodes", 40));
  CoherenceOptions stat = base;
  stat.ensemble = {0.0, sigma, nodes, ctx.seed, true};

  std::vector<Series> plot;
  std::vector<double> ramsey_t, ramsey_c;
  if (do_ramsey) {
    ramsey_t = cfg.list("coherence", "ramsey_times");
    Table t{{"time_ms", "contrast", "contrast_sigma", "analytic", "relative_deviation"}, {}};
    double worst = 0.0;
    for (double T : ramsey_t) {
      const auto c = phase_contrast(phases, ramsey_phase_scan(T, phases, stat));
      const double an = std::exp(-0.5 * sigma * sigma * T * T);
      t.add({T / units::ms, c.value, c.sigma, an, c.value / an - 1.0});
      worst = std::max(worst, std::abs(c.value / an - 1.0));
      ramsey_c.push_back(c.value);
    }
    ctx.table("ramsey.csv", t);
    const auto fit = dsp::fit_gaussian_decay(ramsey_t, ramsey_c);
    Table ft{{"t2_star_ms", "t2_star_sigma_ms", "c0", "preset_ms", "relative_error"}, {}};
    ft.add({fit.value("t2") / units::ms, fit.error("t2") / units::ms, fit.value("c0"), t2s / units::ms,
            fit.value("t2") / t2s - 1.0});
    ctx.table("ramsey_fit.csv", ft);
    ctx.bundle.values["t2_star_ms"] = fit.value("t2") / units::ms;
    const auto tm = scaled(ramsey_t, 1.0 / units::ms);
    plot.push_back(points("Ramsey", tm, ramsey_c, Marker::Circle));
    std::vector<double> fx, fy;
    for (double x : linspace(std::log(ramsey_t.front()), std::log(ramsey_t.back()), 60)) {
      fx.push_back(std::exp(x) / units::ms);
      fy.push_back(fit.value("c0") * std::exp(-std::pow(std::exp(x) / fit.value("t2"), 2)));
    }
    plot.push_back(line("Gaussian fit T2* = " + format_value(fit.value("t2") / units::ms) + " ms", fx, fy));
    if (ctx.preset) {
      ctx.check("ramsey_vs_analytic", worst, 0.0, 0.01, "Ramsey contrast within 1 % of exp(-(sigma T)^2 / 2)");
      ctx.check("t2_star_simulated", std::abs(fit.value("t2") / t2s - 1.0), 0.0, 1e-3,
                "Gaussian fit of the simulated Ramsey contrast recovers T2* within 1e-3");
    }
  }

  if (do_echo) {
    const double t2e = cfg.number("coherence", "t2_echo");
    if (cfg.has("coherence", "static_echo_times")) {
      const auto ts = cfg.list("coherence", "static_echo_times");
      Table t{{"time_ms", "contrast", "ramsey_analytic"}, {}};
      double lowest = inf;
      for (double T : ts) {
        const auto c = phase_contrast(phases, spin_echo_scan(T, phases, stat));
        t.add({T / units::ms, c.value, std::exp(-0.5 * sigma * sigma * T * T)});
        lowest = std::min(lowest, c.value);
      }
      ctx.table("echo_static.csv", t);
      if (ctx.preset) {
        ctx.check("echo_static_contrast", lowest, 1.0 - 1e-6, 1.0 + 1e-6,
                  "echo restores contrast to 1 - 1e-6 under a purely static spread");
      }
    }
    if (cfg.has("coherence", "echo_times") && cfg.has("noise", "sigma")) {
      const auto te = cfg.list("coherence", "echo_times");
      CoherenceOptions dyn = base;
      dyn.ensemble = {0.0, 0.0, static_cast<std::size_t>(cfg.count_or("coherence", "members", 200)), ctx.seed, false};
      dyn.noise = OUNoise{cfg.number("noise", "sigma"), cfg.number("noise", "correlation_time"), cfg.number("noise", "step")};
      Table t{{"time_ms", "contrast", "contrast_sigma"}, {}};
      std::vector<double> ec;
      for (double T : te) {
        const auto c = phase_contrast(phases, spin_echo_scan(T, phases, dyn));
        t.add({T / units::ms, c.value, c.sigma});
        ec.push_back(c.value);
      }
      ctx.table("echo.csv", t);
      const auto fit = dsp::fit_gaussian_decay(te, ec);
      Table ft{{"t2_echo_ms", "t2_echo_sigma_ms", "c0", "preset_ms"}, {}};
      ft.add({fit.value("t2") / units::ms, fit.error("t2") / units::ms, fit.value("c0"), t2e / units::ms});
      ctx.table("echo_fit.csv", ft);
      ctx.bundle.values["t2_echo_ou_ms"] = fit.value("t2") / units::ms;
      plot.push_back(points("spin echo (OU noise)", scaled(te, 1.0 / units::ms), ec, Marker::Square));
      std::vector<double> fx, fy;
      for (double x : linspace(std::log(te.front()), std::log(te.back()), 60)) {
        fx.push_back(std::exp(x) / units::ms);
        fy.push_back(fit.value("c0") * std::exp(-std::pow(std::exp(x) / fit.value("t2"), 2)));
      }
      plot.push_back(line("Gaussian fit T2' = " + format_value(fit.value("t2") / units::ms) + " ms", fx, fy));
    }
  }

  if (part.empty()) {
    // fit round trip on exactly Gaussian contrast at the preset decay times
    Table rt{{"parameter", "preset_ms", "fitted_ms", "relative_error"}, {}};
    auto round_trip = [&](double truth, std::vector<double> times, double id) {
      std::vector<double> c;
      for (double T : times) c.push_back(std::exp(-std::pow(T / truth, 2)));
      const auto fit = dsp::fit_gaussian_decay(times, c);
      rt.add({id, truth / units::ms, fit.value("t2") / units::ms, fit.value("t2") / truth - 1.0});
      return std::abs(fit.value("t2") / truth - 1.0);
    };
    const double e1 = round_trip(t2s, cfg.list("coherence", "ramsey_times"), 1.0);
    const auto et = cfg.has("coherence", "echo_times") ? cfg.list("coherence", "echo_times")
                                                       : scaled(cfg.list("coherence", "ramsey_times"),
                                                                cfg.number("coherence", "t2_echo") / t2s);
    const double e2 = round_trip(cfg.number("coherence", "t2_echo"), et, 2.0);
    ctx.table("roundtrip.csv", rt);
    if (ctx.preset) {
      ctx.check("t2_star_roundtrip", e1, 0.0, 1e-3, "Gaussian fit recovers T2* = 2.03 ms within 1e-3");
      ctx.check("t2_echo_roundtrip", e2, 0.0, 1e-3, "Gaussian fit recovers T2' = 38 ms within 1e-3");
    }
  }
  if (!plot.empty()) {
    ctx.plot("coherence.svg", plot, {"Ramsey and spin-echo contrast", {"dark time", "ms", true}, {"contrast", ""}});
  }
}

// ------------------------------------------------------------ light shift

void run_lightshift(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto path = resolve(ctx.scenario, cfg.text("trap", "table"));
  ctx.input(path);
  const auto table = trap::load_polarizability_csv(path.string());
  const double wl = cfg.number_or("trap", "wavelength", 1064.0);
  const double beta = cfg.number_or("trap", "angle", units::pi / 2);
  const double magic_wl = cfg.number_or("trap", "magic_wavelength", 914.0);
  const double recoil_wl = cfg.number_or("trap", "recoil_wavelength", 914.0);

  const auto m1 = trap::magic_angle(magic_wl, table);
  const auto m2 = trap::magic_angle(wl, table);
  const auto rec = trap::recoil_energy(recoil_wl);
  const auto tab_slope = trap::shift_slope(table, wl, beta);

  Table tt{{"magic_wavelength_nm", "magic_angle_deg", "magic_angle_sigma_deg", "wavelength_nm", "magic_found_at_wavelength",
            "recoil_wavelength_nm", "recoil_khz", "table_slope_hz_per_uk", "table_slope_sigma"},
           {}};
  tt.add({magic_wl, m1.angle ? *m1.angle / units::deg : nan, m1.sigma / units::deg, wl, m2.angle ? 1.0 : 0.0, recoil_wl,
          rec.hz / 1e3, tab_slope.value, tab_slope.sigma});
  ctx.table("trap.csv", tt);

  std::optional<double> slope;
  if (cfg.has("trap", "depths")) {
    const auto depths = cfg.list("trap", "depths");
    const double truth = cfg.number("trap", "slope");
    const double derr = cfg.number_or("trap", "depth_error", 0.0);
    const double fnoise = units::to_hz(cfg.number_or("trap", "frequency_noise", 0.0));
    const double offset = units::to_hz(cfg.number_or("trap", "offset", 0.0));
    const CounterRng r(ctx.seed);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < depths.size(); ++i) {
      // the atoms feel depths[i]; the quoted depth carries a relative error
      x.push_back(depths[i] * (1.0 + derr * r.normal(2 * i)));
      y.push_back(offset + truth * depths[i] + fnoise * r.normal(2 * i + 1));
    }
    const auto fit = dsp::fit_linear(x, y);
    slope = fit.value("slope");
    Table lt{{"depth_uk", "f_ramsey_hz", "fit_hz"}, {}};
    for (std::size_t i = 0; i < x.size(); ++i) lt.add({x[i], y[i], fit.value("intercept") + *slope * x[i]});
    ctx.table("lightshift.csv", lt);
    Table st{{"slope_hz_per_uk", "slope_sigma", "intercept_hz", "truth_hz_per_uk"}, {}};
    st.add({*slope, fit.error("slope"), fit.value("intercept"), truth});
    ctx.table("slope.csv", st);
    ctx.bundle.values["slope_hz_per_uk"] = *slope;
    ctx.bundle.values["slope_sigma"] = fit.error("slope");
    std::vector<double> fx = linspace(0.0, *std::max_element(x.begin(), x.end()) * 1.1, 2), fy;
    for (double v : fx) fy.push_back(fit.value("intercept") + *slope * v);
    ctx.plot("lightshift.svg", {points("Ramsey frequency", x, y), line("linear fit", fx, fy)},
             {"differential light shift", {"lattice depth", "uK"}, {"Ramsey frequency", "Hz"}});
  }
  if (ctx.preset) {
    ctx.check("magic_angle_914", m1.angle ? *m1.angle / units::deg : nan, 78.99, 79.01, "magic angle 79.00 +- 0.01 deg");
    ctx.check("magic_angle_1064_found", m2.angle ? 1.0 : 0.0, 0.0, 0.0, "no magic angle at 1064 nm");
    ctx.check("recoil_914_khz", rec.hz / 1e3, 2.72 * 0.995, 2.72 * 1.005, "recoil 2.72 kHz +- 0.5 %");
    if (slope) ctx.check("lightshift_slope", *slope, 192.0 - 82.0, 192.0 + 82.0, "slope within 192 +- 82 Hz/uK");
  }
}

// ------------------------------------------------------------ excitation

void run_excitation(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const auto rc = raman(cfg);
  const double duration = cfg.number("trace", "duration");
  const double step = cfg.number("trace", "step");
  const std::size_t n = sample_count(cfg, duration, step);
  PulseSequence seq;
  seq.initial = "up";
  seq.fields = raman_fields(rc);
  seq.segments = {ConstantDrive{{}, static_cast<double>(n) * step}};
  seq.readout = {"up", "down"};
  RunOptions o = base_run(ctx, atom);
  o.samples_per_segment = n;
  const auto res = run(seq, o);
  std::vector<double> t = res.trajectory.times, pu, pd;
  for (const auto& row : res.trajectory.populations) {
    pu.push_back(row[0]);
    pd.push_back(row[1]);
  }

  const double eta = cfg.number_or("readout", "lz_efficiency", 0.975);
  const double fid = cfg.number_or("readout", "detection_fidelity", 0.959);
  const double drift = cfg.number_or("readout", "reference_drift", 0.0);
  const auto nref = static_cast<std::size_t>(cfg.count_or("readout", "reference_points", 5));
  const double atoms = static_cast<double>(cfg.count_or("readout", "atoms", 10000));
  const double span = t.back();
  auto loaded = [&](double x) { return atoms * (1.0 + drift * x / span); };
  // reference: prepared by the sweep and read out by the sweep
  std::vector<double> rt = linspace(0.0, span, nref), rcnt;
  for (double x : rt) rcnt.push_back(loaded(x) * eta * eta);
  std::vector<double> raw_up, raw_down;
  for (std::size_t i = 0; i < t.size(); ++i) {
    raw_up.push_back(loaded(t[i]) * eta * eta * pu[i]);
    raw_down.push_back(loaded(t[i]) * eta * fid * pd[i]);
  }
  const auto norm = normalize_readout(t, raw_up, raw_down, rt, rcnt, eta);
  for (const auto& w : norm.warnings) ctx.warn(w);

  const double tpi = cfg.has("readout", "time") ? cfg.number("readout", "time") : pulse_times(seq.fields).pi;
  const double excitation = 1.0 - interpolate(t, norm.up, tpi);
  const double measured = interpolate(t, norm.down, tpi);
  const auto chain = dsp::detection_fidelity(measured, 0.0, excitation, 0.0);
  const auto published = dsp::detection_fidelity(0.94, 0.03, 0.98, 0.01);

  Table rt_table{{"t_us", "up_normalized", "down_normalized", "reference", "up_true", "down_true"}, {}};
  for (std::size_t i = 0; i < t.size(); ++i) {
    rt_table.add({t[i] / units::us, norm.up[i], norm.down[i], norm.reference[i], pu[i], pd[i]});
  }
  ctx.table("readout.csv", rt_table);
  Table r{{"pi_time_us", "excitation_fraction", "down_population", "detection_fidelity", "injected_fidelity",
           "published_chain", "published_chain_sigma"},
          {}};
  r.add({tpi / units::us, excitation, measured, chain.value, fid, published.value, published.sigma});
  ctx.table("results.csv", r);
  ctx.bundle.values["excitation_fraction"] = excitation;
  ctx.bundle.values["detection_fidelity"] = chain.value;
  const auto tu = rt_table.column("t_us");
  ctx.plot("excitation.svg",
           {points("up (normalised)", tu, norm.up, Marker::Circle),
            points("down (normalised, LZ corrected)", tu, norm.down, Marker::Square)},
           {"pi-pulse excitation and detection", {"time", "us"}, {"population", ""}});
  if (ctx.preset) {
    ctx.check("detection_fidelity_roundtrip", std::abs(chain.value - fid), 0.0, 0.005,
              "drift-normalised, LZ-corrected chain recovers the injected detection fidelity");
    ctx.check("published_detection_chain", published.value, 0.93, 0.99, "0.94(3) / 0.98(1) = 96(3) %");
  }
}

// -------------------------------------------------------------- pipeline

void run_pipeline(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const double rabi = cfg.number("synthetic", "rabi");
  const double tau = cfg.number("synthetic", "tau");
  const double a = cfg.number_or("synthetic", "amplitude_loss", 0.0);
  const double tl = cfg.number_or("synthetic", "tau_loss", 1.0);
  const double phase = cfg.number_or("synthetic", "phase", 0.0);
  const double noise = cfg.number_or("synthetic", "noise", 0.0);
  const auto seeds = static_cast<std::size_t>(cfg.count_or("synthetic", "seeds", 1));
  const double step = cfg.number("trace", "step");
  const std::size_t n = sample_count(cfg, cfg.number("trace", "duration"), step);
  const auto eo = extract_options(cfg);
  const CounterRng root(ctx.seed);

  auto make = [&](std::size_t s) {
    const auto r = root.split(s);
    dsp::Trace tr;
    tr.dt = step;
    for (std::size_t i = 0; i < n; ++i) {
      tr.y.push_back(closedform::damped_model(static_cast<double>(i) * step, rabi, phase, tau, a, tl) + noise * r.normal(i));
    }
    return tr;
  };
  struct Out {
    double rabi, tau, cycles;
  };
  const auto outs = parallel_map<Out>(
      seeds,
      [&](std::size_t s) {
        const auto ex = dsp::extract_rabi(make(s), eo);
        return Out{ex.rabi, ex.tau, ex.cycles};
      },
      ctx.workers);
  Table st{{"seed_index", "rabi_khz", "tau_us", "cycles"}, {}};
  std::vector<double> rv, tv, cv;
  for (std::size_t s = 0; s < seeds; ++s) {
    st.add({static_cast<double>(s), outs[s].rabi / units::khz, outs[s].tau / units::us, outs[s].cycles});
    rv.push_back(outs[s].rabi);
    tv.push_back(outs[s].tau);
    cv.push_back(outs[s].cycles);
  }
  ctx.table("seeds.csv", st);
  const double mr = median(rv), mt = median(tv), mc = median(cv);
  Table mt_table{{"median_rabi_khz", "median_tau_us", "median_cycles", "truth_rabi_khz", "truth_tau_us", "truth_cycles"}, {}};
  mt_table.add({mr / units::khz, mt / units::us, mc, rabi / units::khz, tau / units::us, closedform::cycles(rabi, tau)});
  ctx.table("pipeline.csv", mt_table);
  ctx.bundle.values["median_rabi_khz"] = mr / units::khz;
  ctx.bundle.values["median_tau_us"] = mt / units::us;
  ctx.bundle.values["median_cycles"] = mc;

  const auto example = make(0);
  write_extraction(ctx, example, dsp::extract_rabi(example, eo), "example_");
  if (ctx.preset) {
    ctx.check("median_rabi_error", std::abs(mr / rabi - 1.0), 0.0, 1e-3, "Omega within 0.1 % (median over seeds)");
    ctx.check("median_tau_error", std::abs(mt / tau - 1.0), 0.0, 0.03, "tau within 3 % (median over seeds)");
    ctx.check("median_cycles", mc, 67.0, 71.0, "cycles 69 +- 2");
  }
}

// ------------------------------------------------------------ scattering

void run_scatter(RunContext& ctx) {
  const auto& cfg = ctx.scenario.config;
  const auto atom = scenario_atom(ctx);
  const double rabi = cfg.number("raman", "rabi_up");
  const double ref = cfg.number("raman", "detuning");
  const double t0 = cfg.number_or("trace", "start", 10e-6);
  const double t1 = cfg.number("trace", "duration");
  const auto ns = static_cast<std::size_t>(cfg.count_or("trace", "samples", 41));
  if (!(t1 > t0)) throw ConfigError(line_of(cfg, "trace", "duration") + ": duration must exceed start");
  std::vector<double> base;
  for (double x : linspace(std::log(t0), std::log(t1), ns)) base.push_back(std::exp(x));
  auto deltas = cfg.has("scan", "detunings") ? cfg.list("scan", "detunings") : std::vector<double>{};
  if (std::find(deltas.begin(), deltas.end(), ref) == deltas.end()) deltas.insert(deltas.begin(), ref);
  RunOptions o = base_run(ctx, atom);
  o.workers = 1;

  struct Out {
    std::vector<double> times, survival;
    rates::ScatteringFit fit;
    rates::RateModel model;
  };
  const auto outs = parallel_map<Out>(
      deltas.size(),
      [&](std::size_t k) {
        const double d = deltas[k];
        if (d == 0.0) throw ConfigError(line_of(cfg, "scan", "detunings") + ": detuning 0 in a scattering scan");
        const double s = (d / ref) * (d / ref);
        Out out;
        out.times = scaled(base, s);
        const auto field = driven::RamanConfig::make(rabi, 0.0, d).up_field;
        out.survival = scattering_decay(field, out.times, o);
        out.model = rates::build_rate_model(field, atom, atom.magnetic);
        out.fit = rates::fit_scattering_rate(out.model, out.times, out.survival);
        return out;
      },
      ctx.workers);

  Table sc{{"detuning_ghz", "gamma_sc", "gamma_sc_sigma", "tau_max_ms", "tau_max_sigma_ms", "closed_form_tau_ms"}, {}};
  std::vector<double> dv, tv, te;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const auto& f = outs[k].fit;
    if (f.non_decaying) ctx.warn("detuning " + format_value(deltas[k] / units::ghz) + " GHz: non-decaying trace");
    sc.add({deltas[k] / units::ghz, f.gamma_sc, f.gamma_sc_sigma, f.tau_max / units::ms, f.tau_max_sigma / units::ms,
            closedform::max_decay_time(rabi, deltas[k], atom.decay.gamma_s) / units::ms});
    dv.push_back(deltas[k]);
    tv.push_back(f.tau_max);
    te.push_back(f.tau_max_sigma);
  }
  ctx.table("scattering_scan.csv", sc);
  const auto ri = static_cast<std::size_t>(std::find(deltas.begin(), deltas.end(), ref) - deltas.begin());
  const auto& r0 = outs[ri];
  const auto best = r0.model.with_scattering_rate(r0.fit.gamma_sc);
  const auto model_curve = rates::survival(best, r0.times);
  Table dt{{"t_ms", "survival", "fit"}, {}};
  for (std::size_t i = 0; i < r0.times.size(); ++i) {
    dt.add({r0.times[i] / units::ms, r0.survival[i], r0.fit.fit.value("amplitude") * model_curve[i]});
  }
  ctx.table("decay.csv", dt);

  const auto tfit = rates::fit_tau_scaling(dv, tv);
  const double a_us = rates::tau_coefficient_us_per_ghz2(tfit.value("a"));
  Table at{{"a_us_per_ghz2", "a_sigma"}, {}};
  at.add({a_us, rates::tau_coefficient_us_per_ghz2(tfit.error("a"))});
  ctx.table("tau_scaling.csv", at);
  Table id{{"gamma_sc", "tau_max_s", "identity_residual"}, {}};
  const double residual = std::abs(r0.fit.tau_max - 1.0 / r0.fit.gamma_sc);
  id.add({r0.fit.gamma_sc, r0.fit.tau_max, residual});
  ctx.table("identity.csv", id);
  ctx.bundle.values["gamma_sc"] = r0.fit.gamma_sc;
  ctx.bundle.values["tau_max_ms"] = r0.fit.tau_max / units::ms;
  ctx.bundle.values["a_us_per_ghz2"] = a_us;

  const auto tm = dt.column("t_ms");
  ctx.plot("decay.svg", {points("13-level simulation", tm, dt.column("survival")), line("rate-model fit", tm, dt.column("fit"))},
           {"up survival at " + format_value(ref / units::ghz) + " GHz", {"hold time", "ms", true}, {"N_up(t) / N_up(0)", ""}});
  std::vector<double> ad, tms;
  for (std::size_t k = 0; k < dv.size(); ++k) {
    ad.push_back(std::abs(dv[k]) / units::ghz);
    tms.push_back(tv[k] / units::ms);
  }
  std::vector<double> fx = linspace(0.0, *std::max_element(ad.begin(), ad.end()), 40), fy;
  for (double x : fx) fy.push_back(tfit.value("a") * std::pow(x * units::ghz, 2) / units::ms);
  ctx.plot("tau_scaling.svg", {points("fitted tau_max", ad, tms, Marker::Diamond), line("a Delta^2", fx, fy)},
           {"scattering-limited decay time", {"|detuning|", "GHz"}, {"tau_max", "ms"}});
  if (ctx.preset) {
    ctx.check("scattering_rate", r0.fit.gamma_sc, 600.0, 1200.0, "Gamma_sc in [600, 1200] 1/s (867(19) measured)");
    ctx.check("tau_coefficient", a_us, 30.0, 50.0, "a in [30, 50] us/(2 pi GHz)^2 (39(2) measured)");
    ctx.check("tau_identity", residual, 0.0, 0.0, "tau_max = 1 / Gamma_sc exactly");
  }
}

}  // namespace

Bundle run_scenario(const Scenario& scenario, const RunSettings& settings) {
  if (!settings.part.empty() && !(scenario.kind == "coherence" && (settings.part == "ramsey" || settings.part == "echo"))) {
    throw ConfigError("part '" + settings.part + "' does not apply to a " + scenario.kind + " scenario");
  }
  RunContext ctx(scenario, settings);
  ctx.preset = is_preset(scenario.name) && settings.part.empty();
  const auto& k = scenario.kind;
  if (k == "lz") run_lz(ctx);
  else if (k == "autler-townes") run_autler_townes(ctx);
  else if (k == "cpt") run_cpt(ctx);
  else if (k == "rabi") run_rabi(ctx);
  else if (k == "detuning") run_detuning(ctx);
  else if (k == "coherence") run_coherence(ctx);
  else if (k == "lightshift") run_lightshift(ctx);
  else if (k == "excitation") run_excitation(ctx);
  else if (k == "pipeline") run_pipeline(ctx);
  else if (k == "scatter") run_scatter(ctx);
  else throw ConfigError("unknown scenario kind '" + k + "'");
  return ctx.finish();
}

const std::vector<std::string>& presets() { return preset_ids; }

std::filesystem::path preset_path(const std::string& figure, const std::filesystem::path& data_dir) {
  if (!is_preset(figure)) {
    std::string list;
    for (const auto& p : preset_ids) list += (list.empty() ? "" : ", ") + p;
    throw ConfigError("unknown figure '" + figure + "'; presets: " + list);
  }
  return data_dir / "scenarios" / (figure + ".scenario");
}

Bundle reproduce(const std::string& figure, const std::filesystem::path& data_dir, const RunSettings& settings) {
  const auto scenario = load_scenario(preset_path(figure, data_dir));
  if (scenario.name != figure) {
    throw ConfigError(scenario.path.string() + ": scenario name '" + scenario.name + "' does not match preset '" + figure + "'");
  }
  return run_scenario(scenario, settings);
}

}  // namespace fsq::harness
