#include <doctest.h>

#include <cmath>

#include "fsq/closedform.hpp"
#include "fsq/errors.hpp"
#include "fsq/sequences.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::sequences;

namespace {

const double kDelta = -6 * units::ghz;
const double kRabi = 72 * units::mhz;

RunOptions effective_options() {
  RunOptions o;
  o.model.elimination = driven::Elimination::ForceEffective;
  o.model.scattering = false;
  return o;
}

PulseSequence raman_sequence(std::vector<Segment> segments, const std::string& initial = "down") {
  PulseSequence s;
  s.initial = initial;
  s.fields = raman_fields(driven::RamanConfig::make(kRabi, kRabi, kDelta));
  s.segments = std::move(segments);
  return s;
}

std::vector<double> phase_grid(int n) {
  std::vector<double> p;
  for (int i = 0; i < n; ++i) p.push_back(units::two_pi * i / n);
  return p;
}

CoherenceOptions coherence() {
  CoherenceOptions c;
  c.run = effective_options();
  c.raman = driven::RamanConfig::make(kRabi, kRabi, kDelta);
  return c;
}

}  // namespace

TEST_CASE("pi pulse transfers down to up") {
  const auto pt = pulse_times(raman_fields(driven::RamanConfig::make(kRabi, kRabi, kDelta)));
  CHECK(pt.rabi == doctest::Approx(kRabi * kRabi / (2 * std::abs(kDelta))).epsilon(1e-3));
  const auto r = run(raman_sequence({ConstantDrive{{}, pt.pi}}), effective_options());
  CHECK(r.final_state.trace() == doctest::Approx(1.0).epsilon(1e-9));
  const auto up = std::find(r.labels.begin(), r.labels.end(), "up") - r.labels.begin();
  CHECK(r.final_state.population(static_cast<std::size_t>(up)) > 0.999);
}

TEST_CASE("dark segment keeps populations and the pulse-jump-pulse identity holds") {
  const auto pt = pulse_times(raman_fields(driven::RamanConfig::make(kRabi, kRabi, kDelta)));
  const auto a = run(raman_sequence({ConstantDrive{{}, pt.pi2}}), effective_options());
  const auto b = run(raman_sequence({ConstantDrive{{}, pt.pi2}, Dark{10e-6}}), effective_options());
  for (std::size_t i = 0; i < a.final_state.dim(); ++i) {
    CHECK(b.final_state.population(i) == doctest::Approx(a.final_state.population(i)).epsilon(1e-9));
  }
  const auto back = run(raman_sequence({ConstantDrive{{}, pt.pi2}, PhaseJump{"up", units::pi}, ConstantDrive{{}, pt.pi2}}),
                        effective_options());
  const auto down = std::find(back.labels.begin(), back.labels.end(), "down") - back.labels.begin();
  CHECK(back.final_state.population(static_cast<std::size_t>(down)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dark-only sequence leaves the initial state") {
  RunOptions o;
  o.scheme = SchemeKind::Full;
  const auto r = run(raman_sequence({Dark{1e-3}}, "up"), o);
  const auto k = std::find(r.labels.begin(), r.labels.end(), "up") - r.labels.begin();
  CHECK(std::abs(r.final_state.population(static_cast<std::size_t>(k)) - 1.0) < 1e-8);
}

TEST_CASE("splitting a drive is associative and global phases do not matter") {
  const double T = 1.7e-6;
  const auto whole = run(raman_sequence({ConstantDrive{{}, T}}), effective_options());
  const auto split = run(raman_sequence({ConstantDrive{{}, 0.6e-6}, ConstantDrive{{}, 1.1e-6}}), effective_options());
  CHECK(evolver::trace_distance(whole.final_state, split.final_state) < 1e-9);

  auto seq = raman_sequence({ConstantDrive{{}, T}});
  for (auto& f : seq.fields) f.phase += 0.83;
  const auto shifted = run(seq, effective_options());
  for (std::size_t i = 0; i < whole.final_state.dim(); ++i) {
    CHECK(shifted.final_state.population(i) == doctest::Approx(whole.final_state.population(i)).epsilon(1e-9));
  }
}

TEST_CASE("trajectory sampling and readout selection") {
  auto seq = raman_sequence({ConstantDrive{{}, 2e-6}, Dark{1e-6}});
  seq.readout = {"up"};
  auto o = effective_options();
  o.samples_per_segment = 4;
  const auto r = run(seq, o);
  CHECK(r.trajectory.times.size() == 9);
  CHECK(r.trajectory.times.back() == doctest::Approx(3e-6));
  CHECK(r.trajectory.names == std::vector<std::string>{"up"});
  CHECK(r.trajectory.populations.front()[0] == 0.0);
}

TEST_CASE("sequence validation") {
  CHECK_THROWS_AS(run(raman_sequence({}), effective_options()), ConfigError);
  CHECK_THROWS_AS(run(raman_sequence({PhaseJump{"nope", 1.0}}), effective_options()), ConfigError);
  CHECK_THROWS_AS(run(raman_sequence({Dark{-1.0}}), effective_options()), ConfigError);
  CHECK_THROWS_AS(run(raman_sequence({Dark{1e-6}}, "g"), effective_options()), ConfigError);
  CHECK_THROWS_AS(run(raman_sequence({FrequencyRamp{"up", 0.0, 1.0, 1e-6}}), effective_options()), ModelError);
}

TEST_CASE("auto elimination follows the detuning rule") {
  RunOptions o;
  // 100 x Omega = 2 pi x 7.2 GHz exceeds |Delta|
  CHECK_FALSE(uses_elimination(raman_sequence({Dark{1e-6}}), o));
  auto far = raman_sequence({Dark{1e-6}});
  far.fields = raman_fields(driven::RamanConfig::make(36 * units::mhz, 36 * units::mhz, kDelta));
  CHECK(uses_elimination(far, o));
  auto near = raman_sequence({Dark{1e-6}});
  near.fields = raman_fields(driven::RamanConfig::make(kRabi, kRabi, -200 * units::mhz));
  CHECK_FALSE(uses_elimination(near, o));
  o.scheme = SchemeKind::Full;
  CHECK_FALSE(uses_elimination(raman_sequence({Dark{1e-6}}), o));
}

TEST_CASE("Landau-Zener sweep against the asymptotic formula") {
  const double range = 20e3, T = 10e-3;
  const double ramp = units::two_pi * range / T;
  const double rabi = closedform::lz_rabi_for_fidelity(0.5, ramp);
  const auto lz = landau_zener(rabi, range, T);
  CHECK(lz.warning.empty());
  CHECK(lz.analytic == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(lz.fidelity == doctest::Approx(lz.analytic).epsilon(0.005));

  CHECK(landau_zener(0.0, range, T).fidelity == 0.0);
  double last = 0.0;
  for (double d : {2e-3, 5e-3, 10e-3}) {
    const double f = landau_zener(rabi, range, d).fidelity;
    CHECK(f > last);
    last = f;
  }
  CHECK_FALSE(landau_zener(units::two_pi * 30e3, range, T).warning.empty());
}

TEST_CASE("Gauss-Hermite nodes integrate normal moments") {
  std::vector<double> x, w;
  gauss_hermite(8, x, w);
  double m0 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += w[i];
    m2 += w[i] * x[i] * x[i];
    m4 += w[i] * std::pow(x[i], 4);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("Ramsey contrast: unity at T = 0, Gaussian decay under detuning spread") {
  auto c = coherence();
  const auto phases = phase_grid(16);
  const auto p0 = ramsey_phase_scan(0.0, phases, c);
  CHECK(phase_contrast(phases, p0).value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(minmax_contrast(p0) == doctest::Approx(1.0).epsilon(1e-6));

  const double sigma = units::two_pi * 1e3;
  c.ensemble = {0.0, sigma, 20, 1, true};
  const double T = 1.0 / sigma;
  const auto p = ramsey_phase_scan(T, phases, c);
  CHECK(phase_contrast(phases, p).value == doctest::Approx(std::exp(-0.5)).epsilon(0.01));
}

TEST_CASE("spin echo refocuses a static detuning spread") {
  auto c = coherence();
  c.ensemble = {0.0, units::two_pi * 200.0, 12, 1, true};
  const auto phases = phase_grid(16);
  const double c0 = phase_contrast(phases, spin_echo_scan(0.0, phases, c)).value;
  const double c1 = phase_contrast(phases, spin_echo_scan(2e-3, phases, c)).value;
  CHECK(c0 == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(c1 == doctest::Approx(c0).epsilon(1e-6));
  const double r0 = phase_contrast(phases, ramsey_phase_scan(0.0, phases, c)).value;
  CHECK(c1 == doctest::Approx(r0).epsilon(1e-6));
  // Ramsey with the same spread has decayed away.
  CHECK(phase_contrast(phases, ramsey_phase_scan(2e-3, phases, c)).value < 0.05);
}

TEST_CASE("ensemble bookkeeping") {
  auto c = coherence();
  const auto phases = phase_grid(8);
  const auto single = ramsey_phase_scan(20e-6, phases, c);
  c.ensemble = {0.0, 0.0, 16, 7, false};
  const auto same = ramsey_phase_scan(20e-6, phases, c);
  for (std::size_t i = 0; i < phases.size(); ++i) CHECK(same[i] == single[i]);

  c.ensemble = {0.05, units::two_pi * 2e3, 6, 7, false};
  const auto a = ramsey_phase_scan(100e-6, phases, c);
  c.run.workers = 1;
  const auto b = ramsey_phase_scan(100e-6, phases, c);
  for (std::size_t i = 0; i < phases.size(); ++i) CHECK(a[i] == b[i]);
  c.ensemble.seed = 8;
  const auto d = ramsey_phase_scan(100e-6, phases, c);
  double diff = 0;
  for (std::size_t i = 0; i < phases.size(); ++i) diff += std::abs(a[i] - d[i]);
  CHECK(diff > 1e-6);

  const auto draws = ensemble_draws({0.1, 0.0, 5, 3, true});
  CHECK(draws.size() == 5);
  double wsum = 0;
  for (const auto& dr : draws) wsum += dr.weight;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("OU noise path statistics") {
  const OUNoise n{units::two_pi * 100.0, 1e-3, 1e-5};
  const NoisePath p(n, 2.0, CounterRng(5));
  double m = 0, v = 0;
  for (double x : p.values()) m += x;
  m /= static_cast<double>(p.values().size());
  for (double x : p.values()) v += (x - m) * (x - m);
  v /= static_cast<double>(p.values().size());
  CHECK(std::sqrt(v) == doctest::Approx(n.sigma).epsilon(0.1));
  CHECK(p.at(0.5e-5) == p.values()[0]);
  CHECK(p.at(1.5e-5) == p.values()[1]);
}

TEST_CASE("Autler-Townes peaks sit at +-Omega/2") {
  const double gamma = atom::strontium88().decay.gamma_s;
  std::vector<double> grid;
  for (int i = -100; i <= 100; ++i) grid.push_back(i * 1 * units::mhz);
  // calibration chosen so 1 mW dresses with 2 pi x 60 MHz
  const auto scan = autler_townes_scan({0.0, 1.0, 1.0 / 36.0}, grid, 60.0);
  REQUIRE(scan.columns.size() == 3);
  CHECK_FALSE(scan.columns[0].splitting.has_value());
  CHECK_FALSE(scan.columns[0].note.empty());
  const auto bare = dsp::fit_lorentzian(grid, scan.columns[0].signal);
  CHECK(bare.value("fwhm") == doctest::Approx(gamma).epsilon(0.05));
  REQUIRE(scan.columns[2].splitting.has_value());
  CHECK(*scan.columns[2].splitting == doctest::Approx(10 * units::mhz).epsilon(0.02));
  const auto& col = scan.columns[1];
  REQUIRE(col.splitting.has_value());
  CHECK(*col.splitting == doctest::Approx(60 * units::mhz).epsilon(0.02));
  CHECK(col.fit->value("width") == doctest::Approx(gamma).epsilon(0.2));
  CHECK(std::abs(col.fit->value("center")) < 0.01 * 60 * units::mhz);
}

TEST_CASE("Autler-Townes with exchanged roles splits by the up Rabi frequency") {
  std::vector<double> grid;
  for (int i = -60; i <= 60; ++i) grid.push_back(i * 1 * units::mhz);
  AutlerTownesOptions o;
  o.exchange_roles = true;
  const auto scan = autler_townes_scan({1.0}, grid, 40.0, o);
  REQUIRE(scan.columns[0].splitting.has_value());
  CHECK(*scan.columns[0].splitting == doctest::Approx(40 * units::mhz).epsilon(0.02));
  // nothing to probe from up
  o.exchange_roles = false;
  const auto plain = autler_townes_scan({1.0}, grid, 40.0, o);
  CHECK(*plain.columns[0].splitting == doctest::Approx(*scan.columns[0].splitting).epsilon(0.02));
}

TEST_CASE("CPT dark resonance at two-photon resonance") {
  CptOptions o;
  const std::vector<double> grid{-2e3 * units::hz, -500 * units::hz, 0.0, 500 * units::hz, 2e3 * units::hz};
  const auto s = cpt_scan(76.8 * units::khz, 61.0 * units::khz, grid, o);
  CHECK(s[2] < 1e-8);
  CHECK(s[0] > 100 * std::max(s[2], 1e-12));
  CHECK(s[1] < s[0]);
  CHECK(s[3] == doctest::Approx(s[1]).epsilon(1e-3));
  const auto flat = cpt_scan(76.8 * units::khz, 0.0, grid, o);
  for (double v : flat) CHECK(std::abs(v) < 1e-12);
  const auto atom = closed_lambda_atom(atom::strontium88());
  CHECK(atom.decay.fraction_sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scattering decay: flat without light, decaying with it") {
  driven::DriveField f = driven::RamanConfig::make(36 * units::mhz, 0.0, -6 * units::ghz).up_field;
  const std::vector<double> t{0.0, 1e-3, 2e-3};
  f.rabi = 0.0;
  for (double v : scattering_decay(f, t)) CHECK(std::abs(v - 1.0) < 1e-8);
  f.rabi = 36 * units::mhz;
  const auto d = scattering_decay(f, t);
  CHECK(d[1] < 1.0);
  CHECK(d[2] < d[1]);
}
