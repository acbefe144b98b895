#include "fsq/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fsq/closedform.hpp"
#include "fsq/errors.hpp"
#include "fsq/parallel.hpp"
#include "fsq/units.hpp"

namespace fsq::sequences {

using driven::DriveField;
using evolver::DensityMatrix;
using evolver::Trajectory;

double segment_duration(const Segment& s) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PhaseJump>) return 0.0;
        else return v.duration;
      },
      s);
}

std::string describe(const Segment& s) {
  std::ostringstream os;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConstantDrive>) os << "drive " << v.duration << " s";
        else if constexpr (std::is_same_v<T, FrequencyRamp>) os << "ramp '" << v.field << "' " << v.duration << " s";
        else if constexpr (std::is_same_v<T, Dark>) os << "dark " << v.duration << " s";
        else os << "phase jump '" << v.field << "' " << v.phase << " rad";
      },
      s);
  return os.str();
}

double PulseSequence::duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += segment_duration(s);
  return t;
}

// ---------------------------------------------------------------- noise

NoisePath::NoisePath(const OUNoise& noise, double duration, const CounterRng& rng) {
  if (!(noise.sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (!(noise.correlation_time > 0.0)) throw ConfigError("noise correlation time must be > 0");
  if (!(noise.step > 0.0)) throw ConfigError("noise step must be > 0");
  step_ = noise.step;
  const auto n = static_cast<std::size_t>(std::ceil(duration / step_)) + 1;
  const double a = std::exp(-step_ / noise.correlation_time);
  const double b = noise.sigma * std::sqrt(-std::expm1(-2.0 * step_ / noise.correlation_time));
  values_.resize(n);
  values_[0] = noise.sigma * rng.normal(0);
  for (std::size_t k = 1; k < n; ++k) values_[k] = a * values_[k - 1] + b * rng.normal(k);
}

double NoisePath::at(double t) const {
  if (values_.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / step_ + 1e-9)));
  return values_[std::min(k, values_.size() - 1)];
}

// ---------------------------------------------------------------- models

atom::LevelScheme make_scheme(const RunOptions& options) {
  switch (options.scheme) {
    case SchemeKind::Lambda: return atom::LevelScheme::lambda(options.atom);
    case SchemeKind::Transfer: return atom::LevelScheme::transfer(options.atom);
    case SchemeKind::Full: return atom::LevelScheme::full(atom::AtomData(options.atom));
  }
  throw ConfigError("unknown scheme");
}

namespace {

bool is_lambda_pair(const std::vector<DriveField>& fields) {
  bool up = false, down = false;
  for (const auto& f : fields) {
    if (f.upper == atom::ref_s && f.lower == atom::ref_up) up = true;
    if (f.upper == atom::ref_s && f.lower == atom::ref_down) down = true;
  }
  return up && down;
}

}  // namespace

driven::RotatingFrameModel segment_model(const std::vector<DriveField>& fields, const RunOptions& options,
                                         bool eliminate) {
  const auto scheme = make_scheme(options);
  driven::ModelOptions build = options.model;
  build.scattering = true;
  auto model = driven::build_model(fields, scheme, options.atom, options.atom.magnetic, build);
  if (eliminate) return driven::eliminate_level(model, scheme.index(atom::ref_s), options.model.scattering);
  if (!options.model.scattering) {
    std::erase_if(model.collapse, [](const driven::CollapseOp& c) { return c.label.rfind("dephasing", 0) != 0; });
  }
  return model;
}

bool uses_elimination(const PulseSequence& seq, const RunOptions& options) {
  if (options.model.elimination == driven::Elimination::ForceFull) return false;
  const auto scheme = make_scheme(options);
  if (options.model.elimination == driven::Elimination::ForceEffective) {
    if (!scheme.contains(atom::ref_s)) throw ModelError("effective model needs the s level in the scheme");
    return true;
  }
  if (scheme.size() != 3 || !is_lambda_pair(seq.fields)) return false;
  // Largest amplitudes over the whole sequence decide once for all segments.
  double max_rabi = 0.0, delta = std::numeric_limits<double>::infinity();
  auto visit_fields = [&](const std::vector<DriveField>& fs) {
    for (const auto& f : fs) {
      max_rabi = std::max(max_rabi, f.rabi);
      if (f.upper == atom::ref_s) delta = std::min(delta, std::abs(f.detuning));
    }
  };
  visit_fields(seq.fields);
  for (const auto& s : seq.segments) {
    if (const auto* d = std::get_if<ConstantDrive>(&s)) visit_fields(d->fields);
    if (std::holds_alternative<FrequencyRamp>(s)) return false;
  }
  return delta > 100.0 * std::max(max_rabi, options.atom.decay.gamma_s);
}

void validate(const PulseSequence& seq, const RunOptions& options) {
  if (seq.segments.empty()) throw ConfigError("pulse sequence has no segments");
  const auto scheme = make_scheme(options);
  if (!scheme.find_name(seq.initial)) throw ConfigError("initial state '" + seq.initial + "' is not in the scheme");
  for (const auto& r : seq.readout) {
    if (r != "lost" && !scheme.find_name(r)) throw ConfigError("readout '" + r + "' is not in the scheme");
  }
  std::vector<std::string> ids;
  for (const auto& f : seq.fields) ids.push_back(f.id);
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    const auto& s = seq.segments[i];
    const std::string where = "segment " + std::to_string(i) + " (" + describe(s) + "): ";
    if (!(segment_duration(s) >= 0.0)) throw ConfigError(where + "duration must be >= 0");
    if (const auto* d = std::get_if<ConstantDrive>(&s)) {
      for (const auto& f : d->fields) {
        if (std::find(ids.begin(), ids.end(), f.id) == ids.end()) ids.push_back(f.id);
      }
    } else if (const auto* r = std::get_if<FrequencyRamp>(&s)) {
      if (std::find(ids.begin(), ids.end(), r->field) == ids.end()) throw ConfigError(where + "unknown field");
    } else if (const auto* p = std::get_if<PhaseJump>(&s)) {
      if (std::find(ids.begin(), ids.end(), p->field) == ids.end()) throw ConfigError(where + "unknown field");
    }
  }
  if (ids.empty()) throw ConfigError("pulse sequence defines no fields");
}

// ---------------------------------------------------------------- run

namespace {

struct Runner {
  const PulseSequence& seq;
  const RunOptions& options;
  const Perturbation& pert;
  bool eliminate = false;
  std::vector<DriveField> fields;
  std::map<std::string, double> phase;
  Trajectory traj;
  DensityMatrix rho;
  double t = 0.0;
  std::vector<std::string> labels;

  Runner(const PulseSequence& q, const RunOptions& o, const Perturbation& p) : seq(q), options(o), pert(p) {}

  std::vector<DriveField> dressed(const std::vector<DriveField>& base, double time, bool dark) const {
    std::vector<DriveField> out = base;
    const double amp = std::sqrt(std::max(pert.rabi_scale, 0.0));
    double shift = pert.detuning_offset;
    if (pert.noise) shift += pert.noise->at(time);
    bool shifted = false;
    for (auto& f : out) {
      f.rabi = dark ? 0.0 : f.rabi * amp;
      const auto it = phase.find(f.id);
      if (it != phase.end()) f.phase += it->second;
      if (f.id == "down" && !shifted) {
        f.detuning -= shift;
        shifted = true;
      }
    }
    if (!shifted && !out.empty() && shift != 0.0) out.front().detuning += shift;
    return out;
  }

  void record(double time, const DensityMatrix& r) {
    traj.times.push_back(time);
    traj.populations.push_back(r.populations());
    if (traj.track_loss) traj.lost.push_back(1.0 - r.trace());
  }

  void timed(const std::vector<DriveField>& base, double duration, bool dark, const evolver::EvolveOptions& eo,
             std::size_t segment) {
    if (duration == 0.0) return;
    try {
      if (pert.noise && !pert.noise->empty()) {
        // Piecewise-constant noise: split at step boundaries.
        const double step = pert.noise->step();
        double done = 0.0;
        while (done < duration) {
          const double abs_t = t + done;
          const double next_edge = (std::floor(abs_t / step + 1e-9) + 1.0) * step;
          const double piece = std::min(duration - done, next_edge - abs_t);
          const auto model = segment_model(dressed(base, abs_t, dark), options, eliminate);
          rho = evolver::evolve_state(model, rho, piece, eo);
          done += piece;
        }
        t += duration;
        record(t, rho);
        return;
      }
      const auto model = segment_model(dressed(base, t, dark), options, eliminate);
      const std::size_t k = std::max<std::size_t>(1, options.samples_per_segment);
      std::vector<double> times;
      for (std::size_t i = 1; i <= k; ++i) times.push_back(duration * static_cast<double>(i) / static_cast<double>(k));
      evolver::EvolveOptions o = eo;
      o.keep_states = true;
      const auto part = evolver::evolve(model, rho, times, o);
      for (std::size_t i = 0; i < times.size(); ++i) record(t + times[i], DensityMatrix(part.states[i]));
      traj.steps += part.steps;
      rho = DensityMatrix(part.states.back());
      t += duration;
    } catch (const NumericalError& e) {
      throw NumericalError("segment " + std::to_string(segment) + ": " + e.what());
    } catch (const ModelError& e) {
      throw ModelError("segment " + std::to_string(segment) + ": " + e.what());
    }
  }

};

}  // namespace

RunResult run(const PulseSequence& seq, const RunOptions& options, const Perturbation& pert,
              const std::optional<DensityMatrix>& initial) {
  validate(seq, options);
  Runner r(seq, options, pert);
  r.eliminate = uses_elimination(seq, options);
  r.fields = seq.fields;
  const auto probe = segment_model(r.fields, options, r.eliminate);
  r.labels = probe.labels;
  r.traj.names = probe.labels;
  r.traj.track_loss = probe.has_loss();
  if (initial) {
    if (initial->dim() != probe.dim()) throw ModelError("initial state dimension does not match the sequence model");
    r.rho = *initial;
  } else {
    r.rho = DensityMatrix::pure(probe.dim(), probe.index(seq.initial));
  }
  r.record(0.0, r.rho);

  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    const auto& s = seq.segments[i];
    if (const auto* d = std::get_if<ConstantDrive>(&s)) {
      for (const auto& f : d->fields) {
        auto it = std::find_if(r.fields.begin(), r.fields.end(), [&](const DriveField& g) { return g.id == f.id; });
        if (it == r.fields.end()) r.fields.push_back(f);
        else *it = f;
      }
      r.timed(r.fields, d->duration, false, options.evolve, i);
    } else if (const auto* dk = std::get_if<Dark>(&s)) {
      r.timed(r.fields, dk->duration, true, options.evolve, i);
    } else if (const auto* p = std::get_if<PhaseJump>(&s)) {
      r.phase[p->field] += p->phase;
    } else if (const auto* ramp = std::get_if<FrequencyRamp>(&s)) {
      if (r.eliminate) throw ModelError("segment " + std::to_string(i) + ": ramps need the full model");
      auto fields = r.fields;
      for (auto& f : fields) {
        if (f.id == ramp->field) f.detuning = ramp->start;
      }
      evolver::EvolveOptions eo = options.evolve;
      const double slope = ramp->duration > 0.0 ? (ramp->end - ramp->start) / ramp->duration : 0.0;
      eo.detuning_schedule = [slope](double tt) { return slope * tt; };
      eo.ramp_field = ramp->field;
      r.timed(fields, ramp->duration, false, eo, i);
      for (auto& f : r.fields) {
        if (f.id == ramp->field) f.detuning = ramp->end;
      }
    }
  }

  RunResult out;
  out.labels = r.labels;
  out.final_state = r.rho;
  if (seq.readout.empty()) {
    out.trajectory = std::move(r.traj);
  } else {
    Trajectory f;
    f.times = r.traj.times;
    f.steps = r.traj.steps;
    std::vector<std::size_t> cols;
    for (const auto& name : seq.readout) {
      if (name == "lost") continue;
      const auto it = std::find(r.labels.begin(), r.labels.end(), name);
      cols.push_back(static_cast<std::size_t>(it - r.labels.begin()));
      f.names.push_back(name);
    }
    for (const auto& row : r.traj.populations) {
      std::vector<double> sel;
      for (auto c : cols) sel.push_back(row[c]);
      f.populations.push_back(std::move(sel));
    }
    if (std::find(seq.readout.begin(), seq.readout.end(), "lost") != seq.readout.end()) {
      f.track_loss = true;
      f.lost = r.traj.track_loss ? r.traj.lost : std::vector<double>(f.times.size(), 0.0);
    }
    out.trajectory = std::move(f);
  }
  return out;
}

// ---------------------------------------------------------------- pulses

std::vector<DriveField> raman_fields(const driven::RamanConfig& config) {
  config.validate();
  return {config.up_field, config.down_field};
}

PulseTimes pulse_times(const std::vector<DriveField>& fields, std::optional<double> rabi_override) {
  PulseTimes p;
  if (rabi_override) {
    p.rabi = *rabi_override;
  } else if (is_lambda_pair(fields)) {
    const DriveField* up = nullptr;
    const DriveField* down = nullptr;
    for (const auto& f : fields) {
      if (f.lower == atom::ref_up && f.upper == atom::ref_s) up = &f;
      if (f.lower == atom::ref_down && f.upper == atom::ref_s) down = &f;
    }
    p.rabi = closedform::raman_rabi(up->rabi, down->rabi, up->detuning).value;
  } else if (fields.size() == 1) {
    p.rabi = fields.front().rabi;
  } else {
    throw ConfigError("pulse durations need a Raman pair or a single field (or an explicit Rabi frequency)");
  }
  if (!(p.rabi > 0.0) || !std::isfinite(p.rabi)) throw ConfigError("Rabi frequency for pulse durations must be > 0");
  p.pi = units::pi / p.rabi;
  p.pi2 = 0.5 * p.pi;
  return p;
}

// ---------------------------------------------------------------- Landau-Zener

LandauZener landau_zener(double rabi, double sweep_range_hz, double duration, RunOptions options) {
  if (!(rabi >= 0.0)) throw ConfigError("Landau-Zener Rabi frequency must be >= 0");
  if (!(duration > 0.0)) throw ConfigError("Landau-Zener duration must be > 0");
  if (!(sweep_range_hz > 0.0)) throw ConfigError("Landau-Zener sweep range must be > 0");
  LandauZener out;
  const double half = 0.5 * units::from_hz(sweep_range_hz);
  const double ramp = 2.0 * half / duration;
  out.analytic = closedform::lz_probability(rabi, ramp);
  if (units::from_hz(sweep_range_hz) < rabi) out.warning = "sweep range smaller than the Rabi frequency";
  if (rabi == 0.0) return out;

  DriveField f;
  f.id = "lz";
  f.lower = atom::ref_g;
  f.upper = atom::ref_up;
  f.coupling = driven::Coupling::Quadrupole;
  f.rabi = rabi;
  f.detuning = -half;
  PulseSequence seq;
  seq.initial = "g";
  seq.fields = {f};
  seq.segments = {FrequencyRamp{"lz", -half, half, duration}};
  options.scheme = SchemeKind::Transfer;
  options.samples_per_segment = 1;
  const auto res = run(seq, options);
  const auto g = std::find(res.labels.begin(), res.labels.end(), "g") - res.labels.begin();
  out.fidelity = 1.0 - res.final_state.population(static_cast<std::size_t>(g));
  return out;
}

// ---------------------------------------------------------------- ensembles

void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n == 0) throw ConfigError("quadrature needs at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = std::sqrt(static_cast<double>(k));
    J(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()[static_cast<Eigen::Index>(i)];
    const double v = es.eigenvectors()(0, static_cast<Eigen::Index>(i));
    weights[i] = v * v;
  }
}

std::vector<EnsembleDraw> ensemble_draws(const EnsembleSpec& spec) {
  if (spec.rabi_spread < 0.0 || spec.detuning_spread < 0.0) throw ConfigError("ensemble spreads must be >= 0");
  if (spec.samples < 1) throw ConfigError("ensemble needs at least one sample");
  const CounterRng root(spec.seed);
  std::vector<EnsembleDraw> draws;
  if (spec.quadrature) {
    std::vector<double> x, w;
    gauss_hermite(spec.samples, x, w);
    const std::vector<double> one{0.0}, unit{1.0};
    const auto& xr = spec.rabi_spread > 0.0 ? x : one;
    const auto& wr = spec.rabi_spread > 0.0 ? w : unit;
    const auto& xd = spec.detuning_spread > 0.0 ? x : one;
    const auto& wd = spec.detuning_spread > 0.0 ? w : unit;
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < xr.size(); ++i) {
      for (std::size_t j = 0; j < xd.size(); ++j) {
        draws.push_back({wr[i] * wd[j], 1.0 + spec.rabi_spread * xr[i], spec.detuning_spread * xd[j],
                         root.split(k++)});
      }
    }
    return draws;
  }
  const double w = 1.0 / static_cast<double>(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const auto rng = root.split(i);
    draws.push_back({w, 1.0 + spec.rabi_spread * rng.normal(0), spec.detuning_spread * rng.normal(1), rng.split(1)});
  }
  return draws;
}

std::vector<double> ensemble_average(const EnsembleSpec& spec,
                                     const std::function<std::vector<double>(const EnsembleDraw&)>& fn,
                                     std::size_t workers) {
  const auto draws = ensemble_draws(spec);
  if (draws.size() == 1) return fn(draws.front());
  const auto parts =
      parallel_map<std::vector<double>>(draws.size(), [&](std::size_t i) { return fn(draws[i]); }, workers);
  std::vector<double> mean(parts.front().size(), 0.0);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() != mean.size()) throw ModelError("ensemble members returned different lengths");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += draws[i].weight * parts[i][k];
  }
  return mean;
}

// ---------------------------------------------------------------- coherence

namespace {

std::vector<double> coherence_scan(double dark_time, const std::vector<double>& phases,
                                   const CoherenceOptions& options, bool echo) {
  if (!(dark_time >= 0.0)) throw ConfigError("dark time must be >= 0");
  if (phases.empty()) throw ConfigError("phase list is empty");
  const auto fields = raman_fields(options.raman);
  const auto pt = pulse_times(fields, options.rabi_override);

  PulseSequence prefix;
  prefix.initial = options.initial;
  prefix.fields = fields;
  if (echo) {
    prefix.segments = {ConstantDrive{{}, pt.pi2}, Dark{0.5 * dark_time}, ConstantDrive{{}, pt.pi},
                       Dark{0.5 * dark_time}};
  } else {
    prefix.segments = {ConstantDrive{{}, pt.pi2}, Dark{dark_time}};
  }
  const double t_final = prefix.duration();

  RunOptions ro = options.run;
  ro.samples_per_segment = 1;
  const bool noisy = options.noise && options.noise->sigma > 0.0;
  EnsembleSpec spec = options.ensemble;
  if (!noisy && spec.rabi_spread == 0.0 && spec.detuning_spread == 0.0) spec.samples = 1;

  auto member = [&](const EnsembleDraw& d) {
    NoisePath path;
    if (noisy) path = NoisePath(*options.noise, t_final + pt.pi2, d.rng);
    Perturbation p{d.rabi_scale, d.detuning_offset, noisy ? &path : nullptr};
    const auto pre = run(prefix, ro, p);
    const auto k = static_cast<std::size_t>(
        std::find(pre.labels.begin(), pre.labels.end(), options.readout) - pre.labels.begin());
    if (k >= pre.labels.size()) throw ConfigError("readout '" + options.readout + "' is not in the model");
    std::vector<double> out;
    for (double phi : phases) {
      PulseSequence tail;
      tail.initial = options.initial;
      tail.fields = fields;
      tail.segments = {PhaseJump{"up", phi}, ConstantDrive{{}, pt.pi2}};
      // The final pulse is short; the noise is frozen at its value at the end of the prefix.
      Perturbation pt2{d.rabi_scale, d.detuning_offset + (noisy ? path.at(t_final) : 0.0), nullptr};
      const auto fin = run(tail, ro, pt2, pre.final_state);
      out.push_back(fin.final_state.population(k));
    }
    return out;
  };
  return ensemble_average(spec, member, options.run.workers);
}

}  // namespace

std::vector<double> ramsey_phase_scan(double dark_time, const std::vector<double>& phases,
                                      const CoherenceOptions& options) {
  return coherence_scan(dark_time, phases, options, false);
}

std::vector<double> spin_echo_scan(double dark_time, const std::vector<double>& phases,
                                   const CoherenceOptions& options) {
  return coherence_scan(dark_time, phases, options, true);
}

Contrast phase_contrast(const std::vector<double>& phases, const std::vector<double>& population) {
  Contrast c;
  c.fit = dsp::fit_sinusoid(phases, population, {.frequency = 1.0 / units::two_pi});
  if (c.fit.has_flag("frequency_unidentifiable")) return c;
  const auto r = dsp::sinusoid_contrast(c.fit);
  c.value = r.value;
  c.sigma = r.sigma;
  return c;
}

double minmax_contrast(const std::vector<double>& p) {
  if (p.empty()) throw ConfigError("empty population list");
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return (*hi + *lo) > 0.0 ? (*hi - *lo) / (*hi + *lo) : 0.0;
}

// ---------------------------------------------------------------- spectra

double autler_townes_lineshape(double detuning, double center, double splitting, double width, double amplitude,
                               double offset) {
  const double x = detuning - center;
  const double hw = 0.5 * width;
  if (x == 0.0) return splitting == 0.0 ? offset + amplitude : offset;
  const double y = x - splitting * splitting / (4.0 * x);
  return offset + amplitude * hw * hw / (hw * hw + y * y);
}

dsp::FitResult fit_autler_townes(const std::vector<double>& x, const std::vector<double>& y, double splitting_guess,
                                 double width_guess) {
  if (x.size() != y.size() || x.size() < 8) throw FitError("Autler-Townes fit needs at least 8 points");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  // Centre guess from the signal-weighted mean detuning.
  double sw = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += y[i] - *lo;
    sx += (y[i] - *lo) * x[i];
  }
  // Fit in units of `scale` so finite-difference steps see a centre near zero.
  const double scale = std::max({std::abs(splitting_guess), std::abs(width_guess), 1e-300});
  std::vector<double> xs;
  for (double v : x) xs.push_back(v / scale);
  Eigen::VectorXd p0(5);
  p0 << (sw > 0.0 ? sx / sw : 0.0) / scale, splitting_guess / scale, width_guess / scale, *hi - *lo, *lo;
  auto fit = dsp::nlls(
      [](double d, const Eigen::VectorXd& p) { return autler_townes_lineshape(d, p[0], p[1], p[2], p[3], p[4]); }, xs,
      y, p0, {"center", "splitting", "width", "amplitude", "offset"});
  Eigen::VectorXd unit = Eigen::VectorXd::Ones(5);
  unit.head(3).setConstant(scale);
  fit.values = fit.values.cwiseProduct(unit);
  fit.sigma = fit.sigma.cwiseProduct(unit);
  fit.covariance = unit.asDiagonal() * fit.covariance * unit.asDiagonal();
  fit.values[1] = std::abs(fit.values[1]);
  fit.values[2] = std::abs(fit.values[2]);
  return fit;
}

AutlerTownesScan autler_townes_scan(const std::vector<double>& powers_mw, const std::vector<double>& probe_grid,
                                    double calibration, const AutlerTownesOptions& options) {
  if (powers_mw.empty() || probe_grid.size() < 8) throw ConfigError("Autler-Townes scan needs powers and >= 8 probe points");
  if (!(calibration > 0.0)) throw ConfigError("calibration must be > 0");
  const double gamma = options.run.atom.decay.gamma_s;
  const double probe = options.probe_rabi > 0.0 ? options.probe_rabi : gamma / 30.0;
  if (probe > gamma / 10.0 * (1.0 + 1e-12)) throw ConfigError("probe Rabi frequency must be <= Gamma_s / 10");
  AutlerTownesScan out;
  out.probe_detuning = probe_grid;
  RunOptions ro = options.run;
  ro.scheme = SchemeKind::Lambda;
  ro.model.elimination = driven::Elimination::ForceFull;
  const auto scheme = make_scheme(ro);
  for (double p : powers_mw) {
    if (!(p >= 0.0)) throw ConfigError("power must be >= 0");
    AutlerTownesColumn col;
    col.power_mw = p;
    col.dressing_rabi = units::mhz * calibration * std::sqrt(p);
    evolver::ScanSpec spec;
    spec.protocol = evolver::Protocol::FixedTime;
    spec.duration = options.duration;
    spec.initial = options.exchange_roles ? "down" : "up";
    spec.observable = options.observable;
    spec.options = ro.evolve;
    spec.workers = ro.workers;
    const double dress = col.dressing_rabi;
    const auto pts = evolver::scan(
        [&](double d) {
          const auto cfg = options.exchange_roles ? driven::RamanConfig::make(dress, probe, 0.0, -d)
                                                  : driven::RamanConfig::make(probe, dress, d, d);
          return driven::build_lambda_model(cfg, ro.atom.magnetic, scheme, ro.atom, ro.model);
        },
        probe_grid, spec);
    for (const auto& s : pts) col.signal.push_back(s.value);
    // Each dressed line has width Gamma_s / 2.
    if (col.dressing_rabi < 0.5 * gamma) {
      col.note = "splitting unresolved (dressing Rabi frequency below Gamma_s / 2)";
    } else {
      try {
        col.fit = fit_autler_townes(probe_grid, col.signal, col.dressing_rabi, gamma);
        col.splitting = col.fit->value("splitting");
        col.splitting_sigma = col.fit->error("splitting");
      } catch (const FitError& e) {
        col.note = std::string("fit failed: ") + e.what();
      }
    }
    out.columns.push_back(std::move(col));
  }
  return out;
}

atom::AtomData closed_lambda_atom(const atom::AtomData& in) {
  double f_up = 0.0, f_down = 0.0;
  for (const auto& c : in.decay.channels) {
    if (c.from != atom::Manifold::S1_3 || c.target != atom::DecayTarget::Specific || c.to_m != 0) continue;
    if (c.to == atom::Manifold::P2_3) f_up += c.fraction;
    if (c.to == atom::Manifold::P0_3) f_down += c.fraction;
  }
  if (!(f_up + f_down > 0.0)) throw ModelError("decay table has no s -> up/down channels");
  atom::AtomData out = in;
  out.decay.channels = {
      {atom::Manifold::S1_3, atom::Manifold::P2_3, atom::DecayTarget::Specific, 0, f_up / (f_up + f_down)},
      {atom::Manifold::S1_3, atom::Manifold::P0_3, atom::DecayTarget::Specific, 0, f_down / (f_up + f_down)},
  };
  return out;
}

std::vector<double> cpt_scan(double rabi_up, double rabi_down, const std::vector<double>& delta_grid,
                             const CptOptions& options) {
  if (delta_grid.empty()) throw ConfigError("CPT scan grid is empty");
  RunOptions ro = options.run;
  ro.atom = closed_lambda_atom(options.run.atom);
  ro.scheme = SchemeKind::Lambda;
  ro.model.elimination = driven::Elimination::ForceFull;
  if (options.ground_dephasing > 0.0) ro.model.dephasing.push_back({"down", options.ground_dephasing});
  const auto scheme = make_scheme(ro);
  evolver::ScanSpec spec;
  spec.protocol = evolver::Protocol::SteadyState;
  spec.observable = "s";
  spec.workers = ro.workers;
  const auto pts = evolver::scan(
      [&](double d) {
        const auto cfg = driven::RamanConfig::make(rabi_up, rabi_down, options.one_photon_detuning, d);
        return driven::build_lambda_model(cfg, ro.atom.magnetic, scheme, ro.atom, ro.model);
      },
      delta_grid, spec);
  std::vector<double> out;
  for (const auto& p : pts) out.push_back(p.value);
  return out;
}

std::vector<double> scattering_decay(const DriveField& field, const std::vector<double>& times, RunOptions options) {
  options.scheme = SchemeKind::Full;
  options.model.elimination = driven::Elimination::ForceFull;
  const auto scheme = make_scheme(options);
  const auto model = driven::build_single_drive_model(field, options.atom.magnetic, scheme, options.atom, options.model);
  const auto k = model.index("up");
  const auto traj = evolver::evolve(model, DensityMatrix::pure(model.dim(), k), times, options.evolve);
  std::vector<double> out;
  for (const auto& row : traj.populations) out.push_back(row[k]);
  return out;
}

}  // namespace fsq::sequences
