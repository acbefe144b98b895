#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fsq/atom.hpp"
#include "fsq/driven.hpp"
#include "fsq/dsp.hpp"
#include "fsq/evolver.hpp"
#include "fsq/rng.hpp"

namespace fsq::sequences {

// Drive with the given fields (replacing fields of the same id); empty keeps
// the current set.
struct ConstantDrive {
  std::vector<driven::DriveField> fields;
  double duration = 0.0;
};

// Linear detuning sweep of one field, absolute detunings in rad/s.
struct FrequencyRamp {
  std::string field;
  double start = 0.0;
  double end = 0.0;
  double duration = 0.0;
};

// Current fields at zero amplitude; the rotating frame is kept.
struct Dark {
  double duration = 0.0;
};

// Adds to the phase of every later drive of `field`. Takes no time.
struct PhaseJump {
  std::string field;
  double phase = 0.0;  // rad
};

using Segment = std::variant<ConstantDrive, FrequencyRamp, Dark, PhaseJump>;

double segment_duration(const Segment& s);
std::string describe(const Segment& s);

struct PulseSequence {
  std::string initial = "up";
  std::vector<driven::DriveField> fields;  // laser set; defines the frame
  std::vector<Segment> segments;
  std::vector<std::string> readout;  // empty = every level

  double duration() const;
};

enum class SchemeKind { Lambda, Transfer, Full };

struct RunOptions {
  atom::AtomData atom = atom::strontium88();
  SchemeKind scheme = SchemeKind::Lambda;
  driven::ModelOptions model;
  evolver::EvolveOptions evolve;
  std::size_t samples_per_segment = 1;  // recorded points per timed segment (end point included)
  std::size_t workers = 0;
};

// Ornstein-Uhlenbeck two-photon detuning noise, piecewise constant per step.
struct OUNoise {
  double sigma = 0.0;             // stationary rms, rad/s
  double correlation_time = 0.0;  // s
  double step = 0.0;              // s
};

// Exact discretisation of an OU process on t_k = k step, stationary start.
class NoisePath {
 public:
  NoisePath() = default;
  NoisePath(const OUNoise& noise, double duration, const CounterRng& rng);
  double at(double t) const;
  double step() const { return step_; }
  bool empty() const { return values_.empty(); }
  const std::vector<double>& values() const { return values_; }

 private:
  double step_ = 0.0;
  std::vector<double> values_;
};

// Per-run modifications: Rabi scaling (each field by sqrt(scale), so the
// two-photon Rabi frequency scales by `rabi_scale`), a static two-photon
// detuning offset and an optional dynamic noise path.
struct Perturbation {
  double rabi_scale = 1.0;
  double detuning_offset = 0.0;  // rad/s
  const NoisePath* noise = nullptr;
};

struct RunResult {
  evolver::Trajectory trajectory;
  evolver::DensityMatrix final_state;
  std::vector<std::string> labels;  // model basis
};

void validate(const PulseSequence& seq, const RunOptions& options);
atom::LevelScheme make_scheme(const RunOptions& options);
// Rotating-frame model for a field set under the run options.
driven::RotatingFrameModel segment_model(const std::vector<driven::DriveField>& fields, const RunOptions& options,
                                         bool eliminate);
// Whether a sequence is simulated in the adiabatically eliminated basis.
bool uses_elimination(const PulseSequence& seq, const RunOptions& options);

RunResult run(const PulseSequence& seq, const RunOptions& options = {}, const Perturbation& perturbation = {},
              const std::optional<evolver::DensityMatrix>& initial = std::nullopt);

struct PulseTimes {
  double rabi = 0.0;  // rad/s
  double pi = 0.0;    // s
  double pi2 = 0.0;   // s
};
// From the two-photon Rabi frequency of a Raman pair (or the bare Rabi
// frequency of a single field); `rabi_override` replaces it.
PulseTimes pulse_times(const std::vector<driven::DriveField>& fields, std::optional<double> rabi_override = {});

std::vector<driven::DriveField> raman_fields(const driven::RamanConfig& config);

struct LandauZener {
  double fidelity = 0.0;
  double analytic = 0.0;
  std::string warning;
};
// Symmetric sweep of `sweep_range_hz` (full width) across the g-up resonance.
LandauZener landau_zener(double rabi, double sweep_range_hz, double duration, RunOptions options = {});

struct EnsembleSpec {
  double rabi_spread = 0.0;      // sigma_Omega / Omega
  double detuning_spread = 0.0;  // sigma_delta, rad/s
  std::size_t samples = 1;
  std::uint64_t seed = 1;
  // Gauss-Hermite quadrature with `samples` nodes per spread dimension
  // instead of Monte Carlo draws.
  bool quadrature = false;
};

struct EnsembleDraw {
  double weight = 1.0;
  double rabi_scale = 1.0;
  double detuning_offset = 0.0;
  CounterRng rng{0};
};

std::vector<EnsembleDraw> ensemble_draws(const EnsembleSpec& spec);
// Weighted mean of fn over the draws, evaluated in parallel, summed in index order.
std::vector<double> ensemble_average(const EnsembleSpec& spec,
                                     const std::function<std::vector<double>(const EnsembleDraw&)>& fn,
                                     std::size_t workers = 0);
// Nodes and weights for a standard normal variable.
void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

struct CoherenceOptions {
  RunOptions run;
  driven::RamanConfig raman;
  std::optional<double> rabi_override;
  std::string readout = "up";
  std::string initial = "down";
  EnsembleSpec ensemble;
  std::optional<OUNoise> noise;
};

// P_readout for each phase of the final pi/2 pulse.
std::vector<double> ramsey_phase_scan(double dark_time, const std::vector<double>& phases,
                                      const CoherenceOptions& options);
std::vector<double> spin_echo_scan(double dark_time, const std::vector<double>& phases,
                                   const CoherenceOptions& options);

struct Contrast {
  double value = 0.0;
  double sigma = 0.0;
  dsp::FitResult fit;
};
// amplitude / offset of a unit-frequency sinusoid in the phase.
Contrast phase_contrast(const std::vector<double>& phases, const std::vector<double>& population);
// (max - min) / (max + min)
double minmax_contrast(const std::vector<double>& population);

struct AutlerTownesOptions {
  RunOptions run;
  double probe_rabi = 0.0;  // 0 = Gamma_s / 30
  double duration = 1e-6;   // s, fixed-time protocol from up
  std::string observable = "s";  // excitation at the end of the probe pulse
  // Probe on down-s from down, dressing field on up.
  bool exchange_roles = false;
};

struct AutlerTownesColumn {
  double power_mw = 0.0;
  double dressing_rabi = 0.0;  // rad/s
  std::vector<double> signal;
  std::optional<double> splitting;  // rad/s
  double splitting_sigma = 0.0;
  std::optional<dsp::FitResult> fit;
  std::string note;
};

struct AutlerTownesScan {
  std::vector<double> probe_detuning;  // rad/s
  std::vector<AutlerTownesColumn> columns;
};

// Strong resonant down field at each power, weak probe on up-s scanned
// (roles swapped with exchange_roles).
AutlerTownesScan autler_townes_scan(const std::vector<double>& powers_mw, const std::vector<double>& probe_grid,
                                    double calibration_mhz_per_sqrt_mw, const AutlerTownesOptions& options = {});
// offset + A (g/2)^2 / ((g/2)^2 + (x - W^2/(4x))^2), x = detuning - center
double autler_townes_lineshape(double detuning, double center, double splitting, double width, double amplitude,
                               double offset);
dsp::FitResult fit_autler_townes(const std::vector<double>& detuning, const std::vector<double>& signal,
                                 double splitting_guess, double width_guess);

struct CptOptions {
  RunOptions run;
  double one_photon_detuning = 0.0;  // rad/s
  double ground_dephasing = 0.0;     // 1/s on down
};

// Lambda system closed onto up and down: s decays only into the two ground
// levels with the tabulated ratio, renormalised to Gamma_s.
atom::AtomData closed_lambda_atom(const atom::AtomData& atom);
// Steady-state s population per two-photon detuning.
std::vector<double> cpt_scan(double rabi_up, double rabi_down, const std::vector<double>& delta_grid,
                             const CptOptions& options = {});

// N_up(t)/N_up(0) from the 13-level master equation driven by `field`.
std::vector<double> scattering_decay(const driven::DriveField& field, const std::vector<double>& times,
                                     RunOptions options = {});

}  // namespace fsq::sequences
