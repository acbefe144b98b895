#pragma once

#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fsq/atom.hpp"

namespace fsq::driven {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

enum class Coupling {
  Dipole,      // electric dipole, pi polarized
  Quadrupole,  // higher multipole (the 671 nm state-preparation line)
};

struct DriveField {
  std::string id = "field";
  atom::LevelRef lower{atom::Manifold::P2_3, 0};
  atom::LevelRef upper{atom::Manifold::S1_3, 0};
  double rabi = 0.0;      // rad/s, >= 0
  double detuning = 0.0;  // rad/s, laser minus transition frequency
  double phase = 0.0;     // rad
  Coupling coupling = Coupling::Dipole;

  void validate() const;
};

// Raman pair driving up-s and down-s.
struct RamanConfig {
  DriveField up_field;
  DriveField down_field;

  static RamanConfig make(double rabi_up, double rabi_down, double one_photon_detuning,
                          double two_photon_detuning = 0.0);

  double one_photon_detuning() const { return up_field.detuning; }
  double two_photon_detuning() const { return up_field.detuning - down_field.detuning; }
  void validate() const;
};

// Rank-one jump operator |target><sum_j c_j j|. Without a target the jump
// leaves the modelled subspace and only the anticommutator term survives.
struct CollapseOp {
  std::optional<std::size_t> target;
  std::vector<std::pair<std::size_t, cplx>> sources;
  std::string label;

  bool leaves_subspace() const { return !target.has_value(); }
  double total_rate() const;
  Matrix matrix(std::size_t n) const;
};

struct RotatingFrameModel {
  std::vector<std::string> labels;
  std::vector<atom::LevelRef> refs;
  Matrix hamiltonian;
  std::vector<CollapseOp> collapse;
  // d H_ii / d(detuning) for every field, by field id; used by ramps.
  std::vector<std::pair<std::string, Eigen::VectorXd>> detuning_axes;
  bool eliminated = false;

  std::size_t dim() const { return static_cast<std::size_t>(hamiltonian.rows()); }
  std::optional<std::size_t> find(const std::string& label) const;
  std::size_t index(const std::string& label) const;
  const Eigen::VectorXd* detuning_axis(const std::string& field_id) const;
  double max_rate() const;  // largest |H| element or decay rate, 1/s
  bool has_loss() const;
};

enum class Elimination { Auto, ForceFull, ForceEffective };

struct ModelOptions {
  Elimination elimination = Elimination::Auto;
  bool scattering = true;  // keep spontaneous emission (and the jumps it induces)
  std::vector<std::pair<std::string, double>> dephasing;  // (level label, rate 1/s)
};

bool dipole_allowed(atom::LevelRef a, atom::LevelRef b);

// Generic builder: every field drives all pi pairs between its two manifolds
// that exist in `scheme`, scaled by Clebsch-Gordan ratios relative to the
// field's defining pair.
RotatingFrameModel build_model(const std::vector<DriveField>& fields, const atom::LevelScheme& scheme,
                               const atom::AtomData& atom, const atom::MagneticEnvironment& env,
                               const ModelOptions& options = {});

RotatingFrameModel build_lambda_model(const RamanConfig& config, const atom::MagneticEnvironment& env,
                                      const atom::LevelScheme& scheme, const atom::AtomData& atom,
                                      const ModelOptions& options = {});

RotatingFrameModel build_single_drive_model(const DriveField& field,
                                            const atom::MagneticEnvironment& env,
                                            const atom::LevelScheme& scheme,
                                            const atom::AtomData& atom,
                                            const ModelOptions& options = {});

// Adiabatic elimination of a strongly detuned, decaying level.
RotatingFrameModel eliminate_level(const RotatingFrameModel& model, std::size_t level,
                                   bool keep_scattering = true);

// True when the automatic rule would eliminate s for this configuration.
bool should_eliminate(const RamanConfig& config, double gamma_s);

}  // namespace fsq::driven
