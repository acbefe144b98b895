#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsq/atom.hpp"
#include "fsq/units.hpp"

namespace fsq::trap {

struct Uncertain {
  double value = 0.0;
  double sigma = 0.0;
};

struct PolarizabilityRow {
  double wavelength_nm = 0.0;
  double alpha_s = 0.0;  // atomic units
  double alpha_s_sigma = 0.0;
  double alpha_t = 0.0;
  double alpha_t_sigma = 0.0;
};

class PolarizabilityTable {
 public:
  // Throws ConfigError when ordering, sign or J=0 constraints are broken.
  void add(atom::Manifold state, const PolarizabilityRow& row);
  bool has(atom::Manifold state) const { return rows_.count(state) != 0; }
  const std::vector<PolarizabilityRow>& rows(atom::Manifold state) const;
  // Linear interpolation of (alpha_s, alpha_t) and their sigmas; exact at nodes.
  PolarizabilityRow at(atom::Manifold state, double wavelength_nm) const;
  std::vector<atom::Manifold> states() const;

 private:
  std::map<atom::Manifold, std::vector<PolarizabilityRow>> rows_;
};

// Header: state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma
PolarizabilityTable parse_polarizability_csv(std::istream& in, const std::string& source = "<stream>");
PolarizabilityTable load_polarizability_csv(const std::string& path);

enum class DepthUnit { RecoilEnergy, Microkelvin };

struct LatticeConfig {
  double wavelength_nm = 914.0;
  double depth = 0.0;
  DepthUnit depth_unit = DepthUnit::RecoilEnergy;
  double angle = 0.0;  // rad, relative to the quantization axis
  std::string axis = "vertical";

  void validate() const;
  double depth_hz(double mass_u = constants::mass_sr88_u) const;
  double depth_uk(double mass_u = constants::mass_sr88_u) const;
};

// (3 cos^2 beta - 1) / 2
double tensor_factor(double beta);

// alpha_s - alpha_t (3 cos^2 beta - 1) / 2 with independent-error propagation.
Uncertain polarizability(atom::Manifold state, double wavelength_nm, double beta, const PolarizabilityTable& table);

struct MagicAngle {
  std::optional<double> angle;  // rad in [0, pi/2]
  double sigma = 0.0;           // rad
  bool degenerate = false;      // every angle is magic
};

// Root of alpha_3P2(beta) = alpha_3P0 on [0, 90 deg] by bisection.
MagicAngle magic_angle(double wavelength_nm, const PolarizabilityTable& table);

struct Recoil {
  double hz = 0.0;
  double uk = 0.0;
};
Recoil recoil_energy(double wavelength_nm, double mass_u = constants::mass_sr88_u);

// Hz of trap depth per uK of depth (k_B / h * 1 uK).
double hz_per_uk();

// Differential up/down light shift per uK of depth felt by up, Hz/uK:
// (k_B/h) (alpha_3P2 - alpha_3P0) / alpha_3P2.
Uncertain shift_slope(const PolarizabilityTable& table, double wavelength_nm, double beta);

// Equipartition estimate sigma_f = slope T / 2 (order of magnitude only).
double thermal_shift_spread(double temperature_uk, double slope_hz_per_uk, double depth_uk);
// Gaussian dephasing time sqrt(2) / (2 pi sigma_f) for a spread in Hz.
double gaussian_t2star(double sigma_hz);

}  // namespace fsq::trap
