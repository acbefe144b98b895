#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsq/atom.hpp"
#include "fsq/driven.hpp"
#include "fsq/dsp.hpp"
#include "fsq/evolver.hpp"

namespace fsq::rates {

// Optical pumping between a driven pair, equal rates up and down
// (stimulated emission included), R = Gamma_u (Omega^2/4) / (Delta^2 + Gamma_u^2/4).
struct PumpedPair {
  std::size_t lower = 0;
  std::size_t upper = 0;
  double weight = 0.0;  // rate relative to the reference pair
};

struct RateModel {
  std::vector<std::string> labels;
  std::vector<atom::LevelRef> refs;
  Eigen::MatrixXd decay;  // spontaneous part of the generator, columns sum to zero
  std::vector<PumpedPair> pumps;
  std::size_t reference = 0;  // index into pumps of the field's defining pair
  double gamma_sc = 0.0;      // pump rate of the reference pair, 1/s
  Eigen::VectorXd initial;

  std::size_t dim() const { return labels.size(); }
  std::size_t index(const std::string& label) const;
  // Full generator dp/dt = G p.
  Eigen::MatrixXd generator() const;
  // Photon scattering rate out of the field's lower level.
  double scattering_rate() const;
  // Same model with every pump scaled so the reference pair pumps at gamma_sc.
  RateModel with_scattering_rate(double gamma_sc) const;
  // Largest |column sum| of the generator.
  double conservation_error() const;
};

// Rates derived from the full 13-level rotating-frame model of a single field:
// Clebsch-Gordan scaling and Zeeman detunings of the pi pairs come from the
// Hamiltonian, decay from the table. 1S0 is never pumped.
RateModel build_rate_model(const driven::DriveField& field, const atom::AtomData& atom,
                           const atom::MagneticEnvironment& env, const std::string& initial = "up");

// Populations at each time via the matrix exponential of the generator.
evolver::Trajectory evolve_rates(const RateModel& model, const std::vector<double>& times);

// N_level(t) / N_level(0)
std::vector<double> survival(const RateModel& model, const std::vector<double>& times, const std::string& level = "up");

struct ScatteringFit {
  dsp::FitResult fit;  // parameters "gamma_sc", "amplitude"
  double gamma_sc = 0.0;
  double gamma_sc_sigma = 0.0;
  double tau_max = 0.0;  // 1 / gamma_sc, s
  double tau_max_sigma = 0.0;
  bool non_decaying = false;
};

// Fits amplitude * survival(t; gamma_sc) of `model` to the data.
ScatteringFit fit_scattering_rate(const RateModel& model, const std::vector<double>& times,
                                  const std::vector<double>& survival, const std::vector<double>& sigma = {},
                                  const std::string& level = "up");
ScatteringFit fit_scattering_rate(const RateModel& model, const dsp::Trace& trace, const std::string& level = "up");

// tau_max = a Delta^2 through the origin; parameter "a" in s / (rad/s)^2.
dsp::FitResult fit_tau_scaling(const std::vector<double>& delta, const std::vector<double>& tau_max,
                               const std::vector<double>& sigma = {});
// a in us / (2 pi GHz)^2
double tau_coefficient_us_per_ghz2(double a);

}  // namespace fsq::rates
