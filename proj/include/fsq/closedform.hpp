#pragma once

#include <string>

#include "fsq/atom.hpp"
#include "fsq/driven.hpp"

namespace fsq::closedform {

// A value plus the warning raised when the formula is used outside its
// regime of validity. The value is always computed.
struct Flagged {
  double value = 0.0;
  std::string warning;
  bool ok() const { return warning.empty(); }
  operator double() const { return value; }
};

// Omega_up Omega_down / (2 |Delta|)
Flagged raman_rabi(double rabi_up, double rabi_down, double delta, double gamma_s = 0.0);

// (Omega_up^2 - Omega_down^2) / (4 Delta); differential shift of up relative to down.
double differential_stark(double rabi_up, double rabi_down, double delta);

// Gamma_s Omega^2 / (4 Delta^2), 1/s
double scattering_rate(double rabi, double delta, double gamma_s);
// 1 / scattering_rate, s (infinite when the rate is zero)
double max_decay_time(double rabi, double delta, double gamma_s);
// tau_max = a Delta^2 coefficient implied by the formula, s / (rad/s)^2
double decay_time_coefficient(double rabi, double gamma_s);

// 1 - exp(-pi Omega^2 / (2 ramp)), ramp in rad/s^2
double lz_probability(double rabi, double ramp);
// Rabi frequency giving transfer probability F at the given ramp.
double lz_rabi_for_fidelity(double fidelity, double ramp);

// 0.5 cos(Omega t + phi) exp(-t/tau) - A (1 - exp(-t/tau_loss)) + 0.5
double damped_model(double t, double rabi, double phase, double tau, double amplitude_loss, double tau_loss);

// Omega tau / (2 pi)
double cycles(double rabi, double tau);

struct EffectiveTwoLevel {
  double rabi = 0.0;                // rad/s
  double differential_shift = 0.0;  // rad/s
  double scattering_up = 0.0;       // 1/s
  double scattering_down = 0.0;     // 1/s
  double loss_amplitude = 0.0;      // A
  double loss_time = 0.0;           // tau_loss, s
  std::string warning;
};

// Effective Raman parameters for a far-detuned Lambda configuration. The
// loss estimate assumes an equal-weight mixture of up and down and that every
// photon scattered out of the Lambda system is lost for good.
EffectiveTwoLevel effective_two_level(const driven::RamanConfig& config, const atom::DecayTable& table);

}  // namespace fsq::closedform
