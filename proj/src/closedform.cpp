#include "fsq/closedform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsq/errors.hpp"
#include "fsq/units.hpp"

namespace fsq::closedform {

Flagged raman_rabi(double rabi_up, double rabi_down, double delta, double gamma_s) {
  Flagged out;
  if (rabi_up < 0.0 || rabi_down < 0.0) throw ModelError("Rabi frequencies must be >= 0");
  if (delta == 0.0) {
    out.value = std::numeric_limits<double>::infinity();
    out.warning = "one-photon detuning is zero; two-photon formula undefined";
    return out;
  }
  out.value = rabi_up * rabi_down / (2.0 * std::abs(delta));
  if (std::abs(delta) <= 10.0 * std::max({rabi_up, rabi_down, gamma_s})) {
    out.warning = "|Delta| <= 10 max(Omega_up, Omega_down, Gamma_s): effective two-level regime violated";
  }
  return out;
}

double differential_stark(double rabi_up, double rabi_down, double delta) {
  if (delta == 0.0) throw ModelError("differential light shift undefined at zero detuning");
  return (rabi_up * rabi_up - rabi_down * rabi_down) / (4.0 * delta);
}

double scattering_rate(double rabi, double delta, double gamma_s) {
  if (delta == 0.0) throw ModelError("scattering-rate formula undefined at zero detuning");
  return gamma_s * rabi * rabi / (4.0 * delta * delta);
}

double max_decay_time(double rabi, double delta, double gamma_s) {
  const double r = scattering_rate(rabi, delta, gamma_s);
  return r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity();
}

double decay_time_coefficient(double rabi, double gamma_s) {
  if (rabi <= 0.0 || gamma_s <= 0.0) return std::numeric_limits<double>::infinity();
  return 4.0 / (gamma_s * rabi * rabi);
}

double lz_probability(double rabi, double ramp) {
  if (!(ramp > 0.0)) throw ModelError("Landau-Zener ramp must be > 0");
  return -std::expm1(-units::pi * rabi * rabi / (2.0 * ramp));
}

double lz_rabi_for_fidelity(double fidelity, double ramp) {
  if (!(fidelity >= 0.0 && fidelity < 1.0)) throw ModelError("fidelity must lie in [0, 1)");
  if (!(ramp > 0.0)) throw ModelError("Landau-Zener ramp must be > 0");
  return std::sqrt(-2.0 * ramp * std::log1p(-fidelity) / units::pi);
}

double damped_model(double t, double rabi, double phase, double tau, double amplitude_loss, double tau_loss) {
  if (!(tau > 0.0) || !(tau_loss > 0.0)) throw ModelError("damped model needs tau, tau_loss > 0");
  return 0.5 * std::cos(rabi * t + phase) * std::exp(-t / tau) + amplitude_loss * std::expm1(-t / tau_loss) + 0.5;
}

double cycles(double rabi, double tau) {
  if (!(rabi > 0.0) || !(tau > 0.0)) throw ModelError("cycles needs Omega, tau > 0");
  return rabi * tau / units::two_pi;
}

EffectiveTwoLevel effective_two_level(const driven::RamanConfig& config, const atom::DecayTable& table) {
  EffectiveTwoLevel e;
  const double delta = config.one_photon_detuning();
  const auto r = raman_rabi(config.up_field.rabi, config.down_field.rabi, delta, table.gamma_s);
  e.rabi = r.value;
  e.warning = r.warning;
  e.differential_shift = differential_stark(config.up_field.rabi, config.down_field.rabi, delta);
  e.scattering_up = scattering_rate(config.up_field.rabi, delta, table.gamma_s);
  e.scattering_down = scattering_rate(config.down_field.rabi, delta, table.gamma_s);

  double back_into_lambda = 0.0;
  for (const auto& c : table.channels) {
    if (c.from != atom::Manifold::S1_3 || c.target != atom::DecayTarget::Specific || c.to_m != 0) continue;
    if (c.to == atom::Manifold::P2_3 || c.to == atom::Manifold::P0_3) back_into_lambda += c.fraction;
  }
  const double loss_rate = (1.0 - back_into_lambda) * 0.5 * (e.scattering_up + e.scattering_down);
  e.loss_amplitude = loss_rate > 0.0 ? 0.5 : 0.0;
  e.loss_time = loss_rate > 0.0 ? 1.0 / loss_rate : std::numeric_limits<double>::infinity();
  return e;
}

}  // namespace fsq::closedform
