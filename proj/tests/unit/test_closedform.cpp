#include <doctest.h>

#include <cmath>

#include "fsq/closedform.hpp"
#include "fsq/errors.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::closedform;

TEST_CASE("two-photon Rabi frequency and validity warning") {
  const auto r = raman_rabi(72 * units::mhz, 72 * units::mhz, 6 * units::ghz, 1.0 / 14.6e-9);
  CHECK(units::to_hz(r.value) == doctest::Approx(432e3).epsilon(1e-12));
  CHECK(r.ok());

  const auto near = raman_rabi(72 * units::mhz, 72 * units::mhz, 500 * units::mhz);
  CHECK_FALSE(near.ok());
  CHECK(near.value == doctest::Approx(72 * 72 * units::mhz * units::mhz / (2 * 500 * units::mhz)));
  // sign of Delta does not matter
  CHECK(raman_rabi(1.0, 2.0, -4.0).value == doctest::Approx(0.25));
  CHECK_THROWS_AS(raman_rabi(-1.0, 1.0, 10.0), ModelError);
}

TEST_CASE("differential light shift vanishes for balanced beams") {
  CHECK(differential_stark(5.0, 5.0, 100.0) == 0.0);
  CHECK(differential_stark(4.0, 2.0, 3.0) == doctest::Approx(1.0));
  CHECK(differential_stark(4.0, 2.0, -3.0) == doctest::Approx(-1.0));
}

TEST_CASE("scattering rate and tau_max scale as Delta^2") {
  const double g = 1.0 / 14.6e-9;
  const double r1 = scattering_rate(36 * units::mhz, 6 * units::ghz, g);
  // Gamma_s Omega^2 / 4 Delta^2 with Omega/Delta = 0.006
  CHECK(r1 == doctest::Approx(g * 0.006 * 0.006 / 4).epsilon(1e-12));
  const double t1 = max_decay_time(36 * units::mhz, 6 * units::ghz, g);
  const double t2 = max_decay_time(36 * units::mhz, 12 * units::ghz, g);
  CHECK(t2 / t1 == doctest::Approx(4.0));
  CHECK(decay_time_coefficient(36 * units::mhz, g) * std::pow(6 * units::ghz, 2) == doctest::Approx(t1));
  CHECK(std::isinf(max_decay_time(0.0, 1.0, g)));
}

TEST_CASE("Landau-Zener probability and its inverse") {
  const double ramp = units::khz * 80.0 / 1.0;  // 80 kHz over 1 s
  const double rabi = lz_rabi_for_fidelity(0.975, ramp);
  CHECK(units::to_hz(rabi) == doctest::Approx(172.92).epsilon(1e-4));
  CHECK(lz_probability(rabi, ramp) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(lz_probability(0.0, ramp) == 0.0);
  // tiny exponent keeps full relative precision through expm1
  const double small = lz_probability(1e-6, 1.0);
  CHECK(small == doctest::Approx(units::pi * 1e-12 / 2).epsilon(1e-9));
  CHECK_THROWS_AS(lz_probability(1.0, 0.0), ModelError);
  CHECK_THROWS_AS(lz_rabi_for_fidelity(1.0, 1.0), ModelError);
}

TEST_CASE("damped model limits") {
  CHECK(damped_model(0.0, 1.0, 0.0, 1.0, 0.3, 1.0) == doctest::Approx(1.0));
  CHECK(damped_model(0.0, 1.0, units::pi, 1.0, 0.3, 1.0) == doctest::Approx(0.0));
  // long time: 0.5 - A
  CHECK(damped_model(1e3, 1.0, 0.0, 1.0, 0.3, 1.0) == doctest::Approx(0.2));
  CHECK(cycles(units::two_pi * 1e3, 0.01) == doctest::Approx(10.0));
}

TEST_CASE("effective two-level parameters for the Lambda scheme") {
  const auto table = atom::strontium_decay_table();
  const auto cfg = driven::RamanConfig::make(72 * units::mhz, 60 * units::mhz, 6 * units::ghz, 0.0);
  const auto e = effective_two_level(cfg, table);
  CHECK(e.rabi == doctest::Approx(72.0 * 60.0 / (2 * 6000) * units::mhz));
  const double su = table.gamma_s * std::pow(72.0 / 6000, 2) / 4;
  const double sd = table.gamma_s * std::pow(60.0 / 6000, 2) / 4;
  CHECK(e.scattering_up == doctest::Approx(su));
  CHECK(e.scattering_down == doctest::Approx(sd));
  CHECK(e.loss_amplitude == 0.5);
  CHECK(e.loss_time == doctest::Approx(1.0 / ((1 - 0.333) * 0.5 * (su + sd))).epsilon(1e-9));
  CHECK(e.differential_shift == doctest::Approx((72.0 * 72 - 60.0 * 60) / (4 * 6000) * units::mhz));
}
