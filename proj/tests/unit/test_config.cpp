#include <doctest.h>

#include <cmath>

#include "fsq/config.hpp"
#include "fsq/errors.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using config::Dimension;

namespace {

config::Schema schema() {
  config::Schema s;
  s.add("", "name", Dimension::Text);
  s.add("raman", "detuning", Dimension::Frequency);
  s.add("raman", "rabi_up", Dimension::Frequency, 0.0);
  s.add("raman", "angle", Dimension::Angle);
  s.add("raman", "power", Dimension::Power, 0.0);
  s.add("raman", "spread", Dimension::Ratio, 0.0, 1.0);
  s.add("raman", "ramp", Dimension::SweepRate);
  s.add("raman", "samples", Dimension::Count, 1.0);
  s.add("raman", "scattering", Dimension::Flag);
  s.add_list("scan", "times", Dimension::Time, 0.0);
  s.add("field*", "rabi", Dimension::Frequency);
  return s;
}

}  // namespace

TEST_CASE("quantities convert to canonical units") {
  const auto c = config::Config::parse(
      "name = fig3d\n[raman]\ndetuning = -6 GHz\nrabi_up = 36 MHz  # comment\nangle = 79 deg\n"
      "power = 10 nW\nspread = 0.4 %\nramp = 80 Hz/ms\nsamples = 12\nscattering = no\n"
      "[scan]\ntimes = 0, 0.5, 1 ms\n[field.a]\nrabi = 1 kHz\n",
      schema());
  CHECK(c.text("", "name") == "fig3d");
  CHECK(c.number("raman", "detuning") == doctest::Approx(-6e9 * 2 * M_PI));
  CHECK(c.number("raman", "rabi_up") == doctest::Approx(36e6 * 2 * M_PI));
  CHECK(c.number("raman", "angle") == doctest::Approx(79.0 * M_PI / 180.0));
  CHECK(c.number("raman", "power") == doctest::Approx(1e-5));
  CHECK(c.number("raman", "spread") == doctest::Approx(0.004));
  CHECK(c.number("raman", "ramp") == doctest::Approx(2 * M_PI * 80e3));
  CHECK(c.count("raman", "samples") == 12);
  CHECK_FALSE(c.flag_or("raman", "scattering", true));
  const auto t = c.list("scan", "times");
  REQUIRE(t.size() == 3);
  CHECK(t[1] == doctest::Approx(0.5e-3));
  CHECK(c.number("field.a", "rabi") == doctest::Approx(2 * M_PI * 1e3));
}

TEST_CASE("missing unit is rejected with a line number") {
  try {
    config::Config::parse("[raman]\n\ndetuning = -6\n", schema(), "x.scenario");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x.scenario:3:") == 0);
    CHECK(std::string(e.what()).find("missing unit") != std::string::npos);
  }
}

TEST_CASE("wrong dimension, unknown key, range and duplicates are rejected") {
  CHECK_THROWS_AS(config::Config::parse("[raman]\ndetuning = 5 ms\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\nbogus = 5 ms\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[nowhere]\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\nrabi_up = -1 MHz\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\nspread = 150 %\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\nsamples = 1.5\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\ndetuning = 1 MHz\ndetuning = 2 MHz\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\ndetuning = 1, 2 MHz\n", schema()), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("[raman]\nscattering = maybe\n", schema()), ConfigError);
}

TEST_CASE("missing required key names the key") {
  const auto c = config::Config::parse("", schema(), "empty");
  CHECK_THROWS_WITH_AS(c.number("raman", "detuning"), doctest::Contains("raman.detuning"), ConfigError);
  CHECK(c.number_or("raman", "detuning", 3.0) == 3.0);
}

TEST_CASE("parse_quantity") {
  CHECK(config::parse_quantity("24.3 MHz/sqrt(mW)", Dimension::RabiPerRootPower) ==
        doctest::Approx(2 * M_PI * 24.3e6));
  CHECK(config::parse_quantity("21.4 us", Dimension::Time) == doctest::Approx(21.4e-6));
  CHECK_THROWS_AS(config::parse_quantity("3 furlongs", Dimension::Length), ConfigError);
}

TEST_CASE("canonical listing is order independent") {
  const auto a = config::Config::parse("[raman]\ndetuning = -6 GHz\nrabi_up = 36 MHz\n", schema());
  const auto b = config::Config::parse("[raman]\nrabi_up = 36000 kHz\ndetuning = -6000 MHz\n", schema());
  CHECK(a.canonical().find("raman.detuning") != std::string::npos);
  CHECK(a.canonical().substr(0, 20) == b.canonical().substr(0, 20));
}
